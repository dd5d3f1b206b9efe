"""Runtime library and deterministic headless simulator for environment-
embedded NPC behaviors: smart objects, smart areas, and situations that
inject behavior subtrees into NPC decision trees at runtime."""

from .bt import (  # noqa: F401
    FAILURE, RUNNING, SUCCESS, Lifecycle, LockContext, Node, TickResult,
    TreeContext, Var,
)
from .errors import (  # noqa: F401
    HardError, LoadError, MalformedTree, OwnershipError, ParseError,
    PoolContractError, RecursionDetected, ScenarioInvalid, SimError,
)
from .loader import load_file, load_text  # noqa: F401
from .world import World  # noqa: F401

__version__ = "0.1.0"
