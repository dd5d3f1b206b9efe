"""Exception types shared across the runtime.

Two families: hard errors (scripting-contract violations that abort a run)
and load-time errors (reported in bulk by the scenario loader).
"""

from __future__ import annotations


class SimError(Exception):
    """Base for all runtime errors raised by the simulator."""


class HardError(SimError):
    """Contract violation that aborts the run (CLI exit code 3).

    Carries enough context to name the offender: tick and owner id.
    """

    def __init__(self, message: str, tick: int | None = None, owner: str | None = None):
        super().__init__(message)
        self.tick = tick
        self.owner = owner

    def __str__(self) -> str:
        ctx = []
        if self.tick is not None:
            ctx.append(f"tick={self.tick}")
        if self.owner is not None:
            ctx.append(f"owner={self.owner}")
        base = super().__str__()
        return f"{base} [{' '.join(ctx)}]" if ctx else base


class RecursionDetected(HardError):
    """The same (source instance, behavior) was requested while already held."""


class OwnershipError(HardError):
    """A non-owner tried to mutate or drain owner-private state."""


class PoolContractError(HardError):
    """A tree was released to the pool without having been reset to fresh."""


class MalformedTree(SimError):
    """Structural tree invariant broken at construction time."""


class ParseError(SimError):
    """Scenario text failed to parse. Reported with location and expectations."""

    def __init__(self, line: int, column: int, message: str, expected: tuple[str, ...] = ()):
        super().__init__(message)
        self.line = line
        self.column = column
        self.expected = tuple(sorted(expected))

    def __str__(self) -> str:
        msg = f"{self.line}:{self.column}: {super().__str__()}"
        if self.expected:
            msg += " (expected " + ", ".join(self.expected) + ")"
        return msg


class LoadError(SimError):
    """One validation failure found while turning a parsed scenario into a world."""

    def __init__(self, code: str, message: str, line: int = 0):
        super().__init__(message)
        self.code = code
        self.line = line

    def __str__(self) -> str:
        return f"line {self.line}: {self.code}: {super().__str__()}"


class ScenarioInvalid(SimError):
    """Aggregate of every LoadError found in one load pass (CLI exit code 2)."""

    def __init__(self, errors: list[LoadError]):
        super().__init__(f"{len(errors)} load error(s)")
        self.errors = errors
