"""Turns a parsed scenario into a validated, ready-to-run world.

Every violation found in one pass is reported (with the declaration line);
nothing loads unless everything checks out. The loader also synthesizes the
plumbing trees: the per-NPC ambient day-cycle tree, the go-use-provider
composite for general requests, area move wrappers, and the combat stub.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import bt, dsl, entities, situations, world as worldmod
from .errors import LoadError, MalformedTree, ScenarioInvalid
from .nav import NavEdge
from .npc import NPC, DayWindow
from .injection import InjectionStack
from .registry import ACTIONS, ATTR_CONDITIONS, PREDICATES

BUILTIN_SCHEMAS = (
    "situation-ctl", "situation-status", "quest-steps", "daycycle-ctl",
    "door-arrivals", "bench-ctl", "bench-seat", "fire-ctl",
    "pub-orders", "pub-prepared", "pub-delivered", "pub-guest",
    "innkeeper-tasks", "waitress-tasks", "drink-delivery",
)

LINK_KINDS = ("entity", "npc", "any") + entities.SE_KINDS

TEMPLATE_KEYWORD_TO_KIND = {
    "s-object": "s-object",
    "s-area": "s-area",
    "nav-object": "nav-object",
    "quest-object": "quest-object",
}

HANDLER_KEYWORDS = {
    "on-adopt": "on-adopt", "on-drop": "on-drop",
    "on-enter": "on-enter", "on-exit": "on-exit",
}


@dataclass
class RunConfig:
    seed: int = 0
    ticks: int = 1000
    manager_period: int = 10
    day_length: int | None = None
    budget: int = 2000
    sobject_period: int = 4
    area_period: int = 1


@dataclass
class _Builder:
    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    tree_defs: dict = field(default_factory=dict)     # name -> (SNode, line)
    templates: dict = field(default_factory=dict)
    situation_templates: list = field(default_factory=list)
    schemas: dict = field(default_factory=dict)       # name -> (fields, line)

    def err(self, code: str, message: str, line: int) -> None:
        self.errors.append(LoadError(code, message, line))


# -- node building ------------------------------------------------------------------


def _as_target(value):
    if value == "this-sa":
        return bt.Var("this-sa")
    return value


def build_node(snode: dsl.SNode, b: _Builder):
    """SNode -> bt.Node; collects LoadErrors instead of raising."""
    head = snode.head
    line = snode.line
    kids = snode.children()
    atoms = snode.atoms()
    cleanup = None
    if "cleanup" in snode.kw:
        cl = snode.kw["cleanup"]
        if not isinstance(cl, dsl.SNode):
            b.err("BadTree", "cleanup= expects an expression", line)
            return None
        cleanup = build_node(cl, b)

    def children_nodes():
        out = []
        for kid in kids:
            node = build_node(kid, b)
            if node is not None:
                out.append(node)
        return out

    try:
        if head in ("seq", "sel"):
            if atoms:
                b.err("BadTree", f"({head} ...) takes only child expressions", line)
                return None
            cls = bt.Sequence if head == "seq" else bt.Selector
            return cls(children_nodes(), cleanup=cleanup)
        if head == "par":
            if not atoms or atoms[0] not in ("any", "all"):
                b.err("BadTree", "(par any|all ...) policy missing", line)
                return None
            return bt.Parallel(atoms[0], children_nodes(), cleanup=cleanup)
        if head == "cond":
            if not atoms or not isinstance(atoms[0], str):
                b.err("BadTree", "(cond <predicate> ...) name missing", line)
                return None
            if atoms[0] not in PREDICATES:
                b.err("UnknownPredicate", f"unknown predicate {atoms[0]}", line)
                return None
            return bt.Condition(atoms[0], tuple(atoms[1:]), cleanup=cleanup)
        if head == "act":
            if not atoms or not isinstance(atoms[0], str):
                b.err("BadTree", "(act <action> ...) name missing", line)
                return None
            if atoms[0] not in ACTIONS:
                b.err("UnknownAction", f"unknown action {atoms[0]}", line)
                return None
            params = {k: v for k, v in snode.kw.items()
                      if k not in ("dur", "handoff", "cleanup")}
            return bt.Action(atoms[0], params=params,
                             duration=snode.kw.get("dur"),
                             handoff=snode.kw.get("handoff", 1),
                             cleanup=cleanup)
        if head == "request-area":
            name = atoms[0] if atoms else None
            return bt.RequestBehavior(behavior=name, cleanup=cleanup)
        if head == "request-from":
            if not atoms:
                b.err("BadTree", "(request-from <target> [name])", line)
                return None
            name = atoms[1] if len(atoms) > 1 else None
            return bt.RequestBehavior(target=_as_target(atoms[0]), behavior=name,
                                      cleanup=cleanup)
        if head == "request-general":
            if not atoms:
                b.err("BadTree", "(request-general <name>)", line)
                return None
            return bt.RequestBehavior(behavior=atoms[0], general=True,
                                      cleanup=cleanup)
        if head == "request-private":
            return bt.RequestBehavior(private=True, cleanup=cleanup)
        if head == "request-wrapper":
            return bt.RequestBehavior(wrapper=True, cleanup=cleanup)
        if head == "send":
            if len(atoms) < 2:
                b.err("BadTree", "(send <target> <schema> key=val...)", line)
                return None
            schema = atoms[1]
            if schema not in b.schemas:
                b.err("UnknownSchema", f"unknown schema {schema}", line)
                return None
            return bt.SendMessage(_as_target(atoms[0]), schema,
                                  payload=dict(snode.kw),
                                  cleanup=cleanup)
        if head == "wait-msg":
            if not atoms:
                b.err("BadTree", "(wait-msg <schema> [timeout=N])", line)
                return None
            if atoms[0] not in b.schemas:
                b.err("UnknownSchema", f"unknown schema {atoms[0]}", line)
                return None
            return bt.WaitMessage(atoms[0], timeout=snode.kw.get("timeout"),
                                  cleanup=cleanup)
        if head == "lock":
            if not atoms:
                b.err("BadTree", "(lock <name>)", line)
                return None
            return bt.AcquireLock(atoms[0], cleanup=cleanup)
        if head == "moveto":
            if len(atoms) == 2 and all(isinstance(a, int) for a in atoms):
                return bt.MoveTo((atoms[0], atoms[1]), cleanup=cleanup)
            if len(atoms) == 1:
                return bt.MoveTo(_as_target(atoms[0]), cleanup=cleanup)
            b.err("BadTree", "(moveto <target>) or (moveto <x> <y>)", line)
            return None
        if head == "move-wrapped":
            if len(atoms) == 2 and all(isinstance(a, int) for a in atoms):
                target = (atoms[0], atoms[1])
            elif len(atoms) == 1:
                target = _as_target(atoms[0])
            else:
                b.err("BadTree", "(move-wrapped <target>)", line)
                return None
            return bt.Bind("move-target", target, [
                bt.Selector([
                    bt.RequestBehavior(wrapper=True),
                    bt.MoveTo(bt.Var("move-target")),
                ])], cleanup=cleanup)
        if head == "subscribe":
            return bt.SubscribeSituations(children_nodes(), cleanup=cleanup)
        if head == "repeat":
            return bt.Repeat(children_nodes(), cleanup=cleanup)
        if head == "repeat-until-success":
            return bt.RepeatUntilSuccess(children_nodes(), cleanup=cleanup)
        if head == "guard":
            if not atoms or atoms[0] not in PREDICATES:
                b.err("UnknownPredicate",
                      f"(guard <predicate> ...): unknown predicate", line)
                return None
            return bt.Guard(atoms[0], tuple(atoms[1:]), children_nodes(),
                            cleanup=cleanup)
        if head == "bind":
            if len(atoms) < 2:
                b.err("BadTree", "(bind <var> <value> <child>)", line)
                return None
            return bt.Bind(atoms[0], atoms[1], children_nodes(), cleanup=cleanup)
        if head == "set-enabled":
            if len(atoms) != 2:
                b.err("BadTree", "(set-enabled <behavior> true|false)", line)
                return None
            return bt.SetEnabled(atoms[0], atoms[1], cleanup=cleanup)
        if head == "set-max-holders":
            if len(atoms) != 2:
                b.err("BadTree", "(set-max-holders <behavior> <n>)", line)
                return None
            return bt.SetMaxHolders(atoms[0], atoms[1], cleanup=cleanup)
        if head == "succeed":
            return bt.Succeed(cleanup=cleanup)
        if head == "fail":
            return bt.Fail(cleanup=cleanup)
    except MalformedTree as exc:
        b.err("MalformedTree", str(exc), line)
        return None
    b.err("BadTree", f"unknown form ({head} ...)", line)
    return None


# -- builtin trees ----------------------------------------------------------------------


def _builtin_go_use_provider():
    return bt.Sequence([
        bt.MoveTo(bt.Var("general-target")),
        bt.RequestBehavior(target=bt.Var("general-target"),
                           behavior=bt.Var("general-behavior")),
    ])


def _builtin_idle():
    return bt.Sequence([
        bt.Action("pick-wander-target", duration=0),
        bt.MoveTo(bt.Var("wander-target")),
        bt.Action("wander-pause"),
    ])


def _builtin_combat_stub():
    return bt.Sequence([bt.Action("combat-drill", duration=bt.Var("combat-duration"))])


BUILTIN_TREES = {
    "__go-use-provider": _builtin_go_use_provider,
    "__idle": _builtin_idle,
    "__combat-stub": _builtin_combat_stub,
}


def make_ambient_tree(npc_decl_windows: list):
    """Day-cycle driver: ambient root with the quest-override branch first,
    one guarded branch per window, and an idle-wander fallback. Explicit
    windows walk to the target before requesting (specific work places);
    general/area windows subscribe to the situation system."""
    branches = [
        bt.Guard("has-var", ("daycycle-ctl-override",), [
            bt.RequestBehavior(target=bt.Var("daycycle-ctl-override"),
                               behavior=bt.Var("daycycle-ctl-behavior"))])]
    for window in npc_decl_windows:
        if window.target == "general":
            body = bt.SubscribeSituations(
                [bt.RequestBehavior(behavior=window.behavior, general=True)])
        elif window.target == "area":
            body = bt.SubscribeSituations(
                [bt.RequestBehavior(behavior=window.behavior)])
        else:
            body = bt.Sequence([
                bt.MoveTo(window.target),
                bt.RequestBehavior(target=window.target,
                                   behavior=window.behavior)])
        branches.append(
            bt.Guard("time-in-window", (window.start, window.end), [body]))
    branches.append(bt.SubscribeSituations([_builtin_idle()]))
    return bt.Selector(branches)


# -- section interpreters --------------------------------------------------------------------


def _words(stmt, b, *pattern, code="BadDecl"):
    """Validate a statement's word shape: pattern items are type predicates."""
    if len(stmt.words) != len(pattern):
        b.err(code, f"expected {len(pattern)} words, got {stmt.words!r}", stmt.line)
        return False
    for word, want in zip(stmt.words, pattern):
        if want is str and not isinstance(word, str):
            b.err(code, f"expected a name, got {word!r}", stmt.line)
            return False
        if want is int and not isinstance(word, int):
            b.err(code, f"expected a number, got {word!r}", stmt.line)
            return False
    return True


def _load_schemas(scenario, b: _Builder):
    for name in BUILTIN_SCHEMAS:
        b.schemas[name] = ((), 0)
    for stmt in scenario.schemas:
        if not stmt.words or stmt.words[0] != "schema" or len(stmt.words) < 2:
            b.err("BadDecl", "expected: schema <name> [field...]", stmt.line)
            continue
        name = stmt.words[1]
        fields = tuple(stmt.words[2:])
        b.schemas[name] = (fields, stmt.line)


def _load_trees(scenario, b: _Builder):
    for name, expr, line in scenario.trees:
        if name in b.tree_defs or name in BUILTIN_TREES:
            b.err("DuplicateTree", f"tree {name} already defined", line)
            continue
        b.tree_defs[name] = (expr, line)


def _behavior_from_block(stmt, b: _Builder) -> entities.BehaviorSpec | None:
    if len(stmt.words) != 2:
        b.err("BadDecl", "expected: behavior <name>:", stmt.line)
        return None
    spec = entities.BehaviorSpec(name=stmt.words[1], tree="", line=stmt.line)
    for sub in stmt.block:
        key = sub.words[0] if sub.words else None
        if key == "tree" and _words(sub, b, str, str):
            spec.tree = sub.words[1]
        elif key == "enabled" and len(sub.words) == 2:
            spec.enabled = bool(sub.words[1])
        elif key == "max-holders" and _words(sub, b, str, int):
            spec.max_holders = sub.words[1]
        elif key == "serves" and _words(sub, b, str, str):
            spec.serves = sub.words[1]
        elif key == "slots" and _words(sub, b, str, str):
            spec.slots = sub.words[1]
        elif key == "inbox":
            if len(sub.words) not in (2, 3):
                b.err("BadDecl", "expected: inbox <schema> [capacity]", sub.line)
                continue
            capacity = sub.words[2] if len(sub.words) == 3 else None
            if sub.words[1] not in b.schemas:
                b.err("UnknownSchema", f"unknown schema {sub.words[1]}", sub.line)
                continue
            spec.inboxes.append((sub.words[1], capacity))
        elif key == "general" and len(sub.words) == 1:
            spec.general = True
        elif key == "private" and len(sub.words) == 1:
            spec.private = True
        elif key == "local" and len(sub.words) == 1:
            spec.local = True
        elif key == "dual-level" and len(sub.words) == 1:
            spec.dual_level = True
        else:
            b.err("BadDecl", f"unknown behavior property {sub.words!r}", sub.line)
    if not spec.tree:
        b.err("BadDecl", f"behavior {spec.name} needs a tree", stmt.line)
        return None
    return spec


def _load_templates(scenario, b: _Builder):
    for stmt in scenario.templates:
        key = stmt.words[0] if stmt.words else None
        if key in TEMPLATE_KEYWORD_TO_KIND:
            if len(stmt.words) != 2:
                b.err("BadDecl", f"expected: {key} <name>:", stmt.line)
                continue
            name = stmt.words[1]
            if name in b.templates:
                b.err("DuplicateTemplate", f"template {name} already defined",
                      stmt.line)
                continue
            template = entities.SETemplate(
                name=name, kind=TEMPLATE_KEYWORD_TO_KIND[key], line=stmt.line,
                brain_period=0)
            _fill_template(template, stmt.block, b)
            b.templates[name] = template
        elif key == "situation":
            _load_situation(stmt, b)
        else:
            b.err("BadDecl", f"unknown template declaration {stmt.words!r}",
                  stmt.line)


def _fill_template(template: entities.SETemplate, block, b: _Builder):
    for sub in block:
        key = sub.words[0] if sub.words else None
        if key == "behavior":
            spec = _behavior_from_block(sub, b)
            if spec is not None:
                if spec.name in template.behaviors:
                    b.err("DuplicateBehavior",
                          f"behavior {spec.name} already defined on "
                          f"{template.name}", sub.line)
                else:
                    template.behaviors[spec.name] = spec
        elif key == "brain":
            if len(sub.words) == 2:
                template.brain_tree = sub.words[1]
            elif len(sub.words) == 4 and sub.words[2] == "period":
                template.brain_tree = sub.words[1]
                template.brain_period = sub.words[3]
            else:
                b.err("BadDecl", "expected: brain <tree> [period <n>]", sub.line)
        elif key in HANDLER_KEYWORDS:
            if not _words(sub, b, str, str):
                continue
            kind = HANDLER_KEYWORDS[key]
            if kind not in template.allowed_events():
                b.err("BadHandler",
                      f"{template.kind} templates cannot handle {kind}", sub.line)
                continue
            template.handlers[kind] = sub.words[1]
        elif key == "link":
            if len(sub.words) != 4 or not isinstance(sub.words[3], tuple):
                b.err("BadDecl",
                      "expected: link <label> <kind> <lo>..<hi|n>", sub.line)
                continue
            label, kind, (lo, hi) = sub.words[1], sub.words[2], sub.words[3]
            if kind not in LINK_KINDS:
                b.err("BadDecl", f"unknown link kind {kind}", sub.line)
                continue
            template.required_links.append((label, lo, hi, kind))
        elif key == "inbox":
            if len(sub.words) not in (2, 3):
                b.err("BadDecl", "expected: inbox <schema> [capacity]", sub.line)
                continue
            if sub.words[1] not in b.schemas:
                b.err("UnknownSchema", f"unknown schema {sub.words[1]}", sub.line)
                continue
            capacity = sub.words[2] if len(sub.words) == 3 else None
            template.inboxes.append((sub.words[1], capacity, False))
        elif key == "state":
            if len(sub.words) != 3:
                b.err("BadDecl", "expected: state <key> <value>", sub.line)
                continue
            template.initial_state[sub.words[1]] = sub.words[2]
        elif key == "resolution-root" and len(sub.words) == 1:
            template.resolution_root = True
        elif key == "move-wrapper" and _words(sub, b, str, str):
            template.move_wrapper = sub.words[1]
        elif key == "update-period" and _words(sub, b, str, int):
            template.brain_period = sub.words[1]
        else:
            b.err("BadDecl", f"unknown template property {sub.words!r}", sub.line)
    if template.kind == "nav-object":
        if "traverse" not in template.behaviors:
            b.err("BadTemplate",
                  f"nav-object {template.name} must define behavior 'traverse'",
                  template.line)
        else:
            template.traversal = "traverse"
    if template.kind == "quest-object" and template.brain_tree is None:
        b.err("BadTemplate",
              f"quest-object {template.name} must have a brain", template.line)
    if template.move_wrapper is not None:
        template.behaviors["__move"] = entities.BehaviorSpec(
            name="__move", tree=template.move_wrapper, line=template.line)


def _load_situation(stmt, b: _Builder):
    if len(stmt.words) != 2:
        b.err("BadDecl", "expected: situation <name>:", stmt.line)
        return
    template = situations.SituationTemplate(name=stmt.words[1], line=stmt.line)
    for sub in stmt.block:
        key = sub.words[0] if sub.words else None
        if key == "cooldown" and _words(sub, b, str, int):
            template.cooldown = sub.words[1]
        elif key == "weight" and _words(sub, b, str, int):
            template.spawn_weight = sub.words[1]
        elif key == "area" and _words(sub, b, str, str):
            template.area_binding = sub.words[1]
        elif key == "solo-allowed" and len(sub.words) == 1:
            template.solo_allowed = True
        elif key == "role":
            if len(sub.words) != 2:
                b.err("BadDecl", "expected: role <name>:", sub.line)
                continue
            role = situations.RoleSpec(name=sub.words[1], tree="")
            for prop in sub.block:
                pkey = prop.words[0] if prop.words else None
                if pkey == "tree" and _words(prop, b, str, str):
                    role.tree = prop.words[1]
                elif pkey == "cond" and len(prop.words) >= 2:
                    pred = prop.words[1]
                    if pred not in ATTR_CONDITIONS:
                        b.err("BadCondition",
                              f"situation conditions must be one of "
                              f"{ATTR_CONDITIONS}, got {pred}", prop.line)
                        continue
                    role.condition = (pred, tuple(prop.words[2:]))
                else:
                    b.err("BadDecl", f"unknown role property {prop.words!r}",
                          prop.line)
            if not role.tree:
                b.err("BadDecl", f"role {role.name} needs a tree", sub.line)
                continue
            template.roles.append(role)
        else:
            b.err("BadDecl", f"unknown situation property {sub.words!r}", sub.line)
    if len(template.roles) < 2 and not template.solo_allowed:
        b.err("BadSituation",
              f"situation {template.name} needs >=2 roles or solo-allowed",
              stmt.line)
    b.situation_templates.append(template)


# -- the load entry point -------------------------------------------------------------------


def validate_and_load(scenario: dsl.ScenarioDef, seed=None, sink=None):
    """ScenarioDef -> (World, RunConfig). Raises ScenarioInvalid listing every
    violation found."""
    b = _Builder()
    _load_schemas(scenario, b)
    _load_trees(scenario, b)
    _load_templates(scenario, b)
    run = _load_run(scenario, b)
    if seed is not None:
        run.seed = seed

    grid_stmt = next((s for s in scenario.world if s.words[:1] == ["grid"]), None)
    if grid_stmt is None or not _words(grid_stmt, b, str, int, int, code="BadWorld"):
        b.err("BadWorld", "world section needs: grid <w> <h>",
              scenario.world[0].line if scenario.world else 0)
        raise ScenarioInvalid(b.errors)
    width, height = grid_stmt.words[1], grid_stmt.words[2]

    w = worldmod.World(width, height, seed=run.seed, sink=sink,
                       day_length=run.day_length)
    w.schedule.base_budget = run.budget
    w.schedule.sobject_period = run.sobject_period
    w.schedule.area_period = run.area_period
    w.manager_period = run.manager_period

    for name, (fields, _line) in b.schemas.items():
        w.board.define_schema(name, fields)

    # trees: build each once eagerly to surface structural errors at the decl
    max_tree_size = 0
    for name, (expr, line) in sorted(b.tree_defs.items()):
        probe = build_node(expr, b)
        if probe is None:
            continue
        try:
            bt.validate_cleanup_trees(probe)
        except MalformedTree as exc:
            b.err("BadCleanup", str(exc), line)
            continue
        max_tree_size = max(max_tree_size, sum(1 for _ in probe.walk()))
        w.register_tree(name, _TreeBuilder(expr, b))
    for name, builder in BUILTIN_TREES.items():
        w.register_tree(name, builder)

    _load_world_section(scenario, w, b)
    _load_npcs(scenario, w, b)
    _bind_instances(w, b)
    _check_tree_references(w, b)

    if run.budget < max_tree_size:
        b.err("BudgetTooSmall",
              f"node budget {run.budget} is below the largest tree "
              f"({max_tree_size} nodes)", 0)

    if b.situation_templates:
        w.manager = situations.SituationManager(
            b.situation_templates, period=run.manager_period)
        for template in b.situation_templates:
            if template.area_binding is not None and \
                    template.area_binding not in b.templates:
                b.err("UnknownTemplate",
                      f"situation {template.name} binds unknown area template "
                      f"{template.area_binding}", template.line)
            for role in template.roles:
                if role.tree not in b.tree_defs and role.tree not in BUILTIN_TREES:
                    b.err("UnknownTree",
                          f"role {role.name} of {template.name} uses unknown "
                          f"tree {role.tree}", template.line)

    if b.errors:
        raise ScenarioInvalid(sorted(b.errors, key=lambda e: e.line))

    from .areas import lint_name_shadowing
    b.warnings.extend(lint_name_shadowing(w))
    w.load_warnings = list(b.warnings)
    w.start()
    return w, run


class _TreeBuilder:
    """Rebuilds a tree instance from its declaration on demand (pooling)."""

    def __init__(self, expr: dsl.SNode, b: _Builder):
        self.expr = expr
        self._b = b

    def __call__(self):
        node = build_node(self.expr, self._b)
        if node is None:  # declaration already reported; should not happen post-load
            raise MalformedTree("tree failed to build")
        return node


def _load_run(scenario, b: _Builder) -> RunConfig:
    run = RunConfig()
    for stmt in scenario.run:
        key = stmt.words[0] if stmt.words else None
        if key == "seed" and _words(stmt, b, str, int):
            run.seed = stmt.words[1]
        elif key == "ticks" and _words(stmt, b, str, int):
            run.ticks = stmt.words[1]
        elif key == "manager-period" and _words(stmt, b, str, int):
            run.manager_period = max(1, stmt.words[1])
        elif key == "day-length" and _words(stmt, b, str, int):
            run.day_length = stmt.words[1] or None
        elif key == "budget" and _words(stmt, b, str, int):
            run.budget = stmt.words[1]
        elif key == "sobject-period" and _words(stmt, b, str, int):
            run.sobject_period = max(1, stmt.words[1])
        elif key == "area-period" and _words(stmt, b, str, int):
            run.area_period = max(1, stmt.words[1])
        else:
            b.err("BadDecl", f"unknown run setting {stmt.words!r}", stmt.line)
    return run


def _state_overrides(w, b, instance_id, stmt):
    """Optional block on object/nav/area declarations: `state <key> <value>`."""
    overrides = {}
    for sub in stmt.block:
        if sub.words[:1] == ["state"] and len(sub.words) == 3:
            overrides[sub.words[1]] = sub.words[2]
        else:
            b.err("BadDecl", f"unknown instance property {sub.words!r}", sub.line)
    if overrides:
        w._pending_state = getattr(w, "_pending_state", {})
        w._pending_state[instance_id] = overrides


def _load_world_section(scenario, w, b: _Builder):
    links: list = []
    for stmt in scenario.world:
        key = stmt.words[0] if stmt.words else None
        if key == "grid":
            continue
        if key == "wall":
            if len(stmt.words) == 3 and _words(stmt, b, str, int, int):
                cells = [(stmt.words[1], stmt.words[2])]
            elif len(stmt.words) == 5 and _words(stmt, b, str, int, int, int, int):
                x, y, ww, hh = stmt.words[1:]
                cells = [(x + dx, y + dy) for dx in range(ww) for dy in range(hh)]
            else:
                continue
            w.grid.blocked.update(cells)
        elif key == "entity":
            if _words(stmt, b, str, str, str, int, int):
                _add_entity(w, b, stmt.words[1], stmt.words[2],
                            (stmt.words[3], stmt.words[4]), stmt.line)
        elif key == "object":
            if _words(stmt, b, str, str, str, int, int):
                _add_instance(w, b, stmt.words[1], stmt.words[2],
                              (stmt.words[3], stmt.words[4]), stmt.line)
                _state_overrides(w, b, stmt.words[1], stmt)
        elif key == "anchor":
            if _words(stmt, b, str, str, str):
                _add_instance(w, b, stmt.words[1], stmt.words[2], None, stmt.line)
                _state_overrides(w, b, stmt.words[1], stmt)
        elif key == "area":
            if len(stmt.words) not in (7, 10):
                b.err("BadDecl", "expected: area <id> <template> <x> <y> <w> <h> "
                      "[anchor <x> <y>]", stmt.line)
                continue
            _add_area(w, b, stmt)
        elif key == "nav":
            if len(stmt.words) < 7:
                b.err("BadDecl", "expected: nav <id> <template> <ex> <ey> "
                      "<xx> <xy> [duration <n>] [timeout <n>] [shortcut]",
                      stmt.line)
                continue
            _add_nav(w, b, stmt)
        elif key == "link":
            if _words(stmt, b, str, str, str, str):
                links.append((stmt.words[1], stmt.words[2], stmt.words[3],
                              stmt.line))
        else:
            b.err("BadDecl", f"unknown world declaration {stmt.words!r}", stmt.line)
    w._pending_links = links


def _add_entity(w, b, entity_id, kind_tag, pos, line):
    if entity_id in w.entities or entity_id in w.npcs:
        b.err("DuplicateId", f"id {entity_id} already used", line)
        return
    if pos is not None and not w.grid.in_bounds(pos):
        b.err("OutOfBounds", f"{entity_id} at {pos} is off the grid", line)
        return
    w.entities[entity_id] = worldmod.Entity(entity_id, kind_tag, pos)


def _add_instance(w, b, instance_id, template_name, pos, line):
    template = b.templates.get(template_name)
    if template is None:
        b.err("UnknownTemplate", f"unknown template {template_name}", line)
        return
    _add_entity(w, b, instance_id, template.kind, pos, line)
    if instance_id not in w.entities:
        return
    w._pending_instances = getattr(w, "_pending_instances", [])
    w._pending_instances.append((instance_id, template, line))


def _add_area(w, b, stmt):
    instance_id, template_name = stmt.words[1], stmt.words[2]
    x, y, ww, hh = stmt.words[3:7]
    template = b.templates.get(template_name)
    if template is None:
        b.err("UnknownTemplate", f"unknown template {template_name}", stmt.line)
        return
    if template.kind != "s-area":
        b.err("KindMismatch", f"template {template_name} is not an s-area",
              stmt.line)
        return
    bounds = (x, y, ww, hh)
    if x < 0 or y < 0 or x + ww > w.grid.width or y + hh > w.grid.height:
        b.err("OutOfBounds", f"area {instance_id} exceeds the grid", stmt.line)
        return
    _add_entity(w, b, instance_id, "s-area", None, stmt.line)
    if instance_id not in w.entities:
        return
    for error in w.area_tree.add(instance_id, bounds, stmt.line):
        b.errors.append(error)
    anchor = (x + ww // 2, y + hh // 2)
    if len(stmt.words) == 10 and stmt.words[7] == "anchor":
        anchor = (stmt.words[8], stmt.words[9])
    w.area_anchors[instance_id] = anchor
    w._pending_instances = getattr(w, "_pending_instances", [])
    w._pending_instances.append((instance_id, template, stmt.line))


def _add_nav(w, b, stmt):
    instance_id, template_name = stmt.words[1], stmt.words[2]
    template = b.templates.get(template_name)
    if template is None:
        b.err("UnknownTemplate", f"unknown template {template_name}", stmt.line)
        return
    if template.kind != "nav-object":
        b.err("KindMismatch", f"template {template_name} is not a nav-object",
              stmt.line)
        return
    coords = stmt.words[3:7]
    if not all(isinstance(c, int) for c in coords):
        b.err("BadDecl", "nav needs four cell coordinates", stmt.line)
        return
    entry, exit_ = (coords[0], coords[1]), (coords[2], coords[3])
    duration, timeout, shortcut = 2, None, False
    rest = stmt.words[7:]
    i = 0
    while i < len(rest):
        if rest[i] == "duration" and i + 1 < len(rest):
            duration = rest[i + 1]
            i += 2
        elif rest[i] == "timeout" and i + 1 < len(rest):
            timeout = rest[i + 1]
            i += 2
        elif rest[i] == "shortcut":
            shortcut = True
            i += 1
        else:
            b.err("BadDecl", f"unknown nav option {rest[i]!r}", stmt.line)
            return
    for cell in (entry, exit_):
        if not w.grid.passable(cell):
            b.err("BadNavCell", f"nav {instance_id} endpoint {cell} is not "
                  "passable", stmt.line)
            return
    if not shortcut and _same_component(w.grid, entry, exit_):
        b.err("EdgeComponents",
              f"nav {instance_id} joins cells already connected; mark it "
              "shortcut if intended", stmt.line)
        return
    _add_entity(w, b, instance_id, "nav-object", entry, stmt.line)
    if instance_id not in w.entities:
        return
    w.edges.append(NavEdge(instance_id, entry, exit_, duration, timeout, shortcut))
    w._pending_instances = getattr(w, "_pending_instances", [])
    w._pending_instances.append((instance_id, template, stmt.line))
    _state_overrides(w, b, instance_id, stmt)
    if timeout is not None:
        w._pending_state = getattr(w, "_pending_state", {})
        w._pending_state.setdefault(instance_id, {})["wait-timeout"] = timeout


def _same_component(grid, a, b_cell) -> bool:
    seen = {a}
    frontier = [a]
    while frontier:
        cell = frontier.pop()
        if cell == b_cell:
            return True
        for nxt in grid.neighbors(cell):
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return False


def _load_npcs(scenario, w, b: _Builder):
    for stmt in scenario.npcs:
        if stmt.words[:1] != ["npc"] or len(stmt.words) != 2:
            b.err("BadDecl", "expected: npc <id>:", stmt.line)
            continue
        npc_id = stmt.words[1]
        if npc_id in w.npcs or npc_id in w.entities:
            b.err("DuplicateId", f"id {npc_id} already used", stmt.line)
            continue
        npc = NPC(id=npc_id, position=(0, 0))
        npc.attributes = {"posture": "standing"}
        npc.stack = InjectionStack(npc_id)
        npc.ctx = bt.TreeContext(owner=npc_id)
        npc.ctx.variables["combat-duration"] = 5
        windows = []
        combat_tree = "__combat-stub"
        quest_tree = None
        for sub in stmt.block:
            key = sub.words[0] if sub.words else None
            if key == "at" and _words(sub, b, str, int, int):
                npc.position = (sub.words[1], sub.words[2])
            elif key == "attr" and len(sub.words) >= 3:
                name = sub.words[1]
                values = sub.words[2:]
                if name in ("keys", "items") or len(values) > 1:
                    npc.attributes[name] = list(values)
                else:
                    npc.attributes[name] = values[0]
            elif key == "inbox":
                rest = sub.words[1:]
                if not rest:
                    b.err("BadDecl", "expected: inbox <schema> [capacity] [bind]",
                          sub.line)
                    continue
                schema = rest[0]
                if schema not in b.schemas:
                    b.err("UnknownSchema", f"unknown schema {schema}", sub.line)
                    continue
                bind = "bind" in rest[1:]
                caps = [r for r in rest[1:] if isinstance(r, int)]
                w.board.register_inbox(npc_id, schema,
                                       caps[0] if caps else None, bind_vars=bind)
            elif key == "subbrain" and len(sub.words) == 3:
                if sub.words[1] == "combat":
                    combat_tree = sub.words[2]
                elif sub.words[1] == "quest":
                    quest_tree = sub.words[2]
                else:
                    b.err("BadDecl", f"unknown subbrain {sub.words[1]}", sub.line)
            elif key == "daycycle":
                for win in sub.block:
                    if win.words[:1] != ["window"] or len(win.words) < 4:
                        b.err("BadDecl", "expected: window <start> <end> "
                              "<target> [behavior]", win.line)
                        continue
                    start, end = win.words[1], win.words[2]
                    target = win.words[3]
                    behavior = win.words[4] if len(win.words) > 4 else None
                    if not isinstance(start, int) or not isinstance(end, int):
                        b.err("BadDecl", "window bounds must be numbers", win.line)
                        continue
                    if target == "general" and behavior is None:
                        b.err("BadDecl", "general windows need a behavior name",
                              win.line)
                        continue
                    window = DayWindow(start, end, target, behavior)
                    window.line = win.line
                    windows.append(window)
            else:
                b.err("BadDecl", f"unknown npc property {sub.words!r}", sub.line)
        if not w.grid.passable(npc.position):
            b.err("OutOfBounds", f"npc {npc_id} stands at blocked cell "
                  f"{npc.position}", stmt.line)
            continue
        # initial attributes double as read-only context values for trees
        for attr, value in npc.attributes.items():
            npc.ctx.variables[f"attr-{attr}"] = value
        npc.day_cycle = windows
        npc._tree_names = {"combat": combat_tree, "quest": quest_tree}
        w.npcs[npc_id] = npc
        w.board.register_inbox(npc_id, "situation-ctl")
    # second pass: targets may reference instances declared after the npc
    instance_ids = {iid for iid, _, _ in getattr(w, "_pending_instances", [])}
    for npc in w.npcs.values():
        for window in npc.day_cycle:
            if window.target not in ("general", "area") and \
                    window.target not in instance_ids:
                b.err("UnknownTarget",
                      f"day-cycle window of {npc.id} targets unknown instance "
                      f"{window.target}", getattr(window, "line", 0))


def _bind_instances(w, b: _Builder):
    pending = getattr(w, "_pending_instances", [])
    links: dict = {}
    entity_kinds = {eid: e.kind_tag for eid, e in w.entities.items()}
    for npc_id in w.npcs:
        entity_kinds[npc_id] = "npc"
    for source, label, target, line in getattr(w, "_pending_links", []):
        if source not in entity_kinds:
            b.err("UnknownId", f"link source {source} does not exist", line)
            continue
        if target not in entity_kinds:
            b.err("UnknownId", f"link target {target} does not exist", line)
            continue
        links.setdefault(source, {}).setdefault(label, []).append(target)

    # synthesize general-provider specs before gating init
    for instance_id, template, _line in pending:
        for label, targets in links.get(instance_id, {}).items():
            if label in template.behaviors:
                continue
            for target in targets:
                target_template = next(
                    (t for iid, t, _l in pending if iid == target), None)
                if target_template is None:
                    continue
                if any(s.serves == label for s in target_template.behaviors.values()):
                    template.behaviors[label] = entities.BehaviorSpec(
                        name=label, tree="__go-use-provider", line=template.line)
                    break

    for instance_id, template, line in pending:
        instance, errors = entities.bind_instance(
            instance_id, template, instance_id, links, entity_kinds, line)
        b.errors.extend(errors)
        w.emit(instance_id, "bind-report", template=template.name,
               links=len(instance.env), errors=len(errors))
        instance.state.update(getattr(w, "_pending_state", {}).get(instance_id, {}))
        instance.init_gating()
        if template.brain_tree is not None:
            if template.brain_tree in b.tree_defs or template.brain_tree in BUILTIN_TREES:
                instance.brain = w.pool_acquire(template.brain_tree)
            else:
                b.err("UnknownTree", f"{instance_id} brain tree "
                      f"{template.brain_tree} not defined", line)
        for kind, tree_name in template.handlers.items():
            if tree_name in b.tree_defs or tree_name in BUILTIN_TREES:
                instance.handler_nodes[kind] = w.pool_acquire(tree_name)
            else:
                b.err("UnknownTree", f"{instance_id} handler {kind} tree "
                      f"{tree_name} not defined", line)
        for schema, capacity, bind in template.inboxes:
            w.board.register_inbox(instance_id, schema, capacity)
        w.instances[instance_id] = instance

    known_trees = set(b.tree_defs) | set(BUILTIN_TREES)
    for npc in w.npcs.values():
        npc.trees = {"combat": None, "quest": None, "situation": None,
                     "ambient": None}
        for slot in ("combat", "quest"):
            name = npc._tree_names[slot]
            if name is None:
                continue
            if name not in known_trees:
                b.err("UnknownTree",
                      f"npc {npc.id} {slot} subbrain uses unknown tree {name}", 0)
                continue
            npc.trees[slot] = w.pool_acquire(name)
        ambient = make_ambient_tree(npc.day_cycle)
        ambient.assign_ids()
        npc.trees["ambient"] = ambient


def _check_tree_references(w, b: _Builder):
    known = set(b.tree_defs) | set(BUILTIN_TREES)
    for name, template in b.templates.items():
        for spec in template.behaviors.values():
            if spec.tree not in known:
                b.err("UnknownTree",
                      f"behavior {spec.name} of {name} uses unknown tree "
                      f"{spec.tree}", spec.line)


def load_text(text: str, seed=None, sink=None):
    scenario = dsl.parse(text)
    return validate_and_load(scenario, seed=seed, sink=sink)


def load_file(path, seed=None, sink=None):
    with open(path, "r", encoding="utf-8") as fh:
        return load_text(fh.read(), seed=seed, sink=sink)
