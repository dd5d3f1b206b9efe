"""Extended behavior-tree engine.

Beyond the usual tick model, nodes carry a lifecycle and an optional cleanup
subtree. Cleanup runs exactly once per activation, when the node is *reset*:
either its enclosing composite finished, the node is re-entered after a
terminal result, or the whole subtree is halted. Resetting in `halt` mode
additionally cancels the node's in-flight world actions (interruption rolls
back); `complete` mode lets a finishing action run out in the world, which is
what makes seamless behavior handoff work.

Trees never talk to other owners directly; everything that crosses an owner
boundary goes through the runtime handle (`Runtime`), which the world wires.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .errors import MalformedTree

CLEANUP_OVERRUN_CAP = 100


class TickResult(enum.Enum):
    RUNNING = "running"
    SUCCESS = "success"
    FAILURE = "failure"


class Lifecycle(enum.Enum):
    FRESH = "fresh"
    RUNNING = "running"
    SUCCEEDED = "succeeded"
    FAILED = "failed"
    CLEANING_UP = "cleaning-up"


RUNNING = TickResult.RUNNING
SUCCESS = TickResult.SUCCESS
FAILURE = TickResult.FAILURE


@dataclass(frozen=True)
class Var:
    """A `$name` reference in node parameters, resolved against the context."""

    name: str


class UnboundVariable(KeyError):
    pass


@dataclass
class LockContext:
    """Per-instance namespace for symbolic locks.

    The same lock name resolved against two distinct contexts yields two
    independent locks; a held lock records exactly one holder.
    """

    owner: str
    locks: dict = field(default_factory=dict)

    def acquire(self, name: str, holder: str) -> bool:
        if name in self.locks:
            return False
        self.locks[name] = holder
        return True

    def release(self, name: str, holder: str) -> None:
        if self.locks.get(name) == holder:
            del self.locks[name]

    def held(self) -> dict:
        return dict(self.locks)


class TreeContext:
    """Execution context for one tree walk.

    `variables` is shared across injection frames (parameters are passed
    through shared variables); `lock_context` and `this_sa` are rebound per
    injected subtree so a fixed lock name is safe across instances and
    `$this-sa` always names the granting instance.
    """

    __slots__ = ("variables", "owner", "lock_context", "this_sa")

    def __init__(self, owner: str, variables: dict | None = None,
                 lock_context: LockContext | None = None, this_sa: str | None = None):
        self.owner = owner
        self.variables = variables if variables is not None else {}
        self.lock_context = lock_context
        self.this_sa = this_sa

    def child_frame(self, lock_context: LockContext | None, this_sa: str | None) -> "TreeContext":
        return TreeContext(self.owner, self.variables, lock_context, this_sa)

    def resolve(self, value):
        if isinstance(value, Var):
            if value.name == "this-sa":
                if self.this_sa is None:
                    raise UnboundVariable("this-sa")
                return self.this_sa
            try:
                return self.variables[value.name]
            except KeyError:
                raise UnboundVariable(value.name) from None
        if isinstance(value, list):
            return [self.resolve(v) for v in value]
        return value


@dataclass
class CleanupReport:
    cleanups_run: list = field(default_factory=list)   # (node label, TickResult)
    locks_released: list = field(default_factory=list)
    actions_cancelled: int = 0
    overruns: list = field(default_factory=list)
    behaviors_released: list = field(default_factory=list)

    def merge(self, other: "CleanupReport") -> None:
        self.cleanups_run.extend(other.cleanups_run)
        self.locks_released.extend(other.locks_released)
        self.actions_cancelled += other.actions_cancelled
        self.overruns.extend(other.overruns)
        self.behaviors_released.extend(other.behaviors_released)


class Runtime:
    """Per-update handle handed to every node tick.

    Carries the world facade, the currently updating owner, budget/stat
    counters, and the cleanup flag that switches actions to instant mode.
    `trace_on` lets hot paths skip building trace events entirely.
    """

    __slots__ = ("world", "owner", "in_cleanup", "nodes_evaluated",
                 "diagnostics", "report", "trace_on")

    def __init__(self, world, owner: str):
        self.world = world
        self.owner = owner
        self.in_cleanup = False
        self.nodes_evaluated = 0
        self.diagnostics: list[str] = []
        self.report: CleanupReport | None = None
        self.trace_on = getattr(world, "_emit_active", True)

    def count_node(self) -> None:
        self.nodes_evaluated += 1
        self.world.stats.node_evaluations += 1

    def emit(self, kind: str, **fields) -> None:
        if self.trace_on:
            self.world.emit(self.owner, kind, **fields)

    def diagnostic(self, message: str) -> None:
        self.diagnostics.append(message)
        if self.trace_on:
            self.world.emit(self.owner, "diagnostic", msg=message.replace(" ", "_"))


class Node:
    """Base node. Subclasses implement `_tick` plus the lifecycle hooks."""

    kind = "node"
    max_children: int | None = None  # None: any >=1; 0: leaf; 1: single slot

    def __init__(self, children: list["Node"] | None = None, cleanup: "Node | None" = None,
                 label: str | None = None):
        self.children: list[Node] = children or []
        self.cleanup = cleanup
        self.label = label or self.kind
        self.nid = -1
        self.lifecycle = Lifecycle.FRESH
        self._cleanup_pending = False
        self._check_shape()

    def _check_shape(self) -> None:
        n = len(self.children)
        if self.max_children == 0 and n != 0:
            raise MalformedTree(f"{self.kind} is a leaf, got {n} children")
        if self.max_children == 1 and n > 1:
            raise MalformedTree(f"{self.kind} takes one child, got {n}")
        if self.max_children is None and n < 1:
            raise MalformedTree(f"{self.kind} needs at least one child")

    # -- main walk ----------------------------------------------------------

    def tick(self, ctx: TreeContext, rt: Runtime) -> TickResult:
        if self.lifecycle in (Lifecycle.SUCCEEDED, Lifecycle.FAILED):
            self.reset(ctx, rt, mode="complete")
        if self.lifecycle is Lifecycle.FRESH:
            self.lifecycle = Lifecycle.RUNNING
            self._cleanup_pending = True
            if rt.trace_on:
                rt.emit("node-entered", node=self.label, nid=self.nid)
            self._on_enter(ctx, rt)
        rt.count_node()
        result = self._tick(ctx, rt)
        if result is not RUNNING:
            self._on_terminal(result, ctx, rt)
            self.lifecycle = Lifecycle.SUCCEEDED if result is SUCCESS else Lifecycle.FAILED
            if rt.trace_on:
                rt.emit("node-result", node=self.label, nid=self.nid,
                        result=result.value)
        return result

    # -- reset / halt -------------------------------------------------------

    def reset(self, ctx: TreeContext, rt: Runtime, mode: str = "halt",
              report: CleanupReport | None = None) -> CleanupReport:
        """Return the node (and everything below it) to fresh, running pending
        cleanups innermost-first. `mode="halt"` cancels in-flight actions."""
        if report is None:
            report = CleanupReport()
        if self.lifecycle is Lifecycle.FRESH:
            return report
        was = self.lifecycle
        self.lifecycle = Lifecycle.CLEANING_UP
        if was is Lifecycle.RUNNING:
            for child in reversed(self.children):
                child.reset(ctx, rt, mode, report)
        if self._cleanup_pending:
            self._cleanup_pending = False
            self._on_reset(was, mode, ctx, rt, report)
            if self.cleanup is not None:
                self._run_cleanup_tree(ctx, rt, report)
        self.lifecycle = Lifecycle.FRESH
        return report

    def halt(self, ctx: TreeContext, rt: Runtime) -> CleanupReport:
        return self.reset(ctx, rt, mode="halt")

    def _run_cleanup_tree(self, ctx: TreeContext, rt: Runtime, report: CleanupReport) -> None:
        was_cleanup = rt.in_cleanup
        rt.in_cleanup = True
        result = RUNNING
        try:
            for _ in range(CLEANUP_OVERRUN_CAP):
                result = self.cleanup.tick(ctx, rt)
                if result is not RUNNING:
                    break
        finally:
            rt.in_cleanup = was_cleanup
        if result is RUNNING:
            report.overruns.append(self.label)
            rt.emit("cleanup-overrun", node=self.label)
            self.cleanup.reset(ctx, rt, mode="halt", report=CleanupReport())
        else:
            self.cleanup.reset(ctx, rt, mode="complete", report=report)
        rt.emit("cleanup-run", node=self.label, result=result.value)
        report.cleanups_run.append((self.label, result))

    # -- hooks ---------------------------------------------------------------

    def _on_enter(self, ctx: TreeContext, rt: Runtime) -> None:
        pass

    def _tick(self, ctx: TreeContext, rt: Runtime) -> TickResult:
        raise NotImplementedError

    def _on_terminal(self, result: TickResult, ctx: TreeContext, rt: Runtime) -> None:
        pass

    def _on_reset(self, was: Lifecycle, mode: str, ctx: TreeContext, rt: Runtime,
                  report: CleanupReport) -> None:
        pass

    # -- structure ----------------------------------------------------------

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()
        if self.cleanup is not None:
            yield from self.cleanup.walk()

    def assign_ids(self, start: int = 0) -> int:
        for i, node in enumerate(self.walk()):
            node.nid = start + i
        return start + i + 1

    def is_fresh_deep(self) -> bool:
        return all(n.lifecycle is Lifecycle.FRESH for n in self.walk())


class Composite(Node):
    def _reset_children_for(self, result: TickResult, ctx: TreeContext, rt: Runtime) -> None:
        # Failure is the rollback path; running children (parallel losers) are
        # interrupted either way. Both cancel in-flight actions.
        report = rt.report if rt.report is not None else CleanupReport()
        for child in reversed(self.children):
            if result is SUCCESS and child.lifecycle is not Lifecycle.RUNNING:
                child.reset(ctx, rt, "complete", report)
            else:
                child.reset(ctx, rt, "halt", report)

    def _on_terminal(self, result: TickResult, ctx: TreeContext, rt: Runtime) -> None:
        self._reset_children_for(result, ctx, rt)


class Sequence(Composite):
    kind = "seq"

    def _tick(self, ctx, rt):
        for child in self.children:
            if child.lifecycle is Lifecycle.SUCCEEDED:
                continue
            result = child.tick(ctx, rt)
            if result is not SUCCESS:
                return result
        return SUCCESS


class Selector(Composite):
    kind = "sel"

    def _tick(self, ctx, rt):
        for child in self.children:
            if child.lifecycle is Lifecycle.FAILED:
                continue
            result = child.tick(ctx, rt)
            if result is not FAILURE:
                return result
        return FAILURE


class Parallel(Composite):
    """Ticks children in declaration order; terminal children keep their state.

    policy "any": succeed when one child succeeds, fail when all fail.
    policy "all": succeed when all succeed, fail when one fails.
    Losing siblings are halted (reverse declaration order, via reset).
    """

    kind = "par"

    def __init__(self, policy: str, children, cleanup=None, label=None):
        if policy not in ("any", "all"):
            raise MalformedTree(f"parallel policy must be any|all, got {policy!r}")
        self.policy = policy
        super().__init__(children, cleanup, label)

    def _tick(self, ctx, rt):
        any_running = False
        for child in self.children:
            if child.lifecycle in (Lifecycle.SUCCEEDED, Lifecycle.FAILED):
                continue
            result = child.tick(ctx, rt)
            if result is SUCCESS and self.policy == "any":
                return SUCCESS
            if result is FAILURE and self.policy == "all":
                return FAILURE
            if result is RUNNING:
                any_running = True
        if any_running:
            return RUNNING
        if self.policy == "any":
            return SUCCESS if any(c.lifecycle is Lifecycle.SUCCEEDED for c in self.children) else FAILURE
        return FAILURE if any(c.lifecycle is Lifecycle.FAILED for c in self.children) else SUCCESS


class Condition(Node):
    kind = "cond"
    max_children = 0

    def __init__(self, predicate: str, params: tuple = (), cleanup=None, label=None):
        self.predicate = predicate
        self.params = params
        super().__init__(None, cleanup, label or f"cond:{predicate}")

    def _tick(self, ctx, rt):
        try:
            args = [ctx.resolve(p) for p in self.params]
            ok = rt.world.eval_predicate(self.predicate, args, ctx, rt)
        except UnboundVariable as exc:
            rt.diagnostic(f"unbound variable ${exc.args[0]} in {self.label}")
            return FAILURE
        return SUCCESS if ok else FAILURE


class Action(Node):
    """Issues a symbolic world action and reports success at its handoff point.

    The issuing tick always returns Running; afterwards the node succeeds as
    soon as the action's remaining duration is within the handoff offset, so
    the successor's first action can replace it seamlessly. Zero-duration
    actions are owner-local control steps and complete on the spot. In cleanup
    context the effect is applied immediately.
    """

    kind = "act"
    max_children = 0

    def __init__(self, action: str, params: dict | None = None, duration=None,
                 handoff: int = 1, cleanup=None, label=None):
        self.action = action
        self.params = params or {}
        self.duration = duration  # None: registry default
        self.handoff = handoff
        self._handle = None
        super().__init__(None, cleanup, label or f"act:{action}")

    def _resolved_params(self, ctx):
        return {k: ctx.resolve(v) for k, v in self.params.items()}

    def _tick(self, ctx, rt):
        try:
            if self._handle is None:
                params = self._resolved_params(ctx)
                if rt.in_cleanup:
                    rt.world.apply_action_now(rt.owner, self.action, params, ctx)
                    return SUCCESS
                duration = ctx.resolve(self.duration) if self.duration is not None else None
                handle = rt.world.issue_action(
                    rt.owner, self.action, params, duration, self.handoff, ctx)
                if handle is None:  # zero-duration control action, already applied
                    return SUCCESS
                self._handle = handle
                return RUNNING
        except UnboundVariable as exc:
            rt.diagnostic(f"unbound variable ${exc.args[0]} in {self.label}")
            return FAILURE
        remaining = rt.world.action_remaining(self._handle)
        if remaining is None or remaining <= self.handoff:
            return SUCCESS
        return RUNNING

    def _on_reset(self, was, mode, ctx, rt, report):
        if self._handle is not None:
            if mode == "halt":
                if rt.world.cancel_action(self._handle):
                    report.actions_cancelled += 1
            self._handle = None


class AcquireLock(Node):
    """Takes a named lock in the enclosing lock context; blocks while held
    elsewhere. The lock is released automatically when the node is reset."""

    kind = "lock"
    max_children = 0

    def __init__(self, lock_name: str, cleanup=None, label=None):
        self.lock_name = lock_name
        self._held_in: LockContext | None = None
        super().__init__(None, cleanup, label or f"lock:{lock_name}")

    def _tick(self, ctx, rt):
        if self._held_in is not None:
            return SUCCESS
        lc = ctx.lock_context
        if lc is None:
            rt.diagnostic(f"no lock context for lock {self.lock_name}")
            return FAILURE
        if lc.acquire(self.lock_name, ctx.owner):
            self._held_in = lc
            rt.emit("lock-acquired", lock=self.lock_name, scope=lc.owner)
            return SUCCESS
        return RUNNING

    def _on_reset(self, was, mode, ctx, rt, report):
        if self._held_in is not None:
            self._held_in.release(self.lock_name, ctx.owner)
            rt.emit("lock-released", lock=self.lock_name, scope=self._held_in.owner)
            report.locks_released.append(self.lock_name)
            self._held_in = None


class SendMessage(Node):
    kind = "send"
    max_children = 0

    def __init__(self, target, schema: str, payload: dict | None = None,
                 msg_kind: str = "request-change", cleanup=None, label=None):
        self.target = target
        self.schema = schema
        self.payload = payload or {}
        self.msg_kind = msg_kind
        super().__init__(None, cleanup, label or f"send:{schema}")

    def _tick(self, ctx, rt):
        try:
            target = ctx.resolve(self.target)
            payload = {k: ctx.resolve(v) for k, v in self.payload.items()}
        except UnboundVariable as exc:
            rt.diagnostic(f"unbound variable ${exc.args[0]} in {self.label}")
            return FAILURE
        status = rt.world.send_to_owner(rt.owner, target, self.schema, payload, self.msg_kind)
        if status == "delivered":
            return SUCCESS
        rt.diagnostic(f"send {self.schema} to {target}: {status}")
        return FAILURE


class WaitMessage(Node):
    """Waits for (and drains) one message from the owner's inbox of the given
    schema; payload fields become `msg-<field>` context variables."""

    kind = "wait-msg"
    max_children = 0

    def __init__(self, schema: str, timeout=None, cleanup=None, label=None):
        self.schema = schema
        self.timeout = timeout
        self._waited = 0
        super().__init__(None, cleanup, label or f"wait:{schema}")

    def _on_enter(self, ctx, rt):
        self._waited = 0

    def _tick(self, ctx, rt):
        msg = rt.world.try_drain_one(rt.owner, self.schema)
        if msg is not None:
            for key, value in msg.payload.items():
                ctx.variables[f"msg-{key}"] = value
            ctx.variables["msg-sender"] = msg.sender
            return SUCCESS
        self._waited += 1
        timeout = self.timeout
        if timeout is not None:
            try:
                timeout = ctx.resolve(timeout)
            except UnboundVariable as exc:
                rt.diagnostic(f"unbound variable ${exc.args[0]} in {self.label}")
                return FAILURE
            if self._waited >= timeout:
                return FAILURE
        return RUNNING

    def _on_reset(self, was, mode, ctx, rt, report):
        self._waited = 0


class Succeed(Node):
    kind = "succeed"
    max_children = 0

    def __init__(self, cleanup=None, label=None):
        super().__init__(None, cleanup, label)

    def _tick(self, ctx, rt):
        return SUCCESS


class Fail(Node):
    kind = "fail"
    max_children = 0

    def __init__(self, cleanup=None, label=None):
        super().__init__(None, cleanup, label)

    def _tick(self, ctx, rt):
        return FAILURE


class Decorator(Composite):
    kind = "decorator"
    max_children = 1

    def __init__(self, children, cleanup=None, label=None):
        super().__init__(children, cleanup, label)
        if not self.children:
            raise MalformedTree(f"{self.kind} needs a child")

    @property
    def child(self) -> Node:
        return self.children[0]


class Bind(Decorator):
    """Sets a shared variable on enter, then runs the child. This is how
    parameters are passed to injected subtrees."""

    kind = "bind"

    def __init__(self, name: str, value, children, cleanup=None, label=None):
        self.name = name
        self.value = value
        super().__init__(children, cleanup, label or f"bind:{name}")

    def _on_enter(self, ctx, rt):
        ctx.variables[self.name] = ctx.resolve(self.value)

    def _tick(self, ctx, rt):
        return self.child.tick(ctx, rt)


class Guard(Decorator):
    """Re-evaluates a predicate every tick; when it turns false the child is
    halted and the guard fails. The reactive counterpart to memory composites."""

    kind = "guard"

    def __init__(self, predicate: str, params: tuple, children, cleanup=None, label=None):
        self.predicate = predicate
        self.params = params
        super().__init__(children, cleanup, label or f"guard:{predicate}")

    def _tick(self, ctx, rt):
        try:
            args = [ctx.resolve(p) for p in self.params]
            ok = rt.world.eval_predicate(self.predicate, args, ctx, rt)
        except UnboundVariable as exc:
            rt.diagnostic(f"unbound variable ${exc.args[0]} in {self.label}")
            ok = False
        if not ok:
            if self.child.lifecycle is Lifecycle.RUNNING:
                report = rt.report if rt.report is not None else CleanupReport()
                self.child.reset(ctx, rt, mode="halt", report=report)
            return FAILURE
        return self.child.tick(ctx, rt)


class Repeat(Decorator):
    """Loops the child forever, one iteration boundary per tick. Ends only by
    being halted from outside (guard, preemption)."""

    kind = "repeat"

    def _tick(self, ctx, rt):
        self.child.tick(ctx, rt)  # terminal children auto-reset on re-entry
        return RUNNING


class RepeatUntilSuccess(Decorator):
    kind = "repeat-until-success"

    def _tick(self, ctx, rt):
        result = self.child.tick(ctx, rt)
        if result is SUCCESS:
            return SUCCESS
        return RUNNING


class SubscribeSituations(Decorator):
    """Subscribes the owner to the situation system while the child runs;
    the reset path always unsubscribes, even on halt."""

    kind = "subscribe"

    def __init__(self, children, cleanup=None, label=None):
        self._subscribed = False
        super().__init__(children, cleanup, label)

    def _on_enter(self, ctx, rt):
        rt.world.adjust_subscription(rt.owner, +1)
        self._subscribed = True

    def _tick(self, ctx, rt):
        return self.child.tick(ctx, rt)

    def _on_reset(self, was, mode, ctx, rt, report):
        if self._subscribed:
            rt.world.adjust_subscription(rt.owner, -1)
            self._subscribed = False


class SetEnabled(Node):
    """Flips a behavior's enabled flag on the owning instance (brain-only)."""

    kind = "set-enabled"
    max_children = 0

    def __init__(self, behavior: str, flag, cleanup=None, label=None):
        self.behavior = behavior
        self.flag = flag
        super().__init__(None, cleanup, label or f"set-enabled:{behavior}")

    def _tick(self, ctx, rt):
        try:
            flag = bool(ctx.resolve(self.flag))
            rt.world.set_gating(rt.owner, self.behavior, enabled=flag)
        except UnboundVariable as exc:
            rt.diagnostic(f"unbound variable ${exc.args[0]} in {self.label}")
            return FAILURE
        except KeyError:
            rt.diagnostic(f"unknown behavior {self.behavior} on {rt.owner}")
            return FAILURE
        return SUCCESS


class SetMaxHolders(Node):
    kind = "set-max-holders"
    max_children = 0

    def __init__(self, behavior: str, count, cleanup=None, label=None):
        self.behavior = behavior
        self.count = count
        super().__init__(None, cleanup, label or f"set-max-holders:{behavior}")

    def _tick(self, ctx, rt):
        try:
            count = ctx.resolve(self.count)
            rt.world.set_gating(rt.owner, self.behavior, max_holders=count)
        except UnboundVariable as exc:
            rt.diagnostic(f"unbound variable ${exc.args[0]} in {self.label}")
            return FAILURE
        except KeyError:
            rt.diagnostic(f"unknown behavior {self.behavior} on {rt.owner}")
            return FAILURE
        return SUCCESS


class RequestBehavior(Node):
    """Requests a behavior from a smart entity and runs the injected subtree
    as its only child. Refusals are ordinary failures; re-requesting a
    behavior already on the holder's stack is a hard runtime error (raised by
    the world). Releasing on completion or halt notifies the source."""

    kind = "request"
    max_children = 0  # child slot is filled by injection, not construction

    def __init__(self, target=None, behavior=None, general: bool = False,
                 private: bool = False, wrapper: bool = False,
                 cleanup=None, label=None):
        self.target = target          # None: implicit current area
        self.behavior = behavior      # None: first available
        self.general = general
        self.private = private
        self.wrapper = wrapper        # area move-wrapper resolution
        self._grant = None            # (descriptor, subtree, child_ctx)
        super().__init__(None, cleanup, label or f"request:{behavior or '*'}")

    def _tick(self, ctx, rt):
        if self._grant is None:
            try:
                target = ctx.resolve(self.target) if self.target is not None else None
                behavior = ctx.resolve(self.behavior) if self.behavior is not None else None
            except UnboundVariable as exc:
                rt.diagnostic(f"unbound variable ${exc.args[0]} in {self.label}")
                return FAILURE
            grant = rt.world.request_behavior(
                rt.owner, target, behavior, node=self,
                general=self.general, private=self.private,
                wrapper=self.wrapper, ctx=ctx)
            if grant is None:
                return FAILURE
            self._grant = grant
        descriptor, subtree, child_ctx = self._grant
        result = subtree.tick(child_ctx, rt)
        if result is not RUNNING:
            reason = "completed"
            rt.world.release_behavior(rt.owner, descriptor, reason, result, rt)
            self._grant = None
        return result

    def _on_reset(self, was, mode, ctx, rt, report):
        if self._grant is not None:
            descriptor, _, _ = self._grant
            reason = "halted" if mode == "halt" else "completed"
            rt.world.release_behavior(rt.owner, descriptor, reason, None, rt, report=report)
            self._grant = None

    def force_drop(self, ctx, rt, reason: str) -> None:
        """Policy-driven drop (e.g. on area exit): release, run own cleanup,
        and go fresh so the next tick re-resolves the request."""
        if self._grant is not None:
            descriptor, _, _ = self._grant
            rt.world.release_behavior(rt.owner, descriptor, reason, None, rt)
            self._grant = None
        self.reset(ctx, rt, mode="halt")


class MoveTo(Node):
    """Plans a grid path and walks it one cell per tick. Navigation edges on
    the path hand control to the owning instance: the traversal subtree is
    injected under this node on command and ticked in place of the move, which
    resumes on success and fails on failure."""

    kind = "moveto"
    max_children = 0

    def __init__(self, target, cleanup=None, label=None):
        self.target = target
        self._path = None
        self._index = 0
        self._step_handle = None
        self._waiting_edge = None
        self._traversal = None  # (descriptor, subtree, child_ctx)
        super().__init__(None, cleanup, label or "moveto")

    def _on_enter(self, ctx, rt):
        self._path = None
        self._index = 0
        self._step_handle = None
        self._waiting_edge = None
        self._traversal = None

    def _tick(self, ctx, rt):
        world = rt.world
        if self._traversal is not None:
            descriptor, subtree, child_ctx = self._traversal
            result = subtree.tick(child_ctx, rt)
            if result is RUNNING:
                return RUNNING
            world.release_behavior(rt.owner, descriptor, "completed", result, rt)
            self._traversal = None
            self._waiting_edge = None
            if result is FAILURE:
                return FAILURE
            self._path = None  # replan from the far side of the edge
            return RUNNING
        if self._waiting_edge is not None:
            staged = world.take_staged_injection(rt.owner, self)
            if staged is not None:
                self._traversal = staged
                rt.emit("injection-attached", at=self.label, source=staged[0].source_id)
                return self._tick(ctx, rt)
            return RUNNING
        try:
            target = world.resolve_position(ctx.resolve(self.target))
        except UnboundVariable as exc:
            rt.diagnostic(f"unbound variable ${exc.args[0]} in {self.label}")
            return FAILURE
        pos = world.owner_position(rt.owner)
        if pos == target:
            return SUCCESS
        if self._step_handle is not None:
            if world.action_remaining(self._step_handle) is not None:
                return RUNNING
            self._step_handle = None
        if self._path is None:
            plan = world.plan_path(pos, target)
            if plan is None:
                rt.diagnostic(f"unreachable target {target} in {self.label}")
                return FAILURE
            self._path = plan
            self._index = 0
            rt.emit("move-planned", target=f"{target[0]},{target[1]}",
                    steps=len(plan), source=ctx.this_sa or "-")
        if self._index >= len(self._path):
            return SUCCESS if pos == target else FAILURE
        item = self._path[self._index]
        if isinstance(item, tuple):
            self._step_handle = world.issue_action(
                rt.owner, "walk-step", {"to": item}, 1, 1, ctx)
            self._index += 1
            return RUNNING
        # navigation edge
        edge = item
        staged = world.begin_traversal(rt.owner, edge, self, ctx)
        if staged is not None:
            self._traversal = staged
            return self._tick(ctx, rt)
        self._waiting_edge = edge
        return RUNNING

    def _on_reset(self, was, mode, ctx, rt, report):
        world = rt.world
        if self._step_handle is not None:
            if mode == "halt" and world.cancel_action(self._step_handle):
                report.actions_cancelled += 1
            self._step_handle = None
        if self._waiting_edge is not None:
            world.leave_edge_queue(rt.owner, self._waiting_edge)
            self._waiting_edge = None
        if self._traversal is not None:
            descriptor, subtree, child_ctx = self._traversal
            world.release_behavior(rt.owner, descriptor, "halted", None, rt, report=report)
            self._traversal = None
        self._path = None
        self._index = 0


def validate_cleanup_trees(root: Node) -> None:
    """Cleanup subtrees must be self-contained: no behavior requests."""
    for node in root.walk():
        if node.cleanup is None:
            continue
        for sub in node.cleanup.walk():
            if isinstance(sub, RequestBehavior):
                raise MalformedTree(
                    f"cleanup of {node.label} contains a request node ({sub.label})")


def run_to_completion(root: Node, ctx: TreeContext, rt: Runtime,
                      cap: int = CLEANUP_OVERRUN_CAP) -> TickResult:
    """Tick a tree in an internal loop until terminal, for handler trees.
    Returns RUNNING if the cap was hit (caller flags the overrun)."""
    for _ in range(cap):
        result = root.tick(ctx, rt)
        if result is not RUNNING:
            root.reset(ctx, rt, mode="complete" if result is SUCCESS else "halt")
            return result
    root.reset(ctx, rt, mode="halt")
    return RUNNING
