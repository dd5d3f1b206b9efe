"""Smart-entity templates and instances.

A template carries code (behavior trees, brain, event handlers) and link
requirements; an instance carries immutable environment data resolved from
the link graph, private mutable state, per-behavior gating, an event queue,
and a lock context. Quest variants reuse the same machinery and differ only
in what they bind to (invisible anchors) and in always having a brain.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from . import bt
from .errors import LoadError, OwnershipError

SE_KINDS = ("s-object", "nav-object", "s-area", "quest-object")
OBJECT_EVENTS = ("on-adopt", "on-drop")
AREA_EVENTS = OBJECT_EVENTS + ("on-enter", "on-exit")


@dataclass
class BehaviorSpec:
    name: str
    tree: str
    enabled: bool = True
    max_holders: int | None = None   # None: unbounded
    general: bool = False            # resolved through the area hierarchy
    serves: str | None = None        # general name this behavior fulfills
    private: bool = False            # grantable only via passthrough
    local: bool = False              # dropped when the holder leaves the area
    dual_level: bool = False         # suppress parent/child name-shadow lint
    slots: str | None = None         # link label whose targets are holder slots
    inboxes: list = field(default_factory=list)  # (schema, capacity) added per grant
    line: int = 0


@dataclass
class SETemplate:
    name: str
    kind: str
    behaviors: dict = field(default_factory=dict)        # name -> BehaviorSpec
    brain_tree: str | None = None
    brain_period: int = 4
    handlers: dict = field(default_factory=dict)         # event kind -> tree name
    required_links: list = field(default_factory=list)   # (label, min, max, kind)
    inboxes: list = field(default_factory=list)          # (schema, capacity, bind)
    initial_state: dict = field(default_factory=dict)
    resolution_root: bool = False
    move_wrapper: str | None = None
    traversal: str | None = None     # nav-object: behavior injected under moves
    line: int = 0

    def allowed_events(self) -> tuple:
        return AREA_EVENTS if self.kind == "s-area" else OBJECT_EVENTS


@dataclass
class SEEvent:
    kind: str
    npc: str | None = None
    behavior: str | None = None
    reason: str | None = None
    result: str | None = None
    tick: int = 0


@dataclass
class GateState:
    enabled: bool
    max_holders: int | None
    holders: list = field(default_factory=list)          # adoption order
    slot_of: dict = field(default_factory=dict)          # npc -> slot index
    slot_targets: tuple = ()                             # entity per slot
    reserved: dict = field(default_factory=dict)         # npc -> preferred slot
    adopts: int = 0
    drops: int = 0

    def free_capacity(self) -> int:
        if self.max_holders is None:
            return 1  # unbounded providers weigh as one
        return max(0, self.max_holders - len(self.holders))


class SEInstance:
    """One smart entity in the world. All mutation happens in its own update
    or in the synchronous grant bookkeeping the global tick order makes safe."""

    def __init__(self, instance_id: str, template: SETemplate, entity_id: str,
                 env: dict, line: int = 0):
        self.id = instance_id
        self.template = template
        self.entity_id = entity_id
        self.env = {k: tuple(v) for k, v in env.items()}  # immutable after init
        self.state = dict(template.initial_state)
        self.lock_context = bt.LockContext(owner=instance_id)
        self.event_queue: deque[SEEvent] = deque()
        self.must_run_main = False
        self.gating: dict[str, GateState] = {}
        self.brain: bt.Node | None = None
        self.handler_nodes: dict[str, bt.Node] = {}
        self.ctx = bt.TreeContext(owner=instance_id, lock_context=self.lock_context,
                                  this_sa=instance_id)
        self.line = line
        self.area_node = None  # set for s-areas by the world

    # -- gating ----------------------------------------------------------------

    def init_gating(self) -> None:
        for name, spec in self.template.behaviors.items():
            slot_targets = ()
            max_holders = spec.max_holders
            if spec.slots is not None:
                slot_targets = tuple(self.env.get(spec.slots, ()))
                cap = len(slot_targets)
                max_holders = cap if max_holders is None else min(max_holders, cap)
            self.gating[name] = GateState(spec.enabled, max_holders,
                                          slot_targets=slot_targets)

    def check_grant(self, name: str | None, allow_private: bool = False):
        """Passive gating decision. Returns (behavior name, spec) or a refusal
        reason string from {disabled, max-holders-reached, no-such-behavior,
        no-behavior-available}."""
        if name is None:
            for cand, spec in self.template.behaviors.items():
                if spec.private:
                    continue
                gate = self.gating[cand]
                if gate.enabled and (gate.max_holders is None
                                     or len(gate.holders) < gate.max_holders):
                    return cand, spec
            return "no-behavior-available"
        spec = self.template.behaviors.get(name)
        if spec is None or (spec.private and not allow_private):
            return "no-such-behavior"
        gate = self.gating[name]
        if not gate.enabled:
            return "disabled"
        if gate.max_holders is not None and len(gate.holders) >= gate.max_holders:
            return "max-holders-reached"
        return name, spec

    def adopt(self, name: str, npc: str, tick: int) -> dict:
        """Record the holder; returns grant-time variable bindings."""
        gate = self.gating[name]
        gate.holders.append(npc)
        gate.adopts += 1
        bindings = {}
        if gate.slot_targets:
            taken = set(gate.slot_of.values())
            slot = gate.reserved.pop(npc, None)
            if slot is None or slot in taken:
                slot = next(i for i in range(len(gate.slot_targets))
                            if i not in taken)
            gate.slot_of[npc] = slot
            bindings["slot"] = slot
            bindings["slot-target"] = gate.slot_targets[slot]
        self.enqueue_event(SEEvent("on-adopt", npc=npc, behavior=name, tick=tick))
        return bindings

    def release(self, name: str, npc: str, reason: str, result: str | None, tick: int) -> None:
        gate = self.gating[name]
        if npc in gate.holders:
            gate.holders.remove(npc)
            gate.drops += 1
        gate.slot_of.pop(npc, None)
        self.enqueue_event(SEEvent("on-drop", npc=npc, behavior=name,
                                   reason=reason, result=result, tick=tick))

    def set_gating(self, name: str, enabled: bool | None = None,
                   max_holders: int | None = "keep") -> None:
        gate = self.gating.get(name)
        if gate is None:
            raise KeyError(name)
        if enabled is not None:
            gate.enabled = enabled
        if max_holders != "keep":
            # lowering below current holders never evicts; it only blocks new grants
            gate.max_holders = max_holders

    def query_holders(self, name: str) -> list:
        gate = self.gating.get(name)
        if gate is None:
            raise KeyError(name)
        return list(gate.holders)

    # -- events ------------------------------------------------------------------

    def enqueue_event(self, event: SEEvent) -> None:
        if event.kind in self.handler_nodes:
            self.event_queue.append(event)

    def wants_update(self, tick: int, period: int) -> bool:
        if self.brain is not None:
            return tick % period == 0
        return bool(self.event_queue) or self.must_run_main

    def env_fingerprint(self) -> tuple:
        return tuple(sorted((k, v) for k, v in self.env.items()))


def update_instance(world, instance: SEInstance) -> dict:
    """One scheduled update: either run one queued event handler to completion
    or tick the main tree once. At least one main-tree tick is guaranteed
    between two successive handler runs."""
    rt = bt.Runtime(world, instance.id)
    report = {"handler": None, "overrun": False}
    if instance.event_queue and not instance.must_run_main:
        event = instance.event_queue.popleft()
        handler = instance.handler_nodes.get(event.kind)
        if handler is None:
            world.emit(instance.id, "warning", msg=f"no-handler-for-{event.kind}")
            return report
        ctx = instance.ctx
        ctx.variables["event-npc"] = event.npc or ""
        ctx.variables["event-behavior"] = event.behavior or ""
        ctx.variables["event-reason"] = event.reason or ""
        ctx.variables["event-result"] = event.result or ""
        world.emit(instance.id, "handler-started", event=event.kind,
                   npc=event.npc or "-", behavior=event.behavior or "-")
        result = bt.run_to_completion(handler, ctx, rt)
        if result is bt.RUNNING:
            report["overrun"] = True
            world.emit(instance.id, "handler-overrun", event=event.kind)
        world.emit(instance.id, "handler-finished", event=event.kind,
                   result=result.value)
        world.stats.handler_runs += 1
        report["handler"] = event.kind
        instance.must_run_main = True
    else:
        world.emit(instance.id, "se-main-tick", brain="y" if instance.brain else "n")
        if instance.brain is not None:
            result = instance.brain.tick(instance.ctx, rt)
            if result is not bt.RUNNING:
                instance.brain.reset(
                    instance.ctx, rt,
                    mode="complete" if result is bt.SUCCESS else "halt")
        instance.must_run_main = False
    return report


def bind_instance(instance_id: str, template: SETemplate, entity_id: str,
                  links: dict, entity_kinds: dict, line: int = 0):
    """Resolve environment data from the link graph and validate it against
    the template's requirements. Returns (instance, [LoadError])."""
    env = {label: list(targets) for label, targets in links.get(instance_id, {}).items()}
    errors = []
    for label, lo, hi, kind in template.required_links:
        targets = env.get(label, [])
        if len(targets) < lo:
            errors.append(LoadError(
                "MissingLink" if not targets else "CardinalityViolation",
                f"{instance_id} needs {lo}..{hi if hi is not None else 'n'} "
                f"'{label}' links, has {len(targets)}", line))
        elif hi is not None and len(targets) > hi:
            errors.append(LoadError(
                "CardinalityViolation",
                f"{instance_id} allows at most {hi} '{label}' links, has {len(targets)}",
                line))
        if kind != "any":
            for target in targets:
                actual = entity_kinds.get(target)
                if actual is None:
                    errors.append(LoadError(
                        "KindMismatch", f"link '{label}' of {instance_id} points at "
                        f"unknown id {target}", line))
                    continue
                if kind == "entity":
                    # plain world entity: anything that is not an instance or npc
                    if actual in SE_KINDS or actual == "npc":
                        errors.append(LoadError(
                            "KindMismatch", f"link '{label}' of {instance_id} "
                            f"expects a plain entity, {target} is {actual}", line))
                elif actual != kind:
                    errors.append(LoadError(
                        "KindMismatch", f"link '{label}' of {instance_id} expects "
                        f"{kind}, {target} is {actual}", line))
    instance = SEInstance(instance_id, template, entity_id, env, line)
    return instance, errors
