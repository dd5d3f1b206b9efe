"""Granting, attaching, and releasing injected subtrees.

A grant instantiates the behavior's tree from the pool into a descriptor; the
descriptor is the currency between the source instance and the holder. All
refusals are plain failures usable by selectors; only re-requesting a
behavior already on the holder's stack is a hard error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import bt
from .errors import RecursionDetected

REFUSAL_REASONS = ("disabled", "max-holders-reached", "no-such-behavior",
                   "no-behavior-available")


@dataclass
class BehaviorDescriptor:
    source_id: str
    behavior_name: str
    subtree: bt.Node
    lock_context: bt.LockContext
    drop_policy: str = "on-completion"   # or on-area-exit | on-abort-signal
    inboxes_to_add: list = field(default_factory=list)
    grant_tick: int = 0
    tree_name: str = ""                  # pool key
    bindings: dict = field(default_factory=dict)
    ctx: bt.TreeContext | None = None    # frame the subtree runs in
    source_area: str | None = None       # drop-policy scope for local behaviors


class InjectionStack:
    """Per-NPC record of live grants, outermost first. No two entries may
    share (source, behavior): that would be recursion."""

    def __init__(self, npc_id: str):
        self.npc_id = npc_id
        self.entries: list[BehaviorDescriptor] = []

    def push(self, descriptor: BehaviorDescriptor, tick: int) -> None:
        for held in self.entries:
            if (held.source_id == descriptor.source_id
                    and held.behavior_name == descriptor.behavior_name):
                raise RecursionDetected(
                    f"{self.npc_id} re-requested {descriptor.behavior_name} "
                    f"from {descriptor.source_id}", tick=tick, owner=self.npc_id)
        self.entries.append(descriptor)

    def pop(self, descriptor: BehaviorDescriptor) -> None:
        if self.entries and self.entries[-1] is descriptor:
            self.entries.pop()
        elif descriptor in self.entries:  # defensive; releases are innermost-first
            self.entries.remove(descriptor)

    def innermost_area_grant(self, instances: dict) -> BehaviorDescriptor | None:
        for descriptor in reversed(self.entries):
            source = instances.get(descriptor.source_id)
            if source is not None and source.template.kind == "s-area":
                return descriptor
        return None

    def __len__(self) -> int:
        return len(self.entries)


def grant(world, npc_id: str, instance, behavior_name: str, spec, parent_ctx,
          drop_policy: str | None = None, extra_bindings: dict | None = None):
    """Build the descriptor for an already-approved grant: instantiate the
    subtree, record the holder, register inboxes, push the stack. Returns
    (descriptor, subtree, child_ctx)."""
    tick = world.tick
    subtree = world.pool_acquire(spec.tree)
    bindings = instance.adopt(behavior_name, npc_id, tick)
    if extra_bindings:
        bindings.update(extra_bindings)
    policy = drop_policy or ("on-area-exit" if spec.local else "on-completion")
    descriptor = BehaviorDescriptor(
        source_id=instance.id,
        behavior_name=behavior_name,
        subtree=subtree,
        lock_context=instance.lock_context,
        drop_policy=policy,
        inboxes_to_add=list(spec.inboxes),
        grant_tick=tick,
        tree_name=spec.tree,
        bindings=bindings,
    )
    if policy == "on-area-exit":
        descriptor.source_area = instance.id
    child_ctx = parent_ctx.child_frame(instance.lock_context, instance.id)
    descriptor.ctx = child_ctx
    for key, value in bindings.items():
        child_ctx.variables[key] = value
    for schema, capacity in descriptor.inboxes_to_add:
        world.board.register_inbox(npc_id, schema, capacity)
    npc = world.npcs[npc_id]
    npc.stack.push(descriptor, tick)
    world.stats.injections += 1
    world.emit(npc_id, "behavior-granted", source=instance.id,
               behavior=behavior_name, tree=spec.tree)
    return descriptor, subtree, child_ctx


def release(world, npc_id: str, descriptor: BehaviorDescriptor, reason: str,
            result, rt, report=None):
    """Halt the subtree (cleanups, innermost-first), deregister the grant's
    inboxes, notify the source, pop the stack, recycle the tree."""
    mode = "complete" if reason == "completed" and result is not bt.FAILURE else "halt"
    sub_report = descriptor.subtree.reset(descriptor.ctx, rt, mode=mode)
    if report is not None:
        report.merge(sub_report)
        report.behaviors_released.append((descriptor.source_id, descriptor.behavior_name))
    for schema, _cap in descriptor.inboxes_to_add:
        world.board.deregister_inbox(npc_id, schema)
    npc = world.npcs.get(npc_id)
    if npc is not None:
        npc.stack.pop(descriptor)
    source = world.instances.get(descriptor.source_id)
    result_name = result.value if isinstance(result, bt.TickResult) else (result or "")
    if source is not None:
        source.release(descriptor.behavior_name, npc_id, reason, result_name, world.tick)
    else:
        world.on_situation_release(descriptor, npc_id, reason, result_name)
    world.pool_release(descriptor.tree_name, descriptor.subtree)
    world.emit(npc_id, "behavior-released", source=descriptor.source_id,
               behavior=descriptor.behavior_name, reason=reason,
               result=result_name or "-")
