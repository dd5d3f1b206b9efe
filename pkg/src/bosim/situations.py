"""Short coordinated multi-NPC behaviors.

Role casting is a small constraint-satisfaction search: backtracking over
roles in declaration order with forward checking on the remaining NPCs,
deterministic tie-breaking by NPC id. The manager is an owner like any brain:
it mutates only its own records and talks to participants by messages; role
trees are injected on command into the situation subbrain slot.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import bt, injection
from .registry import eval_attr_condition


@dataclass
class RoleSpec:
    name: str
    tree: str
    condition: tuple | None = None   # (predicate, args) over NPC attributes


@dataclass
class SituationTemplate:
    name: str
    roles: list = field(default_factory=list)
    area_binding: str | None = None  # s-area template name
    cooldown: int = 50
    spawn_weight: int = 1
    solo_allowed: bool = False
    line: int = 0


@dataclass
class SituationInstance:
    id: str
    template: SituationTemplate
    assignment: dict                 # role name -> npc id
    lock_context: bt.LockContext
    created_tick: int
    status: dict = field(default_factory=dict)  # npc -> not-started|started|finished|dropped

    def all_terminal(self) -> bool:
        return all(s in ("finished", "dropped") for s in self.status.values())


def role_candidates(template: SituationTemplate, eligible: list) -> list:
    """eligible: [(npc_id, attrs)] -> candidate npc-id list per role, sorted."""
    ordered = sorted(eligible, key=lambda pair: pair[0])
    out = []
    for role in template.roles:
        cands = [npc_id for npc_id, attrs in ordered
                 if role.condition is None
                 or eval_attr_condition(role.condition, attrs)]
        out.append(cands)
    return out


def cast_roles(template: SituationTemplate, eligible: list):
    """Complete search for an injective role assignment; None when infeasible."""
    if len(eligible) < len(template.roles):
        return None
    candidates = role_candidates(template, eligible)
    assignment: list = [None] * len(template.roles)
    used: set = set()

    def feasible_ahead(index: int) -> bool:
        # forward check: every later role keeps at least one free candidate
        for j in range(index, len(candidates)):
            if all(c in used for c in candidates[j]):
                return False
        return True

    def backtrack(index: int) -> bool:
        if index == len(candidates):
            return True
        for npc_id in candidates[index]:
            if npc_id in used:
                continue
            assignment[index] = npc_id
            used.add(npc_id)
            if feasible_ahead(index + 1) and backtrack(index + 1):
                return True
            used.discard(npc_id)
            assignment[index] = None
        return False

    if not backtrack(0):
        return None
    return {role.name: npc_id
            for role, npc_id in zip(template.roles, assignment)}


class SituationManager:
    """Owns situation templates, instance records, and the launch cadence."""

    OWNER = "situation-manager"

    def __init__(self, templates: list, period: int = 10):
        self.templates = {t.name: t for t in templates}
        self.period = period
        self.cooldown_until: dict[str, int] = {t.name: 0 for t in templates}
        self.instances: dict[str, SituationInstance] = {}
        self._next_id = 1

    def update(self, world) -> None:
        self._drain_status(world)
        self._launch(world)

    def _drain_status(self, world) -> None:
        for msg in world.board.drain(self.OWNER, self.OWNER, "situation-status"):
            instance = self.instances.get(msg.payload.get("instance", ""))
            if instance is None:
                continue
            npc = msg.payload.get("npc")
            status = msg.payload.get("status")
            if npc in instance.status:
                instance.status[npc] = status
                world.emit(self.OWNER, "participant-status", instance=instance.id,
                           npc=npc, status=status)
        for instance_id in sorted(self.instances):
            instance = self.instances[instance_id]
            if instance.all_terminal():
                del self.instances[instance_id]
                self.cooldown_until[instance.template.name] = \
                    world.tick + instance.template.cooldown
                world.emit(self.OWNER, "situation-destroyed", instance=instance_id)

    def _eligible(self, world) -> list:
        busy = {npc for inst in self.instances.values()
                for npc in inst.assignment.values()}
        out = []
        for npc_id in sorted(world.npcs):
            npc = world.npcs[npc_id]
            if npc.subscription_count <= 0 or npc_id in busy:
                continue
            if npc.situation_grant is not None or npc.active_subbrain != "ambient":
                continue
            out.append(npc)
        return out

    def _launch(self, world) -> None:
        eligible = self._eligible(world)
        if not eligible:
            return
        rng = world.rng_for(self.OWNER)
        ready = [t for name, t in sorted(self.templates.items())
                 if world.tick >= self.cooldown_until[name]
                 and t.spawn_weight > 0]
        taken: set = set()
        for template in _weighted_order(ready, rng):
            pool = [n for n in eligible if n.id not in taken]
            groups = self._group_by_area(world, template, pool)
            for _, group in groups:
                pairs = [(n.id, n.attributes) for n in group]
                world.emit(self.OWNER, "situation-proposed", template=template.name,
                           eligible=len(pairs))
                assignment = cast_roles(template, pairs)
                world.emit(self.OWNER, "cast-result", template=template.name,
                           result="ok" if assignment else "infeasible")
                if assignment is None:
                    continue
                self._instantiate(world, template, assignment)
                taken.update(assignment.values())
                break

    def _group_by_area(self, world, template: SituationTemplate, pool: list) -> list:
        if template.area_binding is None:
            return [("-", pool)] if pool else []
        groups: dict[str, list] = {}
        for npc in pool:
            for node in world.area_tree.chain_of(npc.position):
                inst = world.instances.get(node.instance_id)
                if inst is not None and inst.template.name == template.area_binding:
                    groups.setdefault(inst.id, []).append(npc)
                    break
        return sorted(groups.items())

    def _instantiate(self, world, template: SituationTemplate, assignment: dict) -> None:
        instance_id = f"situation-{template.name}-{self._next_id}"
        self._next_id += 1
        instance = SituationInstance(
            id=instance_id, template=template, assignment=dict(assignment),
            lock_context=bt.LockContext(owner=instance_id),
            created_tick=world.tick,
            status={npc: "not-started" for npc in assignment.values()})
        self.instances[instance_id] = instance
        self.cooldown_until[template.name] = world.tick + template.cooldown
        world.emit(self.OWNER, "situation-created", instance=instance_id,
                   cast=";".join(f"{r}:{n}" for r, n in sorted(assignment.items())))
        for role in template.roles:
            npc_id = assignment[role.name]
            world.arm_situation_slot(npc_id, instance, role)

    def abort(self, world, instance_id: str, initiating_npc: str) -> None:
        """Broadcast abort to every other participant's situation inbox."""
        instance = self.instances.get(instance_id)
        if instance is None:
            return
        for npc_id in sorted(instance.assignment.values()):
            if npc_id == initiating_npc:
                continue
            world.board.send(self.OWNER, npc_id, "situation-ctl",
                             {"op": "abort", "instance": instance_id},
                             "request-change", world.tick)


def _weighted_order(templates: list, rng) -> list:
    """Weighted sampling without replacement by spawn weight."""
    pool = list(templates)
    out = []
    while pool:
        total = sum(t.spawn_weight for t in pool)
        roll = rng.randrange(total)
        acc = 0
        for i, t in enumerate(pool):
            acc += t.spawn_weight
            if roll < acc:
                out.append(pool.pop(i))
                break
    return out
