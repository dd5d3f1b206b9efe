"""Per-NPC decision shell.

Fixed-priority subbrains in a subsumption arrangement: combat > quest >
situation > ambient. Exactly one subbrain's tree is ticked per update; when a
higher-priority subbrain takes over, the loser is halted with its full
cleanup cascade (injection stack releases innermost-first) before the winner
runs. The situation slot is armed externally by the situation manager and
activates only from ambient while the NPC is subscribed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import bt

SUBBRAIN_ORDER = ("combat", "quest", "situation", "ambient")
PRIORITY = {"combat": 3, "quest": 2, "situation": 1, "ambient": 0}


@dataclass
class DayWindow:
    start: int
    end: int
    target: str          # instance id | "general" | "area"
    behavior: str | None
    name: str = ""


@dataclass
class NPC:
    id: str
    position: tuple
    attributes: dict = field(default_factory=dict)
    day_cycle: list = field(default_factory=list)
    trees: dict = field(default_factory=dict)        # subbrain -> bt.Node | None
    stack: object = None                             # InjectionStack
    ctx: bt.TreeContext | None = None
    subscription_count: int = 0
    combat_flag: bool = False
    quest_flag: bool = False
    situation_grant: tuple | None = None             # (descriptor, subtree, ctx)
    situation_started: bool = False
    active_subbrain: str | None = None
    pending_injections: dict = field(default_factory=dict)   # node -> grant
    pending_policy_drops: bool = False
    area_chain: tuple = ()
    deferred_first_tick: bool = False

    def select_subbrain(self) -> str:
        if self.combat_flag and self.trees.get("combat") is not None:
            return "combat"
        if self.quest_flag and self.trees.get("quest") is not None:
            return "quest"
        if self.situation_grant is not None:
            if self.situation_started or self.subscription_count > 0:
                return "situation"
        return "ambient"


def tick_npc(world, npc: NPC) -> dict:
    """One NPC update: apply deferred drops and control messages, arbitrate
    subbrains (halting the loser to fresh first), tick the winner once."""
    rt = bt.Runtime(world, npc.id)
    report = {"switched": False, "diagnostics": rt.diagnostics}

    if npc.pending_policy_drops:
        _apply_policy_drops(world, npc, rt)
        npc.pending_policy_drops = False
    _drain_control_inboxes(world, npc, rt)

    winner = npc.select_subbrain()
    if npc.active_subbrain is not None and winner != npc.active_subbrain:
        _halt_subbrain(world, npc, npc.active_subbrain, rt)
        report["switched"] = True
        world.emit(npc.id, "subbrain-switch", to=winner,
                   src=npc.active_subbrain or "-")
        if rt.nodes_evaluated > world.schedule.node_budget(world, npc.id):
            # cleanup ate the update's budget; winner starts next update
            npc.active_subbrain = winner
            npc.deferred_first_tick = True
            return report
    elif npc.active_subbrain is None:
        world.emit(npc.id, "subbrain-switch", to=winner, src="-")
    npc.active_subbrain = winner
    npc.deferred_first_tick = False

    if winner == "situation":
        _tick_situation(world, npc, rt)
    else:
        tree = npc.trees.get(winner)
        if tree is not None:
            result = tree.tick(npc.ctx, rt)
            if result is not bt.RUNNING:
                tree.reset(npc.ctx, rt,
                           mode="complete" if result is bt.SUCCESS else "halt")
                if winner == "combat":
                    npc.combat_flag = False
                elif winner == "quest":
                    npc.quest_flag = False
    return report


def _halt_subbrain(world, npc: NPC, name: str, rt) -> None:
    if name == "situation":
        _drop_situation(world, npc, rt, reason="halted")
        return
    tree = npc.trees.get(name)
    if tree is not None and not tree.is_fresh_deep():
        tree.reset(npc.ctx, rt, mode="halt")


def _tick_situation(world, npc: NPC, rt) -> None:
    grant = npc.situation_grant
    if grant is None:
        return
    descriptor, subtree, ctx = grant
    if not npc.situation_started:
        npc.situation_started = True
        world.notify_situation_status(npc.id, descriptor.source_id, "started")
    result = subtree.tick(ctx, rt)
    if result is bt.RUNNING:
        return
    npc.situation_grant = None
    npc.situation_started = False
    world.release_behavior(npc.id, descriptor, "completed", result, rt)
    status = "finished" if result is bt.SUCCESS else "dropped"
    world.notify_situation_status(npc.id, descriptor.source_id, status)
    if status == "dropped":
        world.broadcast_situation_abort(descriptor.source_id, npc.id)


def _drop_situation(world, npc: NPC, rt, reason: str) -> None:
    grant = npc.situation_grant
    if grant is None:
        return
    descriptor, _subtree, _ctx = grant
    started = npc.situation_started
    npc.situation_grant = None
    npc.situation_started = False
    world.release_behavior(npc.id, descriptor, reason, None, rt)
    world.notify_situation_status(npc.id, descriptor.source_id, "dropped")
    if started or reason == "halted":
        world.broadcast_situation_abort(descriptor.source_id, npc.id)


def _drain_control_inboxes(world, npc: NPC, rt) -> None:
    for msg in world.board.drain(npc.id, npc.id, "situation-ctl"):
        op = msg.payload.get("op")
        instance_id = msg.payload.get("instance")
        grant = npc.situation_grant
        if op == "abort" and grant is not None and grant[0].source_id == instance_id:
            descriptor, _, _ = grant
            started = npc.situation_started
            npc.situation_grant = None
            npc.situation_started = False
            world.release_behavior(npc.id, descriptor, "halted", None, rt)
            world.notify_situation_status(npc.id, instance_id, "dropped")
            world.emit(npc.id, "situation-aborted", instance=instance_id,
                       started="y" if started else "n")
            if npc.active_subbrain == "situation":
                npc.active_subbrain = "ambient"
    # declared bind inboxes surface as context variables
    for schema in world.board.bound_schemas(npc.id):
        for msg in world.board.drain(npc.id, npc.id, schema):
            for key, value in msg.payload.items():
                npc.ctx.variables[f"{schema}-{key}"] = value


def _apply_policy_drops(world, npc: NPC, rt) -> None:
    """Release on-area-exit grants whose source area no longer contains the
    NPC. Request nodes re-resolve (and fail) on their next tick."""
    chain_ids = {node.instance_id for node in world.area_tree.chain_of(npc.position)}
    for descriptor in list(reversed(npc.stack.entries)):
        if descriptor.drop_policy != "on-area-exit":
            continue
        if descriptor.source_area in chain_ids:
            continue
        node = _find_request_node(npc, descriptor)
        if node is not None:
            node.force_drop(descriptor.ctx, rt, "dropped-by-policy")
        else:
            world.release_behavior(npc.id, descriptor, "dropped-by-policy", None, rt)


def _walk_live(node):
    """Walk a tree including subtrees attached at runtime (grants, traversals)."""
    yield node
    for child in node.children:
        yield from _walk_live(child)
    grant = getattr(node, "_grant", None)
    if grant is not None:
        yield from _walk_live(grant[1])
    traversal = getattr(node, "_traversal", None)
    if traversal is not None:
        yield from _walk_live(traversal[1])


def _find_request_node(npc: NPC, descriptor):
    roots = [tree for tree in npc.trees.values() if tree is not None]
    if npc.situation_grant is not None:
        roots.append(npc.situation_grant[1])
    for root in roots:
        for node in _walk_live(root):
            grant = getattr(node, "_grant", None)
            if grant is not None and grant[0] is descriptor:
                return node
    return None
