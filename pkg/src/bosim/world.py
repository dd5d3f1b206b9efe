"""The deterministic tick engine.

Fixed phase order per tick: (1) deliver due messages, (2) update NPCs in
ascending id order, (3) update due smart-entity instances in ascending id
order, (4) run the situation manager and quest driver when due, (5) advance
the action queue, apply completed effects, and fire area enter/exit events
from position deltas, (6) seal the tick in the trace, (7) advance the clock.
Identical scenario and seed give a byte-identical trace.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from random import Random

from . import areas, bt, entities, injection, nav, npc as npcmod
from .errors import HardError, OwnershipError, PoolContractError
from .messaging import MessageBoard
from .registry import ACTIONS, PREDICATES
from .trace import NullSink, RunStats, fnv1a64


@dataclass
class Entity:
    id: str
    kind_tag: str
    position: tuple | None
    tags: tuple = ()


@dataclass
class ActiveAction:
    handle: int
    owner: str
    name: str
    params: dict
    remaining: int
    apply: object


@dataclass
class UpdateSchedule:
    npc_period: int = 1
    area_period: int = 1
    sobject_period: int = 4
    base_budget: int = 2000
    boost_threshold: int = 8
    boost_multiplier: int = 4

    def period_for(self, instance) -> int:
        if instance.template.brain_period:
            return instance.template.brain_period
        return self.area_period if instance.template.kind == "s-area" else self.sobject_period

    def node_budget(self, world, owner: str) -> int:
        budget = self.base_budget
        if world.board.owner_backlog(owner) > self.boost_threshold:
            budget *= self.boost_multiplier
        return budget


@dataclass
class Preemption:
    tick: int
    npc: str
    duration: int = 5


class World:
    """All run state plus the facade behavior-tree nodes talk to."""

    def __init__(self, width: int, height: int, seed: int = 0, sink=None,
                 day_length: int | None = None):
        self.grid = nav.Grid(width, height)
        self.edges: list[nav.NavEdge] = []
        self.entities: dict[str, Entity] = {}
        self.instances: dict[str, entities.SEInstance] = {}
        self.npcs: dict[str, npcmod.NPC] = {}
        self.area_tree = areas.AreaTree(width, height)
        self.area_anchors: dict[str, tuple] = {}
        self.board = MessageBoard()
        self.schedule = UpdateSchedule()
        self.manager = None
        self.manager_period = 10
        self.tick = 0
        self.seed = seed
        self.day_length = day_length
        self.sink = sink if sink is not None else NullSink()
        self.stats = RunStats()
        self.diagnostics: list[str] = []
        self.current_owner: str | None = None
        self.quest_log: list[dict] = []
        self.preemptions: list[Preemption] = []
        self._rng_streams: dict[str, Random] = {}
        self._action_queue: dict[int, ActiveAction] = {}
        self._next_handle = 1
        self._moved: set[str] = set()
        self._staged_traversals: dict[str, tuple] = {}
        self._tree_builders: dict[str, object] = {}
        self._tree_pool: dict[str, list] = {}
        self._pool_in_use = 0
        self.pool_stats: dict[str, tuple] = {}  # name -> (in use, high water)
        self.load_warnings: list[str] = []
        self.collect_timing = False
        self.ai_samples: list[float] = []
        self._emit_active = self.trace_on
        self.board.define_schema("situation-ctl")
        self.board.define_schema("situation-status")
        self.board.register_inbox("situation-manager", "situation-status")
        self.board.register_inbox("quest-driver", "quest-steps")

    # -- tracing / rng / clock ---------------------------------------------------

    @property
    def trace_on(self) -> bool:
        return not isinstance(self.sink, NullSink) or bool(self.sink.observers)

    def emit(self, owner: str, kind: str, **fields) -> None:
        if self._emit_active:
            self.sink.emit(self.tick, owner, kind, **fields)

    def refresh_emit_gate(self) -> None:
        self._emit_active = self.trace_on

    def rng_for(self, owner: str) -> Random:
        stream = self._rng_streams.get(owner)
        if stream is None:
            stream = Random((self.seed ^ fnv1a64(owner.encode("ascii"))) & 0xFFFFFFFFFFFFFFFF)
            self._rng_streams[owner] = stream
        return stream

    def clock_in_window(self, start: int, end: int) -> bool:
        t = self.tick % self.day_length if self.day_length else self.tick
        return start <= t < end

    # -- tree pooling -------------------------------------------------------------

    def register_tree(self, name: str, builder) -> None:
        self._tree_builders[name] = builder

    def pool_acquire(self, tree_name: str) -> bt.Node:
        pool = self._tree_pool.get(tree_name)
        if pool:
            tree = pool.pop()
        else:
            tree = self._tree_builders[tree_name]()
            tree.assign_ids()
        in_use, high = self.pool_stats.get(tree_name, (0, 0))
        in_use += 1
        self.pool_stats[tree_name] = (in_use, max(high, in_use))
        self._pool_in_use += 1
        self.stats.pool_high_water = max(self.stats.pool_high_water, self._pool_in_use)
        return tree

    def pool_release(self, tree_name: str, tree: bt.Node) -> None:
        if not tree.is_fresh_deep():
            raise PoolContractError(
                f"tree {tree_name} released while not fresh", tick=self.tick)
        in_use, high = self.pool_stats.get(tree_name, (1, 1))
        self.pool_stats[tree_name] = (in_use - 1, high)
        self._pool_in_use -= 1
        self._tree_pool.setdefault(tree_name, []).append(tree)

    # -- symbolic actions ----------------------------------------------------------

    def issue_action(self, owner: str, name: str, params: dict, duration,
                     handoff: int, ctx) -> int | None:
        adef = ACTIONS[name]
        dur = adef.duration if duration is None else duration
        if dur == 0:
            if adef.control is not None:
                adef.control(self, owner, params, ctx)
            self.emit(owner, "action-instant", action=name)
            return None
        handle = self._next_handle
        self._next_handle += 1
        self._action_queue[handle] = ActiveAction(
            handle, owner, name, params, dur, adef.apply)
        self.emit(owner, "action-issued", action=name, dur=dur)
        return handle

    def apply_action_now(self, owner: str, name: str, params: dict, ctx) -> None:
        adef = ACTIONS[name]
        if adef.control is not None:
            adef.control(self, owner, params, ctx)
        elif adef.apply is not None:
            adef.apply(self, owner, params)
        self.emit(owner, "action-instant", action=name, cleanup="y")

    def action_remaining(self, handle: int) -> int | None:
        action = self._action_queue.get(handle)
        return None if action is None else action.remaining

    def cancel_action(self, handle: int) -> bool:
        action = self._action_queue.pop(handle, None)
        if action is None:
            return False
        self.emit(action.owner, "action-cancelled", action=action.name)
        return True

    def move_npc(self, owner: str, to: tuple) -> None:
        self.npcs[owner].position = to
        self._moved.add(owner)

    # -- predicates / messaging ------------------------------------------------------

    def eval_predicate(self, name: str, args, ctx, rt) -> bool:
        return PREDICATES[name](self, rt.owner, ctx, args)

    def send_to_owner(self, sender: str, target: str, schema: str, payload: dict,
                      kind: str) -> str:
        status = self.board.send(sender, target, schema, payload, kind, self.tick)
        self.stats.messages += 1
        self.emit(sender, "msg-sent", inbox=f"{target}/{schema}", schema=schema,
                  mkind=kind, status=status)
        return status

    def try_drain_one(self, owner: str, schema: str):
        msgs = self.board.drain(owner, owner, schema, max_count=1)
        return msgs[0] if msgs else None

    # -- gating / subscription ---------------------------------------------------------

    def set_gating(self, owner: str, behavior: str, enabled=None, max_holders="keep"):
        if self.current_owner != owner:
            raise OwnershipError(
                f"{self.current_owner} set gating on {owner}", tick=self.tick)
        instance = self.instances[owner]
        instance.set_gating(behavior, enabled, max_holders)
        gate = instance.gating[behavior]
        self.emit(owner, "gating-changed", behavior=behavior,
                  enabled="y" if gate.enabled else "n",
                  max=gate.max_holders if gate.max_holders is not None else "inf")

    def adjust_subscription(self, owner: str, delta: int) -> None:
        npc = self.npcs[owner]
        npc.subscription_count = max(0, npc.subscription_count + delta)
        self.emit(owner, "subscription", count=npc.subscription_count)

    # -- behavior requests ----------------------------------------------------------------

    def request_behavior(self, requester: str, target, name, node, general: bool,
                         private: bool, ctx, wrapper: bool = False):
        npc = self.npcs[requester]
        self.emit(requester, "behavior-requested",
                  target=target or ("general" if general else "area"),
                  behavior=name or "*")
        resolved = self._resolve_request(npc, target, name, general, private,
                                         wrapper, ctx)
        if isinstance(resolved, str):
            self.emit(requester, "behavior-refused", reason=resolved,
                      behavior=name or "*")
            return None
        instance, behavior_name, spec, extra = resolved
        return injection.grant(self, requester, instance, behavior_name, spec, ctx,
                               extra_bindings=extra)

    def _resolve_request(self, npc, target, name, general: bool, private: bool,
                         wrapper: bool, ctx):
        if wrapper:
            try:
                move_target = self.resolve_position(ctx.resolve(bt.Var("move-target")))
            except (bt.UnboundVariable, KeyError):
                return "no-behavior-available"
            for node_ in self.area_tree.chain_of(npc.position):
                instance = self.instances.get(node_.instance_id)
                if instance is None or "__move" not in instance.template.behaviors:
                    continue
                if not node_.contains(move_target):
                    continue  # target outside this area: ask the parent
                outcome = instance.check_grant("__move")
                if isinstance(outcome, tuple):
                    return instance, outcome[0], outcome[1], None
            return "no-behavior-available"
        if private:
            descriptor = npc.stack.innermost_area_grant(self.instances)
            if descriptor is None:
                return "no-behavior-available"
            pname = ctx.variables.get("private-name")
            if not pname:
                return "no-such-behavior"
            instance = self.instances.get(descriptor.source_id)
            outcome = instance.check_grant(pname, allow_private=True)
            if isinstance(outcome, str):
                return outcome
            return instance, outcome[0], outcome[1], None
        if general:
            start = self.area_tree.innermost(npc.position)
            outcome = areas.resolve_general(self, start, name, self.rng_for(npc.id))
            if isinstance(outcome, str):
                return outcome
            if outcome[0] == "direct":
                _, instance, behavior, spec = outcome
                return instance, behavior, spec, None
            _, instance, behavior, spec, bindings = outcome
            return instance, behavior, spec, bindings
        if target is not None:
            instance = self.instances.get(target)
            if instance is None:
                return "no-such-behavior"
            outcome = instance.check_grant(name)
            if isinstance(outcome, str):
                return outcome
            return instance, outcome[0], outcome[1], None
        start = self.area_tree.innermost(npc.position)
        outcome = areas.resolve_named(self, start, name)
        if isinstance(outcome, str):
            return outcome
        return outcome[0], outcome[1], outcome[2], None

    def release_behavior(self, owner: str, descriptor, reason: str, result, rt,
                         report=None):
        injection.release(self, owner, descriptor, reason, result, rt, report)

    def on_situation_release(self, descriptor, npc_id: str, reason: str, result: str):
        self.emit(npc_id, "situation-released", instance=descriptor.source_id,
                  reason=reason, result=result or "-")

    # -- situations --------------------------------------------------------------------------

    def arm_situation_slot(self, npc_id: str, instance, role) -> bool:
        npc = self.npcs[npc_id]
        if npc.situation_grant is not None:
            self.emit(npc_id, "injection-rejected", reason="slot-busy")
            return False
        subtree = self.pool_acquire(role.tree)
        bindings = {"situation": instance.id, "my-role": role.name}
        for rname, rnpc in sorted(instance.assignment.items()):
            bindings[f"role-{rname}"] = rnpc
        descriptor = injection.BehaviorDescriptor(
            source_id=instance.id, behavior_name=role.name, subtree=subtree,
            lock_context=instance.lock_context, drop_policy="on-abort-signal",
            grant_tick=self.tick, tree_name=role.tree, bindings=bindings)
        child_ctx = npc.ctx.child_frame(instance.lock_context, None)
        descriptor.ctx = child_ctx
        for key, value in bindings.items():
            child_ctx.variables[key] = value
        npc.situation_grant = (descriptor, subtree, child_ctx)
        npc.situation_started = False
        self.stats.injections += 1
        self.emit(npc_id, "situation-armed", instance=instance.id, role=role.name)
        return True

    def notify_situation_status(self, npc_id: str, instance_id: str, status: str):
        self.board.send(npc_id, "situation-manager", "situation-status",
                        {"instance": instance_id, "npc": npc_id, "status": status},
                        "provide-data", self.tick)

    def broadcast_situation_abort(self, instance_id: str, initiating: str) -> None:
        if self.manager is not None:
            self.manager.abort(self, instance_id, initiating)

    # -- navigation --------------------------------------------------------------------------

    def enabled_edges(self) -> list:
        out = []
        for edge in self.edges:
            instance = self.instances.get(edge.instance_id)
            if instance is None:
                out.append(edge)
                continue
            behavior = instance.template.traversal
            if behavior is None or instance.gating[behavior].enabled:
                out.append(edge)
        return out

    def plan_path(self, start: tuple, goal: tuple):
        return nav.plan_path(self.grid, self.enabled_edges(), start, goal)

    def resolve_position(self, target) -> tuple:
        if isinstance(target, (tuple, list)):
            return tuple(target)
        if target in self.npcs:
            return self.npcs[target].position
        if target in self.area_anchors:
            return self.area_anchors[target]
        instance = self.instances.get(target)
        if instance is not None:
            entity = self.entities.get(instance.entity_id)
            if entity is not None and entity.position is not None:
                return entity.position
        entity = self.entities.get(target)
        if entity is not None and entity.position is not None:
            return entity.position
        raise bt.UnboundVariable(str(target))

    def owner_position(self, owner: str) -> tuple:
        return self.npcs[owner].position

    def begin_traversal(self, npc_id: str, edge: nav.NavEdge, node, ctx):
        instance = self.instances.get(edge.instance_id)
        npc = self.npcs[npc_id]
        if instance is None or instance.brain is None:
            if instance is None:
                raise HardError(f"edge {edge.instance_id} has no instance",
                                tick=self.tick, owner=npc_id)
            return self._grant_traversal(npc_id, instance, edge, ctx, passable=True)
        has_key = edge.instance_id in npc.attributes.get("keys", [])
        self.board.send(npc_id, instance.id, "door-arrivals",
                        {"op": "arrive", "edge": edge.instance_id,
                         "has_key": has_key,
                         "player": bool(npc.attributes.get("player"))},
                        "request-change", self.tick)
        self.emit(npc_id, "door-wait", door=instance.id)
        return None

    def _grant_traversal(self, npc_id: str, instance, edge: nav.NavEdge, ctx,
                         passable: bool):
        behavior = instance.template.traversal
        spec = instance.template.behaviors[behavior]
        outcome = instance.check_grant(behavior)
        if isinstance(outcome, str):
            return None
        npc = self.npcs[npc_id]
        far = edge.other_side(npc.position)
        grant = injection.grant(self, npc_id, instance, behavior, spec, ctx)
        descriptor, _subtree, child_ctx = grant
        child_ctx.variables["nav-exit"] = far
        child_ctx.variables["nav-duration"] = edge.duration
        child_ctx.variables["door-passable"] = passable
        return grant

    def stage_traversal(self, door_owner: str, npc_id: str, edge_id: str,
                        passable: bool) -> bool:
        npc = self.npcs.get(npc_id)
        if npc is None:
            return False
        self._staged_traversals[npc_id] = (edge_id, passable)
        return True

    def take_staged_injection(self, npc_id: str, node):
        staged = self._staged_traversals.get(npc_id)
        if staged is None:
            return None
        edge_id, passable = staged
        edge = node._waiting_edge
        if edge is None or edge.instance_id != edge_id:
            return None
        del self._staged_traversals[npc_id]
        instance = self.instances[edge_id]
        return self._grant_traversal(npc_id, instance, edge,
                                     node_ctx_of(self.npcs[npc_id], node), passable)

    def leave_edge_queue(self, npc_id: str, edge: nav.NavEdge) -> None:
        self._staged_traversals.pop(npc_id, None)
        instance = self.instances.get(edge.instance_id)
        if instance is not None and instance.brain is not None:
            self.board.send(npc_id, instance.id, "door-arrivals",
                            {"op": "leave", "edge": edge.instance_id},
                            "request-change", self.tick)

    # -- scripted preemption -----------------------------------------------------------

    def schedule_preemption(self, tick: int, npc_id: str, duration: int = 5) -> None:
        self.preemptions.append(Preemption(tick, npc_id, duration))
        self.preemptions.sort(key=lambda p: (p.tick, p.npc))

    # -- the tick ----------------------------------------------------------------------

    def step(self) -> dict:
        self._emit_active = self.trace_on
        if self.collect_timing:
            from time import perf_counter
            t0 = perf_counter()
            report = self._step_ai()
            self.ai_samples.append(perf_counter() - t0)
        else:
            report = self._step_ai()
        self._advance_actions()
        self._area_events()
        self.sink.close_tick()
        self.tick += 1
        return report

    def _step_ai(self) -> dict:
        """Phases 1-4: messages, NPCs, smart entities, manager/quest driver."""
        report = {"tick": self.tick, "diagnostics": []}
        self.board.deliver_due(self.tick)

        while self.preemptions and self.preemptions[0].tick <= self.tick:
            event = self.preemptions.pop(0)
            target = self.npcs.get(event.npc)
            if target is not None:
                target.combat_flag = True
                target.ctx.variables["combat-duration"] = event.duration
                self.emit(event.npc, "combat-flag", dur=event.duration)

        for npc_id in sorted(self.npcs):
            self.current_owner = npc_id
            ticked = npcmod.tick_npc(self, self.npcs[npc_id])
            report["diagnostics"].extend(ticked["diagnostics"])
        self.current_owner = None

        for instance_id in sorted(self.instances):
            instance = self.instances[instance_id]
            if instance.wants_update(self.tick, self.schedule.period_for(instance)):
                self.current_owner = instance_id
                entities.update_instance(self, instance)
        self.current_owner = None

        if self.manager is not None and self.tick % self.manager_period == 0:
            self.current_owner = self.manager.OWNER
            self.manager.update(self)
            self.current_owner = None
        for msg in self.board.drain("quest-driver", "quest-driver", "quest-steps"):
            record = dict(msg.payload)
            record["tick"] = self.tick
            self.quest_log.append(record)
            self.emit("quest-driver", "quest-step-received",
                      quest=record.get("quest", "-"), result=record.get("result", "-"))
        return report

    def run(self, ticks: int) -> None:
        for _ in range(ticks):
            self.step()

    def _advance_actions(self) -> None:
        completed = []
        for handle in list(self._action_queue):
            action = self._action_queue[handle]
            action.remaining -= 1
            if action.remaining <= 0:
                completed.append(action)
                del self._action_queue[handle]
        for action in completed:
            if action.apply is not None:
                action.apply(self, action.owner, action.params)
            self.emit(action.owner, "action-completed", action=action.name)

    def _area_events(self) -> None:
        for npc_id in sorted(self._moved):
            npc = self.npcs.get(npc_id)
            if npc is None:
                continue
            new_chain = tuple(node.instance_id
                              for node in self.area_tree.chain_of(npc.position))
            old_chain = npc.area_chain
            if new_chain == old_chain:
                continue
            for area_id in old_chain:
                if area_id not in new_chain:
                    self._fire_area_event(area_id, "on-exit", npc_id)
            for area_id in new_chain:
                if area_id not in old_chain:
                    self._fire_area_event(area_id, "on-enter", npc_id)
            npc.area_chain = new_chain
            for descriptor in npc.stack.entries:
                if descriptor.drop_policy == "on-area-exit" and \
                        descriptor.source_area not in new_chain:
                    npc.pending_policy_drops = True
        self._moved.clear()

    def _fire_area_event(self, area_id: str, kind: str, npc_id: str) -> None:
        self.emit(npc_id, "area-entered" if kind == "on-enter" else "area-exited",
                  area=area_id)
        instance = self.instances.get(area_id)
        if instance is not None:
            instance.enqueue_event(entities.SEEvent(kind, npc=npc_id, tick=self.tick))

    def start(self) -> None:
        """Initial bookkeeping before the first step: area chains and the
        creation-time enter events for NPCs already inside."""
        for npc_id in sorted(self.npcs):
            npc = self.npcs[npc_id]
            chain = tuple(node.instance_id
                          for node in self.area_tree.chain_of(npc.position))
            npc.area_chain = chain
            for area_id in chain:
                self._fire_area_event(area_id, "on-enter", npc_id)


def node_ctx_of(npc, node):
    """Context for a traversal grant under a waiting move node: the move's
    owning frame. The injected frame rebinds lock context and this-sa anyway;
    the NPC context is the right variable scope."""
    return npc.ctx
