"""Fixed registry of predicates and symbolic actions.

The scenario language names these; it never defines them. World actions have
a duration in ticks and apply their effect at completion (phase 5 of the
step); zero-duration control actions run inline during their owner's update
and may only touch owner-local state (instance state, own messages, context
variables). Brains for the stock scenarios (pub, door, bench, fire, quest)
live here as control actions.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ActionDef:
    name: str
    duration: int = 1
    apply: object = None      # fn(world, owner, params) effect at completion
    control: object = None    # fn(world, owner, params, ctx) inline step


# -- world effects -------------------------------------------------------------

def _set_posture(value):
    def effect(world, owner, params):
        world.npcs[owner].attributes["posture"] = value
    return effect


def _walk_step(world, owner, params):
    world.move_npc(owner, tuple(params["to"]))


def _pass_edge(world, owner, params):
    world.move_npc(owner, tuple(params["to"]))


def _drink(world, owner, params):
    attrs = world.npcs[owner].attributes
    attrs["drunkenness"] = attrs.get("drunkenness", 0) + 1


def _pick_up(world, owner, params):
    attrs = world.npcs[owner].attributes
    items = list(attrs.get("keys", []))
    items.append(params["item"])
    attrs["keys"] = items


def _pick_up_torch(world, owner, params):
    attrs = world.npcs[owner].attributes
    items = list(attrs.get("items", []))
    items.append("torch")
    attrs["items"] = items


# -- control steps (duration 0) --------------------------------------------------

def _set_state(world, owner, params, ctx):
    instance = world.instances[owner]
    instance.state[params["key"]] = params.get("value")


def _note(world, owner, params, ctx):
    world.emit(owner, "note", msg=str(params.get("msg", "")).replace(" ", "_"))


def _pick_wander_target(world, owner, params, ctx):
    """Pick a nearby passable cell from the owner's RNG stream."""
    rng = world.rng_for(owner)
    x, y = world.npcs[owner].position
    span = int(params.get("span", 3))
    for _ in range(6):
        cell = (x + rng.randint(-span, span), y + rng.randint(-span, span))
        if world.grid.passable(cell):
            ctx.variables["wander-target"] = cell
            return
    ctx.variables["wander-target"] = (x, y)


def _assign_seat(world, owner, params, ctx):
    """Pub handler step: give the adopting guest a free linked chair."""
    pub = world.instances[owner]
    npc = ctx.variables.get("event-npc", "")
    seats = pub.env.get("seat", ())
    taken = pub.state.setdefault("seat-of", {})
    if npc in taken:
        return
    for chair_id in seats:
        if chair_id in taken.values():
            continue
        chair = world.instances.get(chair_id)
        if chair is None:
            continue
        taken[npc] = chair_id
        world.board.send(owner, npc, "pub-guest",
                         {"chair": chair_id}, "provide-data", world.tick)
        return


def _unassign_seat(world, owner, params, ctx):
    pub = world.instances[owner]
    npc = ctx.variables.get("event-npc", "")
    pub.state.setdefault("seat-of", {}).pop(npc, None)


def _pub_coordinate(world, owner, params, ctx):
    """Pub brain step: route orders to the innkeeper, prepared drinks to the
    waitress, deliveries back to the ordering guest."""
    pub = world.instances[owner]
    state = pub.state
    state.setdefault("orders", {})
    state.setdefault("next-order", 1)
    for msg in world.board.drain(owner, owner, "pub-orders"):
        order_id = f"order-{state['next-order']}"
        state["next-order"] += 1
        state["orders"][order_id] = {"guest": msg.sender,
                                     "item": msg.payload.get("item", "beer"),
                                     "status": "placed"}
        world.emit(owner, "order-placed", order=order_id, guest=msg.sender,
                   item=msg.payload.get("item", "beer"))
        innkeepers = pub.query_holders("innkeeper")
        if innkeepers:
            world.board.send(owner, innkeepers[0], "innkeeper-tasks",
                             {"order": order_id}, "request-change", world.tick)
        else:
            state["orders"][order_id]["status"] = "stalled"
    for msg in world.board.drain(owner, owner, "pub-prepared"):
        order_id = msg.payload.get("order", "")
        order = state["orders"].get(order_id)
        if order is None:
            continue
        order["status"] = "prepared"
        waitresses = pub.query_holders("waitress")
        if waitresses:
            world.board.send(owner, waitresses[0], "waitress-tasks",
                             {"order": order_id, "guest": order["guest"]},
                             "request-change", world.tick)
    for msg in world.board.drain(owner, owner, "pub-delivered"):
        order_id = msg.payload.get("order", "")
        order = state["orders"].get(order_id)
        if order is None:
            continue
        order["status"] = "delivered"
        world.emit(owner, "order-delivered", order=order_id, guest=order["guest"])
        world.board.send(owner, order["guest"], "drink-delivery",
                         {"order": order_id}, "provide-data", world.tick)
    # retry stalled orders once an innkeeper is back
    innkeepers = pub.query_holders("innkeeper")
    if innkeepers:
        for order_id in sorted(state["orders"]):
            order = state["orders"][order_id]
            if order["status"] == "stalled":
                order["status"] = "placed"
                world.board.send(owner, innkeepers[0], "innkeeper-tasks",
                                 {"order": order_id}, "request-change", world.tick)


def _door_manage_queue(world, owner, params, ctx):
    """Door brain step: FIFO admissions; a locked door admits a key holder
    first (and unlocks); waiters past the timeout get a doomed traversal so
    their move can fail over."""
    door = world.instances[owner]
    state = door.state
    queue = state.setdefault("queue", [])
    for msg in world.board.drain(owner, owner, "door-arrivals"):
        op = msg.payload.get("op", "arrive")
        if op == "leave":
            state["queue"] = queue = [q for q in queue if q["npc"] != msg.sender]
            continue
        if any(q["npc"] == msg.sender for q in queue):
            continue
        queue.append({"npc": msg.sender, "has_key": bool(msg.payload.get("has_key")),
                      "edge": msg.payload.get("edge", ""), "since": world.tick})
    admitted = state.get("admitted")
    if admitted is not None:
        return  # one at a time; cleared by the on-drop handler
    if not queue:
        return
    locked = bool(state.get("locked"))
    timeout = state.get("wait-timeout", 200)
    pick = None
    if locked:
        for entry in queue:
            if entry["has_key"]:
                pick = entry
                state["locked"] = False
                world.emit(owner, "door-unlocked", by=entry["npc"])
                break
        if pick is None:
            head = queue[0]
            if world.tick - head["since"] >= timeout:
                pick = head
                pick["doomed"] = True
            else:
                return
    else:
        pick = queue[0]
    queue.remove(pick)
    passable = not pick.get("doomed")
    world.emit(owner, "door-admitted", npc=pick["npc"],
               passable="y" if passable else "n")
    if world.stage_traversal(owner, pick["npc"], pick["edge"], passable):
        state["admitted"] = pick["npc"]


def _door_note_drop(world, owner, params, ctx):
    world.instances[owner].state["admitted"] = None


def _bench_coordinate(world, owner, params, ctx):
    """Bench brain step: a middle sitter asking to leave makes the blocking
    end sitter yield its seat first; grants freeze until the leaver is gone,
    then the end sitter takes its reserved seat back."""
    bench = world.instances[owner]
    state = bench.state
    gate = bench.gating["sit"]
    for msg in world.board.drain(owner, owner, "bench-ctl"):
        if msg.payload.get("op") != "leave-req":
            continue
        slot = gate.slot_of.get(msg.sender)
        if slot is None:
            continue
        blocker = None
        if slot in (1, 2) and state.get("pending-leave") is None:
            end = 0 if slot == 1 else 3
            for npc, s in gate.slot_of.items():
                if s == end:
                    blocker = (npc, end)
                    break
        if blocker is None:
            world.board.send(owner, msg.sender, "bench-seat",
                             {"cmd": "may-leave"}, "request-change", world.tick)
        else:
            state["pending-leave"] = {"leaver": msg.sender,
                                      "blocker": blocker[0],
                                      "blocker-slot": blocker[1],
                                      "phase": "clearing"}
            world.board.send(owner, blocker[0], "bench-seat",
                             {"cmd": "make-way"}, "request-change", world.tick)


def _bench_note_drop(world, owner, params, ctx):
    """On-drop handler step: the end sitter's drop clears the way (freeze
    grants, wave the leaver out); the leaver's drop lifts the freeze and
    reserves the end seat for its returning owner."""
    bench = world.instances[owner]
    state = bench.state
    npc = ctx.variables.get("event-npc", "")
    pending = state.get("pending-leave")
    if not pending:
        return
    gate = bench.gating["sit"]
    if pending["phase"] == "clearing" and npc == pending["blocker"]:
        gate.enabled = False
        pending["phase"] = "leaving"
        world.board.send(owner, pending["leaver"], "bench-seat",
                         {"cmd": "may-leave"}, "request-change", world.tick)
    elif pending["phase"] == "leaving" and npc == pending["leaver"]:
        gate.enabled = True
        gate.reserved[pending["blocker"]] = pending["blocker-slot"]
        state["pending-leave"] = None
    elif pending["phase"] == "clearing" and npc == pending["leaver"]:
        # leaver was yanked out (preemption) before the way was clear
        state["pending-leave"] = None


def _fire_tend(world, owner, params, ctx):
    """Fire brain step: burn wood down, absorb deliveries, gate feeding on
    the remaining stock."""
    fire = world.instances[owner]
    state = fire.state
    state.setdefault("wood", 0)
    for msg in world.board.drain(owner, owner, "fire-ctl"):
        op = msg.payload.get("op")
        if op == "fed":
            state["wood"] = max(0, state["wood"] - 1)
            world.emit(owner, "fire-fed", wood=state["wood"])
        elif op == "wood-delivered":
            state["wood"] += int(msg.payload.get("count", 1))
            world.emit(owner, "wood-delivered", wood=state["wood"])
    fire.set_gating("feed-fire", enabled=state["wood"] > 0)


def _house_keeper(world, owner, params, ctx):
    """House brain step: when feeding failed for lack of wood, swap the
    offered behavior from keep-fire to find-wood until the wood is back."""
    house = world.instances[owner]
    need = bool(house.state.get("need-wood"))
    house.set_gating("find-wood", enabled=need)
    house.set_gating("keep-fire", enabled=not need)


def _house_note_drop(world, owner, params, ctx):
    house = world.instances[owner]
    behavior = ctx.variables.get("event-behavior", "")
    result = ctx.variables.get("event-result", "")
    if behavior == "keep-fire" and result == "failure":
        house.state["need-wood"] = True
        world.emit(owner, "house-needs-wood")
    elif behavior == "find-wood":
        house.state["need-wood"] = False


def _quest_drive(world, owner, params, ctx):
    """Quest brain step: at the configured tick, swap one day-cycle window of
    the target NPC for a behavior requested from this quest object."""
    quest = world.instances[owner]
    state = quest.state
    if state.get("phase", "idle") == "idle" and world.tick >= state.get("start-tick", 0):
        target = quest.env.get("target-npc", ())
        if target:
            world.board.send(owner, target[0], "daycycle-ctl",
                             {"override": owner, "behavior": state.get(
                                 "quest-behavior", "search-keys")},
                             "request-change", world.tick)
            state["phase"] = "running"
            world.emit(owner, "daycycle-swapped", npc=target[0])


def _quest_note_drop(world, owner, params, ctx):
    """On-drop handler step: report step completion and restore the day cycle."""
    quest = world.instances[owner]
    state = quest.state
    result = ctx.variables.get("event-result", "")
    npc = ctx.variables.get("event-npc", "")
    if state.get("phase") != "running":
        return
    state["phase"] = "done" if result == "success" else "idle"
    world.board.send(owner, npc, "daycycle-ctl",
                     {"override": "", "behavior": ""}, "request-change", world.tick)
    world.board.send(owner, "quest-driver", "quest-steps",
                     {"quest": owner, "result": result or "failure"},
                     "provide-data", world.tick)
    world.emit(owner, "quest-step-reported", result=result or "failure")


ACTIONS: dict[str, ActionDef] = {}


def _register(*defs: ActionDef) -> None:
    for d in defs:
        ACTIONS[d.name] = d


_register(
    ActionDef("idle", 4),
    ActionDef("stop", 1),
    ActionDef("walk-step", 1, apply=_walk_step),
    ActionDef("pass-door", 2, apply=_pass_edge),
    ActionDef("sit-down", 2, apply=_set_posture("seated")),
    ActionDef("stand-up", 1, apply=_set_posture("standing")),
    ActionDef("step-aside", 1, apply=_set_posture("standing")),
    ActionDef("sit-idle", 4),
    ActionDef("drink", 5, apply=_drink),
    ActionDef("raise-mug", 2),
    ActionDef("pour-drink", 3),
    ActionDef("prepare-drink", 3),
    ActionDef("draw-beer", 2),
    ActionDef("deliver-drink", 2),
    ActionDef("chat-gesture", 3),
    ActionDef("wander-pause", 2),
    ActionDef("combat-drill", 5),
    ActionDef("feed-fire", 3),
    ActionDef("take-wood", 2),
    ActionDef("load-wood", 2),
    ActionDef("pick-up-keys", 2, apply=_pick_up),
    ActionDef("pick-up-torch", 1, apply=_pick_up_torch),
    ActionDef("work-motion", 6),
    ActionDef("pray-motion", 6),
    # control steps
    ActionDef("set-state", 0, control=_set_state),
    ActionDef("note", 0, control=_note),
    ActionDef("pick-wander-target", 0, control=_pick_wander_target),
    ActionDef("assign-seat", 0, control=_assign_seat),
    ActionDef("unassign-seat", 0, control=_unassign_seat),
    ActionDef("pub-coordinate", 0, control=_pub_coordinate),
    ActionDef("door-manage-queue", 0, control=_door_manage_queue),
    ActionDef("door-note-drop", 0, control=_door_note_drop),
    ActionDef("bench-coordinate", 0, control=_bench_coordinate),
    ActionDef("bench-note-drop", 0, control=_bench_note_drop),
    ActionDef("fire-tend", 0, control=_fire_tend),
    ActionDef("house-keeper", 0, control=_house_keeper),
    ActionDef("house-note-drop", 0, control=_house_note_drop),
    ActionDef("quest-drive", 0, control=_quest_drive),
    ActionDef("quest-note-drop", 0, control=_quest_note_drop),
)


# -- predicates ------------------------------------------------------------------

def _pred_always(world, owner, ctx, args):
    return True


def _pred_never(world, owner, ctx, args):
    return False


def _pred_eq(world, owner, ctx, args):
    return args[0] == args[1]


def _pred_ne(world, owner, ctx, args):
    return args[0] != args[1]


def _pred_ge(world, owner, ctx, args):
    return args[0] >= args[1]


def _pred_has_var(world, owner, ctx, args):
    value = ctx.variables.get(args[0])
    return value not in (None, "")


def _pred_attr_eq(world, owner, ctx, args):
    npc = world.npcs.get(owner)
    attrs = npc.attributes if npc is not None else {}
    return attrs.get(args[0]) == args[1]


def _pred_attr_ge(world, owner, ctx, args):
    npc = world.npcs.get(owner)
    attrs = npc.attributes if npc is not None else {}
    return attrs.get(args[0], 0) >= args[1]


def _pred_has_key(world, owner, ctx, args):
    npc = world.npcs.get(owner)
    attrs = npc.attributes if npc is not None else {}
    return args[0] in attrs.get("keys", [])


def _pred_time_in_window(world, owner, ctx, args):
    return world.clock_in_window(int(args[0]), int(args[1]))


def _pred_state_eq(world, owner, ctx, args):
    instance = world.instances.get(owner)
    state = instance.state if instance is not None else {}
    return state.get(args[0]) == args[1]


def _pred_holders_ge(world, owner, ctx, args):
    instance = world.instances.get(owner)
    if instance is None:
        return False
    try:
        return len(instance.query_holders(args[0])) >= args[1]
    except KeyError:
        return False


def _pred_chance(world, owner, ctx, args):
    return world.rng_for(owner).random() < float(args[0])


PREDICATES = {
    "always": _pred_always,
    "never": _pred_never,
    "eq": _pred_eq,
    "ne": _pred_ne,
    "ge": _pred_ge,
    "has-var": _pred_has_var,
    "attr-eq": _pred_attr_eq,
    "attr-ge": _pred_attr_ge,
    "has-key": _pred_has_key,
    "time-in-window": _pred_time_in_window,
    "state-eq": _pred_state_eq,
    "holders-ge": _pred_holders_ge,
    "chance": _pred_chance,
}


# -- attribute conditions (situation casting) --------------------------------------

def eval_attr_condition(condition: tuple, attrs: dict) -> bool:
    pred, args = condition
    if pred == "always":
        return True
    if pred == "attr-eq":
        return attrs.get(args[0]) == args[1]
    if pred == "attr-ge":
        return attrs.get(args[0], 0) >= args[1]
    if pred == "attr-le":
        return attrs.get(args[0], 0) <= args[1]
    raise KeyError(f"unknown situation condition {pred}")


ATTR_CONDITIONS = ("always", "attr-eq", "attr-ge", "attr-le")
