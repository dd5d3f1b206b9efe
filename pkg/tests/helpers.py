"""Shared test scaffolding: a minimal world facade for exercising the tree
engine without the full simulator."""

from __future__ import annotations

from dataclasses import dataclass, field

from bosim import bt
from bosim.trace import RunStats


@dataclass
class FakeAction:
    handle: int
    owner: str
    name: str
    params: dict
    remaining: int


class FakeWorld:
    """Implements just enough of the world facade for bt nodes: an action
    queue advanced by `advance()`, canned predicates, and an event log."""

    def __init__(self):
        self.stats = RunStats()
        self.events: list[tuple] = []
        self.tick = 0
        self.queue: dict[int, FakeAction] = {}
        self.applied: list[str] = []
        self.cancelled: list[str] = []
        self.subscriptions: dict[str, int] = {}
        self._next = 1
        self.action_durations = {"instant": 1, "three-tick": 3, "one-tick": 1}

    # facade ------------------------------------------------------------

    def emit(self, owner, kind, **fields):
        self.events.append((self.tick, owner, kind, fields))

    def eval_predicate(self, name, args, ctx, rt):
        if name == "true":
            return True
        if name == "false":
            return False
        if name == "var-true":
            return bool(ctx.variables.get(args[0]))
        raise KeyError(name)

    def issue_action(self, owner, name, params, duration, handoff, ctx):
        dur = duration if duration is not None else self.action_durations.get(name, 1)
        if dur == 0:
            self.applied.append(name)
            return None
        handle = self._next
        self._next += 1
        self.queue[handle] = FakeAction(handle, owner, name, params, dur)
        return handle

    def apply_action_now(self, owner, name, params, ctx):
        self.applied.append(name)

    def action_remaining(self, handle):
        action = self.queue.get(handle)
        return None if action is None else action.remaining

    def cancel_action(self, handle):
        action = self.queue.pop(handle, None)
        if action is None:
            return False
        self.cancelled.append(action.name)
        return True

    def adjust_subscription(self, owner, delta):
        self.subscriptions[owner] = self.subscriptions.get(owner, 0) + delta

    # harness -------------------------------------------------------------

    def advance(self):
        """End-of-tick action queue advance, like world phase 5."""
        for handle in list(self.queue):
            action = self.queue[handle]
            action.remaining -= 1
            if action.remaining <= 0:
                self.applied.append(action.name)
                del self.queue[handle]
        self.tick += 1

    def event_kinds(self):
        return [e[2] for e in self.events]


def make_rt(world, owner="npc-1"):
    return bt.Runtime(world, owner)


def make_ctx(owner="npc-1", lock_context=None, this_sa=None):
    return bt.TreeContext(owner=owner, lock_context=lock_context, this_sa=this_sa)


def drive(tree, ctx, world, owner="npc-1", max_ticks=50):
    """Tick once per world tick until terminal; returns (result, ticks_used)."""
    for i in range(max_ticks):
        rt = make_rt(world, owner)
        result = tree.tick(ctx, rt)
        if result is not bt.RUNNING:
            return result, i
        world.advance()
    return bt.RUNNING, max_ticks
