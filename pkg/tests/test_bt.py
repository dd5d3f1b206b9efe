"""Tree engine semantics: sequencing, parallel policies, halt/cleanup
totality, lock scoping, and re-entrancy."""

import random

import pytest

from bosim import bt
from bosim.errors import MalformedTree

from helpers import FakeWorld, drive, make_ctx, make_rt


def seq(*children, cleanup=None):
    return bt.Sequence(list(children), cleanup=cleanup)


def sel(*children):
    return bt.Selector(list(children))


def cond(name):
    return bt.Condition(name)


def act(name, dur=None, cleanup=None, handoff=1):
    return bt.Action(name, duration=dur, cleanup=cleanup, handoff=handoff)


class TestBasicSemantics:
    def test_sequence_action_issued_then_success(self):
        # first tick issues the action and runs; the next tick reports success
        world = FakeWorld()
        tree = seq(cond("true"), act("instant", dur=1))
        ctx = make_ctx()
        assert tree.tick(ctx, make_rt(world)) is bt.RUNNING
        world.advance()
        assert tree.tick(ctx, make_rt(world)) is bt.SUCCESS

    def test_selector_all_fail_single_tick(self):
        world = FakeWorld()
        tree = sel(cond("false"), cond("false"))
        assert tree.tick(make_ctx(), make_rt(world)) is bt.FAILURE

    def test_selector_takes_first_success(self):
        world = FakeWorld()
        tree = sel(cond("false"), cond("true"), cond("false"))
        assert tree.tick(make_ctx(), make_rt(world)) is bt.SUCCESS

    def test_sequence_fails_at_first_failing_child(self):
        world = FakeWorld()
        tree = seq(cond("true"), cond("false"), act("instant"))
        assert tree.tick(make_ctx(), make_rt(world)) is bt.FAILURE
        assert not world.queue  # third child never issued anything

    def test_composite_needs_children(self):
        with pytest.raises(MalformedTree):
            bt.Sequence([])

    def test_decorator_takes_exactly_one_child(self):
        with pytest.raises(MalformedTree):
            bt.Repeat([cond("true"), cond("false")])


def oracle_parallel_any(durations, handoff=1):
    """Independent enumeration of the action-handoff timing contract:
    actions are issued on tick 0 and always run that tick; remaining duration
    drops at end of tick; a node succeeds on the first tick >= 1 where its
    remaining duration is within the handoff offset. Returns the tick the
    any-success parallel reports success."""
    remaining = list(durations)
    for tick in range(0, max(durations) + 2):
        if tick >= 1:
            for rem in remaining:
                if rem <= handoff:
                    return tick
        remaining = [rem - 1 for rem in remaining]
    raise AssertionError("oracle never completed")


class TestParallel:
    def test_any_success_timing_matches_oracle(self):
        expected_tick = oracle_parallel_any([3, 1])
        assert expected_tick == 1  # frozen from the oracle above

        world = FakeWorld()
        tree = bt.Parallel("any", [act("three-tick"), act("one-tick")])
        ctx = make_ctx()
        result, ticks = drive(tree, ctx, world)
        assert result is bt.SUCCESS
        assert ticks == expected_tick
        # the 3-tick sibling was halted with its in-flight action cancelled
        assert "three-tick" in world.cancelled
        assert "three-tick" not in world.applied

    def test_all_success_waits_for_slowest(self):
        world = FakeWorld()
        tree = bt.Parallel("all", [act("three-tick"), act("one-tick")])
        result, ticks = drive(tree, make_ctx(), world)
        assert result is bt.SUCCESS
        assert ticks == oracle_parallel_any([3], handoff=1)

    def test_all_policy_fails_fast(self):
        world = FakeWorld()
        tree = bt.Parallel("all", [act("three-tick"), cond("false")])
        result, ticks = drive(tree, make_ctx(), world)
        assert result is bt.FAILURE
        assert ticks == 0
        assert "three-tick" in world.cancelled


class TestHaltAndCleanup:
    def test_halt_fresh_tree_is_empty_report(self):
        world = FakeWorld()
        tree = seq(cond("true"), act("instant"))
        report = tree.halt(make_ctx(), make_rt(world))
        assert report.cleanups_run == []
        assert report.actions_cancelled == 0

    def test_halt_runs_cleanup_and_repairs_state(self):
        # sit action with stand-up cleanup: interrupting reports the stand-up
        world = FakeWorld()
        tree = seq(act("sit-down", dur=2, cleanup=act("stand-up", dur=1)),
                   act("sit-idle", dur=10))
        ctx = make_ctx()
        for _ in range(4):
            tree.tick(ctx, make_rt(world))
            world.advance()
        report = tree.halt(ctx, make_rt(world))
        assert [label for label, _ in report.cleanups_run] == ["act:sit-down"]
        assert "stand-up" in world.applied  # cleanup applies instantly
        assert tree.is_fresh_deep()

    def test_cleanup_runs_on_natural_completion_too(self):
        world = FakeWorld()
        tree = seq(act("sit-down", dur=1, cleanup=act("stand-up", dur=1)),
                   act("instant", dur=1))
        ctx = make_ctx()
        result, _ = drive(tree, ctx, world)
        assert result is bt.SUCCESS
        assert "stand-up" in world.applied

    def test_cleanup_exactly_once_on_halt_then_reuse(self):
        world = FakeWorld()
        tree = seq(act("sit-down", dur=3, cleanup=act("stand-up", dur=1)))
        ctx = make_ctx()
        tree.tick(ctx, make_rt(world))
        world.advance()
        tree.halt(ctx, make_rt(world))
        tree.halt(ctx, make_rt(world))  # second halt is a no-op
        assert world.applied.count("stand-up") == 1
        result, _ = drive(tree, ctx, world)
        assert result is bt.SUCCESS
        assert world.applied.count("stand-up") == 2  # once per activation

    def test_cleanup_overrun_is_flagged_not_fatal(self):
        world = FakeWorld()
        never_done = bt.WaitMessage("nothing")  # no messages in FakeWorld

        class NoMsgWorld(FakeWorld):
            def try_drain_one(self, owner, schema):
                return None

        world = NoMsgWorld()
        tree = seq(act("sit-down", dur=3, cleanup=never_done))
        ctx = make_ctx()
        tree.tick(ctx, make_rt(world))
        world.advance()
        report = tree.halt(ctx, make_rt(world))
        assert report.overruns == ["act:sit-down"]
        assert tree.is_fresh_deep()

    def test_request_node_forbidden_in_cleanup(self):
        tree = seq(act("instant", cleanup=bt.RequestBehavior(behavior="sit")))
        with pytest.raises(MalformedTree):
            bt.validate_cleanup_trees(tree)


class TestLocks:
    def test_same_context_blocks_second_holder(self):
        world = FakeWorld()
        table = bt.LockContext(owner="table-1")
        n1, n2 = bt.AcquireLock("toast"), bt.AcquireLock("toast")
        ctx1 = make_ctx(owner="npc-1", lock_context=table)
        ctx2 = make_ctx(owner="npc-2", lock_context=table)
        assert n1.tick(ctx1, make_rt(world, "npc-1")) is bt.SUCCESS
        assert n2.tick(ctx2, make_rt(world, "npc-2")) is bt.RUNNING
        n1.reset(ctx1, make_rt(world, "npc-1"))
        assert n2.tick(ctx2, make_rt(world, "npc-2")) is bt.SUCCESS

    def test_distinct_contexts_are_independent_locks(self):
        world = FakeWorld()
        table_a, table_b = bt.LockContext("table-a"), bt.LockContext("table-b")
        n1, n2 = bt.AcquireLock("toast"), bt.AcquireLock("toast")
        assert n1.tick(make_ctx("npc-1", table_a), make_rt(world, "npc-1")) is bt.SUCCESS
        assert n2.tick(make_ctx("npc-2", table_b), make_rt(world, "npc-2")) is bt.SUCCESS

    def test_halt_releases_locks(self):
        world = FakeWorld()
        table = bt.LockContext("table-1")
        tree = seq(bt.AcquireLock("toast"), act("three-tick"))
        ctx = make_ctx(lock_context=table)
        tree.tick(ctx, make_rt(world))
        assert table.locks == {"toast": "npc-1"}
        report = tree.halt(ctx, make_rt(world))
        assert table.locks == {}
        assert report.locks_released == ["toast"]

    def test_lock_released_when_scope_completes(self):
        world = FakeWorld()
        table = bt.LockContext("table-1")
        tree = seq(bt.AcquireLock("toast"), act("instant", dur=1))
        ctx = make_ctx(lock_context=table)
        result, _ = drive(tree, ctx, world)
        assert result is bt.SUCCESS
        assert table.locks == {}

    def test_no_lock_context_is_failure_with_diagnostic(self):
        world = FakeWorld()
        node = bt.AcquireLock("toast")
        rt = make_rt(world)
        assert node.tick(make_ctx(lock_context=None), rt) is bt.FAILURE
        assert rt.diagnostics


class TestDecorators:
    def test_bind_passes_shared_variable(self):
        world = FakeWorld()
        tree = bt.Bind("flag", True, [cond("var-true")])
        tree.params = ("flag",)
        inner = bt.Bind("flag", True, [bt.Condition("var-true", params=("flag",))])
        assert inner.tick(make_ctx(), make_rt(world)) is bt.SUCCESS

    def test_guard_halts_child_when_predicate_flips(self):
        world = FakeWorld()
        inner = act("three-tick", cleanup=act("stand-up"))
        tree = bt.Guard("var-true", ("go",), [inner])
        ctx = make_ctx()
        ctx.variables["go"] = True
        assert tree.tick(ctx, make_rt(world)) is bt.RUNNING
        world.advance()
        ctx.variables["go"] = False
        assert tree.tick(ctx, make_rt(world)) is bt.FAILURE
        assert "three-tick" in world.cancelled
        assert "stand-up" in world.applied

    def test_repeat_until_success_retries_next_tick(self):
        world = FakeWorld()
        tree = bt.RepeatUntilSuccess([sel(cond("var-true"), cond("false"))])
        tree.children[0].children[0].params = ("ready",)
        ctx = make_ctx()
        ctx.variables["ready"] = False
        assert tree.tick(ctx, make_rt(world)) is bt.RUNNING
        assert tree.tick(ctx, make_rt(world)) is bt.RUNNING
        ctx.variables["ready"] = True
        assert tree.tick(ctx, make_rt(world)) is bt.SUCCESS

    def test_subscribe_unsubscribes_on_halt(self):
        world = FakeWorld()
        tree = bt.SubscribeSituations([act("three-tick")])
        ctx = make_ctx()
        tree.tick(ctx, make_rt(world))
        assert world.subscriptions["npc-1"] == 1
        tree.halt(ctx, make_rt(world))
        assert world.subscriptions["npc-1"] == 0

    def test_nested_subscribe_reference_counts(self):
        world = FakeWorld()
        tree = bt.SubscribeSituations([bt.SubscribeSituations([act("three-tick")])])
        ctx = make_ctx()
        tree.tick(ctx, make_rt(world))
        assert world.subscriptions["npc-1"] == 2
        tree.halt(ctx, make_rt(world))
        assert world.subscriptions["npc-1"] == 0


def random_tree(rng, depth=0):
    """Random tree over composites, conditions, actions, and locks."""
    if depth >= 3 or rng.random() < 0.35:
        roll = rng.random()
        if roll < 0.4:
            cleanup = act("stand-up") if rng.random() < 0.5 else None
            return act(rng.choice(["instant", "three-tick", "one-tick"]),
                       cleanup=cleanup)
        if roll < 0.7:
            return cond(rng.choice(["true", "false"]))
        return bt.AcquireLock(rng.choice(["a", "b"]))
    kids = [random_tree(rng, depth + 1) for _ in range(rng.randint(1, 3))]
    kind = rng.choice(["seq", "sel", "par-any", "par-all"])
    if kind == "seq":
        return bt.Sequence(kids)
    if kind == "sel":
        return bt.Selector(kids)
    return bt.Parallel("any" if kind == "par-any" else "all", kids)


class TestFuzzInvariants:
    def test_cleanup_totality_and_lock_conservation(self):
        # random trees, random halt ticks: after halt everything is fresh,
        # no locks are held, and no cancelled action ever applies
        rng = random.Random(4221)
        for case in range(120):
            world = FakeWorld()
            lock_ctx = bt.LockContext("scope")
            tree = random_tree(rng)
            ctx = make_ctx(lock_context=lock_ctx)
            halt_at = rng.randint(0, 6)
            for tick in range(halt_at + 1):
                rt = make_rt(world)
                result = tree.tick(ctx, rt)
                if result is not bt.RUNNING:
                    tree.reset(ctx, rt, mode="complete" if result is bt.SUCCESS else "halt")
                    break
                world.advance()
            tree.halt(ctx, make_rt(world))
            assert tree.is_fresh_deep(), f"case {case} left non-fresh nodes"
            assert lock_ctx.locks == {}, f"case {case} leaked locks"

    def test_reentrancy_identical_trace_after_halt(self):
        # a halted-and-reused tree behaves exactly like a never-run one
        rng = random.Random(99)
        for case in range(60):
            tree = random_tree(rng)
            halt_at = rng.randint(0, 4)

            def run_trace(t, pre_halt):
                world = FakeWorld()
                ctx = make_ctx(lock_context=bt.LockContext("scope"))
                if pre_halt:
                    for _ in range(halt_at):
                        if t.tick(ctx, make_rt(world)) is not bt.RUNNING:
                            break
                        world.advance()
                    t.halt(ctx, make_rt(world))
                world2 = FakeWorld()
                ctx2 = make_ctx(lock_context=bt.LockContext("scope"))
                trace = []
                for _ in range(10):
                    rt = make_rt(world2)
                    result = t.tick(ctx2, rt)
                    trace.append(result)
                    if result is not bt.RUNNING:
                        break
                    world2.advance()
                t.halt(ctx2, make_rt(world2))
                return trace

            fresh = run_trace(tree, pre_halt=False)
            tree.halt(make_ctx(lock_context=bt.LockContext("scope")),
                      make_rt(FakeWorld()))
            reused = run_trace(tree, pre_halt=True)
            assert fresh == reused, f"case {case} diverged after reuse"
