"""Smart-entity semantics: binding, gating, events, and the handler/main
alternation guarantee."""

import pytest

from bosim import loader
from bosim.entities import SEEvent
from bosim.errors import OwnershipError, ScenarioInvalid
from bosim.trace import TraceSink


PUB_LIKE = """
trees:
  tree noop-brain (act note msg=brain)
  tree onadopt-h (act note msg=adopt)

templates:
  s-object chair:
    behavior sit:
      tree noop-brain
      max-holders 1
  s-area hall:
    brain noop-brain period 1
    on-adopt onadopt-h
    link seat s-object 1..8
    behavior rest:
      tree noop-brain
      max-holders 2

world:
  grid 12 10
  area hall-1 hall 2 2 6 5
  object chair-1 chair 3 3
  object chair-2 chair 4 3
  link hall-1 seat chair-1
  link hall-1 seat chair-2

npcs:
  npc npc-1:
    at 3 4
  npc npc-2:
    at 4 4

run:
  seed 1
  ticks 50
"""


def load(text=PUB_LIKE, sink=None):
    return loader.load_text(text, sink=sink)


class TestBinding:
    def test_links_resolved_into_environment_data(self):
        w, _ = load()
        hall = w.instances["hall-1"]
        assert hall.env["seat"] == ("chair-1", "chair-2")

    def test_missing_required_link_fails_load(self):
        text = PUB_LIKE.replace("  link hall-1 seat chair-1\n", "") \
                       .replace("  link hall-1 seat chair-2\n", "")
        with pytest.raises(ScenarioInvalid) as info:
            load(text)
        assert any(e.code == "MissingLink" for e in info.value.errors)

    def test_environment_data_immutable_fingerprint(self):
        w, _ = load()
        hall = w.instances["hall-1"]
        before = hall.env_fingerprint()
        for _ in range(30):
            w.step()
        assert hall.env_fingerprint() == before

    def test_anchor_instance_binds_without_position(self):
        text = """
trees:
  tree qb (act quest-drive)
  tree qs (act idle)
templates:
  quest-object errand:
    brain qb period 2
    link target-npc npc 1..1
    behavior run-errand:
      tree qs
world:
  grid 8 8
  anchor errand-1 errand
  link errand-1 target-npc npc-1
npcs:
  npc npc-1:
    at 2 2
run:
  seed 1
"""
        w, _ = load(text)
        assert w.entities["errand-1"].position is None
        assert w.instances["errand-1"].env["target-npc"] == ("npc-1",)


class TestGating:
    def test_lowering_max_holders_keeps_existing(self):
        w, _ = load()
        hall = w.instances["hall-1"]
        hall.gating["rest"].holders.extend(["npc-1", "npc-2"])
        hall.set_gating("rest", max_holders=1)
        assert hall.gating["rest"].holders == ["npc-1", "npc-2"]
        assert hall.check_grant("rest") == "max-holders-reached"

    def test_disable_then_enable_idempotent(self):
        w, _ = load()
        hall = w.instances["hall-1"]
        hall.set_gating("rest", enabled=False)
        hall.set_gating("rest", enabled=False)
        assert hall.check_grant("rest") == "disabled"
        hall.set_gating("rest", enabled=True)
        assert isinstance(hall.check_grant("rest"), tuple)

    def test_unknown_behavior_raises(self):
        w, _ = load()
        with pytest.raises(KeyError):
            w.instances["hall-1"].set_gating("no-such", enabled=True)

    def test_gating_from_foreign_owner_is_ownership_error(self):
        w, _ = load()
        w.current_owner = "npc-1"
        with pytest.raises(OwnershipError):
            w.set_gating("hall-1", "rest", enabled=False)

    def test_query_holders_snapshot(self):
        w, _ = load()
        hall = w.instances["hall-1"]
        assert hall.query_holders("rest") == []
        hall.gating["rest"].holders.append("npc-2")
        snap = hall.query_holders("rest")
        snap.append("fake")
        assert hall.query_holders("rest") == ["npc-2"]


class TestEventAlternation:
    def test_one_event_then_main_between_handlers(self):
        sink = TraceSink(keep_lines=True)
        w, _ = load(sink=sink)
        hall = w.instances["hall-1"]
        # two adopt events queued back to back
        hall.enqueue_event(SEEvent("on-adopt", npc="npc-1", behavior="rest"))
        hall.enqueue_event(SEEvent("on-adopt", npc="npc-2", behavior="rest"))
        for _ in range(6):
            w.step()
        kinds = [line for line in sink.lines
                 if "owner=hall-1" in line
                 and ("handler-started" in line or "se-main-tick" in line)]
        starts = [i for i, line in enumerate(kinds) if "handler-started" in line]
        assert len(starts) == 2
        # at least one main tick strictly between the two handler runs
        between = kinds[starts[0] + 1:starts[1]]
        assert any("se-main-tick" in line for line in between)

    def test_handlers_run_to_completion_within_one_update(self):
        sink = TraceSink(keep_lines=True)
        w, _ = load(sink=sink)
        hall = w.instances["hall-1"]
        hall.enqueue_event(SEEvent("on-adopt", npc="npc-1", behavior="rest"))
        w.step()
        started = [line for line in sink.lines if "handler-started" in line]
        finished = [line for line in sink.lines if "handler-finished" in line]
        assert len(started) == 1 and len(finished) == 1
        assert started[0].split()[0] == finished[0].split()[0]  # same tick

    def test_brainless_instance_event_driven_updates(self):
        w, _ = load()
        chair = w.instances["chair-1"]
        assert not chair.wants_update(0, 4)  # nothing queued, no brain
        chair.handler_nodes["on-adopt"] = w.pool_acquire("onadopt-h")
        chair.enqueue_event(SEEvent("on-adopt", npc="npc-1", behavior="sit"))
        assert chair.wants_update(1, 4)


class TestHolderBookkeeping:
    def test_adopt_release_pairing_updates_counts(self):
        w, _ = load()
        hall = w.instances["hall-1"]
        hall.adopt("rest", "npc-1", tick=0)
        assert hall.gating["rest"].holders == ["npc-1"]
        hall.release("rest", "npc-1", "completed", "success", tick=1)
        assert hall.gating["rest"].holders == []
        assert hall.gating["rest"].adopts == 1
        assert hall.gating["rest"].drops == 1

    def test_slot_assignment_lowest_free_and_reuse(self):
        text = PUB_LIKE.replace("behavior rest:\n      tree noop-brain\n      max-holders 2",
                                "behavior rest:\n      tree noop-brain\n      slots seat")
        w, _ = load(text)
        hall = w.instances["hall-1"]
        b1 = hall.adopt("rest", "npc-1", 0)
        b2 = hall.adopt("rest", "npc-2", 0)
        assert (b1["slot"], b2["slot"]) == (0, 1)
        assert b1["slot-target"] == "chair-1"
        hall.release("rest", "npc-1", "completed", None, 1)
        b3 = hall.adopt("rest", "npc-3", 1)
        assert b3["slot"] == 0
