"""Inbox contracts: ownership, capacity, ordering, staged delivery, and the
conservation property."""

import itertools

import pytest

from bosim.errors import OwnershipError
from bosim.messaging import MessageBoard


def board_with(owner="npc-1", schema="seat-grant", capacity=None):
    board = MessageBoard()
    board.register_inbox(owner, schema, capacity)
    return board


class TestRegistration:
    def test_fresh_inbox_drains_empty(self):
        board = board_with()
        board.deliver_due(5)
        assert board.drain("npc-1", "npc-1", "seat-grant") == []

    def test_duplicate_schema_per_owner_rejected(self):
        board = board_with()
        with pytest.raises(OwnershipError):
            board.register_inbox("npc-1", "seat-grant")

    def test_deregistered_inbox_reports_no_such_inbox(self):
        board = board_with()
        board.deregister_inbox("npc-1", "seat-grant")
        assert board.send("pub-1", "npc-1", "seat-grant", {}, "provide-data", 0) \
            == "no-such-inbox"

    def test_pooled_inbox_indistinguishable_from_fresh(self):
        board = board_with()
        board.send("a", "npc-1", "seat-grant", {"k": 1}, "provide-data", 0)
        board.deregister_inbox("npc-1", "seat-grant")
        board.register_inbox("npc-2", "seat-grant")
        board.deliver_due(10)
        assert board.drain("npc-2", "npc-2", "seat-grant") == []


class TestCapacity:
    def test_capacity_one_drops_second_send(self):
        # oracle script: three sends into a capacity-1 inbox -> one delivered,
        # two dropped, exactly one drained
        board = board_with(capacity=1)
        results = [board.send("s", "npc-1", "seat-grant", {"n": i},
                              "provide-data", 0) for i in range(3)]
        assert results == ["delivered", "dropped", "dropped"]
        board.deliver_due(1)
        msgs = board.drain("npc-1", "npc-1", "seat-grant")
        assert [m.payload["n"] for m in msgs] == [0]


class TestOrdering:
    def test_fifo_drain_with_max(self):
        board = board_with()
        for i in range(3):
            board.send("s", "npc-1", "seat-grant", {"n": i}, "provide-data", 0)
        board.deliver_due(1)
        first = board.drain("npc-1", "npc-1", "seat-grant", max_count=1)
        second = board.drain("npc-1", "npc-1", "seat-grant", max_count=1)
        assert [m.payload["n"] for m in first] == [0]
        assert [m.payload["n"] for m in second] == [1]

    def test_per_sender_order_preserved_all_interleavings(self):
        # brute force every interleaving of two 3-message streams (C(6,3)=20)
        for positions in itertools.combinations(range(6), 3):
            board = board_with()
            counters = {"a": 0, "b": 0}
            for slot in range(6):
                sender = "a" if slot in positions else "b"
                board.send(sender, "npc-1", "seat-grant",
                           {"sender": sender, "n": counters[sender]},
                           "provide-data", 0)
                counters[sender] += 1
            board.deliver_due(1)
            msgs = board.drain("npc-1", "npc-1", "seat-grant")
            for sender in "ab":
                seq = [m.payload["n"] for m in msgs if m.payload["sender"] == sender]
                assert seq == [0, 1, 2]


class TestOwnership:
    def test_non_owner_drain_is_hard_error(self):
        board = board_with()
        with pytest.raises(OwnershipError):
            board.drain("npc-2", "npc-1", "seat-grant")


class TestDelivery:
    def test_messages_not_visible_same_tick(self):
        board = board_with()
        board.send("s", "npc-1", "seat-grant", {}, "provide-data", 7)
        board.deliver_due(7)  # same tick: still staged
        assert board.drain("npc-1", "npc-1", "seat-grant") == []
        board.deliver_due(8)
        assert len(board.drain("npc-1", "npc-1", "seat-grant")) == 1

    def test_conservation_sent_equals_drained_dropped_pending(self):
        board = board_with(capacity=2)
        import random
        rng = random.Random(7)
        attempted = 0
        for tick in range(50):
            for _ in range(rng.randint(0, 3)):
                board.send("s", "npc-1", "seat-grant", {}, "provide-data", tick)
                attempted += 1
            board.deliver_due(tick + 1)
            if rng.random() < 0.5:
                board.drain("npc-1", "npc-1", "seat-grant",
                            max_count=rng.randint(1, 2))
            assert board.sent == board.drained + board.pending_total()
            assert attempted == board.sent + board.dropped
