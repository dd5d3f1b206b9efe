"""Typed inboxes with strict single-owner mutation.

An inbox is the only channel to another owner's mutable state. Anyone may
append; only the owner drains. Messages sent during tick t are staged and
become drainable at the start of tick t+1, so a request/reply round trip can
never complete within the sender's own tick.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import OwnershipError

MESSAGE_KINDS = ("request-data", "provide-data", "request-change")


@dataclass(frozen=True)
class Message:
    sender: str
    payload: dict
    sent_tick: int
    kind: str = "request-change"


@dataclass
class Inbox:
    inbox_id: int
    owner: str
    schema: str
    capacity: int | None = None
    queue: list = field(default_factory=list)
    staged: list = field(default_factory=list)
    bind_vars: bool = False  # runtime auto-drains into context variables

    def size(self) -> int:
        return len(self.queue) + len(self.staged)


@dataclass(frozen=True)
class Schema:
    name: str
    fields: tuple = ()  # required payload fields; empty: free-form


class MessageBoard:
    """Registry and router for every inbox in the run.

    Inbox objects are recycled through a per-schema pool; a recycled inbox is
    indistinguishable from a fresh one apart from its id.
    """

    def __init__(self, stats=None):
        self._inboxes: dict[int, Inbox] = {}
        self._by_owner: dict[str, dict[str, Inbox]] = {}
        self._schemas: dict[str, Schema] = {}
        self._pool: dict[str, list[Inbox]] = {}
        self._next_id = 1
        self.stats = stats
        self.sent = 0
        self.dropped = 0
        self.drained = 0

    # -- schemas -------------------------------------------------------------

    def define_schema(self, name: str, fields: tuple = ()) -> None:
        self._schemas[name] = Schema(name, tuple(fields))

    def has_schema(self, name: str) -> bool:
        return name in self._schemas

    # -- registration ----------------------------------------------------------

    def register_inbox(self, owner: str, schema: str, capacity: int | None = None,
                       bind_vars: bool = False) -> int:
        if schema not in self._schemas:
            self._schemas[schema] = Schema(schema)
        owned = self._by_owner.setdefault(owner, {})
        if schema in owned:
            raise OwnershipError(f"{owner} already has an inbox for schema {schema}")
        pool = self._pool.get(schema)
        if pool:
            inbox = pool.pop()
            inbox.inbox_id = self._next_id
            inbox.owner = owner
            inbox.capacity = capacity
            inbox.bind_vars = bind_vars
            inbox.queue.clear()
            inbox.staged.clear()
        else:
            inbox = Inbox(self._next_id, owner, schema, capacity, bind_vars=bind_vars)
        self._next_id += 1
        self._inboxes[inbox.inbox_id] = inbox
        owned[schema] = inbox
        return inbox.inbox_id

    def deregister_inbox(self, owner: str, schema: str) -> None:
        owned = self._by_owner.get(owner, {})
        inbox = owned.pop(schema, None)
        if inbox is None:
            return
        del self._inboxes[inbox.inbox_id]
        self._pool.setdefault(schema, []).append(inbox)

    def drop_owner(self, owner: str) -> None:
        for schema in list(self._by_owner.get(owner, {})):
            self.deregister_inbox(owner, schema)

    def inbox_of(self, owner: str, schema: str) -> Inbox | None:
        return self._by_owner.get(owner, {}).get(schema)

    def owner_backlog(self, owner: str) -> int:
        return sum(b.size() for b in self._by_owner.get(owner, {}).values())

    def bound_schemas(self, owner: str) -> list:
        return [schema for schema, inbox in self._by_owner.get(owner, {}).items()
                if inbox.bind_vars and inbox.queue]

    # -- traffic ---------------------------------------------------------------

    def send(self, sender: str, owner: str, schema: str, payload: dict,
             kind: str, tick: int) -> str:
        """Returns "delivered", "dropped", "no-such-inbox" or "schema-mismatch"."""
        inbox = self.inbox_of(owner, schema)
        if inbox is None:
            return "no-such-inbox"
        decl = self._schemas.get(schema)
        if decl is not None and decl.fields:
            if not set(decl.fields) <= set(payload):
                return "schema-mismatch"
        if inbox.capacity is not None and inbox.size() >= inbox.capacity:
            self.dropped += 1
            return "dropped"
        inbox.staged.append(Message(sender, dict(payload), tick, kind))
        self.sent += 1
        return "delivered"

    def deliver_due(self, tick: int) -> None:
        """Move messages staged before `tick` into the drainable queue."""
        for inbox in self._inboxes.values():
            if not inbox.staged:
                continue
            still = []
            for msg in inbox.staged:
                if msg.sent_tick < tick:
                    inbox.queue.append(msg)
                else:
                    still.append(msg)
            inbox.staged = still

    def drain(self, caller: str, owner: str, schema: str, max_count: int | None = None) -> list:
        if caller != owner:
            raise OwnershipError(f"{caller} tried to drain {owner}'s inbox {schema}")
        inbox = self.inbox_of(owner, schema)
        if inbox is None:
            return []
        if max_count is None or max_count >= len(inbox.queue):
            out = inbox.queue
            inbox.queue = []
        else:
            out = inbox.queue[:max_count]
            inbox.queue = inbox.queue[max_count:]
        self.drained += len(out)
        return out

    def pending_total(self) -> int:
        return sum(b.size() for b in self._inboxes.values())
