"""Trace stream, run hashing, and run statistics.

Trace format is line-delimited, one event per line:

    tick=<n> owner=<id> kind=<event> k1=v1 k2=v2 ...

with the trailing keys sorted lexicographically. A run footer carries the
64-bit FNV-1a hash of every byte emitted before it, so two runs can be
compared by their footers alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes, h: int = FNV_OFFSET) -> int:
    """Incremental 64-bit FNV-1a. Pass the previous value through `h`."""
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & _MASK64
    return h


def format_event(tick: int, owner: str, kind: str, fields: dict) -> str:
    parts = [f"tick={tick}", f"owner={owner}", f"kind={kind}"]
    for key in sorted(fields):
        parts.append(f"{key}={fields[key]}")
    return " ".join(parts)


@dataclass
class RunStats:
    injections: int = 0
    messages: int = 0
    handler_runs: int = 0
    pool_high_water: int = 0
    node_evaluations: int = 0

    def as_dict(self) -> dict:
        return {
            "injections": self.injections,
            "messages": self.messages,
            "handler_runs": self.handler_runs,
            "pool_high_water": self.pool_high_water,
            "node_evaluations": self.node_evaluations,
        }


class TraceSink:
    """Hashes (and optionally stores/writes) the trace stream.

    `observers` receive (tick, owner, kind, fields) tuples; they are meant for
    in-process checks and do not affect the hashed byte stream.
    """

    def __init__(self, path=None, keep_lines: bool = False, hashing: bool = True):
        self.hash = FNV_OFFSET
        self.line_count = 0
        self.hashing = hashing
        self.keep_lines = keep_lines
        self.lines: list[str] = []
        self.prefix_hashes: list[int] = []  # hash after each tick, set by close_tick
        self._file = open(path, "w", encoding="utf-8") if path else None
        self.observers: list = []

    def emit(self, tick: int, owner: str, kind: str, **fields) -> None:
        for obs in self.observers:
            obs(tick, owner, kind, fields)
        line = format_event(tick, owner, kind, fields)
        self.line_count += 1
        if self.hashing:
            self.hash = fnv1a64(line.encode("ascii") + b"\n", self.hash)
        if self.keep_lines:
            self.lines.append(line)
        if self._file is not None:
            self._file.write(line + "\n")

    def close_tick(self) -> None:
        self.prefix_hashes.append(self.hash)

    def footer(self, final_tick: int) -> str:
        return format_event(final_tick, "world", "run-footer", {"hash": f"{self.hash:016x}"})

    def close(self, final_tick: int) -> None:
        if self._file is not None:
            self._file.write(self.footer(final_tick) + "\n")
            self._file.close()
            self._file = None


class NullSink:
    """Sink that drops everything. Observers still run, so checks stay cheap."""

    hash = 0
    line_count = 0
    prefix_hashes: list[int] = []

    def __init__(self):
        self.observers: list = []

    def emit(self, tick: int, owner: str, kind: str, **fields) -> None:
        if self.observers:
            for obs in self.observers:
                obs(tick, owner, kind, fields)

    def close_tick(self) -> None:
        pass

    def close(self, final_tick: int) -> None:
        pass
