"""Command-line front end.

    bosim run <scenario> [--seed N] [--ticks N] [--trace PATH] [--stats PATH]
    bosim replay-check <scenario> [--seed N] [--ticks N] [--runs K]
    bosim bench [--npcs N] [--profile simple|complex] [--ticks N]

Exit codes: 0 clean run; 2 scenario load errors; 3 runtime hard errors
(recursion, ownership violations) with tick and owner context; 4 replay
divergence, reporting the first divergent tick.

The trace goes to a file only; the human-readable summary goes to stdout and
errors to stderr. Setting BOSIM_CHAOS=1 deliberately injects nondeterminism
(a self-test hook for the replay harness).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import bench as benchmod
from . import loader
from .errors import HardError, ParseError, ScenarioInvalid
from .trace import TraceSink


def _load(path: str, seed, sink):
    try:
        return loader.load_file(path, seed=seed, sink=sink)
    except OSError as exc:
        print(f"cannot read {path}: {exc}", file=sys.stderr)
        raise SystemExit(2)
    except ParseError as exc:
        print(f"{path}:{exc}", file=sys.stderr)
        raise SystemExit(2)
    except ScenarioInvalid as exc:
        for error in exc.errors:
            print(f"{path}: {error}", file=sys.stderr)
        raise SystemExit(2)


def _run_world(world, ticks: int) -> None:
    chaos = os.environ.get("BOSIM_CHAOS")
    chaos_tick = None
    if chaos:
        chaos_tick = int.from_bytes(os.urandom(4), "big") % max(ticks, 1)
    for t in range(ticks):
        if chaos_tick is not None and t == chaos_tick:
            world.emit("chaos", "chaos",
                       n=int.from_bytes(os.urandom(4), "big"))
        world.step()


def cmd_run(args) -> int:
    sink = TraceSink(path=args.trace)
    world, run = _load(args.scenario, args.seed, sink)
    ticks = args.ticks if args.ticks is not None else run.ticks
    try:
        _run_world(world, ticks)
    except HardError as exc:
        print(f"hard error: {exc}", file=sys.stderr)
        sink.close(world.tick)
        return 3
    sink.close(world.tick)
    for warning in world.load_warnings:
        print(f"warning: {warning}")
    stats = world.stats.as_dict()
    stats["ticks"] = ticks
    stats["trace_lines"] = sink.line_count
    stats["trace_hash"] = f"{sink.hash:016x}"
    print(f"ran {args.scenario} for {ticks} ticks, seed {world.seed}")
    print(f"trace hash {stats['trace_hash']} over {sink.line_count} events")
    print(f"stats: {stats['injections']} injections, {stats['messages']} messages, "
          f"{stats['handler_runs']} handler runs, "
          f"pool high-water {stats['pool_high_water']}, "
          f"{stats['node_evaluations']} node evaluations")
    if args.stats:
        with open(args.stats, "w", encoding="utf-8") as fh:
            json.dump(stats, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def cmd_replay_check(args) -> int:
    hashes = []
    prefixes = []
    for _ in range(args.runs):
        sink = TraceSink()
        world, run = _load(args.scenario, args.seed, sink)
        ticks = args.ticks if args.ticks is not None else run.ticks
        try:
            _run_world(world, ticks)
        except HardError as exc:
            print(f"hard error: {exc}", file=sys.stderr)
            return 3
        hashes.append(sink.hash)
        prefixes.append(sink.prefix_hashes)
    if len(set(hashes)) <= 1:
        print(f"replay-check: {args.runs} runs identical "
              f"(hash {hashes[0]:016x})" if hashes else "replay-check: no runs")
        return 0
    base = prefixes[0]
    divergent_tick = None
    for other in prefixes[1:]:
        if other == base:
            continue
        lo, hi = 0, min(len(base), len(other))
        while lo < hi:  # first index where the prefix hashes differ
            mid = (lo + hi) // 2
            if base[:mid + 1] == other[:mid + 1]:
                lo = mid + 1
            else:
                hi = mid
        divergent_tick = lo
        break
    print(f"replay-check: divergence at tick {divergent_tick}", file=sys.stderr)
    return 4


def cmd_bench(args) -> int:
    report = benchmod.run_bench(args.npcs, args.profile, args.ticks)
    print(report.render())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bosim",
        description="Deterministic headless simulator for environment-embedded "
                    "NPC behaviors")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario")
    p_run.add_argument("scenario")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--ticks", type=int, default=None)
    p_run.add_argument("--trace", default=None, help="write the trace here")
    p_run.add_argument("--stats", default=None, help="write JSON stats here")
    p_run.set_defaults(func=cmd_run)

    for alias in ("replay-check", "replay_check"):
        p_replay = sub.add_parser(alias, help="verify determinism by re-running")
        p_replay.add_argument("scenario")
        p_replay.add_argument("--seed", type=int, default=None)
        p_replay.add_argument("--ticks", type=int, default=None)
        p_replay.add_argument("--runs", type=int, default=3)
        p_replay.set_defaults(func=cmd_replay_check)

    p_bench = sub.add_parser("bench", help="synthetic performance check")
    p_bench.add_argument("--npcs", type=int, default=300)
    p_bench.add_argument("--profile", choices=("simple", "complex"),
                         default="simple")
    p_bench.add_argument("--ticks", type=int, default=500)
    p_bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HardError as exc:
        print(f"hard error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
