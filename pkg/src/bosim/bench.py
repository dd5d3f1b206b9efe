"""Synthetic scenarios and timing for the micro-benchmark.

Two profiles: `simple` NPCs run a wander/idle day-cycle tree of about twenty
nodes with no smart entities; `complex` NPCs run the full pub-guest stack
(seat assignment, chair injection, private seated drinking, orders through
innkeeper and waitress) at around 150 live nodes per NPC including injected
subtrees. Reported times cover the AI phases only: message delivery, NPC
updates, smart-entity updates, and the managers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import loader


def simple_scenario(npcs: int, seed: int = 1) -> str:
    side = max(8, math.ceil(math.sqrt(max(npcs, 1) * 6)))
    lines = [
        "world:",
        f"  grid {side} {side}",
        "npcs:",
    ]
    for i in range(npcs):
        x = 1 + (i * 3) % (side - 2)
        y = 1 + ((i * 3) // (side - 2)) % (side - 2)
        lines += [
            f"  npc wanderer-{i}:",
            f"    at {x} {y}",
            "    daycycle:",
            # decoy windows keep the tree around twenty nodes; they never open
            "      window 900000 900001 general relax",
            "      window 900002 900003 general stroll",
        ]
    lines += ["run:", f"  seed {seed}", "  ticks 1000"]
    return "\n".join(lines) + "\n"


def complex_scenario(npcs: int, seed: int = 1) -> str:
    """One big pub: npcs = guests + innkeeper + waitress."""
    guests = max(1, npcs - 2)
    cols = math.ceil(math.sqrt(guests))
    rows = math.ceil(guests / cols)
    pub_w, pub_h = 2 * cols + 4, 2 * rows + 4
    width, height = pub_w + 12, max(pub_h + 4, 14)
    px, py = 2, 2
    trees = """
trees:
  tree chair-sit (seq
    (act sit-down dur=2 cleanup=(act stand-up))
    (request-private))
  tree pub-guest (seq
    (wait-msg pub-guest timeout=60)
    (moveto $msg-chair)
    (bind private-name drink-seated (request-from $msg-chair sit)))
  tree pub-drink-seated (seq
    (sel (seq (cond attr-eq wealth rich) (send this-sa pub-orders item=wine))
         (send this-sa pub-orders item=beer))
    (wait-msg drink-delivery timeout=600)
    (act drink dur=5))
  tree pub-innkeeper (repeat (sel
    (seq (wait-msg innkeeper-tasks timeout=8)
         (bind task-order $msg-order
           (send this-sa pub-prepared order=$task-order)))
    (act idle)))
  tree pub-waitress (repeat (sel
    (seq (wait-msg waitress-tasks timeout=8)
         (bind task-order $msg-order (seq
           (moveto $msg-guest)
           (act deliver-drink dur=2)
           (send this-sa pub-delivered order=$task-order))))
    (act idle)))
  tree pub-brain (act pub-coordinate)
  tree pub-onadopt (sel
    (seq (cond eq $event-behavior guest) (act assign-seat))
    (seq (cond eq $event-behavior innkeeper) (set-enabled drink-seated true))
    (succeed))
  tree pub-ondrop (sel
    (seq (cond eq $event-behavior guest) (act unassign-seat))
    (seq (cond eq $event-behavior innkeeper) (set-enabled drink-seated false))
    (succeed))
"""
    lines = [trees.strip(), "", "templates:", "  s-object chair:",
             "    behavior sit:", "      tree chair-sit", "      max-holders 1",
             "  s-area pub:",
             "    brain pub-brain period 1",
             "    on-adopt pub-onadopt",
             "    on-drop pub-ondrop",
             "    inbox pub-orders", "    inbox pub-prepared",
             "    inbox pub-delivered",
             f"    link seat s-object 1..{guests}",
             "    behavior guest:",
             "      tree pub-guest",
             f"      max-holders {guests}",
             "      inbox pub-guest",
             "      inbox drink-delivery",
             "    behavior waitress:",
             "      tree pub-waitress", "      max-holders 1",
             "      inbox waitress-tasks",
             "    behavior innkeeper:",
             "      tree pub-innkeeper", "      max-holders 1",
             "      inbox innkeeper-tasks",
             "    behavior drink-seated:",
             "      tree pub-drink-seated", "      enabled false", "      private",
             "world:",
             f"  grid {width} {height}",
             f"  area pub-1 pub {px} {py} {pub_w} {pub_h} anchor "
             f"{px + pub_w - 2} {py + pub_h - 2}"]
    for i in range(guests):
        cx = px + 1 + 2 * (i % cols)
        cy = py + 1 + 2 * (i // cols)
        lines.append(f"  object chair-{i} chair {cx} {cy}")
    for i in range(guests):
        lines.append(f"  link pub-1 seat chair-{i}")
    lines += ["npcs:"]
    staff = [("innkeeper-0", "innkeeper"), ("waitress-0", "waitress")]
    for name, behavior in staff:
        lines += [f"  npc {name}:", f"    at {px + pub_w + 2} {py + 2}",
                  "    daycycle:",
                  f"      window 0 100000 pub-1 {behavior}"]
    for i in range(guests):
        gx = px + pub_w + 2 + (i % 6)
        gy = py + 4 + (i // 6) % (height - py - 5)
        wealth = "rich" if i % 3 == 0 else "poor"
        lines += [f"  npc guest-{i}:", f"    at {gx} {gy}",
                  f"    attr wealth {wealth}",
                  "    daycycle:",
                  "      window 0 100000 pub-1 guest"]
    lines += ["run:", f"  seed {seed}", "  ticks 1000"]
    return "\n".join(lines) + "\n"


@dataclass
class BenchReport:
    npcs: int
    profile: str
    ticks: int
    mean_ms: float
    p99_ms: float
    max_ms: float
    node_evaluations: int

    def render(self) -> str:
        return (f"bench profile={self.profile} npcs={self.npcs} "
                f"ticks={self.ticks}: mean {self.mean_ms:.3f} ms/tick, "
                f"p99 {self.p99_ms:.3f} ms, max {self.max_ms:.3f} ms, "
                f"{self.node_evaluations} node evaluations")


def run_bench(npcs: int, profile: str, ticks: int, seed: int = 1,
              warmup: int = 50) -> BenchReport:
    text = simple_scenario(npcs, seed) if profile == "simple" \
        else complex_scenario(npcs, seed)
    world, _run = loader.load_text(text, seed=seed)
    for _ in range(warmup):
        world.step()
    world.collect_timing = True
    for _ in range(ticks):
        world.step()
    samples = sorted(world.ai_samples)
    if not samples:
        samples = [0.0]
    mean = sum(samples) / len(samples)
    p99 = samples[min(len(samples) - 1, int(len(samples) * 0.99))]
    return BenchReport(npcs, profile, ticks, mean * 1000, p99 * 1000,
                       samples[-1] * 1000, world.stats.node_evaluations)
