"""Grid navigation with navigation-object edges.

Cells cost 1 per step (4-connected); an edge costs its traversal duration and
may bridge otherwise disconnected components. Planning is Dijkstra with
deterministic (cost, lexicographic cell) tie-breaking.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field


@dataclass(frozen=True)
class NavEdge:
    instance_id: str
    entry: tuple
    exit: tuple
    duration: int = 2
    wait_timeout: int | None = None
    shortcut: bool = False  # endpoints may share a component

    def other_side(self, cell) -> tuple:
        return self.exit if cell == self.entry else self.entry


@dataclass
class Grid:
    width: int
    height: int
    blocked: set = field(default_factory=set)

    def in_bounds(self, cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def passable(self, cell) -> bool:
        return self.in_bounds(cell) and cell not in self.blocked

    def neighbors(self, cell):
        x, y = cell
        for nxt in ((x - 1, y), (x, y - 1), (x, y + 1), (x + 1, y)):
            if self.passable(nxt):
                yield nxt


def plan_path(grid: Grid, edges: list, start: tuple, goal: tuple):
    """Shortest path as a list of steps — cell tuples to walk to, or NavEdge
    items to traverse — or None when the goal is unreachable.

    A* with a Manhattan heuristic on pure grids; with nav edges present the
    heuristic drops to zero (an edge may shortcut space, which would make
    Manhattan inadmissible), reducing to Dijkstra. Tie-breaking is by
    (estimate, cost, lexicographic cell), which is deterministic."""
    if not grid.passable(start) or not grid.passable(goal):
        return None
    if start == goal:
        return []
    edge_at: dict[tuple, list[NavEdge]] = {}
    for edge in edges:
        edge_at.setdefault(edge.entry, []).append(edge)
        edge_at.setdefault(edge.exit, []).append(edge)
    gx, gy = goal
    use_h = not edges
    width, height = grid.width, grid.height
    blocked = grid.blocked
    best = {start: 0}
    prev: dict[tuple, tuple] = {}
    h0 = abs(start[0] - gx) + abs(start[1] - gy) if use_h else 0
    heap = [(h0, 0, start)]
    while heap:
        _est, cost, cell = heapq.heappop(heap)
        if cell == goal:
            break
        if cost > best.get(cell, cost):
            continue
        x, y = cell
        ncost = cost + 1
        for nxt in ((x - 1, y), (x, y - 1), (x, y + 1), (x + 1, y)):
            if not (0 <= nxt[0] < width and 0 <= nxt[1] < height) \
                    or nxt in blocked:
                continue
            if ncost < best.get(nxt, ncost + 1):
                best[nxt] = ncost
                prev[nxt] = (cell, None)
                est = ncost + (abs(nxt[0] - gx) + abs(nxt[1] - gy)
                               if use_h else 0)
                heapq.heappush(heap, (est, ncost, nxt))
        for edge in edge_at.get(cell, ()):
            far = edge.other_side(cell)
            ecost = cost + edge.duration
            if grid.passable(far) and ecost < best.get(far, ecost + 1):
                best[far] = ecost
                prev[far] = (cell, edge)
                heapq.heappush(heap, (ecost, ecost, far))
    if goal not in best:
        return None
    steps = []
    cell = goal
    while cell != start:
        came_from, via = prev[cell]
        steps.append(via if via is not None else cell)
        cell = came_from
    steps.reverse()
    return steps


def path_cost(path) -> int:
    cost = 0
    for item in path:
        cost += item.duration if isinstance(item, NavEdge) else 1
    return cost
