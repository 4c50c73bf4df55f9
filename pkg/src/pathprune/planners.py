"""Instrumented classical grid search: BFS, Dijkstra, and A*, optionally
restricted to a region mask.

Expansions count settled nodes (first pop per cell). All three planners use
the canonical neighbor order Up, Right, Down, Left and break priority ties by
insertion counter, so paths and expansion counts are fully deterministic;
wall time is the only nondeterministic field.
"""

from __future__ import annotations

import heapq
import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import RegionExcludesEndpoints
from .grid import FREE, NEIGHBOR_ORDER, GridScene

FOUND = "found"
NO_PATH = "no_path"

ZERO = "zero"
MANHATTAN = "manhattan"


@dataclass
class PlanResult:
    status: str  # FOUND or NO_PATH
    path: list[tuple[int, int]]  # empty iff NO_PATH
    cost: int
    expansions: int
    wall_time: float

    @property
    def found(self) -> bool:
        return self.status == FOUND


def _check_region(scene: GridScene, region: np.ndarray | None) -> None:
    if region is None:
        return
    if region.shape != scene.cells.shape:
        raise RegionExcludesEndpoints(f"region shape {region.shape} != grid {scene.cells.shape}")
    if not (region[scene.start] and region[scene.goal]):
        raise RegionExcludesEndpoints("region must contain both start and goal")


def _passable(scene: GridScene, region: np.ndarray | None) -> np.ndarray:
    passable = scene.cells == FREE
    if region is not None:
        passable &= region.astype(bool)
    return passable


def _reconstruct(parent: dict, goal) -> list[tuple[int, int]]:
    path = [goal]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    path.reverse()
    return path


def bfs_shortest(scene: GridScene, region: np.ndarray | None = None) -> PlanResult:
    """Unit-cost shortest path by FIFO breadth-first search."""
    _check_region(scene, region)
    t0 = time.perf_counter()
    passable = _passable(scene, region)
    h, w = passable.shape
    start, goal = scene.start, scene.goal
    parent: dict = {start: None}
    dist = {start: 0}
    queue: deque = deque([start])
    expansions = 0
    while queue:
        cell = queue.popleft()
        expansions += 1
        if cell == goal:
            path = _reconstruct(parent, goal)
            return PlanResult(FOUND, path, dist[goal], expansions, time.perf_counter() - t0)
        r, c = cell
        for dr, dc in NEIGHBOR_ORDER:
            nxt = (r + dr, c + dc)
            if 0 <= nxt[0] < h and 0 <= nxt[1] < w and passable[nxt] and nxt not in dist:
                dist[nxt] = dist[cell] + 1
                parent[nxt] = cell
                queue.append(nxt)
    return PlanResult(NO_PATH, [], 0, expansions, time.perf_counter() - t0)


def dijkstra(scene: GridScene, region: np.ndarray | None = None) -> PlanResult:
    """Uniform-cost search; priority (distance, insertion counter)."""
    _check_region(scene, region)
    t0 = time.perf_counter()
    passable = _passable(scene, region)
    h, w = passable.shape
    start, goal = scene.start, scene.goal
    best = {start: 0}
    parent: dict = {start: None}
    settled = set()
    counter = 0
    heap: list = [(0, counter, start)]
    expansions = 0
    while heap:
        d, _, cell = heapq.heappop(heap)
        if cell in settled:
            continue
        settled.add(cell)
        expansions += 1
        if cell == goal:
            path = _reconstruct(parent, goal)
            return PlanResult(FOUND, path, d, expansions, time.perf_counter() - t0)
        r, c = cell
        for dr, dc in NEIGHBOR_ORDER:
            nxt = (r + dr, c + dc)
            if 0 <= nxt[0] < h and 0 <= nxt[1] < w and passable[nxt] and nxt not in settled:
                nd = d + 1
                if nd < best.get(nxt, nd + 1):
                    best[nxt] = nd
                    parent[nxt] = cell
                    counter += 1
                    heapq.heappush(heap, (nd, counter, nxt))
    return PlanResult(NO_PATH, [], 0, expansions, time.perf_counter() - t0)


def astar(
    scene: GridScene, region: np.ndarray | None = None, heuristic: str = MANHATTAN
) -> PlanResult:
    """A* with an admissible heuristic; ZERO reproduces Dijkstra expansion for
    expansion (same priority discipline and tie-break counter)."""
    if heuristic not in (ZERO, MANHATTAN):
        raise ValueError(f"unknown heuristic {heuristic!r}")
    _check_region(scene, region)
    t0 = time.perf_counter()
    passable = _passable(scene, region)
    h, w = passable.shape
    start, goal = scene.start, scene.goal

    if heuristic == MANHATTAN:
        def h_of(cell):
            return abs(cell[0] - goal[0]) + abs(cell[1] - goal[1])
    else:
        def h_of(cell):
            return 0

    best = {start: 0}
    parent: dict = {start: None}
    settled = set()
    counter = 0
    heap: list = [(h_of(start), counter, start)]
    expansions = 0
    while heap:
        _, _, cell = heapq.heappop(heap)
        if cell in settled:
            continue
        settled.add(cell)
        expansions += 1
        if cell == goal:
            path = _reconstruct(parent, goal)
            return PlanResult(FOUND, path, best[goal], expansions, time.perf_counter() - t0)
        g = best[cell]
        r, c = cell
        for dr, dc in NEIGHBOR_ORDER:
            nxt = (r + dr, c + dc)
            if 0 <= nxt[0] < h and 0 <= nxt[1] < w and passable[nxt] and nxt not in settled:
                ng = g + 1
                if ng < best.get(nxt, ng + 1):
                    best[nxt] = ng
                    parent[nxt] = cell
                    counter += 1
                    heapq.heappush(heap, (ng + h_of(nxt), counter, nxt))
    return PlanResult(NO_PATH, [], 0, expansions, time.perf_counter() - t0)


PLANNERS = {"bfs": bfs_shortest, "dijkstra": dijkstra, "astar": astar}
