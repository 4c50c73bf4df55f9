"""Shared fixtures, independent oracles, and acceptance-line reporting."""

from __future__ import annotations

import numpy as np
import pytest

from pathprune.grid import FREE, GridScene, make_scene

# Lines registered by the acceptance tests; echoed in the terminal summary so
# they are visible without -s.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


# ------------------------------- oracles -------------------------------- #


def oracle_bfs_cost(cells: np.ndarray, start, goal) -> int | None:
    """Layer-by-layer BFS distance, independent of the package planners."""
    if cells[start] != FREE or cells[goal] != FREE:
        return None
    h, w = cells.shape
    seen = {start}
    frontier = [start]
    dist = 0
    while frontier:
        if goal in frontier:
            return dist
        nxt = []
        for r, c in frontier:
            for nr, nc in ((r - 1, c), (r, c + 1), (r + 1, c), (r, c - 1)):
                if 0 <= nr < h and 0 <= nc < w and cells[nr, nc] == FREE and (nr, nc) not in seen:
                    seen.add((nr, nc))
                    nxt.append((nr, nc))
        frontier = nxt
        dist += 1
    return None


def oracle_value_iteration(mdp, gamma, tol=1e-10, max_iters=100_000):
    """Dynamic-programming solution of a NavMDP; returns (V, Q) arrays."""
    h, w = mdp.scene.cells.shape
    v = np.zeros((h, w))
    goal = mdp.scene.goal
    for _ in range(max_iters):
        q = np.zeros((h, w, 4))
        for r in range(h):
            for c in range(w):
                if mdp.scene.cells[r, c] != FREE or (r, c) == goal:
                    continue
                for a in range(4):
                    nxt, reward, done = mdp.step((r, c), a)
                    q[r, c, a] = reward if done else reward + gamma * v[nxt]
        new_v = q.max(axis=2)
        new_v[mdp.scene.cells != FREE] = 0.0
        new_v[goal] = 0.0
        if np.abs(new_v - v).max() < tol:
            return new_v, q
        v = new_v
    return v, q


# ------------------------------ fixtures -------------------------------- #


def empty_scene(h: int, w: int, start, goal) -> GridScene:
    return make_scene(np.zeros((h, w), dtype=np.uint8), start, goal)


def corridor_scene(length: int = 5) -> GridScene:
    """Open corridor of the given length walled above and below (row 1 of a
    3-row grid), start at the left end, goal at the right end."""
    cells = np.ones((3, length), dtype=np.uint8)
    cells[1, :] = FREE
    return make_scene(cells, (1, 0), (1, length - 1), family="corridor")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_solvable_scene(rng, h=10, w=10, p=0.25):
    """Rejection-sample a small random scene with a BFS-verified path."""
    while True:
        cells = (rng.random((h, w)) < p).astype(np.uint8)
        free = np.argwhere(cells == FREE)
        if len(free) < 2:
            continue
        start = tuple(free[rng.integers(len(free))])
        goal = tuple(free[rng.integers(len(free))])
        if start == goal:
            continue
        if oracle_bfs_cost(cells, start, goal) is not None:
            return GridScene(cells, start, goal, "test", 0)
