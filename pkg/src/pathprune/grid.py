"""Procedural occupancy-grid scenes in five scenario families, RGB rendering,
and deterministic shortest-path labels."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import ndimage

from .errors import GenerationExhausted, NoPath

FREE = 0
OBSTACLE = 1

# Canonical neighbor order wherever a tie-break matters: Up, Right, Down, Left.
NEIGHBOR_ORDER = ((-1, 0), (0, 1), (1, 0), (0, -1))

# 4-connectivity structuring element (von Neumann neighborhood).
PLUS_STRUCTURE = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)

# Pixel classes for rendered scenes.
COLOR_FREE = (255, 255, 255)
COLOR_OBSTACLE = (0, 0, 0)
COLOR_START = (255, 0, 0)
COLOR_GOAL = (0, 255, 0)

MAX_ATTEMPTS = 1000

FAMILY_KINDS = ("uniform_clutter", "rooms", "maze", "corridors", "diagonal_walls")

_FAMILY_DEFAULTS: dict[str, dict[str, float]] = {
    "uniform_clutter": {"p": 0.2},
    "rooms": {"room_size": 12, "door_width": 2, "clutter": 0.02},
    "maze": {"min_chamber": 4},
    "corridors": {"period": 7, "gaps": 2, "gap_width": 2, "clutter": 0.02},
    "diagonal_walls": {"spacing": 10, "gaps": 2, "clutter": 0.02},
}

_PARAM_RANGES: dict[tuple[str, str], tuple[float, float]] = {
    ("uniform_clutter", "p"): (0.0, 0.4),
    ("rooms", "room_size"): (4, 30),
    ("rooms", "door_width"): (1, 4),
    ("rooms", "clutter"): (0.0, 0.2),
    ("maze", "min_chamber"): (2, 20),
    ("corridors", "period"): (3, 20),
    ("corridors", "gaps"): (1, 10),
    ("corridors", "gap_width"): (1, 6),
    ("corridors", "clutter"): (0.0, 0.2),
    ("diagonal_walls", "spacing"): (4, 30),
    ("diagonal_walls", "gaps"): (1, 10),
    ("diagonal_walls", "clutter"): (0.0, 0.2),
}


@dataclass(frozen=True)
class ScenarioFamily:
    """One of the five built-in scene generators plus its parameters."""

    kind: str
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ValueError(f"unknown family kind {self.kind!r}, expected one of {FAMILY_KINDS}")
        merged = dict(_FAMILY_DEFAULTS[self.kind])
        for key, value in self.params.items():
            if (self.kind, key) not in _PARAM_RANGES:
                raise ValueError(f"family {self.kind!r} has no parameter {key!r}")
            lo, hi = _PARAM_RANGES[(self.kind, key)]
            if not (lo <= value <= hi):
                raise ValueError(f"{self.kind}.{key}={value} outside allowed range [{lo}, {hi}]")
            merged[key] = value
        object.__setattr__(self, "params", merged)


def make_family(kind: str, **params: float) -> ScenarioFamily:
    return ScenarioFamily(kind, params)


def default_families() -> list[ScenarioFamily]:
    return [ScenarioFamily(kind) for kind in FAMILY_KINDS]


@dataclass(eq=False)
class GridScene:
    """Occupancy grid with start/goal endpoints; the planning problem instance."""

    cells: np.ndarray  # (H, W) uint8, FREE or OBSTACLE
    start: tuple[int, int]
    goal: tuple[int, int]
    family: str
    seed: int

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    def __eq__(self, other):
        if not isinstance(other, GridScene):
            return NotImplemented
        return (
            np.array_equal(self.cells, other.cells)
            and self.start == other.start
            and self.goal == other.goal
            and self.family == other.family
            and self.seed == other.seed
        )

    def copy(self) -> "GridScene":
        return GridScene(self.cells.copy(), self.start, self.goal, self.family, self.seed)


@dataclass
class PathLabel:
    """Binary mask of one deterministic optimal path, plus the ordered cells."""

    mask: np.ndarray  # (H, W) uint8 in {0, 1}
    path_cells: list[tuple[int, int]]


def has_path(cells: np.ndarray, start: tuple[int, int], goal: tuple[int, int]) -> bool:
    """Start and goal lie in the same 4-connected free component."""
    if cells[start] != FREE or cells[goal] != FREE:
        return False
    labels, _ = ndimage.label(cells == FREE, structure=PLUS_STRUCTURE)
    return labels[start] == labels[goal] != 0


def make_scene(
    cells: np.ndarray,
    start: tuple[int, int],
    goal: tuple[int, int],
    family: str = "custom",
    seed: int = 0,
) -> GridScene:
    """Build a scene from explicit cells, enforcing all scene invariants."""
    cells = np.asarray(cells, dtype=np.uint8)
    h, w = cells.shape
    if h < 3 or w < 3:
        raise ValueError(f"grid must be at least 3x3, got {h}x{w}")
    if start == goal:
        raise ValueError("start and goal must differ")
    for name, cell in (("start", start), ("goal", goal)):
        r, c = cell
        if not (0 <= r < h and 0 <= c < w):
            raise ValueError(f"{name} {cell} out of bounds")
        if cells[cell] != FREE:
            raise ValueError(f"{name} {cell} is not a free cell")
    if not has_path(cells, start, goal):
        raise NoPath(f"no 4-connected free path from {start} to {goal}")
    return GridScene(cells, start, goal, family, seed)


# --------------------------- obstacle layouts --------------------------- #


def _layout_uniform_clutter(rng, h, w, params):
    cells = np.zeros((h, w), dtype=np.uint8)
    cells[rng.random((h, w)) < params["p"]] = OBSTACLE
    return cells


def _sprinkle(rng, cells, density):
    if density > 0:
        cells[rng.random(cells.shape) < density] = OBSTACLE


def _layout_rooms(rng, h, w, params):
    size = int(params["room_size"])
    door = int(params["door_width"])
    cells = np.zeros((h, w), dtype=np.uint8)
    row_walls = list(range(size, h - 1, size + 1))
    col_walls = list(range(size, w - 1, size + 1))
    for r in row_walls:
        cells[r, :] = OBSTACLE
    for c in col_walls:
        cells[:, c] = OBSTACLE
    # One door per wall segment between crossings.
    col_bounds = [0] + [c + 1 for c in col_walls] + [w]
    row_bounds = [0] + [r + 1 for r in row_walls] + [h]
    for r in row_walls:
        for c0, c1 in zip(col_bounds[:-1], [c for c in col_walls] + [w]):
            span = c1 - c0
            if span <= 0:
                continue
            width = min(door, span)
            at = c0 + int(rng.integers(0, span - width + 1))
            cells[r, at : at + width] = FREE
    for c in col_walls:
        for r0, r1 in zip(row_bounds[:-1], [r for r in row_walls] + [h]):
            span = r1 - r0
            if span <= 0:
                continue
            width = min(door, span)
            at = r0 + int(rng.integers(0, span - width + 1))
            cells[at : at + width, c] = FREE
    _sprinkle(rng, cells, params["clutter"])
    return cells


def _layout_maze(rng, h, w, params):
    min_chamber = int(params["min_chamber"])
    cells = np.zeros((h, w), dtype=np.uint8)

    def divide(r0, r1, c0, c1):
        height, width = r1 - r0, c1 - c0
        if height < 2 * min_chamber + 1 and width < 2 * min_chamber + 1:
            return
        if width > height or (width == height and rng.random() < 0.5):
            if width < 2 * min_chamber + 1:
                return
            wall = c0 + min_chamber + int(rng.integers(0, width - 2 * min_chamber))
            gap = r0 + int(rng.integers(0, height))
            cells[r0:r1, wall] = OBSTACLE
            cells[gap, wall] = FREE
            divide(r0, r1, c0, wall)
            divide(r0, r1, wall + 1, c1)
        else:
            if height < 2 * min_chamber + 1:
                return
            wall = r0 + min_chamber + int(rng.integers(0, height - 2 * min_chamber))
            gap = c0 + int(rng.integers(0, width))
            cells[wall, c0:c1] = OBSTACLE
            cells[wall, gap] = FREE
            divide(r0, wall, c0, c1)
            divide(wall + 1, r1, c0, c1)

    divide(0, h, 0, w)
    return cells


def _layout_corridors(rng, h, w, params):
    period = int(params["period"])
    gaps = int(params["gaps"])
    gap_width = int(params["gap_width"])
    cells = np.zeros((h, w), dtype=np.uint8)
    horizontal = rng.random() < 0.5
    length = w if horizontal else h
    lines = range(period, (h if horizontal else w) - 1, period + 1)
    for line in lines:
        if horizontal:
            cells[line, :] = OBSTACLE
        else:
            cells[:, line] = OBSTACLE
        for _ in range(gaps):
            at = int(rng.integers(0, max(1, length - gap_width + 1)))
            if horizontal:
                cells[line, at : at + gap_width] = FREE
            else:
                cells[at : at + gap_width, line] = FREE
    _sprinkle(rng, cells, params["clutter"])
    return cells


def _layout_diagonal_walls(rng, h, w, params):
    spacing = int(params["spacing"])
    gaps = int(params["gaps"])
    cells = np.zeros((h, w), dtype=np.uint8)
    # Diagonal lines r - c = offset; each blocks 4-connected crossing until gapped.
    for offset in range(-w + spacing, h - 1, spacing):
        line = [(r, r - offset) for r in range(h) if 0 <= r - offset < w]
        if len(line) < 3:
            continue
        for r, c in line:
            cells[r, c] = OBSTACLE
        for _ in range(gaps):
            at = int(rng.integers(0, len(line)))
            cells[line[at]] = FREE
    _sprinkle(rng, cells, params["clutter"])
    return cells


_LAYOUTS = {
    "uniform_clutter": _layout_uniform_clutter,
    "rooms": _layout_rooms,
    "maze": _layout_maze,
    "corridors": _layout_corridors,
    "diagonal_walls": _layout_diagonal_walls,
}


# ----------------------------- generation ------------------------------ #


def _sample_endpoints(rng, cells):
    """Start/goal uniformly over free cells at Manhattan distance >= (w + h) / 2."""
    h, w = cells.shape
    free = np.argwhere(cells == FREE)
    if len(free) < 2:
        return None
    min_dist = (w + h) / 2
    start = tuple(free[int(rng.integers(0, len(free)))])
    dists = np.abs(free[:, 0] - start[0]) + np.abs(free[:, 1] - start[1])
    candidates = free[dists >= min_dist]
    if len(candidates) == 0:
        return None
    goal = tuple(candidates[int(rng.integers(0, len(candidates)))])
    return (int(start[0]), int(start[1])), (int(goal[0]), int(goal[1]))


def generate_scene(
    family: ScenarioFamily, seed: int, *, width: int = 60, height: int = 60
) -> GridScene:
    """Generate a solvable scene; identical (family, seed) gives identical cells.

    Rejection-samples obstacle layouts and endpoints until a 4-connected
    start-to-goal path exists, up to MAX_ATTEMPTS tries.
    """
    if width < 3 or height < 3:
        raise ValueError("grid must be at least 3x3")
    rng = np.random.default_rng(seed)
    layout = _LAYOUTS[family.kind]
    for _ in range(MAX_ATTEMPTS):
        cells = layout(rng, height, width, family.params)
        endpoints = _sample_endpoints(rng, cells)
        if endpoints is None:
            continue
        start, goal = endpoints
        if has_path(cells, start, goal):
            return GridScene(cells, start, goal, family.kind, seed)
    raise GenerationExhausted(
        f"no solvable {family.kind} scene after {MAX_ATTEMPTS} attempts (seed={seed})"
    )


def perturb_scene(scene: GridScene, k: int, seed: int) -> GridScene:
    """Toggle exactly k obstacle cells (start/goal excluded), keeping solvability."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return scene.copy()
    h, w = scene.cells.shape
    flat_keep = {scene.start[0] * w + scene.start[1], scene.goal[0] * w + scene.goal[1]}
    candidates = np.array([i for i in range(h * w) if i not in flat_keep])
    if k > len(candidates):
        raise ValueError(f"k={k} exceeds the {len(candidates)} togglable cells")
    rng = np.random.default_rng(seed)
    for _ in range(MAX_ATTEMPTS):
        picks = rng.choice(candidates, size=k, replace=False)
        cells = scene.cells.copy()
        rows, cols = picks // w, picks % w
        cells[rows, cols] = 1 - cells[rows, cols]
        if has_path(cells, scene.start, scene.goal):
            return GridScene(cells, scene.start, scene.goal, scene.family, scene.seed)
    raise GenerationExhausted(f"no solvable perturbation with k={k} after {MAX_ATTEMPTS} attempts")


# ------------------------------- labels -------------------------------- #


def compute_label(scene: GridScene) -> PathLabel:
    """Deterministic optimal path via FIFO BFS with the canonical neighbor order."""
    h, w = scene.cells.shape
    parent = np.full((h, w, 2), -1, dtype=np.int32)
    seen = np.zeros((h, w), dtype=bool)
    queue: deque[tuple[int, int]] = deque([scene.start])
    seen[scene.start] = True
    found = False
    while queue:
        r, c = queue.popleft()
        if (r, c) == scene.goal:
            found = True
            break
        for dr, dc in NEIGHBOR_ORDER:
            nr, nc = r + dr, c + dc
            if 0 <= nr < h and 0 <= nc < w and not seen[nr, nc] and scene.cells[nr, nc] == FREE:
                seen[nr, nc] = True
                parent[nr, nc] = (r, c)
                queue.append((nr, nc))
    if not found:
        raise NoPath(f"scene has no path from {scene.start} to {scene.goal}")
    path = [scene.goal]
    while path[-1] != scene.start:
        r, c = path[-1]
        path.append((int(parent[r, c, 0]), int(parent[r, c, 1])))
    path.reverse()
    mask = np.zeros((h, w), dtype=np.uint8)
    for cell in path:
        mask[cell] = 1
    return PathLabel(mask, path)


# ------------------------------ rendering ------------------------------ #


def render_scene(scene: GridScene) -> np.ndarray:
    """Render to (H, W, 3) uint8. Free white, obstacle black, start red, goal green."""
    h, w = scene.cells.shape
    image = np.empty((h, w, 3), dtype=np.uint8)
    image[scene.cells == FREE] = COLOR_FREE
    image[scene.cells == OBSTACLE] = COLOR_OBSTACLE
    image[scene.start] = COLOR_START
    image[scene.goal] = COLOR_GOAL
    return image


def parse_image(image: np.ndarray, family: str = "parsed", seed: int = 0) -> GridScene:
    """Invert render_scene. Family and seed are provenance, not pixel content,
    so pass them explicitly when a full round-trip is needed."""
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValueError("expected an (H, W, 3) uint8 image")
    h, w = image.shape[:2]
    cells = np.zeros((h, w), dtype=np.uint8)
    start = goal = None
    classes = {COLOR_FREE: FREE, COLOR_OBSTACLE: OBSTACLE}
    for r in range(h):
        for c in range(w):
            pixel = tuple(int(v) for v in image[r, c])
            if pixel == COLOR_START:
                start = (r, c)
            elif pixel == COLOR_GOAL:
                goal = (r, c)
            elif pixel in classes:
                cells[r, c] = classes[pixel]
            else:
                raise ValueError(f"pixel {pixel} at {(r, c)} is not a scene class color")
    if start is None or goal is None:
        raise ValueError("image lacks a start or goal pixel")
    return GridScene(cells, start, goal, family, seed)
