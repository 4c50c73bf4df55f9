"""Turn encoder probabilities into a hard search region and run a planner
restricted to it, with full-grid fallback and paired reduction metrics."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import MaskFailed, NoPathAnywhere
from .grid import PLUS_STRUCTURE, GridScene
from .planners import PlanResult, astar, dijkstra

FALLBACK_FULL_GRID = "full_grid"
FALLBACK_FAIL = "fail"

REDUCTION_FLOOR = -999.0

MASK_PLANNERS = {
    "dijkstra": lambda scene, region: dijkstra(scene, region),
    "astar": lambda scene, region: astar(scene, region, "manhattan"),
}


@dataclass(frozen=True)
class MaskConfig:
    threshold: float = 0.5
    dilation_radius: int = 2
    fallback: str = FALLBACK_FULL_GRID

    def __post_init__(self):
        if not (0.0 < self.threshold < 1.0):
            raise ValueError("threshold must be in (0, 1)")
        if self.dilation_radius < 0:
            raise ValueError("dilation radius must be >= 0")
        if self.fallback not in (FALLBACK_FULL_GRID, FALLBACK_FAIL):
            raise ValueError(f"unknown fallback mode {self.fallback!r}")


@dataclass
class MaskedPlanOutcome:
    result: PlanResult
    used_fallback: bool
    mask_size: int
    reduction_expansions: float  # percent vs the paired full-grid run
    reduction_time: float
    # Pipeline totals; include the fallback rerun when it happened.
    masked_expansions: int
    masked_time: float
    full_expansions: int
    full_time: float


def binarize(probs: np.ndarray, threshold: float) -> np.ndarray:
    """Boolean mask of cells with probability >= threshold (inclusive)."""
    if not (0.0 < threshold < 1.0):
        raise ValueError("threshold must be in (0, 1)")
    return np.asarray(probs) >= threshold


def dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """radius steps of 4-neighbor morphological dilation; radius 0 is identity."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    mask = np.asarray(mask, dtype=bool)
    if radius == 0 or not mask.any():
        return mask.copy()
    return ndimage.binary_dilation(mask, structure=PLUS_STRUCTURE, iterations=radius)


def build_region(
    probs: np.ndarray, scene: GridScene, cfg: MaskConfig
) -> np.ndarray:
    """dilate(binarize(probs)) with start and goal force-included."""
    region = dilate(binarize(probs, cfg.threshold), cfg.dilation_radius)
    region[scene.start] = True
    region[scene.goal] = True
    return region


def reduction_pct(full: float, masked: float) -> float:
    """100 * (full - masked) / full, clamped into [-999, 100]."""
    if full <= 0:
        return 0.0
    return float(np.clip(100.0 * (full - masked) / full, REDUCTION_FLOOR, 100.0))


def plan_with_mask(
    scene: GridScene,
    probs: np.ndarray,
    cfg: MaskConfig = MaskConfig(),
    planner: str = "dijkstra",
) -> MaskedPlanOutcome:
    """Plan inside the probability-derived region, falling back to the full
    grid when the restricted search fails.

    Reductions compare the total masked-pipeline cost (restricted run plus
    fallback rerun, when taken) against a fresh paired full-grid run of the
    same planner, so a useless mask shows up as a negative reduction.
    """
    if probs.shape != scene.cells.shape:
        raise ValueError(f"probs {probs.shape} does not match grid {scene.cells.shape}")
    run = MASK_PLANNERS[planner]

    region = build_region(probs, scene, cfg)
    restricted = run(scene, region)
    masked_expansions = restricted.expansions
    masked_time = restricted.wall_time
    used_fallback = False
    result = restricted
    if not restricted.found:
        if cfg.fallback == FALLBACK_FAIL:
            raise MaskFailed("restricted search found no path and fallback is disabled")
        used_fallback = True
        rerun = run(scene, None)
        masked_expansions += rerun.expansions
        masked_time += rerun.wall_time
        result = rerun
        if not rerun.found:
            raise NoPathAnywhere(f"scene {scene.family}/{scene.seed} is unsolvable")

    full = run(scene, None)
    if not full.found:
        raise NoPathAnywhere(f"scene {scene.family}/{scene.seed} is unsolvable")

    return MaskedPlanOutcome(
        result=result,
        used_fallback=used_fallback,
        mask_size=int(region.sum()),
        reduction_expansions=reduction_pct(full.expansions, masked_expansions),
        reduction_time=reduction_pct(full.wall_time, masked_time),
        masked_expansions=masked_expansions,
        masked_time=masked_time,
        full_expansions=full.expansions,
        full_time=full.wall_time,
    )
