import numpy as np
import pytest

from pathprune import masking, planners
from pathprune.errors import MaskFailed
from pathprune.grid import compute_label, generate_scene, make_family
from pathprune.masking import MaskConfig

from conftest import empty_scene, oracle_bfs_cost, random_solvable_scene


class TestBinarize:
    def test_all_below_threshold(self):
        assert masking.binarize(np.full((4, 4), 0.4), 0.5).sum() == 0

    def test_threshold_is_inclusive(self):
        assert masking.binarize(np.full((4, 4), 0.5), 0.5).all()

    def test_counts_match(self, rng):
        probs = rng.random((10, 10))
        mask = masking.binarize(probs, 0.3)
        assert mask.sum() == (probs >= 0.3).sum()

    def test_threshold_bounds(self):
        with pytest.raises(ValueError):
            masking.binarize(np.zeros((2, 2)), 0.0)
        with pytest.raises(ValueError):
            masking.binarize(np.zeros((2, 2)), 1.0)

    def test_monotone_in_threshold(self, rng):
        probs = rng.random((12, 12))
        low = masking.binarize(probs, 0.3)
        high = masking.binarize(probs, 0.7)
        assert (high <= low).all()


class TestDilate:
    def test_single_cell_plus_shape(self):
        mask = np.zeros((5, 5), dtype=bool)
        mask[2, 2] = True
        out = masking.dilate(mask, 1)
        expected = {(2, 2), (1, 2), (3, 2), (2, 1), (2, 3)}
        assert {tuple(c) for c in np.argwhere(out)} == expected

    def test_clipped_at_border(self):
        mask = np.zeros((3, 3), dtype=bool)
        mask[0, 0] = True
        assert masking.dilate(mask, 1).sum() == 3

    def test_radius_zero_identity(self, rng):
        mask = rng.random((8, 8)) < 0.3
        out = masking.dilate(mask, 0)
        assert np.array_equal(out, mask)
        assert out is not mask

    def test_composition_law(self, rng):
        mask = rng.random((10, 10)) < 0.15
        twice = masking.dilate(masking.dilate(mask, 1), 1)
        assert np.array_equal(twice, masking.dilate(mask, 2))

    def test_negative_radius(self):
        with pytest.raises(ValueError):
            masking.dilate(np.zeros((2, 2), dtype=bool), -1)


class TestPlanWithMask:
    def test_full_mask_identical_to_unrestricted(self):
        scene = generate_scene(make_family("uniform_clutter", p=0.2), seed=5, width=20, height=20)
        probs = np.full(scene.cells.shape, 1.0 - 1e-6)
        outcome = masking.plan_with_mask(scene, probs)
        full = planners.dijkstra(scene)
        assert not outcome.used_fallback
        assert outcome.result.cost == full.cost
        assert outcome.result.expansions == full.expansions
        assert outcome.reduction_expansions == 0.0

    def test_label_masks_reach_optimal_cost(self, rng):
        fam = make_family("uniform_clutter", p=0.2)
        cfg = MaskConfig(threshold=0.5, dilation_radius=1)
        for seed in range(100):
            scene = generate_scene(fam, seed=seed, width=20, height=20)
            label = compute_label(scene)
            probs = np.where(label.mask > 0, 0.9, 0.1)
            outcome = masking.plan_with_mask(scene, probs, cfg)
            assert outcome.result.found
            assert outcome.result.cost == oracle_bfs_cost(scene.cells, scene.start, scene.goal)
            assert outcome.result.expansions <= outcome.mask_size

    def test_empty_mask_falls_back(self):
        scene = generate_scene(make_family("uniform_clutter", p=0.2), seed=6, width=20, height=20)
        probs = np.full(scene.cells.shape, 1e-6)
        outcome = masking.plan_with_mask(scene, probs)
        full = planners.dijkstra(scene)
        assert outcome.used_fallback
        assert outcome.result.cost == full.cost
        assert outcome.result.path == full.path
        # pipeline cost includes the failed restricted attempt
        assert outcome.masked_expansions > full.expansions

    def test_fallback_disabled_raises(self):
        scene = empty_scene(5, 5, (0, 0), (4, 4))
        probs = np.full((5, 5), 1e-6)
        cfg = MaskConfig(fallback=masking.FALLBACK_FAIL)
        with pytest.raises(MaskFailed):
            masking.plan_with_mask(scene, probs, cfg)

    def test_fallback_never_returns_no_path(self, rng):
        for _ in range(40):
            scene = random_solvable_scene(rng)
            probs = rng.random(scene.cells.shape)
            outcome = masking.plan_with_mask(scene, probs)
            assert outcome.result.found

    def test_expansion_bound(self, rng):
        for _ in range(40):
            scene = random_solvable_scene(rng)
            probs = rng.random(scene.cells.shape)
            outcome = masking.plan_with_mask(scene, probs)
            if not outcome.used_fallback:
                assert outcome.result.expansions <= outcome.mask_size + 2

    def test_region_monotone_in_threshold(self, rng):
        scene = random_solvable_scene(rng)
        probs = rng.random(scene.cells.shape)
        low = masking.build_region(probs, scene, MaskConfig(threshold=0.3))
        high = masking.build_region(probs, scene, MaskConfig(threshold=0.8))
        assert (high <= low).all()

    def test_region_includes_endpoints(self, rng):
        scene = random_solvable_scene(rng)
        region = masking.build_region(np.zeros(scene.cells.shape), scene, MaskConfig())
        assert region[scene.start] and region[scene.goal]

    def test_astar_variant(self):
        scene = generate_scene(make_family("rooms"), seed=2, width=20, height=20)
        label = compute_label(scene)
        probs = np.where(label.mask > 0, 0.9, 0.1)
        outcome = masking.plan_with_mask(scene, probs, planner="astar")
        assert outcome.result.cost == planners.dijkstra(scene).cost


class TestReductionPct:
    def test_clamped_at_floor(self):
        assert masking.reduction_pct(1.0, 1e6) == -999.0

    def test_zero_full_is_zero(self):
        assert masking.reduction_pct(0.0, 5.0) == 0.0

    def test_plain_value(self):
        assert masking.reduction_pct(200, 100) == 50.0
