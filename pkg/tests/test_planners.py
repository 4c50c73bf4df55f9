import numpy as np
import pytest

from pathprune import planners
from pathprune.errors import RegionExcludesEndpoints
from pathprune.grid import FREE, OBSTACLE, GridScene

from conftest import corridor_scene, empty_scene, oracle_bfs_cost, random_solvable_scene


def path_is_valid(scene, region, result):
    if not result.found:
        return result.path == []
    if result.path[0] != scene.start or result.path[-1] != scene.goal:
        return False
    for a, b in zip(result.path, result.path[1:]):
        if abs(a[0] - b[0]) + abs(a[1] - b[1]) != 1:
            return False
    for cell in result.path:
        if scene.cells[cell] != FREE:
            return False
        if region is not None and not region[cell]:
            return False
    return result.cost == len(result.path) - 1


class TestBfs:
    def test_3x3_diagonal_cost(self):
        result = planners.bfs_shortest(empty_scene(3, 3, (0, 0), (2, 2)))
        assert result.found and result.cost == 4

    def test_blocked_column_no_path(self):
        cells = np.zeros((3, 3), dtype=np.uint8)
        cells[:, 1] = OBSTACLE
        scene = GridScene(cells, (0, 0), (0, 2), "t", 0)
        result = planners.bfs_shortest(scene)
        assert not result.found and result.path == []

    def test_matches_dijkstra_on_random_scenes(self, rng):
        for _ in range(200):
            scene = random_solvable_scene(rng)
            assert planners.bfs_shortest(scene).cost == planners.dijkstra(scene).cost


class TestDijkstra:
    def test_corridor_expansions(self):
        result = planners.dijkstra(corridor_scene(5))
        assert result.found and result.cost == 4 and result.expansions == 5

    def test_cost_matches_oracle(self, rng):
        for _ in range(200):
            scene = random_solvable_scene(rng)
            assert planners.dijkstra(scene).cost == oracle_bfs_cost(
                scene.cells, scene.start, scene.goal
            )

    def test_region_restriction(self):
        scene = empty_scene(3, 3, (0, 0), (0, 2))
        region = np.zeros((3, 3), dtype=bool)
        region[0, :] = True
        result = planners.dijkstra(scene, region)
        assert result.found and result.cost == 2 and result.expansions <= 3
        assert path_is_valid(scene, region, result)

    def test_region_must_hold_endpoints(self):
        scene = empty_scene(3, 3, (0, 0), (2, 2))
        region = np.zeros((3, 3), dtype=bool)
        region[0, 0] = True
        with pytest.raises(RegionExcludesEndpoints):
            planners.dijkstra(scene, region)


class TestAstar:
    def test_zero_heuristic_identical_to_dijkstra(self, rng):
        for _ in range(100):
            scene = random_solvable_scene(rng)
            d = planners.dijkstra(scene)
            z = planners.astar(scene, heuristic=planners.ZERO)
            assert (d.path, d.cost, d.expansions) == (z.path, z.cost, z.expansions)

    def test_manhattan_cost_equals_dijkstra(self, rng):
        for _ in range(200):
            scene = random_solvable_scene(rng)
            a = planners.astar(scene, heuristic=planners.MANHATTAN)
            d = planners.dijkstra(scene)
            assert a.cost == d.cost
            assert path_is_valid(scene, None, a)

    def test_3x3_manhattan(self):
        result = planners.astar(empty_scene(3, 3, (0, 0), (2, 2)))
        assert result.cost == 4

    def test_unknown_heuristic(self):
        with pytest.raises(ValueError):
            planners.astar(empty_scene(3, 3, (0, 0), (2, 2)), heuristic="euclid")


class TestInvariants:
    def test_monotone_region_property(self, rng):
        # A region containing an optimal path yields the full-grid cost.
        for _ in range(60):
            scene = random_solvable_scene(rng)
            full = planners.dijkstra(scene)
            region = np.zeros(scene.cells.shape, dtype=bool)
            for cell in full.path:
                region[cell] = True
            restricted = planners.dijkstra(scene, region)
            assert restricted.cost == full.cost

    def test_expansion_bound(self, rng):
        for _ in range(60):
            scene = random_solvable_scene(rng)
            region = np.ones(scene.cells.shape, dtype=bool)
            for planner in (planners.bfs_shortest, planners.dijkstra, planners.astar):
                assert planner(scene, region).expansions <= region.sum()

    def test_determinism_excluding_wall_time(self, rng):
        scene = random_solvable_scene(rng, h=15, w=15)
        for planner in (planners.bfs_shortest, planners.dijkstra, planners.astar):
            a = planner(scene)
            b = planner(scene)
            assert (a.path, a.cost, a.expansions) == (b.path, b.cost, b.expansions)

    def test_wall_time_populated(self):
        assert planners.dijkstra(empty_scene(3, 3, (0, 0), (2, 2))).wall_time >= 0.0
