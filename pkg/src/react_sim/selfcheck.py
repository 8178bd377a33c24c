"""Quick oracle comparisons run by ``react-sim selftest``."""
from __future__ import annotations

import math

import numpy as np

from . import oracles
from .config import bundled_map_text
from .energy import Battery
from .nav import NavConfig, NoPath, RobotState, astar, path_from_cells
from .orchestrator import LocalTarget, allocate
from .oros import SubareaGrid, Trip, build_subarea_grid, solve_oros
from .perception import OCCUPIED, OccupancyGrid, Priority, Rect, UnknownRegion, find_unknown_regions, merge
from .world import WorldMap, load_map, raycast


def random_free_point(world: WorldMap, rng: np.random.Generator) -> tuple[float, float]:
    free = np.argwhere(world.free)
    iy, ix = free[rng.integers(len(free))]
    c = world.cell_size_m
    return ((ix + rng.uniform(0.05, 0.95)) * c, (iy + rng.uniform(0.05, 0.95)) * c)


def check_raycast(n: int, rng) -> tuple[bool, str]:
    world = load_map(bundled_map_text("factory.map"))
    worst = 0.0
    for _ in range(n):
        origin = random_free_point(world, rng)
        angle = rng.uniform(0, 2 * math.pi)
        d, _ = raycast(world, origin, angle, 8.0)
        ref, _ = oracles.step_march(world.occupied, world.cell_size_m, origin, angle, 8.0)
        worst = max(worst, abs(d - ref))
    return bool(worst <= world.cell_size_m), f"max error {worst:.4f} m over {n} rays"


def check_merge(n: int, rng) -> tuple[bool, str]:
    for _ in range(n):
        shape = tuple(rng.integers(1, 12, size=2))
        a, b = (rng.integers(0, 3, size=shape).astype(np.int8) for _ in range(2))
        got = merge([OccupancyGrid(shape, 0.25, a), OccupancyGrid(shape, 0.25, b)]).cells
        if not np.array_equal(got, oracles.cellwise_max(a, b)):
            return False, f"mismatch on shape {shape}"
    return True, f"{n} grid pairs"


def check_regions(n: int, rng) -> tuple[bool, str]:
    for _ in range(n):
        ny, nx = rng.integers(4, 16, size=2)
        cells = rng.choice([0, 1, 2], size=(ny, nx), p=[0.45, 0.4, 0.15]).astype(np.int8)
        grid = OccupancyGrid((ny, nx), 0.25, cells)
        iy0, ix0 = rng.integers(0, ny // 2), rng.integers(0, nx // 2)
        rect = Rect(int(iy0), int(ny), int(ix0), int(nx))
        got = {frozenset(divmod(int(c), nx) for c in r.cells) for r in find_unknown_regions(grid, rect, 3)}
        ref = oracles.flood_regions(cells == 0, rect.iy0, rect.iy1, rect.ix0, rect.ix1, 3)
        if got != ref:
            return False, f"region sets differ on a {ny}x{nx} grid"
    return True, f"{n} grids"


def check_paths(n: int, rng) -> tuple[bool, str]:
    for _ in range(n):
        passable = rng.random((20, 20)) > 0.3
        s, g = tuple(rng.integers(0, 20, 2)), tuple(rng.integers(0, 20, 2))
        passable[s] = passable[g] = True
        ref = oracles.ucs_length(passable, s, g, 0.25)
        try:
            got = path_from_cells(astar(passable, s, g, 0.25), 0.25).length_m
        except NoPath:
            got = math.inf
        if not (got == ref or abs(got - ref) < 1e-9):
            return False, f"length {got} vs {ref}"
    return True, f"{n} random 20x20 maps"


def toy_subareas(A: int, B: int) -> SubareaGrid:
    occ = np.zeros((A * 8, B * 8), dtype=bool)
    world = WorldMap(B * 2.0, A * 2.0, 0.25, occ, ((1.0, 1.0),))
    return build_subarea_grid(world, 2.0)


def random_oros_instance(rng, R: int, S: int):
    sg = toy_subareas(1, S)
    cap = 1000.0
    robots = [RobotState(i, (1.0, 1.0), Battery(cap, float(rng.uniform(100, cap)))) for i in range(R)]
    trips = {}
    for r in robots:
        for s in sg.all_subareas():
            if rng.random() < 0.8:
                t = float(rng.uniform(5, 120))
                trips[(r.id, s)] = Trip(r.id, s, path_from_cells([(0, 0)], 0.25), [True], t, float(rng.uniform(10, 400)))
    return sg, robots, trips


def check_oros(n: int, rng) -> tuple[bool, str]:
    for _ in range(n):
        R, S = int(rng.integers(1, 4)), int(rng.integers(1, 6))
        sg, robots, trips = random_oros_instance(rng, R, S)
        sigma = float(rng.uniform(0, 0.01))
        plan = solve_oros(sg, robots, sigma, 60.0, trips)
        ref = oracles.best_assignment_value(
            [r.id for r in robots], sg.all_subareas(),
            lambda rid, s: (trips[(rid, s)].time_s, trips[(rid, s)].energy_j) if (rid, s) in trips else None,
            {r.id: r.charge_j for r in robots}, sigma, 60.0,
        )
        if abs(plan.objective - ref) > 1e-9:
            return False, f"objective {plan.objective} vs {ref}"
    return True, f"{n} instances up to 3 robots x 5 subareas"


def allocation_instance(rng, lam: float = 5.0):
    """Three robots and three single-cell targets on an open 12x12 grid."""
    grid = OccupancyGrid((12, 12), 0.25, np.ones((12, 12), dtype=np.int8))
    grid.cells[0, :] = grid.cells[-1, :] = grid.cells[:, 0] = grid.cells[:, -1] = OCCUPIED
    spots = rng.choice(100, size=6, replace=False)
    cells = [(1 + int(f) // 10, 1 + int(f) % 10) for f in spots]
    robots = [
        RobotState(i, grid.cell_center(*cells[i]), Battery(100.0, float(rng.integers(10, 101))))
        for i in range(3)
    ]
    targets = []
    for k in range(3):
        iy, ix = cells[3 + k]
        grid.cells[iy, ix] = 0
        flat = np.array([iy * 12 + ix])
        targets.append(LocalTarget(k, UnknownRegion(flat, grid.cell_center(iy, ix)), Priority.HIGH, k, (0, 0)))
    return grid, robots, targets, lam


def allocation_scores(grid, robots, targets, lam) -> np.ndarray:
    """Score matrix from oracle path lengths to each target's nearest free neighbour."""
    passable = grid.cells == 1
    score = np.empty((len(robots), len(targets)))
    for i, r in enumerate(robots):
        start = grid.cell_of(*r.pose)
        for k, t in enumerate(targets):
            iy, ix = divmod(int(t.cells[0]), grid.shape[1])
            best = min(
                oracles.ucs_length(passable, start, (iy + dy, ix + dx), grid.cell_size_m)
                for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1))
                if passable[iy + dy, ix + dx]
            )
            score[i, k] = best - lam * r.charge_j / r.capacity_j
    return score


def check_allocate(n: int, rng) -> tuple[bool, str]:
    for _ in range(n):
        grid, robots, targets, lam = allocation_instance(rng)
        got, _ = allocate(targets, robots, grid, NavConfig(robot_radius_m=0.0), lam=lam, with_paths=False)
        score = allocation_scores(grid, robots, targets, lam)
        total = sum(score[a.robot_id, a.target.target_id] for a in got)
        if len(got) != 3 or not any(abs(total - p) < 1e-9 for p in oracles.permutation_scores(score)):
            return False, "greedy total is not a permutation total"
        flat = np.sort(score.ravel())
        if np.all(np.diff(flat) > 1e-9):
            # no near ties, so the pairing itself must agree
            pairs = {a.robot_id: a.target.target_id for a in got}
            if pairs != oracles.greedy_by_enumeration(score):
                return False, "greedy pairing differs from enumeration"
    return True, f"{n} 3x3 instances"


CHECKS = {
    "raycast": (check_raycast, 200),
    "merge": (check_merge, 50),
    "regions": (check_regions, 30),
    "plan_path": (check_paths, 50),
    "solve_oros": (check_oros, 50),
    "allocate": (check_allocate, 20),
}


def run_checks(seed: int = 0):
    rng = np.random.default_rng(seed)
    for name, (fn, n) in CHECKS.items():
        ok, detail = fn(n, rng)
        yield name, ok, detail
