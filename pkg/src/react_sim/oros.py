"""High-level layer: subarea grid, explored flags and robot-to-subarea plans.

The full-mission objective (explored subareas summed over time plus a
weighted terminal battery sum) is solved as a receding horizon: each call
assigns the requesting robots to unexplored subareas for one round.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .energy import PowerProfile, step_energy
from .nav import NavConfig, Path, RobotState
from .perception import OccupancyGrid, Rect
from .world import WorldMap, observable_cells

EXHAUSTIVE_MAX_ROBOTS = 3
EXHAUSTIVE_MAX_SUBAREAS = 8


@dataclass
class SubareaGrid:
    dims: tuple[int, int]
    subarea_size_m: float
    cell_size_m: float
    rects: list[list[Rect]]
    centroids: np.ndarray  # (A, B, 2) meters
    observable: np.ndarray  # bool raster; cells that count toward coverage
    explored: np.ndarray = field(default=None)
    coverage: np.ndarray = field(default=None)
    exception: np.ndarray = field(default=None)
    swept: np.ndarray = field(default=None)

    def __post_init__(self):
        shape = self.dims
        if self.explored is None:
            self.explored = np.zeros(shape, dtype=bool)
        if self.coverage is None:
            self.coverage = np.zeros(shape)
        if self.exception is None:
            self.exception = np.zeros(shape, dtype=bool)
        if self.swept is None:
            self.swept = np.zeros(shape, dtype=bool)
        self._denominators = np.array(
            [[int(self.observable[r.slices].sum()) for r in row] for row in self.rects], dtype=np.int64
        )
        cell_owner = np.zeros(self.observable.shape, dtype=np.int64)
        for a, row in enumerate(self.rects):
            for b, r in enumerate(row):
                cell_owner[r.slices] = a * self.dims[1] + b
        self._owner = cell_owner

    def rect(self, a: int, b: int) -> Rect:
        return self.rects[a][b]

    def centroid(self, a: int, b: int) -> tuple[float, float]:
        return (float(self.centroids[a, b, 0]), float(self.centroids[a, b, 1]))

    def subarea_of_cell(self, iy: int, ix: int) -> tuple[int, int]:
        return divmod(int(self._owner[iy, ix]), self.dims[1])

    def subarea_of_point(self, x: float, y: float) -> tuple[int, int]:
        c = self.cell_size_m
        return self.subarea_of_cell(int(math.floor(y / c)), int(math.floor(x / c)))

    @property
    def owner(self) -> np.ndarray:
        """Raster of flat subarea indices ``a * B + b``."""
        return self._owner

    def all_subareas(self):
        return [(a, b) for a in range(self.dims[0]) for b in range(self.dims[1])]

    def unexplored(self):
        return [s for s in self.all_subareas() if not self.explored[s]]

    def mark_explored(self, a: int, b: int, by_exception: bool = False) -> bool:
        if self.explored[a, b]:
            return False
        self.explored[a, b] = True
        if by_exception:
            self.exception[a, b] = True
        return True


def build_subarea_grid(world: WorldMap, subarea_size_m: float) -> SubareaGrid:
    if subarea_size_m <= 0:
        raise ValueError("subarea_size_m must be > 0")
    A = max(1, math.ceil(world.height_m / subarea_size_m - 1e-9))
    B = max(1, math.ceil(world.width_m / subarea_size_m - 1e-9))
    c = world.cell_size_m
    ny, nx = world.shape
    rects, cents = [], np.zeros((A, B, 2))
    for a in range(A):
        row = []
        iy0 = int(round(a * subarea_size_m / c))
        iy1 = min(ny, int(round((a + 1) * subarea_size_m / c)))
        for b in range(B):
            ix0 = int(round(b * subarea_size_m / c))
            ix1 = min(nx, int(round((b + 1) * subarea_size_m / c)))
            row.append(Rect(iy0, iy1, ix0, ix1))
            cents[a, b] = ((ix0 + ix1) * c / 2, (iy0 + iy1) * c / 2)
        rects.append(row)
    sg = SubareaGrid((A, B), float(subarea_size_m), c, rects, cents, observable_cells(world))
    empty = sg._denominators == 0
    sg.explored |= empty
    sg.exception |= empty
    sg.coverage[empty] = 1.0
    return sg


def subarea_coverage(sg: SubareaGrid, merged: OccupancyGrid) -> np.ndarray:
    known = merged.known & sg.observable
    counts = np.bincount(sg.owner.ravel()[known.ravel()], minlength=sg.dims[0] * sg.dims[1]).reshape(sg.dims)
    with np.errstate(divide="ignore", invalid="ignore"):
        cov = np.where(sg._denominators > 0, counts / np.maximum(sg._denominators, 1), 1.0)
    return cov


def update_coverage(sg: SubareaGrid, merged: OccupancyGrid, delta: float) -> list[tuple[int, int]]:
    """Refresh coverage fractions; return subareas newly flagged explored."""
    if merged.shape != sg.observable.shape:
        raise ValueError("merged grid does not match subarea grid raster")
    sg.coverage = np.maximum(sg.coverage, subarea_coverage(sg, merged))
    newly = []
    for a, b in sg.all_subareas():
        if not sg.explored[a, b] and sg.coverage[a, b] >= delta:
            sg.explored[a, b] = True
            newly.append((a, b))
    return newly


# --------------------------------------------------------------------------
# plans


@dataclass
class Trip:
    """A candidate drive from a robot to a subarea goal cell."""

    robot_id: int
    subarea: tuple[int, int]
    path: Path
    sensing: list[bool]  # per path cell
    time_s: float
    energy_j: float
    speed_mps: float = 1.0

    @property
    def gated_m(self) -> float:
        off = 0.0
        for (p, q, flag) in zip(self.path.waypoints, self.path.waypoints[1:], self.sensing[1:]):
            if not flag:
                off += math.hypot(q[0] - p[0], q[1] - p[1])
        return off


@dataclass
class RobotDirective:
    robot_id: int
    subarea: tuple[int, int]
    speed_mps: float
    sensing_on: bool  # False when any leg of the route runs with sensors off
    trip: Trip


@dataclass
class HighLevelPlan:
    directives: dict[int, RobotDirective]
    objective: float
    mode: str  # "exhaustive", "greedy" or "empty"

    def __bool__(self) -> bool:
        return bool(self.directives)


def leg_sensing(path: Path, sg: SubareaGrid, departure: tuple[int, int] | None) -> list[bool]:
    """Sensors off on cells of explored subareas other than the departure subarea."""
    flags = []
    for iy, ix in path.cells:
        s = sg.subarea_of_cell(iy, ix)
        flags.append(not (sg.explored[s] and s != departure))
    return flags


def trip_for_path(
    robot_id: int,
    subarea: tuple[int, int],
    path: Path,
    sg: SubareaGrid,
    departure: tuple[int, int] | None,
    nav: NavConfig,
    profile: PowerProfile,
) -> Trip:
    """Predict time and energy at the commanded speed ``nav.v_max``."""
    sensing = leg_sensing(path, sg, departure)
    energy = 0.0
    for p, q, flag in zip(path.waypoints, path.waypoints[1:], sensing[1:]):
        seg = math.hypot(q[0] - p[0], q[1] - p[1])
        energy += step_energy(profile, nav.v_max, flag, seg / nav.v_max)
    return Trip(robot_id, subarea, path, sensing, path.length_m / nav.v_max, energy, nav.v_max)


def plan_objective(assignment: dict[int, Trip], robots: list[RobotState], sigma: float, horizon_s: float) -> float:
    explored = sum(1 for t in assignment.values() if t.time_s <= horizon_s)
    battery = 0.0
    for r in robots:
        trip = assignment.get(r.id)
        battery += r.charge_j - (trip.energy_j if trip else 0.0)
    return explored + sigma * battery


def _assignments(robot_ids: list[int], options: dict[int, list[tuple[int, int]]]):
    """All injective robot -> subarea maps of maximum cardinality."""
    best_size = 0
    found = []

    def rec(i, used, current):
        nonlocal best_size
        if i == len(robot_ids):
            size = len(current)
            if size > best_size:
                best_size = size
                found.clear()
            if size == best_size:
                found.append(dict(current))
            return
        rid = robot_ids[i]
        for s in options.get(rid, []):
            if s not in used:
                current[rid] = s
                used.add(s)
                rec(i + 1, used, current)
                used.discard(s)
                del current[rid]
        rec(i + 1, used, current)

    rec(0, set(), {})
    return found


def solve_oros(
    sg: SubareaGrid,
    robots: list[RobotState],
    sigma: float,
    horizon_s: float,
    trips: dict[tuple[int, tuple[int, int]], Trip],
    reserved: set[tuple[int, int]] = frozenset(),
) -> HighLevelPlan:
    """Assign requesting ``robots`` to unexplored, unreserved subareas.

    ``trips`` maps ``(robot_id, subarea)`` to a predicted drive; missing keys
    mean the subarea is unreachable for that robot.
    """
    active = [r for r in robots if not r.depleted]
    candidates = [s for s in sg.unexplored() if s not in reserved]
    if not active or not candidates:
        return HighLevelPlan({}, plan_objective({}, active, sigma, horizon_s), "empty")
    options = {r.id: [s for s in candidates if (r.id, s) in trips] for r in active}
    ids = [r.id for r in active]

    if len(active) <= EXHAUSTIVE_MAX_ROBOTS and len(candidates) <= EXHAUSTIVE_MAX_SUBAREAS:
        mode = "exhaustive"
        best_key, best = None, {}
        for amap in _assignments(ids, options):
            chosen = {rid: trips[(rid, s)] for rid, s in amap.items()}
            value = plan_objective(chosen, active, sigma, horizon_s)
            order = tuple(amap.get(rid, (math.inf, math.inf)) for rid in ids)
            key = (-value, order)
            if best_key is None or key < best_key:
                best_key, best = key, chosen
        chosen = best
    else:
        mode = "greedy"
        chosen = {}
        pool = sorted(
            ((t.time_s, rid, s) for (rid, s), t in trips.items() if rid in options and s in candidates),
        )
        used = set()
        for _, rid, s in pool:
            if rid in chosen or s in used:
                continue
            chosen[rid] = trips[(rid, s)]
            used.add(s)

    directives = {
        rid: RobotDirective(rid, t.subarea, t.speed_mps, all(t.sensing), t)
        for rid, t in chosen.items()
    }
    return HighLevelPlan(directives, plan_objective(chosen, active, sigma, horizon_s), mode)


def default_sigma(n_robots: int, capacity_j: float) -> float:
    return 1.0 / (max(1, n_robots) * capacity_j)
