"""Real-time middle layer: local targets, allocation and deferred inspection.

Unknown regions inside the subareas robots are currently working are turned
into local targets. High-priority ones are allocated right away; Low-priority
ones wait in a deferred queue until every subarea is explored, then a
battery- and deadline-checked inspection pass visits them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .energy import PowerProfile, step_energy
from .nav import (
    NavConfig,
    NoPath,
    Path,
    RobotState,
    astar,
    clearance_map,
    distance_field,
    estimate_traversal_s,
    path_from_cells,
)
from .perception import (
    MIN_REGION_CELLS,
    SIZE_THRESHOLD,
    UNKNOWN,
    OccupancyGrid,
    Priority,
    UnknownRegion,
    classify_priority,
    find_unknown_regions,
    is_sealed,
    region_frontier,
    traversable,
)

REACT = "REACT"
OROS_ONLY = "OROS_ONLY"
NAIVE = "NAIVE"
STRATEGIES = (REACT, OROS_ONLY, NAIVE)


@dataclass
class LocalTarget:
    target_id: int
    region: UnknownRegion
    priority: Priority
    discovered_tick: int
    subarea: tuple[int, int]
    assigned_size: int | None = None

    @property
    def centroid(self) -> tuple[float, float]:
        return self.region.centroid

    @property
    def cells(self) -> np.ndarray:
        return self.region.cells


@dataclass
class TargetAssignment:
    robot_id: int
    target: LocalTarget
    path: Path
    goal_cell: tuple[int, int]
    est_time_s: float
    est_energy_j: float
    score: float = 0.0


@dataclass
class MissionClock:
    t: int
    dt_s: float
    T_max: int

    @property
    def seconds(self) -> float:
        return self.t * self.dt_s

    @property
    def remaining_s(self) -> float:
        return (self.T_max - self.t) * self.dt_s


class DeferredQueue:
    """Postponed Low-priority targets in discovery order."""

    def __init__(self):
        self._items: dict[int, LocalTarget] = {}

    def push(self, target: LocalTarget) -> bool:
        if target.target_id in self._items:
            self._items[target.target_id] = target
            return False
        self._items[target.target_id] = target
        return True

    def remove(self, target_id: int) -> LocalTarget | None:
        return self._items.pop(target_id, None)

    def __contains__(self, target_id: int) -> bool:
        return target_id in self._items

    def __iter__(self):
        return iter(sorted(self._items.values(), key=lambda t: (t.discovered_tick, t.target_id)))

    def __len__(self) -> int:
        return len(self._items)

    def ids(self) -> list[int]:
        return [t.target_id for t in self]


@dataclass
class DpiEstimate:
    t_dpi_s: float
    b_pred_j: float
    tour: list[int] = field(default_factory=list)


# --------------------------------------------------------------------------
# allocation


class _Reach:
    """Shared traversability plus per-robot connected components."""

    def __init__(self, grid: OccupancyGrid, robots: list[RobotState], nav: NavConfig, passable=None):
        self.grid = grid
        self.passable = traversable(grid, nav.robot_radius_m) if passable is None else passable
        self.cells = {r.id: grid.cell_of(*r.pose) for r in robots}
        mask = self.passable.copy()
        for c in self.cells.values():
            mask[c] = True
        self.labels, _ = ndimage.label(mask)
        self._dist: dict[tuple[int, int], np.ndarray] = {}

    def reach(self, robot_id: int) -> np.ndarray:
        return self.labels == self.labels[self.cells[robot_id]]

    def any_reach(self, robot_ids) -> np.ndarray:
        labs = sorted({int(self.labels[self.cells[i]]) for i in robot_ids})
        return np.isin(self.labels, labs)

    def dist_from(self, cell: tuple[int, int]) -> np.ndarray:
        if cell not in self._dist:
            self._dist[cell] = distance_field(self.passable, cell, self.grid.cell_size_m)
        return self._dist[cell]


def _goal_for(grid: OccupancyGrid, target: LocalTarget, dist: np.ndarray) -> tuple[int, int] | None:
    """Reachable neighbour cell of the region closest to its centroid."""
    ring = region_frontier(grid, target.region) & np.isfinite(dist)
    cand = np.flatnonzero(ring)
    if cand.size == 0:
        return None
    nx = grid.shape[1]
    c = grid.cell_size_m
    cx, cy = target.centroid
    iy, ix = cand // nx, cand % nx
    d2 = ((ix + 0.5) * c - cx) ** 2 + ((iy + 0.5) * c - cy) ** 2
    order = np.lexsort((cand, dist.ravel()[cand], np.round(d2, 9)))
    best = int(cand[order[0]])
    return divmod(best, nx)


def _path_to(reach: _Reach, start: tuple[int, int], goal: tuple[int, int]) -> Path:
    c = reach.grid.cell_size_m
    if start == goal:
        return path_from_cells([start], c)
    return path_from_cells(astar(reach.passable, start, goal, c), c)


def allocation_lambda(width_m: float, height_m: float) -> float:
    return 0.25 * math.hypot(width_m, height_m)


def allocate(
    targets: list[LocalTarget],
    robots: list[RobotState],
    grid: OccupancyGrid,
    nav: NavConfig = NavConfig(),
    profile: PowerProfile = PowerProfile(),
    lam: float = 0.0,
    *,
    reach: _Reach | None = None,
    starts: dict[int, tuple[int, int]] | None = None,
    with_paths: bool = True,
) -> tuple[list[TargetAssignment], list[tuple[LocalTarget, str]]]:
    """Greedy global matching on ``path_length - lam * state_of_charge``.

    Ties go to the lower robot id, then the earlier-listed target. Returns
    the assignments and the targets no robot can reach.
    """
    robots = [r for r in robots if not r.depleted]
    if reach is None:
        reach = _Reach(grid, robots, nav)
    starts = starts or {r.id: grid.cell_of(*r.pose) for r in robots}
    pairs = []
    reachable_targets = set()
    for r in robots:
        dist = reach.dist_from(starts[r.id])
        soc = r.charge_j / r.capacity_j
        for k, t in enumerate(targets):
            goal = _goal_for(grid, t, dist)
            if goal is None:
                continue
            reachable_targets.add(k)
            length = float(dist[goal])
            pairs.append((length - lam * soc, r.id, k, goal, length))
    pairs.sort(key=lambda p: (p[0], p[1], p[2]))
    by_id = {r.id: r for r in robots}
    rejected = [(t, "NoPath") for k, t in enumerate(targets) if k not in reachable_targets]

    clear = clearance_map(grid) if with_paths else None
    taken_r, taken_t, out = set(), set(), []
    for score, rid, k, goal, length in pairs:
        if rid in taken_r or k in taken_t:
            continue
        taken_r.add(rid)
        taken_t.add(k)
        if with_paths:
            path = _path_to(reach, starts[rid], goal)
            est_t = estimate_traversal_s(path, clear, nav)
        else:
            path = Path([starts[rid], goal], [], length)
            est_t = length / nav.v_max
        est_e = step_energy(profile, min(nav.v_max, path.length_m / est_t) if est_t > 0 else 0.0, True, est_t) if est_t > 0 else 0.0
        out.append(TargetAssignment(rid, targets[k], path, goal, est_t, est_e, score))
        if len(taken_r) == len(by_id):
            break
    return out, rejected


def continuation_condition(subarea_grid) -> bool:
    return bool(np.all(subarea_grid.explored))


def estimate_dpi(
    queue,
    robots: list[RobotState],
    grid: OccupancyGrid,
    nav: NavConfig = NavConfig(),
    profile: PowerProfile = PowerProfile(),
    lam: float = 0.0,
) -> tuple[dict[int, DpiEstimate], list[LocalTarget]]:
    """Time and end-of-tour battery per robot for visiting every queued target.

    Targets are dealt out with the allocation score, one per robot per round,
    from each robot's previous goal (a nearest-next tour). Energy is charged
    at full speed with sensors on over the estimated time.
    """
    robots = [r for r in robots if not r.depleted]
    pending = list(queue)
    est = {r.id: DpiEstimate(0.0, r.charge_j) for r in robots}
    if not pending or not robots:
        return est, []
    reach = _Reach(grid, robots, nav)
    clear = clearance_map(grid)
    starts = {r.id: grid.cell_of(*r.pose) for r in robots}
    _, rejected = allocate(pending, robots, grid, nav, profile, lam, reach=reach, starts=starts, with_paths=False)
    unreachable = [t for t, _ in rejected]
    pending = [t for t in pending if all(t is not u for u in unreachable)]
    while pending:
        got, _ = allocate(pending, robots, grid, nav, profile, lam, reach=reach, starts=starts, with_paths=False)
        if not got:
            unreachable.extend(pending)
            break
        for a in got:
            path = _path_to(reach, starts[a.robot_id], a.goal_cell)
            est[a.robot_id].t_dpi_s += estimate_traversal_s(path, clear, nav)
            est[a.robot_id].tour.append(a.target.target_id)
            starts[a.robot_id] = a.goal_cell
            pending = [t for t in pending if t is not a.target]
    for r in robots:
        e = est[r.id]
        if e.t_dpi_s > 0:
            e.b_pred_j = r.charge_j - step_energy(profile, nav.v_max, True, e.t_dpi_s)
    return est, unreachable


def dpi_feasible(estimate: DpiEstimate, clock: MissionClock) -> tuple[bool, str]:
    if estimate.b_pred_j <= 0:
        return False, "battery"
    if clock.t + estimate.t_dpi_s / clock.dt_s > clock.T_max:
        return False, "time"
    return True, ""


def deferred_priority_inspection(
    queue: DeferredQueue,
    robots: list[RobotState],
    clock: MissionClock,
    grid: OccupancyGrid,
    estimates: dict[int, DpiEstimate],
    nav: NavConfig = NavConfig(),
    profile: PowerProfile = PowerProfile(),
    lam: float = 0.0,
) -> list[TargetAssignment]:
    """Hand queued targets to the robots that passed the feasibility check."""
    ok = [r for r in robots if not r.depleted and r.id in estimates and dpi_feasible(estimates[r.id], clock)[0]]
    if not ok or not len(queue):
        return []
    got, _ = allocate(list(queue), ok, grid, nav, profile, lam)
    return got


# --------------------------------------------------------------------------
# stateful orchestrator used by the mission loop


class EventLog:
    def __init__(self):
        self.lines: list[str] = []

    def emit(self, tick: int, kind: str, **payload) -> None:
        parts = [str(tick), kind]
        for k, v in payload.items():
            parts.append(f"{k}={_fmt(v)}")
        self.lines.append(" ".join(parts))

    def text(self) -> str:
        return "\n".join(self.lines) + ("\n" if self.lines else "")

    def __iter__(self):
        return iter(self.lines)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.6f}"
    if isinstance(v, (tuple, list)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


@dataclass(frozen=True)
class OrchestratorConfig:
    strategy: str = REACT
    delta: float = 0.95
    min_region_cells: int = MIN_REGION_CELLS
    size_threshold: int = SIZE_THRESHOLD
    lam: float = 0.0


class RealtimeOrchestrator:
    """Owns the local-target bookkeeping, the deferred queue and DPI state."""

    def __init__(self, cfg: OrchestratorConfig, nav: NavConfig, profile: PowerProfile, log: EventLog):
        self.cfg = cfg
        self.nav = nav
        self.profile = profile
        self.log = log
        self.queue = DeferredQueue()
        self.active: dict[int, TargetAssignment] = {}
        self.targets: dict[int, LocalTarget] = {}
        self.abandoned: set[int] = set()
        self.closed: dict[int, str] = {}
        self.next_id = 0
        self.dpi_state = "pending"  # pending | active | skipped | done
        self.dpi_robots: set[int] = set()
        self.dpi_estimates: dict[int, DpiEstimate] = {}

    # -- region bookkeeping -------------------------------------------------

    def _match(self, region: UnknownRegion) -> LocalTarget | None:
        best = None
        for tid, t in self.targets.items():
            if tid in self.closed:
                continue
            if not region.cell_set.isdisjoint(t.region.cell_set):
                if best is None or tid < best.target_id:
                    best = t
        return best

    def _track(self, region: UnknownRegion, priority: Priority, tick: int, subarea) -> LocalTarget:
        t = self._match(region)
        if t is None:
            t = LocalTarget(self.next_id, region, priority, tick, subarea)
            self.targets[t.target_id] = t
            self.next_id += 1
            cx, cy = region.centroid
            self.log.emit(tick, "TARGET_NEW", id=t.target_id, a=subarea[0], b=subarea[1],
                          size=region.size_cells, priority=priority.value, x=cx, y=cy)
        else:
            t.region = region
            t.priority = priority
        return t

    def _close(self, tick: int, target: LocalTarget, reason: str, robot: int | None = None) -> None:
        if target.target_id in self.closed:
            return
        self.closed[target.target_id] = reason
        self.queue.remove(target.target_id)
        payload = {"id": target.target_id, "reason": reason}
        if robot is not None:
            payload["robot"] = robot
        self.log.emit(tick, "TARGET_DONE", **payload)

    def _remaining(self, grid: OccupancyGrid, target: LocalTarget) -> np.ndarray:
        flat = grid.cells.reshape(-1)
        return target.cells[flat[target.cells] == UNKNOWN]

    def refresh_queue(self, grid: OccupancyGrid, tick: int) -> None:
        """Shrink queued targets to their unknown cells; drop covered ones."""
        for t in list(self.queue):
            rest = self._remaining(grid, t)
            if rest.size < self.cfg.min_region_cells:
                self._close(tick, t, "incidental")
                continue
            if rest.size != t.region.size_cells:
                t.region = _region_from_cells(rest, grid, t.subarea)
            if is_sealed(grid, t.region):
                self._close(tick, t, "sealed")

    def enqueue_leftovers(self, grid: OccupancyGrid, sg, subarea, tick: int) -> None:
        """Queue what is still unknown in a subarea that was just flagged explored."""
        if self.cfg.strategy != REACT:
            return
        for region in find_unknown_regions(grid, sg.rect(*subarea), self.cfg.min_region_cells, subarea):
            if is_sealed(grid, region):
                continue
            t = self._track(region, Priority.LOW, tick, subarea)
            if t.target_id in self.abandoned or t.target_id in self.closed:
                continue
            if any(a.target.target_id == t.target_id for a in self.active.values()):
                continue
            t.priority = Priority.LOW
            if self.queue.push(t):
                self.log.emit(tick, "TARGET_DEFERRED", id=t.target_id, a=subarea[0], b=subarea[1], size=t.region.size_cells)

    # -- per-period work -----------------------------------------------------

    def work_regions(self, grid: OccupancyGrid, sg, subareas, tick: int, reach_mask: np.ndarray):
        """Classify regions of the working subareas.

        Returns ``(candidates, pending_by_subarea)`` where ``pending`` counts
        accessible targets that would keep the subarea open.
        """
        strategy = self.cfg.strategy
        candidates: list[LocalTarget] = []
        pending: dict[tuple[int, int], int] = {s: 0 for s in subareas}
        active_ids = {a.target.target_id for a in self.active.values()}
        for s in subareas:
            for region in find_unknown_regions(grid, sg.rect(*s), self.cfg.min_region_cells, s):
                if is_sealed(grid, region):
                    continue
                prio = classify_priority(region, grid, sg, self.cfg.size_threshold)
                t = self._track(region, prio, tick, s)
                if t.target_id in self.abandoned or t.target_id in self.closed:
                    continue
                accessible = bool(np.any(region_frontier(grid, region) & reach_mask))
                region.accessible = accessible
                region.priority = prio
                if t.target_id in active_ids:
                    pending[s] += 1
                    continue
                if strategy == NAIVE:
                    if accessible:
                        candidates.append(t)
                        pending[s] += 1
                elif prio == Priority.HIGH:
                    if t.target_id in self.queue:
                        self.queue.remove(t.target_id)
                    if accessible:
                        candidates.append(t)
                        pending[s] += 1
                else:
                    if self.queue.push(t):
                        self.log.emit(tick, "TARGET_DEFERRED", id=t.target_id, a=s[0], b=s[1], size=region.size_cells)
        candidates.sort(key=lambda t: (t.discovered_tick, t.target_id))
        return candidates, pending

    def assign(self, candidates, robots, grid, tick: int, reach: _Reach | None = None) -> list[TargetAssignment]:
        if not candidates or not robots:
            return []
        if self.cfg.strategy == NAIVE:
            got = self._assign_in_order(candidates, robots, grid, reach)
        else:
            got, _ = allocate(candidates, robots, grid, self.nav, self.profile, self.cfg.lam, reach=reach)
        for a in got:
            self._start(a, tick)
        return got

    def _assign_in_order(self, candidates, robots, grid, reach):
        """Discovery order, each target to the closest free robot."""
        free = [r for r in robots if not r.depleted]
        if reach is None:
            reach = _Reach(grid, free, self.nav)
        out = []
        for t in candidates:
            if not free:
                break
            got, _ = allocate([t], free, grid, self.nav, self.profile, 0.0, reach=reach)
            if got:
                out.append(got[0])
                free = [r for r in free if r.id != got[0].robot_id]
        return out

    def _start(self, a: TargetAssignment, tick: int) -> None:
        a.target.assigned_size = a.target.region.size_cells
        self.active[a.robot_id] = a
        gx, gy = a.path.waypoints[-1]
        self.log.emit(tick, "TARGET_ASSIGNED", id=a.target.target_id, robot=a.robot_id, x=gx, y=gy,
                      length=a.path.length_m, est_time=a.est_time_s)

    def finish(self, robot_id: int, grid: OccupancyGrid, tick: int, reason: str = "visited") -> None:
        a = self.active.pop(robot_id, None)
        if a is None:
            return
        t = a.target
        rest = self._remaining(grid, t)
        if rest.size < self.cfg.min_region_cells:
            self._close(tick, t, reason, robot_id)
            return
        if t.assigned_size is not None and rest.size >= t.assigned_size:
            # nothing revealed from the approach cell: stop retrying
            self.abandoned.add(t.target_id)
            self._close(tick, t, "abandoned", robot_id)
            return
        t.region = _region_from_cells(rest, grid, t.subarea)
        if is_sealed(grid, t.region):
            self._close(tick, t, "sealed", robot_id)
            return
        if t.priority == Priority.LOW or self.dpi_state == "active":
            self.queue.push(t)
        self.log.emit(tick, "TARGET_DONE", id=t.target_id, reason="partial", robot=robot_id, remaining=int(rest.size))

    def release(self, robot_id: int, tick: int, reason: str) -> None:
        """Hand a failed or stuck robot's target back."""
        a = self.active.pop(robot_id, None)
        if a is None:
            return
        t = a.target
        if reason == "stuck":
            self.abandoned.add(t.target_id)
            self._close(tick, t, "abandoned", robot_id)
        elif self.dpi_state == "active" or t.priority == Priority.LOW:
            self.queue.push(t)

    def check_active(self, grid: OccupancyGrid, tick: int) -> list[int]:
        """Robots whose target got covered by someone else's sensing."""
        done = []
        for rid, a in list(self.active.items()):
            if self._remaining(grid, a.target).size < self.cfg.min_region_cells:
                self.active.pop(rid)
                self._close(tick, a.target, "incidental", rid)
                done.append(rid)
        return done

    def final_unvisited(self) -> list[LocalTarget]:
        left = list(self.queue)
        left += [self.targets[i] for i in sorted(self.abandoned) if self.targets[i].priority == Priority.LOW]
        return left


def _region_from_cells(cells: np.ndarray, grid: OccupancyGrid, subarea) -> UnknownRegion:
    nx = grid.shape[1]
    c = grid.cell_size_m
    iy, ix = cells // nx, cells % nx
    cen = (float(np.mean((ix + 0.5) * c)), float(np.mean((iy + 0.5) * c)))
    return UnknownRegion(np.sort(cells), cen, subarea)
