"""Deterministic mission loop binding the robot plane, the middle layer and OROS.

Every tick robots scan (when their sensors are on), scans reach the merged
map after the configured link latency, and robots move one ``dt``. Every
realtime period the middle layer refreshes coverage, local targets and the
deferred queue, and idle robots ask the high-level planner for a subarea.
"""
from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

from .config import Scenario
from .energy import Battery
from .nav import (
    NoPath,
    RobotState,
    RobotStatus,
    assign_path,
    astar,
    path_from_cells,
    shortest_tree,
    step_motion,
    tree_path,
)
from .orchestrator import (
    NAIVE,
    OROS_ONLY,
    REACT,
    EventLog,
    MissionClock,
    OrchestratorConfig,
    RealtimeOrchestrator,
    _Reach,
    allocate,
    continuation_condition,
    dpi_feasible,
    estimate_dpi,
)
from .oros import build_subarea_grid, leg_sensing, solve_oros, trip_for_path, update_coverage
from .perception import OccupancyGrid, traversable
from .world import reachable_free, scan_angles, scan_at

log = logging.getLogger("react_sim")

IDLE, TRANSIT, LOCAL, DPI = "idle", "transit", "local", "dpi"
ROBOT_WAIT_REPLAN_S = 1.0
# a transit is re-planned at the high level when a wall discovered on the way
# stretches the remaining route beyond this
DETOUR_FACTOR = 1.5
DETOUR_SLACK_M = 5.0


class InvariantViolation(RuntimeError):
    def __init__(self, message: str, dump: dict):
        super().__init__(message)
        self.dump = dump


@dataclass
class Agent:
    state: RobotState
    own: OccupancyGrid
    task: str = IDLE
    subarea: tuple[int, int] | None = None
    goal: tuple[int, int] | None = None
    departure: tuple[int, int] | None = None
    arrived: bool = False
    detoured: bool = False
    last_scan_pose: tuple[float, float] | None = None
    energy_j: float = 0.0
    gated_s: float = 0.0

    @property
    def id(self) -> int:
        return self.state.id

    @property
    def depleted(self) -> bool:
        return self.state.depleted

    def directive(self) -> bool:
        """Sensing switch requested by the plan for the current leg."""
        if self.task == TRANSIT and self.state.path_sensing:
            return bool(self.state.path_sensing[0])
        return True


@dataclass
class MissionResult:
    scenario: Scenario
    coverage: np.ndarray
    charges: np.ndarray
    trajectory: list[tuple[int, int, float, float, bool]]
    energy_j: np.ndarray
    gated_s: np.ndarray
    events: EventLog
    unvisited: list = field(default_factory=list)
    end_tick: int = 0
    end_reason: str = ""
    subarea_coverage: np.ndarray | None = None

    @property
    def dt_s(self) -> float:
        return self.scenario.dt_s

    @property
    def final_coverage(self) -> float:
        return float(self.coverage[-1])

    @property
    def total_energy_j(self) -> float:
        return float(self.energy_j.sum())

    @property
    def queue_left(self) -> int:
        return len(self.unvisited)

    def time_to(self, fraction: float) -> float | None:
        hit = np.flatnonzero(self.coverage >= fraction - 1e-12)
        return float(hit[0] * self.dt_s) if hit.size else None

    def predicted_savings_j(self) -> float:
        return float(self.scenario.profile.sensing_w * self.gated_s.sum())


def spawn_order(n_spawns: int, robots: int, seed: int) -> list[int]:
    """Spawn index per robot id; the seed only matters when several robots share the start."""
    if robots == 1:
        return [0]
    rng = np.random.default_rng(seed)
    return [int(i) for i in rng.permutation(n_spawns)[:robots]]


class Mission:
    def __init__(self, scenario: Scenario):
        self.sc = scenario
        s = scenario.settings
        self.world = scenario.world
        self.nav = scenario.nav
        self.profile = scenario.profile
        self.dt = scenario.dt_s
        self.clock = MissionClock(0, self.dt, scenario.T_max)
        self.strategy = scenario.strategy
        self.always_on = scenario.always_on
        self.delta = s["oros.delta"]
        self.horizon_s = s["oros.horizon_s"]
        self.period = max(1, int(round(s["react.realtime_period_s"] / self.dt)))
        self.latency = int(round(s["link_latency_ms"] / 1000.0 / self.dt))
        self.angles = scan_angles(s["lidar.n_rays"])
        self.max_range = s["lidar.max_range_m"]

        self.merged = OccupancyGrid.like(self.world)
        self.sg = build_subarea_grid(self.world, s["oros.subarea_size_m"])
        self.log = EventLog()
        cfg = OrchestratorConfig(
            self.strategy, self.delta, s["perception.min_region_cells"], s["perception.size_threshold"], scenario.lam
        )
        self.orch = RealtimeOrchestrator(cfg, self.nav, self.profile, self.log)
        self.reach_idx = np.flatnonzero(reachable_free(self.world).ravel())
        self.gt_free = self.world.free

        order = spawn_order(len(self.world.spawn_points), scenario.robots, scenario.seed)
        self.agents = []
        for rid, k in enumerate(order):
            st = RobotState(rid, self.world.spawn_points[k], Battery(scenario.capacity_j, scenario.capacity_j))
            self.agents.append(Agent(st, OccupancyGrid.like(self.world)))
        self.pending_scans: list[tuple[int, int, tuple[float, float], object]] = []
        self.naive_released: set[tuple[int, int]] = set()
        self._passable_cache = None

        self.coverage: list[float] = []
        self.charges: list[list[float]] = []
        self.trajectory: list[tuple[int, int, float, float, bool]] = []

    # -- helpers ---------------------------------------------------------------

    def _is_free(self, iy: int, ix: int) -> bool:
        return bool(self.gt_free[iy, ix])

    def _passable(self):
        key = self.merged.cells.tobytes()
        if self._passable_cache is None or self._passable_cache[0] != key:
            r = self.nav.robot_radius_m
            self._passable_cache = (
                key,
                traversable(self.merged, r),
                traversable(self.merged, r, allow_unknown=True),
            )
        return self._passable_cache[1], self._passable_cache[2]

    def _cell(self, ag: Agent) -> tuple[int, int]:
        return self.merged.cell_of(*ag.state.pose)

    def _live(self):
        return [ag for ag in self.agents if not ag.depleted]

    def _released(self, s) -> bool:
        if self.strategy == NAIVE:
            return s in self.naive_released or (self.sg.explored[s] and not self.sg.swept[s])
        return bool(self.sg.explored[s])

    def _flag(self, t: int, s, reason: str) -> None:
        if self.sg.mark_explored(*s, by_exception=(reason == "exception")):
            self.log.emit(t, "SUBAREA_EXPLORED", a=s[0], b=s[1], reason=reason, coverage=float(self.sg.coverage[s]))
            self.orch.enqueue_leftovers(self.merged, self.sg, s, t)

    def _set_idle(self, ag: Agent) -> None:
        ag.state = assign_path(ag.state, path_from_cells([], self.merged.cell_size_m))
        ag.task = IDLE
        ag.goal = None
        ag.arrived = False
        ag.detoured = False

    # -- sensing ---------------------------------------------------------------

    def _sense(self, t: int) -> None:
        for ag in self.agents:
            if ag.depleted:
                ag.state.sensing_on = False
                continue
            on = ag.directive()
            ag.state.sensing_on = on
            if on and ag.last_scan_pose != ag.state.pose:
                scan = scan_at(self.world, ag.state.pose, self.angles, self.max_range)
                ag.own.integrate(scan)
                self.pending_scans.append((t + self.latency, ag.id, ag.state.pose, scan))
                ag.last_scan_pose = ag.state.pose
        keep = []
        for due, rid, pose, scan in self.pending_scans:
            if due <= t:
                self.merged.integrate(scan)
                self.log.emit(t, "SCAN", robot=rid, x=repr(pose[0]), y=repr(pose[1]))
            else:
                keep.append((due, rid, pose, scan))
        self.pending_scans = keep

    def _coverage(self) -> float:
        known = np.count_nonzero(self.merged.cells.ravel()[self.reach_idx])
        return known / self.reach_idx.size

    # -- middle layer ------------------------------------------------------------

    def _orchestrate(self, t: int) -> None:
        orch, sg = self.orch, self.sg
        for s in update_coverage(sg, self.merged, self.delta):
            self.log.emit(t, "SUBAREA_EXPLORED", a=s[0], b=s[1], reason="coverage", coverage=float(sg.coverage[s]))
            orch.enqueue_leftovers(self.merged, sg, s, t)
        orch.refresh_queue(self.merged, t)

        for ag in self.agents:
            if ag.task in (LOCAL, DPI) and ag.arrived:
                orch.finish(ag.id, self.merged, t)
                self._set_idle(ag)
            elif ag.task == TRANSIT and ag.subarea is not None and self._released(ag.subarea):
                # target subarea got covered by someone else on the way
                self._set_idle(ag)
        for rid in orch.check_active(self.merged, t):
            self._set_idle(self.agents[rid])

        if self.strategy == OROS_ONLY:
            for ag in self._live():
                if ag.subarea is not None and sg.swept[ag.subarea]:
                    self._flag(t, ag.subarea, "completion")
        else:
            self._local_targets(t)

        self._call_oros(t)
        if self.strategy == REACT and continuation_condition(sg):
            self._dpi(t)

    def _local_targets(self, t: int) -> None:
        orch, sg = self.orch, self.sg
        live = self._live()
        if not live:
            return
        work = []
        for ag in live:
            s = ag.subarea
            if s is not None and sg.swept[s] and not self._released(s) and s not in work:
                if self.strategy == NAIVE or not sg.explored[s]:
                    work.append(s)
        if not work:
            return
        passable, _ = self._passable()
        reach = _Reach(self.merged, [ag.state for ag in live], self.nav, passable)
        mask = reach.any_reach([ag.id for ag in live])
        candidates, pending = orch.work_regions(self.merged, sg, work, t, mask)
        # robots whose own subarea is done go back to the high level instead
        idle = [ag.state for ag in live if ag.task == IDLE and ag.subarea in work]
        for a in orch.assign(candidates, idle, self.merged, t, reach):
            ag = self.agents[a.robot_id]
            ag.state = assign_path(ag.state, a.path)
            ag.task = LOCAL
            ag.goal = a.goal_cell
            ag.arrived = not ag.state.current_path
        busy = {a.target.subarea for a in orch.active.values()}
        for s in work:
            if pending[s] == 0 and s not in busy:
                if self.strategy == NAIVE:
                    self.naive_released.add(s)
                    self._flag(t, s, "completion")
                elif not sg.explored[s]:
                    self._flag(t, s, "completion")

    def _subarea_goal(self, s, dist: np.ndarray):
        r = self.sg.rect(*s)
        sub = dist[r.slices]
        iy, ix = np.nonzero(np.isfinite(sub))
        if iy.size == 0:
            return None
        c = self.merged.cell_size_m
        cx, cy = self.sg.centroid(*s)
        gy, gx = iy + r.iy0, ix + r.ix0
        d2 = np.round(((gx + 0.5) * c - cx) ** 2 + ((gy + 0.5) * c - cy) ** 2, 9)
        k = np.lexsort((gx, gy, d2))[0]
        return int(gy[k]), int(gx[k])

    def _call_oros(self, t: int) -> None:
        sg = self.sg
        live = self._live()
        requesters = [
            ag for ag in live
            if ag.task == IDLE and (ag.subarea is None or self._released(ag.subarea))
        ]
        if not requesters or not sg.unexplored():
            return
        reserved = {
            ag.subarea for ag in live
            if ag not in requesters and ag.subarea is not None and not sg.explored[ag.subarea]
        }
        _, passable = self._passable()
        nx = self.merged.shape[1]
        c = self.merged.cell_size_m
        trips, reachable = {}, set()
        for ag in live:
            dist, pred = shortest_tree(passable, self._cell(ag), c)
            for s in sg.unexplored():
                goal = self._subarea_goal(s, dist)
                if goal is None:
                    continue
                reachable.add(s)
                if ag in requesters and s not in reserved:
                    path = tree_path(pred, goal, nx, c)
                    dep = sg.subarea_of_point(*ag.state.pose)
                    trips[(ag.id, s)] = trip_for_path(ag.id, s, path, sg, dep, self.nav, self.profile)
        for s in sg.unexplored():
            if s not in reachable:
                self._flag(t, s, "exception")
        if not sg.unexplored():
            return
        plan = solve_oros(sg, [ag.state for ag in requesters], self.sc.sigma, self.horizon_s, trips, reserved)
        if not plan:
            return
        payload = {"mode": plan.mode, "objective": plan.objective}
        for rid in sorted(plan.directives):
            d = plan.directives[rid]
            payload[f"r{rid}"] = f"{d.subarea[0]},{d.subarea[1]},{int(d.sensing_on)}"
        self.log.emit(t, "CALL_OROS", **payload)
        for rid in sorted(plan.directives):
            d = plan.directives[rid]
            ag = self.agents[rid]
            goal = d.trip.path.cells[-1]
            dep = sg.subarea_of_point(*ag.state.pose)
            try:
                path = path_from_cells(astar(passable, self._cell(ag), goal, c), c) if goal != self._cell(ag) else d.trip.path
            except NoPath:
                path = d.trip.path
            ag.state = assign_path(ag.state, path, leg_sensing(path, sg, dep))
            ag.task = TRANSIT
            ag.subarea = d.subarea
            ag.goal = goal
            ag.departure = dep
            ag.arrived = False
            if not ag.state.current_path:
                sg.swept[d.subarea] = True
                ag.task = IDLE

    def _dpi(self, t: int) -> None:
        orch = self.orch
        live = self._live()
        if orch.dpi_state == "pending":
            if any(ag.task != IDLE for ag in live):
                return
            if not len(orch.queue):
                orch.dpi_state = "done"
                return
            est, unreachable = estimate_dpi(orch.queue, [ag.state for ag in live], self.merged, self.nav, self.profile, self.sc.lam)
            checks = {rid: dpi_feasible(e, self.clock) for rid, e in est.items()}
            ok = sorted(rid for rid, (good, _) in checks.items() if good)
            orch.dpi_estimates = est
            if not ok:
                reasons = sorted({why for _, why in checks.values()})
                self.log.emit(t, "DPI_SKIP", reason="|".join(reasons), queued=len(orch.queue),
                              t_dpi=max(e.t_dpi_s for e in est.values()))
                orch.dpi_state = "skipped"
                return
            payload = {"queued": len(orch.queue), "robots": ",".join(str(i) for i in ok), "unreachable": len(unreachable)}
            for rid in ok:
                payload[f"t_dpi_r{rid}"] = est[rid].t_dpi_s
                payload[f"b_pred_r{rid}"] = est[rid].b_pred_j
            self.log.emit(t, "DPI_START", **payload)
            orch.dpi_state = "active"
            orch.dpi_robots = set(ok)
        if orch.dpi_state != "active":
            return
        idle = [ag for ag in live if ag.task == IDLE and ag.id in orch.dpi_robots]
        if idle and len(orch.queue):
            passable, _ = self._passable()
            reach = _Reach(self.merged, [ag.state for ag in live], self.nav, passable)
            got, _ = allocate(list(orch.queue), [ag.state for ag in idle], self.merged, self.nav, self.profile,
                              self.sc.lam, reach=reach)
            for a in got:
                orch.queue.remove(a.target.target_id)
                orch._start(a, t)
                ag = self.agents[a.robot_id]
                ag.state = assign_path(ag.state, a.path)
                ag.task = DPI
                ag.goal = a.goal_cell
                ag.arrived = not ag.state.current_path
        if not orch.active and not any(ag.task == DPI for ag in live):
            assignable = False
            if len(orch.queue) and idle:
                passable, _ = self._passable()
                reach = _Reach(self.merged, [ag.state for ag in live], self.nav, passable)
                got, _ = allocate(list(orch.queue), [ag.state for ag in idle], self.merged, self.nav, self.profile,
                                  self.sc.lam, reach=reach, with_paths=False)
                assignable = bool(got)
            if not assignable:
                orch.dpi_state = "done"

    def _finished(self) -> str | None:
        live = self._live()
        if not live:
            return "depleted"
        if not continuation_condition(self.sg):
            return None
        if any(ag.task != IDLE for ag in live) or self.orch.active:
            return None
        if self.strategy == REACT:
            return {"done": "complete", "skipped": "dpi_skipped"}.get(self.orch.dpi_state)
        if self.strategy == NAIVE:
            if any(ag.subarea is not None and not self._released(ag.subarea) for ag in live):
                return None
        return "complete"

    # -- robot plane -------------------------------------------------------------

    def _replan(self, t: int, ag: Agent, others: set) -> None:
        known, unknown = self._passable()
        passable = unknown if ag.task == TRANSIT else known
        cells = ag.state.path_cells
        if cells and all(passable[cell] for cell in cells):
            return
        c = self.merged.cell_size_m
        start = self._cell(ag)
        try:
            if not passable[ag.goal]:
                raise NoPath("goal blocked")
            path = path_from_cells(astar(passable, start, ag.goal, c), c)
        except NoPath:
            if ag.task == TRANSIT:
                dist, pred = shortest_tree(passable, start, c)
                goal = self._subarea_goal(ag.subarea, dist)
                if goal is None:
                    self.log.emit(t, "TRANSIT_ABORT", robot=ag.id, a=ag.subarea[0], b=ag.subarea[1], reason="unreachable")
                    ag.subarea = None
                    self._set_idle(ag)
                    return
                ag.goal = goal
                path = tree_path(pred, goal, self.merged.shape[1], c)
            else:
                self.orch.release(ag.id, t, "blocked")
                self._set_idle(ag)
                return
        if ag.task == TRANSIT and cells:
            before = path_from_cells([start, *cells], c).length_m
            if path.length_m > DETOUR_FACTOR * before + DETOUR_SLACK_M:
                # the route ran into a wall it had assumed open; ask for a new plan
                self.log.emit(t, "TRANSIT_ABORT", robot=ag.id, a=ag.subarea[0], b=ag.subarea[1], reason="detour")
                ag.subarea = None
                self._set_idle(ag)
                return
        flags = leg_sensing(path, self.sg, ag.departure) if ag.task == TRANSIT else None
        ag.state = assign_path(ag.state, path, flags)
        if not ag.state.current_path:
            self._arrive(ag)

    def _detour(self, ag: Agent, others: set) -> None:
        known, unknown = self._passable()
        passable = (unknown if ag.task == TRANSIT else known).copy()
        for cell in others:
            passable[cell] = False
        c = self.merged.cell_size_m
        try:
            path = path_from_cells(astar(passable, self._cell(ag), ag.goal, c), c)
        except NoPath:
            return
        flags = leg_sensing(path, self.sg, ag.departure) if ag.task == TRANSIT else None
        ag.state = assign_path(ag.state, path, flags)
        ag.detoured = True

    def _arrive(self, ag: Agent) -> None:
        if ag.task == TRANSIT:
            self.sg.swept[ag.subarea] = True
            self._set_idle(ag)
        elif ag.task in (LOCAL, DPI):
            ag.arrived = True

    def _move(self, t: int) -> None:
        cells = {ag.id: self._cell(ag) for ag in self._live()}
        for ag in self.agents:
            if ag.depleted:
                continue
            others = {cell for rid, cell in cells.items() if rid != ag.id}
            if ag.task != IDLE and not ag.arrived and ag.goal is not None:
                self._replan(t, ag, others)
            directive = ag.directive()
            powered = self.always_on or directive
            out = step_motion(
                ag.state, self.merged, self.dt, self.nav, self.profile,
                sensing_powered=powered, is_free=self._is_free, occupied_cells=others,
            )
            ag.state = out.state
            ag.energy_j += out.energy_j
            if not powered:
                ag.gated_s += self.dt
            cells[ag.id] = self._cell(ag)
            if not self.gt_free[cells[ag.id]]:
                raise InvariantViolation(f"robot {ag.id} inside an obstacle at tick {t}", self._dump(t))
            if out.blocked_by == "wall":
                iy, ix = out.blocked_cell
                self.merged.mark_occupied(iy, ix)
                ag.own.mark_occupied(iy, ix)
                self.log.emit(t, "BUMP", robot=ag.id, iy=iy, ix=ix)
            if ag.state.status == RobotStatus.DEPLETED:
                self.log.emit(t, "DEPLETED", robot=ag.id)
                self.orch.release(ag.id, t, "depleted")
                ag.task = IDLE
                continue
            if ag.state.status == RobotStatus.STUCK:
                self.log.emit(t, "ROBOT_STUCK", robot=ag.id, task=ag.task)
                if ag.task in (LOCAL, DPI):
                    self.orch.release(ag.id, t, "stuck")
                elif ag.task == TRANSIT:
                    ag.subarea = None
                self._set_idle(ag)
                continue
            if out.blocked_by == "robot" and ag.state.blocked_s >= ROBOT_WAIT_REPLAN_S - 1e-9 and not ag.detoured:
                self._detour(ag, others)
            if ag.task != IDLE and not ag.state.current_path and not ag.arrived:
                self._arrive(ag)
            elif ag.task == TRANSIT and self.strategy != OROS_ONLY:
                # local targets take over once the robot is inside its subarea
                if self.sg.rect(*ag.subarea).contains(*cells[ag.id]):
                    self._arrive(ag)

    def _dump(self, t: int) -> dict:
        return {
            "tick": t,
            "robots": [
                {"id": ag.id, "pose": ag.state.pose, "task": ag.task, "charge_j": ag.state.charge_j}
                for ag in self.agents
            ],
            "explored": self.sg.explored.tolist(),
            "queue": self.orch.queue.ids(),
        }

    # -- main loop ---------------------------------------------------------------

    def run(self) -> MissionResult:
        T = self.clock.T_max
        reason = "time"
        end = T
        for t in range(T + 1):
            self.clock.t = t
            self._sense(t)
            cov = self._coverage()
            if self.coverage and cov < self.coverage[-1] - 1e-15:
                raise InvariantViolation("coverage decreased", self._dump(t))
            self.coverage.append(cov)
            self.charges.append([ag.state.charge_j for ag in self.agents])
            for ag in self.agents:
                x, y = ag.state.pose
                on = (self.always_on or ag.state.sensing_on) and not ag.depleted
                self.trajectory.append((t, ag.id, x, y, on))
            if t % self.period == 0:
                self._orchestrate(t)
            why = self._finished()
            if why is not None:
                reason, end = why, t
                break
            if t == T:
                break
            self._move(t)
        unvisited = self.orch.final_unvisited()
        self.log.emit(end, "MISSION_END", reason=reason, coverage=self.coverage[-1], unvisited=len(unvisited))
        log.info("mission end tick=%d reason=%s coverage=%.4f", end, reason, self.coverage[-1])
        return MissionResult(
            self.sc,
            np.array(self.coverage),
            np.array(self.charges),
            self.trajectory,
            np.array([ag.energy_j for ag in self.agents]),
            np.array([ag.gated_s for ag in self.agents]),
            self.log,
            unvisited,
            end,
            reason,
            self.sg.coverage.copy(),
        )


def run(scenario: Scenario) -> MissionResult:
    return Mission(scenario).run()


# --------------------------------------------------------------------------
# outputs


def _f(v: float | None) -> str:
    return "" if v is None else f"{v:.6f}"


SUMMARY_FIELDS = [
    "strategy", "robots", "always_on", "seed", "T_max_s", "final_coverage", "time_to_90_s",
    "energy_j", "total_energy_j", "gated_off_s", "savings_j", "savings_pct", "end_tick", "end_reason", "error",
]


def summary_row(result: MissionResult, twin: MissionResult | None = None) -> dict:
    """One matrix row; savings are measured against the always-on twin when given."""
    sc = result.scenario
    total = result.total_energy_j
    if sc.always_on:
        savings = 0.0
    elif twin is not None:
        savings = twin.total_energy_j - total
    else:
        savings = result.predicted_savings_j()
    base = total + savings
    return {
        "strategy": sc.strategy,
        "robots": sc.robots,
        "always_on": int(sc.always_on),
        "seed": sc.seed,
        "T_max_s": _f(sc["T_max_s"]),
        "final_coverage": _f(result.final_coverage),
        "time_to_90_s": _f(result.time_to(0.9)),
        "energy_j": ";".join(_f(e) for e in result.energy_j),
        "total_energy_j": _f(total),
        "gated_off_s": _f(float(result.gated_s.sum())),
        "savings_j": _f(savings),
        "savings_pct": _f(100.0 * savings / base if base > 0 else 0.0),
        "end_tick": result.end_tick,
        "end_reason": result.end_reason,
        "error": "",
    }


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def coverage_rows(result: MissionResult):
    dt = result.dt_s
    for t, (cov, charges) in enumerate(zip(result.coverage, result.charges)):
        yield [t, _f(t * dt), _f(float(cov))] + [_f(float(c)) for c in charges]


def write_outputs(result: MissionResult, out_dir, summary: list[dict] | None = None) -> None:
    out = FsPath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    R = result.charges.shape[1]
    _write_csv(out / "coverage.csv", ["tick", "seconds", "coverage"] + [f"charge_j_r{i}" for i in range(R)],
               coverage_rows(result))
    _write_csv(out / "trajectories.csv", ["tick", "robot", "x", "y", "sensing_on"],
               ([t, rid, _f(x), _f(y), int(on)] for t, rid, x, y, on in result.trajectory))
    (out / "events.log").write_text(result.events.text())
    write_summary(out / "summary.csv", summary if summary is not None else [summary_row(result)])


def write_summary(path, rows: list[dict]) -> None:
    _write_csv(path, SUMMARY_FIELDS, ([r.get(k, "") for k in SUMMARY_FIELDS] for r in rows))


def summary_csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_FIELDS)
    for r in rows:
        w.writerow([r.get(k, "") for k in SUMMARY_FIELDS])
    return buf.getvalue()


def run_strategy_matrix(scenarios: list[Scenario], twins: bool = True, on_result=None) -> list[dict]:
    """Run every scenario (plus its always-on twin) and return summary rows.

    A failing run yields a row with the ``error`` column set; the others
    still run.
    """
    if not scenarios:
        raise ValueError("run_strategy_matrix needs at least one scenario")
    rows = []
    for sc in scenarios:
        runs = [sc]
        if twins and not sc.always_on:
            runs.append(sc.replace(always_on=True))
        results = {}
        for variant in runs:
            try:
                results[variant.always_on] = run(variant)
            except Exception as exc:  # keep the matrix going
                log.error("run failed: %s", exc)
                rows.append({
                    "strategy": variant.strategy, "robots": variant.robots, "always_on": int(variant.always_on),
                    "seed": variant.seed, "T_max_s": _f(variant["T_max_s"]), "error": f"{type(exc).__name__}: {exc}",
                })
                continue
            if on_result is not None:
                on_result(variant, results[variant.always_on])
        gated, twin = results.get(False), results.get(True)
        if gated is not None:
            rows.append(summary_row(gated, twin))
        if twin is not None:
            rows.append(summary_row(twin))
    return rows


# --------------------------------------------------------------------------
# replay


def parse_event(line: str) -> tuple[int, str, dict]:
    parts = line.split()
    payload = dict(p.split("=", 1) for p in parts[2:])
    return int(parts[0]), parts[1], payload


def replay_coverage(scenario: Scenario, events) -> np.ndarray:
    """Rebuild the coverage series from SCAN/BUMP lines of an event log."""
    if isinstance(events, str):
        events = events.splitlines()
    world = scenario.world
    angles = scan_angles(scenario["lidar.n_rays"])
    grid = OccupancyGrid.like(world)
    reach = np.flatnonzero(reachable_free(world).ravel())
    by_tick: dict[int, list] = {}
    end = 0
    for line in events:
        if not line.strip():
            continue
        t, kind, p = parse_event(line)
        if kind == "MISSION_END":
            end = t
        by_tick.setdefault(t, []).append((kind, p))
    out = []
    for t in range(end + 1):
        # a bump at tick t lands after tick t's coverage sample
        for kind, p in by_tick.get(t - 1, []):
            if kind == "BUMP":
                grid.mark_occupied(int(p["iy"]), int(p["ix"]))
        for kind, p in by_tick.get(t, []):
            if kind == "SCAN":
                pose = (float(p["x"]), float(p["y"]))
                grid.integrate(scan_at(world, pose, angles, scenario["lidar.max_range_m"]))
        out.append(np.count_nonzero(grid.cells.ravel()[reach]) / reach.size)
    return np.array(out)


def configure_logging() -> None:
    level = {"quiet": logging.WARNING, "info": logging.INFO, "trace": logging.DEBUG}.get(
        os.environ.get("REACT_SIM_LOG", "quiet").lower(), logging.WARNING
    )
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
