import numpy as np
import pytest

from react_sim import oracles
from react_sim.energy import Battery, Depleted, PowerProfile, step_energy
from react_sim.nav import NavConfig, RobotState
from react_sim.orchestrator import (
    DeferredQueue,
    DpiEstimate,
    LocalTarget,
    MissionClock,
    allocate,
    continuation_condition,
    deferred_priority_inspection,
    dpi_feasible,
    estimate_dpi,
)
from react_sim.oros import build_subarea_grid
from react_sim.perception import FREE, OCCUPIED, UNKNOWN, OccupancyGrid, Priority, UnknownRegion
from react_sim.selfcheck import allocation_instance, allocation_scores
from react_sim.world import WorldMap

NAV0 = NavConfig(robot_radius_m=0.0)


def hall(ny=30, nx=80):
    cells = np.full((ny, nx), FREE, dtype=np.int8)
    cells[0, :] = cells[-1, :] = cells[:, 0] = cells[:, -1] = OCCUPIED
    return OccupancyGrid((ny, nx), 0.25, cells)


def pocket(grid, tid, iy, ix, tick=0):
    grid.cells[iy, ix] = UNKNOWN
    flat = np.array([iy * grid.shape[1] + ix])
    return LocalTarget(tid, UnknownRegion(flat, grid.cell_center(iy, ix)), Priority.LOW, tick, (0, 0))


def bot(rid, grid, cell, charge=1000.0):
    return RobotState(rid, grid.cell_center(*cell), Battery(1000.0, charge))


class TestAllocate:
    def test_equidistant_higher_charge_wins(self):
        g = hall()
        t = pocket(g, 0, 15, 40)
        robots = [bot(0, g, (15, 20), 300.0), bot(1, g, (15, 60), 900.0)]
        got, rejected = allocate([t], robots, g, NAV0, lam=5.0)
        assert [a.robot_id for a in got] == [1] and not rejected

    def test_single_robot_takes_nearer(self):
        g = hall()
        near, far = pocket(g, 0, 15, 20), pocket(g, 1, 15, 70)
        got, _ = allocate([far, near], [bot(0, g, (15, 10))], g, NAV0, lam=5.0)
        assert len(got) == 1 and got[0].target is near

    def test_permutation_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(30):
            grid, robots, targets, lam = allocation_instance(rng)
            got, _ = allocate(targets, robots, grid, NAV0, lam=lam, with_paths=False)
            score = allocation_scores(grid, robots, targets, lam)
            pairing = {a.robot_id: a.target.target_id for a in got}
            assert len(pairing) == 3 and len(set(pairing.values())) == 3
            total = sum(score[r, k] for r, k in pairing.items())
            assert min(oracles.permutation_scores(score)) - 1e-9 <= total
            assert any(abs(total - v) < 1e-9 for v in oracles.permutation_scores(score))
            flat = np.sort(score.ravel())
            if np.all(np.diff(flat) > 1e-9):
                assert pairing == oracles.greedy_by_enumeration(score)

    def test_unreachable_rejected(self):
        g = hall()
        g.cells[:, 40] = OCCUPIED
        t = pocket(g, 0, 15, 60)
        got, rejected = allocate([t], [bot(0, g, (15, 10))], g, NAV0)
        assert not got and rejected == [(t, "NoPath")]

    def test_depleted_robot_ignored(self):
        g = hall()
        t = pocket(g, 0, 15, 40)
        robots = [bot(0, g, (15, 39)), bot(1, g, (15, 70))]
        robots[0].battery = Depleted(1000.0)
        got, _ = allocate([t], robots, g, NAV0)
        assert [a.robot_id for a in got] == [1]


def test_continuation_condition():
    occ = np.zeros((8, 16), dtype=bool)
    sg = build_subarea_grid(WorldMap(4.0, 2.0, 0.25, occ, ((1.0, 1.0),)), 2.0)
    sg.explored[:] = False
    assert not continuation_condition(sg)
    sg.explored[0, 0] = True
    assert not continuation_condition(sg)
    sg.explored[:] = True
    assert continuation_condition(sg)


class TestEstimateDpi:
    def test_empty_queue(self):
        g = hall()
        r = bot(0, g, (15, 5))
        est, unreachable = estimate_dpi(DeferredQueue(), [r], g, NAV0)
        assert est[0].t_dpi_s == 0.0 and est[0].b_pred_j == r.charge_j and not unreachable

    def test_ten_metre_target(self):
        # 40 cells down the middle of a wide hall: full speed the whole way
        g = hall()
        q = DeferredQueue()
        q.push(pocket(g, 7, 15, 46))
        r = bot(0, g, (15, 5))
        est, _ = estimate_dpi(q, [r], g, NAV0)
        assert est[0].t_dpi_s == pytest.approx(10.0)
        assert est[0].b_pred_j == pytest.approx(1000.0 - (2 + 10 + 17) * 10.0)
        assert est[0].tour == [7]

    def test_unreachable_excluded(self):
        g = hall()
        g.cells[:, 40] = OCCUPIED
        q = DeferredQueue()
        q.push(pocket(g, 0, 15, 20))
        q.push(pocket(g, 1, 15, 60))
        est, unreachable = estimate_dpi(q, [bot(0, g, (15, 5))], g, NAV0)
        assert [t.target_id for t in unreachable] == [1]
        assert est[0].tour == [0]

    def test_tour_chains_from_previous_goal(self):
        g = hall()
        q = DeferredQueue()
        q.push(pocket(g, 0, 15, 26))
        q.push(pocket(g, 1, 15, 46))
        est, _ = estimate_dpi(q, [bot(0, g, (15, 5))], g, NAV0)
        assert est[0].tour == [0, 1]
        # second leg starts at the first goal and steps around the first pocket
        passable = (g.cells == FREE)
        legs = oracles.ucs_length(passable, (15, 5), (15, 25), 0.25) + oracles.ucs_length(passable, (15, 25), (15, 45), 0.25)
        assert est[0].t_dpi_s == pytest.approx(legs)
        assert est[0].t_dpi_s > 10.0


class TestFeasibility:
    def test_battery_and_time(self):
        clock = MissionClock(t=100, dt_s=0.1, T_max=200)
        assert dpi_feasible(DpiEstimate(5.0, 10.0), clock) == (True, "")
        assert dpi_feasible(DpiEstimate(5.0, 0.0), clock) == (False, "battery")
        assert dpi_feasible(DpiEstimate(10.5, 10.0), clock) == (False, "time")
        assert dpi_feasible(DpiEstimate(10.0, 10.0), clock)[0]

    def test_zero_battery_robot_excluded(self):
        g = hall()
        q = DeferredQueue()
        q.push(pocket(g, 0, 15, 20))
        robots = [bot(0, g, (15, 18), 0.0), bot(1, g, (15, 70))]
        est, _ = estimate_dpi(q, robots, g, NAV0)
        assert est[0].b_pred_j < 0 and dpi_feasible(est[0], MissionClock(0, 0.1, 10_000)) == (False, "battery")
        got = deferred_priority_inspection(q, robots, MissionClock(0, 0.1, 10_000), g, est, NAV0)
        assert [a.robot_id for a in got] == [1]
        robots[0].battery = Depleted(1000.0)
        est, _ = estimate_dpi(q, robots, g, NAV0)
        assert 0 not in est
        got = deferred_priority_inspection(q, robots, MissionClock(0, 0.1, 10_000), g, est, NAV0)
        assert [a.robot_id for a in got] == [1]

    def test_nothing_when_infeasible(self):
        g = hall()
        q = DeferredQueue()
        q.push(pocket(g, 0, 15, 70))
        robots = [bot(0, g, (15, 5))]
        est, _ = estimate_dpi(q, robots, g, NAV0)
        assert deferred_priority_inspection(q, robots, MissionClock(0, 0.1, 50), g, est, NAV0) == []


def test_queue_keeps_discovery_order():
    g = hall()
    q = DeferredQueue()
    assert q.push(pocket(g, 5, 3, 3, tick=9))
    assert q.push(pocket(g, 2, 4, 4, tick=12))
    assert not q.push(pocket(g, 5, 3, 3, tick=9))
    assert q.push(pocket(g, 8, 5, 5, tick=1))
    assert q.ids() == [8, 5, 2]
    q.remove(5)
    assert q.ids() == [8, 2] and 5 not in q


def test_energy_estimate_uses_sensing_power():
    assert step_energy(PowerProfile(), 1.0, True, 10.0) == pytest.approx(290.0)
