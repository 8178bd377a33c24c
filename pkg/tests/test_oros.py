import itertools

import numpy as np
import pytest

from react_sim import oracles
from react_sim.config import bundled_map_text
from react_sim.energy import Battery, PowerProfile
from react_sim.nav import NavConfig, RobotState, path_from_cells
from react_sim.oros import (
    SubareaGrid,
    Trip,
    build_subarea_grid,
    leg_sensing,
    plan_objective,
    solve_oros,
    subarea_coverage,
    trip_for_path,
    update_coverage,
)
from react_sim.perception import OccupancyGrid
from react_sim.selfcheck import random_oros_instance
from react_sim.world import WorldMap, load_map, observable_cells, scan

from conftest import room_rows, text_map


def open_world(width_m, height_m, cell=0.25):
    occ = np.zeros((int(round(height_m / cell)), int(round(width_m / cell))), dtype=bool)
    return WorldMap(width_m, height_m, cell, occ, ((cell * 1.5, cell * 1.5),))


class TestBuild:
    def test_factory_dims(self):
        sg = build_subarea_grid(load_map(bundled_map_text("factory.map")), 10.0)
        assert sg.dims == (2, 5)
        assert not sg.explored[0, 0]

    def test_smaller_than_one_subarea(self):
        sg = build_subarea_grid(open_world(3.0, 2.0), 10.0)
        assert sg.dims == (1, 1)

    def test_first_centroid(self):
        sg = build_subarea_grid(open_world(20.0, 20.0), 10.0)
        assert sg.centroid(0, 0) == (5.0, 5.0)
        assert sg.subarea_of_point(15.0, 5.0) == (0, 1)

    def test_rejects_bad_size(self):
        with pytest.raises(ValueError):
            build_subarea_grid(open_world(4.0, 4.0), 0.0)

    def test_sealed_subarea_explored_by_exception(self):
        sg = build_subarea_grid(load_map(bundled_map_text("factory.map")), 10.0)
        # nothing in the machine block can be sensed
        assert not sg.exception.any() or all(sg.coverage[s] == 1.0 for s in zip(*np.nonzero(sg.exception)))


class TestCoverage:
    @pytest.fixture
    def world(self):
        return load_map(text_map(room_rows(80, 40, spawn=(10, 20))))

    def test_all_unknown(self, world):
        sg = build_subarea_grid(world, 10.0)
        assert (subarea_coverage(sg, OccupancyGrid.like(world)) == 0).all()

    def test_saturation(self, world):
        sg = build_subarea_grid(world, 10.0)
        g = OccupancyGrid.like(world)
        g.cells[observable_cells(world)] = 1
        newly = update_coverage(sg, g, 1.0)
        assert sorted(newly) == sg.all_subareas()
        assert (sg.coverage == 1.0).all()

    def test_counting_oracle(self, world):
        sg = build_subarea_grid(world, 10.0)
        g = OccupancyGrid.like(world)
        g.integrate(scan(world, (5.0, 5.0), 360, 6.0))
        cov = subarea_coverage(sg, g)
        obs = observable_cells(world)
        for a, b in sg.all_subareas():
            r = sg.rect(a, b)
            den = obs[r.slices].sum()
            num = sum(1 for iy in range(r.iy0, r.iy1) for ix in range(r.ix0, r.ix1) if obs[iy, ix] and g.cells[iy, ix])
            assert cov[a, b] == pytest.approx(num / den)

    def test_flags_monotone(self, world):
        sg = build_subarea_grid(world, 10.0)
        g = OccupancyGrid.like(world)
        g.cells[observable_cells(world)] = 1
        update_coverage(sg, g, 0.95)
        # a later, emptier snapshot never clears flags or lowers coverage
        update_coverage(sg, OccupancyGrid.like(world), 0.95)
        assert sg.explored.all() and (sg.coverage == 1.0).all()


def one_robot(charge=1000.0, rid=0):
    return RobotState(rid, (0.5, 0.5), Battery(1000.0, charge))


def fake_trip(rid, s, t, e):
    return Trip(rid, s, path_from_cells([(0, 0)], 0.25), [True], t, e)


class TestSolve:
    def test_forced_move(self):
        sg = build_subarea_grid(open_world(2.0, 2.0), 2.0)
        sg.explored[:] = False
        plan = solve_oros(sg, [one_robot()], 1e-3, 60.0, {(0, (0, 0)): fake_trip(0, (0, 0), 3.0, 50.0)})
        d = plan.directives[0]
        assert d.subarea == (0, 0) and d.sensing_on and plan.mode == "exhaustive"

    def test_empty_when_all_explored(self):
        sg = build_subarea_grid(open_world(4.0, 2.0), 2.0)
        sg.explored[:] = True
        plan = solve_oros(sg, [one_robot()], 1e-3, 60.0, {})
        assert not plan and plan.mode == "empty"

    def test_two_robots_symmetric(self):
        sg = build_subarea_grid(open_world(4.0, 2.0), 2.0)
        near = {(0, (0, 0)): 5.0, (0, (0, 1)): 50.0, (1, (0, 0)): 50.0, (1, (0, 1)): 5.0}
        trips = {(r, s): fake_trip(r, s, t, t * 10) for (r, s), t in near.items()}
        robots = [one_robot(rid=0), one_robot(rid=1)]
        plan = solve_oros(sg, robots, 1.0 / 2000.0, 60.0, trips)
        assert {r: d.subarea for r, d in plan.directives.items()} == {0: (0, 0), 1: (0, 1)}
        alt = {0: trips[(0, (0, 1))], 1: trips[(1, (0, 0))]}
        assert plan.objective > plan_objective(alt, robots, 1.0 / 2000.0, 60.0)

    def test_sigma_prefers_sensing_off_transit(self):
        # 2x2 subareas of 8x8 cells; (0, 1) explored. Two equal-length routes from
        # (0, 0): one crosses (0, 1) into (1, 1), the other stays in (0, 0) up to (1, 0)
        sg = build_subarea_grid(open_world(4.0, 4.0), 2.0)
        sg.explored[:] = False
        sg.explored[0, 1] = True
        via_explored = path_from_cells([(4, 7)] + [(4, x) for x in range(8, 13)] + [(y, 12) for y in range(5, 13)], 0.25)
        direct = path_from_cells([(4, 7)] + [(4, x) for x in range(6, 1, -1)] + [(y, 2) for y in range(5, 13)], 0.25)
        assert via_explored.length_m == direct.length_m
        nav, prof = NavConfig(), PowerProfile()
        ta = trip_for_path(0, (1, 1), via_explored, sg, (0, 0), nav, prof)
        tb = trip_for_path(0, (1, 0), direct, sg, (0, 0), nav, prof)
        assert not all(ta.sensing) and all(tb.sensing)
        assert ta.energy_j < tb.energy_j
        trips = {(0, (1, 1)): ta, (0, (1, 0)): tb}
        robots = [one_robot()]
        by_hand = {s: plan_objective({0: t}, robots, 1.0, 60.0) for s, t in ((ta.subarea, ta), (tb.subarea, tb))}
        plan = solve_oros(sg, robots, 1.0, 60.0, trips)
        assert plan.directives[0].subarea == max(by_hand, key=by_hand.get) == (1, 1)
        assert not plan.directives[0].sensing_on
        # without the battery term the two plans tie and the lower subarea wins
        assert solve_oros(sg, robots, 0.0, 60.0, trips).directives[0].subarea == (1, 0)

    def test_enumeration_oracle_all_sizes(self):
        rng = np.random.default_rng(99)
        for R, S in itertools.product(range(1, 4), range(1, 6)):
            for _ in range(8):
                sg, robots, trips = random_oros_instance(rng, R, S)
                sigma = float(rng.choice([0.0, 1e-4, 1e-2]))
                plan = solve_oros(sg, robots, sigma, 60.0, trips)
                assert plan.mode == "exhaustive"
                ref = oracles.best_assignment_value(
                    [r.id for r in robots], sg.all_subareas(),
                    lambda rid, s: (trips[(rid, s)].time_s, trips[(rid, s)].energy_j) if (rid, s) in trips else None,
                    {r.id: r.charge_j for r in robots}, sigma, 60.0,
                )
                assert plan.objective == pytest.approx(ref, abs=1e-12)
                chosen = [d.subarea for d in plan.directives.values()]
                assert len(chosen) == len(set(chosen))

    def test_greedy_beyond_exhaustive_limits(self):
        rng = np.random.default_rng(4)
        sg, robots, trips = random_oros_instance(rng, 4, 5)
        assert solve_oros(sg, robots, 1e-3, 60.0, trips).mode == "greedy"

    def test_sigma_zero_scale_invariant(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            sg, robots, trips = random_oros_instance(rng, 3, 4)
            a = solve_oros(sg, robots, 0.0, 60.0, trips)
            scaled = [RobotState(r.id, r.pose, Battery(1000.0, r.charge_j * 0.5)) for r in robots]
            b = solve_oros(sg, scaled, 0.0, 60.0, trips)
            assert {k: d.subarea for k, d in a.directives.items()} == {k: d.subarea for k, d in b.directives.items()}

    def test_deterministic(self):
        sg, robots, trips = random_oros_instance(np.random.default_rng(3), 3, 5)
        plans = [solve_oros(sg, robots, 1e-3, 60.0, trips) for _ in range(3)]
        assert len({tuple(sorted((k, d.subarea) for k, d in p.directives.items())) for p in plans}) == 1

    def test_reserved_and_depleted_skipped(self):
        sg = build_subarea_grid(open_world(4.0, 2.0), 2.0)
        trips = {(0, s): fake_trip(0, s, 5.0, 10.0) for s in sg.all_subareas()}
        plan = solve_oros(sg, [one_robot()], 1e-3, 60.0, trips, reserved={(0, 0)})
        assert plan.directives[0].subarea == (0, 1)


def test_leg_sensing_only_off_in_explored_non_departure():
    sg = build_subarea_grid(open_world(6.0, 2.0), 2.0)
    sg.explored[0, 0] = sg.explored[0, 1] = True
    path = path_from_cells([(4, x) for x in range(2, 22)], 0.25)
    flags = leg_sensing(path, sg, (0, 0))
    for (iy, ix), on in zip(path.cells, flags):
        s = sg.subarea_of_cell(iy, ix)
        assert on == (s != (0, 1))
