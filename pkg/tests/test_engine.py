import csv
import io

import numpy as np
import pytest

from react_sim import replay_coverage, run, run_strategy_matrix
from react_sim.engine import parse_event, spawn_order, summary_row, write_outputs

from conftest import CLOSET_ROOM, factory_run, micro_scenario, room_rows

CLOSET = dict(T_max_s=120, oros__subarea_size_m=6.0)


@pytest.fixture(scope="module")
def closet_run():
    return run(micro_scenario(CLOSET_ROOM, **CLOSET))


def kinds(result):
    return [parse_event(line) for line in result.events.lines]


class TestDeterminism:
    def test_same_seed_same_bytes(self, closet_run):
        again = run(micro_scenario(CLOSET_ROOM, **CLOSET))
        assert again.events.text() == closet_run.events.text()
        assert np.array_equal(again.coverage, closet_run.coverage)

    def test_factory_two_robots_repeatable(self):
        fresh = run(factory_run("factory_react_r2", 3).scenario)
        assert fresh.events.text() == factory_run("factory_react_r2", 3).events.text()

    @pytest.mark.parametrize("name", ["factory_react", "factory_react_r3"])
    def test_replay_matches_coverage(self, name):
        res = factory_run(name)
        assert np.array_equal(replay_coverage(res.scenario, res.events.lines), res.coverage)

    def test_spawn_order(self):
        assert spawn_order(3, 1, 42) == [0]
        order = spawn_order(3, 3, 42)
        assert sorted(order) == [0, 1, 2] and order == spawn_order(3, 3, 42)


class TestInvariants:
    @pytest.mark.parametrize("name", ["factory_react", "factory_oros_only", "factory_naive", "factory_react_r3"])
    def test_coverage_monotone_and_bounded(self, name):
        cov = factory_run(name).coverage
        assert (np.diff(cov) >= 0).all()
        assert 0.0 <= cov[0] and cov[-1] <= 1.0

    @pytest.mark.parametrize("name", ["factory_react", "factory_react_r2", "factory_react_r3"])
    def test_never_inside_a_wall(self, name):
        res = factory_run(name)
        world = res.scenario.world
        for _, _, x, y, _ in res.trajectory:
            assert not world.occupied[world.cell_of(x, y)]

    @pytest.mark.parametrize("name", ["factory_react", "factory_react_r2", "factory_naive"])
    def test_energy_identity(self, name):
        res = factory_run(name)
        cap = res.scenario.capacity_j
        assert res.charges[0] == pytest.approx(np.full(res.scenario.robots, cap))
        np.testing.assert_allclose(cap - res.charges[-1], res.energy_j, atol=1e-9, rtol=0)

    def test_energy_bounds_per_tick(self):
        res = factory_run("factory_react")
        p, dt = res.scenario.profile, res.dt_s
        drops = -np.diff(res.charges, axis=0)
        assert (drops >= p.idle_w * dt - 1e-9).all()
        assert (drops <= (p.idle_w + p.locomotion_w_per_mps + p.sensing_w) * dt + 1e-9).all()

    def test_gated_time_matches_trajectory(self):
        res = factory_run("factory_react")
        off = sum(1 for *_, on in res.trajectory if not on)
        assert off * res.dt_s == pytest.approx(float(res.gated_s.sum()))

    def test_always_on_never_gates(self):
        res = factory_run("factory_react", always_on=True)
        assert res.gated_s.sum() == 0.0
        assert all(on for *_, on in res.trajectory)


class TestDeferredInspection:
    def test_dpi_only_after_every_subarea(self, closet_run):
        ev = kinds(closet_run)
        start = next(i for i, (_, k, _) in enumerate(ev) if k == "DPI_START")
        a, b = closet_run.subarea_coverage.shape
        assert sum(1 for _, k, _ in ev[:start] if k == "SUBAREA_EXPLORED") == a * b
        deferred = {p["id"] for _, k, p in ev if k == "TARGET_DEFERRED"}
        assigned = {p["id"] for _, k, p in ev[start:] if k == "TARGET_ASSIGNED"}
        assert deferred and deferred <= assigned

    def test_closet_reached(self, closet_run):
        assert closet_run.end_reason == "complete"
        assert closet_run.final_coverage == 1.0 and closet_run.queue_left == 0

    def test_factory_dpi_after_all_subareas(self):
        res = factory_run("factory_react_360")
        ev = kinds(res)
        start = next(i for i, (_, k, _) in enumerate(ev) if k == "DPI_START")
        explored = {(p["a"], p["b"]) for _, k, p in ev[:start] if k == "SUBAREA_EXPLORED"}
        assert len(explored) == res.subarea_coverage.size

    def test_skip_when_deadline_too_close(self):
        res = run(micro_scenario(CLOSET_ROOM, T_max_s=13, oros__subarea_size_m=6.0))
        skips = [p for _, k, p in kinds(res) if k == "DPI_SKIP"]
        assert skips and "time" in skips[0].values()
        assert not any(k == "DPI_START" for _, k, _ in kinds(res))
        assert res.end_reason == "dpi_skipped" and res.queue_left >= 1
        assert res.end_tick < res.scenario.T_max

    def test_oros_only_never_defers(self):
        res = run(micro_scenario(CLOSET_ROOM, strategy="OROS_ONLY", **CLOSET))
        assert not any(k.startswith(("TARGET_", "DPI_")) for _, k, _ in kinds(res))


def test_empty_room_finishes_early():
    res = run(micro_scenario(room_rows(20, 20, spawn=(10, 10)), T_max_s=60))
    assert res.end_reason == "complete" and res.final_coverage == 1.0
    assert res.end_tick < res.scenario.T_max


def test_outputs_reproduce_summary(closet_run, tmp_path):
    write_outputs(closet_run, tmp_path)
    cov = list(csv.DictReader(io.StringIO((tmp_path / "coverage.csv").read_text())))
    summary = next(csv.DictReader(io.StringIO((tmp_path / "summary.csv").read_text())))
    events = (tmp_path / "events.log").read_text().splitlines()
    end_tick, kind, end = parse_event(events[-1])
    assert kind == "MISSION_END"
    assert summary["end_tick"] == str(end_tick) and summary["end_reason"] == end["reason"]
    assert summary["final_coverage"] == cov[-1]["coverage"] == end["coverage"]
    first90 = next(r["seconds"] for r in cov if float(r["coverage"]) >= 0.9)
    assert summary["time_to_90_s"] == first90
    cap = closet_run.scenario.capacity_j
    assert float(summary["total_energy_j"]) == pytest.approx(cap - float(cov[-1]["charge_j_r0"]), abs=1e-5)
    for row in cov[:5]:
        assert all(len(v.split(".")[1]) == 6 for k, v in row.items() if k != "tick")


def test_matrix_twin_savings():
    sc = micro_scenario(CLOSET_ROOM, **CLOSET)
    rows = run_strategy_matrix([sc])
    gated, twin = rows
    assert (gated["always_on"], twin["always_on"]) == (0, 1)
    saved = float(twin["total_energy_j"]) - float(gated["total_energy_j"])
    assert float(gated["savings_j"]) == pytest.approx(saved, abs=1e-5)
    assert summary_row(run(sc))["total_energy_j"] == gated["total_energy_j"]
