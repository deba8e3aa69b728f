import dataclasses
import json
import math
import time

import numpy as np
import pytest

from vehlink.condense import CondensedParams, condense
from vehlink.exceptions import ConfigError
from vehlink.fertable import FerTable, FrameBudget, SyntheticOracle, build_table, table2_grid
from vehlink.gscm import compute_paths, load_scenario
from vehlink.sim import (TRACE_HEADER, FerTrace, RunConfig, TraceRow, _run_scenario, aggregate,
                         realtime_report, run_simulation, simulate_realization, snr)

CROSSING = "scenarios/crossing.json"


def small_doc(**over):
    doc = {
        "radio": {"carrier_hz": 5.9e9, "bandwidth_hz": 10e6, "t_stat_s": 0.12, "t_s": 0.5e-3},
        "nodes": [
            {"id": "tx", "waypoints": [[0, -20, -2], [1, -10, -2], [2.4, 4, -2]]},
            {"id": "rx", "waypoints": [[0, 2, -25], [2.4, 2, 5]]},
        ],
        "scatterers": [{"kind": "static", "position": [8, 6], "gain_db": 6},
                       {"kind": "mobile", "waypoints": [[0, 15, 3], [2.4, -5, 3]], "gain_db": 6}],
        "buildings": [[[-30, 10], [-5, 10]], [[5, -10], [30, -10]]],
        "diffuse": {"density_per_m": 0.2, "gain_db": 0, "jitter_m": 0.3},
        "seed": 4,
    }
    doc.update(over)
    return doc


@pytest.fixture(scope="module")
def table_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("table") / "table.csv"
    build_table(table2_grid(), SyntheticOracle(common_seed=1), FrameBudget(1e-2, 1e-2), 1).save(path)
    return str(path)


@pytest.fixture(scope="module")
def small_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("scn") / "small.json"
    path.write_text(json.dumps(small_doc()))
    return str(path)


def row(region, wall, t_stat=0.12):
    psi = CondensedParams(-80.0, 1e-8, 100.0, 10.0, 0.0, 50.0)
    return TraceRow(region, region * t_stat, "a-b", 0.1, 0.1, psi, wall)


class TestSnr:
    def test_values(self):
        assert snr(-94.9) == pytest.approx(7.1, abs=1e-12)
        assert snr(-102.0) == 0.0
        assert snr(-78.9) == pytest.approx(23.1, abs=1e-12)

    def test_non_finite(self):
        with pytest.raises(ValueError):
            snr(-math.inf)


class TestRealtimeReport:
    def test_all_zero(self):
        rep = realtime_report(FerTrace(tuple(row(r, 0.0) for r in range(5)), 0.12))
        assert rep.budget_met and rep.max_wall_time_s == 0.0 and rep.flagged_regions == ()

    def test_flags_slow_region(self):
        rows = tuple(row(r, 0.24 if r == 3 else 0.01) for r in range(5))
        rep = realtime_report(FerTrace(rows, 0.12))
        assert not rep.budget_met and rep.flagged_regions == (3,)
        assert rep.max_wall_time_s == 0.24

    def test_links_are_summed(self):
        rows = (row(0, 0.07), dataclasses.replace(row(0, 0.07), link="a-c"))
        rep = realtime_report(FerTrace(rows, 0.12))
        assert rep.per_region_wall_times == (pytest.approx(0.14),) and not rep.budget_met

    def test_requires_wall_times(self):
        with pytest.raises(ValueError):
            realtime_report(FerTrace((row(0, None),), 0.12))


class TestRunSimulation:
    def test_config_validation(self):
        with pytest.raises(ConfigError):
            RunConfig("s", "t", realizations=0)

    def test_static_constant_trace(self, tmp_path, table_path):
        doc = small_doc(scatterers=[], buildings=[], diffuse={"density_per_m": 0})
        doc["nodes"] = [{"id": "a", "waypoints": [[0, 0, 0], [1.2, 0, 0]]},
                        {"id": "b", "waypoints": [[0, 40, 0], [1.2, 40, 0]]}]
        p = tmp_path / "static.json"
        p.write_text(json.dumps(doc))
        trace, _ = run_simulation(RunConfig(str(p), table_path, realizations=3))
        table = FerTable.load(table_path)
        sc = load_scenario(p)
        expected = table.query(condense(compute_paths(sc, 0), sc.radio))
        assert len(trace.rows) == 10
        assert {r.fer_mean for r in trace.rows} == {expected}

    def test_bitwise_repeat(self, tmp_path, small_path, table_path):
        cfg = RunConfig(small_path, table_path, realizations=3, seed=9)
        for name in ("a.csv", "b.csv"):
            trace, _ = run_simulation(cfg)
            trace.save(tmp_path / name)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        lines = (tmp_path / "a.csv").read_text().splitlines()
        assert lines[0] == ",".join(TRACE_HEADER)
        assert len(lines) == 1 + 20

    def test_parallel_schedule(self, small_path, table_path):
        serial, _ = run_simulation(RunConfig(small_path, table_path, realizations=6, seed=2))
        parallel, _ = run_simulation(RunConfig(small_path, table_path, realizations=6, seed=2,
                                               n_jobs=4))
        assert serial.to_csv_text() == parallel.to_csv_text()

    def test_seed_changes_draws(self, small_path, table_path):
        a, _ = run_simulation(RunConfig(small_path, table_path, seed=1))
        b, _ = run_simulation(RunConfig(small_path, table_path, seed=2))
        assert [r.psi for r in a.rows] != [r.psi for r in b.rows]

    def test_mean_of_realizations(self, small_path, table_path):
        q = 4
        trace, _ = run_simulation(RunConfig(small_path, table_path, realizations=q, seed=5))
        sc = _run_scenario(load_scenario(small_path), 5)
        table = FerTable.load(table_path)
        singles = [aggregate(sc, [simulate_realization(sc, table, k)], timed=False)
                   for k in range(q)]
        for i, r in enumerate(trace.rows):
            fers = [s.rows[i].fer_mean for s in singles]
            assert abs(r.fer_mean - np.mean(fers)) <= 1e-12
            assert r.fer_max == max(fers)
            assert min(fers) <= r.fer_mean <= max(fers)
        assert [r.psi for r in trace.rows] == [r.psi for r in singles[0].rows]

    def test_no_coverage(self, tmp_path, table_path):
        doc = small_doc(scatterers=[], diffuse={"density_per_m": 0},
                        buildings=[[[10, -100], [10, 100]]])
        doc["nodes"] = [{"id": "a", "waypoints": [[0, 0, 0], [0.5, 0, 0]]},
                        {"id": "b", "waypoints": [[0, 20, 0], [0.5, 20, 0]]}]
        p = tmp_path / "dark.json"
        p.write_text(json.dumps(doc))
        trace, _ = run_simulation(RunConfig(str(p), table_path))
        assert all(r.no_coverage and r.fer_mean == 1.0 for r in trace.rows)
        assert ",-inf," in trace.to_csv_text()

    def test_params_omitted(self, small_path, table_path):
        trace, _ = run_simulation(RunConfig(small_path, table_path))
        line = trace.to_csv_text(emit_params=False).splitlines()[1]
        assert line.endswith(",,,,,,,")

    def test_wall_time_only_with_check(self, small_path, table_path):
        plain, rep = run_simulation(RunConfig(small_path, table_path))
        assert rep is None and all(r.wall_time_s is None for r in plain.rows)
        timed, rep = run_simulation(RunConfig(small_path, table_path, realtime_check=True))
        assert all(r.wall_time_s > 0 for r in timed.rows)
        assert len(rep.per_region_wall_times) == 20

    def test_multi_link(self, tmp_path, table_path):
        doc = small_doc()
        doc["nodes"].append({"id": "c", "waypoints": [[0, 30, 30], [2.4, 20, 30]]})
        p = tmp_path / "three.json"
        p.write_text(json.dumps(doc))
        trace, _ = run_simulation(RunConfig(str(p), table_path))
        assert [r.link for r in trace.rows[:3]] == ["tx-rx", "tx-c", "rx-c"]


def test_condense_time_independent_of_m():
    # end-to-end form of the pdp_fast complexity property, on a crossing region
    sc = load_scenario(CROSSING)
    region = compute_paths(sc, 30)
    times = {}
    for m in (64, 4096):
        cfg = dataclasses.replace(sc.radio, m_samples=m, t_stat=sc.radio.t_s * m)
        condense(region, cfg)
        samples = []
        for _ in range(5):
            t0 = time.perf_counter()
            condense(region, cfg)
            samples.append(time.perf_counter() - t0)
        times[m] = float(np.median(samples))
    assert times[4096] == pytest.approx(times[64], rel=0.10)
