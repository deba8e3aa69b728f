"""End-to-end run: GSCM paths per region, condensed parameters, table lookup."""
from __future__ import annotations

import csv
import dataclasses
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .condense import CondensedParams, EstimatorConfig, condense
from .exceptions import ConfigError
from .fertable import NOISE_FLOOR_DBM, FerTable
from .gscm import Scenario, compute_paths, load_scenario, segment_regions

TRACE_HEADER = ("region", "t_start_s", "link", "fer_mean", "fer_max", "rx_power_dbm",
                "sigma_tau_ns", "f_dmax_hz", "k_db", "f_los_hz", "sigma_nu_hz", "wall_ms")


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".9g")


@dataclass(frozen=True)
class RunConfig:
    scenario_path: str
    table_path: str
    realizations: int = 1
    seed: int = 0
    emit_params_trace: bool = True
    realtime_check: bool = False
    n_jobs: int = 1

    def __post_init__(self):
        if self.realizations < 1:
            raise ConfigError("realizations must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class LinkResult:
    fer: float
    psi: CondensedParams
    wall_time_s: float

    @property
    def no_coverage(self) -> bool:
        return self.psi.no_coverage


@dataclass(frozen=True)
class TraceRow:
    region_index: int
    t_start_s: float
    link: str
    fer_mean: float
    fer_max: float
    psi: CondensedParams
    wall_time_s: float | None = None

    @property
    def no_coverage(self) -> bool:
        return self.psi.no_coverage


@dataclass(frozen=True)
class FerTrace:
    rows: tuple
    t_stat_s: float

    def to_csv_text(self, emit_params: bool = True) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for r in self.rows:
            p = r.psi
            params = ([_fmt(p.rx_power_dbm), _fmt(p.sigma_tau_s * 1e9), _fmt(p.f_dmax_hz),
                       _fmt(p.k_db), _fmt(p.f_los_hz), _fmt(p.sigma_nu_hz)]
                      if emit_params else [""] * 6)
            wall = "" if r.wall_time_s is None else _fmt(r.wall_time_s * 1e3)
            writer.writerow([str(r.region_index), _fmt(r.t_start_s), r.link,
                             _fmt(r.fer_mean), _fmt(r.fer_max), *params, wall])
        return buf.getvalue()

    def save(self, path, emit_params: bool = True) -> None:
        Path(path).write_text(self.to_csv_text(emit_params))


@dataclass(frozen=True)
class RealtimeReport:
    t_stat_s: float
    per_region_wall_times: tuple
    max_wall_time_s: float
    budget_met: bool
    flagged_regions: tuple


def snr(p_dbm: float, p_noise_dbm: float = NOISE_FLOOR_DBM) -> float:
    if not (math.isfinite(p_dbm) and math.isfinite(p_noise_dbm)):
        raise ValueError("powers must be finite")
    return p_dbm - p_noise_dbm


def _run_scenario(scenario: Scenario, seed: int) -> Scenario:
    """Scenario whose random draws are keyed by both its own and the run seed."""
    state = np.random.SeedSequence([scenario.seed, seed]).generate_state(2, np.uint32)
    return dataclasses.replace(scenario, seed=int(state[0]) | (int(state[1]) << 32))


def simulate_realization(scenario: Scenario, table: FerTable, realization: int,
                         estimator: EstimatorConfig | None = None) -> list[list[LinkResult]]:
    """Per-region, per-link results of one GSCM realization.

    The wall time covers path generation, condensation and the table lookup.
    Regions without received power get FER 1.
    """
    estimator = estimator or EstimatorConfig(p_tx_dbm=scenario.p_tx_dbm)
    out = []
    for span in segment_regions(scenario):
        row = []
        for link in range(len(scenario.links)):
            t0 = time.perf_counter()
            region = compute_paths(scenario, span.index, link, realization)
            psi = condense(region, scenario.radio, estimator)
            fer = 1.0 if psi.no_coverage else table.query(psi)
            row.append(LinkResult(fer, psi, time.perf_counter() - t0))
        out.append(row)
    return out


def aggregate(scenario: Scenario, per_realization: list, timed: bool) -> FerTrace:
    """Average FER over realizations; parameters and timing come from realization 0."""
    spans = segment_regions(scenario)
    rows = []
    for r, span in enumerate(spans):
        for link in range(len(scenario.links)):
            fers = np.array([real[r][link].fer for real in per_realization])
            first = per_realization[0][r][link]
            rows.append(TraceRow(span.index, span.t_start_s, scenario.link_name(link),
                                 float(fers.mean()), float(fers.max()), first.psi,
                                 first.wall_time_s if timed else None))
    return FerTrace(tuple(rows), scenario.t_stat_s)


def run_simulation(cfg: RunConfig, scenario: Scenario | None = None,
                   table: FerTable | None = None) -> tuple[FerTrace, RealtimeReport | None]:
    scenario = scenario or load_scenario(cfg.scenario_path)
    table = table or FerTable.load(cfg.table_path)
    scenario = _run_scenario(scenario, cfg.seed)
    estimator = EstimatorConfig(p_tx_dbm=scenario.p_tx_dbm)

    def one(q):
        return simulate_realization(scenario, table, q, estimator)

    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(cfg.n_jobs) as pool:
            results = list(pool.map(one, range(cfg.realizations)))
    else:
        results = [one(q) for q in range(cfg.realizations)]
    if cfg.realtime_check:
        # time realization 0 again without concurrent work competing for the CPU
        results[0] = one(0)
    trace = aggregate(scenario, results, timed=cfg.realtime_check)
    report = realtime_report(trace) if cfg.realtime_check else None
    return trace, report


def realtime_report(trace: FerTrace) -> RealtimeReport:
    """Compare the per-region processing time of all links with the region duration."""
    per_region: dict[int, float] = {}
    for row in trace.rows:
        if row.wall_time_s is None:
            raise ValueError("trace carries no wall times")
        per_region[row.region_index] = per_region.get(row.region_index, 0.0) + row.wall_time_s
    times = tuple(per_region[k] for k in sorted(per_region))
    worst = max(times, default=0.0)
    flagged = tuple(k for k in sorted(per_region) if per_region[k] > trace.t_stat_s)
    return RealtimeReport(trace.t_stat_s, times, worst, worst <= trace.t_stat_s, flagged)
