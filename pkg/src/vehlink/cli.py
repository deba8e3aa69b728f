"""Command-line interface: ``vehlink run | gen-table | analyze | validate``."""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from pathlib import Path

import numpy as np

from .channel import SamplingConfig, StationarityRegion, sample_cir
from .condense import pdp_brute, pdp_fast
from .doppler import (DopplerEnv, analytic_rms_doppler, closed_form_exp_delay_spread,
                      empirical_rms_doppler, resolution_analysis)
from .exceptions import ConfigError, VehlinkError
from .fertable import FrameBudget, SyntheticOracle, build_table, load_grid, table2_grid
from .sim import RunConfig, run_simulation
from .tdl import ExpPdpConfig, TdlConfig

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG = 0, 1, 2
PDP_FAST_TOLERANCE = 1e-10


def _range(text: str, steps: int) -> np.ndarray:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise ConfigError(f"expected LO:HI, got {text!r}") from None
    return np.linspace(lo, hi, steps)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _emit(rows, header, out) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    if out in (None, "-"):
        sys.stdout.write(buf.getvalue())
    else:
        Path(out).write_text(buf.getvalue())


def _g(x) -> str:
    if isinstance(x, float) and math.isinf(x):
        return "-inf" if x < 0 else "inf"
    return format(x, ".9g") if isinstance(x, float) else str(x)


def cmd_run(args) -> int:
    cfg = RunConfig(args.scenario, args.table, args.realizations, args.seed,
                    emit_params_trace=not args.no_params, realtime_check=args.realtime_check,
                    n_jobs=args.jobs)
    trace, report = run_simulation(cfg)
    trace.save(args.out, emit_params=cfg.emit_params_trace)
    if report is not None:
        status = "met" if report.budget_met else "MISSED"
        print(f"real-time budget {status}: max {report.max_wall_time_s * 1e3:.2f} ms "
              f"per region vs T_stat {report.t_stat_s * 1e3:.1f} ms", file=sys.stderr)
        if not report.budget_met:
            print(f"regions over budget: {list(report.flagged_regions)}", file=sys.stderr)
            return EXIT_VALIDATION
    return EXIT_OK


def cmd_gen_table(args) -> int:
    grid = load_grid(args.grid) if args.grid else table2_grid()
    if args.oracle != "synthetic":
        raise VehlinkError(f"unknown oracle {args.oracle!r}")
    oracle = SyntheticOracle(common_seed=None if args.independent_frames else args.seed)
    table = build_table(grid, oracle, FrameBudget(args.kappa, args.iota), args.seed,
                        progress_path=args.progress, n_jobs=args.jobs)
    table.save(args.out)
    return EXIT_OK


def cmd_analyze_doppler(args) -> int:
    rows = []
    pdp_cfgs = [ExpPdpConfig(t, args.dt, args.taps) for t in _range(args.tau0_range, args.steps)]
    for pdp in pdp_cfgs:
        sigma_tau = closed_form_exp_delay_spread(pdp)
        for k_db in _floats(args.k_db):
            for f_los in _floats(args.flos):
                cfg = TdlConfig.from_db(pdp, k_db, f_dmax_hz=args.fdmax, f_los_hz=f_los,
                                        paths_per_tap=args.paths_per_tap, seed=args.seed)
                analytic = analytic_rms_doppler(DopplerEnv.from_tdl(cfg))
                empirical = (empirical_rms_doppler(cfg, n_runs=args.empirical_runs)
                             if args.empirical_runs else "")
                rows.append([_g(pdp.tau0_s), _g(sigma_tau * 1e9), _g(k_db), _g(float(args.fdmax)),
                             _g(f_los), _g(analytic), _g(empirical) if empirical != "" else ""])
    _emit(rows, ["tau0_s", "sigma_tau_ns", "k_db", "f_dmax_hz", "f_los_hz",
                 "sigma_nu_analytic_hz", "sigma_nu_empirical_hz"], args.out)
    return EXIT_OK


def cmd_analyze_resolution(args) -> int:
    rows = []
    for target in _range(args.targets, args.steps):
        rep = resolution_analysis(target, args.dynamic_range_db, args.dt, args.taps)
        rows.append([_g(target * 1e9), rep.n_taps_used, _g(rep.achieved_sigma_tau_s * 1e9),
                     _g(rep.abs_error_s * 1e9), _g(rep.dynamic_range_db)])
    _emit(rows, ["target_sigma_tau_ns", "n_taps_used", "achieved_sigma_tau_ns",
                 "abs_error_ns", "dynamic_range_db"], args.out)
    return EXIT_OK


def random_region(rng: np.random.Generator, max_paths: int = 20, max_samples: int = 256):
    """Random region and sampling grid for fast/brute PDP comparisons."""
    n_paths = int(rng.integers(1, max_paths + 1))
    m = int(rng.integers(1, max_samples + 1))
    cfg = SamplingConfig(t_s=1e-4, t_c=1e-7, n_delay_bins=24, m_samples=m)
    region = StationarityRegion.from_arrays(
        0, rng.uniform(0.01, 1.0, n_paths), rng.random(n_paths),
        rng.uniform(0, 15 * cfg.t_c, n_paths),
        rng.uniform(-0.45, 0.45, n_paths) / cfg.t_s, np.full(n_paths, 3))
    return region, cfg


def pdp_fast_deviation(region, cfg) -> float:
    """Largest per-bin relative deviation of the fast PDP from the sampled one."""
    fast = pdp_fast(region, cfg).powers
    brute = pdp_brute(sample_cir(region, cfg)).powers
    scale = np.maximum(np.abs(brute), np.finfo(float).tiny)
    return float(np.max(np.abs(fast - brute) / scale))


def cmd_validate_pdp_fast(args) -> int:
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    rows, worst = [], 0.0
    for case in range(args.cases):
        region, cfg = random_region(rng)
        dev = pdp_fast_deviation(region, cfg)
        worst = max(worst, dev)
        rows.append([case, len(region), cfg.m_samples, _g(dev)])
    _emit(rows, ["case", "n_paths", "m_samples", "max_rel_deviation"], args.out)
    ok = worst <= PDP_FAST_TOLERANCE
    print(f"pdp-fast {'OK' if ok else 'FAILED'}: max deviation {worst:.3e} "
          f"(tolerance {PDP_FAST_TOLERANCE:g})", file=sys.stderr)
    return EXIT_OK if ok else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vehlink", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario and write a FER trace")
    p.add_argument("--scenario", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--realizations", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--realtime-check", action="store_true")
    p.add_argument("--no-params", action="store_true", help="leave condensed-parameter columns empty")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("gen-table", help="build a FER lookup table")
    p.add_argument("--grid", help="grid JSON (default: packaged standard grid)")
    p.add_argument("--oracle", default="synthetic", choices=["synthetic"])
    p.add_argument("--kappa", type=float, default=2e-5)
    p.add_argument("--iota", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--progress", help="progress file for resumable builds")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--independent-frames", action="store_true",
                   help="independent frame draws per grid point instead of common random numbers")
    p.set_defaults(func=cmd_gen_table)

    p = sub.add_parser("analyze", help="analytic Doppler and resolution curves")
    asub = p.add_subparsers(dest="analysis", required=True)
    d = asub.add_parser("doppler")
    d.add_argument("--tau0-range", default="34e-9:150e-9")
    d.add_argument("--steps", type=int, default=25)
    d.add_argument("--taps", type=int, default=8)
    d.add_argument("--dt", type=float, default=100e-9)
    d.add_argument("--fdmax", type=float, default=500.0)
    d.add_argument("--flos", default="0,250")
    d.add_argument("--k-db", default="0,10,15,20")
    d.add_argument("--paths-per-tap", type=int, default=40)
    d.add_argument("--empirical-runs", type=int, default=0)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out")
    d.set_defaults(func=cmd_analyze_doppler)
    r = asub.add_parser("resolution")
    r.add_argument("--targets", default="20e-9:100e-9")
    r.add_argument("--steps", type=int, default=81)
    r.add_argument("--dynamic-range-db", type=float, default=40.0)
    r.add_argument("--taps", type=int, default=8)
    r.add_argument("--dt", type=float, default=100e-9)
    r.add_argument("--out")
    r.set_defaults(func=cmd_analyze_resolution)

    p = sub.add_parser("validate", help="self-checks")
    vsub = p.add_subparsers(dest="check", required=True)
    v = vsub.add_parser("pdp-fast")
    v.add_argument("--cases", type=int, default=100)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out")
    v.set_defaults(func=cmd_validate_pdp_fast)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (VehlinkError, ValueError, OSError) as exc:
        print(f"vehlink: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
