"""FER lookup table: grid definition, population through an oracle,
CSV persistence and nearest-entry lookup.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from itertools import product
from pathlib import Path
from typing import Callable, Protocol

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator, RegressorMixin

from ._validation import check_psi_array
from .condense import PSI_COLUMNS, CondensedParams, K_NO_SCATTER_DB
from .doppler import DopplerEnv, analytic_rms_doppler, solve_tau0_for_target, uniform_limit_spread
from .exceptions import ConfigError, OracleError
from .tdl import ExpPdpConfig, db_to_linear, exp_pdp

NOISE_FLOOR_DBM = -102.0
CSV_HEADER = ("sigma_tau_ns", "f_dmax_hz", "k_db", "f_los_frac", "rx_power_dbm", "fer", "frames")


def _fmt(x: float) -> str:
    if x == -math.inf:
        return "-inf"
    return format(x, ".9g")


def _to_ns(seconds: float) -> float:
    # 12 significant digits drop the representation error of the product
    return float(format(seconds * 1e9, ".12g"))


def _from_ns(ns) -> float:
    # division by the exact 1e9 rounds once, so 25 -> 25e-9 bit for bit
    return float(ns) / 1e9


@dataclass(frozen=True)
class FerGrid:
    sigma_tau_set: tuple
    f_dmax_set: tuple
    k_db_set: tuple
    f_los_frac_set: tuple
    rx_power_set: tuple

    def __post_init__(self):
        for name in ("sigma_tau_set", "f_dmax_set", "k_db_set", "f_los_frac_set", "rx_power_set"):
            values = tuple(float(v) for v in getattr(self, name))
            if not values:
                raise ConfigError(f"{name} must be non-empty")
            if any(math.isnan(v) for v in values):
                raise ConfigError(f"{name} contains NaN")
            if any(b <= a for a, b in zip(values, values[1:])):
                raise ConfigError(f"{name} must be strictly increasing")
            finite = values[1:] if name == "k_db_set" and values[0] == -math.inf else values
            if not all(math.isfinite(v) for v in finite):
                raise ConfigError(f"{name} must be finite (only k_db_set may start with -inf)")
            object.__setattr__(self, name, values)
        if self.sigma_tau_set[0] < 0 or self.f_dmax_set[0] < 0 or self.f_los_frac_set[0] < 0:
            raise ConfigError("delay spreads, Doppler bandwidths and fractions must be >= 0")

    @property
    def axes(self) -> tuple:
        return (self.sigma_tau_set, self.f_dmax_set, self.k_db_set, self.f_los_frac_set,
                self.rx_power_set)

    @property
    def shape(self) -> tuple:
        return tuple(len(a) for a in self.axes)

    @property
    def has_nlos(self) -> bool:
        return self.k_db_set[0] == -math.inf

    def to_dict(self) -> dict:
        return {
            "sigma_tau_ns": [_to_ns(s) for s in self.sigma_tau_set],
            "f_dmax_hz": list(self.f_dmax_set),
            "k_db": ["-inf" if k == -math.inf else k for k in self.k_db_set],
            "f_los_frac": list(self.f_los_frac_set),
            "rx_power_dbm": list(self.rx_power_set),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FerGrid":
        try:
            return cls(
                tuple(_from_ns(s) for s in doc["sigma_tau_ns"]),
                tuple(doc["f_dmax_hz"]),
                tuple(float(k) for k in doc["k_db"]),
                tuple(doc["f_los_frac"]),
                tuple(doc["rx_power_dbm"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid grid document: {exc!r}") from None

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def table2_grid() -> FerGrid:
    """The default grid shipped with the package."""
    text = resources.files("vehlink").joinpath("data/table2_grid.json").read_text()
    return FerGrid.from_dict(json.loads(text))


def load_grid(path) -> FerGrid:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"grid {path}: invalid JSON ({exc})") from None
    return FerGrid.from_dict(doc)


@dataclass(frozen=True)
class FrameBudget:
    kappa: float
    iota: float

    def __post_init__(self):
        if not (self.kappa > 0 and self.iota > 0):
            raise ConfigError("kappa and iota must be positive")

    @property
    def frames(self) -> int:
        return required_frames(self.kappa, self.iota)


def required_frames(kappa: float, iota: float) -> int:
    """Frames per grid point to resolve FER ``kappa`` with variance factor ``iota``."""
    if not (kappa > 0 and iota > 0):
        raise ValueError("kappa and iota must be positive")
    return int(round(1.0 / (kappa * iota)))


@dataclass(frozen=True)
class GridPoint:
    index: tuple
    psi: CondensedParams


def enumerate_grid(grid: FerGrid) -> list[GridPoint]:
    """Grid points in lexicographic order; NLOS keeps only the zero LOS fraction."""
    points = []
    for idx in product(*(range(n) for n in grid.shape)):
        s, f, k, fr, p = (axis[i] for axis, i in zip(grid.axes, idx))
        if k == -math.inf and idx[3] != 0:
            continue
        f_los = 0.0 if k == -math.inf else fr * f
        points.append(GridPoint(idx, CondensedParams(p, s, f, k, f_los)))
    return points


class FerOracle(Protocol):
    def __call__(self, psi: CondensedParams, frames: int, seed: int) -> float: ...


@dataclass(frozen=True)
class SyntheticSurface:
    """Coefficients of the synthetic error-probability surface (not measured data).

    Link errors follow a logistic curve in SNR centred at
    ``snr50_db + fading_db * (1 - diversity * min(sigma_tau / 100 ns, 1)) / (1 + K)``;
    a Doppler floor ``floor_gain * (sigma_nu / sigma_nu_ref)^2 / (1 + K)``
    models channel-estimation errors on fast-fading channels.
    """

    noise_dbm: float = NOISE_FLOOR_DBM
    snr50_db: float = 3.0
    fading_db: float = 12.0
    diversity: float = 0.4
    slope_db: float = 1.0
    floor_gain: float = 0.5
    sigma_nu_ref_hz: float = 1000.0
    dt_s: float = 100e-9
    n_taps: int = 8


def _tap_powers(sigma_tau_s: float, dt_s: float, n_taps: int) -> np.ndarray:
    limit = uniform_limit_spread(dt_s, n_taps)
    if sigma_tau_s <= limit * 1e-6:
        out = np.zeros(n_taps)
        out[0] = 1.0
        return out
    if sigma_tau_s >= limit * (1 - 1e-9):
        return np.full(n_taps, 1.0 / n_taps)
    return exp_pdp(ExpPdpConfig(solve_tau0_for_target(sigma_tau_s, dt_s, n_taps), dt_s, n_taps))


def synthetic_error_probability(psi: CondensedParams, surface: SyntheticSurface) -> float:
    """Per-frame error probability of the synthetic oracle."""
    if psi.rx_power_dbm == -math.inf:
        return 1.0
    k = db_to_linear(min(psi.k_db, K_NO_SCATTER_DB))
    if not math.isfinite(k):
        k = 1e50
    snr = psi.rx_power_dbm - surface.noise_dbm
    spread_gain = 1.0 - surface.diversity * min(psi.sigma_tau_s / 100e-9, 1.0)
    snr50 = surface.snr50_db + surface.fading_db * spread_gain / (1.0 + k)
    p_link = 1.0 / (1.0 + math.exp(min((snr - snr50) / surface.slope_db, 700.0)))

    f_dmax = psi.f_dmax_hz
    f_los = min(abs(psi.f_los_hz), f_dmax)
    powers = _tap_powers(psi.sigma_tau_s, surface.dt_s, surface.n_taps)
    powers = powers / powers.sum()
    sigma_nu = analytic_rms_doppler(DopplerEnv(f_dmax, f_los, min(k, 1e15), tuple(powers)))
    p_floor = min(1.0, surface.floor_gain * (sigma_nu / surface.sigma_nu_ref_hz) ** 2 / (1.0 + k))
    p = 1.0 - (1.0 - p_link) * (1.0 - p_floor)
    return 0.0 if p < 1e-15 else min(p, 1.0)


def _binomial_quantile(u: float, frames: int, p: float) -> int:
    if p <= 0.0:
        return 0
    if p >= 1.0:
        return frames
    return int(stats.binom.ppf(u, frames, p))


def synthetic_fer(psi: CondensedParams, frames: int, seed: int,
                  surface: SyntheticSurface | None = None) -> float:
    """FER over ``frames`` Bernoulli frames of the synthetic surface.

    The error count is drawn by inverting the binomial CDF at one uniform
    variate derived from ``seed``.
    """
    if frames < 1:
        raise ValueError("frames must be >= 1")
    p = synthetic_error_probability(psi, surface or SyntheticSurface())
    u = np.random.default_rng(np.random.SeedSequence(seed)).random()
    return _binomial_quantile(u, frames, p) / frames


@dataclass(frozen=True)
class SyntheticOracle:
    """Callable :class:`FerOracle` around :func:`synthetic_fer`.

    With ``common_seed`` set, every grid point uses the same uniform variate
    (common random numbers), so FER estimates follow the ordering of the
    underlying error probabilities exactly; the per-point seed is ignored.
    """

    surface: SyntheticSurface = field(default_factory=SyntheticSurface)
    common_seed: int | None = None
    oracle_id: str = "synthetic"

    def __call__(self, psi: CondensedParams, frames: int, seed: int) -> float:
        use = seed if self.common_seed is None else self.common_seed
        return synthetic_fer(psi, frames, use, self.surface)


def point_seed(master_seed: int, flat_index: int) -> int:
    """Independent 64-bit seed of one grid point."""
    state = np.random.SeedSequence([master_seed, flat_index]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


class FerTable:
    """Dense FER values over a :class:`FerGrid`."""

    def __init__(self, grid: FerGrid, values, frames: int, meta: dict | None = None):
        values = np.array(values, dtype=float)
        if values.shape != grid.shape:
            raise ConfigError(f"value array shape {values.shape} does not match grid {grid.shape}")
        if not ((values >= 0) & (values <= 1)).all():
            raise ConfigError("FER values must lie in [0, 1]")
        values.flags.writeable = False
        self.grid = grid
        self.values = values
        self.frames = int(frames)
        self.meta = dict(meta or {})
        self._axes = [np.array(a) for a in grid.axes]

    def __eq__(self, other):
        return (isinstance(other, FerTable) and self.grid == other.grid
                and self.frames == other.frames and np.array_equal(self.values, other.values))

    def snap_indices(self, X) -> np.ndarray:
        """Per-axis nearest grid indices for rows in ``PSI_COLUMNS`` order."""
        X = check_psi_array(X)
        p, s, f, k, flos = (X[:, i] for i in range(5))
        g = self.grid
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            frac = np.where(f > 0, np.minimum(np.abs(flos) / f, np.inf), 0.0)
        frac = np.nan_to_num(frac, nan=0.0)
        idx_s = _nearest(self._axes[0], s)
        idx_f = _nearest(self._axes[1], f)
        idx_k = self._snap_k(k)
        idx_fr = _nearest(self._axes[3], frac)
        if g.has_nlos:
            idx_fr = np.where(idx_k == 0, 0, idx_fr)
        idx_p = _nearest(self._axes[4], p)
        return np.stack([idx_s, idx_f, idx_k, idx_fr, idx_p], axis=1)

    def _snap_k(self, k_db: np.ndarray) -> np.ndarray:
        axis = self._axes[2]
        finite = axis[np.isfinite(axis)]
        offset = int(self.grid.has_nlos)
        if finite.size == 0:
            return np.zeros(k_db.shape, dtype=int)
        k_clip = np.where(np.isfinite(k_db), k_db, np.where(k_db > 0, finite[-1], finite[0]))
        idx = _nearest(finite, np.minimum(k_clip, finite[-1])) + offset
        if self.grid.has_nlos:
            # below half the smallest finite K (linear) the LOS is treated as absent
            with np.errstate(over="ignore"):
                k_lin = np.where(k_db == -math.inf, 0.0, 10.0 ** (np.minimum(k_db, 300) / 10))
            nlos = k_lin < 10.0 ** (finite[0] / 10) / 2
            idx = np.where(nlos, 0, idx)
        return idx

    def query_many(self, X) -> np.ndarray:
        idx = self.snap_indices(X)
        return self.values[tuple(idx.T)]

    def query(self, psi: CondensedParams) -> float:
        return float(self.query_many(psi.as_array()[None, :])[0])

    def snap(self, psi: CondensedParams) -> CondensedParams:
        idx = tuple(self.snap_indices(psi.as_array()[None, :])[0])
        s, f, k, fr, p = (axis[i] for axis, i in zip(self.grid.axes, idx))
        return CondensedParams(p, s, f, k, 0.0 if k == -math.inf else fr * f)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for pt in enumerate_grid(self.grid):
            s, f, k, fr, p = (axis[i] for axis, i in zip(self.grid.axes, pt.index))
            writer.writerow([_fmt(_to_ns(s)), _fmt(f), _fmt(k), _fmt(fr), _fmt(p),
                             _fmt(self.values[pt.index]), str(self.frames)])
        return buf.getvalue()

    def save(self, path) -> None:
        path = Path(path)
        path.write_text(self.to_csv_text())
        meta = dict(self.meta, frames=self.frames, grid=self.grid.to_dict())
        Path(f"{path}.meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "FerTable":
        path = Path(path)
        try:
            rows = list(csv.reader(path.read_text().splitlines()))
        except OSError as exc:
            raise ConfigError(f"cannot read table {path}: {exc}") from None
        if not rows or tuple(rows[0]) != CSV_HEADER:
            raise ConfigError(f"table {path}: header must be {','.join(CSV_HEADER)}")
        try:
            data = [[float(v) for v in r] for r in rows[1:] if r]
        except ValueError as exc:
            raise ConfigError(f"table {path}: {exc}") from None
        if not data:
            raise ConfigError(f"table {path} has no rows")
        arr = np.array(data)
        frames = {int(r[6]) for r in data}
        if len(frames) != 1:
            raise ConfigError(f"table {path}: inconsistent frame counts")
        grid = FerGrid(*(tuple(np.unique(arr[:, c])) for c in range(5)))
        grid = FerGrid(tuple(_from_ns(s) for s in grid.sigma_tau_set), grid.f_dmax_set,
                       grid.k_db_set, grid.f_los_frac_set, grid.rx_power_set)
        lookup = [{v: i for i, v in enumerate(np.unique(arr[:, c]))} for c in range(5)]
        values = np.full(grid.shape, np.nan)
        for row in data:
            idx = tuple(lookup[c][row[c]] for c in range(5))
            if grid.k_db_set[idx[2]] == -math.inf:
                values[idx[0], idx[1], idx[2], :, idx[4]] = row[5]
            else:
                values[idx] = row[5]
        if np.isnan(values).any():
            raise ConfigError(f"table {path} does not cover its grid")
        meta_path = Path(f"{path}.meta.json")
        meta = {}
        if meta_path.exists():
            meta = json.loads(meta_path.read_text())
            meta.pop("grid", None)
            meta.pop("frames", None)
        return cls(grid, values, frames.pop(), meta)


def _nearest(axis: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Nearest index on a sorted axis; ties go to the lower value; clamps at the ends."""
    x = np.asarray(x, dtype=float)
    hi = np.clip(np.searchsorted(axis, x, side="left"), 0, axis.size - 1)
    lo = np.clip(hi - 1, 0, axis.size - 1)
    with np.errstate(invalid="ignore"):
        pick_lo = np.abs(x - axis[lo]) <= np.abs(axis[hi] - x)
    return np.where(pick_lo, lo, hi)


def _read_progress(path: Path, header: dict) -> dict[int, float]:
    done = {}
    if not path.exists():
        return done
    lines = path.read_text().splitlines()
    if not lines:
        return done
    if json.loads(lines[0]) != header:
        raise ConfigError(f"progress file {path} belongs to a different build")
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) == 2:
            done[int(parts[0])] = float(parts[1])
    return done


def build_table(grid: FerGrid, oracle: Callable, budget: FrameBudget, seed: int,
                progress_path=None, n_jobs: int = 1, oracle_id: str | None = None) -> FerTable:
    """Evaluate ``oracle`` at every grid point with ``budget.frames`` frames.

    Each point gets a seed derived from ``(seed, point index)``. With
    ``progress_path`` set, finished points are appended to that file and
    skipped when the build is restarted with the same inputs.
    """
    frames = budget.frames
    oracle_id = oracle_id or getattr(oracle, "oracle_id", getattr(oracle, "__name__", "custom"))
    points = enumerate_grid(grid)
    header = {"grid": grid.digest(), "frames": frames, "seed": seed, "oracle": oracle_id}
    done: dict[int, float] = {}
    progress = None
    if progress_path is not None:
        progress_path = Path(progress_path)
        done = _read_progress(progress_path, header)
        if not progress_path.exists() or not progress_path.read_text():
            progress_path.write_text(json.dumps(header, sort_keys=True) + "\n")
        progress = progress_path.open("a")

    def evaluate(n: int) -> float:
        pt = points[n]
        try:
            fer = float(oracle(pt.psi, frames, point_seed(seed, n)))
        except Exception as exc:
            raise OracleError(f"oracle failed at grid point {pt.psi}: {exc}", pt.psi) from exc
        if not 0.0 <= fer <= 1.0:
            raise OracleError(f"oracle returned FER {fer!r} outside [0, 1] at {pt.psi}", pt.psi)
        return fer

    todo = [n for n in range(len(points)) if n not in done]
    try:
        if n_jobs > 1:
            with ThreadPoolExecutor(n_jobs) as pool:
                results = pool.map(evaluate, todo)
                for n, fer in zip(todo, results):
                    done[n] = fer
                    if progress:
                        progress.write(f"{n},{fer!r}\n")
        else:
            for n in todo:
                done[n] = evaluate(n)
                if progress:
                    progress.write(f"{n},{done[n]!r}\n")
                    progress.flush()
    finally:
        if progress:
            progress.close()

    values = np.empty(grid.shape)
    for n, pt in enumerate(points):
        if grid.k_db_set[pt.index[2]] == -math.inf:
            values[pt.index[0], pt.index[1], pt.index[2], :, pt.index[4]] = done[n]
        else:
            values[pt.index] = done[n]
    meta = {"oracle": oracle_id, "seed": seed, "kappa": budget.kappa, "iota": budget.iota}
    return FerTable(grid, values, frames, meta)


class FerLookupTable(RegressorMixin, BaseEstimator):
    """Nearest-entry FER regressor over condensed parameter rows.

    ``X`` rows follow ``PSI_COLUMNS`` (received power, RMS delay spread,
    Doppler bandwidth, K in dB, LOS Doppler, optional RMS Doppler spread).
    ``fit`` stores the unique values of each of the first five columns as
    grid axes and requires ``y`` to cover every grid point, NLOS rows once.
    """

    def __init__(self, frames: int = 1):
        self.frames = frames

    def fit(self, X, y):
        X = check_psi_array(X)
        y = np.asarray(y, dtype=float)
        if y.shape != (X.shape[0],):
            raise ValueError("y must have one FER per row of X")
        p, s, f, k, flos = (X[:, i] for i in range(5))
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(f > 0, np.abs(flos) / f, 0.0)
        cols = [s, f, k, frac, p]
        grid = FerGrid(*(tuple(np.unique(c)) for c in cols))
        values = np.full(grid.shape, np.nan)
        lookup = [{v: i for i, v in enumerate(np.unique(c))} for c in cols]
        for row, fer in zip(zip(*cols), y):
            idx = tuple(lookup[c][row[c]] for c in range(5))
            if grid.k_db_set[idx[2]] == -math.inf:
                values[idx[0], idx[1], idx[2], :, idx[4]] = fer
            else:
                values[idx] = fer
        if np.isnan(values).any():
            raise ValueError("training rows do not cover the grid spanned by their values")
        self.table_ = FerTable(grid, values, self.frames)
        self.n_features_in_ = X.shape[1]
        return self

    @classmethod
    def from_table(cls, table: FerTable) -> "FerLookupTable":
        est = cls(frames=table.frames)
        est.table_ = table
        est.n_features_in_ = len(PSI_COLUMNS)
        return est

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "table_"):
            from sklearn.exceptions import NotFittedError
            raise NotFittedError("FerLookupTable is not fitted")
        return self.table_.query_many(X)
