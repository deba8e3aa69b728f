"""Band-limited, sampled channel impulse response of a stationarity region.

A region is a set of propagation paths with constant amplitude, phase,
delay and Doppler shift. Sampling the raised-cosine filtered response
gives the ``M x N`` matrix ``h[m, n]`` (time sample x delay bin).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .exceptions import ConfigError, DelayWindowError, NyquistError

C0 = 299_792_458.0

# |1 - (2 beta tau / Tc)^2| below this uses the analytic limit
_RC_NULL_TOL = 1e-12
_RC_SINGULAR_TOL = 1e-8


class PathKind(enum.IntEnum):
    LOS = 0
    STATIC_DISCRETE = 1
    MOBILE_DISCRETE = 2
    DIFFUSE = 3


@dataclass(frozen=True)
class PropagationPath:
    """One multipath component, frozen over a stationarity region.

    ``phase_cycles`` is in cycles, i.e. the path weight is
    ``amplitude * exp(2j*pi*phase_cycles)``.
    """

    amplitude: float
    phase_cycles: float
    delay_s: float
    doppler_hz: float
    kind: PathKind = PathKind.DIFFUSE

    def __post_init__(self):
        for name in ("amplitude", "phase_cycles", "delay_s", "doppler_hz"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if self.amplitude < 0:
            raise ConfigError("amplitude must be >= 0")
        if self.delay_s < 0:
            raise ConfigError("delay_s must be >= 0")
        if not 0.0 <= self.phase_cycles < 1.0:
            raise ConfigError("phase_cycles must lie in [0, 1)")
        object.__setattr__(self, "kind", PathKind(self.kind))


@dataclass(frozen=True)
class SamplingConfig:
    """Time/delay sampling grid of a stationarity region.

    Parameters
    ----------
    t_s : float
        Time sample spacing in seconds.
    t_c : float
        Delay bin spacing in seconds (``1 / bandwidth``).
    n_delay_bins : int
        Number of delay bins ``N``.
    m_samples : int
        Number of time samples ``M`` per region.
    t_stat : float, optional
        Region duration; defaults to ``m_samples * t_s``.
    rolloff : float
        Raised-cosine roll-off in ``[0, 1]``.
    carrier_hz : float
        Carrier frequency.
    rc_support_bins : int or None
        Half-width (in delay bins) of the raised-cosine support evaluated
        around each path delay. ``None`` evaluates the full filter.
    """

    t_s: float
    t_c: float
    n_delay_bins: int
    m_samples: int
    t_stat: float | None = None
    rolloff: float = 0.9
    carrier_hz: float = 5.9e9
    c0: float = C0
    rc_support_bins: int | None = 8

    def __post_init__(self):
        if self.t_stat is None:
            object.__setattr__(self, "t_stat", self.m_samples * self.t_s)
        if not (self.t_s > 0 and self.t_c > 0 and self.t_stat > 0):
            raise ConfigError("t_s, t_c and t_stat must be positive")
        if self.n_delay_bins < 1 or self.m_samples < 1:
            raise ConfigError("n_delay_bins and m_samples must be >= 1")
        if not 0.0 <= self.rolloff <= 1.0:
            raise ConfigError("rolloff must lie in [0, 1]")
        if abs(self.m_samples * self.t_s - self.t_stat) > self.t_s * (1 + 1e-9):
            raise ConfigError("m_samples * t_s must equal t_stat within one sample")
        if self.rc_support_bins is not None and self.rc_support_bins < 1:
            raise ConfigError("rc_support_bins must be >= 1 or None")

    @classmethod
    def from_bandwidth(cls, bandwidth_hz, t_s, t_stat, n_delay_bins, **kwargs):
        m = int(round(t_stat / t_s))
        return cls(t_s=t_s, t_c=1.0 / bandwidth_hz, n_delay_bins=n_delay_bins,
                   m_samples=m, t_stat=t_stat, **kwargs)

    @property
    def bandwidth_hz(self) -> float:
        return 1.0 / self.t_c

    @property
    def max_delay_s(self) -> float:
        return (self.n_delay_bins - 1) * self.t_c

    @property
    def doppler_limit_hz(self) -> float:
        """Largest admissible |Doppler| for this time sampling."""
        return 1.0 / (2.0 * self.t_s)

    def check_doppler(self, f_max_hz: float) -> None:
        if abs(f_max_hz) >= self.doppler_limit_hz:
            raise NyquistError(
                f"|Doppler| {abs(f_max_hz):.6g} Hz violates t_s < 1/(2 B_D) "
                f"(limit {self.doppler_limit_hz:.6g} Hz)")


class StationarityRegion:
    """Propagation paths valid over one stationarity region.

    Paths are stored column-wise as numpy arrays; ``paths`` materializes
    them as :class:`PropagationPath` objects on demand.
    """

    __slots__ = ("index", "duration_s", "amplitude", "phase_cycles", "delay_s",
                 "doppler_hz", "kind")

    def __init__(self, index: int, paths: Iterable[PropagationPath] = (),
                 duration_s: float | None = None):
        paths = list(paths)
        self.index = int(index)
        self.duration_s = duration_s
        self.amplitude = np.array([p.amplitude for p in paths], dtype=float)
        self.phase_cycles = np.array([p.phase_cycles for p in paths], dtype=float)
        self.delay_s = np.array([p.delay_s for p in paths], dtype=float)
        self.doppler_hz = np.array([p.doppler_hz for p in paths], dtype=float)
        self.kind = np.array([int(p.kind) for p in paths], dtype=np.int8)
        self._freeze()

    @classmethod
    def from_arrays(cls, index, amplitude, phase_cycles, delay_s, doppler_hz,
                    kind, duration_s=None) -> "StationarityRegion":
        obj = cls.__new__(cls)
        obj.index = int(index)
        obj.duration_s = duration_s
        obj.amplitude = np.array(amplitude, dtype=float)
        obj.phase_cycles = np.array(phase_cycles, dtype=float)
        obj.delay_s = np.array(delay_s, dtype=float)
        obj.doppler_hz = np.array(doppler_hz, dtype=float)
        obj.kind = np.array(kind, dtype=np.int8)
        n = obj.amplitude.shape
        if any(a.shape != n or a.ndim != 1 for a in
               (obj.phase_cycles, obj.delay_s, obj.doppler_hz, obj.kind)):
            raise ConfigError("path arrays must be 1-D and of equal length")
        arrays = (obj.amplitude, obj.phase_cycles, obj.delay_s, obj.doppler_hz)
        if not all(np.isfinite(a).all() for a in arrays):
            raise ConfigError("path parameters must be finite")
        if (obj.amplitude < 0).any() or (obj.delay_s < 0).any():
            raise ConfigError("amplitudes and delays must be >= 0")
        if ((obj.phase_cycles < 0) | (obj.phase_cycles >= 1)).any():
            raise ConfigError("phase_cycles must lie in [0, 1)")
        obj._freeze()
        return obj

    def _freeze(self):
        for a in (self.amplitude, self.phase_cycles, self.delay_s,
                  self.doppler_hz, self.kind):
            a.flags.writeable = False

    def __len__(self) -> int:
        return self.amplitude.size

    def __repr__(self) -> str:
        return f"StationarityRegion(index={self.index}, n_paths={len(self)})"

    @property
    def paths(self) -> tuple[PropagationPath, ...]:
        return tuple(
            PropagationPath(float(a), float(p), float(d), float(f), PathKind(int(k)))
            for a, p, d, f, k in zip(self.amplitude, self.phase_cycles,
                                     self.delay_s, self.doppler_hz, self.kind))

    @property
    def los_index(self) -> int | None:
        idx = np.flatnonzero(self.kind == PathKind.LOS)
        return int(idx[0]) if idx.size else None

    def subset(self, mask) -> "StationarityRegion":
        mask = np.asarray(mask)
        return StationarityRegion.from_arrays(
            self.index, self.amplitude[mask], self.phase_cycles[mask],
            self.delay_s[mask], self.doppler_hz[mask], self.kind[mask],
            self.duration_s)

    def scaled(self, factor: float) -> "StationarityRegion":
        return StationarityRegion.from_arrays(
            self.index, self.amplitude * factor, self.phase_cycles, self.delay_s,
            self.doppler_hz, self.kind, self.duration_s)

    @staticmethod
    def concat(regions: Sequence["StationarityRegion"], index=None):
        regions = list(regions)
        return StationarityRegion.from_arrays(
            regions[0].index if index is None else index,
            np.concatenate([r.amplitude for r in regions]),
            np.concatenate([r.phase_cycles for r in regions]),
            np.concatenate([r.delay_s for r in regions]),
            np.concatenate([r.doppler_hz for r in regions]),
            np.concatenate([r.kind for r in regions]),
            regions[0].duration_s)


@dataclass(frozen=True)
class SampledCir:
    data: np.ndarray
    config: SamplingConfig
    region_index: int = 0

    def __post_init__(self):
        shape = (self.config.m_samples, self.config.n_delay_bins)
        if self.data.shape != shape:
            raise ConfigError(f"CIR shape {self.data.shape} does not match {shape}")
        if not np.isfinite(self.data).all():
            raise ConfigError("CIR entries must be finite")


def raised_cosine(tau, t_c, rolloff):
    """Raised-cosine impulse response ``h_RC(tau)``, unit peak at ``tau = 0``.

    The removable singularity at ``|2 rolloff tau / t_c| = 1`` is replaced by
    its limit ``pi/4 * sinc(1 / (2 rolloff))``.
    """
    tau_arr = np.asarray(tau, dtype=float)
    if not (np.isfinite(tau_arr).all() and math.isfinite(t_c) and math.isfinite(rolloff)):
        raise ValueError("raised_cosine inputs must be finite")
    if t_c <= 0:
        raise ValueError("t_c must be positive")
    if not 0.0 <= rolloff <= 1.0:
        raise ValueError("rolloff must lie in [0, 1]")
    x = tau_arr / t_c
    denom = 1.0 - (2.0 * rolloff * x) ** 2
    singular = np.abs(denom) < _RC_SINGULAR_TOL
    safe = np.where(singular, 1.0, denom)
    out = np.sinc(x) * np.cos(np.pi * rolloff * x) / safe
    if singular.any():
        out = np.where(singular, np.pi / 4.0 * np.sinc(1.0 / (2.0 * rolloff)), out)
    # exact nulls at nonzero chip multiples; sin(pi k) leaves ~1e-17 otherwise
    k = np.round(x)
    out = np.where((k != 0) & (np.abs(x - k) < _RC_NULL_TOL), 0.0, out)
    if np.ndim(tau) == 0:
        return float(out)
    return out


def rc_matrix(delay_s, cfg: SamplingConfig) -> np.ndarray:
    """``L x N`` matrix of ``h_RC(n t_c - tau_l)`` with support truncation."""
    delay_s = np.asarray(delay_s, dtype=float)
    if delay_s.size and delay_s.max() > cfg.max_delay_s * (1 + 1e-12):
        raise DelayWindowError(
            f"path delay {delay_s.max():.6g} s exceeds delay window "
            f"{cfg.max_delay_s:.6g} s ({cfg.n_delay_bins} bins)")
    offsets = np.arange(cfg.n_delay_bins) * cfg.t_c - delay_s[:, None]
    h = raised_cosine(offsets, cfg.t_c, cfg.rolloff)
    if cfg.rc_support_bins is not None:
        h = np.where(np.abs(offsets) <= cfg.rc_support_bins * cfg.t_c, h, 0.0)
    return h


def path_delay_at(path: PropagationPath, m: int, cfg: SamplingConfig) -> float:
    """Delay of ``path`` at time sample ``m`` under constant relative velocity."""
    if not 0 <= m < cfg.m_samples:
        raise ValueError(f"sample index {m} outside [0, {cfg.m_samples})")
    return path.delay_s - (path.doppler_hz / cfg.carrier_hz) * m * cfg.t_s


def sample_cir(region: StationarityRegion, cfg: SamplingConfig) -> SampledCir:
    """Sample ``h[m, n] = sum_l |eta_l| e^{j2pi(phi_l - nu_l m)} h_RC(n t_c - tau_l)``."""
    if len(region):
        cfg.check_doppler(np.abs(region.doppler_hz).max())
    h_rc = rc_matrix(region.delay_s, cfg)
    nu = region.doppler_hz * cfg.t_s
    m = np.arange(cfg.m_samples)
    rot = np.exp(2j * np.pi * (region.phase_cycles[None, :] - nu[None, :] * m[:, None]))
    data = rot @ (region.amplitude[:, None] * h_rc)
    return SampledCir(np.ascontiguousarray(data, dtype=complex), cfg, region.index)
