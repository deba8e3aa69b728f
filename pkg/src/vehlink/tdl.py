"""Stochastic tapped-delay-line model used to define lookup-table conditions.

Exponentially decaying PDP over ``n_taps`` taps spaced ``dt_s``; the first
tap is Rician (deterministic LOS component plus scattered sum) and the
remaining taps are Rayleigh sums of ``paths_per_tap`` sinusoids with
Clarke-distributed Doppler shifts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import PathKind, SampledCir, SamplingConfig, StationarityRegion, sample_cir
from .exceptions import ConfigError

_SPECTRUM_SIDES = {
    "double": (-np.pi, np.pi),
    "right": (-np.pi / 2, np.pi / 2),
    "left": (np.pi / 2, 3 * np.pi / 2),
}


def db_to_linear(k_db: float) -> float:
    """Power ratio from dB; ``-inf`` maps to exactly 0."""
    if k_db == -math.inf:
        return 0.0
    return 10.0 ** (k_db / 10.0)


def linear_to_db(k: float) -> float:
    if k <= 0:
        return -math.inf
    return 10.0 * math.log10(k)


@dataclass(frozen=True)
class ExpPdpConfig:
    tau0_s: float
    dt_s: float = 100e-9
    n_taps: int = 8

    def __post_init__(self):
        if not self.tau0_s > 0:
            raise ConfigError("tau0_s must be positive")
        if not self.dt_s > 0:
            raise ConfigError("dt_s must be positive")
        if self.n_taps < 1:
            raise ConfigError("n_taps must be >= 1")


@dataclass(frozen=True)
class TdlConfig:
    pdp: ExpPdpConfig
    k_linear: float = 0.0
    f_dmax_hz: float = 500.0
    f_los_hz: float = 0.0
    paths_per_tap: int = 40
    spectrum_side: str = "double"
    seed: int = 0

    def __post_init__(self):
        if not self.k_linear >= 0:
            raise ConfigError("k_linear must be >= 0")
        if self.f_dmax_hz < 0:
            raise ConfigError("f_dmax_hz must be >= 0")
        if abs(self.f_los_hz) > self.f_dmax_hz:
            raise ConfigError("|f_los_hz| must not exceed f_dmax_hz")
        if self.spectrum_side not in _SPECTRUM_SIDES:
            raise ConfigError(f"spectrum_side must be one of {sorted(_SPECTRUM_SIDES)}")
        if self.paths_per_tap < 1 or (self.k_linear > 0 and self.paths_per_tap < 2):
            raise ConfigError("paths_per_tap must be >= 2 when k_linear > 0 (>= 1 otherwise)")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    @classmethod
    def from_db(cls, pdp: ExpPdpConfig, k_db: float, **kwargs) -> "TdlConfig":
        return cls(pdp=pdp, k_linear=db_to_linear(k_db), **kwargs)


def exp_pdp(cfg: ExpPdpConfig) -> np.ndarray:
    """Normalized tap powers ``e^{-n dt/tau0} / sum``, ``n = 1..n_taps``."""
    n = np.arange(1, cfg.n_taps + 1)
    # shifting the exponent by one tap leaves the normalized profile unchanged
    p = np.exp(-(n - 1) * cfg.dt_s / cfg.tau0_s)
    return p / p.sum()


def _tap_rng(seed: int, region_index: int, tap: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, region_index, tap]))


def draw_tdl_paths(cfg: TdlConfig, region_index: int = 0) -> StationarityRegion:
    """Draw the propagation paths of one TDL realization.

    Every tap ``w`` draws its angles of arrival and phases from its own
    generator keyed by ``(seed, region_index, w)``; path ``i`` of a tap
    always takes element ``i`` of those draws, so the result does not
    depend on generation order.
    """
    powers = exp_pdp(cfg.pdp)
    lo, hi = _SPECTRUM_SIDES[cfg.spectrum_side]
    lp = cfg.paths_per_tap
    k = cfg.k_linear
    amp, phase, delay, doppler, kind = [], [], [], [], []
    for w in range(1, cfg.pdp.n_taps + 1):
        rng = _tap_rng(cfg.seed, region_index, w)
        beta = rng.uniform(lo, hi, lp)
        phi = rng.random(lp)
        f = cfg.f_dmax_hz * np.cos(beta)
        tau = w * cfg.pdp.dt_s
        p_w = powers[w - 1]
        if w == 1 and k > 0:
            # element 0 carries the LOS phase, 1..L'-1 the scattered paths
            amp.append(math.sqrt(k / (k + 1) * p_w))
            phase.append(phi[0])
            doppler.append(cfg.f_los_hz)
            kind.append(PathKind.LOS)
            delay.append(tau)
            a_s = math.sqrt(p_w / ((lp - 1) * (k + 1)))
            amp.extend([a_s] * (lp - 1))
            phase.extend(phi[1:])
            doppler.extend(f[1:])
            kind.extend([PathKind.DIFFUSE] * (lp - 1))
            delay.extend([tau] * (lp - 1))
        else:
            amp.extend([math.sqrt(p_w / lp)] * lp)
            phase.extend(phi)
            doppler.extend(f)
            kind.extend([PathKind.DIFFUSE] * lp)
            delay.extend([tau] * lp)
    return StationarityRegion.from_arrays(region_index, amp, phase, delay, doppler, kind)


def tdl_sampling(cfg: TdlConfig, t_s: float, m_samples: int, rolloff: float = 0.9,
                 carrier_hz: float = 5.9e9, guard_bins: int = 8) -> SamplingConfig:
    """Sampling grid with ``t_c = dt_s`` wide enough for every tap."""
    return SamplingConfig(t_s=t_s, t_c=cfg.pdp.dt_s,
                          n_delay_bins=cfg.pdp.n_taps + 1 + guard_bins,
                          m_samples=m_samples, rolloff=rolloff, carrier_hz=carrier_hz)


def generate_tdl_cir(cfg: TdlConfig, sampling: SamplingConfig,
                     region_index: int = 0) -> SampledCir:
    sampling.check_doppler(cfg.f_dmax_hz)
    return sample_cir(draw_tdl_paths(cfg, region_index), sampling)
