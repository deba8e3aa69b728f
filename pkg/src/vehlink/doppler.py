"""Closed-form Doppler and delay-spread analytics of the TDL model.

Covers the expected Doppler spectral density of a Rician/Rayleigh TDL
channel (bathtub density plus LOS point mass), its analytic RMS spread,
the closed-form RMS delay spread of an exponential PDP and the effect of
a finite emulator dynamic range on that spread.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .channel import SamplingConfig, StationarityRegion, sample_cir
from .exceptions import ConfigError, ConsistencyError, RangeError
from .tdl import ExpPdpConfig, TdlConfig, draw_tdl_paths, exp_pdp

# below this distance from q = 1 the closed form loses ~eps/(1-q)^2 relative
# accuracy, so the spread is summed directly instead
_CLOSED_FORM_MIN_GAP = 0.05


@dataclass(frozen=True)
class DopplerEnv:
    """Doppler environment of a TDL channel with a double-sided Clarke spectrum."""

    f_dmax_hz: float
    f_los_hz: float
    k_linear: float
    tap_powers: tuple

    def __post_init__(self):
        powers = np.asarray(self.tap_powers, dtype=float)
        if powers.ndim != 1 or powers.size < 1 or (powers < 0).any():
            raise ConfigError("tap_powers must be a non-empty list of non-negative powers")
        if abs(powers.sum() - 1.0) > 1e-12:
            raise ConfigError(f"tap_powers must sum to 1 (got {powers.sum()!r})")
        if self.f_dmax_hz < 0 or self.k_linear < 0:
            raise ConfigError("f_dmax_hz and k_linear must be >= 0")
        if abs(self.f_los_hz) > self.f_dmax_hz:
            raise ConfigError("|f_los_hz| must not exceed f_dmax_hz")
        object.__setattr__(self, "tap_powers", tuple(float(p) for p in powers))

    @classmethod
    def from_tdl(cls, cfg: TdlConfig) -> "DopplerEnv":
        return cls(cfg.f_dmax_hz, cfg.f_los_hz, cfg.k_linear, tuple(exp_pdp(cfg.pdp)))

    @property
    def los_mass(self) -> float:
        """Probability mass of the LOS spectral line at ``f_los_hz``."""
        k = self.k_linear
        return self.tap_powers[0] * k / (1 + k) if math.isfinite(k) else self.tap_powers[0]

    @property
    def diffuse_mass(self) -> float:
        return 1.0 - self.los_mass


@dataclass(frozen=True)
class ResolutionReport:
    target_sigma_tau_s: float
    n_taps_used: int
    surviving_tap_powers: tuple
    achieved_sigma_tau_s: float
    abs_error_s: float
    dynamic_range_db: float


def clarke_rms_doppler(f_dmax_hz: float) -> float:
    if f_dmax_hz < 0:
        raise ValueError("f_dmax_hz must be >= 0")
    return f_dmax_hz / math.sqrt(2.0)


def dsd_pdf(f, env: DopplerEnv):
    """Continuous part of the expected DSD at ``f`` (Hz).

    The LOS line is not part of the returned density; it carries mass
    ``env.los_mass`` at ``env.f_los_hz``.
    """
    f_arr = np.asarray(f, dtype=float)
    fd = env.f_dmax_hz
    if not (np.abs(f_arr) < fd).all():
        raise ValueError(f"continuous DSD is defined only for |f| < f_dmax ({fd} Hz)")
    out = env.diffuse_mass / (np.pi * np.sqrt(fd**2 - f_arr**2))
    return float(out) if np.ndim(f) == 0 else out


def dsd_quadrature_moments(env: DopplerEnv) -> tuple[float, float, float]:
    """Total mass, mean and variance of the DSD by numerical quadrature.

    The bathtub singularities are removed with ``f = f_dmax sin(theta)``,
    which turns the continuous part into a bounded integrand on
    ``(-pi/2, pi/2)``.
    """
    fd = env.f_dmax_hz
    m_los, f_los = env.los_mass, env.f_los_hz
    if fd == 0:
        return 1.0, 0.0, 0.0

    def weighted(power):
        # dsd_pdf(fd sin t) * fd cos t == diffuse_mass / pi, evaluated via the pdf
        def g(t):
            f = fd * math.sin(t)
            if abs(f) >= fd:
                return 0.0
            return f**power * dsd_pdf(f, env) * fd * math.cos(t)
        # odd moments integrate to ~0, so a pure relative tolerance is unreachable
        val, _ = integrate.quad(g, -math.pi / 2, math.pi / 2, epsabs=1e-14 * fd**power,
                                epsrel=1e-12, limit=200)
        return val

    mass = weighted(0) + m_los
    mean = (weighted(1) + m_los * f_los) / mass
    second = (weighted(2) + m_los * f_los**2) / mass
    return mass, mean, second - mean**2


def analytic_rms_doppler(env: DopplerEnv) -> float:
    """RMS Doppler spread of the expected DSD of a TDL channel (Hz)."""
    a1 = env.tap_powers[0]
    k = env.k_linear
    fd, fl = env.f_dmax_hz, env.f_los_hz
    rest = sum(env.tap_powers[1:])
    if math.isinf(k):
        first = a1 * (fl**2 - a1 * fl**2)
    else:
        first = a1 * ((2 * fl**2 * k + fd**2) / (2 * (1 + k))
                      - a1 * fl**2 * k**2 / (1 + k) ** 2)
    radicand = first + fd**2 / 2 * rest
    if radicand < 0:
        if radicand > -1e-9 * max(fd, abs(fl), 1.0) ** 2:
            return 0.0
        raise ConsistencyError(f"negative Doppler variance {radicand!r}")
    return math.sqrt(radicand)


def _direct_spread(q: float, n_taps: int) -> float:
    n = np.arange(n_taps, dtype=float)
    w = q**n
    w /= w.sum()
    mean = (n * w).sum()
    return math.sqrt(max(((n - mean) ** 2 * w).sum(), 0.0))


def closed_form_exp_delay_spread(cfg: ExpPdpConfig) -> float:
    """RMS delay spread (s) of the normalized exponential PDP in closed form."""
    n = cfg.n_taps
    dt = cfg.dt_s
    if n == 1:
        return 0.0
    q = math.exp(-dt / cfg.tau0_s)
    if q == 1.0:
        return dt * math.sqrt((n**2 - 1) / 12.0)
    if 1.0 - q < _CLOSED_FORM_MIN_GAP:
        return dt * _direct_spread(q, n)
    qn = q**n
    a = (q ** (2 * n + 1) - n**2 * q ** (n + 2) + 2 * (n**2 - 1) * q ** (n + 1)
         - n**2 * qn + q)
    return dt / ((1 - q) * (1 - qn)) * math.sqrt(max(a, 0.0))


def uniform_limit_spread(dt_s: float, n_taps: int) -> float:
    return dt_s * math.sqrt((n_taps**2 - 1) / 12.0)


def solve_tau0_for_target(target_sigma_tau_s: float, dt_s: float = 100e-9,
                          n_taps: int = 8) -> float:
    """Delay parameter whose exponential PDP has the requested RMS delay spread."""
    limit = uniform_limit_spread(dt_s, n_taps)
    if not 0 < target_sigma_tau_s < limit:
        raise RangeError(
            f"target {target_sigma_tau_s:.6g} s outside (0, {limit:.6g}) s for "
            f"{n_taps} taps of {dt_s:.6g} s")

    def err(log_tau0):
        cfg = ExpPdpConfig(math.exp(log_tau0), dt_s, n_taps)
        return closed_form_exp_delay_spread(cfg) - target_sigma_tau_s

    lo, hi = math.log(dt_s * 1e-3), math.log(dt_s)
    while err(lo) > 0:
        lo -= 2.0
    while err(hi) < 0:
        hi += 2.0
        if hi > math.log(dt_s * 1e12):
            raise RangeError("target too close to the uniform limit")
    log_tau0 = optimize.brentq(err, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    return math.exp(log_tau0)


def resolution_analysis(target_sigma_tau_s: float, dynamic_range_db: float = 40.0,
                        dt_s: float = 100e-9, n_taps: int = 8) -> ResolutionReport:
    """RMS delay spread error when taps below the emulator dynamic range are dropped."""
    if not dynamic_range_db > 0:
        raise ValueError("dynamic_range_db must be positive")
    tau0 = solve_tau0_for_target(target_sigma_tau_s, dt_s, n_taps)
    powers = exp_pdp(ExpPdpConfig(tau0, dt_s, n_taps))
    keep = powers >= powers.max() * 10 ** (-dynamic_range_db / 10)
    kept = powers[keep]
    delays = (np.arange(n_taps) * dt_s)[keep]
    mean = (delays * kept).sum() / kept.sum()
    achieved = math.sqrt(max(((delays - mean) ** 2 * kept).sum() / kept.sum(), 0.0))
    return ResolutionReport(target_sigma_tau_s, int(keep.sum()), tuple(kept.tolist()),
                            achieved, abs(achieved - target_sigma_tau_s), dynamic_range_db)


def empirical_rms_doppler(cfg: TdlConfig, t_s: float = 0.5e-3, m_samples: int = 2048,
                          n_runs: int = 20) -> float:
    """RMS Doppler spread of the DSD averaged over ``n_runs`` TDL realizations.

    Each run samples the band-limited CIR and takes the DSD from the DFT over
    time; the DSDs of all runs are averaged before taking moments.
    """
    from .condense import dsd_brute, rms_doppler_spread, Dsd

    sampling = SamplingConfig(t_s=t_s, t_c=cfg.pdp.dt_s, n_delay_bins=cfg.pdp.n_taps + 1,
                              m_samples=m_samples)
    sampling.check_doppler(cfg.f_dmax_hz)
    acc = None
    for run in range(n_runs):
        dsd = dsd_brute(sample_cir(draw_tdl_paths(cfg, region_index=run), sampling))
        acc = dsd.powers if acc is None else acc + dsd.powers
    return rms_doppler_spread(Dsd(acc / n_runs, dsd.bin_hz))[1]
