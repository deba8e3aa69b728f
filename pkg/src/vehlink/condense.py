"""Low-complexity estimation of condensed channel parameters from paths.

The estimators work on the propagation paths of a stationarity region and
never materialize the ``M x N`` impulse response: the PDP uses closed-form
cross terms whose cost does not depend on ``M``, the DSD is evaluated from
the Doppler-variant impulse response.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .channel import PathKind, SampledCir, SamplingConfig, StationarityRegion, rc_matrix
from .exceptions import ConsistencyError, UndefinedSpreadError
from .tdl import linear_to_db

K_NO_SCATTER_DB = 500.0
THETA_ZERO_TOL = 1e-9
NEGATIVE_RESIDUE_TOL = 1e-12

PSI_COLUMNS = ("rx_power_dbm", "sigma_tau_s", "f_dmax_hz", "k_db", "f_los_hz", "sigma_nu_hz")


@dataclass(frozen=True)
class Pdp:
    powers: np.ndarray
    t_c: float

    @property
    def delays_s(self) -> np.ndarray:
        return np.arange(self.powers.size) * self.t_c


@dataclass(frozen=True)
class Dsd:
    """Doppler spectral density on bins ``p = -M/2 .. M/2 - 1``."""

    powers: np.ndarray
    bin_hz: float

    @property
    def frequencies_hz(self) -> np.ndarray:
        m = self.powers.size
        return (np.arange(m) - m // 2) * self.bin_hz


@dataclass(frozen=True)
class CondensedParams:
    rx_power_dbm: float
    sigma_tau_s: float
    f_dmax_hz: float
    k_db: float
    f_los_hz: float
    sigma_nu_hz: float = math.nan

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, c) for c in PSI_COLUMNS], dtype=float)

    @classmethod
    def from_array(cls, row) -> "CondensedParams":
        row = [float(v) for v in row]
        if len(row) == 5:
            row.append(math.nan)
        return cls(*row)

    @property
    def no_coverage(self) -> bool:
        return self.rx_power_dbm == -math.inf


@dataclass(frozen=True)
class EstimatorConfig:
    epsilon_db: float = 40.0
    power_threshold_db: float = 40.0
    p_tx_dbm: float = -5.0

    def __post_init__(self):
        if not (self.epsilon_db > 0 and self.power_threshold_db > 0):
            raise ValueError("thresholds must be positive")


def pdp_brute(cir: SampledCir) -> Pdp:
    """Short-term PDP by time-averaging ``|h[m, n]|^2``."""
    powers = np.mean(np.abs(cir.data) ** 2, axis=0)
    return Pdp(powers, cir.config.t_c)


def _cross_coefficients(region: StationarityRegion, cfg: SamplingConfig) -> np.ndarray:
    """Symmetric ``L x L`` matrix of time-averaged pair coherences.

    Entry ``(l, k)`` equals ``(1/M) sum_m cos(theta_lk m + 2pi(phi_l - phi_k))``
    in closed form; the diagonal is 1.
    """
    m = cfg.m_samples
    nu = region.doppler_hz * cfg.t_s
    phi = region.phase_cycles
    theta = 2 * np.pi * (nu[None, :] - nu[:, None])
    dphi = 2 * np.pi * (phi[:, None] - phi[None, :])
    coherent = np.abs(theta) < THETA_ZERO_TOL
    half = np.where(coherent, 1.0, theta / 2)
    dirichlet = np.sin(half * m) / np.sin(half)
    psi = half * (1 - m) - dphi
    coef = np.where(coherent, m * np.cos(dphi), dirichlet * np.cos(psi))
    return coef / m


def pdp_fast(region: StationarityRegion, cfg: SamplingConfig) -> Pdp:
    """Short-term PDP from path parameters with cost independent of ``M``."""
    if len(region) == 0:
        return Pdp(np.zeros(cfg.n_delay_bins), cfg.t_c)
    cfg.check_doppler(np.abs(region.doppler_hz).max())
    b = region.amplitude[:, None] * rc_matrix(region.delay_s, cfg)
    active = np.flatnonzero(np.any(b != 0, axis=1))
    b = b[active]
    coef = _cross_coefficients(region.subset(active), cfg)
    powers = np.einsum("ln,ln->n", b, coef @ b)
    if powers.min(initial=0.0) < -NEGATIVE_RESIDUE_TOL:
        raise ConsistencyError(f"negative PDP bin {powers.min():.3e}")
    return Pdp(np.maximum(powers, 0.0), cfg.t_c)


def _moments(axis: np.ndarray, powers: np.ndarray, what: str):
    total = powers.sum()
    if not total > 0:
        raise UndefinedSpreadError(f"{what} is all zero")
    mean = (axis * powers).sum() / total
    var = ((axis - mean) ** 2 * powers).sum() / total
    return float(mean), float(math.sqrt(max(var, 0.0)))


def rms_delay_spread(pdp: Pdp) -> tuple[float, float]:
    """Mean delay and RMS delay spread (seconds)."""
    return _moments(pdp.delays_s, np.asarray(pdp.powers, dtype=float), "PDP")


def dvir(region: StationarityRegion, cfg: SamplingConfig) -> np.ndarray:
    """Doppler-variant impulse response ``s[p, n]``, rows ``p = -M/2 .. M/2-1``."""
    m = cfg.m_samples
    p = np.arange(m) - m // 2
    if len(region) == 0:
        return np.zeros((m, cfg.n_delay_bins), dtype=complex)
    a = (region.amplitude * np.exp(2j * np.pi * region.phase_cycles))[:, None] \
        * rc_matrix(region.delay_s, cfg)
    u = region.doppler_hz[None, :] * cfg.t_stat - p[:, None]
    return np.sinc(u) @ a


def dsd_estimate(s: np.ndarray, bin_hz: float) -> Dsd:
    """Short-term DSD: delay-average of ``|s[p, n]|^2``."""
    s = np.asarray(s)
    return Dsd(np.mean(np.abs(s) ** 2, axis=1), bin_hz)


def dsd_brute(cir: SampledCir) -> Dsd:
    """DSD from the DFT over time of a sampled impulse response.

    The sampled response rotates as ``e^{-j2pi nu m}``, so the DFT index is
    negated to put a path with positive Doppler at positive frequency.
    """
    m = cir.config.m_samples
    spec = np.fft.fft(cir.data, axis=0)
    # row p of the output holds DFT bin -p (mod M)
    p = np.arange(m) - m // 2
    spec = spec[(-p) % m]
    return Dsd(np.mean(np.abs(spec) ** 2, axis=1), 1.0 / (m * cir.config.t_s))


def rms_doppler_spread(dsd: Dsd) -> tuple[float, float]:
    """Mean Doppler shift and RMS Doppler spread (Hz)."""
    return _moments(dsd.frequencies_hz, np.asarray(dsd.powers, dtype=float), "DSD")


def _retained(dsd: Dsd, epsilon_db: float) -> np.ndarray:
    powers = np.asarray(dsd.powers, dtype=float)
    peak = powers.max(initial=0.0)
    if peak <= 0:
        return np.zeros(0)
    return dsd.frequencies_hz[powers > peak / 10 ** (epsilon_db / 10)]


def doppler_bandwidth(dsd: Dsd, epsilon_db: float = 40.0) -> float:
    """Width between the extreme Doppler bins within ``epsilon_db`` of the peak."""
    f = _retained(dsd, epsilon_db)
    return float(f.max() - f.min()) if f.size else 0.0


def max_doppler_extent(dsd: Dsd, epsilon_db: float = 40.0) -> float:
    """One-sided Doppler extent: largest ``|f|`` within ``epsilon_db`` of the peak."""
    f = _retained(dsd, epsilon_db)
    return float(np.abs(f).max()) if f.size else 0.0


def estimate_k_factor(region: StationarityRegion, bandwidth_hz: float) -> float:
    """Rician K-factor of the LOS delay bin, in dB.

    Returns ``-inf`` without a LOS path and ``K_NO_SCATTER_DB`` when no other
    path shares the LOS delay bin.
    """
    los = region.los_index
    if los is None:
        return -math.inf
    bins = np.floor(region.delay_s * bandwidth_hz)
    others = (bins == bins[los]) & (np.arange(len(region)) != los)
    if not others.any():
        return K_NO_SCATTER_DB
    weights = region.amplitude[others] * np.exp(2j * np.pi * region.phase_cycles[others])
    scattered = abs(weights.sum()) ** 2
    los_power = region.amplitude[los] ** 2
    if scattered == 0:
        return K_NO_SCATTER_DB
    return min(linear_to_db(los_power / scattered), K_NO_SCATTER_DB)


def received_power(pdp: Pdp, cfg: EstimatorConfig) -> float:
    """Received power in dBm from PDP bins within the power threshold of the peak."""
    powers = np.asarray(pdp.powers, dtype=float)
    peak = powers.max(initial=0.0)
    if not peak > 0:
        raise UndefinedSpreadError("received power undefined for a zero PDP")
    gain = powers[powers >= peak / 10 ** (cfg.power_threshold_db / 10)].sum()
    return cfg.p_tx_dbm + 10 * math.log10(gain)


def no_coverage_params() -> CondensedParams:
    return CondensedParams(-math.inf, 0.0, 0.0, -math.inf, 0.0, 0.0)


def condense(region: StationarityRegion, sampling: SamplingConfig,
             cfg: EstimatorConfig | None = None) -> CondensedParams:
    """Condensed parameter vector of a stationarity region.

    A region without received power yields :func:`no_coverage_params`.
    """
    cfg = cfg or EstimatorConfig()
    pdp = pdp_fast(region, sampling)
    if not pdp.powers.max(initial=0.0) > 0:
        return no_coverage_params()
    rx = received_power(pdp, cfg)
    _, sigma_tau = rms_delay_spread(pdp)
    dsd = dsd_estimate(dvir(region, sampling), 1.0 / sampling.t_stat)
    _, sigma_nu = rms_doppler_spread(dsd)
    f_dmax = max_doppler_extent(dsd, cfg.epsilon_db)
    k_db = estimate_k_factor(region, sampling.bandwidth_hz)
    los = region.los_index
    f_los = float(region.doppler_hz[los]) if los is not None else 0.0
    return CondensedParams(rx, sigma_tau, f_dmax, k_db, f_los, sigma_nu)


class CondensedParamsExtractor(TransformerMixin, BaseEstimator):
    """Transformer mapping stationarity regions to condensed parameter rows.

    Parameters
    ----------
    sampling : SamplingConfig
        Sampling grid of the regions.
    epsilon_db : float, default=40.0
        Dynamic range used to threshold the DSD.
    power_threshold_db : float, default=40.0
        Dynamic range used to integrate the PDP.
    p_tx_dbm : float, default=-5.0
        Transmit power.

    ``transform`` returns an ``(n_regions, 6)`` array with columns
    ``PSI_COLUMNS``; ``k_db`` may be ``-inf`` (no LOS).
    """

    def __init__(self, sampling=None, epsilon_db=40.0, power_threshold_db=40.0,
                 p_tx_dbm=-5.0):
        self.sampling = sampling
        self.epsilon_db = epsilon_db
        self.power_threshold_db = power_threshold_db
        self.p_tx_dbm = p_tx_dbm

    def fit(self, X=None, y=None):
        if not isinstance(self.sampling, SamplingConfig):
            raise TypeError("sampling must be a SamplingConfig")
        self.estimator_config_ = EstimatorConfig(self.epsilon_db, self.power_threshold_db,
                                                 self.p_tx_dbm)
        self.n_features_out_ = len(PSI_COLUMNS)
        return self

    def transform(self, X):
        if not hasattr(self, "estimator_config_"):
            self.fit()
        regions = [X] if isinstance(X, StationarityRegion) else list(X)
        for r in regions:
            if not isinstance(r, StationarityRegion):
                raise TypeError(f"expected StationarityRegion, got {type(r).__name__}")
        rows = [condense(r, self.sampling, self.estimator_config_).as_array() for r in regions]
        return np.array(rows, dtype=float).reshape(len(rows), len(PSI_COLUMNS))

    def get_feature_names_out(self, input_features=None):
        return np.array(PSI_COLUMNS, dtype=object)

    def __sklearn_is_fitted__(self):
        return True
