"""Geometry-based stochastic channel model on a 2-D street plane.

A scenario holds node trajectories, discrete scatterers (static or
moving), building polylines that block the LOS and anchor diffuse
scatterers, and the radio configuration. For each stationarity region the
kinematics are frozen at the region midpoint and turned into propagation
paths: a LOS path, one single-bounce path per discrete scatterer and one
per diffuse point.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import jsonschema
import numpy as np
from scipy.interpolate import Akima1DInterpolator

from .channel import C0, PathKind, SamplingConfig, StationarityRegion
from .exceptions import ConfigError, GeometryError, RangeError

DEFAULT_GAIN_SIGMA_DB = 3.0
_TIME_TOL = 1e-9

_WAYPOINTS = {
    "type": "array",
    "minItems": 2,
    "items": {"type": "array", "minItems": 3, "maxItems": 3, "items": {"type": "number"}},
}
_POINT = {"type": "array", "minItems": 2, "maxItems": 2, "items": {"type": "number"}}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["radio", "nodes"],
    "additionalProperties": False,
    "properties": {
        "radio": {
            "type": "object",
            "required": ["t_stat_s", "t_s"],
            "additionalProperties": False,
            "properties": {
                "carrier_hz": {"type": "number", "exclusiveMinimum": 0},
                "bandwidth_hz": {"type": "number", "exclusiveMinimum": 0},
                "t_stat_s": {"type": "number", "exclusiveMinimum": 0},
                "t_s": {"type": "number", "exclusiveMinimum": 0},
                "rolloff": {"type": "number", "minimum": 0, "maximum": 1},
                "p_tx_dbm": {"type": "number"},
                "n_delay_bins": {"type": "integer", "minimum": 1},
            },
        },
        "nodes": {
            "type": "array",
            "minItems": 2,
            "items": {
                "type": "object",
                "required": ["id", "waypoints"],
                "additionalProperties": False,
                "properties": {"id": {"type": "string", "minLength": 1},
                               "waypoints": _WAYPOINTS},
            },
        },
        "scatterers": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["kind"],
                "additionalProperties": False,
                "properties": {
                    "kind": {"enum": ["static", "mobile", "diffuse"]},
                    "position": _POINT,
                    "waypoints": _WAYPOINTS,
                    "gain_db": {"type": "number"},
                },
            },
        },
        "buildings": {"type": "array", "items": {"type": "array", "minItems": 2, "items": _POINT}},
        "diffuse": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "density_per_m": {"type": "number", "minimum": 0},
                "gain_db": {"type": "number"},
                "jitter_m": {"type": "number", "minimum": 0},
            },
        },
        "pathloss_exponent": {"type": "number", "exclusiveMinimum": 0},
        "gain_sigma_db": {"type": "number", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    },
}


class Trajectory:
    """Planar trajectory through timed waypoints ``(t, x, y)``.

    Positions follow a modified-Akima piecewise cubic (straight line for two
    waypoints); velocities are the analytic derivative.
    """

    def __init__(self, waypoints):
        wp = np.array(waypoints, dtype=float)
        if wp.ndim != 2 or wp.shape[1] != 3 or wp.shape[0] < 2:
            raise ConfigError("a trajectory needs >= 2 waypoints of the form (t, x, y)")
        if not np.isfinite(wp).all():
            raise ConfigError("waypoints must be finite")
        if (np.diff(wp[:, 0]) <= 0).any():
            raise ConfigError("waypoint times must be strictly increasing")
        wp.flags.writeable = False
        self.waypoints = wp
        if wp.shape[0] > 2:
            self._akima = Akima1DInterpolator(wp[:, 0], wp[:, 1:], method="makima")
            self._velocity = self._akima.derivative()
        else:
            self._akima = None

    @property
    def t_first(self) -> float:
        return float(self.waypoints[0, 0])

    @property
    def t_last(self) -> float:
        return float(self.waypoints[-1, 0])

    def covers(self, t: float) -> bool:
        return self.t_first - _TIME_TOL <= t <= self.t_last + _TIME_TOL

    def __call__(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        return interpolate_trajectory(self, t)


def interpolate_trajectory(traj: Trajectory, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Position (m) and velocity (m/s) at time ``t``."""
    if not traj.covers(t):
        raise RangeError(f"t={t!r} outside trajectory support [{traj.t_first}, {traj.t_last}]")
    t = min(max(t, traj.t_first), traj.t_last)
    wp = traj.waypoints
    if traj._akima is None:
        span = wp[1, 0] - wp[0, 0]
        vel = (wp[1, 1:] - wp[0, 1:]) / span
        return wp[0, 1:] + vel * (t - wp[0, 0]), vel
    return np.asarray(traj._akima(t), dtype=float), np.asarray(traj._velocity(t), dtype=float)


def resample_trajectory(traj: Trajectory, t_stat_s: float) -> Trajectory:
    """Trajectory with supporting points every ``t_stat_s`` from its start."""
    n = int(math.floor((traj.t_last - traj.t_first) / t_stat_s + 1e-9)) + 1
    if n < 2:
        raise RangeError("trajectory shorter than one stationarity region")
    times = traj.t_first + np.arange(n) * t_stat_s
    return Trajectory([(t, *interpolate_trajectory(traj, t)[0]) for t in times])


@dataclass(frozen=True, eq=False)
class Scatterer:
    kind: PathKind
    position: tuple | None = None
    trajectory: Trajectory | None = None
    gain_db: float = 0.0
    seed_tag: int = 0

    def __post_init__(self):
        if self.kind == PathKind.MOBILE_DISCRETE:
            if self.trajectory is None:
                raise ConfigError("a mobile scatterer needs waypoints")
        elif self.kind in (PathKind.STATIC_DISCRETE, PathKind.DIFFUSE):
            if self.position is None:
                raise ConfigError("a static or diffuse scatterer needs a position")
        else:
            raise ConfigError(f"invalid scatterer kind {self.kind!r}")


@dataclass(frozen=True)
class RegionSpan:
    index: int
    t_start_s: float
    t_end_s: float

    @property
    def t_mid_s(self) -> float:
        return 0.5 * (self.t_start_s + self.t_end_s)


@dataclass(frozen=True)
class GscmFrequencyResponse:
    data: np.ndarray
    delta_f_hz: float
    k_range: tuple[int, int]


@dataclass(frozen=True, eq=False)
class Scenario:
    node_ids: tuple
    trajectories: tuple
    scatterers: tuple
    buildings: tuple
    radio: SamplingConfig
    p_tx_dbm: float = -5.0
    pathloss_exponent: float = 2.0
    gain_sigma_db: float = DEFAULT_GAIN_SIGMA_DB
    seed: int = 0
    _static_xy: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if len(self.trajectories) < 2:
            raise ConfigError("a scenario needs at least two nodes")
        if len(set(self.node_ids)) != len(self.node_ids):
            raise ConfigError("node ids must be unique")
        fixed = [s.position if s.position is not None else (math.nan, math.nan)
                 for s in self.scatterers]
        xy = np.array(fixed, dtype=float).reshape(len(fixed), 2)
        xy.flags.writeable = False
        object.__setattr__(self, "_static_xy", xy)
        if self.window[1] - self.window[0] < self.t_stat_s * (1 - 1e-9):
            raise RangeError("simulation window shorter than one stationarity region")

    @property
    def t_stat_s(self) -> float:
        return self.radio.t_stat

    @property
    def tx(self) -> Trajectory:
        return self.trajectories[0]

    @property
    def rx(self) -> Trajectory:
        return self.trajectories[1]

    @property
    def window(self) -> tuple[float, float]:
        """Time interval covered by every node trajectory."""
        return (max(t.t_first for t in self.trajectories),
                min(t.t_last for t in self.trajectories))

    @property
    def links(self) -> list[tuple[int, int]]:
        n = len(self.trajectories)
        return [(i, j) for i in range(n) for j in range(i + 1, n)]

    def link_name(self, link: int) -> str:
        i, j = self.links[link]
        return f"{self.node_ids[i]}-{self.node_ids[j]}"

    @property
    def wavelength_m(self) -> float:
        return self.radio.c0 / self.radio.carrier_hz


def _diffuse_points(buildings, density_per_m, jitter_m, rng) -> list[tuple[float, float]]:
    points = []
    for poly in buildings:
        for a, b in zip(poly[:-1], poly[1:]):
            length = float(np.hypot(*(b - a)))
            n = int(math.floor(length * density_per_m))
            for i in range(n):
                p = a + (b - a) * (i + 0.5) / n
                points.append(tuple(p + rng.uniform(-jitter_m, jitter_m, 2)))
    return points


def _bounding_diagonal(trajs, scatterers, buildings) -> float:
    pts = [t.waypoints[:, 1:] for t in trajs]
    pts += [s.trajectory.waypoints[:, 1:] for s in scatterers if s.trajectory is not None]
    pts += [np.array([s.position]) for s in scatterers if s.position is not None]
    pts += list(buildings)
    allp = np.vstack(pts)
    return float(np.hypot(*(allp.max(axis=0) - allp.min(axis=0))))


def scenario_from_dict(doc: dict) -> Scenario:
    """Validate and build a :class:`Scenario` from its JSON document."""
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"scenario schema violation at {where}: {err.message}")
    radio = doc["radio"]
    seed = int(doc.get("seed", 0))
    try:
        trajs = tuple(Trajectory(n["waypoints"]) for n in doc["nodes"])
    except ConfigError as exc:
        raise ConfigError(f"scenario nodes: {exc}") from None
    buildings = tuple(np.array(b, dtype=float) for b in doc.get("buildings", []))

    scatterers = []
    for i, s in enumerate(doc.get("scatterers", [])):
        kind = {"static": PathKind.STATIC_DISCRETE, "mobile": PathKind.MOBILE_DISCRETE,
                "diffuse": PathKind.DIFFUSE}[s["kind"]]
        try:
            traj = Trajectory(s["waypoints"]) if "waypoints" in s else None
            pos = tuple(s["position"]) if "position" in s else None
            scatterers.append(Scatterer(kind, pos, traj, float(s.get("gain_db", 0.0))))
        except ConfigError as exc:
            raise ConfigError(f"scenario scatterers/{i}: {exc}") from None
    diffuse = doc.get("diffuse")
    if diffuse and buildings:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
        for p in _diffuse_points(buildings, diffuse.get("density_per_m", 0.0),
                                 diffuse.get("jitter_m", 0.0), rng):
            scatterers.append(Scatterer(PathKind.DIFFUSE, p, None,
                                        float(diffuse.get("gain_db", 0.0))))
    scatterers = tuple(Scatterer(s.kind, s.position, s.trajectory, s.gain_db, tag)
                       for tag, s in enumerate(scatterers))

    bandwidth = float(radio.get("bandwidth_hz", 10e6))
    t_c = 1.0 / bandwidth
    n_bins = radio.get("n_delay_bins")
    if n_bins is None:
        # longest single-bounce path is at most twice the scene diagonal
        diag = _bounding_diagonal(trajs, scatterers, buildings)
        n_bins = int(math.ceil(2 * diag / C0 / t_c)) + 10
    try:
        sampling = SamplingConfig.from_bandwidth(
            bandwidth, t_s=float(radio["t_s"]), t_stat=float(radio["t_stat_s"]),
            n_delay_bins=int(n_bins), rolloff=float(radio.get("rolloff", 0.9)),
            carrier_hz=float(radio.get("carrier_hz", 5.9e9)))
    except ConfigError as exc:
        raise ConfigError(f"scenario radio: {exc}") from None
    return Scenario(
        node_ids=tuple(n["id"] for n in doc["nodes"]), trajectories=trajs,
        scatterers=scatterers, buildings=buildings, radio=sampling,
        p_tx_dbm=float(radio.get("p_tx_dbm", -5.0)),
        pathloss_exponent=float(doc.get("pathloss_exponent", 2.0)),
        gain_sigma_db=float(doc.get("gain_sigma_db", DEFAULT_GAIN_SIGMA_DB)), seed=seed)


def load_scenario(path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario {path}: invalid JSON ({exc})") from None
    return scenario_from_dict(doc)


def segment_regions(scenario: Scenario) -> list[RegionSpan]:
    t0, t1 = scenario.window
    t_stat = scenario.t_stat_s
    count = int(math.floor((t1 - t0) / t_stat + 1e-9))
    if count < 1:
        raise RangeError("simulation window shorter than one stationarity region")
    return [RegionSpan(r, t0 + r * t_stat, t0 + (r + 1) * t_stat) for r in range(count)]


def _orient(a, b, c) -> int:
    ax, ay, bx, by, cx, cy = (Fraction(float(v)) for v in (*a, *b, *c))
    cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    return (cross > 0) - (cross < 0)


def _on_segment(a, b, p) -> bool:
    return (min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= p[1] <= max(a[1], b[1]))


def segments_intersect(p1, p2, q1, q2) -> bool:
    """Closed-segment intersection with exact orientation predicates."""
    d1, d2 = _orient(q1, q2, p1), _orient(q1, q2, p2)
    d3, d4 = _orient(p1, p2, q1), _orient(p1, p2, q2)
    if d1 * d2 < 0 and d3 * d4 < 0:
        return True
    return ((d1 == 0 and _on_segment(q1, q2, p1)) or (d2 == 0 and _on_segment(q1, q2, p2))
            or (d3 == 0 and _on_segment(p1, p2, q1)) or (d4 == 0 and _on_segment(p1, p2, q2)))


def los_blocked(scenario: Scenario, a, b) -> bool:
    for poly in scenario.buildings:
        for q1, q2 in zip(poly[:-1], poly[1:]):
            if segments_intersect(a, b, q1, q2):
                return True
    return False


def _rng(*key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(key)))


def compute_paths(scenario: Scenario, region_index: int, link: int = 0,
                  realization: int = 0) -> StationarityRegion:
    """Propagation paths of one link in one stationarity region.

    Kinematics are evaluated at the region midpoint. Per-scatterer log-normal
    gains depend on ``(seed, realization, seed_tag)``; path phases on
    ``(seed, realization, link, region)``, indexed by ``seed_tag`` with the
    LOS last, so every path draws the same numbers in any evaluation order.
    """
    spans = segment_regions(scenario)
    if not 0 <= region_index < len(spans):
        raise RangeError(f"region {region_index} outside [0, {len(spans)})")
    span = spans[region_index]
    t = span.t_mid_s
    i, j = scenario.links[link]
    p_tx, v_tx = interpolate_trajectory(scenario.trajectories[i], t)
    p_rx, v_rx = interpolate_trajectory(scenario.trajectories[j], t)
    fc, c0 = scenario.radio.carrier_hz, scenario.radio.c0
    half_n = scenario.pathloss_exponent / 2
    lam4pi = scenario.wavelength_m / (4 * math.pi)
    n_scat = len(scenario.scatterers)

    z = _rng(scenario.seed, realization, 0).standard_normal(n_scat)
    phases = _rng(scenario.seed, realization, 1, link, region_index).random(n_scat + 1)

    amp, phase, delay, doppler, kind = [], [], [], [], []
    los_vec = p_rx - p_tx
    d = float(np.hypot(*los_vec))
    if d == 0:
        raise GeometryError(f"nodes of link {scenario.link_name(link)} coincide at t={t}")
    if not los_blocked(scenario, p_tx, p_rx):
        range_rate = float(los_vec @ (v_rx - v_tx)) / d
        amp.append(lam4pi * d ** (-half_n))
        phase.append(phases[-1])
        delay.append(d / c0)
        doppler.append(-fc / c0 * range_rate)
        kind.append(PathKind.LOS)

    if n_scat:
        pos = np.array(scenario._static_xy)
        vel = np.zeros_like(pos)
        active = np.ones(n_scat, dtype=bool)
        for tag, s in enumerate(scenario.scatterers):
            if s.trajectory is not None:
                if s.trajectory.covers(t):
                    pos[tag], vel[tag] = interpolate_trajectory(s.trajectory, t)
                else:
                    active[tag] = False
        r1 = pos - p_tx
        r2 = pos - p_rx
        d1 = np.hypot(r1[:, 0], r1[:, 1])
        d2 = np.hypot(r2[:, 0], r2[:, 1])
        if ((d1[active] == 0) | (d2[active] == 0)).any():
            raise GeometryError(f"a scatterer coincides with a node of link "
                                f"{scenario.link_name(link)} at t={t}")
        safe1 = np.where(active, d1, 1.0)
        safe2 = np.where(active, d2, 1.0)
        rate = (np.einsum("ij,ij->i", r1, vel - v_tx) / safe1
                + np.einsum("ij,ij->i", r2, vel - v_rx) / safe2)
        gain_db = np.array([s.gain_db for s in scenario.scatterers]) + scenario.gain_sigma_db * z
        a = lam4pi * (safe1 * safe2) ** (-half_n) * 10 ** (gain_db / 20)
        idx = np.flatnonzero(active)
        amp.extend(a[idx])
        phase.extend(phases[idx])
        delay.extend((d1 + d2)[idx] / c0)
        doppler.extend(-fc / c0 * rate[idx])
        kind.extend(int(scenario.scatterers[k].kind) for k in idx)
    return StationarityRegion.from_arrays(region_index, amp, phase, delay, doppler, kind,
                                          scenario.t_stat_s)


def n_subcarriers(bandwidth_hz: float, delta_f_hz: float) -> int:
    return 2 * int(math.floor(bandwidth_hz / (2 * delta_f_hz)))


def frequency_response(region: StationarityRegion, delta_f_hz: float,
                       cfg: SamplingConfig) -> GscmFrequencyResponse:
    """Time-variant frequency response ``H[m, k]`` over the region's samples.

    Delays advance with each path's Doppler, ``tau[m] = tau - f m t_s / f_C``.
    Scatterer terms rotate with ``(f_C + k df) tau[m]``; the LOS term carries
    only ``k df tau[m]`` in its exponent, so its weight is advanced by the
    carrier rotation ``e^{+j2pi f m t_s}`` explicitly to keep one Doppler
    sign convention across all terms.
    """
    if not delta_f_hz > 0:
        raise ValueError("delta_f_hz must be positive")
    nk = n_subcarriers(cfg.bandwidth_hz, delta_f_hz)
    k = np.arange(-nk // 2, nk // 2)
    m = np.arange(cfg.m_samples)
    mt = m * cfg.t_s
    tau = region.delay_s[None, :] - (region.doppler_hz / cfg.carrier_hz)[None, :] * mt[:, None]
    weight = region.amplitude * np.exp(2j * np.pi * region.phase_cycles)
    is_los = region.kind == PathKind.LOS
    carrier = np.where(is_los, 0.0, cfg.carrier_hz)
    w = np.where(is_los[None, :],
                 weight[None, :] * np.exp(2j * np.pi * region.doppler_hz[None, :] * mt[:, None]),
                 weight[None, :])
    w = w * np.exp(-2j * np.pi * carrier[None, :] * tau)
    # sum_l w[m, l] exp(-j2pi k df tau[m, l])
    data = np.einsum("ml,mlk->mk", w,
                     np.exp(-2j * np.pi * delta_f_hz * tau[:, :, None] * k[None, None, :]))
    return GscmFrequencyResponse(data, delta_f_hz, (int(k[0]), int(k[-1])))
