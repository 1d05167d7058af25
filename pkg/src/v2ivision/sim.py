"""Synthetic V2I sounding campaigns.

A receiver vehicle drives a polyline route at constant speed past a roadside
transmitter. Each snapshot sees the line-of-sight ray plus one single-bounce
ray per scatterer, with fresh uniform phases. The transfer function is
sampled on ``N_f`` bins across the band and passed through transmit/receive
equipment responses.

Frequency grid: ``f_k = f_c - B/2 + k * B / N_f`` for ``k = 0..N_f-1``. With
this grid a ray at delay ``m / B`` lands exactly on tap ``m`` of a length
``N_f`` inverse DFT.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from fractions import Fraction
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, EquipmentError, GeometryError, OutOfRangeError

C0 = 299_792_458.0


@dataclass(frozen=True)
class Scatterer:
    position: tuple
    reflection_gain: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.reflection_gain <= 1.0):
            raise ContractError(f"reflection_gain must be in (0, 1], got {self.reflection_gain}")
        if len(self.position) != 3:
            raise ContractError("scatterer position must be 3D")


@dataclass(frozen=True)
class Occluder:
    """Box-shaped object that can hide the target from the camera.

    ``active`` is a ``(t_start, t_end)`` interval in seconds; ``None`` means
    always present. Occluders only affect the camera, never the radio channel.
    """

    center: tuple
    size: tuple = (4.5, 1.8, 1.6)
    yaw_deg: float = 0.0
    active: tuple | None = None
    label: str = "vehicle"

    def is_active(self, t):
        return self.active is None or self.active[0] <= t <= self.active[1]


@dataclass
class ScenarioConfig:
    name: str = "default"
    center_frequency: float = 5.9e9
    bandwidth: float = 30e6
    num_freq_points: int = 64
    snapshot_rate: float = 73.0
    frame_rate: float = 100.0
    tx_position: tuple = (0.0, 0.0, 3.0)
    camera_position: tuple = (0.5, 0.0, 1.8)
    camera_yaw_deg: float = 90.0
    camera_fov_deg: float = 120.0
    camera_resolution: tuple = (1920, 1080)
    grid_downsample: int = 10
    rx_antenna_height: float = 2.1
    vehicle_speed: float = 4.63
    route: list = field(default_factory=lambda: [(-50.0, 10.0), (50.0, 10.0)])
    duration: float | None = None
    scatterers: list = field(default_factory=list)
    occluders: list = field(default_factory=list)
    lens_blocked: list = field(default_factory=list)
    noise_floor_dbm: float | None = -110.0
    snap_delays: bool = True
    background_seed: int = 0
    clutter_rate: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        self.route = [tuple(float(v) for v in p) for p in self.route]
        self.scatterers = [s if isinstance(s, Scatterer) else Scatterer(**s) for s in self.scatterers]
        self.occluders = [o if isinstance(o, Occluder) else Occluder(**o) for o in self.occluders]
        self.lens_blocked = [tuple(iv) for iv in self.lens_blocked]
        self.tx_position = tuple(float(v) for v in self.tx_position)
        self.camera_position = tuple(float(v) for v in self.camera_position)
        self.camera_resolution = tuple(int(v) for v in self.camera_resolution)
        self.validate()

    def validate(self):
        problems = []
        if not self.bandwidth > 0:
            problems.append("bandwidth must be > 0")
        if self.num_freq_points < 2:
            problems.append("num_freq_points must be >= 2")
        if not self.snapshot_rate > 0:
            problems.append("snapshot_rate must be > 0")
        if not self.frame_rate >= self.snapshot_rate:
            problems.append("frame_rate must be >= snapshot_rate")
        if not 0 < self.camera_fov_deg < 180:
            problems.append("camera_fov_deg must lie in (0, 180)")
        if not self.vehicle_speed > 0:
            problems.append("vehicle_speed must be > 0")
        if len(self.route) < 2:
            problems.append("route needs at least 2 waypoints")
        if self.grid_downsample < 1:
            problems.append("grid_downsample must be >= 1")
        if problems:
            raise ContractError("; ".join(problems))

    # derived quantities -------------------------------------------------
    @property
    def wavelength(self):
        return C0 / self.center_frequency

    @property
    def tap_spacing(self):
        return 1.0 / self.bandwidth

    @property
    def frequencies(self):
        n = self.num_freq_points
        return self.center_frequency - self.bandwidth / 2 + np.arange(n) * (self.bandwidth / n)

    @property
    def grid_shape(self):
        """(rows, cols) of the downsampled mask grid."""
        w, h = self.camera_resolution
        return h // self.grid_downsample, w // self.grid_downsample

    @property
    def route_length(self):
        pts = np.asarray(self.route)
        return float(np.sum(np.hypot(*np.diff(pts, axis=0).T)))

    @property
    def run_duration(self):
        full = self.route_length / self.vehicle_speed
        return full if self.duration is None else min(float(self.duration), full)

    @property
    def num_snapshots(self):
        return int(math.floor(self.run_duration * self.snapshot_rate * (1 - 1e-12))) + 1

    @property
    def noise_std(self):
        """Per-component standard deviation of the additive frequency-domain noise."""
        if self.noise_floor_dbm is None:
            return 0.0
        return math.sqrt(10.0 ** (self.noise_floor_dbm / 10.0) / 2.0)

    # serialization --------------------------------------------------------
    def to_dict(self):
        d = dataclasses.asdict(self)
        d["route"] = [list(p) for p in self.route]
        d["occluders"] = [{k: v for k, v in o.items() if v is not None} for o in d["occluders"]]
        return _plain(d)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ContractError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**d)

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


@dataclass
class PathSet:
    """Ground-truth rays of one snapshot, sorted by delay."""

    delays: np.ndarray
    amplitudes: np.ndarray
    phases: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        self.delays = np.asarray(self.delays, dtype=np.float64)
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.float64)
        self.phases = np.asarray(self.phases, dtype=np.float64)
        if not (self.delays.shape == self.amplitudes.shape == self.phases.shape) or self.delays.ndim != 1:
            raise ContractError("delays, amplitudes and phases must be equal-length vectors")
        if np.any(self.delays < 0) or np.any(np.diff(self.delays) <= 0):
            raise ContractError("delays must be non-negative and strictly increasing")
        if np.any(self.amplitudes <= 0):
            raise ContractError("amplitudes must be positive")
        if np.any(self.phases < 0) or np.any(self.phases >= 2 * np.pi):
            raise ContractError("phases must lie in [0, 2pi)")

    def __len__(self):
        return self.delays.size

    @property
    def paths(self):
        return list(zip(self.delays.tolist(), self.amplitudes.tolist(), self.phases.tolist()))


@dataclass
class FrequencySnapshot:
    timestamp: float
    values: np.ndarray


# ---------------------------------------------------------------------------
# geometry


def _route_arrays(config):
    pts = np.asarray(config.route, dtype=np.float64)
    seg = np.diff(pts, axis=0)
    lens = np.hypot(seg[:, 0], seg[:, 1])
    return pts, seg, lens, np.concatenate([[0.0], np.cumsum(lens)])


def route_state(config: ScenarioConfig, t):
    """Position (x, y, antenna height) and heading (radians) at time ``t``."""
    pts, seg, lens, cum = _route_arrays(config)
    s = config.vehicle_speed * float(t)
    if t < 0 or s > cum[-1] * (1 + 1e-12):
        raise OutOfRangeError(f"t={t} s is outside the route duration {cum[-1] / config.vehicle_speed:.6g} s")
    i = int(np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(lens) - 1))
    while lens[i] == 0 and i + 1 < len(lens):
        i += 1
    frac = 0.0 if lens[i] == 0 else min((s - cum[i]) / lens[i], 1.0)
    xy = pts[i] + frac * seg[i]
    heading = math.atan2(seg[i][1], seg[i][0])
    return np.array([xy[0], xy[1], config.rx_antenna_height]), heading


def trajectory_at(config: ScenarioConfig, t):
    return route_state(config, t)[0]


def snapshot_times(config: ScenarioConfig):
    return np.arange(config.num_snapshots) / config.snapshot_rate


# ---------------------------------------------------------------------------
# paths and transfer function


def synth_paths(config: ScenarioConfig, rx_position, rng, timestamp=0.0) -> PathSet:
    """LoS ray plus one single-bounce ray per scatterer, random phases.

    When ``config.snap_delays`` is set, delays are rounded to the tap grid
    ``m / B`` and rays sharing a tap are merged coherently.
    """
    tx = np.asarray(config.tx_position, dtype=np.float64)
    rx = np.asarray(rx_position, dtype=np.float64)
    d = float(np.linalg.norm(tx - rx))
    if d < 1e-9:
        raise GeometryError("receiver coincides with transmitter")
    lam = config.wavelength
    lengths = [d]
    amps = [lam / (4 * np.pi * d)]
    for s in config.scatterers:
        sp = np.asarray(s.position, dtype=np.float64)
        total = float(np.linalg.norm(tx - sp) + np.linalg.norm(sp - rx))
        lengths.append(total)
        amps.append(s.reflection_gain * lam / (4 * np.pi * total))
    delays = np.asarray(lengths) / C0
    amps = np.asarray(amps)
    phases = rng.uniform(0.0, 2 * np.pi, size=delays.size)

    if config.snap_delays:
        taps = np.rint(delays * config.bandwidth).astype(np.int64)
        uniq = np.unique(taps)
        coeff = np.zeros(uniq.size, dtype=np.complex128)
        np.add.at(coeff, np.searchsorted(uniq, taps), amps * np.exp(-1j * phases))
        keep = np.abs(coeff) > 0
        delays = uniq[keep] / config.bandwidth
        amps = np.abs(coeff[keep])
        phases = np.mod(-np.angle(coeff[keep]), 2 * np.pi)
    else:
        order = np.argsort(delays, kind="stable")
        delays, amps, phases = delays[order], amps[order], phases[order]
    phases = np.where(phases >= 2 * np.pi, 0.0, phases)
    return PathSet(delays, amps, phases, float(timestamp))


def _band_turns(config, delays):
    """``f_k * tau`` in turns modulo 1, shape ``(N_f, L)``.

    ``f_c * tau`` runs to thousands of turns, so its fractional part is taken
    in exact rational arithmetic; the per-bin increment is small enough for
    plain floats.
    """
    f0 = config.center_frequency - config.bandwidth / 2
    df = config.bandwidth / config.num_freq_points
    base = np.array([float((Fraction(f0) * Fraction(float(tau))) % 1) for tau in delays])
    k = np.arange(config.num_freq_points)[:, None]
    return base[None, :] + k * (df * np.asarray(delays))[None, :]


def paths_to_cfr(paths: PathSet, config: ScenarioConfig) -> FrequencySnapshot:
    coeff = paths.amplitudes * np.exp(-1j * paths.phases)
    values = np.exp(-2j * np.pi * _band_turns(config, paths.delays)) @ coeff
    return FrequencySnapshot(paths.timestamp, values)


def apply_equipment(cfr: FrequencySnapshot, h_tx, h_rx, x, noise_std=0.0, rng=None) -> FrequencySnapshot:
    """``Y = X * H_tx * H * H_rx`` plus complex Gaussian noise of per-component
    standard deviation ``noise_std``."""
    h = np.asarray(cfr.values)
    h_tx, h_rx, x = (np.asarray(v, dtype=np.complex128) for v in (h_tx, h_rx, x))
    for name, v in (("h_tx", h_tx), ("h_rx", h_rx), ("x", x)):
        if v.shape != h.shape:
            raise ContractError(f"{name} has length {v.shape}, expected {h.shape}")
    for name, v in (("h_tx", h_tx), ("h_rx", h_rx)):
        bad = np.flatnonzero(v == 0)
        if bad.size:
            raise EquipmentError(f"{name} is zero at bin {int(bad[0])}")
    y = x * h_tx * h * h_rx
    if noise_std > 0:
        if rng is None:
            raise ContractError("noise_std > 0 needs an rng")
        y = y + noise_std * (rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape))
    return FrequencySnapshot(cfr.timestamp, y)


@dataclass(frozen=True)
class Equipment:
    h_tx: np.ndarray
    h_rx: np.ndarray
    x: np.ndarray
    h_ref: np.ndarray

    def reference_capture(self):
        """Back-to-back spectrum: transmitter wired to receiver through the attenuator."""
        return self.x * self.h_tx * self.h_ref * self.h_rx


def default_equipment(n):
    """Deterministic, gently rippled Tx/Rx responses; flat unit waveform; flat -40 dB attenuator."""
    k = np.arange(n) / n
    h_tx = (1.0 + 0.15 * np.cos(2 * np.pi * 3 * k)) * np.exp(-2j * np.pi * 0.7 * k)
    h_rx = (0.8 + 0.1 * np.sin(2 * np.pi * 5 * k + 0.3)) * np.exp(-2j * np.pi * 0.2 * k * k)
    return Equipment(h_tx, h_rx, np.ones(n, dtype=np.complex128), np.full(n, 0.01 + 0j))


# ---------------------------------------------------------------------------
# campaign


def snapshot_rng(config: ScenarioConfig, index):
    """Independent stream per (seed, snapshot) so snapshots can be generated in any order."""
    return np.random.default_rng([config.rng_seed, int(index)])


def simulate_snapshot(config: ScenarioConfig, index, equipment=None):
    equipment = equipment or default_equipment(config.num_freq_points)
    t = index / config.snapshot_rate
    rx = trajectory_at(config, t)
    rng = snapshot_rng(config, index)
    paths = synth_paths(config, rx, rng, timestamp=t)
    y = apply_equipment(
        paths_to_cfr(paths, config), equipment.h_tx, equipment.h_rx, equipment.x, config.noise_std, rng
    )
    return y, rx, paths


def run_campaign(config: ScenarioConfig, equipment=None):
    """Yield ``(FrequencySnapshot, rx_position, PathSet)`` at ``k / snapshot_rate``."""
    equipment = equipment or default_equipment(config.num_freq_points)
    for k in range(config.num_snapshots):
        yield simulate_snapshot(config, k, equipment)


@dataclass
class CampaignRun:
    timestamps: np.ndarray
    values: np.ndarray
    positions: np.ndarray
    paths: list


def collect_campaign(config: ScenarioConfig, equipment=None) -> CampaignRun:
    ts, vals, pos, paths = [], [], [], []
    for snap, rx, ps in run_campaign(config, equipment):
        ts.append(snap.timestamp)
        vals.append(snap.values)
        pos.append(rx)
        paths.append(ps)
    n = config.num_freq_points
    return CampaignRun(
        np.asarray(ts, dtype=np.float64),
        np.asarray(vals, dtype=np.complex128).reshape(-1, n),
        np.asarray(pos, dtype=np.float64).reshape(-1, 3),
        paths,
    )
