"""Channel characteristics from calibrated impulse responses.

Per snapshot: path loss over a 40-wavelength sliding window, valid multipath
taps, Rice K-factor (instantaneous) and RMS delay spread of the windowed
average PDP restricted to the valid taps.

Multipath discrimination rule
    noise floor = median power of the weakest quarter of the taps;
    threshold   = max(floor * 10^(margin/10), peak * 10^(-dynamic_range/10));
    valid taps  = non-circular local power maxima strictly above threshold.
The default 22 dB margin keeps the false-detection rate on pure noise
below 1e-3; the dynamic-range cap discards transform round-off taps on
noiseless data.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ContractError, ExtractionError, NoValidPathError, NumericInconsistencyError
from .sim import C0

K_CAP_DB = 40.0
RADICAND_TOL = 1e-12


@dataclass(frozen=True)
class DiscriminationSpec:
    margin_db: float = 22.0
    dynamic_range_db: float | None = 30.0
    floor_fraction: float = 0.25


@dataclass(frozen=True)
class WindowSpec:
    span_meters: float
    span_snapshots: int

    def __post_init__(self):
        if self.span_snapshots < 1:
            raise ContractError("span_snapshots must be >= 1")


@dataclass
class Pdp:
    power: np.ndarray
    tap_spacing: float
    timestamp: float = 0.0


@dataclass
class ValidPaths:
    indices: np.ndarray
    powers: np.ndarray
    los_index: int
    threshold: float = 0.0


@dataclass
class ChannelCharacteristics:
    timestamp: float
    pl_db: float
    k_db: float
    rms_ds_ns: float


def window_snapshots(config) -> WindowSpec:
    if not config.vehicle_speed > 0:
        raise ContractError("vehicle_speed must be > 0")
    span_m = 40.0 * C0 / config.center_frequency
    n = int(round(span_m * config.snapshot_rate / config.vehicle_speed))
    return WindowSpec(span_m, max(n, 1))


# ---------------------------------------------------------------------------
# single-snapshot / single-window formulas


def _taps_of(ir):
    return np.asarray(getattr(ir, "taps", ir), dtype=np.complex128)


def pdp(ir) -> Pdp:
    taps = _taps_of(ir)
    return Pdp(taps.real**2 + taps.imag**2, getattr(ir, "tap_spacing", 1.0), getattr(ir, "timestamp", 0.0))


def path_loss(window, w: WindowSpec | None = None):
    """PL in dB from the impulse responses of one window (already selected)."""
    taps = np.asarray([_taps_of(ir) for ir in window])
    if taps.size == 0:
        raise ContractError("path_loss needs a non-empty window")
    gain = float(np.mean(np.sum(np.abs(taps) ** 2, axis=-1)))
    if gain <= 0:
        raise ExtractionError("zero channel gain in window: path loss is infinite")
    return -10.0 * np.log10(gain)


def apdp(pdps, w: WindowSpec | None = None) -> Pdp:
    """Element-wise mean of the PDPs of one window."""
    pdps = list(pdps)
    if not pdps:
        raise ContractError("apdp needs a non-empty window")
    power = np.mean([p.power for p in pdps], axis=0)
    mid = pdps[len(pdps) // 2]
    return Pdp(power, mid.tap_spacing, mid.timestamp)


def valid_tap_mask(power, spec: DiscriminationSpec = DiscriminationSpec()):
    """Boolean mask of valid taps for each row of ``power`` (``(N,)`` or ``(M, N)``)."""
    p = np.atleast_2d(np.asarray(power, dtype=np.float64))
    n = p.shape[1]
    k = max(1, int(round(spec.floor_fraction * n)))
    floor = np.median(np.partition(p, k - 1, axis=1)[:, :k], axis=1)
    thr = floor * 10.0 ** (spec.margin_db / 10.0)
    if spec.dynamic_range_db is not None:
        thr = np.maximum(thr, p.max(axis=1) * 10.0 ** (-spec.dynamic_range_db / 10.0))
    peak = np.ones_like(p, dtype=bool)
    peak[:, 1:] &= p[:, 1:] > p[:, :-1]
    peak[:, :-1] &= p[:, :-1] >= p[:, 1:]
    mask = peak & (p > thr[:, None])
    return (mask[0], thr[0]) if np.ndim(power) == 1 else (mask, thr)


def discriminate_paths(ir, spec: DiscriminationSpec = DiscriminationSpec()) -> ValidPaths:
    power = pdp(ir).power
    if power.size == 0:
        raise ContractError("impulse response has no taps")
    mask, thr = valid_tap_mask(power, spec)
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise NoValidPathError("no tap exceeds the discrimination threshold")
    pw = power[idx]
    return ValidPaths(idx, pw, int(idx[np.argmax(pw)]), float(thr))


def k_factor(vp: ValidPaths, cap_db=K_CAP_DB):
    if len(vp.indices) == 0:
        raise ContractError("k_factor needs at least one valid path")
    powers = np.asarray(vp.powers, dtype=np.float64)
    los = powers[list(vp.indices).index(vp.los_index)]
    nlos = powers.sum() - los
    if nlos <= 0:
        return float(cap_db)
    return float(10.0 * np.log10(los / nlos))


def _rms(power, delays_ns):
    total = power.sum()
    m1 = (power * delays_ns).sum() / total
    m2 = (power * delays_ns**2).sum() / total
    rad = m2 - m1 * m1
    if rad < 0:
        if rad < -RADICAND_TOL:
            raise NumericInconsistencyError(f"negative delay-spread radicand {rad:.3g} ns^2")
        rad = 0.0
    return float(np.sqrt(rad))


def rms_delay_spread(ap: Pdp, vp: ValidPaths):
    """RMS delay spread in ns over the valid taps of ``ap``."""
    idx = np.asarray(vp.indices)
    if idx.size == 0:
        raise ContractError("rms_delay_spread needs at least one valid path")
    power = np.asarray(ap.power, dtype=np.float64)[idx]
    if not power.sum() > 0:
        raise NumericInconsistencyError("valid taps carry no power in the averaged PDP")
    delays_ns = (idx - idx[0]) * ap.tap_spacing * 1e9
    return _rms(power, delays_ns)


# ---------------------------------------------------------------------------
# whole-run extraction


@dataclass
class ChannelTable:
    """Per-snapshot labels. Rows with ``valid == False`` hold NaN labels."""

    index: np.ndarray
    timestamp: np.ndarray
    pl_db: np.ndarray
    k_db: np.ndarray
    rms_ds_ns: np.ndarray
    valid: np.ndarray

    def __len__(self):
        return self.index.size

    def label(self, target):
        return getattr(self, target)

    def records(self):
        return [
            ChannelCharacteristics(float(t), float(a), float(b), float(c))
            for t, a, b, c, ok in zip(self.timestamp, self.pl_db, self.k_db, self.rms_ds_ns, self.valid)
            if ok
        ]

    def subset(self, rows):
        rows = np.asarray(rows)
        return ChannelTable(*(getattr(self, f)[rows] for f in ("index", "timestamp", "pl_db", "k_db", "rms_ds_ns", "valid")))


def extract_all(taps, timestamps, config, spec: DiscriminationSpec = DiscriminationSpec(), window=None) -> ChannelTable:
    """Labels for a whole run of impulse responses ``taps`` (``(M, N_f)``).

    Snapshots that fail discrimination are flagged and left out of every
    window average.
    """
    taps = np.asarray(taps, dtype=np.complex128)
    if taps.ndim != 2 or taps.shape[0] == 0:
        raise ContractError("extract_all needs a non-empty (M, N_f) tap matrix")
    ts = np.asarray(timestamps, dtype=np.float64)
    if ts.shape != (taps.shape[0],):
        raise ContractError("one timestamp per snapshot required")
    w = window or window_snapshots(config)
    spacing_ns = 1e9 / config.bandwidth
    m, n = taps.shape

    power = taps.real**2 + taps.imag**2
    mask, _ = valid_tap_mask(power, spec)
    valid = mask.any(axis=1)
    weights = valid.astype(np.float64)

    gain = kernels.windowed_mean(power.sum(axis=1), weights, w.span_snapshots)
    ap = kernels.windowed_mean(power, weights, w.span_snapshots)

    pl = np.full(m, np.nan)
    kf = np.full(m, np.nan)
    ds = np.full(m, np.nan)
    tap_idx = np.arange(n)
    for i in np.flatnonzero(valid):
        idx = tap_idx[mask[i]]
        inst = power[i, idx]
        if not gain[i] > 0:
            valid[i] = False
            continue
        pl[i] = -10.0 * np.log10(gain[i])
        j = int(np.argmax(inst))
        nlos = inst.sum() - inst[j]
        kf[i] = K_CAP_DB if nlos <= 0 else 10.0 * np.log10(inst[j] / nlos)
        ds[i] = _rms(ap[i, idx], (idx - idx[0]) * spacing_ns)
    return ChannelTable(np.arange(m, dtype=np.int64), ts, pl, kf, ds, valid)
