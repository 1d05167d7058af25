"""Pairing masks with channel labels, splits and the dataset manifest."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .chparams import ChannelTable
from .errors import ContractError, FormatError
from .vision import MaskFrame

LABELS = ("pl_db", "k_db", "rms_ds_ns")
SPLIT_TAGS = ("train", "val", "test")
# Valid-snapshot counts of the two measured streets; used only to label reports.
STREET_A_SNAPSHOTS = 11652
STREET_B_SNAPSHOTS = 15045


def default_tolerance(snapshot_rate):
    return 0.5 / snapshot_rate


def _check_sorted(name, ts):
    bad = np.flatnonzero(np.diff(ts) < 0)
    if bad.size:
        raise ContractError(f"{name} timestamps are not sorted (position {int(bad[0]) + 1})")


def align_indices(snapshot_ts, frame_ts, tol):
    """For each snapshot, index of the nearest frame within ``tol`` (ties go
    to the earlier frame) or -1."""
    s = np.asarray(snapshot_ts, dtype=np.float64)
    f = np.asarray(frame_ts, dtype=np.float64)
    _check_sorted("snapshot", s)
    _check_sorted("frame", f)
    if tol < 0:
        raise ContractError("tolerance must be >= 0")
    return kernels.nearest_within(s, f, tol)


@dataclass
class PairedSample:
    snapshot_index: int
    timestamp: float
    mask: MaskFrame
    labels: dict


def align(table: ChannelTable, frames, tol):
    """Pair every valid snapshot with its nearest visible frame within ``tol``.

    Snapshots without such a frame are discarded.
    """
    frames = [fr for fr in frames if fr.visible]
    rows = np.flatnonzero(table.valid)
    match = align_indices(table.timestamp[rows], [fr.timestamp for fr in frames], tol)
    out = []
    for r, j in zip(rows, match):
        if j < 0:
            continue
        out.append(
            PairedSample(
                int(table.index[r]),
                float(table.timestamp[r]),
                frames[j],
                {name: float(getattr(table, name)[r]) for name in LABELS},
            )
        )
    return out


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.8
    val_frac: float = 0.1
    test_frac: float = 0.1
    test_contiguous: bool = True
    rng_seed: int = 0

    def __post_init__(self):
        fr = (self.train_frac, self.val_frac, self.test_frac)
        if min(fr) <= 0 or abs(sum(fr) - 1.0) > 1e-9:
            raise ContractError("split fractions must be positive and sum to 1")


@dataclass
class Splits:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def tags(self, m):
        out = np.empty(m, dtype=object)
        for tag in SPLIT_TAGS:
            out[getattr(self, tag)] = tag
        return out


def make_splits(samples, spec: SplitSpec = SplitSpec()) -> Splits:
    """Test block first (contiguous, seeded start), then ``round(val_frac * rest)``
    shuffled samples for validation, the remainder for training."""
    m = samples if isinstance(samples, (int, np.integer)) else len(samples)
    if m < 10:
        raise ContractError(f"need at least 10 samples to split, got {m}")
    rng = np.random.default_rng(spec.rng_seed)
    n_test = int(round(spec.test_frac * m))
    if spec.test_contiguous:
        start = int(rng.integers(0, m - n_test + 1))
        test = np.arange(start, start + n_test)
    else:
        test = np.sort(rng.choice(m, n_test, replace=False))
    rest = np.setdiff1d(np.arange(m), test)
    rest = rng.permutation(rest)
    n_val = int(round(spec.val_frac * rest.size))
    return Splits(np.sort(rest[n_val:]), np.sort(rest[:n_val]), test)


# ---------------------------------------------------------------------------
# manifest


@dataclass
class Manifest:
    ids: np.ndarray
    split: np.ndarray
    mask_offset: np.ndarray
    labels: dict
    header: dict = field(default_factory=dict)

    def __len__(self):
        return self.ids.size

    def indices(self, tag):
        return np.flatnonzero(self.split == tag)

    def splits(self):
        return Splits(*(self.indices(t) for t in SPLIT_TAGS))


def export_manifest(samples, splits: Splits, path, mask_offsets, header=None):
    """Tab-separated manifest, one line per sample, preceded by one ``#`` header line."""
    m = len(samples)
    if len(mask_offsets) != m:
        raise ContractError("one mask offset per sample required")
    tags = splits.tags(m)
    if any(t is None for t in tags):
        raise ContractError("splits do not cover every sample")
    head = "\t".join(f"{k}={v}" for k, v in sorted((header or {}).items()))
    lines = ["# " + head]
    for s, tag, off in zip(samples, tags, mask_offsets):
        lab = s.labels
        lines.append(
            f"{s.snapshot_index}\t{tag}\t{int(off)}\t{lab['pl_db']!r}\t{lab['k_db']!r}\t{lab['rms_ds_ns']!r}"
        )
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write manifest {path}: {exc}") from exc


def load_manifest(path) -> Manifest:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("#"):
        raise FormatError(f"{path}: missing '#' header line")
    header = dict(kv.split("=", 1) for kv in text[0][1:].strip().split("\t") if "=" in kv)
    ids, split, off, cols = [], [], [], {k: [] for k in LABELS}
    for i, line in enumerate(text[1:]):
        f = line.split("\t")
        if len(f) != 6 or f[1] not in SPLIT_TAGS:
            raise FormatError(f"{path}: malformed record {i}", record=i)
        try:
            ids.append(int(f[0]))
            off.append(int(f[2]))
            for k, v in zip(LABELS, f[3:]):
                cols[k].append(float(v))
        except ValueError as exc:
            raise FormatError(f"{path}: malformed record {i}: {exc}", record=i) from exc
        split.append(f[1])
    return Manifest(
        np.array(ids, dtype=np.int64),
        np.array(split, dtype=object),
        np.array(off, dtype=np.int64),
        {k: np.array(v, dtype=np.float64) for k, v in cols.items()},
        header,
    )
