"""On-disk formats.

Snapshot records (``.bin``)
    little-endian, per record: u64 index, f64 timestamp, N_f x (f64 re, f64 im).
    A JSON sidecar ``<file>.json`` carries ``num_freq_points`` and the config hash.
Mask file
    header: b"VMSK", u32 grid width, u32 grid height, u64 frame count;
    per frame: f64 timestamp, u8 status, 4 x f32 bbox (NaN when absent),
    row-major bit-packed grid (MSB first, padded to whole bytes).
    Status bit 0 is the visible flag, bits 1..7 the reason code.
Path sidecar (text)
    one line per snapshot: timestamp, L, then L triples (delay_ns, amplitude, phase).
Characteristics (CSV)
    index, timestamp, pl_db, k_db, rms_ds_ns, valid_flag.
"""
from __future__ import annotations

import csv
import hashlib
import json
import struct
import sys
from pathlib import Path

import numpy as np

from .errors import ContractError, FormatError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - depends on interpreter
    import tomli as tomllib
import tomli_w


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


# ---------------------------------------------------------------------------
# scenario config


def load_config_dict(path):
    with open(path, "rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from exc


def save_config(config, path):
    d = {k: v for k, v in config.to_dict().items() if v is not None}
    Path(path).write_bytes(tomli_w.dumps(d).encode())


def load_config(path):
    from .sim import ScenarioConfig

    return ScenarioConfig.from_dict(load_config_dict(path))


# ---------------------------------------------------------------------------
# snapshot records


def snapshot_dtype(n):
    return np.dtype([("index", "<u8"), ("timestamp", "<f8"), ("values", "<c16", (n,))])


def write_snapshots(path, timestamps, values, config_hash="", index=None, extra=None):
    values = np.asarray(values, dtype=np.complex128)
    if values.ndim != 2:
        raise ContractError("snapshot values must be (M, N_f)")
    m, n = values.shape
    rec = np.zeros(m, dtype=snapshot_dtype(n))
    rec["index"] = np.arange(m) if index is None else index
    rec["timestamp"] = timestamps
    rec["values"] = values
    Path(path).write_bytes(rec.tobytes())
    meta = {"config_hash": config_hash, "num_freq_points": n, "records": m}
    meta.update(extra or {})
    write_json(str(path) + ".json", meta)


def read_snapshots(path, num_freq_points=None):
    """Returns ``(index, timestamps, values)``."""
    path = Path(path)
    if num_freq_points is None:
        side = Path(str(path) + ".json")
        if not side.exists():
            raise FormatError(f"{path}: missing sidecar manifest {side.name}")
        num_freq_points = int(json.loads(side.read_text())["num_freq_points"])
    raw = path.read_bytes()
    dt = snapshot_dtype(num_freq_points)
    if len(raw) % dt.itemsize:
        raise FormatError(f"{path}: truncated snapshot record", record=len(raw) // dt.itemsize)
    rec = np.frombuffer(raw, dtype=dt)
    ts = rec["timestamp"].astype(np.float64)
    bad = np.flatnonzero(np.diff(ts) <= 0)
    if bad.size:
        raise FormatError(f"{path}: timestamps not increasing", record=int(bad[0]) + 1)
    return rec["index"].astype(np.int64), ts, rec["values"].astype(np.complex128)


def write_reference(path, y_ref, h_ref):
    write_snapshots(path, [0.0, 1.0], np.stack([y_ref, h_ref]), extra={"kind": "reference"})


def read_reference(path):
    from .calib import ReferenceCapture

    _, _, vals = read_snapshots(path)
    if vals.shape[0] != 2:
        raise FormatError(f"{path}: a reference file holds exactly 2 records, found {vals.shape[0]}")
    return ReferenceCapture(vals[0], vals[1])


# ---------------------------------------------------------------------------
# ground-truth paths


def write_paths(path, pathsets):
    with open(path, "w") as fh:
        for ps in pathsets:
            parts = [repr(float(ps.timestamp)), str(len(ps))]
            for d, a, p in zip(ps.delays, ps.amplitudes, ps.phases):
                parts += [repr(float(d) * 1e9), repr(float(a)), repr(float(p))]
            fh.write(" ".join(parts) + "\n")


def read_paths(path):
    from .sim import PathSet

    out = []
    with open(path) as fh:
        for i, line in enumerate(fh):
            f = line.split()
            try:
                n = int(f[1])
                vals = np.array(f[2:], dtype=np.float64)
                if vals.size != 3 * n:
                    raise ValueError("triple count")
                vals = vals.reshape(n, 3)
                out.append(PathSet(vals[:, 0] * 1e-9, vals[:, 1], vals[:, 2], float(f[0])))
            except (IndexError, ValueError) as exc:
                raise FormatError(f"{path}: bad path line {i}: {exc}", record=i) from exc
    return out


# ---------------------------------------------------------------------------
# characteristics CSV

CHAR_COLUMNS = ("index", "timestamp", "pl_db", "k_db", "rms_ds_ns", "valid_flag")


def write_chars(path, table):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CHAR_COLUMNS)
        for row in zip(table.index, table.timestamp, table.pl_db, table.k_db, table.rms_ds_ns, table.valid):
            i, t, pl, k, ds, ok = row
            w.writerow([int(i), repr(float(t)), repr(float(pl)), repr(float(k)), repr(float(ds)), int(bool(ok))])


def read_chars(path):
    from .chparams import ChannelTable

    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CHAR_COLUMNS:
        raise FormatError(f"{path}: expected header {','.join(CHAR_COLUMNS)}")
    body = rows[1:]
    try:
        cols = list(zip(*body)) if body else [()] * 6
        return ChannelTable(
            np.array(cols[0], dtype=np.int64),
            np.array(cols[1], dtype=np.float64),
            np.array(cols[2], dtype=np.float64),
            np.array(cols[3], dtype=np.float64),
            np.array(cols[4], dtype=np.float64),
            np.array(cols[5], dtype=np.int64).astype(bool),
        )
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# masks

MASK_MAGIC = b"VMSK"
_MASK_HEAD = struct.Struct("<4sIIQ")
_MASK_REC = struct.Struct("<dB4f")


def mask_record_size(width, height):
    return _MASK_REC.size + (width * height + 7) // 8


def mask_offset(i, width, height):
    return _MASK_HEAD.size + i * mask_record_size(width, height)


def export_masks(frames, path, shape=None):
    """Write frames; returns the byte offset of each record."""
    if shape is None:
        if not frames:
            raise ContractError("shape is required for an empty mask stream")
        shape = frames[0].grid.shape
    h, w = shape
    offsets = []
    with open(path, "wb") as fh:
        fh.write(_MASK_HEAD.pack(MASK_MAGIC, w, h, len(frames)))
        for i, f in enumerate(frames):
            if f.grid.shape != (h, w):
                raise ContractError(f"frame {i} grid {f.grid.shape} differs from {(h, w)}")
            bbox = (np.nan,) * 4 if f.bbox is None else f.bbox
            offsets.append(fh.tell())
            fh.write(_MASK_REC.pack(f.timestamp, (int(f.reason) << 1) | int(bool(f.visible)), *bbox))
            fh.write(np.packbits(f.grid.astype(bool).ravel()).tobytes())
    return offsets


def read_mask_header(path):
    with open(path, "rb") as fh:
        head = fh.read(_MASK_HEAD.size)
    if len(head) == 0:
        return None
    if len(head) < _MASK_HEAD.size:
        raise FormatError(f"{path}: truncated mask header")
    magic, w, h, n = _MASK_HEAD.unpack(head)
    if magic != MASK_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    return w, h, n


def import_masks(path, expected_shape=None, with_offsets=False):
    from .vision import MaskFrame, tight_bbox

    raw = Path(path).read_bytes()
    if not raw:
        return ([], []) if with_offsets else []
    hdr = read_mask_header(path)
    w, h, n = hdr
    if expected_shape is not None and tuple(expected_shape) != (h, w):
        raise FormatError(f"{path}: grid {h}x{w} does not match expected {expected_shape[0]}x{expected_shape[1]}")
    size = mask_record_size(w, h)
    nbits = w * h
    frames, offsets = [], []
    prev = -np.inf
    for i in range(n):
        off = _MASK_HEAD.size + i * size
        if off + size > len(raw):
            raise FormatError(f"{path}: truncated record {i}", record=i)
        ts, status, *bbox = _MASK_REC.unpack_from(raw, off)
        if not ts > prev:
            raise FormatError(f"{path}: timestamp of record {i} is not increasing", record=i)
        prev = ts
        bits = np.frombuffer(raw, dtype=np.uint8, count=size - _MASK_REC.size, offset=off + _MASK_REC.size)
        grid = np.unpackbits(bits, count=nbits).astype(bool).reshape(h, w)
        box = None if np.isnan(bbox[0]) else tuple(float(v) for v in bbox)
        if (box is None) != (not grid.any()) or (box is not None and box != tight_bbox(grid)):
            raise FormatError(f"{path}: record {i} bbox disagrees with its grid", record=i)
        frames.append(MaskFrame(ts, grid, box, bool(status & 1), status >> 1))
        offsets.append(off)
    if len(raw) != _MASK_HEAD.size + n * size:
        raise FormatError(f"{path}: {len(raw) - _MASK_HEAD.size - n * size} trailing bytes", record=n)
    return (frames, offsets) if with_offsets else frames


def write_drop_log(path, log):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("frame", "timestamp", "reason"))
        for i, t, r in log:
            w.writerow((i, repr(float(t)), r))
