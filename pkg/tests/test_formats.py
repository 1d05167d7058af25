import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from v2ivision import formats as F, sim, vision as V
from v2ivision.chparams import ChannelTable
from v2ivision.errors import FormatError

CFG = sim.ScenarioConfig()
HEAD = F.mask_offset(0, 192, 108)


def _frames(n=6):
    out = []
    for i in range(n):
        pos = (0.5 + 3 * math.sin(i), 12.0 + 2 * i, 0.0)
        out.append(V.render_mask(CFG, pos, V.VehicleFootprint(), heading=0.3 * i, t=i / 100))
    out.append(V.render_mask(CFG, (0.5, -5.0, 0.0), V.VehicleFootprint(), t=n / 100))  # behind camera
    return out


def _same(a, b):
    assert a.timestamp == b.timestamp and a.visible == b.visible and a.reason == b.reason
    assert a.bbox == b.bbox and np.array_equal(a.grid, b.grid)


def test_mask_round_trip(tmp_path):
    frames = _frames()
    p = tmp_path / "m.bin"
    offsets = F.export_masks(frames, p)
    back, offs = F.import_masks(p, (108, 192), with_offsets=True)
    assert offs == offsets
    assert len(back) == len(frames)
    for a, b in zip(frames, back):
        _same(a, b)
    F.export_masks(back, tmp_path / "again.bin")
    assert (tmp_path / "again.bin").read_bytes() == p.read_bytes()


def test_mask_layout(tmp_path):
    p = tmp_path / "m.bin"
    F.export_masks(_frames(2), p)
    raw = p.read_bytes()
    assert raw[:4] == b"VMSK" and HEAD == 20
    assert F.read_mask_header(p) == (192, 108, 3)
    assert F.mask_record_size(192, 108) == 8 + 1 + 16 + 192 * 108 // 8
    assert len(raw) == F.mask_offset(3, 192, 108)


def test_empty_file_is_empty_stream(tmp_path):
    p = tmp_path / "e.bin"
    p.write_bytes(b"")
    assert F.import_masks(p) == []
    F.export_masks([], tmp_path / "z.bin", shape=(108, 192))
    assert F.import_masks(tmp_path / "z.bin") == []


@settings(max_examples=40)
@given(st.data())
def test_truncation_reports_record(tmp_path_factory, data):
    frames = _frames(4)
    p = tmp_path_factory.mktemp("t") / "m.bin"
    F.export_masks(frames, p)
    raw = p.read_bytes()
    cut = data.draw(st.integers(HEAD, len(raw) - 1))
    p.write_bytes(raw[:cut])
    rec = (cut - HEAD) // F.mask_record_size(192, 108)
    with pytest.raises(FormatError) as ei:
        F.import_masks(p)
    assert ei.value.record == rec
    assert f"record {rec}" in str(ei.value)


def test_mask_errors(tmp_path):
    frames = _frames(3)
    p = tmp_path / "m.bin"
    F.export_masks(frames, p)
    with pytest.raises(FormatError, match="does not match"):
        F.import_masks(p, (54, 96))
    raw = bytearray(p.read_bytes())
    raw[:4] = b"NOPE"
    (tmp_path / "magic.bin").write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="magic"):
        F.import_masks(tmp_path / "magic.bin")
    frames[2].timestamp = frames[1].timestamp
    F.export_masks(frames, tmp_path / "mono.bin")
    with pytest.raises(FormatError) as ei:
        F.import_masks(tmp_path / "mono.bin")
    assert ei.value.record == 2
    (tmp_path / "tail.bin").write_bytes(p.read_bytes() + b"\0")
    with pytest.raises(FormatError, match="trailing"):
        F.import_masks(tmp_path / "tail.bin")


def test_status_byte_carries_reason(tmp_path):
    f = V.render_mask(CFG, (0.5, -5.0, 0.0), V.VehicleFootprint())
    p = tmp_path / "m.bin"
    F.export_masks([f], p)
    status = p.read_bytes()[HEAD + 8]
    assert status == (V.BEHIND_CAMERA << 1)
    assert F.import_masks(p)[0].reason_name == "behind-camera"


def test_snapshot_round_trip(tmp_path, rng):
    vals = rng.standard_normal((5, 64)) + 1j * rng.standard_normal((5, 64))
    ts = np.arange(5) / 73
    p = tmp_path / "s.bin"
    F.write_snapshots(p, ts, vals, config_hash="abc")
    idx, t2, v2 = F.read_snapshots(p)
    assert list(idx) == list(range(5)) and np.array_equal(t2, ts) and np.array_equal(v2, vals)
    p.write_bytes(p.read_bytes()[:-3])
    with pytest.raises(FormatError, match="truncated"):
        F.read_snapshots(p)


def test_snapshot_monotonicity(tmp_path):
    p = tmp_path / "s.bin"
    F.write_snapshots(p, [0.0, 0.2, 0.1], np.ones((3, 4)))
    with pytest.raises(FormatError) as ei:
        F.read_snapshots(p)
    assert ei.value.record == 2


def test_reference_round_trip(tmp_path):
    eq = sim.default_equipment(64)
    p = tmp_path / "ref.bin"
    y = eq.reference_capture()
    F.write_reference(p, y, eq.h_ref * np.ones(64))
    ref = F.read_reference(p)
    assert np.array_equal(ref.y_ref, y)


def test_paths_round_trip(tmp_path):
    cfg = sim.ScenarioConfig(duration=0.1)
    run = sim.collect_campaign(cfg)
    p = tmp_path / "paths.txt"
    F.write_paths(p, run.paths)
    back = F.read_paths(p)
    for a, b in zip(run.paths, back):
        assert np.allclose(a.delays, b.delays, rtol=1e-15, atol=0)
        assert np.array_equal(a.amplitudes, b.amplitudes) and np.array_equal(a.phases, b.phases)
    p.write_text("0.0 2 1 2 3\n")
    with pytest.raises(FormatError):
        F.read_paths(p)


def test_chars_round_trip(tmp_path):
    t = ChannelTable(np.arange(3), np.arange(3) / 73, np.array([70.0, np.nan, 71.5]), np.array([3.0, np.nan, 4.0]),
                     np.array([20.0, np.nan, 0.0]), np.array([True, False, True]))
    p = tmp_path / "c.csv"
    F.write_chars(p, t)
    assert p.read_text().splitlines()[0] == ",".join(F.CHAR_COLUMNS)
    b = F.read_chars(p)
    assert np.array_equal(b.pl_db, t.pl_db, equal_nan=True) and list(b.valid) == list(t.valid)
    p.write_text("wrong\n")
    with pytest.raises(FormatError):
        F.read_chars(p)


def test_config_round_trip(tmp_path):
    cfg = sim.ScenarioConfig(name="x", duration=3.0, scatterers=[sim.Scatterer((1.0, 2.0, 3.0), 0.5)])
    p = tmp_path / "c.toml"
    F.save_config(cfg, p)
    back = F.load_config(p)
    assert back.config_hash() == cfg.config_hash()
    p.write_text("not = [valid")
    with pytest.raises(FormatError):
        F.load_config(p)
