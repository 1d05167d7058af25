import numpy as np
import pytest

from v2ivision import dataset, pipeline, scenarios, sim, vision
from v2ivision.dataset import LABELS


def test_scenario_sizes(street_a_data, street_b_data):
    for d in (street_a_data, street_b_data):
        assert 2800 <= len(d) <= 3300
        assert d.table.valid.all()
        assert len(d.frames) == len(vision.frame_times(d.config))


def test_drop_log_reasons(street_a_data):
    reasons = {r for _, _, r in street_a_data.drop_log}
    assert reasons == {"occluded", "lens-blocked"}
    for i, t, r in street_a_data.drop_log:
        if r == "lens-blocked":
            assert any(a <= t <= b for a, b in street_a_data.config.lens_blocked)
        else:
            occ = street_a_data.config.occluders[0]
            assert occ.is_active(t)


def test_samples_are_aligned_and_visible(street_a_data):
    tol = dataset.default_tolerance(73.0)
    for s in street_a_data.samples[::50]:
        assert s.mask.visible and abs(s.mask.timestamp - s.timestamp) <= tol
        row = s.snapshot_index
        assert s.labels["pl_db"] == street_a_data.table.pl_db[row]


def test_labels_have_spread(street_a_data, street_b_data):
    for d in (street_a_data, street_b_data):
        for name in LABELS:
            y = d.labels(name)
            assert np.all(np.isfinite(y)) and y.std() > 0


def test_images_cached_and_shaped(street_b_data):
    a = street_b_data.images("single_mask")
    assert a is street_b_data.images("single_mask")
    assert a.shape == (len(street_b_data), 108, 192, 1) and a.dtype == np.uint8
    assert street_b_data.images("full_segmentation").shape[-1] == 3


def test_scenarios_differ():
    a, b = scenarios.street_a(), scenarios.street_b()
    assert a.config_hash() != b.config_hash()
    assert a.tx_position == b.tx_position and a.camera_position == b.camera_position
    assert scenarios.get_scenario("A", duration=2.0).duration == 2.0
    with pytest.raises(KeyError):
        scenarios.get_scenario("C")


def test_with_footprint_keeps_channel(street_a_data):
    small = pipeline.build_scenario(scenarios.street_a(duration=3.0), scenarios.RX_VAN)
    big = small.with_footprint(scenarios.RX_VAN.scaled(1.3))
    assert big.table is small.table
    area = lambda d: np.mean([s.mask.grid.sum() for s in d.samples])
    assert area(big) > area(small)


def test_build_is_deterministic():
    cfg = scenarios.street_b(duration=2.0)
    a = pipeline.build_scenario(cfg, scenarios.RX_VAN)
    b = pipeline.build_scenario(cfg, scenarios.RX_VAN)
    assert np.array_equal(a.run.values, b.run.values)
    assert np.array_equal(a.images("raw_scene"), b.images("raw_scene"))
    for name in LABELS:
        assert np.array_equal(a.labels(name), b.labels(name))
