import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from v2ivision import calib, sim
from v2ivision.errors import ContractError, EquipmentError, GeometryError, OutOfRangeError


def los_only(**kw):
    base = dict(route=[(0.0, 10.0), (100.0, 10.0)], noise_floor_dbm=None, tx_position=(0.0, 0.0, 2.1))
    base.update(kw)
    return sim.ScenarioConfig(**base)


# -- config ---------------------------------------------------------------


def test_default_config_values():
    cfg = sim.ScenarioConfig()
    assert cfg.center_frequency == 5.9e9
    assert cfg.bandwidth == 30e6
    assert cfg.num_freq_points == 64
    assert cfg.snapshot_rate == 73
    assert cfg.frame_rate == 100
    assert cfg.camera_fov_deg == 120
    assert cfg.camera_resolution == (1920, 1080)
    assert cfg.tx_position[2] == 3.0 and cfg.camera_position[2] == 1.8
    assert cfg.rx_antenna_height == 2.1
    assert cfg.vehicle_speed == 4.63
    assert cfg.grid_shape == (108, 192)


@pytest.mark.parametrize(
    "bad",
    [
        dict(bandwidth=0),
        dict(num_freq_points=1),
        dict(snapshot_rate=0),
        dict(frame_rate=50),
        dict(camera_fov_deg=180),
        dict(vehicle_speed=0),
        dict(route=[(0, 0)]),
    ],
)
def test_config_invariants(bad):
    with pytest.raises(ContractError):
        sim.ScenarioConfig(**bad)


def test_scatterer_gain_range():
    with pytest.raises(ContractError):
        sim.Scatterer((0, 0, 0), 0.0)
    with pytest.raises(ContractError):
        sim.Scatterer((0, 0, 0), 1.5)
    sim.Scatterer((0, 0, 0), 1.0)


def test_config_dict_round_trip_and_hash():
    cfg = sim.ScenarioConfig(scatterers=[sim.Scatterer((1, 2, 3), 0.5)], occluders=[sim.Occluder((1, 2, 0), active=(1, 2))])
    again = sim.ScenarioConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()
    assert again.config_hash() == cfg.config_hash()
    assert cfg.replace(rng_seed=5).config_hash() != cfg.config_hash()
    with pytest.raises(ContractError):
        sim.ScenarioConfig.from_dict({"nonsense": 1})


# -- trajectory -------------------------------------------------------------


def test_trajectory_straight_route():
    cfg = sim.ScenarioConfig(route=[(0, 0), (100, 0)], vehicle_speed=5.0)
    p = sim.trajectory_at(cfg, 10.0)
    assert p[0] == pytest.approx(50.0) and p[1] == 0.0


def test_trajectory_start_is_first_waypoint():
    cfg = sim.ScenarioConfig(route=[(3, 4), (10, 4)])
    p = sim.trajectory_at(cfg, 0.0)
    assert (p[0], p[1]) == (3.0, 4.0)
    assert p[2] == cfg.rx_antenna_height


def test_trajectory_l_shaped_route_matches_dense_walk():
    route = [(0.0, 0.0), (60.0, 0.0), (60.0, 40.0)]
    cfg = sim.ScenarioConfig(route=route, vehicle_speed=4.0)
    expected = oracles.arc_position(route, 80.0)
    # frozen oracle output: 20 m into the second leg
    assert expected == pytest.approx((60.0, 20.0), abs=1e-6)
    p = sim.trajectory_at(cfg, 20.0)
    assert (p[0], p[1]) == pytest.approx(expected, abs=1e-6)


@given(st.floats(0.0, 1.0))
def test_trajectory_arc_length_property(frac):
    route = [(0.0, 0.0), (30.0, 0.0), (30.0, 20.0), (-5.0, 20.0)]
    cfg = sim.ScenarioConfig(route=route, vehicle_speed=3.0)
    t = frac * cfg.route_length / cfg.vehicle_speed
    p = sim.trajectory_at(cfg, t)
    ox, oy = oracles.arc_position(route, cfg.vehicle_speed * t, samples_per_meter=200)
    assert math.hypot(p[0] - ox, p[1] - oy) < 1e-6


def test_trajectory_beyond_route_end():
    cfg = sim.ScenarioConfig(route=[(0, 0), (10, 0)], vehicle_speed=1.0)
    with pytest.raises(OutOfRangeError):
        sim.trajectory_at(cfg, 10.5)
    with pytest.raises(OutOfRangeError):
        sim.trajectory_at(cfg, -1.0)


# -- paths ------------------------------------------------------------------


def test_los_delay_50m():
    cfg = los_only(snap_delays=False)
    ps = sim.synth_paths(cfg, (50.0, 0.0, 2.1), np.random.default_rng(0))
    assert len(ps) == 1
    assert ps.delays[0] * 1e9 == pytest.approx(166.78, abs=0.005)
    assert ps.delays[0] == pytest.approx(50.0 / oracles.C, rel=1e-12)
    assert ps.amplitudes[0] == pytest.approx(cfg.wavelength / (4 * math.pi * 50.0), rel=1e-12)


def test_collinear_scatterer_extra_10m():
    # Rx 20 m from Tx on the x axis, reflector 5 m further out: extra path 10 m.
    cfg = los_only(snap_delays=False, scatterers=[sim.Scatterer((25.0, 0.0, 2.1), 0.5)])
    ps = sim.synth_paths(cfg, (20.0, 0.0, 2.1), np.random.default_rng(0))
    dt = (ps.delays[1] - ps.delays[0]) * 1e9
    assert dt == pytest.approx(10.0 / oracles.C * 1e9, rel=1e-9)
    assert dt == pytest.approx(33.36, abs=0.005)
    assert ps.amplitudes[1] == pytest.approx(0.5 * cfg.wavelength / (4 * math.pi * 30.0), rel=1e-12)


def test_zero_scatterers_single_path():
    ps = sim.synth_paths(los_only(), (10.0, 3.0, 2.1), np.random.default_rng(0))
    assert len(ps) == 1


def test_degenerate_geometry():
    cfg = los_only()
    with pytest.raises(GeometryError):
        sim.synth_paths(cfg, cfg.tx_position, np.random.default_rng(0))


def test_on_grid_delays_land_on_taps_and_merge():
    # Two reflectors with the same path length must merge into one tap.
    cfg = los_only(scatterers=[sim.Scatterer((0.0, 30.0, 2.1), 0.5), sim.Scatterer((0.0, -30.0, 2.1), 0.5)])
    ps = sim.synth_paths(cfg, (20.0, 0.0, 2.1), np.random.default_rng(1))
    taps = ps.delays * cfg.bandwidth
    assert np.allclose(taps, np.rint(taps), atol=1e-9)
    assert len(ps) == 2
    assert np.all(np.diff(ps.delays) > 0)


@given(st.integers(0, 2**32 - 1), st.floats(3.0, 80.0), st.floats(-40.0, 40.0))
def test_pathset_invariants(seed, x, y):
    cfg = sim.ScenarioConfig(
        route=[(0, 10), (1, 10)],
        scatterers=[sim.Scatterer((10.0, 40.0, 5.0), 0.8), sim.Scatterer((-20.0, 15.0, 3.0), 0.3)],
    )
    for snap in (True, False):
        ps = sim.synth_paths(cfg.replace(snap_delays=snap), (x, y, 2.1), np.random.default_rng(seed))
        assert np.all(ps.delays >= 0) and np.all(np.diff(ps.delays) > 0)
        assert np.all(ps.amplitudes > 0)
        assert np.all((ps.phases >= 0) & (ps.phases < 2 * np.pi))


# -- transfer function ----------------------------------------------------------


def test_cfr_identity_path():
    cfg = los_only()
    h = sim.paths_to_cfr(sim.PathSet([0.0], [1.0], [0.0]), cfg).values
    assert np.allclose(h, 1.0, atol=1e-15, rtol=0)


def test_cfr_phase_winds_once_across_band_for_tau_one_over_b():
    cfg = los_only()
    h = sim.paths_to_cfr(sim.PathSet([1.0 / cfg.bandwidth], [1.0], [0.0]), cfg).values
    step = h[1:] / h[:-1]
    assert np.allclose(step, np.exp(-2j * np.pi / cfg.num_freq_points), atol=1e-9)
    # N steps of 2*pi/N make one full turn
    assert np.angle(step).sum() == pytest.approx(-2 * np.pi * (cfg.num_freq_points - 1) / cfg.num_freq_points)


def test_cfr_two_paths_vs_direct_sum():
    cfg = los_only()
    ps = sim.PathSet([120e-9, 310e-9], [1e-3, 4e-4], [0.3, 5.1])
    h = sim.paths_to_cfr(ps, cfg).values
    ref = np.array(oracles.cfr_direct(cfg.frequencies, ps.paths))
    assert np.max(np.abs(h - ref) / np.abs(ref)) < 1e-12


@given(st.integers(0, 10_000))
def test_parseval_on_grid(seed):
    rng = np.random.default_rng(seed)
    cfg = los_only()
    m = np.sort(rng.choice(cfg.num_freq_points, size=rng.integers(1, 6), replace=False))
    amps = rng.uniform(0.01, 1.0, m.size)
    ps = sim.PathSet(m / cfg.bandwidth, amps, rng.uniform(0, 2 * np.pi, m.size))
    taps = calib.to_impulse_values(sim.paths_to_cfr(ps, cfg).values)
    assert np.sum(np.abs(taps) ** 2) == pytest.approx(np.sum(amps**2), rel=1e-9)


# -- equipment ---------------------------------------------------------------------


def test_equipment_identity():
    h = sim.FrequencySnapshot(0.0, np.arange(1, 9) * (1 + 1j))
    ones = np.ones(8)
    assert np.array_equal(sim.apply_equipment(h, ones, ones, ones, 0.0).values, h.values)


def test_equipment_product():
    n = 16
    y = sim.apply_equipment(sim.FrequencySnapshot(0, np.full(n, 0.5)), np.full(n, 2.0), np.full(n, 3.0), np.ones(n))
    assert np.allclose(y.values, 3.0)


def test_equipment_zero_response_rejected():
    n = 4
    bad = np.array([1, 1, 0, 1.0])
    with pytest.raises(EquipmentError, match="bin 2"):
        sim.apply_equipment(sim.FrequencySnapshot(0, np.ones(n)), bad, np.ones(n), np.ones(n))
    with pytest.raises(ContractError):
        sim.apply_equipment(sim.FrequencySnapshot(0, np.ones(n)), np.ones(3), np.ones(n), np.ones(n))


def test_equipment_noise_power_monte_carlo():
    rng = np.random.default_rng(5)
    n = 64
    h = sim.FrequencySnapshot(0, rng.standard_normal(n) + 1j * rng.standard_normal(n))
    tx, rx, x = (rng.uniform(0.5, 2, n) * np.exp(1j * rng.uniform(0, 6, n)) for _ in range(3))
    clean = x * tx * h.values * rx
    draws = [np.mean(np.abs(sim.apply_equipment(h, tx, rx, x, 1e-3, rng).values - clean) ** 2) for _ in range(10_000)]
    assert np.mean(draws) == pytest.approx(2e-6, rel=0.5)
    assert np.mean(draws) == pytest.approx(2e-6, rel=0.02)


# -- campaign ------------------------------------------------------------------------


def test_campaign_count_and_timestamps():
    cfg = los_only(duration=10.0)
    run = sim.collect_campaign(cfg)
    assert len(run.timestamps) == 730
    assert np.array_equal(run.timestamps, np.arange(730) / 73.0)


def test_campaign_determinism():
    cfg = los_only(duration=2.0, noise_floor_dbm=-100, scatterers=[sim.Scatterer((5, 30, 4), 0.5)])
    a = sim.collect_campaign(cfg)
    b = sim.collect_campaign(cfg)
    assert a.values.tobytes() == b.values.tobytes()
    assert a.positions.tobytes() == b.positions.tobytes()


def test_campaign_seeds_change_phases():
    cfg = los_only(duration=1.0, scatterers=[sim.Scatterer((5, 30, 4), 0.5)])
    a = sim.collect_campaign(cfg.replace(rng_seed=1))
    b = sim.collect_campaign(cfg.replace(rng_seed=2))
    pa = np.concatenate([p.phases for p in a.paths])
    pb = np.concatenate([p.phases for p in b.paths])
    assert pa.shape == pb.shape and np.mean(pa != pb) > 0.99
