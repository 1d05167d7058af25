"""The two built-in street scenarios and the vehicle footprints used for swaps.

Both streets share the roadside unit (transmitter on a 3 m mast, camera
just beside it looking across the street) so that path loss keeps the same
relation to apparent vehicle size; they differ in route, reflectors,
skyline and clutter. Reflectors sit where their excess delays stay at least
two taps apart from each other and from the direct ray along the whole
route, so instantaneous K and delay spread follow the geometry instead of
flickering with per-snapshot phase draws.
"""
from __future__ import annotations

from .sim import Occluder, ScenarioConfig, Scatterer
from .vision import VehicleFootprint

RX_VAN = VehicleFootprint(4.8, 1.9, 2.0, "rx-van")
SWAP_SCALES = (0.8, 1.3)


def _loop(corners, laps):
    pts = list(corners) * laps
    return pts + [corners[0]]


def street_a(**overrides) -> ScenarioConfig:
    cfg = dict(
        name="A",
        route=_loop([(-17.0, 8.0), (17.0, 8.0), (17.0, 24.0), (-17.0, 24.0)], laps=2),
        scatterers=[
            Scatterer((28.0, 18.0, 7.0), 0.9),
            Scatterer((57.0, -17.0, 4.0), 0.8),
            Scatterer((40.0, 32.0, 9.5), 0.7),
        ],
        occluders=[Occluder((0.0, 11.0, 0.0), (8.0, 2.5, 3.2), 0.0, (13.0, 14.5), "truck")],
        lens_blocked=[(30.0, 30.8)],
        background_seed=101,
        clutter_rate=0.6,
        rng_seed=11,
    )
    cfg.update(overrides)
    return ScenarioConfig(**cfg)


def street_b(**overrides) -> ScenarioConfig:
    cfg = dict(
        name="B",
        route=_loop([(-22.0, 12.0), (12.0, 6.0), (22.0, 18.0), (-8.0, 28.0)], laps=2),
        scatterers=[
            Scatterer((-23.5, 25.0, 5.5), 0.9),
            Scatterer((-20.0, -60.0, 7.5), 0.8),
            Scatterer((-47.0, 11.0, 4.0), 0.6),
        ],
        occluders=[Occluder((6.0, 10.0, 0.0), (6.0, 2.2, 2.8), 20.0, (13.5, 14.5), "bus")],
        lens_blocked=[(36.0, 36.6)],
        background_seed=202,
        clutter_rate=0.9,
        rng_seed=23,
    )
    cfg.update(overrides)
    return ScenarioConfig(**cfg)


SCENARIOS = {"A": street_a, "B": street_b}


def get_scenario(name, **overrides) -> ScenarioConfig:
    try:
        return SCENARIOS[name](**overrides)
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
