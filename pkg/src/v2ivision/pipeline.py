"""In-memory chaining of the stages, used by the experiments and the demo."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calib import ReferenceCapture, calibrate_values, to_impulse_values
from .chparams import ChannelTable, DiscriminationSpec, extract_all
from .dataset import SplitSpec, Splits, align, default_tolerance, make_splits
from .sim import CampaignRun, ScenarioConfig, collect_campaign, default_equipment
from .vision import MODE_CHANNELS, VehicleFootprint, compose_images, filter_frames, render_run, scene_layers


@dataclass
class ScenarioData:
    config: ScenarioConfig
    footprint: VehicleFootprint
    run: CampaignRun
    table: ChannelTable
    frames: list
    drop_log: list
    samples: list
    _images: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.samples)

    def labels(self, target):
        return np.array([s.labels[target] for s in self.samples])

    @property
    def timestamps(self):
        return np.array([s.timestamp for s in self.samples])

    def images(self, mode):
        """uint8 ``(M, H, W, C)`` stack for ``mode``; cached."""
        if mode not in self._images:
            layers = None if mode == "single_mask" else scene_layers(self.config)
            imgs = compose_images([s.mask for s in self.samples], mode, layers)
            if imgs.shape[0] == 0:
                imgs = np.zeros((0,) + self.config.grid_shape + (MODE_CHANNELS[mode],), dtype=np.uint8)
            self._images[mode] = imgs
        return self._images[mode]

    def splits(self, seed=0) -> Splits:
        return make_splits(len(self.samples), SplitSpec(rng_seed=seed))

    def with_footprint(self, footprint):
        """Same channel data, masks re-rendered with another target vehicle."""
        return build_from_channel(self.config, footprint, self.run, self.table)


def extract_labels(config, run: CampaignRun, equipment=None, spec=DiscriminationSpec()) -> ChannelTable:
    equipment = equipment or default_equipment(config.num_freq_points)
    ref = ReferenceCapture.from_equipment(equipment)
    taps = to_impulse_values(calibrate_values(run.values, ref))
    return extract_all(taps, run.timestamps, config, spec)


def build_from_channel(config, footprint, run, table) -> ScenarioData:
    frames = render_run(config, footprint)
    kept, log = filter_frames(frames)
    samples = align(table, kept, default_tolerance(config.snapshot_rate))
    return ScenarioData(config, footprint, run, table, frames, log, samples)


def build_scenario(config: ScenarioConfig, footprint: VehicleFootprint, equipment=None) -> ScenarioData:
    run = collect_campaign(config, equipment)
    return build_from_channel(config, footprint, run, extract_labels(config, run, equipment))
