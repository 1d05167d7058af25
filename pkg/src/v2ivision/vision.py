"""Target-vehicle masks from a pinhole camera, plus frame filtering.

Camera model: horizontal field of view ``camera_fov_deg`` spread over the
downsampled grid width, square cells, principal point at the grid centre,
optical axis horizontal with heading ``camera_yaw_deg`` (degrees from +x).

The target is a box aligned with the vehicle heading, standing on the ground.
Its silhouette is the convex hull of the 8 projected corners; a cell is set
when its centre falls inside the hull.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import kernels
from .errors import ContractError
from .sim import ScenarioConfig, route_state

NEAR_PLANE = 0.1
MIN_CELLS = 4

VISIBLE = 0
OUT_OF_VIEW = 1
BEHIND_CAMERA = 2
TOO_FAR = 3
OCCLUDED = 4
LENS_BLOCKED = 5
REASONS = {
    VISIBLE: "visible",
    OUT_OF_VIEW: "out-of-view",
    BEHIND_CAMERA: "behind-camera",
    TOO_FAR: "too-far",
    OCCLUDED: "occluded",
    LENS_BLOCKED: "lens-blocked",
}

IMAGE_MODES = ("single_mask", "raw_scene", "full_segmentation")
MODE_CHANNELS = {"single_mask": 1, "raw_scene": 1, "full_segmentation": 3}
CLUTTER_CLASSES = ("vehicle", "pedestrian", "cyclist")


@dataclass(frozen=True)
class VehicleFootprint:
    length: float = 4.8
    width: float = 1.9
    height: float = 2.0
    label: str = "rx-van"

    def __post_init__(self):
        if min(self.length, self.width, self.height) <= 0:
            raise ContractError("vehicle dimensions must be positive")

    def scaled(self, factor, label=None):
        return VehicleFootprint(
            self.length * factor, self.width * factor, self.height * factor, label or f"{self.label}x{factor:g}"
        )


@dataclass
class MaskFrame:
    timestamp: float
    grid: np.ndarray
    bbox: tuple | None = None
    visible: bool = False
    reason: int = OUT_OF_VIEW

    @property
    def reason_name(self):
        return REASONS[self.reason]


def tight_bbox(grid):
    """Normalized (x_min, y_min, x_max, y_max) of the set cells, as float32, or None."""
    rows = np.flatnonzero(grid.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(grid.any(axis=0))
    h, w = grid.shape
    box = np.array([cols[0] / w, rows[0] / h, (cols[-1] + 1) / w, (rows[-1] + 1) / h], dtype=np.float32)
    return tuple(box.tolist())


# ---------------------------------------------------------------------------
# camera


@dataclass(frozen=True)
class Camera:
    position: np.ndarray
    yaw: float
    focal: float
    rows: int
    cols: int

    @classmethod
    def from_config(cls, config: ScenarioConfig):
        rows, cols = config.grid_shape
        focal = (cols / 2.0) / math.tan(math.radians(config.camera_fov_deg) / 2.0)
        return cls(np.asarray(config.camera_position, dtype=np.float64), math.radians(config.camera_yaw_deg), focal, rows, cols)

    @property
    def axes(self):
        fwd = np.array([math.cos(self.yaw), math.sin(self.yaw), 0.0])
        right = np.array([math.sin(self.yaw), -math.cos(self.yaw), 0.0])
        up = np.array([0.0, 0.0, 1.0])
        return fwd, right, up

    def to_camera(self, points):
        """World points ``(K, 3)`` -> camera coordinates (right, up, depth)."""
        d = np.asarray(points, dtype=np.float64) - self.position
        fwd, right, up = self.axes
        return np.stack([d @ right, d @ up, d @ fwd], axis=-1)

    def project(self, points):
        """Returns grid coordinates ``(col, row)`` and depth for each point."""
        cam = self.to_camera(points)
        depth = cam[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            col = self.cols / 2.0 + self.focal * cam[:, 0] / depth
            row = self.rows / 2.0 - self.focal * cam[:, 1] / depth
        return np.stack([col, row], axis=-1), depth

    def ray(self, col, row):
        """Unit world direction through grid position ``(col, row)``."""
        fwd, right, up = self.axes
        v = fwd * self.focal + right * (col - self.cols / 2.0) - up * (row - self.rows / 2.0)
        return v / np.linalg.norm(v)


def box_corners(center_xy, heading, length, width, height, base_z=0.0):
    c, s = math.cos(heading), math.sin(heading)
    dl = np.array([c, s]) * (length / 2)
    dw = np.array([-s, c]) * (width / 2)
    xy = np.asarray(center_xy[:2], dtype=np.float64)
    foot = [xy + dl + dw, xy + dl - dw, xy - dl - dw, xy - dl + dw]
    return np.array([[p[0], p[1], z] for z in (base_z, base_z + height) for p in foot])


def _hull_polygon(pts):
    try:
        hull = ConvexHull(pts)
    except (QhullError, ValueError):
        return None
    return pts[hull.vertices]


def _empty(config, t, reason):
    return MaskFrame(float(t), np.zeros(config.grid_shape, dtype=bool), None, False, reason)


def render_mask(
    config: ScenarioConfig,
    rx_position,
    footprint: VehicleFootprint,
    occluders=(),
    heading=0.0,
    t=0.0,
    camera: Camera | None = None,
) -> MaskFrame:
    """Deterministic target-only mask for one frame."""
    if any(a <= t <= b for a, b in config.lens_blocked):
        return _empty(config, t, LENS_BLOCKED)
    cam = camera or Camera.from_config(config)
    corners = box_corners(rx_position, heading, footprint.length, footprint.width, footprint.height)
    uv, depth = cam.project(corners)
    if np.any(depth <= NEAR_PLANE):
        return _empty(config, t, BEHIND_CAMERA)
    lo, hi = uv.min(axis=0), uv.max(axis=0)
    if hi[0] <= 0 or lo[0] >= cam.cols or hi[1] <= 0 or lo[1] >= cam.rows:
        return _empty(config, t, OUT_OF_VIEW)
    for occ in occluders:
        if not occ.is_active(t):
            continue
        oc = box_corners(occ.center, math.radians(occ.yaw_deg), *occ.size, base_z=occ.center[2] if len(occ.center) > 2 else 0.0)
        ouv, odepth = cam.project(oc)
        if np.any(odepth <= NEAR_PLANE) or odepth.min() >= depth.min():
            continue
        olo, ohi = ouv.min(axis=0), ouv.max(axis=0)
        if np.all(olo <= lo) and np.all(ohi >= hi):
            return _empty(config, t, OCCLUDED)
    poly = _hull_polygon(uv)
    grid = np.zeros(config.grid_shape, dtype=bool) if poly is None else kernels.rasterize_convex(poly, cam.rows, cam.cols)
    if grid.sum() < MIN_CELLS:
        return _empty(config, t, TOO_FAR)
    return MaskFrame(float(t), grid, tight_bbox(grid), True, VISIBLE)


def frame_times(config: ScenarioConfig):
    n = int(math.floor(config.run_duration * config.frame_rate * (1 - 1e-12))) + 1
    return np.arange(n) / config.frame_rate


def render_run(config: ScenarioConfig, footprint: VehicleFootprint, times=None):
    """Masks for every camera frame of the run (or for the given ``times``)."""
    cam = Camera.from_config(config)
    times = frame_times(config) if times is None else np.asarray(times, dtype=np.float64)
    frames = []
    for t in times:
        pos, heading = route_state(config, t)
        frames.append(render_mask(config, pos, footprint, config.occluders, heading, t, cam))
    return frames


def filter_frames(frames):
    """Drop frames that are not visible. Returns ``(kept, drop_log)``; each log
    entry is ``(frame_index, timestamp, reason_name)``."""
    kept, log = [], []
    for i, f in enumerate(frames):
        if f.visible:
            kept.append(f)
        else:
            log.append((i, f.timestamp, REASONS[f.reason]))
    return kept, log


# ---------------------------------------------------------------------------
# scene layers for the raw-scene and full-segmentation image modes


@dataclass(frozen=True)
class ClutterEvent:
    t_start: float
    t_end: float
    row: int
    col: int
    height: int
    width: int
    cls: int


@dataclass
class SceneLayers:
    background: np.ndarray
    events: list = field(default_factory=list)


_CLUTTER_SIZE = {0: ((6, 12), (14, 30)), 1: ((8, 14), (3, 5)), 2: ((8, 12), (6, 10))}


def scene_layers(config: ScenarioConfig) -> SceneLayers:
    """Static background (0/1 occupancy of scenery) and a clutter schedule.

    Both are drawn from ``background_seed``; the clutter timing also depends
    on ``rng_seed`` so two scenarios with the same skyline still differ.
    """
    rows, cols = config.grid_shape
    rng = np.random.default_rng([config.background_seed, 17])
    bg = np.zeros((rows, cols), dtype=bool)
    horizon = rows // 2
    x = 0
    while x < cols:
        w = int(rng.integers(8, 30))
        h = int(rng.integers(6, horizon))
        if rng.random() < 0.8:
            bg[horizon - h : horizon, x : min(x + w, cols)] = True
        x += w + int(rng.integers(0, 6))
    for _ in range(int(rng.integers(2, 5))):
        r = int(rng.integers(horizon + 4, rows - 2))
        bg[r : r + 1, :] |= rng.random(cols) < 0.6
    bg[horizon : horizon + 2, :] = True

    events = []
    if config.clutter_rate > 0:
        erng = np.random.default_rng([config.background_seed, config.rng_seed, 29])
        t = 0.0
        while True:
            t += float(erng.exponential(1.0 / config.clutter_rate))
            if t > config.run_duration:
                break
            cls = int(erng.integers(0, 3))
            (h0, h1), (w0, w1) = _CLUTTER_SIZE[cls]
            h, w = int(erng.integers(h0, h1 + 1)), int(erng.integers(w0, w1 + 1))
            r = int(erng.integers(horizon - h // 2, rows - h))
            c = int(erng.integers(0, cols - w))
            events.append(ClutterEvent(t, t + float(erng.uniform(0.5, 3.0)), r, c, h, w, cls))
    return SceneLayers(bg, events)


def compose_image(frame: MaskFrame, mode: str, layers: SceneLayers | None = None):
    """uint8 image ``(H, W, C)`` of one frame in the requested mode."""
    if mode not in IMAGE_MODES:
        raise ContractError(f"unknown image mode {mode!r}")
    grid = frame.grid
    if mode == "single_mask":
        return (grid.astype(np.uint8) * 255)[..., None]
    if layers is None:
        raise ContractError(f"{mode} needs scene layers")
    active = [e for e in layers.events if e.t_start <= frame.timestamp <= e.t_end]
    if mode == "raw_scene":
        img = np.where(layers.background, np.uint8(128), np.uint8(0))
        for e in active:
            img[e.row : e.row + e.height, e.col : e.col + e.width] = 255
        img[grid] = 255
        return img[..., None]
    img = np.zeros(grid.shape + (3,), dtype=np.uint8)
    for e in active:
        img[e.row : e.row + e.height, e.col : e.col + e.width, e.cls] = 255
    img[grid, 0] = 255
    return img


def compose_images(frames, mode, layers=None):
    if not frames:
        return np.zeros((0,) + (0, 0, MODE_CHANNELS.get(mode, 1)), dtype=np.uint8)
    return np.stack([compose_image(f, mode, layers) for f in frames])



def export_masks(frames, path, shape=None):
    from .formats import export_masks as _export

    return _export(frames, path, shape)


def import_masks(path, expected_shape=None):
    from .formats import import_masks as _import

    return _import(path, expected_shape)
