"""Virtual-camera view synthesis from pointclouds and image preprocessing filters."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .errors import BadConfig
from .geometry import PointCloud, Pose, Vec3
from .scene import Camera


@dataclass(frozen=True)
class Image:
    """Single-channel image with row-major pixels in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=float)
        if px.ndim != 2:
            raise BadConfig("image pixels must be a 2D array")
        if not np.all(np.isfinite(px)):
            raise BadConfig("image contains non-finite pixels")
        if px.size and (px.min() < 0 or px.max() > 1):
            raise BadConfig("pixel values must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def virtual_camera_ring(
    center: Vec3,
    radius: float,
    count: int,
    hfov: float = 1.2217,
    vfov: float = 1.2217,
    max_range: float = 1.5,
    width: int = 320,
    height: int = 320,
) -> list[Camera]:
    """Evenly spaced cameras around the center at its height, all aimed at it."""
    if count < 1:
        raise BadConfig("camera ring needs at least one camera")
    if radius <= 0:
        raise BadConfig("camera ring radius must be positive")
    cams = []
    for k in range(count):
        az = 2 * math.pi * k / count
        pos = Vec3(center.x + radius * math.cos(az), center.y + radius * math.sin(az), center.z)
        yaw = math.atan2(center.y - pos.y, center.x - pos.x)
        cams.append(Camera(Pose.from_yaw(pos, yaw), hfov, vfov, max_range, width, height))
    return cams


class RenderMode(enum.Enum):
    DEPTH = "depth"
    INTENSITY = "intensity"


def _splat_offsets(radius_px: int) -> np.ndarray:
    r = int(radius_px)
    offs = [(dr, dc) for dr in range(-r, r + 1) for dc in range(-r, r + 1) if dr * dr + dc * dc <= r * r]
    return np.array(offs, dtype=np.int64)


def render_view(
    cloud: PointCloud,
    cam: Camera,
    mode: RenderMode = RenderMode.DEPTH,
    splat_px: int = 2,
    modulate_feature: bool = False,
) -> Image:
    """Z-buffered point-splat rendering of a cloud.

    Depth mode: nearest-hit distance over max range, background 1.
    Intensity mode: Lambert term |normal . view| of the nearest hit
    (optionally modulated by feature strength), background 0.
    """
    h, w = cam.height, cam.width
    background = 1.0 if mode is RenderMode.DEPTH else 0.0
    frame = np.full(h * w, background)
    if len(cloud) == 0:
        return Image(frame.reshape(h, w))

    pos = cam.pose.position.to_array()
    rot = cam.pose.orientation
    d = cloud.points - pos
    z_f = d @ rot[:, 0]
    lat = d @ rot[:, 1]
    vert = d @ rot[:, 2]
    dist = np.linalg.norm(d, axis=1)
    keep = (z_f > 1e-9) & (dist <= cam.max_range)
    if not keep.any():
        return Image(frame.reshape(h, w))

    fx = (w / 2) / math.tan(cam.hfov / 2)
    fy = (h / 2) / math.tan(cam.vfov / 2)
    cx, cy = (w - 1) / 2, (h - 1) / 2
    col = np.round(cx - fx * lat[keep] / z_f[keep]).astype(np.int64)
    row = np.round(cy - fy * vert[keep] / z_f[keep]).astype(np.int64)
    dist = dist[keep]

    if mode is RenderMode.DEPTH:
        values = dist / cam.max_range
    else:
        if cloud.normals is not None:
            view = d[keep] / dist[:, None]
            values = np.abs(np.einsum("ij,ij->i", cloud.normals[keep], view))
        else:
            values = np.ones(len(dist))
        if modulate_feature and cloud.feature_strength is not None:
            values = values * cloud.feature_strength[keep]
    values = np.clip(values, 0.0, 1.0)

    offsets = _splat_offsets(splat_px)
    rows = (row[:, None] + offsets[:, 0]).ravel()
    cols = (col[:, None] + offsets[:, 1]).ravel()
    depths = np.repeat(dist, len(offsets))
    vals = np.repeat(values, len(offsets))
    seq = np.repeat(np.arange(len(dist)), len(offsets))
    inside = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
    rows, cols, depths, vals, seq = rows[inside], cols[inside], depths[inside], vals[inside], seq[inside]
    if len(rows) == 0:
        return Image(frame.reshape(h, w))
    flat = rows * w + cols
    # Nearest hit per pixel, ties broken by point order, for determinism.
    order = np.lexsort((seq, depths, flat))
    flat_sorted = flat[order]
    first = np.unique(flat_sorted, return_index=True)[1]
    frame[flat_sorted[first]] = vals[order][first]
    return Image(frame.reshape(h, w))


@dataclass(frozen=True)
class UnsharpMask:
    radius: int
    amount: float

    def __post_init__(self):
        if self.radius < 1:
            raise BadConfig("unsharp mask radius must be >= 1")

    def apply(self, px: np.ndarray) -> np.ndarray:
        blurred = uniform_filter(px, size=2 * self.radius + 1, mode="reflect")
        return px + self.amount * (px - blurred)


@dataclass(frozen=True)
class HistogramEqualize:
    bins: int = 256

    def apply(self, px: np.ndarray) -> np.ndarray:
        hist, _ = np.histogram(px, bins=self.bins, range=(0.0, 1.0))
        cdf = np.cumsum(hist) / px.size
        idx = np.minimum((px * self.bins).astype(np.int64), self.bins - 1)
        return cdf[idx]


@dataclass(frozen=True)
class Gamma:
    gamma: float

    def __post_init__(self):
        if self.gamma <= 0:
            raise BadConfig("gamma must be positive")

    def apply(self, px: np.ndarray) -> np.ndarray:
        return np.power(px, self.gamma)


def preprocess_image(img: Image, ops) -> Image:
    """Apply sharpening/contrast filters in order, clamping to [0, 1] after each."""
    px = img.pixels
    for op in ops:
        px = np.clip(op.apply(px), 0.0, 1.0)
    return Image(px)


def write_pgm(path, img: Image) -> None:
    """P2 ASCII PGM with maxval 255, for eyeballing renders."""
    levels = np.round(img.pixels * 255).astype(int)
    lines = ["P2", f"{img.width} {img.height}", "255"]
    lines.extend(" ".join(str(v) for v in row) for row in levels)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
