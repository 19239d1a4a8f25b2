"""Core 3D value types and frame-transformation primitives.

World frame convention: right-handed, z-up. Azimuth is measured
counter-clockwise from +x in the xy-plane. All lengths are meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometry, EmptyInput

ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class Vec3:
    """Immutable 3D vector with finite components."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError(f"non-finite Vec3 components: ({self.x}, {self.y}, {self.z})")

    @staticmethod
    def from_array(a) -> "Vec3":
        a = np.asarray(a, dtype=float).reshape(3)
        return Vec3(float(a[0]), float(a[1]), float(a[2]))

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __mul__(self, s: float) -> "Vec3":
        return Vec3(self.x * s, self.y * s, self.z * s)

    __rmul__ = __mul__

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def norm(self) -> float:
        return math.sqrt(self.dot(self))


def _check_rotation(r: np.ndarray, tol: float = ORTHO_TOL) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {r.shape}")
    if not np.allclose(r.T @ r, np.eye(3), atol=tol * 10):
        raise ValueError("rotation matrix is not orthonormal")
    if abs(np.linalg.det(r) - 1.0) > 1e-6:
        raise ValueError("rotation matrix determinant is not +1")
    return r


def rotation_about_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation via QR of a Gaussian matrix."""
    m = rng.standard_normal((3, 3))
    q, r = np.linalg.qr(m)
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 2] = -q[:, 2]
    return q


@dataclass(frozen=True)
class Pose:
    """Rigid pose: position plus body-to-world rotation.

    The body +x axis is the facing direction; yaw is its azimuth.
    """

    position: Vec3
    orientation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        object.__setattr__(self, "orientation", _check_rotation(self.orientation))

    @staticmethod
    def from_yaw(position: Vec3, yaw: float) -> "Pose":
        return Pose(position, rotation_about_z(yaw))

    @property
    def yaw(self) -> float:
        fwd = self.orientation[:, 0]
        return math.atan2(fwd[1], fwd[0])

    @property
    def forward(self) -> np.ndarray:
        return self.orientation[:, 0].copy()

    def world_to_body(self, points: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(points) - self.position.to_array()) @ self.orientation

    def body_to_world(self, points: np.ndarray) -> np.ndarray:
        return np.atleast_2d(points) @ self.orientation.T + self.position.to_array()


@dataclass(frozen=True)
class SimilarityTransform:
    """p -> scale * rotation @ p + translation."""

    scale: float
    rotation: np.ndarray
    translation: Vec3

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")
        object.__setattr__(self, "rotation", _check_rotation(self.rotation))

    @staticmethod
    def identity() -> "SimilarityTransform":
        return SimilarityTransform(1.0, np.eye(3), Vec3(0.0, 0.0, 0.0))

    def apply_point(self, p: Vec3) -> Vec3:
        return Vec3.from_array(self.scale * self.rotation @ p.to_array() + self.translation.to_array())

    def apply_points(self, pts: np.ndarray) -> np.ndarray:
        return self.scale * np.atleast_2d(pts) @ self.rotation.T + self.translation.to_array()

    def apply_pose(self, pose: Pose) -> Pose:
        """Map a pose into the transformed frame (position scaled, orientation rotated)."""
        return Pose(self.apply_point(pose.position), self.rotation @ pose.orientation)

    def compose(self, other: "SimilarityTransform") -> "SimilarityTransform":
        """Return T with T(p) = self(other(p))."""
        rot = self.rotation @ other.rotation
        trans = self.scale * self.rotation @ other.translation.to_array() + self.translation.to_array()
        return SimilarityTransform(self.scale * other.scale, rot, Vec3.from_array(trans))

    def inverse(self) -> "SimilarityTransform":
        rot = self.rotation.T
        trans = -rot @ self.translation.to_array() / self.scale
        return SimilarityTransform(1.0 / self.scale, rot, Vec3.from_array(trans))


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned bounding box with min <= max componentwise."""

    min: Vec3
    max: Vec3

    def __post_init__(self):
        if self.min.x > self.max.x or self.min.y > self.max.y or self.min.z > self.max.z:
            raise ValueError("Aabb min exceeds max")

    @property
    def extents(self) -> np.ndarray:
        return self.max.to_array() - self.min.to_array()

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extents))

    @property
    def center(self) -> Vec3:
        return Vec3.from_array(0.5 * (self.min.to_array() + self.max.to_array()))


class PointCloud:
    """Ordered set of 3D points with optional unit normals and feature strengths.

    Backing storage is float64 numpy arrays; `points` has shape (n, 3),
    `normals` (n, 3) or None, `feature_strength` (n,) in [0, 1] or None.
    """

    __slots__ = ("points", "normals", "feature_strength")

    def __init__(self, points, normals=None, feature_strength=None):
        pts = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 3))
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        self.points = pts
        if normals is not None:
            normals = np.ascontiguousarray(np.asarray(normals, dtype=float).reshape(-1, 3))
            if normals.shape != pts.shape:
                raise ValueError("normals length differs from points")
            lengths = np.linalg.norm(normals, axis=1)
            if normals.size and np.max(np.abs(lengths - 1.0)) > 1e-6:
                raise ValueError("normals must be unit length within 1e-6")
        self.normals = normals
        if feature_strength is not None:
            feature_strength = np.ascontiguousarray(np.asarray(feature_strength, dtype=float).reshape(-1))
            if feature_strength.shape[0] != pts.shape[0]:
                raise ValueError("feature_strength length differs from points")
            if feature_strength.size and (feature_strength.min() < 0 or feature_strength.max() > 1):
                raise ValueError("feature_strength values must lie in [0, 1]")
        self.feature_strength = feature_strength

    def __len__(self) -> int:
        return self.points.shape[0]

    def subset(self, indices) -> "PointCloud":
        idx = np.asarray(indices)
        return PointCloud(
            self.points[idx],
            None if self.normals is None else self.normals[idx],
            None if self.feature_strength is None else self.feature_strength[idx],
        )

    @staticmethod
    def concatenate(clouds: list["PointCloud"]) -> "PointCloud":
        clouds = [c for c in clouds if len(c) > 0]
        if not clouds:
            return PointCloud(np.zeros((0, 3)))
        pts = np.vstack([c.points for c in clouds])
        normals = None
        if all(c.normals is not None for c in clouds):
            normals = np.vstack([c.normals for c in clouds])
        feats = None
        if all(c.feature_strength is not None for c in clouds):
            feats = np.concatenate([c.feature_strength for c in clouds])
        return PointCloud(pts, normals, feats)


def centroid(cloud: PointCloud) -> Vec3:
    """Arithmetic mean of the cloud's points."""
    if len(cloud) == 0:
        raise EmptyInput("centroid of empty cloud")
    return Vec3.from_array(cloud.points.mean(axis=0))


def aabb(cloud: PointCloud) -> Aabb:
    """Componentwise min/max box over the cloud's points."""
    if len(cloud) == 0:
        raise EmptyInput("aabb of empty cloud")
    return Aabb(Vec3.from_array(cloud.points.min(axis=0)), Vec3.from_array(cloud.points.max(axis=0)))


def apply_similarity(t: SimilarityTransform, cloud: PointCloud) -> PointCloud:
    """Map every point through t; normals are rotated only."""
    pts = t.apply_points(cloud.points)
    normals = None if cloud.normals is None else cloud.normals @ t.rotation.T
    return PointCloud(pts, normals, cloud.feature_strength)


def _fix_axis_signs(axes: np.ndarray) -> np.ndarray:
    """Deterministic sign convention: orient axes 0 and 1 toward +x (ties toward +y,
    then +z); axis 2 is then flipped if needed so det = +1."""
    axes = axes.copy()
    for k in (0, 1):
        col = axes[:, k]
        for ref in range(3):
            if abs(col[ref]) > 1e-12:
                if col[ref] < 0:
                    axes[:, k] = -col
                break
    if np.linalg.det(axes) < 0:
        axes[:, 2] = -axes[:, 2]
    return axes


def pca_axes(cloud: PointCloud) -> np.ndarray:
    """Principal axes of the cloud as matrix columns, by descending variance.

    Returns a proper rotation (det +1). Raises DegenerateGeometry when the
    covariance is rank-deficient (all points collinear or coincident).
    """
    if len(cloud) < 3:
        raise DegenerateGeometry("pca_axes needs at least 3 points")
    centered = cloud.points - cloud.points.mean(axis=0)
    cov = centered.T @ centered / len(cloud)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]
    if evals[1] <= max(evals[0], 1e-300) * 1e-12:
        raise DegenerateGeometry("covariance is rank-deficient (collinear points)")
    return _fix_axis_signs(evecs)


def azimuth_of(xy_point: np.ndarray, center: np.ndarray) -> float:
    """Azimuth of a point about a vertical axis through center, in [0, 2pi)."""
    d = np.asarray(xy_point, dtype=float) - np.asarray(center, dtype=float)
    return float(math.atan2(d[1], d[0]) % (2 * math.pi))


def azimuths_of(points: np.ndarray, center: np.ndarray) -> np.ndarray:
    d = np.atleast_2d(points)[:, :2] - np.asarray(center, dtype=float)[:2]
    return np.arctan2(d[:, 1], d[:, 0]) % (2 * math.pi)


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    return float(-((-a + math.pi) % (2 * math.pi)) + math.pi)
