"""Procedural test objects, surface sampling, and camera visibility queries.

Objects are triangle soups with a per-triangle feature strength in [0, 1]
(high on engravings and edges, low on smooth or translucent surfaces).
Visibility uses frustum, range, facing and occlusion tests; occlusion rays
are resolved against a uniform spatial grid over the triangles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BadConfig
from .geometry import PointCloud, Pose, Vec3

GRID_CELLS_PER_DIAGONAL = 32
OCCLUSION_EPS = 1e-4


class SceneObject:
    """Triangle soup with per-triangle feature strength."""

    __slots__ = ("triangles", "feature", "_grid")

    def __init__(self, triangles, feature):
        tris = np.ascontiguousarray(np.asarray(triangles, dtype=float).reshape(-1, 3, 3))
        feat = np.ascontiguousarray(np.asarray(feature, dtype=float).reshape(-1))
        if feat.shape[0] != tris.shape[0]:
            raise ValueError("feature length differs from triangle count")
        areas = 0.5 * np.linalg.norm(
            np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]), axis=1
        )
        if np.any(areas <= 1e-12):
            raise ValueError("degenerate triangle (area <= 1e-12 m^2)")
        self.triangles = tris
        self.feature = feat
        self._grid = None

    def __len__(self) -> int:
        return self.triangles.shape[0]

    @property
    def areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(
            np.cross(self.triangles[:, 1] - self.triangles[:, 0], self.triangles[:, 2] - self.triangles[:, 0]),
            axis=1,
        )

    @property
    def normals(self) -> np.ndarray:
        n = np.cross(self.triangles[:, 1] - self.triangles[:, 0], self.triangles[:, 2] - self.triangles[:, 0])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        verts = self.triangles.reshape(-1, 3)
        return verts.min(axis=0), verts.max(axis=0)

    @property
    def diagonal(self) -> float:
        lo, hi = self.bounds()
        return float(np.linalg.norm(hi - lo))

    def bounding_sphere_radius(self) -> float:
        lo, hi = self.bounds()
        center = 0.5 * (lo + hi)
        return float(np.max(np.linalg.norm(self.triangles.reshape(-1, 3) - center, axis=1)))

    def translated(self, offset: Vec3) -> "SceneObject":
        return SceneObject(self.triangles + offset.to_array(), self.feature)

    def grid(self) -> "TriangleGrid":
        if self._grid is None:
            self._grid = TriangleGrid(self)
        return self._grid


@dataclass(frozen=True)
class Camera:
    """Pinhole camera attached at a pose; body +x is the optical axis."""

    pose: Pose
    hfov: float = 1.2217
    vfov: float = 1.2217
    max_range: float = 1.5
    width: int = 320
    height: int = 320

    def __post_init__(self):
        if not (0 < self.hfov < math.pi and 0 < self.vfov < math.pi):
            raise BadConfig("field of view must lie in (0, pi)")
        if self.max_range <= 0 or self.width < 1 or self.height < 1:
            raise BadConfig("camera range and resolution must be positive")


def _quad(p00, p10, p11, p01, outward) -> list[np.ndarray]:
    """Two triangles covering a quad, wound so face normals follow `outward`."""
    t1 = np.array([p00, p10, p11])
    t2 = np.array([p00, p11, p01])
    n = np.cross(t1[1] - t1[0], t1[2] - t1[0])
    if np.dot(n, outward) < 0:
        t1 = t1[::-1]
        t2 = t2[::-1]
    return [t1, t2]


def _grid_cells(lo: float, hi: float, cuts: list[float]) -> list[tuple[float, float]]:
    edges = sorted({lo, hi, *cuts})
    return [(edges[i], edges[i + 1]) for i in range(len(edges) - 1) if edges[i + 1] - edges[i] > 1e-12]


def _face_with_recesses(origin, u_dir, v_dir, normal, u_len, v_len, recesses, depth):
    """Triangulate a rectangular face with rectangular recesses cut into it.

    `recesses` holds (u0, u1, v0, v1) openings in face-local coordinates
    (face spans [-u_len/2, u_len/2] x [-v_len/2, v_len/2]). Returns
    (flat_triangles, recess_triangles).
    """
    origin = np.asarray(origin, dtype=float)
    u_dir = np.asarray(u_dir, dtype=float)
    v_dir = np.asarray(v_dir, dtype=float)
    normal = np.asarray(normal, dtype=float)

    def at(u, v, d=0.0):
        return origin + u * u_dir + v * v_dir - d * normal

    u_cuts = [c for r in recesses for c in (r[0], r[1])]
    v_cuts = [c for r in recesses for c in (r[2], r[3])]
    flat, recessed = [], []
    for u0, u1 in _grid_cells(-u_len / 2, u_len / 2, u_cuts):
        for v0, v1 in _grid_cells(-v_len / 2, v_len / 2, v_cuts):
            cu, cv = 0.5 * (u0 + u1), 0.5 * (v0 + v1)
            inside = any(r[0] <= cu <= r[1] and r[2] <= cv <= r[3] for r in recesses)
            if not inside:
                flat += _quad(at(u0, v0), at(u1, v0), at(u1, v1), at(u0, v1), normal)
    for u0, u1, v0, v1 in recesses:
        # Floor, facing outward like the parent face.
        recessed += _quad(at(u0, v0, depth), at(u1, v0, depth), at(u1, v1, depth), at(u0, v1, depth), normal)
        # Four interior walls, facing into the cavity.
        recessed += _quad(at(u0, v0), at(u0, v1), at(u0, v1, depth), at(u0, v0, depth), u_dir)
        recessed += _quad(at(u1, v0), at(u1, v1), at(u1, v1, depth), at(u1, v0, depth), -u_dir)
        recessed += _quad(at(u0, v0), at(u1, v0), at(u1, v0, depth), at(u0, v0, depth), v_dir)
        recessed += _quad(at(u0, v1), at(u1, v1), at(u1, v1, depth), at(u0, v1, depth), -v_dir)
    return flat, recessed


FLAT_FEATURE = 0.4
RECESS_FEATURE = 0.9


def build_engraved_box(dims: Vec3, engraving_depth: float, seed: int = 0) -> SceneObject:
    """Box centered at the origin with recessed rectangles on its two largest faces.

    The recess layouts on the two faces differ, so the object has no proper
    rotational symmetry; recess triangles carry feature strength 0.9 and all
    flat faces 0.4. A zero depth yields the plain 12-triangle box.
    """
    d = dims.to_array()
    if np.any(d <= 0):
        raise BadConfig(f"box dimensions must be positive, got {tuple(d)}")
    if engraving_depth < 0:
        raise BadConfig("engraving depth must be non-negative")
    if engraving_depth > 0 and engraving_depth >= d.min() / 2:
        raise BadConfig("engraving depth must be smaller than half the smallest dimension")

    rng = np.random.default_rng(seed)
    axes = np.eye(3)
    k = int(np.argmin(d))  # largest faces are perpendicular to the smallest extent
    u_axis, v_axis = [i for i in range(3) if i != k]
    u_len, v_len = d[u_axis], d[v_axis]

    def recess_row(specs):
        out = []
        for center_u, width_u, center_v, height_v in specs:
            w = width_u * u_len * rng.uniform(0.9, 1.1)
            h = height_v * v_len * rng.uniform(0.9, 1.1)
            cu, cv = center_u * u_len, center_v * v_len
            out.append((cu - w / 2, cu + w / 2, cv - h / 2, cv + h / 2))
        return out

    # Distinct layouts per face stand in for the engraved lettering.
    front_recesses = recess_row([(-0.28, 0.16, 0.0, 0.5), (0.0, 0.16, 0.0, 0.5), (0.28, 0.16, 0.0, 0.5)])
    back_recesses = recess_row([(-0.2, 0.18, 0.1, 0.45), (0.25, 0.12, -0.05, 0.6)])

    triangles, feature = [], []

    def add(tris, strength):
        triangles.extend(tris)
        feature.extend([strength] * len(tris))

    for axis in range(3):
        for sign in (1.0, -1.0):
            normal = sign * axes[axis]
            origin = normal * d[axis] / 2
            ua, va = [i for i in range(3) if i != axis]
            u_dir, v_dir = axes[ua], axes[va]
            if axis == k and engraving_depth > 0:
                recesses = front_recesses if sign > 0 else back_recesses
                flat, recessed = _face_with_recesses(
                    origin, u_dir, v_dir, normal, d[ua], d[va], recesses, engraving_depth
                )
                add(flat, FLAT_FEATURE)
                add(recessed, RECESS_FEATURE)
            else:
                ul, vl = d[ua] / 2, d[va] / 2
                corners = [
                    origin - ul * u_dir - vl * v_dir,
                    origin + ul * u_dir - vl * v_dir,
                    origin + ul * u_dir + vl * v_dir,
                    origin - ul * u_dir + vl * v_dir,
                ]
                add(_quad(*corners, normal), FLAT_FEATURE)

    return SceneObject(np.array(triangles), np.array(feature))


# Stacked-segment silhouette for the tall anatomical stand-in: fractional
# segment heights, radius factors, and lateral offsets (in units of radius).
TALL_SEGMENTS = [
    (0.22, 1.00, 0.00),
    (0.18, 0.75, 0.30),
    (0.25, 0.95, -0.20),
    (0.20, 0.70, 0.25),
    (0.15, 0.50, 0.00),
]


def build_tall_object(height: float, radius: float, feature_strength: float = 0.15, sides: int = 16) -> SceneObject:
    """Stacked-cylinder approximation of a tall, low-contrast object.

    Every triangle carries the same (low) feature strength, modeling a
    surface with few usable visual features.
    """
    if height <= 0 or radius <= 0:
        raise BadConfig("height and radius must be positive")
    if not 0 <= feature_strength <= 1:
        raise BadConfig("feature strength must lie in [0, 1]")
    if sides < 3:
        raise BadConfig("sides must be >= 3")

    angles = np.linspace(0, 2 * math.pi, sides, endpoint=False)
    ring = np.stack([np.cos(angles), np.sin(angles), np.zeros(sides)], axis=1)
    triangles = []
    z0 = -height / 2
    for frac, rfac, xoff in TALL_SEGMENTS:
        z1 = z0 + frac * height
        r = radius * rfac
        center = np.array([xoff * radius, 0.0, 0.0])
        lower = ring * r + center + [0, 0, z0]
        upper = ring * r + center + [0, 0, z1]
        for i in range(sides):
            j = (i + 1) % sides
            outward = ring[i] + ring[j]
            triangles += _quad(lower[i], lower[j], upper[j], upper[i], outward)
        # End caps per segment; interior ones model the ledges between segments.
        c_lo = center + [0, 0, z0]
        c_hi = center + [0, 0, z1]
        for i in range(sides):
            j = (i + 1) % sides
            triangles.append(np.array([c_lo, lower[j], lower[i]]))
            triangles.append(np.array([c_hi, upper[i], upper[j]]))
        z0 = z1
    tris = np.array(triangles)
    return SceneObject(tris, np.full(len(tris), float(feature_strength)))


def sample_surface(obj: SceneObject, n: int, seed: int = 0) -> PointCloud:
    """Area-weighted surface samples with outward normals and feature strengths."""
    if n < 1:
        raise BadConfig("sample count must be >= 1")
    rng = np.random.default_rng(seed)
    areas = obj.areas
    tri_idx = rng.choice(len(obj), size=n, p=areas / areas.sum())
    u = np.sqrt(rng.random(n))
    v = rng.random(n)
    a = obj.triangles[tri_idx, 0]
    b = obj.triangles[tri_idx, 1]
    c = obj.triangles[tri_idx, 2]
    pts = (1 - u)[:, None] * a + (u * (1 - v))[:, None] * b + (u * v)[:, None] * c
    return PointCloud(pts, obj.normals[tri_idx], obj.feature[tri_idx])


class TriangleGrid:
    """Uniform spatial grid over an object's triangles for occlusion rays.

    Cell size is the object diagonal / 32. Triangles are registered in every
    cell their bounding box overlaps, expanded by half a cell so that a ray
    sampled at half-cell steps can never miss a cell containing a hit.
    """

    def __init__(self, obj: SceneObject, cells_per_diagonal: int = GRID_CELLS_PER_DIAGONAL):
        lo, hi = obj.bounds()
        self.cell = obj.diagonal / cells_per_diagonal
        pad = self.cell
        self.lo = lo - pad
        self.shape = np.maximum(np.ceil((hi + pad - self.lo) / self.cell).astype(int), 1)
        self.triangles = obj.triangles
        nx, ny, nz = self.shape
        margin = 0.5 * self.cell
        t_lo = obj.triangles.min(axis=1) - margin
        t_hi = obj.triangles.max(axis=1) + margin
        c_lo = np.clip(((t_lo - self.lo) / self.cell).astype(int), 0, self.shape - 1)
        c_hi = np.clip(((t_hi - self.lo) / self.cell).astype(int), 0, self.shape - 1)
        buckets: dict[int, list[int]] = {}
        for t in range(len(obj)):
            for ix in range(c_lo[t, 0], c_hi[t, 0] + 1):
                for iy in range(c_lo[t, 1], c_hi[t, 1] + 1):
                    for iz in range(c_lo[t, 2], c_hi[t, 2] + 1):
                        buckets.setdefault((ix * ny + iy) * nz + iz, []).append(t)
        ncells = int(nx * ny * nz)
        counts = np.zeros(ncells + 1, dtype=np.int64)
        for cell_id, tri_list in buckets.items():
            counts[cell_id + 1] = len(tri_list)
        self.cell_start = np.cumsum(counts)
        self.cell_tris = np.empty(self.cell_start[-1], dtype=np.int64)
        for cell_id, tri_list in buckets.items():
            s = self.cell_start[cell_id]
            self.cell_tris[s : s + len(tri_list)] = tri_list

    def _candidate_pairs(self, origin: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(ray_index, triangle_index) pairs whose grid cells the rays traverse."""
        n_rays = len(targets)
        seg = targets - origin
        lengths = np.linalg.norm(seg, axis=1)
        max_len = lengths.max(initial=0.0)
        n_samples = max(int(np.ceil(max_len / (0.5 * self.cell))) + 1, 2)
        ts = np.linspace(0.0, 1.0, n_samples)
        samples = origin + seg[:, None, :] * ts[None, :, None]
        coords = np.floor((samples.reshape(-1, 3) - self.lo) / self.cell).astype(np.int64)
        valid = np.all((coords >= 0) & (coords < self.shape), axis=1)
        nx, ny, nz = self.shape
        flat = (coords[:, 0] * ny + coords[:, 1]) * nz + coords[:, 2]
        flat = flat[valid]
        ray_of_sample = np.repeat(np.arange(n_rays), n_samples)[valid]
        counts = (self.cell_start[flat + 1] - self.cell_start[flat]).astype(np.int64)
        keep = counts > 0
        flat, ray_of_sample, counts = flat[keep], ray_of_sample[keep], counts[keep]
        if len(flat) == 0:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
        offsets = np.repeat(self.cell_start[flat], counts) + _ranges(counts)
        tri_ids = self.cell_tris[offsets]
        ray_ids = np.repeat(ray_of_sample, counts)
        packed = np.unique(ray_ids * len(self.triangles) + tri_ids)
        return packed // len(self.triangles), packed % len(self.triangles)

    def occluded(self, origin: np.ndarray, targets: np.ndarray, eps: float = OCCLUSION_EPS) -> np.ndarray:
        """True per target when a triangle blocks the segment origin->target."""
        targets = np.atleast_2d(targets)
        ray_ids, tri_ids = self._candidate_pairs(origin, targets)
        blocked = np.zeros(len(targets), dtype=bool)
        if len(ray_ids) == 0:
            return blocked
        seg = targets[ray_ids] - origin
        t_max = np.linalg.norm(seg, axis=1)
        direction = seg / t_max[:, None]
        tris = self.triangles[tri_ids]
        hit, t = _moller_trumbore(origin, direction, tris)
        early = hit & (t > 1e-9) & (t < t_max - eps)
        blocked[ray_ids[early]] = True
        return blocked


def _ranges(counts: np.ndarray) -> np.ndarray:
    """[0..c0-1, 0..c1-1, ...] for the given counts."""
    total = int(counts.sum())
    out = np.arange(total)
    out -= np.repeat(np.concatenate([[0], np.cumsum(counts)[:-1]]), counts)
    return out


def _moller_trumbore(origin: np.ndarray, directions: np.ndarray, tris: np.ndarray):
    """Vectorized ray/triangle intersection; one triangle per direction row."""
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    h = np.cross(directions, e2)
    det = np.einsum("ij,ij->i", e1, h)
    ok = np.abs(det) > 1e-12
    inv = np.where(ok, det, 1.0)
    s = origin - tris[:, 0]
    u = np.einsum("ij,ij->i", s, h) / inv
    q = np.cross(s, e1)
    v = np.einsum("ij,ij->i", directions, q) / inv
    t = np.einsum("ij,ij->i", e2, q) / inv
    hit = ok & (u >= -1e-9) & (v >= -1e-9) & (u + v <= 1 + 1e-9)
    return hit, t


def frustum_mask(cloud_points: np.ndarray, cam: Camera) -> np.ndarray:
    """Points inside the camera frustum and within max range."""
    pos = cam.pose.position.to_array()
    rot = cam.pose.orientation
    d = np.atleast_2d(cloud_points) - pos
    z_f = d @ rot[:, 0]
    lat = d @ rot[:, 1]
    vert = d @ rot[:, 2]
    dist = np.linalg.norm(d, axis=1)
    mask = z_f > 1e-12
    mask &= np.abs(lat) <= math.tan(cam.hfov / 2) * z_f
    mask &= np.abs(vert) <= math.tan(cam.vfov / 2) * z_f
    mask &= dist <= cam.max_range
    return mask


def visible_points(cloud: PointCloud, obj: SceneObject, cam: Camera) -> np.ndarray:
    """Indices of cloud points visible to the camera.

    A point is visible when it is inside the frustum, within range,
    front-facing (normal . view direction < 0), and no triangle blocks the
    ray from the camera strictly before the point (epsilon 1e-4 m).
    """
    if cloud.normals is None:
        raise ValueError("visible_points requires a cloud with normals")
    if len(cloud) == 0:
        return np.empty(0, dtype=np.int64)
    pos = cam.pose.position.to_array()
    mask = frustum_mask(cloud.points, cam)
    d = cloud.points - pos
    dist = np.linalg.norm(d, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        facing = np.einsum("ij,ij->i", cloud.normals, d) < -1e-12 * dist
    mask &= facing
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        return idx
    blocked = obj.grid().occluded(pos, cloud.points[idx])
    return idx[~blocked]
