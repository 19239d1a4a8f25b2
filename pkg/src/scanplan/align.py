"""Coordinate-frame recovery and fusion.

Recovers the arbitrary similarity between an SfM-style reconstruction frame
and the world frame: bounding-box scale estimate, PCA orientation with a
proper-sign candidate search, closed-form least-squares similarity fitting,
point-to-point ICP refinement, and UWB-substituted camera-pose fusion.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateGeometry, InsufficientAnchors, NoCorrespondences
from .geometry import (
    PointCloud,
    Pose,
    SimilarityTransform,
    Vec3,
    aabb,
    centroid,
    pca_axes,
    rotation_about_z,
)

# The 4 proper sign assignments for matched principal axes (det +1).
_PROPER_SIGNS = [np.diag(s) for s in ((1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1))]


def scale_from_aabb(source: PointCloud, target: PointCloud) -> float:
    """Scale estimate from the ratio of bounding-box diagonal lengths."""
    ds = aabb(source).diagonal
    dt = aabb(target).diagonal
    if ds <= 1e-9 or dt <= 1e-9:
        raise DegenerateGeometry("bounding box diagonal too small for a scale estimate")
    return dt / ds


def symmetric_chamfer(a: np.ndarray, b: np.ndarray) -> float:
    """Mean of the two directed mean nearest-neighbor distances."""
    da, _ = cKDTree(b).query(a)
    db, _ = cKDTree(a).query(b)
    return 0.5 * (float(da.mean()) + float(db.mean()))


def _subsample(pts: np.ndarray, cap: int) -> np.ndarray:
    if len(pts) <= cap:
        return pts
    idx = np.linspace(0, len(pts) - 1, cap).astype(int)
    return pts[idx]


def orient_pca(source: PointCloud, target: PointCloud, chamfer_cap: int = 1500) -> np.ndarray:
    """Rotation aligning the source principal axes to the target's.

    Principal axes leave four proper sign assignments open; the candidate
    minimizing symmetric chamfer distance (after scale and centroid
    translation) wins.
    """
    axes_s = pca_axes(source)
    axes_t = pca_axes(target)
    s = scale_from_aabb(source, target)
    c_s = centroid(source).to_array()
    c_t = centroid(target).to_array()
    src = _subsample(source.points, chamfer_cap)
    tgt = _subsample(target.points, chamfer_cap)
    best_rot, best_cost = None, math.inf
    for signs in _PROPER_SIGNS:
        rot = axes_t @ signs @ axes_s.T
        moved = s * (src - c_s) @ rot.T + c_t
        cost = symmetric_chamfer(moved, tgt)
        if cost < best_cost:
            best_cost, best_rot = cost, rot
    return best_rot


def umeyama_fit(source_pts, target_pts, with_scale: bool = True) -> SimilarityTransform:
    """Closed-form least-squares similarity minimizing sum |T(s_i) - t_i|^2."""
    x = np.asarray(source_pts, dtype=float).reshape(-1, 3)
    y = np.asarray(target_pts, dtype=float).reshape(-1, 3)
    if x.shape != y.shape:
        raise DegenerateGeometry("source/target pair counts differ")
    n = x.shape[0]
    if n < 3:
        raise DegenerateGeometry("need at least 3 point pairs")
    mu_x = x.mean(axis=0)
    mu_y = y.mean(axis=0)
    dx = x - mu_x
    dy = y - mu_y
    sing = np.linalg.svd(dx, compute_uv=False)
    if sing[1] <= sing[0] * 1e-9:
        raise DegenerateGeometry("source points are collinear")
    cov = dy.T @ dx / n
    u, d, vt = np.linalg.svd(cov)
    s = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[2, 2] = -1.0
    rot = u @ s @ vt
    if with_scale:
        var_x = (dx ** 2).sum() / n
        scale = float((d * np.diag(s)).sum() / var_x)
    else:
        scale = 1.0
    trans = mu_y - scale * rot @ mu_x
    return SimilarityTransform(scale, rot, Vec3.from_array(trans))


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 50
    tolerance: float = 1e-6
    with_scale: bool = True
    rejection_factor: float = 3.0
    max_pair_distance: float | None = None
    max_points: int | None = None


@dataclass(frozen=True)
class IcpResult:
    transform: SimilarityTransform
    rmse: float
    rmse_history: tuple[float, ...]


def icp_refine(
    source: PointCloud,
    target: PointCloud,
    init: SimilarityTransform,
    params: IcpParams = IcpParams(),
) -> IcpResult:
    """Point-to-point ICP with a closed-form similarity update per iteration.

    Correspondences beyond rejection_factor times the median pair distance
    (and beyond max_pair_distance, when set) are dropped each iteration.
    The rmse sequence over accepted iterations is non-increasing; an
    iteration that would increase it ends the loop instead.
    """
    if len(source) == 0 or len(target) == 0:
        raise NoCorrespondences("cannot align empty clouds")
    src = _subsample(source.points, params.max_points) if params.max_points else source.points
    tree = cKDTree(target.points)
    transform = init
    history: list[float] = []
    prev = math.inf
    for _ in range(params.max_iterations):
        moved = transform.apply_points(src)
        dist, nn = tree.query(moved)
        mask = np.ones(len(src), dtype=bool)
        if params.max_pair_distance is not None:
            mask &= dist <= params.max_pair_distance
        if not mask.any():
            raise NoCorrespondences("all correspondences rejected")
        med = float(np.median(dist[mask]))
        if med > 0:
            mask &= dist <= params.rejection_factor * med
        if not mask.any():
            raise NoCorrespondences("all correspondences rejected")
        matched_src = src[mask]
        matched_tgt = target.points[nn[mask]]
        try:
            candidate = umeyama_fit(matched_src, matched_tgt, params.with_scale)
        except DegenerateGeometry:
            break
        residual = candidate.apply_points(matched_src) - matched_tgt
        rmse = float(np.sqrt((residual ** 2).sum(axis=1).mean()))
        if rmse > prev:
            break
        transform = candidate
        history.append(rmse)
        if prev - rmse < params.tolerance:
            prev = rmse
            break
        prev = rmse
    final = history[-1] if history else _rmse_of(transform, src, tree)
    return IcpResult(transform, final, tuple(history))


def _rmse_of(transform: SimilarityTransform, src: np.ndarray, tree: cKDTree) -> float:
    dist, _ = tree.query(transform.apply_points(src))
    return float(np.sqrt((dist ** 2).mean()))


def align_clouds(
    source: PointCloud,
    target: PointCloud,
    icp_params: IcpParams = IcpParams(),
) -> IcpResult:
    """Full alignment chain: bounding-box scale, PCA orientation, ICP refinement."""
    s = scale_from_aabb(source, target)
    rot = orient_pca(source, target)
    trans = centroid(target).to_array() - s * rot @ centroid(source).to_array()
    init = SimilarityTransform(s, rot, Vec3.from_array(trans))
    return icp_refine(source, target, init, icp_params)


class PoseSource(enum.Enum):
    SFM = "sfm"
    UWB_SUBSTITUTED = "uwb_substituted"


@dataclass(frozen=True)
class FusedPose:
    obs_id: int
    pose: Pose
    source: PoseSource


@dataclass(frozen=True)
class FusionResult:
    poses: list[FusedPose]
    transform: SimilarityTransform
    fit_rmse: float


def fuse_camera_poses(observations, average_sources: bool = False) -> FusionResult:
    """Cover every observation with a camera pose in the SfM frame.

    Fits a similarity from UWB positions to SfM positions over the
    registered observations, keeps SfM poses where present, and maps the
    UWB position through the fit (yaw taken from the flight log) where
    registration failed. With average_sources the two position sources are
    averaged for registered observations.
    """
    anchors = [o for o in observations if o.sfm_pose is not None]
    if len(anchors) < 3:
        raise InsufficientAnchors(f"pose fusion needs >= 3 registered observations, got {len(anchors)}")
    uwb = np.array([o.uwb_position.to_array() for o in anchors])
    sfm = np.array([o.sfm_pose.position.to_array() for o in anchors])
    transform = umeyama_fit(uwb, sfm, with_scale=True)
    residual = transform.apply_points(uwb) - sfm
    fit_rmse = float(np.sqrt((residual ** 2).sum(axis=1).mean()))
    fused = []
    for o in observations:
        if o.sfm_pose is not None:
            pose = o.sfm_pose
            if average_sources:
                mapped = transform.apply_point(o.uwb_position).to_array()
                pose = Pose(
                    Vec3.from_array(0.5 * (pose.position.to_array() + mapped)),
                    pose.orientation,
                )
            fused.append(FusedPose(o.obs_id, pose, PoseSource.SFM))
        else:
            position = transform.apply_point(o.uwb_position)
            orientation = transform.rotation @ rotation_about_z(o.true_pose.yaw)
            fused.append(FusedPose(o.obs_id, Pose(position, orientation), PoseSource.UWB_SUBSTITUTED))
    return FusionResult(fused, transform, fit_rmse)
