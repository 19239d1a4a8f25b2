"""Near-real-time reconstruction pipeline: trigger policy, incremental merging,
background filtering, Euclidean clustering, and per-slice coverage scoring.

The circular flight path is divided into K fixed angular slices (default 8)
grouped into contiguous regions (default 4); slices are the unit of coverage
accounting and regions the batching unit for reconstruction triggers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import BadConfig
from .geometry import PointCloud, Vec3, azimuths_of


@dataclass(frozen=True)
class SliceModel:
    """Angular partition of the flight circle about a vertical axis."""

    center: Vec3
    slice_count: int = 8
    region_count: int = 4

    def __post_init__(self):
        if self.slice_count < 1 or self.region_count < 1:
            raise BadConfig("slice and region counts must be positive")
        if self.slice_count % self.region_count != 0:
            raise BadConfig("slice count must be divisible by region count")

    @property
    def slice_width(self) -> float:
        return 2 * math.pi / self.slice_count

    def region_of(self, slice_index: int) -> int:
        return slice_index // (self.slice_count // self.region_count)

    def slice_center_azimuth(self, slice_index: int) -> float:
        return (slice_index + 0.5) * self.slice_width


def slice_of_azimuth(azimuth: float, model: SliceModel) -> int:
    """Slice index for an azimuth; the partition is exhaustive and disjoint."""
    a = azimuth % (2 * math.pi)
    return min(int(a / model.slice_width), model.slice_count - 1)


def slice_of_position(position: Vec3, model: SliceModel) -> int:
    d = position.to_array() - model.center.to_array()
    return slice_of_azimuth(math.atan2(d[1], d[0]), model)


@dataclass(frozen=True)
class InstantCloud:
    """Incrementally merged reconstruction used for planning."""

    cloud: PointCloud
    contributing_obs: tuple[int, ...] = ()
    last_update: float = 0.0

    @staticmethod
    def empty() -> "InstantCloud":
        return InstantCloud(PointCloud(np.zeros((0, 3))))


class TriggerReason(enum.Enum):
    SECTION_EXIT = "section_exit"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class TriggerPolicy:
    """When to fold pending captures into the instantaneous pointcloud."""

    time_threshold: float = 3.0
    min_batch: int = 2

    def __post_init__(self):
        if self.time_threshold <= 0:
            raise BadConfig("time_threshold must be positive")
        if self.min_batch < 2:
            raise BadConfig("min_batch must be >= 2 (two views are needed)")


def should_trigger(pending, policy: TriggerPolicy, now: float, uav_regions: dict[int, int], model: SliceModel):
    """Decide whether the pending observations should be merged now.

    Returns a TriggerReason or None. Section exit fires when any UAV has
    left the region its pending images were captured in; timeout fires when
    no image has arrived for longer than the threshold. Both require the
    minimum batch size (a pair of views).
    """
    if len(pending) < policy.min_batch:
        return None
    for obs in pending:
        current = uav_regions.get(obs.uav_id)
        if current is not None and model.region_of(obs.slice_index) != current:
            return TriggerReason.SECTION_EXIT
    if now - pending[-1].timestamp > policy.time_threshold:
        return TriggerReason.TIMEOUT
    return None


def _voxel_keys(points: np.ndarray, voxel: float) -> np.ndarray:
    coords = np.floor(points / voxel).astype(np.int64)
    # Pack three 21-bit signed cell coordinates into one key.
    return ((coords[:, 0] + (1 << 20)) << 42) | ((coords[:, 1] + (1 << 20)) << 21) | (coords[:, 2] + (1 << 20))


def merge_batch(ic: InstantCloud, batch, voxel: float) -> InstantCloud:
    """Concatenate a batch of observations into the cloud and voxel-thin it.

    One representative point is kept per voxel (the earliest in merge order,
    so already-merged points win over new ones). The batch must be sorted by
    (uav_id, timestamp).
    """
    if voxel <= 0:
        raise BadConfig("voxel size must be positive")
    if not batch:
        return ic
    clouds = [ic.cloud] + [obs.points for obs in batch]
    merged = PointCloud.concatenate(clouds)
    if len(merged) == 0:
        return replace(
            ic,
            contributing_obs=ic.contributing_obs + tuple(obs.obs_id for obs in batch),
            last_update=max(obs.timestamp for obs in batch),
        )
    keys = _voxel_keys(merged.points, voxel)
    _, first = np.unique(keys, return_index=True)
    keep = np.sort(first)
    return InstantCloud(
        merged.subset(keep),
        ic.contributing_obs + tuple(obs.obs_id for obs in batch),
        max(obs.timestamp for obs in batch),
    )


def filter_background(cloud: PointCloud, center: Vec3, r_max: float) -> PointCloud:
    """Keep points within r_max of the estimated object centroid (closed bound)."""
    if r_max <= 0:
        raise BadConfig("r_max must be positive")
    dist = np.linalg.norm(cloud.points - center.to_array(), axis=1)
    return cloud.subset(np.flatnonzero(dist <= r_max))


def cluster_euclidean(cloud: PointCloud, d: float, min_size: int = 1) -> list[np.ndarray]:
    """Single-linkage clusters under 'distance <= d' adjacency.

    Returns index arrays ordered by first appearance; components smaller
    than min_size are discarded as noise.
    """
    if d <= 0:
        raise BadConfig("cluster distance must be positive")
    n = len(cloud)
    if n == 0:
        return []
    tree = cKDTree(cloud.points)
    pairs = tree.query_pairs(d, output_type="ndarray")
    graph = sparse.coo_matrix(
        (np.ones(len(pairs), dtype=np.int8), (pairs[:, 0], pairs[:, 1])), shape=(n, n)
    )
    _, labels = connected_components(graph, directed=False)
    clusters = []
    for label in np.unique(labels):
        members = np.flatnonzero(labels == label)
        if len(members) >= min_size:
            clusters.append(members)
    return clusters


@dataclass(frozen=True)
class ClusterParams:
    """Spacing-relative clustering defaults; resolve() pins them to a cloud.

    `floor` guards voxel-thinned clouds: representatives in adjacent voxels
    can sit well beyond the median spacing, so callers that thinned the
    cloud themselves should floor the distance at ~2x their voxel size.
    """

    distance: float | None = None
    min_size: int = 10
    spacing_factor: float = 2.5
    floor: float = 0.0

    def resolve(self, cloud: PointCloud) -> float:
        if self.distance is not None:
            return self.distance
        if len(cloud) < 2:
            return max(1.0, self.floor)
        tree = cKDTree(cloud.points)
        nn_dist, _ = tree.query(cloud.points, k=2)
        median = float(np.median(nn_dist[:, 1]))
        spacing = self.spacing_factor * median if median > 0 else 1.0
        return max(spacing, self.floor)


@dataclass(frozen=True)
class SliceCoverageReport:
    scores: np.ndarray
    covered: np.ndarray
    cluster_ids: tuple
    threshold: float

    def uncovered_slices(self) -> np.ndarray:
        return np.flatnonzero(~self.covered)


def _in_arc(azimuths: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Membership in the half-open arc [lo, hi) on the circle."""
    a = np.asarray(azimuths) % (2 * math.pi)
    lo %= 2 * math.pi
    hi %= 2 * math.pi
    if lo <= hi:
        return (a >= lo) & (a < hi)
    return (a >= lo) | (a < hi)


def coverage_report(
    cloud: PointCloud,
    model: SliceModel,
    params: ClusterParams,
    threshold: float,
) -> SliceCoverageReport:
    """Score each slice by the point count of its most relevant cluster.

    A cluster is a candidate for a slice when it reaches into the slice arc
    widened by half a slice on each side (it is then part of the object
    visible from that slice's viewpoint); the largest candidate's points
    inside the un-widened arc are counted. The cloud is expected to be
    background-filtered already.
    """
    k = model.slice_count
    scores = np.zeros(k, dtype=int)
    cluster_ids: list[int | None] = [None] * k
    if len(cloud) > 0:
        d = params.resolve(cloud)
        clusters = cluster_euclidean(cloud, d, params.min_size)
        azim = azimuths_of(cloud.points, model.center.to_array())
        width = model.slice_width
        for s in range(k):
            lo, hi = s * width, (s + 1) * width
            candidates = [
                ci
                for ci, members in enumerate(clusters)
                if _in_arc(azim[members], lo - width / 2, hi + width / 2).any()
            ]
            if not candidates:
                continue
            best = max(candidates, key=lambda ci: (len(clusters[ci]), -ci))
            inside = _in_arc(azim[clusters[best]], lo, hi)
            scores[s] = int(inside.sum())
            cluster_ids[s] = best
    covered = scores > threshold
    return SliceCoverageReport(scores, covered, tuple(cluster_ids), float(threshold))


def calibrate_threshold(report_scores: np.ndarray, fraction: float = 0.6) -> float:
    """Object-independent coverage threshold: a fraction of the median slice score."""
    return float(fraction * np.median(report_scores))
