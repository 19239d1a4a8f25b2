"""Simulated image capture and the structure-from-motion surrogate.

A capture records the noisy surface points a camera can actually see plus
pose metadata. The SfM surrogate registers a capture into a hidden gauge
frame (an arbitrary similarity, as real reconstructions are only defined up
to one) with probability driven by the visible feature strength.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import BadConfig
from .geometry import PointCloud, Pose, SimilarityTransform, Vec3, random_rotation, rotation_about_z
from .reconstruct import SliceModel, slice_of_position
from .scene import Camera, SceneObject, visible_points


@dataclass(frozen=True)
class Observation:
    """One simulated image capture with its metadata."""

    obs_id: int
    uav_id: int
    timestamp: float
    true_pose: Pose
    uwb_position: Vec3
    points: PointCloud
    slice_index: int
    feature_score: float
    sfm_pose: Pose | None = None


@dataclass(frozen=True)
class GaugeTransform:
    """Hidden similarity mapping world coordinates into the SfM frame."""

    hidden: SimilarityTransform

    def __post_init__(self):
        if not 0.2 <= self.hidden.scale <= 5.0:
            raise BadConfig("gauge scale outside the supported [0.2, 5] range")


def draw_gauge(rng: np.random.Generator, scale_range=(0.5, 2.0), translation_extent=1.0) -> GaugeTransform:
    """Draw the per-mission gauge: scale U[0.5,2], uniform rotation, translation U[-1,1]^3."""
    scale = float(rng.uniform(*scale_range))
    rot = random_rotation(rng)
    trans = Vec3.from_array(rng.uniform(-translation_extent, translation_extent, 3))
    return GaugeTransform(SimilarityTransform(scale, rot, trans))


@dataclass(frozen=True)
class CameraSpec:
    """Camera intrinsics; the pose comes from the carrying UAV."""

    hfov: float = 1.2217
    vfov: float = 1.2217
    max_range: float = 1.5
    width: int = 320
    height: int = 320

    def at(self, pose: Pose) -> Camera:
        return Camera(pose, self.hfov, self.vfov, self.max_range, self.width, self.height)


def capture_observation(
    obj: SceneObject,
    ground_truth: PointCloud,
    state,
    spec: CameraSpec,
    slice_model: SliceModel,
    rng: np.random.Generator,
    obs_id: int,
    noise_sigma: float = 0.003,
    point_budget: int = 400,
) -> Observation:
    """Capture what the UAV's camera sees right now.

    Visible ground-truth samples are subsampled to the point budget and
    perturbed with isotropic Gaussian noise; the feature score is the mean
    feature strength of the visible points (0 when nothing is visible).
    """
    cam = spec.at(state.true_pose)
    idx = visible_points(ground_truth, obj, cam)
    feature_score = 0.0
    if len(idx) > 0 and ground_truth.feature_strength is not None:
        feature_score = float(ground_truth.feature_strength[idx].mean())
    if len(idx) > point_budget:
        idx = np.sort(rng.choice(idx, size=point_budget, replace=False))
    observed = ground_truth.subset(idx)
    if noise_sigma > 0 and len(observed) > 0:
        observed = PointCloud(
            observed.points + rng.normal(0.0, noise_sigma, observed.points.shape),
            observed.normals,
            observed.feature_strength,
        )
    return Observation(
        obs_id=obs_id,
        uav_id=state.id,
        timestamp=state.clock,
        true_pose=state.true_pose,
        uwb_position=state.est_position,
        points=observed,
        slice_index=slice_of_position(state.true_pose.position, slice_model),
        feature_score=feature_score,
    )


@dataclass(frozen=True)
class SfmModel:
    """Feature-driven registration success model.

    Success probability is clamp(feature_score / f_ref, 0, 1) * (1 - p_base);
    successful poses get small rotation/position noise before the gauge maps
    them into the SfM frame.
    """

    p_base: float = 0.005
    f_ref: float = 0.3
    rot_noise_rad: float = math.radians(0.5)
    pos_noise_m: float = 0.003

    def __post_init__(self):
        if not 0 <= self.p_base < 1:
            raise BadConfig("p_base must lie in [0, 1)")
        if self.f_ref <= 0:
            raise BadConfig("f_ref must be positive")

    def success_probability(self, feature_score: float) -> float:
        return min(max(feature_score / self.f_ref, 0.0), 1.0) * (1.0 - self.p_base)


def _perturb_pose(pose: Pose, rot_sigma: float, pos_sigma: float, rng: np.random.Generator) -> Pose:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.normal(0.0, rot_sigma) if rot_sigma > 0 else 0.0
    k = np.array(
        [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
    )
    rot = np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * (k @ k)
    jitter = rng.normal(0.0, pos_sigma, 3) if pos_sigma > 0 else np.zeros(3)
    return Pose(Vec3.from_array(pose.position.to_array() + jitter), rot @ pose.orientation)


def sfm_register(obs: Observation, gauge: GaugeTransform, model: SfmModel, rng: np.random.Generator) -> Observation:
    """Attempt SfM registration; on success the observation gains a gauge-frame pose."""
    u = rng.random()
    perturbed = _perturb_pose(obs.true_pose, model.rot_noise_rad, model.pos_noise_m, rng)
    if u >= model.success_probability(obs.feature_score):
        return obs
    return replace(obs, sfm_pose=gauge.hidden.apply_pose(perturbed))


def initial_pair(state, drift: float, look_at: Vec3) -> list[tuple[Vec3, float]]:
    """Two capture positions separated laterally by `drift`, both facing the target.

    The baseline pair seeds the reconstruction; zero drift gives no parallax
    and is rejected.
    """
    if drift <= 0:
        raise BadConfig("initial pair needs a positive lateral drift for parallax")
    p0 = state.true_pose.position.to_array()
    to_target = look_at.to_array() - p0
    to_target[2] = 0.0
    norm = np.linalg.norm(to_target)
    if norm < 1e-12:
        raise BadConfig("UAV is directly above the look-at target")
    lateral = np.cross([0.0, 0.0, 1.0], to_target / norm)
    p1 = p0 + drift * lateral
    requests = []
    for p in (p0, p1):
        yaw = math.atan2(look_at.y - p[1], look_at.x - p[0])
        requests.append((Vec3.from_array(p), yaw))
    return requests
