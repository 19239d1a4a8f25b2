"""UAV kinematics, static circular trajectories, and the UWB positioning noise model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BadConfig
from .geometry import Pose, Vec3, wrap_angle


@dataclass(frozen=True)
class UavState:
    """Snapshot of one UAV: ground-truth pose plus its own position estimate."""

    id: int
    true_pose: Pose
    est_position: Vec3
    clock: float = 0.0


@dataclass(frozen=True)
class UwbNoiseModel:
    """Per-axis Gaussian noise, slow random-walk bias, and exponential smoothing.

    Stands in for the filtered indoor positioning pipeline: raw ranging noise
    plus drift, with first-order smoothing instead of a full filter.
    """

    sigma: float = 0.05
    bias_walk_sigma: float = 0.005
    smoothing_alpha: float = 0.3

    def __post_init__(self):
        if self.sigma < 0 or self.bias_walk_sigma < 0:
            raise BadConfig("noise magnitudes must be non-negative")
        if not 0 < self.smoothing_alpha <= 1:
            raise BadConfig("smoothing_alpha must lie in (0, 1]")


class UwbTracker:
    """Stateful position estimator for one UAV; deterministic per rng stream."""

    def __init__(self, model: UwbNoiseModel, rng: np.random.Generator):
        self.model = model
        self.rng = rng
        self._bias = np.zeros(3)
        self._smoothed: np.ndarray | None = None
        self._last_time: float | None = None

    def estimate(self, true_position: Vec3, t: float = 0.0) -> Vec3:
        dt = 0.0 if self._last_time is None else max(t - self._last_time, 0.0)
        self._last_time = t
        if self.model.bias_walk_sigma > 0 and dt > 0:
            self._bias = self._bias + self.rng.normal(0.0, self.model.bias_walk_sigma * math.sqrt(dt), 3)
        raw = true_position.to_array() + self._bias + self.rng.normal(0.0, self.model.sigma, 3)
        if self._smoothed is None:
            self._smoothed = raw
        else:
            a = self.model.smoothing_alpha
            self._smoothed = a * raw + (1 - a) * self._smoothed
        return Vec3.from_array(self._smoothed)


@dataclass
class TrajectoryPlan:
    """Ordered waypoint list with a consumption cursor."""

    waypoints: list[tuple[Vec3, float]]
    cursor: int = 0

    def __post_init__(self):
        if self.cursor > len(self.waypoints):
            raise BadConfig("cursor beyond plan end")

    def remaining(self) -> int:
        return len(self.waypoints) - self.cursor


def plan_static_circles(
    center: Vec3,
    radius: float,
    altitude: float,
    waypoints_per_circle: int,
    circles: int,
    start_azimuth: float = 0.0,
) -> TrajectoryPlan:
    """Evenly spaced waypoints on circles around `center`, yaw facing the center."""
    if radius <= 0:
        raise BadConfig("radius must be positive")
    if waypoints_per_circle < 2:
        raise BadConfig("need at least 2 waypoints per circle")
    if circles < 1:
        raise BadConfig("need at least one circle")
    waypoints = []
    total = waypoints_per_circle * circles
    for k in range(total):
        az = start_azimuth + 2 * math.pi * k / waypoints_per_circle
        pos = Vec3(center.x + radius * math.cos(az), center.y + radius * math.sin(az), altitude)
        yaw = math.atan2(center.y - pos.y, center.x - pos.x)
        waypoints.append((pos, yaw))
    return TrajectoryPlan(waypoints)


def step(
    state: UavState,
    target: tuple[Vec3, float],
    speed: float,
    dt: float,
    yaw_rate: float = math.pi,
) -> UavState:
    """Advance the UAV toward the target waypoint by one time step.

    Moves along the straight line by min(speed*dt, remaining distance) and
    slews yaw toward the target yaw along the shorter arc; never overshoots.
    """
    if speed <= 0 or dt <= 0:
        raise BadConfig("speed and dt must be positive")
    target_pos, target_yaw = target
    pos = state.true_pose.position.to_array()
    delta = target_pos.to_array() - pos
    dist = float(np.linalg.norm(delta))
    if dist > 1e-15:
        travel = min(speed * dt, dist)
        pos = pos + delta * (travel / dist)
    yaw = state.true_pose.yaw
    dyaw = wrap_angle(target_yaw - yaw)
    max_turn = yaw_rate * dt
    yaw = target_yaw if abs(dyaw) <= max_turn else yaw + math.copysign(max_turn, dyaw)
    new_pose = Pose.from_yaw(Vec3.from_array(pos), wrap_angle(yaw))
    return replace(state, true_pose=new_pose, clock=state.clock + dt)
