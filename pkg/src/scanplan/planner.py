"""Waypoint selection: static plan advancement and coverage-driven adaptation."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import BadConfig
from .geometry import Vec3, azimuth_of
from .reconstruct import SliceCoverageReport, SliceModel
from .uav import TrajectoryPlan, UavState


class PlannerMode(enum.Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"


@dataclass(frozen=True)
class PlannerConfig:
    radius: float
    altitude: float
    mode: PlannerMode = PlannerMode.STATIC
    max_visits_per_slice: int = 4
    altitude_offset: float = 0.10
    adapt_from_start: bool = False
    image_budget: int = 0  # 0 -> unlimited

    def __post_init__(self):
        if self.radius <= 0 or self.altitude <= 0:
            raise BadConfig("radius and altitude must be positive")
        if self.max_visits_per_slice < 1:
            raise BadConfig("max_visits_per_slice must be >= 1")


@dataclass(frozen=True)
class Waypoint:
    position: Vec3
    yaw: float
    slice_index: int | None = None


def slice_waypoint(slice_index: int, model: SliceModel, cfg: PlannerConfig, altitude: float | None = None) -> Waypoint:
    """Viewpoint at the slice's central azimuth, at the flight radius, facing the center."""
    az = model.slice_center_azimuth(slice_index)
    pos = Vec3(
        model.center.x + cfg.radius * math.cos(az),
        model.center.y + cfg.radius * math.sin(az),
        cfg.altitude if altitude is None else altitude,
    )
    yaw = math.atan2(model.center.y - pos.y, model.center.x - pos.x)
    return Waypoint(pos, yaw, slice_index)


def _angular_distance(a: float, b: float) -> float:
    d = abs(a - b) % (2 * math.pi)
    return min(d, 2 * math.pi - d)


def _nearest_slice(slices, uav_azimuth: float, model: SliceModel) -> int:
    return min(slices, key=lambda s: (_angular_distance(model.slice_center_azimuth(s), uav_azimuth), s))


def choose_dynamic(
    report: SliceCoverageReport,
    state: UavState,
    cfg: PlannerConfig,
    visit_counts: np.ndarray,
    model: SliceModel,
    altitude: float | None = None,
    exclude: int | None = None,
    covered_fallback: bool = False,
) -> Waypoint | None:
    """Nearest under-covered slice with visit capacity, optionally excluding one.

    With covered_fallback, when the only eligible slices are excluded (taken
    by the other UAV), the lowest-score covered slice is revisited instead.
    """
    eligible = [s for s in report.uncovered_slices() if visit_counts[s] < cfg.max_visits_per_slice]
    remaining = [s for s in eligible if s != exclude]
    uav_az = azimuth_of(state.est_position.to_array()[:2], model.center.to_array()[:2])
    if remaining:
        return slice_waypoint(_nearest_slice(remaining, uav_az, model), model, cfg, altitude)
    if eligible and covered_fallback:
        covered = [
            s
            for s in range(model.slice_count)
            if report.covered[s] and visit_counts[s] < cfg.max_visits_per_slice and s != exclude
        ]
        if covered:
            chosen = min(covered, key=lambda s: (report.scores[s], s))
            return slice_waypoint(chosen, model, cfg, altitude)
    return None


def next_waypoint_dynamic(
    report: SliceCoverageReport,
    state: UavState,
    cfg: PlannerConfig,
    visit_counts: np.ndarray,
    model: SliceModel,
    altitude: float | None = None,
) -> Waypoint | None:
    """Pick the nearest under-covered slice still under its visit cap.

    None means the mission is complete: every slice is covered or its visit
    budget is spent.
    """
    return choose_dynamic(report, state, cfg, visit_counts, model, altitude)


def next_waypoint_static(plan: TrajectoryPlan) -> tuple[Vec3, float] | None:
    """Waypoint at the cursor, advancing it; None when the plan is exhausted."""
    if plan.cursor >= len(plan.waypoints):
        return None
    wp = plan.waypoints[plan.cursor]
    plan.cursor += 1
    return wp


def assign_dual(
    report: SliceCoverageReport,
    states: list[UavState],
    cfg: PlannerConfig,
    visit_counts: np.ndarray,
    model: SliceModel,
) -> list[Waypoint | None]:
    """Per-UAV dynamic waypoints for the two-UAV setup.

    UAV 0 picks first; UAV 1 takes the best remaining uncovered slice, or
    revisits the lowest-score covered slice when UAV 0 took the only one.
    UAV 1 flies with the configured altitude offset.
    """
    if len(states) != 2:
        raise BadConfig("assign_dual expects exactly 2 UAVs")
    first = choose_dynamic(report, states[0], cfg, visit_counts, model)
    second = choose_dynamic(
        report,
        states[1],
        cfg,
        visit_counts,
        model,
        altitude=cfg.altitude + cfg.altitude_offset,
        exclude=None if first is None else first.slice_index,
        covered_fallback=first is not None,
    )
    return [first, second]
