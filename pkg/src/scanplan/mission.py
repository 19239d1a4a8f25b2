"""Mission engine: runs a configured scanning mission deterministically.

The loop follows the system's control flow: take-off at the start waypoint,
an initial two-image pair with a small lateral drift, waypoint following
with hover-and-capture, batched near-real-time merging on section exits and
idles, coverage-driven replanning (dynamic modes), and landing once the plan
or coverage goal is exhausted. All randomness comes from named substreams of
the mission seed; wall-clock time appears only in latency measurements.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .align import FusionResult, fuse_camera_poses
from .capture import (
    CameraSpec,
    GaugeTransform,
    Observation,
    SfmModel,
    capture_observation,
    draw_gauge,
    initial_pair,
    sfm_register,
)
from .config import MissionConfig
from .errors import BadConfig
from .geometry import PointCloud, Pose, Vec3, wrap_angle
from .planner import PlannerConfig, PlannerMode, Waypoint, choose_dynamic, next_waypoint_static
from .reconstruct import (
    ClusterParams,
    InstantCloud,
    SliceCoverageReport,
    SliceModel,
    TriggerPolicy,
    calibrate_threshold,
    coverage_report,
    filter_background,
    merge_batch,
    should_trigger,
    slice_of_position,
)
from .scene import SceneObject, build_engraved_box, build_tall_object, sample_surface
from .uav import TrajectoryPlan, UavState, UwbNoiseModel, UwbTracker, plan_static_circles, step
from . import ply

# Substream tags for per-purpose rng derivation from the mission seed.
_RNG_GAUGE = 11
_RNG_UWB = 21  # + uav id
_RNG_CAPTURE = 31  # + uav id
_RNG_SFM = 41  # + uav id

YAW_SETTLE_TOL = 0.02
MAX_SIM_TIME = 3600.0


@dataclass(frozen=True)
class TriggerRecord:
    trigger_id: int
    reason: str
    batch_size: int
    scores: tuple[int, ...]
    latency_s: float


@dataclass(frozen=True)
class PlannerRecord:
    t: float
    uav_id: int
    chosen_slice: int  # -1 when not slice-directed (init pair / landing)
    reason: str


@dataclass
class RunResult:
    """Everything a mission produces, independent of any on-disk layout."""

    config: MissionConfig
    observations: list[Observation]
    final_cloud: PointCloud
    used_obs_ids: list[int]
    images_taken: int
    images_used: int
    instant: InstantCloud
    final_report: SliceCoverageReport | None
    tau: float
    trigger_log: list[TriggerRecord]
    planner_log: list[PlannerRecord]
    flight_log: list[tuple]
    gauge: GaugeTransform
    fusion: FusionResult | None
    object_diagonal: float
    sim_duration: float

    @property
    def latencies(self) -> list[float]:
        return [rec.latency_s for rec in self.trigger_log]


def build_object(cfg: MissionConfig) -> SceneObject:
    oc = cfg.object
    if cfg.mission.object == "engraved_box":
        obj = build_engraved_box(
            Vec3(oc.box_dx, oc.box_dy, oc.box_dz), oc.engraving_depth, seed=cfg.mission.seed
        )
    else:
        obj = build_tall_object(oc.tall_height, oc.tall_radius, oc.tall_feature)
    return obj.translated(Vec3(oc.center_x, oc.center_y, oc.center_z))


def scan_center(cfg: MissionConfig) -> Vec3:
    return Vec3(cfg.object.center_x, cfg.object.center_y, cfg.object.center_z)


@dataclass
class _UavRuntime:
    state: UavState
    tracker: UwbTracker
    plan: TrajectoryPlan
    requests: list[tuple[Vec3, float]]
    altitude: float
    capture_rng: np.random.Generator
    sfm_rng: np.random.Generator
    target: Waypoint | None = None
    arrived_at: float | None = None
    next_capture: float = 0.0
    burst_left: int = 0
    last_plan_version: int = -1
    active: bool = True
    waiting_for_report: bool = False
    first_circle_len: int = 0

    def first_circle_done(self) -> bool:
        return not self.requests and self.plan.cursor >= self.first_circle_len


class _Mission:
    def __init__(self, cfg: MissionConfig, out_dir=None):
        cfg.validate()
        self.cfg = cfg
        self.out_dir = out_dir
        self.seed = cfg.mission.seed
        self.obj = build_object(cfg)
        self.center = scan_center(cfg)
        self.gt = sample_surface(self.obj, cfg.object.gt_samples, seed=self.seed)
        self.model = SliceModel(self.center, cfg.reconstruct.slices, cfg.reconstruct.regions)
        self.gauge = draw_gauge(
            np.random.default_rng([self.seed, _RNG_GAUGE]),
            (cfg.capture.gauge_scale_min, cfg.capture.gauge_scale_max),
            cfg.capture.gauge_translation,
        )
        self.sfm_model = SfmModel(
            p_base=cfg.capture.sfm_p_base,
            f_ref=cfg.capture.sfm_f_ref,
            rot_noise_rad=math.radians(cfg.capture.sfm_rot_noise_deg),
            pos_noise_m=cfg.capture.sfm_pos_noise_frac * self.obj.diagonal,
        )
        self.cam_spec = CameraSpec(
            cfg.capture.hfov,
            cfg.capture.vfov,
            cfg.capture.max_range,
            cfg.capture.resolution,
            cfg.capture.resolution,
        )
        self.voxel = self.obj.diagonal / cfg.reconstruct.voxel_divisor
        self.r_max = cfg.reconstruct.r_max or 1.5 * self.obj.bounding_sphere_radius()
        # The merged cloud is quantized twice: by the voxel grid and by the
        # fixed ground-truth sampling. Clustering must bridge both scales or
        # the object shatters into per-sample noise blobs.
        gt_spacing = math.sqrt(self.obj.areas.sum() / max(cfg.object.gt_samples, 1))
        self.cluster_params = ClusterParams(
            cfg.reconstruct.cluster_distance or None,
            cfg.reconstruct.cluster_min_size,
            cfg.reconstruct.cluster_spacing_factor,
            floor=cfg.reconstruct.cluster_floor_factor * max(self.voxel, gt_spacing),
        )
        self.policy = TriggerPolicy(cfg.reconstruct.time_threshold, cfg.reconstruct.min_batch)
        self.planner_cfg = PlannerConfig(
            radius=cfg.flight.radius,
            altitude=self.center.z,
            mode=PlannerMode.DYNAMIC if cfg.is_dynamic else PlannerMode.STATIC,
            max_visits_per_slice=cfg.planner.max_visits_per_slice,
            altitude_offset=cfg.flight.altitude_offset,
            adapt_from_start=cfg.planner.adapt_from_start,
            image_budget=cfg.planner.image_budget,
        )
        self.visit_counts = np.zeros(self.model.slice_count, dtype=int)
        self.tau: float | None = (
            cfg.reconstruct.tau_value if cfg.reconstruct.tau_mode == "fixed" else None
        )
        self.ic = InstantCloud.empty()
        self.report: SliceCoverageReport | None = None
        self.report_version = 0
        self.last_merge_time = 0.0
        self.pending: list[Observation] = []
        self.observations: list[Observation] = []
        self.trigger_log: list[TriggerRecord] = []
        self.planner_log: list[PlannerRecord] = []
        self.flight_log: list[tuple] = []
        self.uavs = [self._init_uav(i) for i in range(cfg.mission.uav_count)]

    def _init_uav(self, uav_id: int) -> _UavRuntime:
        cfg = self.cfg
        altitude = self.center.z + (cfg.flight.altitude_offset if uav_id == 1 else 0.0)
        start_az = cfg.flight.start_azimuth + (math.pi if uav_id == 1 else 0.0)
        if self.planner_cfg.mode is PlannerMode.DYNAMIC:
            circles = 0 if cfg.planner.adapt_from_start else 1
        else:
            circles = cfg.flight.circles
        if circles > 0:
            plan = plan_static_circles(
                self.center, cfg.flight.radius, altitude, cfg.flight.waypoints_per_circle, circles, start_az
            )
            if self.planner_cfg.mode is PlannerMode.DYNAMIC and cfg.mission.uav_count > 1:
                # Opposed UAVs sweep the calibration circle collectively,
                # half each, before adaptation starts.
                plan = TrajectoryPlan(plan.waypoints[: cfg.flight.waypoints_per_circle // cfg.mission.uav_count])
        else:
            plan = TrajectoryPlan([])
        start = Vec3(
            self.center.x + cfg.flight.radius * math.cos(start_az),
            self.center.y + cfg.flight.radius * math.sin(start_az),
            altitude,
        )
        yaw = math.atan2(self.center.y - start.y, self.center.x - start.x)
        tracker = UwbTracker(
            UwbNoiseModel(cfg.flight.uwb_sigma, cfg.flight.uwb_bias_walk_sigma, cfg.flight.uwb_smoothing_alpha),
            np.random.default_rng([self.seed, _RNG_UWB + uav_id]),
        )
        pose = Pose.from_yaw(start, yaw)
        state = UavState(uav_id, pose, tracker.estimate(start, 0.0), 0.0)
        requests = initial_pair(state, cfg.capture.drift, self.center)
        return _UavRuntime(
            state=state,
            tracker=tracker,
            plan=plan,
            requests=list(requests),
            altitude=altitude,
            capture_rng=np.random.default_rng([self.seed, _RNG_CAPTURE + uav_id]),
            sfm_rng=np.random.default_rng([self.seed, _RNG_SFM + uav_id]),
            first_circle_len=min(cfg.flight.waypoints_per_circle, len(plan.waypoints)),
        )

    # -- planning ------------------------------------------------------------

    def _other_target_slice(self, uav_id: int) -> int | None:
        for u in self.uavs:
            if u.state.id != uav_id and u.active and u.target is not None:
                return u.target.slice_index
        return None

    def _hold_for_report(self, u: _UavRuntime) -> None:
        u.waiting_for_report = True
        u.target = Waypoint(u.state.true_pose.position, u.state.true_pose.yaw, None)
        u.burst_left = 0
        u.arrived_at = None

    def _request_target(self, u: _UavRuntime, now: float) -> None:
        if u.requests:
            pos, yaw = u.requests.pop(0)
            u.target = Waypoint(pos, yaw, None)
            u.burst_left = 1
            self.planner_log.append(PlannerRecord(now, u.state.id, -1, "init_pair"))
            u.arrived_at = None
            return
        wp = None
        static_wp = next_waypoint_static(u.plan)
        if static_wp is not None:
            pos, yaw = static_wp
            wp = Waypoint(pos, yaw, slice_of_position(pos, self.model))
            self.planner_log.append(PlannerRecord(now, u.state.id, wp.slice_index, "static"))
        elif self.planner_cfg.mode is PlannerMode.DYNAMIC:
            # Adaptation decisions follow reconstruction updates: hover until
            # the report is fresher than the one behind the last decision.
            if self.report is None or self.tau is None or self.report_version == u.last_plan_version:
                self._hold_for_report(u)
                return
            wp = choose_dynamic(
                self.report,
                u.state,
                self.planner_cfg,
                self.visit_counts,
                self.model,
                altitude=u.altitude,
                exclude=self._other_target_slice(u.state.id),
                covered_fallback=len(self.uavs) > 1,
            )
            u.last_plan_version = self.report_version
            if wp is not None:
                self.visit_counts[wp.slice_index] += 1
                self.planner_log.append(PlannerRecord(now, u.state.id, wp.slice_index, "dynamic"))
        if wp is None:
            u.active = False
            u.target = None
            self.planner_log.append(PlannerRecord(now, u.state.id, -1, "land"))
            return
        u.target = wp
        u.burst_left = self.cfg.capture.per_waypoint
        u.arrived_at = None

    # -- near-RT pipeline -----------------------------------------------------

    def _merge(self, reason: str, now: float) -> None:
        batch = sorted(self.pending, key=lambda o: (o.uav_id, o.timestamp, o.obs_id))
        started = time.perf_counter()
        self.ic = merge_batch(self.ic, batch, self.voxel)
        cloud = self.ic.cloud
        if len(cloud) > 0:
            est_centroid = Vec3.from_array(cloud.points.mean(axis=0))
            cloud = filter_background(cloud, est_centroid, self.r_max)
        tau = self.tau if self.tau is not None else math.inf
        report = coverage_report(cloud, self.model, self.cluster_params, tau)
        latency = time.perf_counter() - started
        self.report = report
        self.report_version += 1
        self.last_merge_time = now
        self.pending.clear()
        self.trigger_log.append(
            TriggerRecord(len(self.trigger_log), reason, len(batch), tuple(int(s) for s in report.scores), latency)
        )
        if self.out_dir is not None and self.cfg.io.save_instant_clouds:
            snap = self.out_dir / "instant" / f"trigger_{len(self.trigger_log) - 1:03d}.ply"
            ply.write_cloud(snap, self.ic.cloud)
        for u in self.uavs:
            if u.waiting_for_report:
                u.waiting_for_report = False
                u.target = None

    def _maybe_calibrate(self) -> None:
        if self.tau is not None or self.report is None:
            return
        circles_done = all(u.first_circle_done() for u in self.uavs)
        if self.cfg.planner.adapt_from_start and self.planner_cfg.mode is PlannerMode.DYNAMIC:
            circles_done = True
        if not circles_done:
            return
        self.tau = calibrate_threshold(self.report.scores, self.cfg.reconstruct.tau_fraction)
        self.report = SliceCoverageReport(
            self.report.scores, self.report.scores > self.tau, self.report.cluster_ids, self.tau
        )

    # -- main loop -------------------------------------------------------------

    def run(self) -> RunResult:
        cfg = self.cfg
        dt = cfg.flight.dt
        budget = cfg.planner.image_budget
        step_idx = 0
        budget_exhausted = False
        while any(u.active for u in self.uavs):
            now = step_idx * dt
            if now > MAX_SIM_TIME:
                raise RuntimeError("mission exceeded the simulation time cap")
            if budget_exhausted:
                break
            for u in self.uavs:
                if not u.active:
                    continue
                if u.target is None:
                    self._request_target(u, now)
                    if not u.active or u.target is None:
                        continue
                u.state = step(
                    u.state, (u.target.position, u.target.yaw), cfg.flight.speed, dt, cfg.flight.yaw_rate
                )
                est = u.tracker.estimate(u.state.true_pose.position, u.state.clock)
                u.state = replace(u.state, est_position=est)
                p = u.state.true_pose.position
                self.flight_log.append(
                    (u.state.clock, u.state.id, p.x, p.y, p.z, est.x, est.y, est.z, u.state.true_pose.yaw)
                )
                dist = (u.state.true_pose.position - u.target.position).norm()
                yaw_err = abs(wrap_angle(u.state.true_pose.yaw - u.target.yaw))
                if dist <= cfg.flight.arrival_tolerance and yaw_err <= YAW_SETTLE_TOL:
                    if u.arrived_at is None:
                        u.arrived_at = u.state.clock
                    if u.burst_left > 0 and not budget_exhausted and u.state.clock + 1e-9 >= u.next_capture:
                        self._capture(u)
                        u.burst_left -= 1
                        u.next_capture = u.state.clock + cfg.capture.interval
                        if budget and len(self.observations) >= budget:
                            budget_exhausted = True
                    if (
                        not u.waiting_for_report
                        and u.burst_left == 0
                        and u.arrived_at is not None
                        and u.state.clock - u.arrived_at >= cfg.flight.hover_s - 1e-9
                    ):
                        u.target = None
                        u.arrived_at = None
            now = (step_idx + 1) * dt
            regions = {
                u.state.id: self.model.region_of(slice_of_position(u.state.true_pose.position, self.model))
                for u in self.uavs
                if u.active
            }
            reason = should_trigger(self.pending, self.policy, now, regions, self.model)
            if reason is not None:
                self._merge(reason.value, now)
                self._maybe_calibrate()
            elif self.tau is None and self.cfg.reconstruct.tau_mode == "calibrated":
                if all(u.first_circle_done() for u in self.uavs) and len(self.pending) > 0:
                    self._merge("calibration_flush", now)
                    self._maybe_calibrate()
            elif (
                self.pending
                and all(u.waiting_for_report for u in self.uavs if u.active)
                and any(u.active for u in self.uavs)
                and now - self.last_merge_time > self.policy.time_threshold
            ):
                # Every UAV is parked waiting for a coverage update but the
                # pending batch is too small to trigger one; flush it so the
                # planner can move again.
                self._merge("planner_flush", now)
                self._maybe_calibrate()
            step_idx += 1
        final_time = step_idx * dt
        if self.pending:
            self._merge("final_flush", final_time)
            self._maybe_calibrate()
        return self._finalize(final_time)

    def _capture(self, u: _UavRuntime) -> None:
        obs = capture_observation(
            self.obj,
            self.gt,
            u.state,
            self.cam_spec,
            self.model,
            u.capture_rng,
            obs_id=len(self.observations),
            noise_sigma=self.cfg.capture.noise_sigma,
            point_budget=self.cfg.capture.point_budget,
        )
        obs = sfm_register(obs, self.gauge, self.sfm_model, u.sfm_rng)
        self.observations.append(obs)
        self.pending.append(obs)

    # -- outputs ----------------------------------------------------------------

    def _finalize(self, final_time: float) -> RunResult:
        fusion = None
        if self.cfg.uses_fusion:
            fusion = fuse_camera_poses(self.observations)
            used = [(o, f.pose, f.source.value) for o, f in zip(self.observations, fusion.poses)]
        else:
            used = [(o, o.sfm_pose, "sfm") for o in self.observations if o.sfm_pose is not None]
        final_cloud = self._assemble_final_cloud(used, fusion)
        report = self.report
        return RunResult(
            config=self.cfg,
            observations=self.observations,
            final_cloud=final_cloud,
            used_obs_ids=[o.obs_id for o, _, _ in used],
            images_taken=len(self.observations),
            images_used=len(used),
            instant=self.ic,
            final_report=report,
            tau=self.tau if self.tau is not None else math.nan,
            trigger_log=self.trigger_log,
            planner_log=self.planner_log,
            flight_log=self.flight_log,
            gauge=self.gauge,
            fusion=fusion,
            object_diagonal=self.obj.diagonal,
            sim_duration=final_time,
        )

    def _assemble_final_cloud(self, used, fusion) -> PointCloud:
        """Re-express each used observation's points through its estimated pose.

        Points were seen from the true pose; placing them with the estimated
        pose reproduces how pose error distorts a reconstruction. Registered
        poses keep the reconstruction's internal scale; substituted poses use
        the fitted frame transform's scale.
        """
        parts = []
        for obs, pose, source in used:
            if len(obs.points) == 0:
                continue
            scale = self.gauge.hidden.scale if source == "sfm" else fusion.transform.scale
            cam_pts = obs.true_pose.world_to_body(obs.points.points)
            gauge_pts = scale * cam_pts @ pose.orientation.T + pose.position.to_array()
            normals = None
            if obs.points.normals is not None:
                normals = (obs.points.normals @ obs.true_pose.orientation) @ pose.orientation.T
            parts.append(PointCloud(gauge_pts, normals, obs.points.feature_strength))
        if not parts:
            return PointCloud(np.zeros((0, 3)))
        return PointCloud.concatenate(parts)


def run_mission(cfg: MissionConfig, out_dir=None) -> RunResult:
    """Execute a mission; when out_dir is given, stream snapshots there too."""
    if out_dir is not None:
        out_dir = _prepare_dir(out_dir, cfg)
    result = _Mission(cfg, out_dir).run()
    if out_dir is not None:
        from . import runio

        runio.write_run(out_dir, result)
    return result


def _prepare_dir(out_dir, cfg: MissionConfig):
    from pathlib import Path

    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if cfg.io.save_instant_clouds:
            (out / "instant").mkdir(exist_ok=True)
        if cfg.io.save_observation_clouds:
            (out / "observations").mkdir(exist_ok=True)
    except OSError as exc:
        raise BadConfig(f"cannot create output directory {out}: {exc}") from exc
    return out
