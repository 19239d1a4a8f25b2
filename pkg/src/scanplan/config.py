"""Mission configuration: typed defaults, flat key=value parsing, env overrides.

The config file format is plain text with [section] headers and key = value
lines; unknown sections or keys are rejected. Any key can be overridden with
an environment variable SCANPLAN_<SECTION>_<KEY>.
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field, fields

from .errors import BadConfig

ENV_PREFIX = "SCANPLAN"

OBJECTS = ("engraved_box", "tall_object")
MODES = ("baseline", "location_aware", "dynamic_path", "integrated")
CAMERA_MODES = ("bw", "rgb")

# mode -> (dynamic trajectory?, UWB-substituted pose fusion?)
MODE_WIRING = {
    "baseline": (False, False),
    "location_aware": (False, True),
    "dynamic_path": (True, False),
    "integrated": (True, True),
}


@dataclass
class ObjectConfig:
    center_x: float = 0.0
    center_y: float = 0.0
    center_z: float = 1.0
    box_dx: float = 0.547
    box_dy: float = 0.203
    box_dz: float = 0.209
    engraving_depth: float = 0.04
    tall_height: float = 0.9
    tall_radius: float = 0.08
    tall_feature: float = 0.15
    gt_samples: int = 12000


@dataclass
class FlightConfig:
    radius: float = 0.5
    waypoints_per_circle: int = 40
    circles: int = 3
    start_azimuth: float = 0.0
    speed: float = 0.15
    dt: float = 0.1
    yaw_rate: float = math.pi
    arrival_tolerance: float = 0.05
    hover_s: float = 0.6
    altitude_offset: float = 0.10
    uwb_sigma: float = 0.05
    uwb_bias_walk_sigma: float = 0.005
    uwb_smoothing_alpha: float = 0.3


@dataclass
class CaptureConfig:
    interval: float = 0.5
    per_waypoint: int = 2
    noise_sigma: float = 0.002
    point_budget: int = 400
    drift: float = 0.05
    hfov: float = 1.2217
    vfov: float = 1.2217
    max_range: float = 1.5
    resolution: int = 320
    sfm_p_base: float = 0.005
    sfm_f_ref: float = 0.3
    sfm_rot_noise_deg: float = 0.5
    sfm_pos_noise_frac: float = 0.005
    gauge_scale_min: float = 0.5
    gauge_scale_max: float = 2.0
    gauge_translation: float = 1.0


@dataclass
class ReconstructConfig:
    slices: int = 8
    regions: int = 4
    voxel_divisor: float = 200.0
    time_threshold: float = 3.0
    min_batch: int = 2
    cluster_distance: float = 0.0  # 0 -> spacing-relative default
    cluster_min_size: int = 10
    cluster_spacing_factor: float = 2.5
    cluster_floor_factor: float = 2.2
    r_max: float = 0.0  # 0 -> 1.5 x ground-truth bounding-sphere radius
    tau_mode: str = "calibrated"
    tau_fraction: float = 0.6
    tau_value: float = 50.0


@dataclass
class PlannerSection:
    max_visits_per_slice: int = 4
    adapt_from_start: bool = False
    image_budget: int = 0  # 0 -> unlimited (plan-bound)


@dataclass
class EvaluateConfig:
    ring_count: int = 16
    ring_radius: float = 0.0  # 0 -> flight radius
    resolution: int = 320
    splat_px: int = 2
    wd_subsample: int = 256
    reference_samples: int = 8000
    icp_max_iterations: int = 50
    icp_max_points: int = 2000


@dataclass
class IoConfig:
    save_observation_clouds: bool = True
    save_instant_clouds: bool = True


@dataclass
class MissionSection:
    object: str = "engraved_box"
    uav_count: int = 1
    mode: str = "baseline"
    camera_mode: str = "bw"
    seed: int = 0


@dataclass
class MissionConfig:
    mission: MissionSection = field(default_factory=MissionSection)
    object: ObjectConfig = field(default_factory=ObjectConfig)
    flight: FlightConfig = field(default_factory=FlightConfig)
    capture: CaptureConfig = field(default_factory=CaptureConfig)
    reconstruct: ReconstructConfig = field(default_factory=ReconstructConfig)
    planner: PlannerSection = field(default_factory=PlannerSection)
    evaluate: EvaluateConfig = field(default_factory=EvaluateConfig)
    io: IoConfig = field(default_factory=IoConfig)

    def validate(self) -> "MissionConfig":
        m = self.mission
        if m.object not in OBJECTS:
            raise BadConfig(f"unknown object '{m.object}' (choose from {OBJECTS})")
        if m.mode not in MODES:
            raise BadConfig(f"unknown mode '{m.mode}' (choose from {MODES})")
        if m.camera_mode not in CAMERA_MODES:
            raise BadConfig(f"unknown camera_mode '{m.camera_mode}' (choose from {CAMERA_MODES})")
        if m.uav_count not in (1, 2):
            raise BadConfig("uav_count must be 1 or 2")
        if self.reconstruct.tau_mode not in ("calibrated", "fixed"):
            raise BadConfig("tau_mode must be 'calibrated' or 'fixed'")
        if self.flight.circles < 1 or self.flight.waypoints_per_circle < 2:
            raise BadConfig("flight plan needs >= 1 circle and >= 2 waypoints per circle")
        return self

    @property
    def is_dynamic(self) -> bool:
        return MODE_WIRING[self.mission.mode][0]

    @property
    def uses_fusion(self) -> bool:
        return MODE_WIRING[self.mission.mode][1]


def _coerce(raw: str, target_type, where: str):
    raw = raw.strip()
    try:
        if target_type is bool:
            lowered = raw.lower()
            if lowered in ("true", "yes", "1", "on"):
                return True
            if lowered in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
        return raw
    except ValueError:
        raise BadConfig(f"{where}: cannot parse '{raw}' as {target_type.__name__}") from None


def _sections(cfg: MissionConfig) -> dict[str, object]:
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}


def parse_config_text(text: str, base: MissionConfig | None = None) -> MissionConfig:
    """Parse key=value text with [section] headers over the defaults."""
    cfg = base if base is not None else MissionConfig()
    cfg = dataclasses.replace(cfg, **{f.name: dataclasses.replace(getattr(cfg, f.name)) for f in fields(cfg)})
    sections = _sections(cfg)
    current: str | None = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip()
            if current not in sections:
                raise BadConfig(f"line {lineno}: unknown section [{current}]")
            continue
        if "=" not in stripped:
            raise BadConfig(f"line {lineno}: expected key = value, got '{stripped}'")
        if current is None:
            raise BadConfig(f"line {lineno}: key outside any [section]")
        key, _, value = stripped.partition("=")
        key = key.strip()
        section_obj = sections[current]
        if key not in {f.name for f in fields(section_obj)}:
            raise BadConfig(f"line {lineno}: unknown key '{key}' in [{current}]")
        setattr(section_obj, key, _coerce(value, type(getattr(section_obj, key)), f"[{current}] {key}"))
    return cfg


def apply_env_overrides(cfg: MissionConfig, environ=None) -> MissionConfig:
    """Override any key with SCANPLAN_<SECTION>_<KEY> from the environment."""
    environ = os.environ if environ is None else environ
    for section_name, section_obj in _sections(cfg).items():
        for f in fields(section_obj):
            var = f"{ENV_PREFIX}_{section_name.upper()}_{f.name.upper()}"
            if var in environ:
                setattr(
                    section_obj,
                    f.name,
                    _coerce(environ[var], type(getattr(section_obj, f.name)), var),
                )
    return cfg


def load_config(path, environ=None) -> MissionConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise BadConfig(f"cannot read config {path}: {exc}") from exc
    cfg = parse_config_text(text)
    cfg = apply_env_overrides(cfg, environ)
    return cfg.validate()


def render_config(cfg: MissionConfig) -> str:
    """Serialize the resolved config in the same flat format (the run snapshot)."""
    lines = []
    for section_name, section_obj in _sections(cfg).items():
        lines.append(f"[{section_name}]")
        for f in fields(section_obj):
            value = getattr(section_obj, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = "%.17g" % value
            lines.append(f"{f.name} = {value}")
        lines.append("")
    return "\n".join(lines)
