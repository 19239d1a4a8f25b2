"""On-disk layout of a run directory.

A run directory is self-describing: the resolved config snapshot sits next
to the logs, observation clouds, and the final reconstruction. All floats
are written as %.17g so reruns with the same seed are byte-identical
(wall-clock latency columns are the one documented exception).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ply
from .config import MissionConfig, load_config, render_config
from .errors import IncompleteRun
from .geometry import PointCloud
from .mission import RunResult

FLIGHT_HEADER = "t,uav_id,true_x,true_y,true_z,est_x,est_y,est_z,yaw"
OBS_HEADER = (
    "obs_id,uav_id,t,slice_index,feature_score,registered,n_points,"
    "true_x,true_y,true_z,true_yaw,uwb_x,uwb_y,uwb_z,sfm_x,sfm_y,sfm_z,sfm_yaw"
)
PLANNER_HEADER = "t,uav_id,chosen_slice,reason"
TRANSFORM_HEADER = "scale,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz"


def _g(x: float) -> str:
    return "%.17g" % x


def _transform_row(transform) -> str:
    r = transform.rotation
    t = transform.translation
    vals = [transform.scale, *r.reshape(-1), t.x, t.y, t.z]
    return ",".join(_g(v) for v in vals)


def write_run(out_dir, result: RunResult) -> None:
    out = Path(out_dir)
    cfg = result.config
    (out / "config.txt").write_text(render_config(cfg))

    rows = [FLIGHT_HEADER]
    rows += [
        f"{_g(t)},{uid},{_g(tx)},{_g(ty)},{_g(tz)},{_g(ex)},{_g(ey)},{_g(ez)},{_g(yaw)}"
        for t, uid, tx, ty, tz, ex, ey, ez, yaw in result.flight_log
    ]
    (out / "flight_log.csv").write_text("\n".join(rows) + "\n")

    rows = [OBS_HEADER]
    for o in result.observations:
        p = o.true_pose.position
        u = o.uwb_position
        if o.sfm_pose is not None:
            s = o.sfm_pose.position
            sfm = f"{_g(s.x)},{_g(s.y)},{_g(s.z)},{_g(o.sfm_pose.yaw)}"
            registered = "1"
        else:
            sfm = ",,,"
            registered = "0"
        rows.append(
            f"{o.obs_id},{o.uav_id},{_g(o.timestamp)},{o.slice_index},{_g(o.feature_score)},"
            f"{registered},{len(o.points)},{_g(p.x)},{_g(p.y)},{_g(p.z)},{_g(o.true_pose.yaw)},"
            f"{_g(u.x)},{_g(u.y)},{_g(u.z)},{sfm}"
        )
    (out / "observations.csv").write_text("\n".join(rows) + "\n")

    if cfg.io.save_observation_clouds:
        for o in result.observations:
            ply.write_cloud(out / "observations" / f"obs_{o.obs_id:05d}.ply", o.points)

    k = cfg.reconstruct.slices
    header = "trigger_id,reason,batch_size," + ",".join(f"score_{i}" for i in range(k)) + ",latency_s"
    rows = [header]
    for rec in result.trigger_log:
        scores = ",".join(str(s) for s in rec.scores)
        rows.append(f"{rec.trigger_id},{rec.reason},{rec.batch_size},{scores},{_g(rec.latency_s)}")
    (out / "triggers.csv").write_text("\n".join(rows) + "\n")

    rows = [PLANNER_HEADER]
    rows += [f"{_g(rec.t)},{rec.uav_id},{rec.chosen_slice},{rec.reason}" for rec in result.planner_log]
    (out / "planner.csv").write_text("\n".join(rows) + "\n")

    ply.write_cloud(out / "final_cloud.ply", result.final_cloud)

    if result.fusion is not None:
        text = TRANSFORM_HEADER + "\n" + _transform_row(result.fusion.transform) + "\n"
        (out / "gauge_fit.csv").write_text(text)

    meta = [
        "key,value",
        f"approach,{cfg.mission.mode}",
        f"images_taken,{result.images_taken}",
        f"images_used,{result.images_used}",
        f"tau,{_g(result.tau)}",
        f"sim_duration_s,{_g(result.sim_duration)}",
        f"object_diagonal_m,{_g(result.object_diagonal)}",
    ]
    (out / "run_meta.csv").write_text("\n".join(meta) + "\n")


@dataclass(frozen=True)
class LoadedRun:
    config: MissionConfig
    final_cloud: PointCloud
    images_taken: int
    images_used: int
    latencies: list[float]


def load_run(run_dir) -> LoadedRun:
    run = Path(run_dir)
    config_path = run / "config.txt"
    cloud_path = run / "final_cloud.ply"
    meta_path = run / "run_meta.csv"
    for path in (config_path, cloud_path, meta_path):
        if not path.exists():
            raise IncompleteRun(f"missing run artifact: {path}")
    cfg = load_config(config_path, environ={})
    cloud = ply.read_cloud(cloud_path)
    meta = {}
    for line in meta_path.read_text().splitlines()[1:]:
        key, _, value = line.partition(",")
        meta[key] = value
    latencies = []
    triggers = run / "triggers.csv"
    if triggers.exists():
        lines = triggers.read_text().splitlines()
        for line in lines[1:]:
            latencies.append(float(line.rsplit(",", 1)[1]))
    try:
        taken = int(meta["images_taken"])
        used = int(meta["images_used"])
    except KeyError as exc:
        raise IncompleteRun(f"run_meta.csv lacks {exc}") from exc
    return LoadedRun(cfg, cloud, taken, used, latencies)
