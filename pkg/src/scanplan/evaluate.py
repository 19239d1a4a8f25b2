"""Run evaluation: align the reconstruction to the reference, render the
virtual-camera ring for both, and aggregate the quality metrics."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .align import IcpParams, align_clouds
from .config import MissionConfig
from .errors import IncompleteRun
from .geometry import PointCloud, SimilarityTransform, apply_similarity
from .imaging import Image, RenderMode, render_view, virtual_camera_ring, write_pgm
from .metrics import RunSummary, summarize_run
from .mission import RunResult, build_object, scan_center
from .runio import TRANSFORM_HEADER, _transform_row, load_run
from .scene import sample_surface
from . import ply

# Offset separating the evaluation reference sampling from the mission's
# ground-truth sampling stream.
EVAL_SEED_OFFSET = 7919


@dataclass(frozen=True)
class EvalResult:
    summary: RunSummary
    transform: SimilarityTransform
    icp_rmse: float
    reference: PointCloud
    aligned: PointCloud
    reference_renders: list[Image]
    reconstructed_renders: list[Image]


def evaluate_clouds(
    cfg: MissionConfig,
    final_cloud: PointCloud,
    images_taken: int,
    images_used: int,
    latencies: list[float],
) -> EvalResult:
    """Core evaluation used both in-memory and from a run directory."""
    if len(final_cloud) < 3:
        raise IncompleteRun("final cloud is empty or too small to evaluate")
    ev = cfg.evaluate
    obj = build_object(cfg)
    reference = sample_surface(obj, ev.reference_samples, seed=cfg.mission.seed + EVAL_SEED_OFFSET)
    icp = align_clouds(
        final_cloud,
        reference,
        IcpParams(max_iterations=ev.icp_max_iterations, max_points=ev.icp_max_points),
    )
    aligned = apply_similarity(icp.transform, final_cloud)
    ring = virtual_camera_ring(
        scan_center(cfg),
        ev.ring_radius or cfg.flight.radius,
        ev.ring_count,
        cfg.capture.hfov,
        cfg.capture.vfov,
        cfg.capture.max_range,
        ev.resolution,
        ev.resolution,
    )
    modulate = cfg.mission.camera_mode == "rgb"
    ref_renders = [
        render_view(reference, cam, RenderMode.INTENSITY, ev.splat_px, modulate) for cam in ring
    ]
    rec_renders = [
        render_view(aligned, cam, RenderMode.INTENSITY, ev.splat_px, modulate) for cam in ring
    ]
    summary = summarize_run(
        approach=cfg.mission.mode,
        reference_renders=ref_renders,
        reconstructed_renders=rec_renders,
        reference=reference,
        reconstructed_aligned=aligned,
        latencies=latencies,
        images_taken=images_taken,
        images_used=images_used,
        wd_subsample=ev.wd_subsample,
        wd_seed=cfg.mission.seed,
    )
    return EvalResult(summary, icp.transform, icp.rmse, reference, aligned, ref_renders, rec_renders)


def evaluate_result(result: RunResult) -> EvalResult:
    return evaluate_clouds(
        result.config, result.final_cloud, result.images_taken, result.images_used, result.latencies
    )


def evaluate_run(run_dir) -> EvalResult:
    """Evaluate a run directory and write the evaluation artifacts into it."""
    run = Path(run_dir)
    loaded = load_run(run)
    ev = evaluate_clouds(loaded.config, loaded.final_cloud, loaded.images_taken, loaded.images_used, loaded.latencies)
    out = run / "eval"
    out.mkdir(exist_ok=True)
    ply.write_cloud(out / "aligned.ply", ev.aligned)
    (out / "alignment_transform.csv").write_text(
        TRANSFORM_HEADER + "\n" + _transform_row(ev.transform) + "\n"
    )
    for i, (ref, rec) in enumerate(zip(ev.reference_renders, ev.reconstructed_renders)):
        write_pgm(out / f"render_ref_{i:02d}.pgm", ref)
        write_pgm(out / f"render_rec_{i:02d}.pgm", rec)
    summary_path = run / "summary.csv"
    if summary_path.exists():
        text = summary_path.read_text()
    else:
        text = RunSummary.CSV_HEADER + "\n"
    summary_path.write_text(text + ev.summary.csv_row() + "\n")
    return ev
