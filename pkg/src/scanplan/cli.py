"""Command-line experiment driver.

Subcommands:
  simulate <config> -o <dir>   run one mission and write its artifacts
  evaluate <dir>               evaluate a completed run directory
  matrix <spec> -o <dir>       run a sweep of configurations and aggregate
  report <dir>                 print the aggregate table of a matrix run

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import itertools
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import (
    CAMERA_MODES,
    MODES,
    OBJECTS,
    MissionConfig,
    apply_env_overrides,
    load_config,
    parse_config_text,
)
from .errors import BadConfig, ScanplanError
from .evaluate import evaluate_clouds, evaluate_run
from .metrics import RunSummary
from .mission import run_mission

MATRIX_SECTION = "matrix"
_SWEEP_KEYS = ("objects", "camera_modes", "uav_counts", "modes", "seeds")

AGGREGATE_HEADER = (
    "object,camera_mode,uav_count,approach,seeds,psnr_db_mean,psnr_db_std,"
    "ssim_mean,hd_m_mean,hd_m_std,wd_m_mean,wd_m_std,latency_mean_s,"
    "images_taken_mean,images_used_mean"
)


def _parse_int_list(raw: str, what: str) -> list[int]:
    raw = raw.strip()
    if ":" in raw:
        start, _, stop = raw.partition(":")
        try:
            return list(range(int(start), int(stop)))
        except ValueError:
            raise BadConfig(f"{what}: cannot parse range '{raw}'") from None
    try:
        return [int(tok) for tok in raw.split(",") if tok.strip()]
    except ValueError:
        raise BadConfig(f"{what}: cannot parse list '{raw}'") from None


def parse_matrix_spec(text: str) -> tuple[MissionConfig, dict]:
    """Split a matrix spec into the base config and the sweep lists."""
    base_lines: list[str] = []
    sweep_raw: dict[str, str] = {}
    current = None
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip()
            if current != MATRIX_SECTION:
                base_lines.append(line)
            continue
        if current == MATRIX_SECTION:
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise BadConfig(f"[matrix]: expected key = value, got '{stripped}'")
            key, _, value = stripped.partition("=")
            key = key.strip()
            if key not in _SWEEP_KEYS:
                raise BadConfig(f"[matrix]: unknown key '{key}' (choose from {_SWEEP_KEYS})")
            sweep_raw[key] = value.strip()
        else:
            base_lines.append(line)
    if current is None or MATRIX_SECTION not in text:
        raise BadConfig("matrix spec needs a [matrix] section")
    base = apply_env_overrides(parse_config_text("\n".join(base_lines))).validate()
    sweep = {
        "objects": [s.strip() for s in sweep_raw.get("objects", base.mission.object).split(",") if s.strip()],
        "camera_modes": [
            s.strip() for s in sweep_raw.get("camera_modes", base.mission.camera_mode).split(",") if s.strip()
        ],
        "uav_counts": _parse_int_list(sweep_raw.get("uav_counts", str(base.mission.uav_count)), "uav_counts"),
        "modes": [s.strip() for s in sweep_raw.get("modes", base.mission.mode).split(",") if s.strip()],
        "seeds": _parse_int_list(sweep_raw.get("seeds", str(base.mission.seed)), "seeds"),
    }
    for obj in sweep["objects"]:
        if obj not in OBJECTS:
            raise BadConfig(f"[matrix] objects: unknown '{obj}'")
    for mode in sweep["modes"]:
        if mode not in MODES:
            raise BadConfig(f"[matrix] modes: unknown '{mode}'")
    for cam in sweep["camera_modes"]:
        if cam not in CAMERA_MODES:
            raise BadConfig(f"[matrix] camera_modes: unknown '{cam}'")
    if not sweep["seeds"]:
        raise BadConfig("[matrix] seeds: empty")
    return base, sweep


def _cell_config(base: MissionConfig, obj: str, cam: str, uavs: int, mode: str, seed: int) -> MissionConfig:
    cfg = dataclasses.replace(
        base, **{f.name: dataclasses.replace(getattr(base, f.name)) for f in dataclasses.fields(base)}
    )
    cfg.mission.object = obj
    cfg.mission.camera_mode = cam
    cfg.mission.uav_count = uavs
    cfg.mission.mode = mode
    cfg.mission.seed = seed
    cfg.io.save_observation_clouds = False
    cfg.io.save_instant_clouds = False
    return cfg.validate()


def _run_cell_seed(cfg: MissionConfig) -> RunSummary:
    result = run_mission(cfg)
    ev = evaluate_clouds(cfg, result.final_cloud, result.images_taken, result.images_used, result.latencies)
    return ev.summary


def _matrix(args) -> int:
    spec_text = Path(args.spec).read_text()
    base, sweep = parse_matrix_spec(spec_text)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for obj, cam, uavs, mode, seed in itertools.product(
        sweep["objects"], sweep["camera_modes"], sweep["uav_counts"], sweep["modes"], sweep["seeds"]
    ):
        jobs.append(((obj, cam, uavs, mode, seed), _cell_config(base, obj, cam, uavs, mode, seed)))
    rows: dict[tuple, RunSummary] = {}
    errors: dict[tuple, str] = {}
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = {key: pool.submit(_run_cell_seed, cfg) for key, cfg in jobs}
            for key, future in futures.items():
                try:
                    rows[key] = future.result()
                except ScanplanError as exc:
                    errors[key] = f"{type(exc).__name__}: {exc}"
    else:
        for key, cfg in jobs:
            try:
                rows[key] = _run_cell_seed(cfg)
            except ScanplanError as exc:
                errors[key] = f"{type(exc).__name__}: {exc}"

    run_lines = ["object,camera_mode,uav_count,seed," + RunSummary.CSV_HEADER]
    for key in sorted(rows):
        obj, cam, uavs, mode, seed = key
        run_lines.append(f"{obj},{cam},{uavs},{seed},{rows[key].csv_row()}")
    (out / "runs.csv").write_text("\n".join(run_lines) + "\n")

    agg_lines = [AGGREGATE_HEADER]
    cells = sorted({key[:4] for key in rows})
    for cell in cells:
        summaries = [rows[key] for key in sorted(rows) if key[:4] == cell]
        psnr = np.array([s.psnr_db for s in summaries])
        ssim_m = np.array([s.ssim_mean for s in summaries])
        hd = np.array([s.hd_m for s in summaries])
        wd = np.array([s.wd_m for s in summaries])
        lat = np.array([s.latency_mean_s for s in summaries])
        taken = np.array([s.images_taken for s in summaries])
        used = np.array([s.images_used for s in summaries])
        obj, cam, uavs, mode = cell
        agg_lines.append(
            f"{obj},{cam},{uavs},{mode},{len(summaries)},"
            f"{psnr.mean():.4f},{psnr.std():.4f},{ssim_m.mean():.4f},"
            f"{hd.mean():.6g},{hd.std():.6g},{wd.mean():.6g},{wd.std():.6g},"
            f"{lat.mean():.6f},{taken.mean():.1f},{used.mean():.1f}"
        )
    (out / "aggregate.csv").write_text("\n".join(agg_lines) + "\n")

    if errors:
        err_lines = [f"{key}: {msg}" for key, msg in sorted(errors.items())]
        (out / "errors.txt").write_text("\n".join(err_lines) + "\n")
        print(f"{len(errors)} of {len(jobs)} runs failed; see {out / 'errors.txt'}", file=sys.stderr)
        return 3
    print(f"wrote {out / 'runs.csv'} and {out / 'aggregate.csv'} ({len(rows)} runs)")
    return 0


def _report(args) -> int:
    path = Path(args.directory) / "aggregate.csv"
    if not path.exists():
        raise BadConfig(f"no aggregate.csv under {args.directory}")
    with open(path) as fh:
        table = list(csv.reader(fh))
    widths = [max(len(row[i]) for row in table) for i in range(len(table[0]))]
    for row in table:
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
    return 0


def _simulate(args) -> int:
    cfg = load_config(args.config)
    result = run_mission(cfg, out_dir=args.output)
    print(
        f"run complete: {result.images_taken} images taken, {result.images_used} used, "
        f"{len(result.trigger_log)} reconstruction triggers -> {args.output}"
    )
    return 0


def _evaluate(args) -> int:
    ev = evaluate_run(args.directory)
    s = ev.summary
    print(RunSummary.CSV_HEADER)
    print(s.csv_row())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scanplan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one mission")
    p.add_argument("config")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_simulate)

    p = sub.add_parser("evaluate", help="evaluate a run directory")
    p.add_argument("directory")
    p.set_defaults(func=_evaluate)

    p = sub.add_parser("matrix", help="run an experiment matrix")
    p.add_argument("spec")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_matrix)

    p = sub.add_parser("report", help="print the aggregate table of a matrix run")
    p.add_argument("directory")
    p.set_defaults(func=_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BadConfig as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ScanplanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
