"""Reconstruction-quality metrics and run summarization."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from .errors import BadConfig, DimensionMismatch, EmptyInput, IncompleteRun
from .geometry import PointCloud
from .imaging import Image

PSNR_CAP_DB = 99.0
SSIM_WINDOW = 7


def psnr(a: Image, b: Image, data_range: float = 1.0) -> float:
    """10*log10(range^2 / MSE) in dB, capped at 99 for (near-)identical images."""
    if a.pixels.shape != b.pixels.shape:
        raise DimensionMismatch(f"image shapes differ: {a.pixels.shape} vs {b.pixels.shape}")
    mse = float(np.mean((a.pixels - b.pixels) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(data_range ** 2 / mse), PSNR_CAP_DB)


def ssim(a: Image, b: Image) -> tuple[float, float]:
    """Structural similarity over sliding 7x7 uniform windows, stride 1.

    Returns (mean, std) across windows, matching the mean +/- std style the
    result tables use. Stabilizers C1=(0.01)^2, C2=(0.03)^2 for unit range.
    """
    if a.pixels.shape != b.pixels.shape:
        raise DimensionMismatch(f"image shapes differ: {a.pixels.shape} vs {b.pixels.shape}")
    h, w = a.pixels.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise DimensionMismatch(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    c1 = 0.01 ** 2
    c2 = 0.03 ** 2
    half = SSIM_WINDOW // 2

    def win(x):
        # Interior crop keeps only windows fully inside the image, where the
        # filter output equals the exact window mean.
        return uniform_filter(x, size=SSIM_WINDOW)[half : h - half, half : w - half]

    pa, pb = a.pixels, b.pixels
    mu_a = win(pa)
    mu_b = win(pb)
    var_a = win(pa * pa) - mu_a ** 2
    var_b = win(pb * pb) - mu_b ** 2
    cov = win(pa * pb) - mu_a * mu_b
    ssim_map = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    return float(ssim_map.mean()), float(ssim_map.std())


def hausdorff(a: PointCloud, b: PointCloud) -> float:
    """Symmetric Hausdorff distance: max over both directed max-min distances."""
    if len(a) == 0 or len(b) == 0:
        raise EmptyInput("hausdorff needs two non-empty clouds")
    d_ab, _ = cKDTree(b.points).query(a.points)
    d_ba, _ = cKDTree(a.points).query(b.points)
    return float(max(d_ab.max(), d_ba.max()))


def wasserstein(a: PointCloud, b: PointCloud, m: int = 256, seed: int = 0) -> float:
    """Exact 1-Wasserstein distance between uniform subsamples of both clouds.

    Subsamples m points from each (deterministic per seed; with replacement
    only when a cloud has fewer than m points) and solves the optimal
    bijection exactly.
    """
    if len(a) == 0 or len(b) == 0:
        raise EmptyInput("wasserstein needs two non-empty clouds")
    if m < 1:
        raise BadConfig("subsample count must be >= 1")
    rng = np.random.default_rng(seed)

    def pick(cloud: PointCloud) -> np.ndarray:
        n = len(cloud)
        idx = np.sort(rng.choice(n, size=m, replace=n < m))
        return cloud.points[idx]

    pa = pick(a)
    pb = pick(b)
    cost = np.linalg.norm(pa[:, None, :] - pb[None, :, :], axis=2)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


@dataclass(frozen=True)
class RunSummary:
    """One row of the results table."""

    approach: str
    psnr_db: float
    ssim_mean: float
    ssim_std: float
    lpips: str
    hd_m: float
    wd_m: float
    latency_mean_s: float
    latency_std_s: float
    images_taken: int
    images_used: int

    CSV_HEADER = (
        "approach,psnr_db,ssim_mean,ssim_std,lpips,hd_m,wd_m,"
        "latency_mean_s,latency_std_s,images_taken,images_used"
    )

    def csv_row(self) -> str:
        return ",".join(
            [
                self.approach,
                "%.6f" % self.psnr_db,
                "%.6f" % self.ssim_mean,
                "%.6f" % self.ssim_std,
                self.lpips,
                "%.6g" % self.hd_m,
                "%.6g" % self.wd_m,
                "%.6f" % self.latency_mean_s,
                "%.6f" % self.latency_std_s,
                str(self.images_taken),
                str(self.images_used),
            ]
        )


def summarize_run(
    approach: str,
    reference_renders: list[Image],
    reconstructed_renders: list[Image],
    reference: PointCloud,
    reconstructed_aligned: PointCloud,
    latencies: list[float],
    images_taken: int,
    images_used: int,
    wd_subsample: int = 256,
    wd_seed: int = 0,
) -> RunSummary:
    """Aggregate the evaluation artifacts of one completed run into a table row.

    PSNR/SSIM are averaged over the virtual-camera ring (SSIM windows pooled
    across views); HD/WD are computed on the aligned clouds. The perceptual
    column is reported as n/a.
    """
    if len(reconstructed_aligned) == 0:
        raise IncompleteRun("reconstruction is empty")
    if not reference_renders or len(reference_renders) != len(reconstructed_renders):
        raise IncompleteRun("render rings are missing or mismatched")
    psnr_values = [psnr(r, c) for r, c in zip(reference_renders, reconstructed_renders)]
    ssim_stats = [ssim(r, c) for r, c in zip(reference_renders, reconstructed_renders)]
    means = np.array([m for m, _ in ssim_stats])
    stds = np.array([s for _, s in ssim_stats])
    pooled_mean = float(means.mean())
    pooled_std = float(math.sqrt(max((stds ** 2 + means ** 2).mean() - pooled_mean ** 2, 0.0)))
    lat = np.asarray(latencies, dtype=float)
    return RunSummary(
        approach=approach,
        psnr_db=float(np.mean(psnr_values)),
        ssim_mean=pooled_mean,
        ssim_std=pooled_std,
        lpips="n/a",
        hd_m=hausdorff(reference, reconstructed_aligned),
        wd_m=wasserstein(reference, reconstructed_aligned, m=wd_subsample, seed=wd_seed),
        latency_mean_s=float(lat.mean()) if lat.size else 0.0,
        latency_std_s=float(lat.std()) if lat.size else 0.0,
        images_taken=images_taken,
        images_used=images_used,
    )
