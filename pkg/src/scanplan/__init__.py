"""Deterministic multi-UAV 3D-scanning mission simulator and geometry library."""

from .errors import (
    BadConfig,
    DegenerateGeometry,
    DimensionMismatch,
    EmptyInput,
    IncompleteRun,
    InsufficientAnchors,
    NoCorrespondences,
    ScanplanError,
)
from .geometry import Aabb, PointCloud, Pose, SimilarityTransform, Vec3

__all__ = [
    "Aabb",
    "BadConfig",
    "DegenerateGeometry",
    "DimensionMismatch",
    "EmptyInput",
    "IncompleteRun",
    "InsufficientAnchors",
    "NoCorrespondences",
    "PointCloud",
    "Pose",
    "ScanplanError",
    "SimilarityTransform",
    "Vec3",
]

__version__ = "0.1.0"
