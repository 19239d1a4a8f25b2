"""Exception hierarchy shared across the package."""


class ScanplanError(Exception):
    """Base class for all errors raised by this package."""


class EmptyInput(ScanplanError):
    """An operation received an empty cloud or sequence where content is required."""


class BadConfig(ScanplanError):
    """A configuration value or combination of values is invalid."""


class DegenerateGeometry(ScanplanError):
    """Input geometry is rank-deficient (collinear/coincident points, zero-extent box)."""


class DimensionMismatch(ScanplanError):
    """Two images or arrays that must agree in shape do not."""


class NoCorrespondences(ScanplanError):
    """ICP correspondence rejection emptied the pair set."""


class InsufficientAnchors(ScanplanError):
    """Pose fusion needs at least 3 registered observations to fit a frame transform."""


class IncompleteRun(ScanplanError):
    """A run directory lacks the artifacts needed for evaluation."""
