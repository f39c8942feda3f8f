"""Typed error taxonomy for the guidance pipeline.

Every failure mode that a caller can meaningfully react to gets its own
class so navigation code can degrade per-step instead of aborting.
"""


class PipelineError(Exception):
    """Base class for all recoverable pipeline failures."""


# -- geometry ---------------------------------------------------------------

class TooFewMatches(PipelineError):
    """Fewer correspondences than the minimal sample of the pose solver."""


class DegenerateGeometry(PipelineError):
    """Every sampled minimal set was rank-deficient; no epipolar hypothesis."""


class NoConsensus(PipelineError):
    """Best RANSAC hypothesis fell short of the required inlier count."""


class NotEssential(PipelineError):
    """Matrix singular values do not fit the (s, s, 0) essential pattern."""


class AmbiguousCheirality(PipelineError):
    """Two pose candidates explain nearly the same number of points."""


class PointAtInfinity(PipelineError):
    """Homogeneous triangulation result has a vanishing last coordinate."""


class BehindCamera(PipelineError):
    """Triangulated point has non-positive depth in one of the views."""


# -- features / matching ----------------------------------------------------

class ImageTooSmall(PipelineError):
    """Image below the minimum size supported by the detector."""


class MarginViolation(PipelineError):
    """Keypoint too close to the border for the rotated sampling pattern."""


class EmptyFeatureSet(PipelineError):
    """Matching requires at least one feature on each side."""


# -- localization / navigation ----------------------------------------------

class TooFewObjectFeatures(PipelineError):
    """Not enough features inside (or matched from) the target box."""


class InsufficientParallax(PipelineError):
    """Frame pair has too little feature motion for a stable depth."""


class Arrived(PipelineError):
    """Target is inside the arrival radius; no path angle to compute."""


class NoHorizontalMotion(PipelineError):
    """Motion has no ground-plane component to define a heading."""


class InitializationFailed(PipelineError):
    """The first two frames did not yield a pose and object position."""


# -- io ----------------------------------------------------------------------

class ParseError(PipelineError):
    """Malformed dataset file (wrong token count, non-numeric field...)."""


class MissingCamera(PipelineError):
    """Requested projection-matrix id absent from the calibration file."""


class UnsupportedFormat(PipelineError):
    """Image format outside the supported set (binary PGM, 8-bit PNG)."""


class CorruptFile(PipelineError):
    """File matches a supported format but its payload is broken."""


class InvertedBox(PipelineError):
    """Bounding box with non-positive width or height."""


class IoFailure(PipelineError):
    """Underlying OS error while writing results."""


# -- simulator / evaluation ---------------------------------------------------

class NothingVisible(PipelineError):
    """No scene point projects in front of both cameras."""


class LengthMismatch(PipelineError):
    """Paired sequences of different lengths."""
