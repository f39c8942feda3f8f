"""Monocular walk-to-target guidance.

Estimates a wearable camera's frame-to-frame motion from image features,
triangulates a selected target object from the first two frames, keeps
the target position updated relative to the user, and emits
path-correction advice. Includes a synthetic-scene oracle and KITTI
odometry ingestion for validation.
"""

from .errors import PipelineError
from .features import FeatureConfig, FeatureSet, GrayImage, Keypoint, detect_and_describe
from .geometry import (
    CameraIntrinsics,
    CorrespondenceSet,
    RansacParams,
    RelativePose,
    ScaleSource,
    WorldPoint,
    decompose_essential,
    estimate_essential_ransac,
    estimate_pose,
    select_pose,
    triangulate,
)
from .localization import BoundingBox, ObjectLocation, localize_object, object_center
from .matching import MatchParams, MatchPair, hamming, match_features
from .navigation import (
    Advice,
    AdviceKind,
    NavConfig,
    NavLog,
    ScalePolicy,
    advise,
    path_angle,
    run_navigation,
    update_object,
)

__version__ = "0.1.0"

__all__ = [
    "Advice",
    "AdviceKind",
    "BoundingBox",
    "CameraIntrinsics",
    "CorrespondenceSet",
    "FeatureConfig",
    "FeatureSet",
    "GrayImage",
    "Keypoint",
    "MatchPair",
    "MatchParams",
    "NavConfig",
    "NavLog",
    "ObjectLocation",
    "PipelineError",
    "RansacParams",
    "RelativePose",
    "ScalePolicy",
    "ScaleSource",
    "WorldPoint",
    "advise",
    "decompose_essential",
    "detect_and_describe",
    "estimate_essential_ransac",
    "estimate_pose",
    "hamming",
    "localize_object",
    "match_features",
    "object_center",
    "path_angle",
    "run_navigation",
    "select_pose",
    "triangulate",
    "update_object",
]
