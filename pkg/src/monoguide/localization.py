"""Initial 3D target localization from the first two frames.

The camera motion comes from full-frame features (more stable); the
target's 2D center is the centroid of features detected inside its
bounding box, paired with the centroid of their matched partners in the
second frame, and the two centers are triangulated under the estimated
pose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientParallax, TooFewMatches, TooFewObjectFeatures
from .features import FeatureConfig, FeatureSet, GrayImage, detect_and_describe
from .geometry import (
    CameraIntrinsics,
    RansacParams,
    RelativePose,
    ScaleSource,
    WorldPoint,
    estimate_pose,
    triangulate,
)
from .matching import MatchParams, match_features

DEFAULT_MIN_OBJECT_FEATURES = 5
DEFAULT_MIN_PARALLAX_PX = 1.0


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel rectangle of a detected object on one frame."""

    frame_index: int
    label: str
    u_min: float
    v_min: float
    u_max: float
    v_max: float

    def __post_init__(self):
        if not (self.u_min < self.u_max and self.v_min < self.v_max):
            raise ValueError(
                f"box must have positive extent, got "
                f"({self.u_min}, {self.v_min}, {self.u_max}, {self.v_max})"
            )

    def contains(self, u: float, v: float) -> bool:
        return self.u_min <= u < self.u_max and self.v_min <= v < self.v_max

    def center(self) -> np.ndarray:
        return np.array([(self.u_min + self.u_max) / 2.0, (self.v_min + self.v_max) / 2.0])


@dataclass(frozen=True)
class ObjectLocation:
    """Target position in the camera frame of ``frame_index``, meters."""

    position: WorldPoint
    frame_index: int
    scale_source: ScaleSource


def object_center(
    fs: FeatureSet, indices=None, min_features: int = DEFAULT_MIN_OBJECT_FEATURES
) -> np.ndarray:
    """Centroid of keypoint positions, optionally restricted to ``indices``."""
    pos = fs.positions()
    if indices is not None:
        pos = pos[np.asarray(indices, dtype=int)]
    if len(pos) < min_features:
        raise TooFewObjectFeatures(f"need >= {min_features} features, got {len(pos)}")
    return pos.mean(axis=0)


def localize_object(
    frame1: GrayImage,
    frame2: GrayImage,
    box: BoundingBox,
    K: CameraIntrinsics,
    scale: float = 1.0,
    scale_source: ScaleSource = ScaleSource.UNIT,
    feature_cfg: FeatureConfig = FeatureConfig(),
    match_params: MatchParams = MatchParams(),
    ransac_params: RansacParams = RansacParams(),
    min_object_features: int = DEFAULT_MIN_OBJECT_FEATURES,
    min_parallax_px: float = DEFAULT_MIN_PARALLAX_PX,
    use_box_center: bool = False,
    restrict_center_to_matched: bool = False,
) -> tuple[ObjectLocation, RelativePose]:
    """Two-frame target localization.

    1. full-frame features on both frames -> match -> robust essential ->
       pose between the frames (returned alongside the object);
    2. features inside ``box`` on frame 1, matched against frame 2;
    3. the object's 2D center in frame 1 is the centroid of the in-box
       features (all of them by default; restrict_center_to_matched
       narrows to the matched subset, use_box_center substitutes the
       geometric box center for ablation), and in frame 2 the centroid of
       the matched partners;
    4. the two centers are triangulated under the estimated pose.

    Refuses with InsufficientParallax when the median feature motion is
    below ``min_parallax_px``, since a near-zero baseline makes depth
    unbounded.
    """
    fs1 = detect_and_describe(frame1, feature_cfg)
    fs2 = detect_and_describe(frame2, feature_cfg)
    _, corr = match_features(fs1, fs2, match_params)
    if len(corr) < 8:
        raise TooFewMatches(f"only {len(corr)} full-frame matches between the frames")
    if np.median(corr.displacements()) < min_parallax_px:
        raise InsufficientParallax(
            f"median feature motion below {min_parallax_px} px; depth would be unbounded"
        )
    pose, mask, _ = estimate_pose(corr, K, ransac_params)
    pose = pose.with_scale(scale, scale_source)

    fs_box = detect_and_describe(frame1, feature_cfg, mask=box)
    if len(fs_box) < min_object_features:
        raise TooFewObjectFeatures(
            f"only {len(fs_box)} features inside the target box (need {min_object_features})"
        )
    box_pairs, box_corr = match_features(fs_box, fs2, match_params)
    if len(box_pairs) < min_object_features:
        raise TooFewObjectFeatures(
            f"only {len(box_pairs)} box features matched into frame 2 "
            f"(need {min_object_features})"
        )

    if use_box_center:
        p = box.center()
    elif restrict_center_to_matched:
        p = object_center(fs_box, [m.index_a for m in box_pairs], min_object_features)
    else:
        p = object_center(fs_box, min_features=min_object_features)
    q = object_center(fs2, [m.index_b for m in box_pairs], min_object_features)

    point = triangulate(p, q, K, pose)
    return ObjectLocation(point, frame_index=box.frame_index, scale_source=scale_source), pose
