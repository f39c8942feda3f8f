"""Continuous guidance loop: per-step pose, object update, advice.

After the two-frame initialization the loop repeats: estimate the motion
between the previous and current frame, carry the target position into
the current camera frame, measure the ground-plane angle between the
user's latest movement and the target bearing, and emit advice when the
angle exceeds the alert threshold. A failed step degrades to holding the
last pose instead of aborting; a navigation aid must not crash
mid-route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import (
    Arrived,
    InitializationFailed,
    InsufficientParallax,
    NoHorizontalMotion,
    PipelineError,
)
from .features import FeatureConfig, detect_and_describe
from .geometry import (
    CameraIntrinsics,
    RansacParams,
    RelativePose,
    ScaleSource,
    WorldPoint,
    estimate_pose,
)
from .localization import BoundingBox, ObjectLocation, localize_object
from .matching import MatchParams, match_features

DEFAULT_ANGLE_THRESHOLD_DEG = 30.0
DEFAULT_ARRIVAL_RADIUS_M = 0.5
MIN_HORIZONTAL_MOTION = 1e-6


class AdviceKind(str, Enum):
    ON_COURSE = "on_course"
    VEER_LEFT = "veer_left"
    VEER_RIGHT = "veer_right"
    ARRIVED = "arrived"


@dataclass(frozen=True)
class Advice:
    kind: AdviceKind
    angle: float | None
    message: str


@dataclass(frozen=True)
class ScalePolicy:
    """Per-step metric scale for the unit-norm estimated translations.

    ``unit`` leaves everything up to scale, ``user-supplied`` applies a
    fixed step length, ``ground-truth-baseline`` takes the step magnitude
    from known camera positions (one row per frame).
    """

    source: ScaleSource = ScaleSource.UNIT
    value: float = 1.0
    gt_positions: np.ndarray | None = None

    def step_scale(self, frame_a: int, frame_b: int) -> float:
        if self.source is ScaleSource.UNIT:
            return 1.0
        if self.source is ScaleSource.USER:
            return float(self.value)
        if self.gt_positions is None:
            raise ValueError("ground-truth scale policy needs gt_positions")
        step = float(
            np.linalg.norm(self.gt_positions[frame_b] - self.gt_positions[frame_a])
        )
        if step <= 0.0:
            raise InsufficientParallax(
                f"zero ground-truth baseline between frames {frame_a} and {frame_b}"
            )
        return step


@dataclass(frozen=True)
class NavConfig:
    angle_threshold: float = DEFAULT_ANGLE_THRESHOLD_DEG
    frame_interval: int = 1
    update_mode: str = "rigid"          # "rigid" | "paper"
    arrival_radius: float = DEFAULT_ARRIVAL_RADIUS_M
    scale: ScalePolicy = field(default_factory=ScalePolicy)

    def __post_init__(self):
        if not 0.0 < self.angle_threshold < 180.0:
            raise ValueError("angle_threshold must be in (0, 180)")
        if self.frame_interval < 1:
            raise ValueError("frame_interval must be >= 1")
        if self.update_mode not in ("rigid", "paper"):
            raise ValueError("update_mode must be 'rigid' or 'paper'")


def update_object(
    o: ObjectLocation, pose: RelativePose, mode: str = "rigid", frame_index: int | None = None
) -> ObjectLocation:
    """Carry the target position from the previous camera frame into the
    current one.

    ``rigid`` applies the full transform o' = R o + t*scale (the module's
    pose convention). ``paper`` applies the plain subtraction
    o' = o - t*scale, which drops rotation and inherits the sign of the
    stored t; it is kept for fidelity experiments.
    """
    p = o.position.as_array()
    if mode == "paper":
        new = p - pose.translation()
    elif mode == "rigid":
        new = pose.R @ p + pose.translation()
    else:
        raise ValueError(f"unknown update mode {mode!r}")
    return ObjectLocation(
        position=WorldPoint(float(new[0]), float(new[1]), float(new[2])),
        frame_index=o.frame_index if frame_index is None else frame_index,
        scale_source=o.scale_source,
    )


def path_angle(
    o: ObjectLocation, motion: RelativePose, arrival_radius: float = DEFAULT_ARRIVAL_RADIUS_M
) -> float:
    """Signed ground-plane angle from the movement direction to the
    target bearing, in degrees; positive means the target is to the
    user's right (y points down).

    ``motion.t`` must point along the user's latest movement expressed in
    the current camera frame; :func:`run_navigation` derives it from the
    estimated pose.
    """
    gx, gz = o.position.x, o.position.z
    if math.hypot(gx, gz) < arrival_radius:
        raise Arrived("target inside the arrival radius")
    tx, tz = float(motion.t[0]), float(motion.t[2])
    if math.hypot(tx, tz) <= MIN_HORIZONTAL_MOTION:
        raise NoHorizontalMotion("movement has no ground-plane component")
    return math.degrees(math.atan2(gx * tz - gz * tx, gx * tx + gz * tz))


def advise(angle: float, cfg: NavConfig = NavConfig()) -> Advice:
    """Three-way advice from the signed path angle: strictly beyond the
    threshold veer toward the target, otherwise stay on course."""
    if abs(angle) > cfg.angle_threshold:
        side = "left" if angle < 0.0 else "right"
        kind = AdviceKind.VEER_LEFT if angle < 0.0 else AdviceKind.VEER_RIGHT
        return Advice(kind, angle, f"veer {side} by about {round(abs(angle))} degrees")
    return Advice(AdviceKind.ON_COURSE, angle, "on course")


@dataclass(frozen=True, eq=False)
class NavStep:
    """One processed frame pair (``prev_frame_index`` -> ``frame_index``)."""

    frame_index: int
    pose: RelativePose | None
    object_position: ObjectLocation
    angle: float | None
    advice: Advice | None
    prev_frame_index: int = -1
    skipped: bool = False
    error: str | None = None
    points_prev: np.ndarray | None = None
    points_cur: np.ndarray | None = None


@dataclass
class NavLog:
    """Full record of a navigation session.

    ``trajectory`` holds (frame_index, camera center) in the start
    frame's coordinates, beginning with the origin at frame 0;
    ``gt_positions`` can be attached afterwards for reporting.
    """

    records: list[NavStep] = field(default_factory=list)
    trajectory: list[tuple[int, np.ndarray]] = field(default_factory=list)
    arrived: bool = False
    initial_object: ObjectLocation | None = None
    gt_positions: np.ndarray | None = None

    def estimated_steps(self) -> list[np.ndarray]:
        """Per-step camera displacement in the previous camera's frame
        (skipped steps excluded), for trajectory evaluation."""
        out = []
        for rec in self.records:
            if rec.pose is None or rec.skipped:
                continue
            out.append(-rec.pose.R.T @ rec.pose.translation())
        return out


def _heading(pose: RelativePose) -> RelativePose:
    # user movement direction in the current frame is -t under the
    # x_cur = R x_ref + t s convention
    return replace(pose, t=-pose.t)


def run_navigation(
    frames,
    box: BoundingBox,
    K: CameraIntrinsics,
    cfg: NavConfig = NavConfig(),
    feature_cfg: FeatureConfig = FeatureConfig(),
    match_params: MatchParams = MatchParams(),
    ransac_params: RansacParams = RansacParams(),
    restrict_center_to_matched: bool = True,
) -> NavLog:
    """Run the full guidance loop over an image sequence.

    Frames 0-1 initialize the target position and first pose; every
    subsequent pair at ``cfg.frame_interval`` re-estimates the motion,
    carries the target forward, and emits advice. Per-step pipeline
    errors are logged and the last pose is held; the loop ends early once
    the target is inside the arrival radius.

    Initialization restricts the target's 2D centers to features matched
    in both frames (consistent subsets on both sides); when coverage is
    partial, centroids over mismatched subsets can fake more parallax
    than the baseline provides.
    """
    frames = list(frames)
    if len(frames) < 3:
        raise ValueError("navigation needs at least 3 frames")
    if box.frame_index != 0:
        raise ValueError("the target box must reference frame 0 of the sequence")
    if (
        cfg.scale.source is ScaleSource.GROUND_TRUTH
        and (cfg.scale.gt_positions is None or len(cfg.scale.gt_positions) < len(frames))
    ):
        raise ValueError("ground-truth scale policy must cover every frame")

    log = NavLog()
    log.trajectory.append((0, np.zeros(3)))

    try:
        obj0, pose01 = localize_object(
            frames[0], frames[1], box, K,
            scale=cfg.scale.step_scale(0, 1), scale_source=cfg.scale.source,
            feature_cfg=feature_cfg, match_params=match_params,
            ransac_params=ransac_params,
            restrict_center_to_matched=restrict_center_to_matched,
        )
    except PipelineError as exc:
        raise InitializationFailed(f"frames 0-1 failed: {exc}") from exc
    log.initial_object = obj0

    R_cum = np.eye(3)
    t_cum = np.zeros(3)
    o = obj0
    last_pose = pose01
    prev_feats = detect_and_describe(frames[1], feature_cfg)
    prev_idx = 1

    def apply_step(frame_index, prev_index, pose, skipped, error, pts_prev, pts_cur):
        nonlocal R_cum, t_cum, o
        o = update_object(o, pose, cfg.update_mode, frame_index=frame_index)
        R_cum = pose.R @ R_cum
        t_cum = pose.R @ t_cum + pose.translation()
        log.trajectory.append((frame_index, -R_cum.T @ t_cum))
        if o.position.ground_distance() < cfg.arrival_radius:
            advice = Advice(AdviceKind.ARRIVED, None, "arrived at the target")
            log.records.append(NavStep(frame_index, pose, o, None, advice,
                                       prev_index, skipped, error, pts_prev, pts_cur))
            log.arrived = True
            return True
        angle = None
        advice = None
        try:
            angle = path_angle(o, _heading(pose), cfg.arrival_radius)
            advice = advise(angle, cfg)
        except NoHorizontalMotion:
            error = error or "NoHorizontalMotion"
        log.records.append(NavStep(frame_index, pose, o, angle, advice,
                                   prev_index, skipped, error, pts_prev, pts_cur))
        return False

    if apply_step(1, 0, pose01, False, None, None, None):
        return log

    cur = prev_idx
    while True:
        cur += cfg.frame_interval
        if cur >= len(frames):
            break
        pose = None
        error = None
        skipped = False
        pts_prev = pts_cur = None
        try:
            feats = detect_and_describe(frames[cur], feature_cfg)
            _, corr = match_features(prev_feats, feats, match_params)
            unit_pose, mask, _ = estimate_pose(corr, K, ransac_params)
            pose = unit_pose.with_scale(
                cfg.scale.step_scale(prev_idx, cur), cfg.scale.source
            )
            inliers = corr.filtered(mask)
            pts_prev, pts_cur = inliers.points_a, inliers.points_b
            last_pose = pose
            # the reference frame advances only on success, so one bad
            # frame costs one skipped step and the next pair bridges it
            prev_feats = feats
            next_prev_idx = cur
        except PipelineError as exc:
            error = type(exc).__name__
            skipped = True
            pose = last_pose
            next_prev_idx = prev_idx
        done = apply_step(cur, prev_idx, pose, skipped, error, pts_prev, pts_cur)
        prev_idx = next_prev_idx
        if done:
            break
    return log
