"""Ground-plane error metrics for trajectories and object positions.

Per-step trajectory error is the Euclidean distance between the
estimated and true camera displacement in (x, z); object error likewise.
Monocular estimates carry no absolute scale, so evaluation attaches the
ground-truth step magnitude to each unit-norm estimate before comparing;
every report records that convention.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, PipelineError
from .features import FeatureConfig, detect_and_describe
from .geometry import CameraIntrinsics, RansacParams, WorldPoint, estimate_pose
from .localization import ObjectLocation
from .matching import MatchParams, match_features

SCALE_NOTE = (
    "scale: ground-truth-baseline (unit-norm estimated steps scaled by the "
    "ground-truth step magnitude)"
)


@dataclass(frozen=True, eq=False)
class ErrorReport:
    """Per-item ground-plane errors with MAE/RMSE aggregation."""

    errors: np.ndarray
    labels: tuple | None = None

    def __post_init__(self):
        err = np.asarray(self.errors, dtype=float).reshape(-1).copy()
        if np.any(~np.isfinite(err)) or np.any(err < 0):
            raise ValueError("errors must be finite and non-negative")
        err.setflags(write=False)
        object.__setattr__(self, "errors", err)
        if self.labels is not None:
            labels = tuple(self.labels)
            if len(labels) != len(err):
                raise ValueError("labels must match the error count")
            object.__setattr__(self, "labels", labels)

    @property
    def mae(self) -> float:
        return float(np.mean(self.errors)) if len(self.errors) else 0.0

    @property
    def rmse(self) -> float:
        return float(np.sqrt(np.mean(self.errors**2))) if len(self.errors) else 0.0


def _as_xyz(value) -> np.ndarray:
    if isinstance(value, ObjectLocation):
        return value.position.as_array()
    if isinstance(value, WorldPoint):
        return value.as_array()
    return np.asarray(value, dtype=float).reshape(3)


def ground_plane_distance(a, b) -> float:
    """Euclidean distance between two 3D points in the (x, z) plane."""
    da = _as_xyz(a)
    db = _as_xyz(b)
    return float(np.hypot(da[0] - db[0], da[2] - db[2]))


def localization_error(est, gt) -> float:
    """Object-position error in the ground plane, meters; both positions
    must be expressed in the same camera frame."""
    return ground_plane_distance(est, gt)


def trajectory_errors(est_steps, gt_steps, labels=None) -> ErrorReport:
    """Per-step translational errors in the ground plane.

    ``est_steps`` and ``gt_steps`` are equal-length sequences of 3-vector
    camera displacements expressed in the same (previous-camera) frame;
    estimates must already carry ground-truth scale.
    """
    est = list(est_steps)
    gt = list(gt_steps)
    if len(est) != len(gt):
        raise LengthMismatch(f"{len(est)} estimated steps vs {len(gt)} ground truth")
    errors = [
        np.hypot(e[0] - g[0], e[2] - g[2])
        for e, g in (
            (np.asarray(e, dtype=float), np.asarray(g, dtype=float))
            for e, g in zip(est, gt)
        )
    ]
    return ErrorReport(errors=np.array(errors), labels=labels)


def gt_relative_steps(gt_poses, frame_pairs) -> list[np.ndarray]:
    """Ground-truth camera displacement for each (i, j) frame pair,
    expressed in camera i's frame."""
    out = []
    for i, j in frame_pairs:
        Ri = gt_poses[i].rotation
        out.append(Ri.T @ (gt_poses[j].position - gt_poses[i].position))
    return out


@dataclass
class TrajectoryRun:
    """Outcome of evaluating pose estimation over one sequence."""

    report: ErrorReport
    frame_pairs: list
    skipped: list
    seconds_per_step: float


def evaluate_trajectory(
    frames,
    K: CameraIntrinsics,
    gt_poses,
    frame_interval: int = 1,
    feature_cfg: FeatureConfig = FeatureConfig(),
    match_params: MatchParams = MatchParams(),
    ransac_params: RansacParams = RansacParams(),
) -> TrajectoryRun:
    """Estimate the motion of every consecutive frame pair and score it
    against ground truth, with the gt step magnitude as scale."""
    frames = list(frames)
    if len(gt_poses) < len(frames):
        raise LengthMismatch("need one ground-truth pose per frame")
    est_steps = []
    gt_steps = []
    pairs = []
    skipped = []
    t0 = time.perf_counter()
    n_steps = 0
    prev_feats = detect_and_describe(frames[0], feature_cfg)
    prev_idx = 0
    for cur in range(frame_interval, len(frames), frame_interval):
        feats = detect_and_describe(frames[cur], feature_cfg)
        n_steps += 1
        try:
            _, corr = match_features(prev_feats, feats, match_params)
            pose, _, _ = estimate_pose(corr, K, ransac_params)
        except PipelineError as exc:
            skipped.append((prev_idx, cur, type(exc).__name__))
            prev_feats, prev_idx = feats, cur
            continue
        gt_step = gt_relative_steps(gt_poses, [(prev_idx, cur)])[0]
        scale = float(np.linalg.norm(gt_step))
        if scale <= 0.0:
            skipped.append((prev_idx, cur, "ZeroBaseline"))
            prev_feats, prev_idx = feats, cur
            continue
        est_steps.append(-pose.R.T @ (pose.t * scale))
        gt_steps.append(gt_step)
        pairs.append((prev_idx, cur))
        prev_feats, prev_idx = feats, cur
    seconds = (time.perf_counter() - t0) / max(n_steps, 1)
    report = trajectory_errors(est_steps, gt_steps)
    return TrajectoryRun(
        report=report, frame_pairs=pairs, skipped=skipped, seconds_per_step=seconds
    )


def write_table(path, columns, rows, note: str | None = SCALE_NOTE) -> None:
    """CSV table with per-item rows plus a mean row, prefixed by the
    scale-convention note."""
    with open(path, "w") as fh:
        if note:
            fh.write(f"# {note}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_cell(c) for c in row) + "\n")
        if rows and len(rows[0]) > 1:
            means = []
            for col in range(1, len(rows[0])):
                means.append(float(np.mean([float(r[col]) for r in rows])))
            fh.write(",".join(["mean"] + [_cell(m) for m in means]) + "\n")


def _cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)
