"""Command-line interface.

Subcommands cover the whole pipeline: feature debugging, two-frame
target localization, full navigation runs, synthetic-sequence
generation, evaluation against ground truth, and per-stage timing.
Exit codes: 0 success, 1 pipeline error, 2 usage error. Runs are
reproducible for a fixed --seed.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import evaluation, simulator
from .errors import PipelineError
from .features import FeatureConfig, detect_and_describe
from .geometry import RansacParams, ScaleSource, estimate_pose
from .io import (
    gt_camera_positions,
    gt_positions_in_start_frame,
    load_sequence,
    read_bboxes,
    read_image,
    render_overlay,
    write_outputs,
    write_ppm,
)
from .localization import BoundingBox, localize_object
from .matching import MatchParams, match_features
from .navigation import NavConfig, ScalePolicy, run_navigation


class UsageError(Exception):
    """Bad arguments or inconsistent inputs; maps to exit code 2."""


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="seed for every randomized stage")
    p.add_argument("--levels", type=int, default=4, help="pyramid levels")
    p.add_argument("--scale-factor", type=float, default=1.2, help="pyramid downscale factor")
    p.add_argument("--max-features", type=int, default=1000, help="feature budget per frame")
    p.add_argument("--fast-threshold", type=int, default=20, help="corner intensity threshold")
    p.add_argument("--ransac-threshold", type=float, default=1e-3,
                   help="inlier threshold in normalized coordinates")
    p.add_argument("--ransac-iters", type=int, default=2000, help="max RANSAC iterations")
    p.add_argument("--match-ratio", type=float, default=0.8,
                   help="nearest/second-nearest ratio gate")
    p.add_argument("--camera", choices=("P0", "P1", "P2", "P3"), default="P0",
                   help="calibration entry to use")


def _add_nav(p: argparse.ArgumentParser) -> None:
    p.add_argument("--angle-threshold", type=float, default=30.0,
                   help="alert threshold in degrees")
    p.add_argument("--frame-interval", type=int, default=1,
                   help="frames between processed pairs")
    p.add_argument("--update-mode", choices=("rigid", "paper"), default="rigid",
                   help="object update rule")
    p.add_argument("--scale", default="unit",
                   help="metric scale source: gt | fixed:<meters> | unit")
    p.add_argument("--poses", default=None, help="ground-truth pose file (KITTI layout)")
    p.add_argument("--target-label", default=None, help="pick the box with this label")
    p.add_argument("--target-frame", type=int, default=None,
                   help="pick the box annotated on this frame")
    p.add_argument("--overlays", action="store_true", help="write per-step PPM overlays")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="monoguide",
        description="Monocular walk-to-target guidance pipeline",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, func):
        p = sub.add_parser(name, help=help_text,
                           formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        p.set_defaults(func=func)
        return p

    p = add("features", "detect features on one image", cmd_features)
    p.add_argument("image")
    p.add_argument("--out", default=None, help="directory for keypoints.csv and overlay")
    _add_common(p)

    p = add("localize", "two-frame 3D localization of the target", cmd_localize)
    p.add_argument("seq", help="sequence directory")
    p.add_argument("bboxes", help="bounding-box annotation file")
    _add_common(p)
    _add_nav(p)

    p = add("navigate", "full guidance run over a sequence", cmd_navigate)
    p.add_argument("seq", help="sequence directory")
    p.add_argument("bboxes", help="bounding-box annotation file")
    p.add_argument("--out", default=None, help="directory for CSV/overlay outputs")
    _add_common(p)
    _add_nav(p)

    p = add("simulate", "write a synthetic sequence in dataset format", cmd_simulate)
    p.add_argument("out_dir")
    p.add_argument("--scenario", choices=("straight", "offset45", "wrong-turn"),
                   default="straight", help="walk-to-target scenario")
    p.add_argument("--seed", type=int, default=7, help="scene seed")

    p = add("evaluate", "trajectory/localization error tables for a sequence", cmd_evaluate)
    p.add_argument("seq", help="sequence directory with ground-truth poses")
    p.add_argument("out_dir", help="directory for the error tables")
    p.add_argument("--bboxes", default=None,
                   help="box file for localization error (default: <seq>/bboxes.txt)")
    _add_common(p)
    p.add_argument("--frame-interval", type=int, default=1)
    p.add_argument("--poses", default=None, help="ground-truth pose file")

    p = add("bench", "per-stage timing on a sequence", cmd_bench)
    p.add_argument("seq", help="sequence directory")
    p.add_argument("--max-frames", type=int, default=12, help="frames to time")
    _add_common(p)

    return parser


def _feature_cfg(args) -> FeatureConfig:
    return FeatureConfig(
        levels=args.levels, scale_factor=args.scale_factor,
        max_features=args.max_features, fast_threshold=args.fast_threshold,
    )


def _ransac_params(args) -> RansacParams:
    return RansacParams(
        threshold=args.ransac_threshold, max_iters=args.ransac_iters, seed=args.seed
    )


def _match_params(args) -> MatchParams:
    return MatchParams(ratio=args.match_ratio)


def _scale_policy(args, manifest, frame_offset: int = 0) -> ScalePolicy:
    spec = args.scale
    if spec == "unit":
        return ScalePolicy()
    if spec == "gt":
        if manifest.gt_poses is None:
            raise UsageError("--scale gt needs ground-truth poses (poses.txt or --poses)")
        positions = gt_camera_positions(manifest.gt_poses)[frame_offset:]
        return ScalePolicy(source=ScaleSource.GROUND_TRUTH, gt_positions=positions)
    if spec.startswith("fixed:"):
        try:
            value = float(spec.split(":", 1)[1])
        except ValueError as exc:
            raise UsageError(f"bad --scale value {spec!r}") from exc
        if value <= 0:
            raise UsageError("--scale fixed:<meters> must be positive")
        return ScalePolicy(source=ScaleSource.USER, value=value)
    raise UsageError(f"--scale must be gt, fixed:<meters> or unit, got {spec!r}")


def _select_box(boxes, label, frame) -> BoundingBox:
    candidates = boxes
    if label is not None:
        candidates = [b for b in candidates if b.label == label]
    if frame is not None:
        candidates = [b for b in candidates if b.frame_index == frame]
    if not candidates:
        raise UsageError("no bounding box matches the requested target")
    return candidates[0]


def cmd_features(args) -> int:
    img = read_image(args.image)
    fs = detect_and_describe(img, _feature_cfg(args))
    lines = ["u,v,level,orientation_rad,response"]
    lines += [
        f"{kp.u:.3f},{kp.v:.3f},{kp.level},{kp.orientation:.6f},{kp.response:.1f}"
        for kp in fs.keypoints
    ]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "keypoints.csv").write_text("\n".join(lines) + "\n")
        pos = fs.positions()
        write_ppm(render_overlay(img, pos, pos, None, None), out / "features.ppm")
        print(f"{len(fs)} keypoints -> {out}")
    else:
        print("\n".join(lines))
    return 0


def _prepare_run(args):
    manifest = load_sequence(args.seq, camera=args.camera, poses_path=args.poses)
    boxes = read_bboxes(args.bboxes)
    box = _select_box(boxes, args.target_label, args.target_frame)
    if box.frame_index >= len(manifest.image_paths) - 1:
        raise UsageError(
            f"bounding box references frame {box.frame_index} but the sequence has "
            f"{len(manifest.image_paths)} frames (need one more for initialization)"
        )
    return manifest, box


def cmd_localize(args) -> int:
    manifest, box = _prepare_run(args)
    policy = _scale_policy(args, manifest, frame_offset=0)
    frame1 = read_image(manifest.image_paths[box.frame_index])
    frame2 = read_image(manifest.image_paths[box.frame_index + 1])
    obj, pose = localize_object(
        frame1, frame2, box, manifest.intrinsics,
        scale=policy.step_scale(box.frame_index, box.frame_index + 1),
        scale_source=policy.source,
        feature_cfg=_feature_cfg(args), match_params=_match_params(args),
        ransac_params=_ransac_params(args),
        restrict_center_to_matched=True,
    )
    p = obj.position
    print(
        f"target '{box.label}' at frame {box.frame_index}: "
        f"X={p.x:.3f} Y={p.y:.3f} Z={p.z:.3f} m ({obj.scale_source.value} scale), "
        f"ground distance {p.ground_distance():.3f} m"
    )
    return 0


def cmd_navigate(args) -> int:
    manifest, box = _prepare_run(args)
    policy = _scale_policy(args, manifest, frame_offset=box.frame_index)
    frames = [read_image(p) for p in manifest.image_paths[box.frame_index:]]
    cfg = NavConfig(
        angle_threshold=args.angle_threshold, frame_interval=args.frame_interval,
        update_mode=args.update_mode, scale=policy,
    )
    log = run_navigation(
        frames, replace(box, frame_index=0), manifest.intrinsics, cfg,
        feature_cfg=_feature_cfg(args), match_params=_match_params(args),
        ransac_params=_ransac_params(args),
    )
    for rec in log.records:
        if rec.advice is not None:
            line = f"frame {rec.frame_index}: {rec.advice.message}"
            if rec.angle is not None:
                line += f" (angle {rec.angle:+.1f} deg)"
        else:
            line = f"frame {rec.frame_index}: step skipped ({rec.error})"
        print(line)
    if manifest.gt_poses is not None:
        log.gt_positions = gt_positions_in_start_frame(
            manifest.gt_poses[box.frame_index:]
        )
    if args.out:
        write_outputs(log, args.out, frames=frames, K=manifest.intrinsics,
                      overlays=args.overlays)
        print(f"outputs -> {args.out}")
    print("arrived" if log.arrived else "sequence ended before arrival")
    return 0


def cmd_simulate(args) -> int:
    scene, script, K, _ = simulator.demo_fixture(args.scenario, seed=args.seed)
    info = simulator.write_sequence(args.out_dir, scene, script, K)
    print(
        f"wrote {info['frames']} frames ({args.scenario}) to {args.out_dir}; "
        f"target box {info['box'].u_min:.0f},{info['box'].v_min:.0f},"
        f"{info['box'].u_max:.0f},{info['box'].v_max:.0f}"
    )
    return 0


def cmd_evaluate(args) -> int:
    manifest = load_sequence(args.seq, camera=args.camera, poses_path=args.poses)
    if manifest.gt_poses is None:
        raise UsageError("evaluation needs ground-truth poses (poses.txt or --poses)")
    frames = [read_image(p) for p in manifest.image_paths]
    run = evaluation.evaluate_trajectory(
        frames, manifest.intrinsics, manifest.gt_poses,
        frame_interval=args.frame_interval,
        feature_cfg=_feature_cfg(args), match_params=_match_params(args),
        ransac_params=_ransac_params(args),
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = Path(args.seq).name or "sequence"
    evaluation.write_table(
        out / "trajectory_error.csv", ("video", "mae", "rmse"),
        [(name, run.report.mae, run.report.rmse)],
    )
    print(
        f"trajectory: {len(run.frame_pairs)} steps, MAE {run.report.mae:.3f} m, "
        f"RMSE {run.report.rmse:.3f} m, {len(run.skipped)} skipped, "
        f"{run.seconds_per_step:.2f} s/step"
    )

    bbox_path = Path(args.bboxes) if args.bboxes else Path(args.seq) / "bboxes.txt"
    if bbox_path.is_file() and manifest.object_gt:
        boxes = read_bboxes(bbox_path)
        rows = []
        for box in boxes:
            if box.frame_index not in manifest.object_gt:
                continue
            if box.frame_index + 1 >= len(frames):
                continue
            gt_steps = evaluation.gt_relative_steps(
                manifest.gt_poses, [(box.frame_index, box.frame_index + 1)]
            )
            try:
                obj, _ = localize_object(
                    frames[box.frame_index], frames[box.frame_index + 1], box,
                    manifest.intrinsics,
                    scale=float(np.linalg.norm(gt_steps[0])),
                    scale_source=ScaleSource.GROUND_TRUTH,
                    feature_cfg=_feature_cfg(args), match_params=_match_params(args),
                    ransac_params=_ransac_params(args),
                    restrict_center_to_matched=True,
                )
            except PipelineError as exc:
                print(f"localization '{box.label}': failed ({type(exc).__name__}: {exc})")
                continue
            err = evaluation.localization_error(obj, manifest.object_gt[box.frame_index])
            rows.append((box.label, err))
            print(f"localization '{box.label}': error {err:.3f} m")
        if rows:
            evaluation.write_table(out / "localization_error.csv", ("object", "mae"), rows)
    return 0


def cmd_bench(args) -> int:
    manifest = load_sequence(args.seq, camera=args.camera)
    paths = manifest.image_paths[: max(3, args.max_frames)]
    frames = [read_image(p) for p in paths]
    K = manifest.intrinsics
    fcfg = _feature_cfg(args)
    mparams = _match_params(args)
    rparams = _ransac_params(args)

    detect_s = []
    feats = []
    for f in frames:
        t0 = time.perf_counter()
        feats.append(detect_and_describe(f, fcfg))
        detect_s.append(time.perf_counter() - t0)

    match_s = []
    pose_s = []
    for a, b in zip(feats, feats[1:]):
        t0 = time.perf_counter()
        _, corr = match_features(a, b, mparams)
        match_s.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        try:
            estimate_pose(corr, K, rparams)
        except PipelineError:
            pass
        pose_s.append(time.perf_counter() - t0)

    w, h = frames[0].width, frames[0].height
    box = BoundingBox(0, "bench", w * 0.375, h * 0.375, w * 0.625, h * 0.625)
    t0 = time.perf_counter()
    try:
        localize_object(frames[0], frames[1], box, K, feature_cfg=fcfg,
                        match_params=mparams, ransac_params=rparams,
                        restrict_center_to_matched=True)
        init_s = time.perf_counter() - t0
        init_note = ""
    except PipelineError as exc:
        init_s = time.perf_counter() - t0
        init_note = f" (failed: {type(exc).__name__})"

    det = float(np.mean(detect_s))
    mat = float(np.mean(match_s))
    pos = float(np.mean(pose_s))
    print(f"resolution: {w}x{h} ({len(frames)} frames)")
    print(f"object localization (two-frame init): {init_s:.3f} s{init_note}")
    print(f"trajectory estimation (per step):     {det + mat + pos:.3f} s")
    print(f"  feature detection:  {det:.3f} s")
    print(f"  matching:           {mat:.3f} s")
    print(f"  pose estimation:    {pos:.3f} s")
    return 0


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"pipeline error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
