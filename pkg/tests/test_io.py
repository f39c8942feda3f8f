import numpy as np
import pytest
from PIL import Image

from monoguide import errors
from monoguide.features import GrayImage
from monoguide.geometry import RelativePose, ScaleSource, WorldPoint
from monoguide.io import (
    GroundTruthPose,
    SequenceManifest,
    gt_positions_in_start_frame,
    load_sequence,
    read_bboxes,
    read_image,
    read_kitti_calib,
    read_kitti_poses,
    read_object_gt,
    read_trajectory_csv,
    render_overlay,
    write_outputs,
    write_pgm,
)
from monoguide.localization import ObjectLocation
from monoguide.navigation import Advice, AdviceKind, NavLog, NavStep

KITTI_CALIB_LINE = (
    "P0: 7.188560e+02 0 6.071928e+02 0 0 7.188560e+02 1.852157e+02 0 0 0 1 0"
)


# -- calibration ------------------------------------------------------------------

def test_read_kitti_calib_devkit_line(tmp_path):
    path = tmp_path / "calib.txt"
    path.write_text(KITTI_CALIB_LINE + "\n")
    K = read_kitti_calib(path)
    assert K.fu == pytest.approx(718.856)
    assert K.fv == pytest.approx(718.856)
    assert K.cu == pytest.approx(607.1928)
    assert K.cv == pytest.approx(185.2157)


def test_read_kitti_calib_wrong_token_count(tmp_path):
    path = tmp_path / "calib.txt"
    path.write_text("P0: 1 2 3 4 5 6 7 8 9 10 11\n")
    with pytest.raises(errors.ParseError):
        read_kitti_calib(path)


def test_read_kitti_calib_identity(tmp_path):
    path = tmp_path / "calib.txt"
    path.write_text("P0: 1 0 0 0 0 1 0 0 0 0 1 0\n")
    K = read_kitti_calib(path)
    assert (K.fu, K.fv, K.cu, K.cv) == (1.0, 1.0, 0.0, 0.0)


def test_read_kitti_calib_missing_camera(tmp_path):
    path = tmp_path / "calib.txt"
    path.write_text(KITTI_CALIB_LINE + "\n")
    with pytest.raises(errors.MissingCamera):
        read_kitti_calib(path, camera="P2")


def test_read_kitti_calib_non_numeric(tmp_path):
    path = tmp_path / "calib.txt"
    path.write_text("P0: a b c d e f g h i j k l\n")
    with pytest.raises(errors.ParseError):
        read_kitti_calib(path)


# -- poses -----------------------------------------------------------------------

def test_read_poses_identity_line(tmp_path):
    path = tmp_path / "poses.txt"
    path.write_text("1 0 0 0 0 1 0 0 0 0 1 0\n")
    poses = read_kitti_poses(path)
    assert len(poses) == 1
    assert np.allclose(poses[0].rotation, np.eye(3))
    assert np.allclose(poses[0].position, 0.0)


def test_read_poses_relative_step(tmp_path):
    path = tmp_path / "poses.txt"
    path.write_text(
        "1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 0 0 1 0 0 0 0 1 1\n"
    )
    poses = read_kitti_poses(path)
    step = poses[1].position - poses[0].position
    assert np.allclose(step, [0, 0, 1])


def test_read_poses_rejects_bad_rotation(tmp_path):
    path = tmp_path / "poses.txt"
    path.write_text("2 0 0 0 0 1 0 0 0 0 1 0\n")
    with pytest.raises(errors.ParseError):
        read_kitti_poses(path)


def test_read_poses_wrong_field_count(tmp_path):
    path = tmp_path / "poses.txt"
    path.write_text("1 0 0 0 0 1 0 0 0 0 1\n")
    with pytest.raises(errors.ParseError):
        read_kitti_poses(path)


def test_gt_positions_in_start_frame(tmp_path):
    # start pose rotated 90 degrees about y: world +z becomes camera -x
    R = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]])
    p0 = GroundTruthPose(np.hstack((R, np.zeros((3, 1)))))
    p1 = GroundTruthPose(np.hstack((R, np.array([[0.0], [0.0], [2.0]]))))
    rel = gt_positions_in_start_frame([p0, p1])
    assert np.allclose(rel[0], 0.0)
    assert np.allclose(rel[1], [0.0, 0.0, -2.0] @ np.eye(3)) or np.allclose(
        rel[1], R.T @ [0, 0, 2]
    )


# -- images -----------------------------------------------------------------------

def test_pgm_round_trip_bit_exact(tmp_path):
    raster = np.array([[0, 64], [128, 255]], dtype=np.uint8)
    path = tmp_path / "tiny.pgm"
    write_pgm(GrayImage(raster), path)
    back = read_image(path)
    assert np.array_equal(back.pixels, raster)


def test_png_and_pgm_agree(tmp_path):
    rng = np.random.default_rng(7)
    raster = rng.integers(0, 256, (40, 60), dtype=np.uint8)
    pgm = tmp_path / "img.pgm"
    png = tmp_path / "img.png"
    write_pgm(GrayImage(raster), pgm)
    Image.fromarray(raster, mode="L").save(png)
    a = read_image(pgm)
    b = read_image(png)
    assert np.array_equal(a.pixels, b.pixels)


def test_rgb_png_luma_conversion(tmp_path):
    rgb = np.zeros((2, 2, 3), dtype=np.uint8)
    rgb[0, 0] = (255, 0, 0)
    rgb[0, 1] = (0, 255, 0)
    rgb[1, 0] = (0, 0, 255)
    rgb[1, 1] = (10, 20, 30)
    path = tmp_path / "rgb.png"
    Image.fromarray(rgb, mode="RGB").save(path)
    img = read_image(path)
    expected = np.floor(rgb @ np.array([0.299, 0.587, 0.114]) + 0.5).astype(np.uint8)
    assert np.array_equal(img.pixels, expected)


def test_ascii_pgm_is_unsupported(tmp_path):
    path = tmp_path / "ascii.pgm"
    path.write_text("P2\n2 2\n255\n0 1 2 3\n")
    with pytest.raises(errors.UnsupportedFormat):
        read_image(path)


def test_unknown_format(tmp_path):
    path = tmp_path / "what.bin"
    path.write_bytes(b"\x00\x01\x02garbage")
    with pytest.raises(errors.UnsupportedFormat):
        read_image(path)


def test_truncated_pgm_is_corrupt(tmp_path):
    path = tmp_path / "short.pgm"
    path.write_bytes(b"P5\n4 4\n255\n\x00\x01")
    with pytest.raises(errors.CorruptFile):
        read_image(path)


def test_truncated_png_is_corrupt(tmp_path):
    raster = np.zeros((20, 20), dtype=np.uint8)
    path = tmp_path / "broken.png"
    Image.fromarray(raster, mode="L").save(path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(errors.CorruptFile):
        read_image(path)


def test_pgm_with_comments(tmp_path):
    path = tmp_path / "comment.pgm"
    path.write_bytes(b"P5\n# a comment\n2 1\n# more\n255\n\x07\x09")
    img = read_image(path)
    assert img.width == 2 and img.height == 1
    assert list(img.pixels[0]) == [7, 9]


def test_pgm_wrong_maxval(tmp_path):
    path = tmp_path / "deep.pgm"
    path.write_bytes(b"P5\n2 1\n65535\n\x00\x00\x00\x00")
    with pytest.raises(errors.UnsupportedFormat):
        read_image(path)


# -- bounding boxes -----------------------------------------------------------------

def test_read_bboxes(tmp_path):
    path = tmp_path / "boxes.txt"
    path.write_text("0 car 100 120 300 240\n\n3 person 10 20 30 40\n")
    boxes = read_bboxes(path)
    assert len(boxes) == 2
    assert boxes[0].frame_index == 0 and boxes[0].label == "car"
    assert boxes[0].u_max == 300.0
    assert boxes[1].frame_index == 3 and boxes[1].label == "person"


def test_read_bboxes_inverted(tmp_path):
    path = tmp_path / "boxes.txt"
    path.write_text("0 car 300 120 100 240\n")
    with pytest.raises(errors.InvertedBox):
        read_bboxes(path)


def test_read_bboxes_empty_file(tmp_path):
    path = tmp_path / "boxes.txt"
    path.write_text("")
    assert read_bboxes(path) == []


def test_read_bboxes_bad_tokens(tmp_path):
    path = tmp_path / "boxes.txt"
    path.write_text("0 car 1 2 3\n")
    with pytest.raises(errors.ParseError):
        read_bboxes(path)


def test_read_object_gt(tmp_path):
    path = tmp_path / "object_gt.txt"
    path.write_text("0 1.0 0.5 4.0\n2 0.9 0.5 3.4\n")
    gt = read_object_gt(path)
    assert set(gt) == {0, 2}
    assert np.allclose(gt[2], [0.9, 0.5, 3.4])


# -- navigation outputs ----------------------------------------------------------------

def _small_log(n_steps=3):
    log = NavLog()
    log.trajectory.append((0, np.zeros(3)))
    for i in range(1, n_steps + 1):
        pose = RelativePose(
            R=np.eye(3), t=np.array([0.0, 0.0, -1.0]), scale=0.3,
            scale_source=ScaleSource.GROUND_TRUTH,
        )
        obj = ObjectLocation(
            WorldPoint(0.123456789, 0.2, 4.0 - 0.3 * i), i, ScaleSource.GROUND_TRUTH
        )
        advice = Advice(AdviceKind.ON_COURSE, 1.25, "on course")
        log.records.append(
            NavStep(i, pose, obj, 1.25, advice, prev_frame_index=i - 1)
        )
        log.trajectory.append((i, np.array([0.0, 0.0, 0.3 * i])))
    return log


def test_empty_log_writes_headers_only(tmp_path):
    write_outputs(NavLog(), tmp_path)
    assert (tmp_path / "trajectory.csv").read_text() == "frame,tx,ty,tz,gt_tx,gt_ty,gt_tz\n"
    assert (tmp_path / "advice.csv").read_text() == "frame,angle_deg,advice\n"


def test_ten_step_log_has_ten_rows(tmp_path):
    write_outputs(_small_log(10), tmp_path)
    advice = (tmp_path / "advice.csv").read_text().strip().splitlines()
    objects = (tmp_path / "objects.csv").read_text().strip().splitlines()
    assert len(advice) == 11 and len(objects) == 11  # header + 10 rows
    traj = (tmp_path / "trajectory.csv").read_text().strip().splitlines()
    assert len(traj) == 12  # header + origin + 10 steps


def test_trajectory_csv_round_trip(tmp_path):
    log = _small_log(5)
    rng = np.random.default_rng(3)
    log.trajectory = [(i, rng.uniform(-20, 20, 3)) for i in range(6)]
    log.gt_positions = rng.uniform(-20, 20, (6, 3))
    write_outputs(log, tmp_path)
    frames, est, gt = read_trajectory_csv(tmp_path / "trajectory.csv")
    assert frames == [t[0] for t in log.trajectory]
    orig = np.array([t[1] for t in log.trajectory])
    assert np.abs(est - orig).max() < 1e-9
    assert np.abs(gt - log.gt_positions).max() < 1e-9


def test_overlay_marks_the_projected_object(tmp_path, default_K):
    rng = np.random.default_rng(5)
    frame = GrayImage(rng.integers(0, 200, (480, 640), dtype=np.uint8))
    log = _small_log(1)
    write_outputs(log, tmp_path, frames=[frame, frame], K=default_K, overlays=True)
    ppm = tmp_path / "overlays" / "step_000001.ppm"
    assert ppm.is_file()
    data = ppm.read_bytes()
    header, rest = data.split(b"\n", 1)
    assert header == b"P6"
    dims, rest = rest.split(b"\n", 1)
    _, rest = rest.split(b"\n", 1)
    w, h = (int(v) for v in dims.split())
    rgb = np.frombuffer(rest, dtype=np.uint8).reshape(h, w, 3)
    # reproject the logged object position through K and check the marker
    p = log.records[0].object_position.position
    u = default_K.fu * p.x / p.z + default_K.cu
    v = default_K.fv * p.y / p.z + default_K.cv
    assert tuple(rgb[int(round(v)), int(round(u))]) == (255, 0, 0)


def test_overlay_banner_color_tracks_advice(default_K):
    rng = np.random.default_rng(6)
    frame = GrayImage(rng.integers(0, 200, (100, 100), dtype=np.uint8))
    rgb = render_overlay(frame, None, None, None, Advice(AdviceKind.ARRIVED, None, "x"))
    assert tuple(rgb[0, 0]) == (0, 90, 220)


def test_write_outputs_io_failure(tmp_path):
    target = tmp_path / "blocked"
    target.write_text("a file, not a directory")
    with pytest.raises(errors.IoFailure):
        write_outputs(_small_log(1), target)


# -- sequence manifest ------------------------------------------------------------------

def test_load_sequence_round_trip(tmp_path):
    from monoguide.simulator import demo_fixture, write_sequence

    scene, script, K, _ = demo_fixture("straight")
    write_sequence(tmp_path, scene, script, K)
    manifest = load_sequence(tmp_path)
    assert len(manifest.image_paths) == len(script)
    assert manifest.intrinsics.fu == pytest.approx(K.fu)
    assert manifest.gt_poses is not None
    assert len(manifest.gt_poses) == len(script)
    assert manifest.object_gt is not None
    # ground-truth poses written camera-to-world: positions match the script
    for pose, cam in zip(manifest.gt_poses, script.poses):
        assert np.allclose(pose.position, cam.C, atol=1e-8)
        assert np.allclose(pose.rotation, cam.R.T, atol=1e-8)
    boxes = read_bboxes(tmp_path / "bboxes.txt")
    assert len(boxes) == 1 and boxes[0].frame_index == 0


def test_sequence_manifest_validation(tmp_path):
    with pytest.raises(ValueError):
        SequenceManifest(image_paths=("one.png",), intrinsics=None)


@pytest.mark.kitti
def test_kitti_sequence_06_pose_count_matches_images(kitti_root):
    poses = read_kitti_poses(kitti_root / "poses" / "06.txt")
    images = sorted((kitti_root / "sequences" / "06" / "image_0").glob("*.png"))
    assert len(poses) == len(images)


def test_readers_are_total_over_arbitrary_bytes(tmp_path):
    # any byte stream yields a value or a typed error, never a crash
    rng = np.random.default_rng(11)
    readers = (read_image, read_kitti_calib, read_kitti_poses, read_bboxes, read_object_gt)
    payloads = [
        b"", b"\x00" * 40, bytes(rng.integers(0, 256, 200, dtype=np.uint8).tolist()),
        b"P5\n\xff\xfe broken", "P0: 1 2 þ 4\n".encode("latin-1"),
        b"1 0 0 0" * 30,
    ]
    for i, payload in enumerate(payloads):
        path = tmp_path / f"fuzz_{i}.bin"
        path.write_bytes(payload)
        for reader in readers:
            try:
                reader(path)
            except errors.PipelineError:
                pass
