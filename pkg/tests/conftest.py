import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from monoguide.geometry import CameraIntrinsics, ScaleSource
from monoguide.navigation import NavConfig, ScalePolicy, run_navigation
from monoguide.simulator import demo_fixture, object_box, render_script

KITTI_ENV = "KITTI_ODOMETRY_DIR"


@pytest.fixture(scope="session")
def default_K():
    return CameraIntrinsics(fu=600.0, fv=600.0, cu=320.0, cv=240.0)


@pytest.fixture(scope="session")
def kitti_root():
    root = os.environ.get(KITTI_ENV)
    if not root or not Path(root).is_dir():
        pytest.skip(f"set {KITTI_ENV} to the KITTI odometry root for this test")
    return Path(root)


@pytest.fixture(scope="session")
def kitti_frame_paths(kitti_root):
    seq = kitti_root / "sequences" / "06" / "image_0"
    paths = sorted(seq.glob("*.png"))
    if len(paths) < 19:
        pytest.skip("KITTI sequence 06 images not found")
    return paths[3:19]


@pytest.fixture(scope="session")
def kitti_K():
    # the sample calibration line shipped with the KITTI odometry devkit
    return CameraIntrinsics(fu=718.856, fv=718.856, cu=607.1928, cv=185.2157)


def _run_scenario(name):
    scene, script, K, wrong_steps = demo_fixture(name)
    frames = render_script(scene, script, K)
    box = object_box(scene, script.poses[0], K, img_size=(640, 480))
    policy = ScalePolicy(source=ScaleSource.GROUND_TRUTH, gt_positions=script.positions())
    log = run_navigation(frames, box, K, NavConfig(scale=policy))
    return {
        "scene": scene,
        "script": script,
        "K": K,
        "frames": frames,
        "box": box,
        "log": log,
        "wrong_steps": wrong_steps,
    }


@pytest.fixture(scope="session")
def straight_run():
    return _run_scenario("straight")


@pytest.fixture(scope="session")
def offset_run():
    return _run_scenario("offset45")


@pytest.fixture(scope="session")
def wrong_turn_run():
    return _run_scenario("wrong-turn")
