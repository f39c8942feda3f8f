"""Synthetic-scene oracle.

Generates known 3D points, scripted camera trajectories, exact or
noise-perturbed correspondences, and rendered images, so every geometric
contract can be checked against ground truth without external data.
Everything is reproducible from explicit seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NothingVisible
from .features import GrayImage, _resize_bilinear
from .geometry import CameraIntrinsics, CorrespondenceSet, RelativePose, ScaleSource

# rendered blobs are (2*STAMP_HALF+1)^2 random binary textures; big enough
# that descriptors are dominated by their own stamp, not by neighbors
STAMP_HALF = 5
BACKGROUND_GRAY = 128


def rot_y(angle_rad: float) -> np.ndarray:
    """Rotation about the +y axis; maps (0,0,1) to (sin a, 0, cos a)."""
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random rotation from a random axis and angle."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, math.pi)
    Kx = np.array(
        [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
    )
    return np.eye(3) + math.sin(angle) * Kx + (1.0 - math.cos(angle)) * (Kx @ Kx)


@dataclass(frozen=True, eq=False)
class CameraPose:
    """Ground-truth camera placement: ``x_cam = R @ (x_world - C)``."""

    R: np.ndarray
    C: np.ndarray

    def transform(self, points_world: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points_world, dtype=float))
        return (pts - self.C) @ np.asarray(self.R).T

    @classmethod
    def facing(cls, position, heading_rad: float = 0.0) -> "CameraPose":
        """Camera at ``position`` looking along the ground-plane heading
        (0 = world +z, positive toward +x)."""
        return cls(R=rot_y(heading_rad).T, C=np.asarray(position, dtype=float))


def relative_pose(cam_a: CameraPose, cam_b: CameraPose) -> RelativePose:
    """Ground-truth motion mapping frame-a coordinates to frame-b."""
    R = cam_b.R @ cam_a.R.T
    t_metric = cam_b.R @ (cam_a.C - cam_b.C)
    baseline = float(np.linalg.norm(t_metric))
    if baseline <= 0.0:
        raise ValueError("cameras coincide; relative pose has no translation direction")
    return RelativePose(
        R=R, t=t_metric / baseline, scale=baseline, scale_source=ScaleSource.GROUND_TRUTH
    )


@dataclass(frozen=True, eq=False)
class Scene:
    """World points plus a designated target cluster, reproducible by seed."""

    points: np.ndarray
    object_indices: np.ndarray
    seed: int

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3).copy()
        idx = np.asarray(self.object_indices, dtype=int).copy()
        pts.setflags(write=False)
        idx.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "object_indices", idx)

    def object_center(self) -> np.ndarray:
        return self.points[self.object_indices].mean(axis=0)


def make_scene(
    n_points: int = 100,
    seed: int = 0,
    x_range=(-4.0, 4.0),
    y_range=(-1.5, 1.5),
    z_range=(4.0, 12.0),
    object_center=None,
    object_points: int = 0,
    object_extent=(0.5, 0.5, 0.08),
) -> Scene:
    """Uniform random points in a box, plus an optional cluster around
    ``object_center`` forming the target. The cluster is nearly planar by
    default (like the face of a real object), which keeps its rendered
    texture rigid between nearby views."""
    rng = np.random.default_rng(seed)
    lo = np.array([x_range[0], y_range[0], z_range[0]])
    hi = np.array([x_range[1], y_range[1], z_range[1]])
    pts = rng.uniform(lo, hi, size=(n_points, 3))
    obj_idx = np.empty(0, dtype=int)
    if object_points > 0:
        if object_center is None:
            raise ValueError("object_points needs an object_center")
        center = np.asarray(object_center, dtype=float)
        half = np.broadcast_to(np.asarray(object_extent, dtype=float) / 2.0, (3,))
        cluster = center + rng.uniform(-half, half, size=(object_points, 3))
        obj_idx = np.arange(n_points, n_points + object_points)
        pts = np.vstack((pts, cluster))
    return Scene(points=pts, object_indices=obj_idx, seed=seed)


@dataclass(frozen=True, eq=False)
class CameraScript:
    """Ordered ground-truth camera poses of one run."""

    poses: tuple

    def __post_init__(self):
        object.__setattr__(self, "poses", tuple(self.poses))

    def __len__(self) -> int:
        return len(self.poses)

    def step_pose(self, i: int, j: int) -> RelativePose:
        return relative_pose(self.poses[i], self.poses[j])

    def positions(self) -> np.ndarray:
        """Camera centers, world frame, (n, 3)."""
        return np.array([p.C for p in self.poses])

    def object_in_frame(self, scene: Scene, i: int) -> np.ndarray:
        """Ground-truth target centroid in frame i's camera coordinates."""
        return self.poses[i].transform(scene.object_center())[0]


def walk_script(headings_rad, step_len: float, start=(0.0, 0.0, 0.0),
                facings_rad=None) -> CameraScript:
    """n steps along per-step ground-plane headings. The camera faces its
    current heading unless ``facings_rad`` decouples body orientation
    from the step direction (a chest camera keeps pointing forward while
    the gait sways). Returns n+1 poses."""
    headings = list(headings_rad)
    facings = list(facings_rad) if facings_rad is not None else headings
    if len(facings) != len(headings):
        raise ValueError("need one facing per step")
    pos = np.asarray(start, dtype=float).copy()
    poses = [CameraPose.facing(pos, facings[0])]
    for h, f in zip(headings, facings):
        d = np.array([math.sin(h), 0.0, math.cos(h)]) * step_len
        pos = pos + d
        poses.append(CameraPose.facing(pos, f))
    return CameraScript(poses=tuple(poses))


def pinhole_project(points_cam: np.ndarray, K: CameraIntrinsics) -> np.ndarray:
    """Exact pinhole projection of camera-frame points (callers guarantee
    positive depth)."""
    pts = np.atleast_2d(np.asarray(points_cam, dtype=float))
    z = pts[:, 2]
    return np.column_stack((K.fu * pts[:, 0] / z + K.cu, K.fv * pts[:, 1] / z + K.cv))


@dataclass(frozen=True, eq=False)
class SimulatedMatches:
    """Correspondences with ground truth attached."""

    correspondences: CorrespondenceSet
    true_mask: np.ndarray          # False where the pair was replaced by an outlier
    point_indices: np.ndarray      # scene point index per pair
    pose: RelativePose             # metric ground-truth motion a -> b


def project(
    scene: Scene,
    cam_a: CameraPose,
    cam_b: CameraPose,
    K: CameraIntrinsics,
    noise_sigma: float = 0.0,
    outlier_rate: float = 0.0,
    seed: int = 0,
    image_size=(640, 480),
) -> SimulatedMatches:
    """Project the scene into both cameras.

    Points behind either camera (or outside ``image_size`` when given)
    are dropped; Gaussian pixel noise is added to both sides; then an
    exact ``round(outlier_rate * n)`` of the pairs are replaced by
    points uniform over the image and flagged as outliers.
    """
    pts_a = cam_a.transform(scene.points)
    pts_b = cam_b.transform(scene.points)
    vis = (pts_a[:, 2] > 0.0) & (pts_b[:, 2] > 0.0)
    idx = np.nonzero(vis)[0]
    if len(idx) == 0:
        raise NothingVisible("no scene point is in front of both cameras")
    px_a = pinhole_project(pts_a[idx], K)
    px_b = pinhole_project(pts_b[idx], K)
    if image_size is not None:
        w, h = image_size
        inside = (
            (px_a[:, 0] >= 0) & (px_a[:, 0] < w) & (px_a[:, 1] >= 0) & (px_a[:, 1] < h)
            & (px_b[:, 0] >= 0) & (px_b[:, 0] < w) & (px_b[:, 1] >= 0) & (px_b[:, 1] < h)
        )
        idx, px_a, px_b = idx[inside], px_a[inside], px_b[inside]
        if len(idx) == 0:
            raise NothingVisible("no scene point projects inside both images")

    rng = np.random.default_rng(seed)
    if noise_sigma > 0.0:
        px_a = px_a + rng.normal(0.0, noise_sigma, px_a.shape)
        px_b = px_b + rng.normal(0.0, noise_sigma, px_b.shape)
    n = len(idx)
    true_mask = np.ones(n, dtype=bool)
    n_out = int(round(outlier_rate * n))
    if n_out > 0:
        if image_size is None:
            raise ValueError("outlier injection needs an image_size")
        w, h = image_size
        chosen = rng.choice(n, size=n_out, replace=False)
        px_a[chosen] = rng.uniform((0, 0), (w, h), size=(n_out, 2))
        px_b[chosen] = rng.uniform((0, 0), (w, h), size=(n_out, 2))
        true_mask[chosen] = False

    return SimulatedMatches(
        correspondences=CorrespondenceSet(points_a=px_a, points_b=px_b),
        true_mask=true_mask,
        point_indices=idx,
        pose=relative_pose(cam_a, cam_b),
    )


def _stamp(scene_seed: int, point_index: int) -> np.ndarray:
    """Deterministic high-contrast texture for one scene point: coarse
    random binary cells, bilinearly upsampled so the pattern stays stable
    under sub-pixel resampling (pixel-granular noise would alias), plus
    one forced bright corner cell so the intensity centroid is decisively
    off-center and the keypoint orientation is repeatable."""
    rng = np.random.default_rng(np.random.SeedSequence([scene_seed, point_index]))
    side = 2 * STAMP_HALF + 1
    coarse = (rng.integers(0, 2, size=(5, 5)) * 255).astype(np.uint8)
    cy, cx = ((0, 0), (0, 4), (4, 0), (4, 4))[rng.integers(0, 4)]
    coarse[cy, cx] = 255
    coarse[4 - cy, 4 - cx] = 0
    return _resize_bilinear(coarse, side, side)


def _splat(canvas: np.ndarray, stamp: np.ndarray, u: float, v: float) -> None:
    """Composite a stamp onto the float canvas at a sub-pixel position
    with a bilinear forward splat, so rendered blobs move continuously
    with the projection instead of snapping to the pixel grid."""
    side = stamp.shape[0]
    x0 = u - (side - 1) / 2.0
    y0 = v - (side - 1) / 2.0
    bx = int(math.floor(x0))
    by = int(math.floor(y0))
    fx = x0 - bx
    fy = y0 - by
    big = np.zeros((side + 1, side + 1))
    alpha = np.zeros((side + 1, side + 1))
    ones = np.ones_like(stamp, dtype=float)
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            weight = wy * wx
            if weight == 0.0:
                continue
            big[dy:dy + side, dx:dx + side] += weight * stamp
            alpha[dy:dy + side, dx:dx + side] += weight * ones
    region = canvas[by:by + side + 1, bx:bx + side + 1]
    filled = alpha > 0.0
    value = np.where(filled, big / np.where(filled, alpha, 1.0), 0.0)
    region[...] = np.where(filled, alpha * value + (1.0 - alpha) * region, region)


def render(
    scene: Scene, cam: CameraPose, K: CameraIntrinsics, img_size=(640, 480)
) -> GrayImage:
    """Draw a textured blob at every visible projected point on a
    mid-gray background, with sub-pixel placement. An empty visible set
    yields the plain background."""
    w, h = img_size
    if w < 64 or h < 64:
        raise ValueError("render needs an image of at least 64x64")
    canvas = np.full((h, w), float(BACKGROUND_GRAY))
    pts_cam = cam.transform(scene.points)
    vis = pts_cam[:, 2] > 0.0
    idx = np.nonzero(vis)[0]
    if len(idx) == 0:
        return GrayImage(canvas.astype(np.uint8))
    px = pinhole_project(pts_cam[idx], K)
    margin = STAMP_HALF + 2
    for i, (x, y) in zip(idx, px):
        if not (margin <= x < w - margin and margin <= y < h - margin):
            continue
        _splat(canvas, _stamp(scene.seed, int(i)).astype(float), float(x), float(y))
    return GrayImage(np.rint(np.clip(canvas, 0.0, 255.0)).astype(np.uint8))


def render_script(scene: Scene, script: CameraScript, K: CameraIntrinsics,
                  img_size=(640, 480)) -> list[GrayImage]:
    return [render(scene, pose, K, img_size) for pose in script.poses]


def object_box(scene: Scene, cam: CameraPose, K: CameraIntrinsics,
               margin: float = 4.0, frame_index: int = 0, label: str = "target",
               img_size=None):
    """Pixel bounding box of the target cluster in one frame, optionally
    clipped to the image."""
    from .localization import BoundingBox

    pts = cam.transform(scene.points[scene.object_indices])
    if np.any(pts[:, 2] <= 0.0):
        raise NothingVisible("target cluster not fully in front of the camera")
    px = pinhole_project(pts, K)
    u_min, v_min = px[:, 0].min() - margin, px[:, 1].min() - margin
    u_max, v_max = px[:, 0].max() + margin, px[:, 1].max() + margin
    if img_size is not None:
        w, h = img_size
        u_min, v_min = max(0.0, u_min), max(0.0, v_min)
        u_max, v_max = min(float(w), u_max), min(float(h), v_max)
    return BoundingBox(
        frame_index=frame_index, label=label,
        u_min=float(u_min), v_min=float(v_min),
        u_max=float(u_max), v_max=float(v_max),
    )


def write_sequence(out_dir, scene: Scene, script: CameraScript, K: CameraIntrinsics,
                   img_size=(640, 480), label: str = "target") -> dict:
    """Dump a simulated run to disk in the exact dataset formats the io
    module reads: PGM frames under image_0/, a KITTI-style calib.txt and
    poses.txt, the target's frame-0 bounding box, and per-frame
    ground-truth object positions."""
    from . import io as dataio
    from pathlib import Path

    out = Path(out_dir)
    img_dir = out / "image_0"
    img_dir.mkdir(parents=True, exist_ok=True)
    for i, cam in enumerate(script.poses):
        dataio.write_pgm(render(scene, cam, K, img_size), img_dir / f"{i:06d}.pgm")

    row = f"{K.fu:.9e} 0 {K.cu:.9e} 0 0 {K.fv:.9e} {K.cv:.9e} 0 0 0 1 0"
    calib = "".join(f"P{i}: {row}\n" for i in range(4))
    (out / "calib.txt").write_text(calib)

    with open(out / "poses.txt", "w") as fh:
        for cam in script.poses:
            cam_to_world = np.hstack((cam.R.T, cam.C.reshape(3, 1)))
            fh.write(" ".join(f"{v:.9e}" for v in cam_to_world.ravel()) + "\n")

    box = object_box(scene, script.poses[0], K, label=label, img_size=img_size)
    (out / "bboxes.txt").write_text(
        f"0 {label} {box.u_min:.3f} {box.v_min:.3f} {box.u_max:.3f} {box.v_max:.3f}\n"
    )

    with open(out / "object_gt.txt", "w") as fh:
        for i in range(len(script)):
            c = script.object_in_frame(scene, i)
            fh.write(f"{i} {c[0]:.9e} {c[1]:.9e} {c[2]:.9e}\n")
    return {"box": box, "frames": len(script)}


# -- canned walk-to-target scenarios (shared by the CLI and the tests) --------

# wide-angle chest camera: the 45-degree-offset target must stay inside the
# field of view for the two initialization frames
DEMO_INTRINSICS = CameraIntrinsics(fu=260.0, fv=260.0, cu=320.0, cv=240.0)


def demo_fixture(scenario: str = "straight", seed: int = 7, step_len: float = 0.3):
    """A ready-to-run scene, camera script, and target for one scenario.

    ``straight``: target dead ahead at ~4.9 m, camera walks straight.
    ``offset45``: target 45 degrees to the right, camera walks straight.
    ``wrong-turn``: target ahead, camera makes a 40-degree wrong turn
    mid-route, then heads back toward the target.

    Returns (scene, script, K, wrong_turn_steps) where wrong_turn_steps
    lists the indices of steps walked on the wrong heading.
    """
    # every walk carries an alternating gait sway on the step direction:
    # real locomotion never holds the target exactly on the focus of
    # expansion, and a walk that did would hit the documented
    # zero-parallax degeneracy of two-view triangulation at startup. The
    # camera keeps facing the intended course (chest mount), with body
    # turns limited to a physical rate.
    sway = math.radians(6.0)

    def swayed(base, k):
        return base + (sway if k % 2 == 0 else -sway)

    if scenario == "straight":
        target = (0.0, 0.3, 4.9)
        base = [0.0] * 20
        wrong = []
    elif scenario == "offset45":
        target = (4.6, 0.3, 4.6)
        base = [0.0] * 14
        wrong = []
    elif scenario == "wrong-turn":
        target = (0.0, 0.3, 6.5)
        base = [0.0] * 4 + [math.radians(40.0)] * 3
        wrong = [4, 5, 6]
        # walk back toward the target from wherever the wrong turn ended
        pos = np.zeros(3)
        for k, head in enumerate(base):
            h = swayed(head, k)
            pos = pos + np.array([math.sin(h), 0.0, math.cos(h)]) * step_len
        for k in range(len(base), len(base) + 22):
            to_target = np.asarray(target) - pos
            head = math.atan2(to_target[0], to_target[2])
            base.append(head)
            h = swayed(head, k)
            pos = pos + np.array([math.sin(h), 0.0, math.cos(h)]) * step_len
    else:
        raise ValueError(f"unknown scenario {scenario!r}")

    headings = [swayed(b, k) for k, b in enumerate(base)]
    max_turn = math.radians(15.0)
    facings = []
    face = base[0]
    for b in base:
        face += min(max(b - face, -max_turn), max_turn)
        facings.append(face)

    scene = make_scene(
        n_points=120, seed=seed,
        x_range=(-5.0, 5.0), y_range=(-2.0, 2.0), z_range=(5.5, 10.0),
        object_center=target, object_points=9, object_extent=(0.55, 0.55, 0.06),
    )
    script = walk_script(headings, step_len, facings_rad=facings)
    return scene, script, DEMO_INTRINSICS, wrong
