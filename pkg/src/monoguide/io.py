"""Dataset ingestion and result serialization.

Readers are total over file *content*: any byte stream yields either a
value or a typed error from :mod:`.errors`, never an uncaught crash.
Formats handled: KITTI odometry ``calib.txt`` and pose files, binary PGM
(P5, maxval 255), 8-bit grayscale/RGB PNG, a plain-text bounding-box
format, and the CSV/PPM outputs of a navigation run.
"""

from __future__ import annotations

import io as _stdio
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    CorruptFile,
    InvertedBox,
    IoFailure,
    MissingCamera,
    ParseError,
    UnsupportedFormat,
)
from .features import GrayImage
from .geometry import CameraIntrinsics
from .localization import BoundingBox
from .navigation import NavLog

CSV_FLOAT = "{:.9f}"            # fixed decimals so round trips hold to 1e-9
TRAJECTORY_HEADER = "frame,tx,ty,tz,gt_tx,gt_ty,gt_tz"
ADVICE_HEADER = "frame,angle_deg,advice"
OBJECTS_HEADER = "frame,ox,oy,oz"

# RGB -> gray luma weights, rounded half-up to 8 bit
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True, eq=False)
class GroundTruthPose:
    """One camera-to-world [R|t] row of a KITTI pose file, meters."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float).reshape(3, 4).copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        R = m[:, :3]
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-6:
            raise ValueError("rotation block is not orthonormal within 1e-6")

    @property
    def rotation(self) -> np.ndarray:
        return self.matrix[:, :3]

    @property
    def position(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return self.matrix[:, 3]


@dataclass(frozen=True, eq=False)
class SequenceManifest:
    """Everything known about one image sequence on disk."""

    image_paths: tuple
    intrinsics: CameraIntrinsics
    gt_poses: tuple | None = None
    object_gt: dict | None = None

    def __post_init__(self):
        paths = tuple(Path(p) for p in self.image_paths)
        object.__setattr__(self, "image_paths", paths)
        if len(paths) < 2:
            raise ValueError("a sequence needs at least 2 images")
        if self.gt_poses is not None:
            poses = tuple(self.gt_poses)
            if len(poses) != len(paths):
                raise ValueError(
                    f"pose count {len(poses)} != image count {len(paths)}"
                )
            object.__setattr__(self, "gt_poses", poses)


# -- KITTI text files ---------------------------------------------------------

def read_kitti_calib(path, camera: str = "P0") -> CameraIntrinsics:
    """Intrinsics from a KITTI calibration file.

    Picks the ``P0:``..``P3:`` projection line of the requested camera,
    expects 12 row-major floats, and reads fu, fv, cu, cv from entries
    (0,0), (1,1), (0,2), (1,2).
    """
    text = Path(path).read_text(errors="replace")
    tag = camera + ":"
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.startswith(tag):
            continue
        tokens = line[len(tag):].split()
        if len(tokens) != 12:
            raise ParseError(
                f"{path}:{lineno}: expected 12 values after {tag}, got {len(tokens)}"
            )
        try:
            vals = [float(tok) for tok in tokens]
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: non-numeric value ({exc})") from exc
        P = np.array(vals).reshape(3, 4)
        try:
            return CameraIntrinsics(fu=P[0, 0], fv=P[1, 1], cu=P[0, 2], cv=P[1, 2])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
    raise MissingCamera(f"{path}: no '{tag}' line")


def read_kitti_poses(path) -> list[GroundTruthPose]:
    """Ground-truth poses: one line of 12 row-major floats per frame."""
    poses = []
    with open(path, errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            tokens = line.split()
            if len(tokens) != 12:
                raise ParseError(
                    f"{path}:{lineno}: expected 12 values, got {len(tokens)}"
                )
            try:
                vals = [float(tok) for tok in tokens]
                poses.append(GroundTruthPose(np.array(vals).reshape(3, 4)))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return poses


def gt_camera_positions(poses) -> np.ndarray:
    """Camera centers (n, 3) in world coordinates."""
    return np.array([p.position for p in poses])


def gt_positions_in_start_frame(poses) -> np.ndarray:
    """Camera centers expressed in the first pose's camera frame, which is
    the coordinate system of an estimated trajectory."""
    R0 = poses[0].rotation
    C0 = poses[0].position
    return np.array([R0.T @ (p.position - C0) for p in poses])


# -- rasters -------------------------------------------------------------------

def _parse_pgm(data: bytes) -> GrayImage:
    pos = 2  # past the magic
    tokens = []
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] not in (0x0A, 0x0D):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise CorruptFile("truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte separates header and raster
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise CorruptFile(f"non-numeric PGM header: {exc}") from exc
    if width <= 0 or height <= 0:
        raise CorruptFile(f"bad PGM dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedFormat(f"only maxval 255 PGM supported, got {maxval}")
    raster = data[pos:pos + width * height]
    if len(raster) < width * height:
        raise CorruptFile(
            f"PGM raster truncated: need {width * height} bytes, have {len(raster)}"
        )
    px = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return GrayImage(px)


def _parse_png(data: bytes) -> GrayImage:
    try:
        img = Image.open(_stdio.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise CorruptFile(f"broken PNG: {exc}") from exc
    if img.mode == "L":
        return GrayImage(np.asarray(img, dtype=np.uint8))
    if img.mode == "RGB":
        rgb = np.asarray(img, dtype=np.float64)
        gray = np.floor(rgb @ _LUMA + 0.5)
        return GrayImage(np.clip(gray, 0, 255).astype(np.uint8))
    raise UnsupportedFormat(f"PNG mode {img.mode!r}; only 8-bit L or RGB supported")


def read_image(path) -> GrayImage:
    """Grayscale raster from binary PGM (P5) or 8-bit PNG; RGB PNGs are
    converted with luma weights 0.299/0.587/0.114, rounded."""
    data = Path(path).read_bytes()
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return _parse_png(data)
    if data[:2] == b"P5":
        return _parse_pgm(data)
    if data[:2] in (b"P2", b"P1", b"P3", b"P4", b"P6"):
        raise UnsupportedFormat(
            f"{data[:2].decode()} netpbm variant not supported (binary P5 only)"
        )
    raise UnsupportedFormat(f"{path}: unknown image format")


def write_pgm(img: GrayImage, path) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{img.width} {img.height}\n255\n".encode())
            fh.write(img.pixels.tobytes())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def write_ppm(rgb: np.ndarray, path) -> None:
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    try:
        with open(path, "wb") as fh:
            fh.write(f"P6\n{w} {h}\n255\n".encode())
            fh.write(rgb.tobytes())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


# -- annotations ----------------------------------------------------------------

def read_bboxes(path) -> list[BoundingBox]:
    """Bounding boxes, one per line: ``frame_index label u_min v_min u_max v_max``."""
    boxes = []
    with open(path, errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            tokens = line.split()
            if len(tokens) != 6:
                raise ParseError(f"{path}:{lineno}: expected 6 fields, got {len(tokens)}")
            try:
                frame = int(tokens[0])
                coords = [float(t) for t in tokens[2:]]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            if frame < 0:
                raise ParseError(f"{path}:{lineno}: negative frame index")
            try:
                boxes.append(BoundingBox(frame, tokens[1], *coords))
            except ValueError as exc:
                raise InvertedBox(f"{path}:{lineno}: {exc}") from exc
    return boxes


def read_object_gt(path) -> dict[int, np.ndarray]:
    """Ground-truth object positions: ``frame X Y Z`` per line, in that
    frame's camera coordinates."""
    out: dict[int, np.ndarray] = {}
    with open(path, errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            tokens = line.split()
            if len(tokens) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 fields, got {len(tokens)}")
            try:
                out[int(tokens[0])] = np.array([float(t) for t in tokens[1:]])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return out


# -- sequence discovery ----------------------------------------------------------

def load_sequence(seq_dir, camera: str = "P0", poses_path=None) -> SequenceManifest:
    """Assemble a manifest from a sequence directory.

    Expects KITTI layout: images under ``image_0/`` (or ``image_1/``...
    matching the camera id, falling back to the directory itself),
    ``calib.txt`` alongside, optional ``poses.txt`` and ``object_gt.txt``.
    """
    seq_dir = Path(seq_dir)
    img_dir = seq_dir / f"image_{camera[1:]}"
    if not img_dir.is_dir():
        img_dir = seq_dir
    paths = sorted(
        p for p in img_dir.iterdir() if p.suffix.lower() in (".png", ".pgm")
    )
    intr = read_kitti_calib(seq_dir / "calib.txt", camera=camera)
    poses = None
    pose_file = Path(poses_path) if poses_path else seq_dir / "poses.txt"
    if pose_file.is_file():
        poses = read_kitti_poses(pose_file)
    object_gt = None
    gt_file = seq_dir / "object_gt.txt"
    if gt_file.is_file():
        object_gt = read_object_gt(gt_file)
    return SequenceManifest(
        image_paths=tuple(paths), intrinsics=intr,
        gt_poses=tuple(poses) if poses is not None else None, object_gt=object_gt,
    )


# -- run outputs -------------------------------------------------------------------

def _fmt(x: float) -> str:
    return CSV_FLOAT.format(x)


def write_outputs(log: NavLog, out_dir, frames=None, K=None, overlays: bool = False) -> None:
    """Serialize a navigation log.

    Always writes ``trajectory.csv`` (cumulative camera position, plus
    ground truth when attached to the log), ``advice.csv``, and
    ``objects.csv`` (per-step target position, so evaluation can run from
    the artifacts alone). With ``overlays=True`` and the frames and
    intrinsics provided, also renders one PPM per step showing matches,
    the projected target, and an advice banner.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "trajectory.csv", "w") as fh:
            fh.write(TRAJECTORY_HEADER + "\n")
            for frame, center in log.trajectory:
                row = [str(frame)] + [_fmt(c) for c in center]
                if log.gt_positions is not None and frame < len(log.gt_positions):
                    row += [_fmt(c) for c in log.gt_positions[frame]]
                else:
                    row += ["", "", ""]
                fh.write(",".join(row) + "\n")
        with open(out / "advice.csv", "w") as fh:
            fh.write(ADVICE_HEADER + "\n")
            for rec in log.records:
                angle = "" if rec.angle is None else _fmt(rec.angle)
                if rec.advice is not None:
                    kind = rec.advice.kind.value
                else:
                    kind = "skipped" if rec.skipped else "none"
                fh.write(f"{rec.frame_index},{angle},{kind}\n")
        with open(out / "objects.csv", "w") as fh:
            fh.write(OBJECTS_HEADER + "\n")
            for rec in log.records:
                p = rec.object_position.position
                fh.write(
                    f"{rec.frame_index},{_fmt(p.x)},{_fmt(p.y)},{_fmt(p.z)}\n"
                )
    except OSError as exc:
        raise IoFailure(str(exc)) from exc

    if overlays and frames is not None and K is not None:
        overlay_dir = out / "overlays"
        try:
            overlay_dir.mkdir(exist_ok=True)
        except OSError as exc:
            raise IoFailure(str(exc)) from exc
        for rec in log.records:
            if rec.frame_index >= len(frames):
                continue
            rgb = render_overlay(
                frames[rec.frame_index],
                rec.points_prev,
                rec.points_cur,
                _object_pixel(rec, K, frames[rec.frame_index]),
                rec.advice,
            )
            write_ppm(rgb, overlay_dir / f"step_{rec.frame_index:06d}.ppm")


def read_trajectory_csv(path):
    """Parse a trajectory.csv back into (frames, est (n,3), gt (n,3) | None)."""
    frames = []
    est = []
    gt = []
    with open(path, errors="replace") as fh:
        header = fh.readline().strip()
        if header != TRAJECTORY_HEADER:
            raise ParseError(f"{path}: unexpected header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            cells = line.rstrip("\n").split(",")
            if len(cells) != 7:
                raise ParseError(f"{path}:{lineno}: expected 7 cells")
            try:
                frames.append(int(cells[0]))
                est.append([float(c) for c in cells[1:4]])
                gt.append([float(c) for c in cells[4:7]] if cells[4] else None)
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    gt_arr = None
    if gt and all(g is not None for g in gt):
        gt_arr = np.array(gt)
    return frames, np.array(est), gt_arr


# -- overlays --------------------------------------------------------------------

_ADVICE_COLORS = {
    "on_course": (0, 160, 0),
    "veer_left": (230, 140, 0),
    "veer_right": (230, 140, 0),
    "arrived": (0, 90, 220),
}
_MATCH_COLOR = (0, 200, 200)
_POINT_COLOR = (0, 220, 0)
_OBJECT_COLOR = (255, 0, 0)


def _object_pixel(rec, K: CameraIntrinsics, frame: GrayImage):
    p = rec.object_position.position
    if p.z <= 0.0:
        return None
    u = K.fu * p.x / p.z + K.cu
    v = K.fv * p.y / p.z + K.cv
    if not (0 <= u < frame.width and 0 <= v < frame.height):
        return None
    return (u, v)


def _draw_square(rgb, u, v, half, color):
    h, w, _ = rgb.shape
    x0, x1 = max(0, int(u) - half), min(w, int(u) + half + 1)
    y0, y1 = max(0, int(v) - half), min(h, int(v) + half + 1)
    if x0 < x1 and y0 < y1:
        rgb[y0:y1, x0:x1] = color


def _draw_line(rgb, p0, p1, color):
    h, w, _ = rgb.shape
    n = int(max(abs(p1[0] - p0[0]), abs(p1[1] - p0[1]))) + 1
    xs = np.rint(np.linspace(p0[0], p1[0], n)).astype(int)
    ys = np.rint(np.linspace(p0[1], p1[1], n)).astype(int)
    ok = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    rgb[ys[ok], xs[ok]] = color


def _draw_cross(rgb, u, v, arm, color):
    h, w, _ = rgb.shape
    x, y = int(round(u)), int(round(v))
    if not (0 <= x < w and 0 <= y < h):
        return
    rgb[max(0, y - arm):min(h, y + arm + 1), x] = color
    rgb[y, max(0, x - arm):min(w, x + arm + 1)] = color


def render_overlay(frame: GrayImage, points_prev, points_cur, object_px, advice) -> np.ndarray:
    """Diagnostic raster for one step: match segments, current keypoints,
    the projected target position (red cross, drawn last), and a banner
    colored by the advice kind."""
    rgb = np.repeat(frame.pixels[:, :, None], 3, axis=2).copy()
    if points_prev is not None and points_cur is not None:
        for (u0, v0), (u1, v1) in zip(points_prev, points_cur):
            _draw_line(rgb, (u0, v0), (u1, v1), _MATCH_COLOR)
        for u, v in points_cur:
            _draw_square(rgb, u, v, 1, _POINT_COLOR)
    color = (128, 128, 128)
    if advice is not None:
        color = _ADVICE_COLORS[advice.kind.value]
    rgb[0:10, :] = color
    if object_px is not None:
        _draw_cross(rgb, object_px[0], object_px[1], 6, _OBJECT_COLOR)
    return rgb
