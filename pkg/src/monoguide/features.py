"""Multi-scale corner detection and rotated binary descriptors.

Built from scratch on numpy: a segment-test corner detector over an
image pyramid, intensity-centroid orientation, and a 256-bit steered
comparison descriptor using the frozen table in :mod:`.pattern`.

Everything here is deterministic: identical image and config give a
bit-identical FeatureSet.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ImageTooSmall, MarginViolation
from .pattern import SAFE_MARGIN, SAMPLING_PATTERN

# Bresenham circle of radius 3 as (dx, dy), clockwise from 12 o'clock.
FAST_CIRCLE = (
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
)
FAST_ARC = 9          # contiguous circle pixels required
ORIENTATION_RADIUS = 15
MIN_IMAGE_SIDE = 32


def _build_segment_lut(arc: int) -> np.ndarray:
    """LUT over 16-bit circle masks: does the mask contain `arc` contiguous
    set bits (circularly)?"""
    masks = np.arange(1 << 16, dtype=np.uint32)
    wrapped = masks | (masks << np.uint32(16))
    run = np.uint32((1 << arc) - 1)
    ok = np.zeros(1 << 16, dtype=bool)
    for shift in range(16):
        ok |= (wrapped >> np.uint32(shift)) & run == run
    return ok


_SEGMENT_LUT = _build_segment_lut(FAST_ARC)

_disc = np.mgrid[-ORIENTATION_RADIUS:ORIENTATION_RADIUS + 1,
                 -ORIENTATION_RADIUS:ORIENTATION_RADIUS + 1]
_keep = _disc[0] ** 2 + _disc[1] ** 2 <= ORIENTATION_RADIUS ** 2
_DISC_DY = _disc[0][_keep]
_DISC_DX = _disc[1][_keep]


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit grayscale raster, row-major, (height, width)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.dtype != np.uint8:
            raise ValueError("GrayImage needs a 2D uint8 array")
        px = px.copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class Keypoint:
    """Detected corner; u, v are level-0 pixel coordinates."""

    u: float
    v: float
    level: int = 0
    orientation: float = 0.0
    response: float = 0.0


@dataclass(frozen=True, eq=False)
class FeatureSet:
    """Parallel keypoints and packed 256-bit descriptors (N, 32) uint8."""

    keypoints: tuple
    descriptors: np.ndarray

    def __post_init__(self):
        kps = tuple(self.keypoints)
        desc = np.asarray(self.descriptors, dtype=np.uint8).reshape(-1, 32).copy()
        desc.setflags(write=False)
        if len(kps) != len(desc):
            raise ValueError("keypoints and descriptors must have equal length")
        object.__setattr__(self, "keypoints", kps)
        object.__setattr__(self, "descriptors", desc)

    def __len__(self) -> int:
        return len(self.keypoints)

    def positions(self) -> np.ndarray:
        """Level-0 (u, v) coordinates, shape (N, 2)."""
        return np.array([(kp.u, kp.v) for kp in self.keypoints]).reshape(-1, 2)


@dataclass(frozen=True)
class FeatureConfig:
    levels: int = 4
    scale_factor: float = 1.2
    max_features: int = 1000
    fast_threshold: int = 20
    nms_radius: int = 3
    bilinear: bool = False

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if not self.scale_factor > 1.0:
            raise ValueError("scale_factor must be > 1")
        if not 1 <= self.fast_threshold <= 255:
            raise ValueError("fast_threshold must be in [1, 255]")


_CIRCLE_DX = np.array([p[0] for p in FAST_CIRCLE])
_CIRCLE_DY = np.array([p[1] for p in FAST_CIRCLE])
_BIT_VALUES = (np.uint16(1) << np.arange(16, dtype=np.uint16))[:, None]


def _detect_fast_arrays(px: np.ndarray, threshold: int, nms_radius: int):
    """Segment-test corners on one raster.

    Returns (xs, ys, scores) of surviving corners, positions refined to
    sub-pixel. A pixel passes when at least FAST_ARC contiguous circle
    pixels are all brighter than center+threshold or all darker than
    center-threshold; a dense 4-point compass pretest culls pixels that
    cannot host such an arc before the full ring is evaluated sparsely.
    The score is the summed amount by which circle differences exceed the
    threshold on the dominant polarity; non-maximum suppression keeps a
    corner only if no equal-or-stronger corner sits within a square
    window of ``nms_radius`` (first in raster order wins exact ties).
    """
    h, w = px.shape
    if h < 7 or w < 7:
        return (np.empty(0), np.empty(0), np.empty(0))
    s = np.int16(threshold)
    img = px.astype(np.int16)
    center = img[3:h - 3, 3:w - 3]
    bright_hits = np.zeros(center.shape, dtype=np.uint8)
    dark_hits = np.zeros(center.shape, dtype=np.uint8)
    for dx, dy in ((0, -3), (3, 0), (0, 3), (-3, 0)):
        d = img[3 + dy:h - 3 + dy, 3 + dx:w - 3 + dx] - center
        bright_hits += d > s
        dark_hits += d < -s
    # any run of FAST_ARC contiguous circle pixels covers at least two of
    # the four compass points
    cy, cx = np.nonzero((bright_hits >= 2) | (dark_hits >= 2))
    if len(cy) == 0:
        return (np.empty(0), np.empty(0), np.empty(0))
    ys = cy + 3
    xs = cx + 3

    ring = img[ys[None, :] + _CIRCLE_DY[:, None], xs[None, :] + _CIRCLE_DX[:, None]]
    d = ring - img[ys, xs][None, :]
    bright = d > s
    dark = d < -s
    bright_bits = (bright * _BIT_VALUES).sum(axis=0, dtype=np.uint16)
    dark_bits = (dark * _BIT_VALUES).sum(axis=0, dtype=np.uint16)
    corner = _SEGMENT_LUT[bright_bits] | _SEGMENT_LUT[dark_bits]
    if not corner.any():
        return (np.empty(0), np.empty(0), np.empty(0))
    bright_sum = np.where(bright, d - s, 0).sum(axis=0)
    dark_sum = np.where(dark, -d - s, 0).sum(axis=0)
    score = np.maximum(bright_sum, dark_sum).astype(np.float64)
    ys, xs, score = ys[corner], xs[corner], score[corner]

    r = max(nms_radius, 1)
    score_map = np.zeros((h + 2 * r, w + 2 * r))
    score_map[ys + r, xs + r] = score
    if nms_radius > 0:
        earlier = np.full(len(ys), -1.0)
        later = np.full(len(ys), -1.0)
        for dy in range(-nms_radius, nms_radius + 1):
            for dx in range(-nms_radius, nms_radius + 1):
                if dy == 0 and dx == 0:
                    continue
                nb = score_map[ys + r + dy, xs + r + dx]
                if dy < 0 or (dy == 0 and dx < 0):
                    earlier = np.maximum(earlier, nb)
                else:
                    later = np.maximum(later, nb)
        keep = (score > 0) & (score > earlier) & (score >= later)
    else:
        keep = score > 0
    ys, xs, score = ys[keep], xs[keep], score[keep]

    sub_x = _axis_offset(
        score_map[ys + r, xs + r - 1], score, score_map[ys + r, xs + r + 1]
    )
    sub_y = _axis_offset(
        score_map[ys + r - 1, xs + r], score, score_map[ys + r + 1, xs + r]
    )
    return xs + sub_x, ys + sub_y, score


def _axis_offset(prev, center, nxt):
    """Quadratic interpolation of a score peak along one axis, clamped to
    half a pixel."""
    denom = prev - 2.0 * center + nxt
    with np.errstate(divide="ignore", invalid="ignore"):
        off = 0.5 * (prev - nxt) / denom
    off[~np.isfinite(off)] = 0.0
    return np.clip(off, -0.5, 0.5)


def detect_fast(img: GrayImage, threshold: int, nms_radius: int = 3) -> list[Keypoint]:
    """Corner detection on a single raster (no pyramid, no descriptors)."""
    if not 1 <= threshold <= 255:
        raise ValueError("threshold must be in [1, 255]")
    xs, ys, scores = _detect_fast_arrays(img.pixels, threshold, nms_radius)
    order = np.lexsort((ys, xs, -scores))
    return [
        Keypoint(u=float(xs[i]), v=float(ys[i]), response=float(scores[i]))
        for i in order
    ]


def _orientations(px: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Intensity-centroid angle per keypoint over a radius-15 disc.

    atan2 of the first-order moments; (0, 0) moments give 0 by
    convention. Output wrapped to [-pi, pi).
    """
    patch = px[ys[:, None] + _DISC_DY[None, :], xs[:, None] + _DISC_DX[None, :]]
    patch = patch.astype(np.int64)
    m10 = (patch * _DISC_DX).sum(axis=1)
    m01 = (patch * _DISC_DY).sum(axis=1)
    ang = np.arctan2(m01.astype(float), m10.astype(float))
    ang[ang >= np.pi] = -np.pi
    return ang


def _sample(px: np.ndarray, xq: np.ndarray, yq: np.ndarray, bilinear: bool) -> np.ndarray:
    if not bilinear:
        return px[np.rint(yq).astype(np.int64), np.rint(xq).astype(np.int64)].astype(np.float64)
    h, w = px.shape
    x = np.clip(xq, 0.0, w - 1.0)
    y = np.clip(yq, 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    top = px[y0, x0] * (1 - fx) + px[y0, x1] * fx
    bot = px[y1, x0] * (1 - fx) + px[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def _descriptors(px: np.ndarray, xs, ys, angles, bilinear: bool = False) -> np.ndarray:
    """Steered 256-bit descriptors, packed to (N, 32) uint8.

    The comparison table is rotated by each keypoint's orientation; bit i
    is 1 iff intensity at point a_i is strictly below the one at b_i
    (ties give 0).
    """
    ca = np.cos(angles)[:, None]
    sa = np.sin(angles)[:, None]
    pat = SAMPLING_PATTERN.astype(np.float64)
    ax, ay, bx, by = pat[:, 0][None, :], pat[:, 1][None, :], pat[:, 2][None, :], pat[:, 3][None, :]
    xs = xs[:, None].astype(np.float64)
    ys = ys[:, None].astype(np.float64)
    rax = xs + ax * ca - ay * sa
    ray = ys + ax * sa + ay * ca
    rbx = xs + bx * ca - by * sa
    rby = ys + bx * sa + by * ca
    va = _sample(px, rax, ray, bilinear)
    vb = _sample(px, rbx, rby, bilinear)
    return np.packbits(va < vb, axis=1)


def orient_and_describe(img: GrayImage, kp: Keypoint, bilinear: bool = False):
    """Orientation and descriptor of one keypoint on its own raster.

    ``kp.u``/``kp.v`` are interpreted in ``img`` coordinates; the point
    must sit at least SAFE_MARGIN pixels from every border so the rotated
    pattern cannot leave the image.
    """
    x = int(round(kp.u))
    y = int(round(kp.v))
    h, w = img.pixels.shape
    if not (SAFE_MARGIN <= x < w - SAFE_MARGIN and SAFE_MARGIN <= y < h - SAFE_MARGIN):
        raise MarginViolation(f"keypoint ({kp.u}, {kp.v}) too close to the border")
    xs = np.array([x], dtype=np.int64)
    ys = np.array([y], dtype=np.int64)
    ang = _orientations(img.pixels, xs, ys)
    desc = _descriptors(img.pixels, xs, ys, ang, bilinear)
    return float(ang[0]), desc[0]


def _resize_bilinear(px: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    h, w = px.shape
    ys = np.clip((np.arange(new_h) + 0.5) * (h / new_h) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(new_w) + 0.5) * (w / new_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    p = px.astype(np.float64)
    top = p[np.ix_(y0, x0)] * (1 - fx) + p[np.ix_(y0, x1)] * fx
    bot = p[np.ix_(y1, x0)] * (1 - fx) + p[np.ix_(y1, x1)] * fx
    return np.rint(top * (1 - fy) + bot * fy).astype(np.uint8)


def _mask_bounds(mask):
    if mask is None:
        return None
    if hasattr(mask, "u_min"):
        return float(mask.u_min), float(mask.v_min), float(mask.u_max), float(mask.v_max)
    u0, v0, u1, v1 = mask
    return float(u0), float(v0), float(u1), float(v1)


def _apportion(budget: int, areas: list[int], available: list[int]) -> list[int]:
    """Largest-remainder split of the feature budget, proportional to
    level area and capped by what each level actually detected; leftover
    budget from starved levels flows to levels that still have corners."""
    total = float(sum(areas))
    raw = [budget * a / total for a in areas]
    quotas = [min(int(r), avail) for r, avail in zip(raw, available)]
    left = budget - sum(quotas)
    order = sorted(range(len(areas)), key=lambda i: (-(raw[i] - int(raw[i])), i))
    for i in order:
        if left <= 0:
            break
        if quotas[i] < available[i]:
            quotas[i] += 1
            left -= 1
    for i in range(len(areas)):
        if left <= 0:
            break
        take = min(available[i] - quotas[i], left)
        quotas[i] += take
        left -= take
    return quotas


def detect_and_describe(
    img: GrayImage, cfg: FeatureConfig = FeatureConfig(), mask=None
) -> FeatureSet:
    """Full feature pipeline over an image pyramid.

    Per level: downscale (bilinear), run the segment-test detector, drop
    keypoints inside the descriptor margin, map positions back to level-0
    coordinates. An optional rectangular mask (u_min, v_min, u_max, v_max,
    half-open) restricts the candidate set *before* the feature budget is
    applied, so a small target box is not starved by strong corners
    elsewhere. The budget is split across levels proportionally to level
    area; output is sorted by level, then response descending, then u,
    then v.
    """
    if img.width < MIN_IMAGE_SIDE or img.height < MIN_IMAGE_SIDE:
        raise ImageTooSmall(f"need >= {MIN_IMAGE_SIDE} px per side, got {img.width}x{img.height}")
    bounds = _mask_bounds(mask)

    per_level = []
    areas = []
    for level in range(cfg.levels):
        scale = cfg.scale_factor ** level
        lw = max(1, int(round(img.width / scale)))
        lh = max(1, int(round(img.height / scale)))
        px = img.pixels if level == 0 else _resize_bilinear(img.pixels, lh, lw)
        areas.append(lw * lh)
        if lw <= 2 * SAFE_MARGIN or lh <= 2 * SAFE_MARGIN:
            per_level.append(None)
            continue
        xs, ys, scores = _detect_fast_arrays(px, cfg.fast_threshold, cfg.nms_radius)
        inside = (
            (xs >= SAFE_MARGIN) & (xs < lw - SAFE_MARGIN)
            & (ys >= SAFE_MARGIN) & (ys < lh - SAFE_MARGIN)
        )
        xs, ys, scores = xs[inside], ys[inside], scores[inside]
        u0 = xs * scale
        v0 = ys * scale
        if bounds is not None:
            lo_u, lo_v, hi_u, hi_v = bounds
            sel = (u0 >= lo_u) & (u0 < hi_u) & (v0 >= lo_v) & (v0 < hi_v)
            xs, ys, scores, u0, v0 = xs[sel], ys[sel], scores[sel], u0[sel], v0[sel]
        order = np.lexsort((v0, u0, -scores))
        per_level.append((px, xs[order], ys[order], scores[order], u0[order], v0[order]))

    available = [0 if lvl is None else len(lvl[1]) for lvl in per_level]
    quotas = _apportion(cfg.max_features, areas, available)

    keypoints: list[Keypoint] = []
    descriptors = []
    for level, lvl in enumerate(per_level):
        if lvl is None or quotas[level] == 0:
            continue
        px, xs, ys, scores, u0, v0 = lvl
        q = quotas[level]
        xs, ys, scores, u0, v0 = xs[:q], ys[:q], scores[:q], u0[:q], v0[:q]
        if len(xs) == 0:
            continue
        # patches are sampled on the integer grid; positions keep the
        # sub-pixel refinement
        xi = np.rint(xs).astype(np.int64)
        yi = np.rint(ys).astype(np.int64)
        ang = _orientations(px, xi, yi)
        desc = _descriptors(px, xi, yi, ang, cfg.bilinear)
        descriptors.append(desc)
        keypoints.extend(
            Keypoint(
                u=float(u0[i]), v=float(v0[i]), level=level,
                orientation=float(ang[i]), response=float(scores[i]),
            )
            for i in range(len(xs))
        )
    desc_arr = (
        np.concatenate(descriptors, axis=0) if descriptors else np.empty((0, 32), np.uint8)
    )
    return FeatureSet(keypoints=tuple(keypoints), descriptors=desc_arr)
