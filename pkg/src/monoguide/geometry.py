"""Two-view calibrated geometry.

Implements the geometric core of the guidance pipeline: pixel/metric
coordinate conversion, robust essential-matrix estimation (normalized
8-point solver inside RANSAC), pose recovery by SVD with a cheirality
check, and linear (DLT) two-view triangulation.

Conventions fixed here and relied on everywhere else:

* pixel coordinates are (u, v) with u to the right and v down;
* a relative pose maps reference-frame coordinates to current-frame
  coordinates as ``x_cur = R @ x_ref + t * scale``;
* ``t`` is a unit vector; metric meaning is carried by ``scale`` plus a
  provenance flag, because a single camera fixes translation only up to
  a positive factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import (
    AmbiguousCheirality,
    BehindCamera,
    DegenerateGeometry,
    NoConsensus,
    NotEssential,
    PointAtInfinity,
    TooFewMatches,
)

# Singular values of a valid essential matrix are (s, s, 0); estimates are
# projected onto that manifold with both nonzero values forced to 1, which
# pins the Frobenius norm to sqrt(2) and makes residual thresholds comparable.
ESSENTIAL_SV_TOL = 1e-6
POINT_AT_INFINITY_TOL = 1e-9
CHEIRALITY_AMBIGUITY_RATIO = 0.95
MIN_SEARCH_ITERS = 150

_W = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


class ScaleSource(str, Enum):
    """Where the metric scale of a translation came from."""

    GROUND_TRUTH = "ground-truth-baseline"
    USER = "user-supplied"
    UNIT = "unit"


def _readonly(a, dtype=float):
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole calibration: focal lengths and principal point in pixels."""

    fu: float
    fv: float
    cu: float
    cv: float

    def __post_init__(self):
        if not (self.fu > 0.0 and self.fv > 0.0):
            raise ValueError(f"focal lengths must be positive, got fu={self.fu}, fv={self.fv}")
        for name in ("fu", "fv", "cu", "cv"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"non-finite intrinsic {name}")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fu, 0.0, self.cu], [0.0, self.fv, self.cv], [0.0, 0.0, 1.0]]
        )

    @classmethod
    def from_matrix(cls, K) -> "CameraIntrinsics":
        K = np.asarray(K, dtype=float)
        return cls(fu=K[0, 0], fv=K[1, 1], cu=K[0, 2], cv=K[1, 2])


def normalize(points, K: CameraIntrinsics) -> np.ndarray:
    """Map pixel coordinates (N, 2) to metric image-plane coordinates.

    Equivalent to K^-1 @ (u, v, 1) followed by dropping the unit last
    coordinate; written in closed form so the round trip with
    :func:`denormalize` is exact to machine precision.
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    out = np.column_stack(((pts[:, 0] - K.cu) / K.fu, (pts[:, 1] - K.cv) / K.fv))
    return out[0] if single else out


def denormalize(points, K: CameraIntrinsics) -> np.ndarray:
    """Inverse of :func:`normalize`: metric image-plane to pixels."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    out = np.column_stack((pts[:, 0] * K.fu + K.cu, pts[:, 1] * K.fv + K.cv))
    return out[0] if single else out


@dataclass(frozen=True)
class WorldPoint:
    """3D point in a camera frame, meters. +z is in front of the camera."""

    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def ground_distance(self) -> float:
        """Distance in the ground plane (x-z), ignoring height."""
        return math.hypot(self.x, self.z)


@dataclass(frozen=True, eq=False)
class RelativePose:
    """Rigid motion between two views: ``x_cur = R @ x_ref + t * scale``.

    ``t`` is unit-norm; ``scale`` (meters) and its provenance travel with
    the pose so every metric output can be traced to its scale source.
    """

    R: np.ndarray
    t: np.ndarray
    scale: float = 1.0
    scale_source: ScaleSource = ScaleSource.UNIT

    def __post_init__(self):
        R = _readonly(self.R)
        t = _readonly(self.t)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)
        if R.shape != (3, 3) or t.shape != (3,):
            raise ValueError("pose needs a 3x3 rotation and a 3-vector translation")
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-9 or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("R is not a proper rotation")
        if abs(np.linalg.norm(t) - 1.0) > 1e-12:
            raise ValueError("t must be unit-norm; use scale for magnitude")
        if not (self.scale > 0.0):
            raise ValueError("scale must be positive")

    def translation(self) -> np.ndarray:
        """Metric translation ``t * scale``."""
        return self.t * self.scale

    def camera_displacement(self) -> np.ndarray:
        """Displacement of the camera between the views, in current-frame
        coordinates: the camera moved by ``-t * scale`` under the fixed
        ``x_cur = R x_ref + t s`` convention."""
        return -self.t * self.scale

    def with_scale(self, scale: float, source: ScaleSource) -> "RelativePose":
        return replace(self, scale=float(scale), scale_source=source)


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """Paired pixel coordinates of matched features in two frames."""

    points_a: np.ndarray
    points_b: np.ndarray
    inlier_mask: np.ndarray | None = None

    def __post_init__(self):
        pa = _readonly(np.atleast_2d(self.points_a))
        pb = _readonly(np.atleast_2d(self.points_b))
        object.__setattr__(self, "points_a", pa)
        object.__setattr__(self, "points_b", pb)
        if pa.shape != pb.shape or pa.ndim != 2 or pa.shape[1] != 2:
            raise ValueError("points_a and points_b must both be (N, 2)")
        if self.inlier_mask is not None:
            mask = _readonly(self.inlier_mask, dtype=bool)
            if mask.shape != (len(pa),):
                raise ValueError("inlier mask length must equal the pair count")
            object.__setattr__(self, "inlier_mask", mask)

    def __len__(self) -> int:
        return len(self.points_a)

    def filtered(self, mask) -> "CorrespondenceSet":
        mask = np.asarray(mask, dtype=bool)
        return CorrespondenceSet(self.points_a[mask], self.points_b[mask])

    def displacements(self) -> np.ndarray:
        """Per-pair pixel motion magnitudes between the two frames."""
        return np.linalg.norm(self.points_b - self.points_a, axis=1)


@dataclass(frozen=True)
class RansacParams:
    """Knobs of the robust essential-matrix estimator.

    ``threshold`` is in normalized image coordinates and gates both the
    Sampson distance and the raw epipolar residual |q^T E p|.
    """

    threshold: float = 1e-3
    max_iters: int = 2000
    confidence: float = 0.99
    min_inliers: int = 15
    seed: int = 0


def skew(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
    )


def essential_from_pose(R, t) -> np.ndarray:
    """Compose E = [t]x R and normalize its nonzero singular values to 1."""
    t = np.asarray(t, dtype=float)
    norm = np.linalg.norm(t)
    if norm == 0.0:
        raise ValueError("translation must be nonzero to define an essential matrix")
    return skew(t / norm) @ np.asarray(R, dtype=float)


def _homogeneous(pts: np.ndarray) -> np.ndarray:
    return np.column_stack((pts, np.ones(len(pts))))


def _conditioning_transform(pts: np.ndarray):
    """Hartley conditioning: translate to the centroid and scale so the
    mean radius is sqrt(2). Returns (conditioned points, 3x3 transform)."""
    centroid = pts.mean(axis=0)
    mean_dist = float(np.sqrt(((pts - centroid) ** 2).sum(axis=1)).mean())
    s = math.sqrt(2.0) / max(mean_dist, 1e-12)
    T = np.array(
        [[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]]
    )
    return (pts - centroid) * s, T


def eight_point(norm_a: np.ndarray, norm_b: np.ndarray, weights=None) -> np.ndarray:
    """Normalized 8-point solve on calibrated coordinates.

    Conditions both point sets (centroid shift, sqrt(2) mean radius),
    solves q^T E p = 0 in least squares over >= 8 pairs (p from frame A,
    q from frame B), undoes the conditioning, and projects onto the
    essential manifold by forcing singular values to (1, 1, 0). Optional
    per-pair weights scale the design rows (used by the reweighted
    refinement).

    Raises DegenerateGeometry when the stacked design matrix is rank
    deficient, i.e. the sample does not pin down a unique E.
    """
    n = len(norm_a)
    if n < 8:
        raise TooFewMatches(f"8-point solver needs >= 8 pairs, got {n}")
    cond_a, Ta = _conditioning_transform(np.asarray(norm_a, dtype=float))
    cond_b, Tb = _conditioning_transform(np.asarray(norm_b, dtype=float))
    pa = _homogeneous(cond_a)
    qb = _homogeneous(cond_b)
    # row for pair (p, q): coefficients of E_ij are q_i * p_j, row-major.
    design = (qb[:, :, None] * pa[:, None, :]).reshape(n, 9)
    if weights is not None:
        design = design * np.asarray(weights, dtype=float)[:, None]
    _, sv, vt = np.linalg.svd(design)
    if sv[7] <= 1e-10 * max(sv[0], 1e-300):
        raise DegenerateGeometry("design matrix rank < 8")
    E = Tb.T @ vt[-1].reshape(3, 3) @ Ta
    U, s, Vt = np.linalg.svd(E)
    if s[1] <= 1e-12:
        raise DegenerateGeometry("estimated matrix is rank 1")
    return U @ np.diag([1.0, 1.0, 0.0]) @ Vt


def epipolar_residuals(E: np.ndarray, norm_a: np.ndarray, norm_b: np.ndarray) -> np.ndarray:
    """Raw algebraic residuals |q^T E p| per pair, normalized coordinates."""
    pa = _homogeneous(np.asarray(norm_a, dtype=float))
    qb = _homogeneous(np.asarray(norm_b, dtype=float))
    return np.abs(np.einsum("ni,ij,nj->n", qb, E, pa))


def sampson_distances(E: np.ndarray, norm_a: np.ndarray, norm_b: np.ndarray) -> np.ndarray:
    """First-order geometric distance to the epipolar constraint per pair.

    At an epipole the gradient vanishes; a pair sitting exactly on the
    constraint there gets distance 0, anything else gets inf.
    """
    pa = _homogeneous(np.asarray(norm_a, dtype=float))
    qb = _homogeneous(np.asarray(norm_b, dtype=float))
    Ep = pa @ E.T          # (N, 3): epipolar line of p in frame B
    Etq = qb @ E           # (N, 3): epipolar line of q in frame A
    r = np.einsum("ni,ni->n", qb, Ep)
    grad_sq = Ep[:, 0] ** 2 + Ep[:, 1] ** 2 + Etq[:, 0] ** 2 + Etq[:, 1] ** 2
    out = np.full(len(pa), np.inf)
    ok = grad_sq > 0.0
    out[ok] = np.abs(r[ok]) / np.sqrt(grad_sq[ok])
    out[(~ok) & (r == 0.0)] = 0.0
    return out


def _consistency(E, norm_a, norm_b) -> np.ndarray:
    # Inlier gate: worst of Sampson distance and raw residual, so every
    # flagged inlier is guaranteed to satisfy |q^T E p| < threshold as well.
    return np.maximum(
        sampson_distances(E, norm_a, norm_b), epipolar_residuals(E, norm_a, norm_b)
    )


def _sampson_weights(E, norm_a, norm_b) -> np.ndarray:
    """Row weights that turn the algebraic LS cost into a first-order
    geometric one: 1 / |gradient| of the epipolar constraint. Clamped
    from below at a fifth of the median gradient, otherwise a pair near
    an epipole (vanishing gradient) would get unbounded weight and hijack
    the fit."""
    pa = _homogeneous(norm_a)
    qb = _homogeneous(norm_b)
    Ep = pa @ E.T
    Etq = qb @ E
    grad = np.sqrt(Ep[:, 0] ** 2 + Ep[:, 1] ** 2 + Etq[:, 0] ** 2 + Etq[:, 1] ** 2)
    floor = max(0.2 * float(np.median(grad)), 1e-12)
    return 1.0 / np.maximum(grad, floor)


def _msac_score(res: np.ndarray, threshold: float) -> float:
    """Truncated-quadratic model score (lower is better): inliers add
    their squared residual, outliers add the squared threshold."""
    return float(np.minimum(res**2, threshold**2).sum())


def _tukey_irls(E, norm_a, norm_b, iters: int = 5) -> np.ndarray:
    """Iteratively reweighted least-squares polish of E on a fixed
    support set. Sampson gradient weights turn the algebraic cost into a
    first-order geometric one; Tukey biweights (scale from the median
    residual) zero out any contaminant the support gate let through, so
    a single stray pair cannot bend the fit."""
    for _ in range(iters):
        grad_w = _sampson_weights(E, norm_a, norm_b)
        r = sampson_distances(E, norm_a, norm_b)
        c = 4.685 * (1.4826 * float(np.median(r)) + 1e-12)
        w = np.where(r < c, (1.0 - (r / c) ** 2) ** 2, 0.0)
        refit = eight_point(norm_a, norm_b, weights=grad_w * np.sqrt(w))
        done = np.abs(refit - E).max() < 1e-13
        E = refit
        if done:
            break
    return E


def _annealed_refit(E, norm_a, norm_b, threshold: float):
    """Threshold-annealed robust refit: support the fit on a widening
    then tightening band around the current model so a crude hypothesis
    can pull in the full inlier set before the gate closes down.

    Returns (score, E, mask) of the best model seen under the MSAC score.
    """
    best = (math.inf, E, np.zeros(len(norm_a), dtype=bool))
    for mult in (4.0, 2.0, 1.0, 1.0):
        support = _consistency(E, norm_a, norm_b) < mult * threshold
        if int(support.sum()) < 8:
            break
        try:
            E = _tukey_irls(E, norm_a[support], norm_b[support])
        except (DegenerateGeometry, TooFewMatches):
            break
        res = _consistency(E, norm_a, norm_b)
        score = _msac_score(res, threshold)
        if score < best[0]:
            best = (score, E, res < threshold)
    return best


def _local_optimize(E, norm_a, norm_b, threshold: float, rng):
    """Local optimization of a promising hypothesis: anneal it, then
    repeatedly refit on non-minimal samples (14 pairs) drawn from the
    current consensus, keeping the best MSAC score. This escapes the
    contaminated basins a noisy minimal sample tends to land in."""
    best = _annealed_refit(E, norm_a, norm_b, threshold)
    for _ in range(8):
        inliers = np.nonzero(best[2])[0]
        if len(inliers) < 8 or len(inliers) == len(norm_a):
            break
        idx = inliers if len(inliers) <= 14 else rng.choice(inliers, 14, replace=False)
        try:
            refit = eight_point(norm_a[idx], norm_b[idx])
        except (DegenerateGeometry, TooFewMatches):
            continue
        cand = _annealed_refit(refit, norm_a, norm_b, threshold)
        if cand[0] < best[0]:
            best = cand
    return best


def _signed_sampson(E, norm_a, norm_b) -> np.ndarray:
    pa = _homogeneous(norm_a)
    qb = _homogeneous(norm_b)
    Ep = pa @ E.T
    Etq = qb @ E
    r = np.einsum("ni,ni->n", qb, Ep)
    grad = np.sqrt(Ep[:, 0] ** 2 + Ep[:, 1] ** 2 + Etq[:, 0] ** 2 + Etq[:, 1] ** 2)
    floor = max(0.2 * float(np.median(grad)), 1e-12)
    return r / np.maximum(grad, floor)


def _exp_so3(w: np.ndarray) -> np.ndarray:
    angle = float(np.linalg.norm(w))
    if angle < 1e-15:
        return np.eye(3)
    axis = w / angle
    Kx = skew(axis)
    return np.eye(3) + math.sin(angle) * Kx + (1.0 - math.cos(angle)) * (Kx @ Kx)


def _tangent_basis(t: np.ndarray):
    ref = np.array([1.0, 0.0, 0.0]) if abs(t[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    b1 = np.cross(t, ref)
    b1 /= np.linalg.norm(b1)
    return b1, np.cross(t, b1)


def _refine_pose_sampson(R, t, norm_a, norm_b, rounds: int = 3, gn_iters: int = 10):
    """Polish (R, t) on the 5-DOF essential manifold by Gauss-Newton on
    the Sampson residuals of the support pairs, with Tukey reweighting
    between rounds. The linear solve leaves the four-fold (R, t)
    ambiguity untouched because all four candidates share the same E, so
    any candidate seeds the refinement equally well."""
    h = 1e-6
    step = np.zeros(5)
    for _ in range(rounds):
        r = _signed_sampson(skew(t) @ R, norm_a, norm_b)
        c = 4.685 * (1.4826 * float(np.median(np.abs(r))) + 1e-12)
        w = np.where(np.abs(r) < c, (1.0 - (r / c) ** 2) ** 2, 0.0)
        for _ in range(gn_iters):
            r = _signed_sampson(skew(t) @ R, norm_a, norm_b)
            b1, b2 = _tangent_basis(t)
            J = np.empty((len(norm_a), 5))
            for j in range(3):
                dw = np.zeros(3)
                dw[j] = h
                J[:, j] = (_signed_sampson(skew(t) @ (R @ _exp_so3(dw)), norm_a, norm_b) - r) / h
            for j, basis in enumerate((b1, b2)):
                tp = t + h * basis
                tp = tp / np.linalg.norm(tp)
                J[:, 3 + j] = (_signed_sampson(skew(tp) @ R, norm_a, norm_b) - r) / h
            A = J.T @ (J * w[:, None]) + 1e-12 * np.eye(5)
            g = J.T @ (w * r)
            try:
                step = np.linalg.solve(A, -g)
            except np.linalg.LinAlgError:
                return R, t
            R = R @ _exp_so3(step[:3])
            t = t + step[3] * b1 + step[4] * b2
            t = t / np.linalg.norm(t)
            if float(np.linalg.norm(step)) < 1e-12:
                break
    return R, t


def estimate_essential_ransac(
    matches: CorrespondenceSet, K: CameraIntrinsics, params: RansacParams = RansacParams()
) -> tuple[np.ndarray, np.ndarray]:
    """Robust essential-matrix fit over pixel correspondences.

    Runs the 8-point solver on random minimal samples of the K-normalized
    pairs, scores hypotheses by inlier count under ``params.threshold``,
    adapts the iteration budget to the best consensus found, then refits
    on the winning inlier set. Deterministic for a fixed ``params.seed``.

    Returns (E, inlier_mask) with E on the essential manifold.
    """
    n = len(matches)
    if n < 8:
        raise TooFewMatches(f"RANSAC needs >= 8 correspondences, got {n}")
    norm_a = normalize(matches.points_a, K)
    norm_b = normalize(matches.points_b, K)

    rng = np.random.default_rng(params.seed)
    threshold = params.threshold
    best_score = math.inf
    best_mask = None
    best_E = None
    valid_hypotheses = 0
    lo_budget = 12
    needed = params.max_iters
    i = 0
    while i < needed:
        i += 1
        sample = rng.choice(n, size=8, replace=False)
        try:
            E = eight_point(norm_a[sample], norm_b[sample])
        except DegenerateGeometry:
            continue
        valid_hypotheses += 1
        res = _consistency(E, norm_a, norm_b)
        score = _msac_score(res, threshold)
        if score >= best_score:
            continue
        best_score, best_E, best_mask = score, E, res < threshold
        if lo_budget > 0:
            lo_budget -= 1
            lo_score, lo_E, lo_mask = _local_optimize(E, norm_a, norm_b, threshold, rng)
            if lo_score < best_score:
                best_score, best_E, best_mask = lo_score, lo_E, lo_mask
        count = int(best_mask.sum())
        ratio = count / n
        if ratio >= 1.0:
            break
        # adaptive stop at the requested confidence, with a floor so the
        # search keeps exploring basins on contaminated data
        hit = ratio**8
        if hit > 1e-12:
            est = math.log(1.0 - params.confidence) / math.log(1.0 - hit)
            needed = min(params.max_iters, max(i, MIN_SEARCH_ITERS, int(math.ceil(est))))

    if valid_hypotheses == 0:
        raise DegenerateGeometry("no minimal sample produced a valid hypothesis")
    if best_mask is None or int(best_mask.sum()) < max(8, params.min_inliers):
        found = 0 if best_mask is None else int(best_mask.sum())
        raise NoConsensus(f"best consensus {found} below min_inliers={params.min_inliers}")

    # final polish: Gauss-Newton on the essential manifold over the
    # consensus, accepted only when it improves the MSAC score. Skipped
    # when the consensus residuals are already far below any physical
    # noise: the numeric differentiation inside the solver has a ~1e-8
    # floor and would only blur an exact solution.
    exact_floor = n * (1e-10) ** 2
    for _ in range(2 if best_score > exact_floor else 0):
        try:
            seed_pose = decompose_essential(best_E)[0]
        except NotEssential:
            break
        R, t = _refine_pose_sampson(
            seed_pose.R, seed_pose.t, norm_a[best_mask], norm_b[best_mask]
        )
        U, _, Vt = np.linalg.svd(skew(t) @ R)
        refined = U @ np.diag([1.0, 1.0, 0.0]) @ Vt
        res = _consistency(refined, norm_a, norm_b)
        score = _msac_score(res, threshold)
        if score >= best_score:
            break
        best_score, best_E, best_mask = score, refined, res < threshold

    if int(best_mask.sum()) < max(8, params.min_inliers):
        raise NoConsensus("consensus collapsed during refinement")
    mask = best_mask.copy()
    mask.setflags(write=False)
    return best_E, mask


def decompose_essential(E: np.ndarray) -> list[RelativePose]:
    """The four (R, t) candidates of an essential matrix.

    E = U diag D V^T gives R in {U W V^T, U W^T V^T} (det corrected to +1)
    and t = +-u3; all four sign/transpose combinations are geometrically
    consistent until the cheirality check picks the physical one.
    """
    E = np.asarray(E, dtype=float)
    U, s, Vt = np.linalg.svd(E)
    scale = max(s[0], 1e-300)
    if s[2] > ESSENTIAL_SV_TOL * scale or (s[0] - s[1]) > ESSENTIAL_SV_TOL * scale:
        raise NotEssential(f"singular values {s} do not fit (s, s, 0)")
    t = U[:, 2]
    poses = []
    for W in (_W, _W.T):
        R = U @ W @ Vt
        if np.linalg.det(R) < 0.0:
            R = -R
        for sign in (1.0, -1.0):
            poses.append(RelativePose(R=R, t=sign * t))
    return poses


def _triangulate_normalized(norm_a, norm_b, R, t):
    """Batched linear triangulation in normalized camera coordinates.

    Returns (points (N,3), w (N,), depth_a (N,), depth_b (N,)); no
    validity filtering, callers interpret w and the depths.
    """
    norm_a = np.atleast_2d(np.asarray(norm_a, dtype=float))
    norm_b = np.atleast_2d(np.asarray(norm_b, dtype=float))
    n = len(norm_a)
    P1 = np.hstack((np.eye(3), np.zeros((3, 1))))
    P2 = np.hstack((R, np.asarray(t, dtype=float).reshape(3, 1)))
    A = np.empty((n, 4, 4))
    A[:, 0] = norm_a[:, 0, None] * P1[2] - P1[0]
    A[:, 1] = norm_a[:, 1, None] * P1[2] - P1[1]
    A[:, 2] = norm_b[:, 0, None] * P2[2] - P2[0]
    A[:, 3] = norm_b[:, 1, None] * P2[2] - P2[1]
    _, _, vt = np.linalg.svd(A)
    hom = vt[:, -1, :]
    w = hom[:, 3]
    safe_w = np.where(np.abs(w) < 1e-300, 1e-300, w)
    pts = hom[:, :3] / safe_w[:, None]
    depth_a = pts[:, 2]
    depth_b = pts @ R[2] + t[2]
    return pts, w, depth_a, depth_b


def select_pose(
    candidates: list[RelativePose], matches: CorrespondenceSet, K: CameraIntrinsics
) -> RelativePose:
    """Pick the physical pose by the cheirality test.

    Triangulates every correspondence under each candidate and returns the
    one with the most points at positive depth in both views. If the
    runner-up explains within 5% as many points the data cannot
    discriminate and AmbiguousCheirality is raised.
    """
    norm_a = normalize(matches.points_a, K)
    norm_b = normalize(matches.points_b, K)
    counts = []
    for cand in candidates:
        pts, w, depth_a, depth_b = _triangulate_normalized(norm_a, norm_b, cand.R, cand.t)
        finite = np.abs(w) > POINT_AT_INFINITY_TOL
        counts.append(int(np.sum(finite & (depth_a > 0.0) & (depth_b > 0.0))))
    order = np.argsort(counts)[::-1]
    best, second = order[0], order[1]
    if counts[second] >= CHEIRALITY_AMBIGUITY_RATIO * counts[best]:
        raise AmbiguousCheirality(
            f"positive-depth counts too close: {counts[best]} vs {counts[second]}"
        )
    return candidates[best]


def estimate_pose(
    matches: CorrespondenceSet, K: CameraIntrinsics, params: RansacParams = RansacParams()
) -> tuple[RelativePose, np.ndarray, np.ndarray]:
    """Full two-view motion estimate: RANSAC E, decomposition, cheirality.

    Returns (pose with unit scale, inlier_mask, E).
    """
    E, mask = estimate_essential_ransac(matches, K, params)
    pose = select_pose(decompose_essential(E), matches.filtered(mask), K)
    return pose, mask, E


def projection_matrices(K: CameraIntrinsics, pose: RelativePose) -> tuple[np.ndarray, np.ndarray]:
    """Pixel projection matrices of the two views: K[I|0] and K[R|t*scale]."""
    Km = K.matrix()
    J1 = Km @ np.hstack((np.eye(3), np.zeros((3, 1))))
    J2 = Km @ np.hstack((pose.R, pose.translation().reshape(3, 1)))
    return J1, J2


def triangulate(p, q, K: CameraIntrinsics, pose: RelativePose) -> WorldPoint:
    """Linear two-view triangulation of one correspondence.

    Stacks the four cross-product rows u*J^3 - J^1 / v*J^3 - J^2 of both
    views into a 4x4 design matrix and takes the right-singular vector of
    its smallest singular value, then dehomogenizes. The linear solve
    runs at unit translation and the result is scaled by ``pose.scale``
    afterwards; for inexact correspondences the algebraic minimizer does
    not commute with the scale, so this is what makes metric scaling
    exact. The result is in the reference camera's frame.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    Km = K.matrix()
    J1 = Km @ np.hstack((np.eye(3), np.zeros((3, 1))))
    J2 = Km @ np.hstack((pose.R, pose.t.reshape(3, 1)))
    A = np.vstack(
        (
            p[0] * J1[2] - J1[0],
            p[1] * J1[2] - J1[1],
            q[0] * J2[2] - J2[0],
            q[1] * J2[2] - J2[1],
        )
    )
    _, _, vt = np.linalg.svd(A)
    hom = vt[-1]
    if abs(hom[3]) < POINT_AT_INFINITY_TOL:
        raise PointAtInfinity("triangulated point has |w| below tolerance")
    pt = hom[:3] / hom[3]
    depth_ref = pt[2]
    depth_cur = float(pose.R[2] @ pt + pose.t[2])
    if depth_ref <= 0.0 or depth_cur <= 0.0:
        raise BehindCamera(
            f"depths ({depth_ref:.3g}, {depth_cur:.3g}) not positive in both views"
        )
    pt = pt * pose.scale
    return WorldPoint(x=float(pt[0]), y=float(pt[1]), z=float(pt[2]))


def project_to_pixel(point: WorldPoint | np.ndarray, K: CameraIntrinsics) -> np.ndarray:
    """Pinhole projection of a camera-frame 3D point to pixels."""
    p = point.as_array() if isinstance(point, WorldPoint) else np.asarray(point, dtype=float)
    if p[2] <= 0.0:
        raise BehindCamera("cannot project a point at non-positive depth")
    return np.array([K.fu * p[0] / p[2] + K.cu, K.fv * p[1] / p[2] + K.cv])
