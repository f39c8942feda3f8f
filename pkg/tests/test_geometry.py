import numpy as np
import pytest

from monoguide import errors
from monoguide.geometry import (
    CameraIntrinsics,
    CorrespondenceSet,
    RansacParams,
    RelativePose,
    ScaleSource,
    WorldPoint,
    decompose_essential,
    denormalize,
    epipolar_residuals,
    essential_from_pose,
    estimate_essential_ransac,
    normalize,
    projection_matrices,
    sampson_distances,
    select_pose,
    skew,
    triangulate,
)
from monoguide.simulator import CameraPose, make_scene, project, random_rotation, rot_y

from oracles import midpoint_triangulation


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


# -- normalize / denormalize ---------------------------------------------------

def test_principal_point_maps_to_origin(default_K):
    out = normalize([default_K.cu, default_K.cv], default_K)
    assert np.allclose(out, [0.0, 0.0])


def test_one_focal_length_off_center_is_unit(default_K):
    out = normalize([default_K.cu + default_K.fu, default_K.cv], default_K)
    assert np.allclose(out, [1.0, 0.0])


def test_kitti_principal_column_normalizes_to_zero(tmp_path):
    # calibration values read through the io module from the devkit line
    from monoguide.io import read_kitti_calib

    calib = tmp_path / "calib.txt"
    calib.write_text(
        "P0: 7.188560e+02 0 6.071928e+02 0 0 7.188560e+02 1.852157e+02 0 0 0 1 0\n"
    )
    K = read_kitti_calib(calib)
    assert K.fu == pytest.approx(718.856)
    out = normalize([607.1928, K.cv], K)
    assert out[0] == pytest.approx(0.0, abs=1e-12)


def test_normalize_round_trip(default_K):
    rng = np.random.default_rng(0)
    pts = rng.uniform([0, 0], [640, 480], size=(50, 2))
    back = denormalize(normalize(pts, default_K), default_K)
    assert np.max(np.abs(back - pts) / np.maximum(np.abs(pts), 1.0)) < 1e-12


# -- essential estimation -------------------------------------------------------

def _standard_pair(seed=1, noise=0.0, outliers=0.0, K=None):
    K = K or CameraIntrinsics(600, 600, 320, 240)
    scene = make_scene(
        n_points=100, seed=seed, x_range=(-2.2, 2.2), y_range=(-1.5, 1.5), z_range=(4, 10)
    )
    cam_a = CameraPose.facing((0, 0, 0), 0.0)
    cam_b = CameraPose(R=rot_y(np.radians(3.0)).T, C=np.array((0.8, 0.1, 0.5)))
    return project(scene, cam_a, cam_b, K, noise_sigma=noise, outlier_rate=outliers,
                   seed=seed + 1000), K


def test_ransac_noiseless_recovers_all_inliers():
    sim, K = _standard_pair(seed=1)
    E, mask = estimate_essential_ransac(sim.correspondences, K)
    assert mask.all()
    na = normalize(sim.correspondences.points_a, K)
    nb = normalize(sim.correspondences.points_b, K)
    assert epipolar_residuals(E, na, nb).max() < 1e-10


def test_ransac_rejects_exactly_the_outliers():
    sim, K = _standard_pair(seed=2, outliers=0.3)
    E, mask = estimate_essential_ransac(sim.correspondences, K)
    assert np.array_equal(mask, sim.true_mask)
    na = normalize(sim.correspondences.points_a, K)
    nb = normalize(sim.correspondences.points_b, K)
    assert epipolar_residuals(E, na, nb)[mask].max() < RansacParams().threshold


def test_epipole_pair_has_zero_residual():
    # pure forward translation: the epipole lies on every epipolar line
    E = skew([0.0, 0.0, 1.0])
    point = np.array([[0.0, 0.0]])
    assert epipolar_residuals(E, point, point)[0] == 0.0
    assert sampson_distances(E, point, point)[0] == 0.0


def test_inliers_satisfy_the_algebraic_gate():
    sim, K = _standard_pair(seed=5, noise=0.5, outliers=0.3)
    params = RansacParams(threshold=6e-3, seed=5)
    E, mask = estimate_essential_ransac(sim.correspondences, K, params)
    na = normalize(sim.correspondences.points_a, K)
    nb = normalize(sim.correspondences.points_b, K)
    assert epipolar_residuals(E, na, nb)[mask].max() < params.threshold
    assert mask.sum() >= params.min_inliers


def test_too_few_matches():
    corr = CorrespondenceSet(np.zeros((5, 2)), np.ones((5, 2)))
    with pytest.raises(errors.TooFewMatches):
        estimate_essential_ransac(corr, CameraIntrinsics(1, 1, 0, 0))


def test_no_consensus_on_pure_noise():
    rng = np.random.default_rng(3)
    corr = CorrespondenceSet(
        rng.uniform(0, 640, (40, 2)), rng.uniform(0, 640, (40, 2))
    )
    with pytest.raises((errors.NoConsensus, errors.DegenerateGeometry)):
        estimate_essential_ransac(
            corr, CameraIntrinsics(600, 600, 320, 240), RansacParams(threshold=1e-5)
        )


def test_degenerate_geometry_on_identical_points():
    pts = np.tile([[100.0, 100.0]], (20, 1))
    corr = CorrespondenceSet(pts, pts)
    with pytest.raises((errors.DegenerateGeometry, errors.NoConsensus)):
        estimate_essential_ransac(corr, CameraIntrinsics(600, 600, 320, 240))


# -- decomposition ---------------------------------------------------------------

def _contains_pose(candidates, R, t, tol=1e-9):
    for cand in candidates:
        if np.abs(cand.R - R).max() < tol and np.abs(cand.t - t).max() < tol:
            return True
    return False


def test_decompose_forward_translation():
    E = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    cands = decompose_essential(E)
    assert len(cands) == 4
    assert _contains_pose(cands, np.eye(3), np.array([0.0, 0.0, 1.0]))
    assert _contains_pose(cands, np.eye(3), np.array([0.0, 0.0, -1.0]))


def test_decompose_sideways_translation():
    E = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
    cands = decompose_essential(E)
    assert _contains_pose(cands, np.eye(3), np.array([1.0, 0.0, 0.0]))
    assert _contains_pose(cands, np.eye(3), np.array([-1.0, 0.0, 0.0]))


def test_decompose_simulator_pose():
    R = rot_y(np.radians(5.0))
    t = unit([0.1, 0.0, 0.995])
    cands = decompose_essential(essential_from_pose(R, t))
    assert _contains_pose(cands, R, t)


def test_decompose_rejects_non_essential():
    with pytest.raises(errors.NotEssential):
        decompose_essential(np.diag([1.0, 0.5, 0.0]))
    with pytest.raises(errors.NotEssential):
        decompose_essential(np.eye(3))


def test_candidate_properties():
    rng = np.random.default_rng(7)
    E = essential_from_pose(random_rotation(rng), unit(rng.normal(size=3)))
    for cand in decompose_essential(E):
        assert np.abs(cand.R.T @ cand.R - np.eye(3)).max() < 1e-9
        assert np.linalg.det(cand.R) == pytest.approx(1.0, abs=1e-9)
        assert np.linalg.norm(cand.t) == pytest.approx(1.0, abs=1e-12)


# -- pose selection ---------------------------------------------------------------

def test_select_pose_recovers_ground_truth():
    sim, K = _standard_pair(seed=4)
    gt = sim.pose
    cands = decompose_essential(essential_from_pose(gt.R, gt.t))
    picked = select_pose(cands, sim.correspondences, K)
    assert np.abs(picked.R - gt.R).max() < 1e-9
    assert np.abs(picked.t - gt.t).max() < 1e-9


def test_select_pose_never_picks_the_mirror():
    # the mirrored candidate (R, -t) puts every point behind a camera
    for seed in range(5):
        sim, K = _standard_pair(seed=seed)
        gt = sim.pose
        cands = decompose_essential(essential_from_pose(gt.R, gt.t))
        picked = select_pose(cands, sim.correspondences, K)
        assert np.abs(picked.t + gt.t).max() > 1e-3


def test_select_pose_forced_by_counting_rule(default_K):
    sim, K = _standard_pair(seed=6)
    cands = decompose_essential(essential_from_pose(sim.pose.R, sim.pose.t))
    # verify the premise: the winner explains 100%, the rest at most half
    from monoguide.geometry import _triangulate_normalized

    na = normalize(sim.correspondences.points_a, K)
    nb = normalize(sim.correspondences.points_b, K)
    counts = []
    for cand in cands:
        _, w, da, db = _triangulate_normalized(na, nb, cand.R, cand.t)
        counts.append(int(((np.abs(w) > 1e-9) & (da > 0) & (db > 0)).sum()))
    best = max(counts)
    assert counts.count(best) == 1
    assert sorted(counts)[-2] <= best // 2
    picked = select_pose(cands, sim.correspondences, K)
    assert counts[cands.index(picked)] == best


def test_select_pose_ambiguous_on_split_support(default_K):
    # one pair consistent with the true candidate plus one consistent with
    # a twisted candidate: the positive-depth counts tie at 1 each
    from monoguide.geometry import _triangulate_normalized

    K = default_K
    R = rot_y(np.radians(4.0))
    t = unit([0.2, 0.0, 0.98])
    cands = decompose_essential(essential_from_pose(R, t))
    true_idx = next(
        i for i, c in enumerate(cands)
        if np.abs(c.R - R).max() < 1e-9 and np.abs(c.t - t).max() < 1e-9
    )

    def make_pair(cand, X):
        Xb = cand.R @ X + cand.t
        if X[2] <= 0 or Xb[2] <= 0:
            return None
        pa = denormalize(X[:2] / X[2], K)
        pb = denormalize(Xb[:2] / Xb[2], K)
        return pa, pb

    def counts_for(corr_a, corr_b):
        na = normalize(np.array(corr_a), K)
        nb = normalize(np.array(corr_b), K)
        out = []
        for cand in cands:
            _, w, da, db = _triangulate_normalized(na, nb, cand.R, cand.t)
            out.append(int(((np.abs(w) > 1e-9) & (da > 0) & (db > 0)).sum()))
        return out

    pair_true = make_pair(cands[true_idx], np.array([0.3, 0.2, 5.0]))
    assert pair_true is not None
    twisted = None
    for i, cand in enumerate(cands):
        if np.abs(cand.R - R).max() < 1e-6:
            continue
        for x in (-0.6, -0.2, 0.2, 0.6):
            for z in (2.0, 5.0, 9.0):
                pair = make_pair(cand, np.array([x, 0.1, z]))
                if pair is None:
                    continue
                counts = counts_for(
                    [pair_true[0], pair[0]], [pair_true[1], pair[1]]
                )
                if counts[true_idx] == 1 and counts[i] == 1:
                    twisted = pair
                    break
            if twisted:
                break
        if twisted:
            break
    assert twisted is not None
    corr = CorrespondenceSet(
        np.array([pair_true[0], twisted[0]]), np.array([pair_true[1], twisted[1]])
    )
    with pytest.raises(errors.AmbiguousCheirality):
        select_pose(cands, corr, K)


# -- triangulation -----------------------------------------------------------------

def test_triangulate_similar_triangles():
    K = CameraIntrinsics(1.0, 1.0, 0.0, 0.0)
    pose = RelativePose(R=np.eye(3), t=np.array([-1.0, 0.0, 0.0]), scale=1.0)
    point = triangulate([0.0, 0.0], [-0.5, 0.0], K, pose)
    assert np.allclose(point.as_array(), [0.0, 0.0, 2.0], atol=1e-12)


def test_triangulate_zero_parallax_is_an_error():
    K = CameraIntrinsics(1.0, 1.0, 0.0, 0.0)
    pose = RelativePose(R=np.eye(3), t=np.array([0.0, 0.0, -1.0]), scale=1.0)
    with pytest.raises((errors.PointAtInfinity, errors.BehindCamera)):
        triangulate([0.0, 0.0], [0.0, 0.0], K, pose)


def test_triangulate_behind_camera():
    K = CameraIntrinsics(600, 600, 320, 240)
    pose = RelativePose(R=np.eye(3), t=unit([-1.0, 0.0, 0.0]), scale=1.0)
    # disparity with the wrong sign puts the intersection behind the cameras
    with pytest.raises(errors.BehindCamera):
        triangulate([320.0, 240.0], [380.0, 240.0], K, pose)


def test_triangulate_simulator_points_exactly():
    K = CameraIntrinsics(600, 600, 320, 240)
    scene = make_scene(n_points=50, seed=11, z_range=(3, 9))
    cam_a = CameraPose.facing((0, 0, 0), 0.0)
    cam_b = CameraPose.facing((0.6, 0.05, 0.2), np.radians(-2.0))
    sim = project(scene, cam_a, cam_b, K, seed=11)
    pose = sim.pose
    for pa, pb, idx in zip(
        sim.correspondences.points_a, sim.correspondences.points_b, sim.point_indices
    ):
        est = triangulate(pa, pb, K, pose).as_array()
        assert np.abs(est - scene.points[idx]).max() < 1e-6


def test_triangulate_noisy_accuracy_and_midpoint_cross_check():
    # measured once with the midpoint oracle and frozen: median error of
    # near points stays below 2% of depth at 0.5 px noise
    K = CameraIntrinsics(600, 600, 320, 240)
    scene = make_scene(n_points=50, seed=13, z_range=(2.0, 5.0))
    cam_a = CameraPose.facing((0, 0, 0), 0.0)
    cam_b = CameraPose.facing((0.8, 0.0, 0.1), 0.0)
    sim = project(scene, cam_a, cam_b, K, noise_sigma=0.5, seed=13)
    pose = sim.pose
    rel_errors = []
    for pa, pb, idx in zip(
        sim.correspondences.points_a, sim.correspondences.points_b, sim.point_indices
    ):
        true = scene.points[idx]
        if true[2] > 5.0:
            continue
        est = triangulate(pa, pb, K, pose).as_array()
        mid = midpoint_triangulation(pa, pb, K.matrix(), pose.R, pose.translation())
        assert np.linalg.norm(est - mid) < 0.05  # DLT and midpoint agree under noise
        rel_errors.append(np.linalg.norm(est - true) / true[2])
    assert np.median(rel_errors) < 0.02


# -- invariants ---------------------------------------------------------------------

def test_epipolar_identity_for_exact_projections():
    K = CameraIntrinsics(600, 600, 320, 240)
    rng = np.random.default_rng(17)
    for _ in range(10):
        scene = make_scene(n_points=40, seed=int(rng.integers(1e6)), z_range=(3, 12))
        cam_a = CameraPose.facing((0, 0, 0), 0.0)
        cam_b = CameraPose(R=random_rotation_small(rng), C=rng.normal(0, 0.4, 3))
        try:
            sim = project(scene, cam_a, cam_b, K, seed=1)
        except errors.NothingVisible:
            continue
        E = essential_from_pose(sim.pose.R, sim.pose.t)
        na = normalize(sim.correspondences.points_a, K)
        nb = normalize(sim.correspondences.points_b, K)
        assert epipolar_residuals(E, na, nb).max() < 1e-10


def random_rotation_small(rng):
    return rot_y(rng.uniform(-0.3, 0.3))


def test_decompose_compose_round_trip_100_draws():
    rng = np.random.default_rng(23)
    for _ in range(100):
        R = random_rotation(rng)
        t = unit(rng.normal(size=3))
        cands = decompose_essential(essential_from_pose(R, t))
        assert _contains_pose(cands, R, t, tol=1e-9) or _contains_pose(
            cands, R, -t, tol=1e-9
        )
        assert _contains_pose(cands, R, t, tol=1e-9)


def test_estimated_essential_lies_on_the_manifold():
    sim, K = _standard_pair(seed=19, noise=0.5)
    E, _ = estimate_essential_ransac(
        sim.correspondences, K, RansacParams(threshold=6e-3, seed=19)
    )
    s = np.linalg.svd(E, compute_uv=False)
    assert abs(s[0] - s[1]) < 1e-10
    assert s[2] < 1e-10
    assert np.linalg.norm(E) == pytest.approx(np.sqrt(2.0), abs=1e-9)


def test_triangulation_reprojects_exactly():
    K = CameraIntrinsics(600, 600, 320, 240)
    scene = make_scene(n_points=30, seed=29, z_range=(3, 9))
    cam_a = CameraPose.facing((0, 0, 0), 0.0)
    cam_b = CameraPose.facing((0.5, -0.1, 0.3), np.radians(4.0))
    sim = project(scene, cam_a, cam_b, K, seed=29)
    J1, J2 = projection_matrices(K, sim.pose)
    for pa, pb in zip(sim.correspondences.points_a, sim.correspondences.points_b):
        X = np.append(triangulate(pa, pb, K, sim.pose).as_array(), 1.0)
        for J, target in ((J1, pa), (J2, pb)):
            proj = J @ X
            assert np.abs(proj[:2] / proj[2] - target).max() < 1e-8


def test_dlt_matches_midpoint_oracle_on_100_pairs():
    K = CameraIntrinsics(600, 600, 320, 240)
    rng = np.random.default_rng(31)
    checked = 0
    while checked < 100:
        scene = make_scene(n_points=10, seed=int(rng.integers(1e6)), z_range=(2, 12))
        cam_a = CameraPose.facing((0, 0, 0), 0.0)
        cam_b = CameraPose.facing(rng.normal(0, 0.5, 3) + [0, 0, 0.2], rng.uniform(-0.1, 0.1))
        try:
            sim = project(scene, cam_a, cam_b, K, seed=int(rng.integers(1e6)))
        except errors.NothingVisible:
            continue
        for pa, pb in zip(sim.correspondences.points_a, sim.correspondences.points_b):
            est = triangulate(pa, pb, K, sim.pose).as_array()
            mid = midpoint_triangulation(pa, pb, K.matrix(), sim.pose.R, sim.pose.translation())
            assert np.linalg.norm(est - mid) < 1e-8
            checked += 1


def test_scale_equivariance_is_exact():
    K = CameraIntrinsics(600, 600, 320, 240)
    scene = make_scene(n_points=20, seed=37, z_range=(3, 9))
    cam_a = CameraPose.facing((0, 0, 0), 0.0)
    cam_b = CameraPose.facing((0.4, 0.0, 0.2), 0.0)
    sim = project(scene, cam_a, cam_b, K, seed=37)
    pose = sim.pose
    pa = sim.correspondences.points_a[0]
    pb = sim.correspondences.points_b[0]
    base = triangulate(pa, pb, K, pose).as_array()
    for lam in (0.5, 2.0, 7.25):
        scaled = triangulate(
            pa, pb, K, pose.with_scale(pose.scale * lam, ScaleSource.USER)
        ).as_array()
        assert np.max(np.abs(scaled - base * lam) / np.abs(base * lam)) < 1e-12


# -- domain type validation -----------------------------------------------------

def test_relative_pose_validation():
    with pytest.raises(ValueError):
        RelativePose(R=np.eye(3) * 1.01, t=np.array([0.0, 0.0, 1.0]))
    with pytest.raises(ValueError):
        RelativePose(R=np.eye(3), t=np.array([0.0, 0.0, 2.0]))
    with pytest.raises(ValueError):
        RelativePose(R=np.eye(3), t=np.array([0.0, 0.0, 1.0]), scale=0.0)


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(fu=0.0, fv=1.0, cu=0.0, cv=0.0)
    K = CameraIntrinsics(2.0, 3.0, 4.0, 5.0)
    M = K.matrix()
    assert M[0, 0] == 2.0 and M[1, 1] == 3.0 and M[0, 2] == 4.0 and M[1, 2] == 5.0
    assert np.allclose(M[2], [0, 0, 1])


def test_correspondence_set_validation():
    with pytest.raises(ValueError):
        CorrespondenceSet(np.zeros((3, 2)), np.zeros((4, 2)))
    with pytest.raises(ValueError):
        CorrespondenceSet(np.zeros((3, 2)), np.zeros((3, 2)), inlier_mask=np.ones(2, bool))


def test_world_point_helpers():
    p = WorldPoint(3.0, -1.0, 4.0)
    assert p.ground_distance() == pytest.approx(5.0)
    assert np.allclose(p.as_array(), [3.0, -1.0, 4.0])
