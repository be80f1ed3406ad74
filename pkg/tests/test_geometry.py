"""Projection, triangulation, residual, and diagnostic checks.

Oracles: a dense grid-refinement minimizer for noisy triangulation and a
pure-math (no numpy) scalar recomputation for residual records.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from vector.errors import (
    CheiralityViolation,
    DegenerateGeometry,
    MissingFinalState,
    TooFewObservations,
)
from vector.geometry import (
    Camera,
    Intrinsics,
    Observation,
    Pose,
    Track,
    project,
    quat_from_matrix,
    quat_from_rotvec,
    quat_multiply,
    quat_to_matrix,
    residual,
    residuals_from_arrays,
    rotation_angle_deg,
    total_reprojection_error,
    triangulate,
    triangulation_angle,
)

from conftest import DEFAULT_INTRINSICS, looking_down_pose, make_camera, make_pose, observe


def unit_cam(cam_id="c0", center=(0.0, 0.0, 0.0)):
    k = Intrinsics(fx=1.0, fy=1.0, cx=0.0, cy=0.0, width=1000, height=1000)
    return make_camera(cam_id, Pose(np.array([1.0, 0, 0, 0]), np.asarray(center, dtype=float)), k)


# ---------------------------------------------------------------------------
# Quaternion plumbing
# ---------------------------------------------------------------------------

def test_quat_matrix_roundtrip(rng):
    for _ in range(50):
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        R = quat_to_matrix(q)
        np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)
        q2 = quat_from_matrix(R)
        # q and -q encode the same rotation
        np.testing.assert_allclose(quat_to_matrix(q2), R, atol=1e-12)


def test_quat_multiply_composes_rotations(rng):
    for _ in range(20):
        a = quat_from_rotvec(rng.uniform(-2, 2, 3))
        b = quat_from_rotvec(rng.uniform(-2, 2, 3))
        np.testing.assert_allclose(
            quat_to_matrix(quat_multiply(a, b)),
            quat_to_matrix(a) @ quat_to_matrix(b),
            atol=1e-12,
        )


def test_rotvec_small_angle():
    q = quat_from_rotvec([1e-14, 0, 0])
    np.testing.assert_allclose(q, [1, 0, 0, 0], atol=1e-12)


def test_rotation_angle_deg():
    R = quat_to_matrix(quat_from_rotvec([0, 0, np.radians(30)]))
    assert rotation_angle_deg(R) == pytest.approx(30.0, abs=1e-9)


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

def test_pose_renormalizes_near_unit():
    q = np.array([1.0 + 5e-7, 0, 0, 0])
    p = Pose(q, np.zeros(3))
    assert np.linalg.norm(p.rotation) == pytest.approx(1.0, abs=1e-12)


def test_pose_rejects_far_from_unit():
    with pytest.raises(ValueError):
        Pose(np.array([2.0, 0, 0, 0]), np.zeros(3))


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        Intrinsics(fx=-1, fy=1, cx=0, cy=0, width=10, height=10)
    with pytest.raises(ValueError):
        Intrinsics(fx=1, fy=1, cx=0, cy=0, width=0, height=10)


def test_track_needs_two_observations():
    obs = (Observation("a", np.zeros(2)),)
    with pytest.raises(TooFewObservations):
        Track(id="t", observations=obs, point_initial=np.zeros(3))


def test_track_rejects_duplicate_camera():
    obs = (Observation("a", np.zeros(2)), Observation("a", np.ones(2)))
    with pytest.raises(ValueError):
        Track(id="t", observations=obs, point_initial=np.zeros(3))


def test_types_are_immutable():
    p = Pose.identity()
    with pytest.raises(ValueError):
        p.center[0] = 1.0


# ---------------------------------------------------------------------------
# project
# ---------------------------------------------------------------------------

def test_project_optical_axis():
    cam = unit_cam()
    np.testing.assert_allclose(project(cam, cam.pose_initial, [0, 0, 1]), [0, 0], atol=0)


def test_project_unit_depth():
    cam = unit_cam()
    np.testing.assert_allclose(project(cam, cam.pose_initial, [2, 3, 1]), [2, 3], atol=0)


def test_project_with_principal_point():
    k = Intrinsics(fx=100.0, fy=100.0, cx=320.0, cy=240.0, width=640, height=480)
    cam = make_camera("c", Pose.identity(), k)
    np.testing.assert_allclose(project(cam, cam.pose_initial, [1, 0, 5]), [340.0, 240.0], atol=0)


def test_project_behind_camera_raises():
    cam = unit_cam()
    with pytest.raises(CheiralityViolation):
        project(cam, cam.pose_initial, [0, 0, -1])
    with pytest.raises(CheiralityViolation):
        project(cam, cam.pose_initial, [0, 0, 0])


def test_project_respects_pose(rng):
    # Consistency: applying the pose transform by hand must agree.
    for _ in range(25):
        pose = make_pose(rng)
        cam = make_camera("c", pose)
        point = pose.center + quat_to_matrix(pose.rotation).T @ np.array([0.3, -0.2, 4.0])
        px = project(cam, pose, point)
        p_cam = quat_to_matrix(pose.rotation) @ (point - pose.center)
        expect = [
            600.0 * p_cam[0] / p_cam[2] + 400.0,
            600.0 * p_cam[1] / p_cam[2] + 300.0,
        ]
        np.testing.assert_allclose(px, expect, atol=1e-9)


# ---------------------------------------------------------------------------
# triangulate
# ---------------------------------------------------------------------------

def test_triangulate_two_view_exact():
    cams = [unit_cam("a", (0, 0, 0)), unit_cam("b", (1, 0, 0))]
    point = np.array([0.5, 0.0, 5.0])
    rays = [(c, c.pose_initial, project(c, c.pose_initial, point)) for c in cams]
    np.testing.assert_allclose(triangulate(rays), point, atol=1e-9)


def test_triangulate_zero_baseline_degenerate():
    cams = [unit_cam("a"), unit_cam("b")]
    point = np.array([0.2, 0.1, 3.0])
    rays = [(c, c.pose_initial, project(c, c.pose_initial, point)) for c in cams]
    with pytest.raises(DegenerateGeometry):
        triangulate(rays)


def test_triangulate_needs_two_rays():
    cam = unit_cam()
    with pytest.raises(DegenerateGeometry):
        triangulate([(cam, cam.pose_initial, np.zeros(2))])


def test_triangulate_behind_cameras():
    # Two cameras looking at +z, pixels crossing behind them.
    a = unit_cam("a", (0, 0, 0))
    b = unit_cam("b", (1, 0, 0))
    # Rays that diverge in front intersect behind: negative disparity.
    pa = np.array([-0.5, 0.0])
    pb = np.array([0.5, 0.0])
    with pytest.raises(CheiralityViolation):
        triangulate([(a, a.pose_initial, pa), (b, b.pose_initial, pb)])


def _grid_refine(rays, start, span=0.5, iters=40):
    """Oracle: shrinking-grid search of the reprojection-SSE minimizer."""

    def sse(pt):
        total = 0.0
        for cam, pose, px in rays:
            d = project(cam, pose, pt) - px
            total += float(d @ d)
        return total

    best = np.asarray(start, dtype=float)
    for _ in range(iters):
        candidates = [best]
        for axis in range(3):
            for sign in (-1.0, 1.0):
                step = np.zeros(3)
                step[axis] = sign * span
                candidates.append(best + step)
        scores = [sse(c) for c in candidates]
        best = candidates[int(np.argmin(scores))]
        span *= 0.7
    return best


def test_triangulate_noisy_matches_grid_oracle(rng, down_rig):
    point = np.array([4.0, 1.0, 0.0])
    rays = []
    for cam in down_rig[:3]:
        px = project(cam, cam.pose_initial, point) + rng.normal(0, 0.5, 2)
        rays.append((cam, cam.pose_initial, px))
    dlt = triangulate(rays)
    refined = _grid_refine(rays, dlt)
    # DLT is an algebraic, not geometric, minimizer: agreement to the scale of
    # the noise-induced uncertainty, far looser than machine precision.
    assert np.linalg.norm(dlt - refined) < 0.05
    # And the oracle could not improve the reprojection error much.
    def sse(pt):
        return sum(float(np.sum((project(c, p, pt) - px) ** 2)) for c, p, px in rays)

    assert sse(dlt) <= sse(refined) * 1.05


def test_triangulate_project_identity_property(rng, down_rig):
    # Noiseless round-trip over randomized ground points with healthy angles.
    for _ in range(50):
        point = np.array([rng.uniform(0, 8), rng.uniform(-1, 2), rng.uniform(0, 0.5)])
        rays = [(c, c.pose_initial, project(c, c.pose_initial, point)) for c in down_rig]
        track = observe(down_rig, point, "t")
        if triangulation_angle(track, down_rig) <= 1.0:
            continue
        got = triangulate(rays)
        scene_diameter = 10.0
        assert np.linalg.norm(got - point) < 1e-6 * scene_diameter


# ---------------------------------------------------------------------------
# residual records
# ---------------------------------------------------------------------------

def test_residual_perfect_reprojection():
    cam = unit_cam()
    point = np.array([0.1, 0.2, 2.0])
    obs = Observation("c0", project(cam, cam.pose_initial, point))
    rec = residual(cam, cam.pose_initial, point, obs, track_id="t0")
    np.testing.assert_allclose(rec.vector, [0, 0], atol=1e-15)
    assert rec.length == pytest.approx(0.0, abs=1e-15)
    assert rec.angle == 0.0


def test_residual_3_4_5():
    k = Intrinsics(fx=100.0, fy=100.0, cx=320.0, cy=240.0, width=640, height=480)
    cam = make_camera("c", Pose.identity(), k)
    # Point projecting to (343, 244); tiepoint at (340, 240).
    point = np.array([(343 - 320) / 100.0, (244 - 240) / 100.0, 1.0])
    obs = Observation("c", np.array([340.0, 240.0]))
    rec = residual(cam, cam.pose_initial, point, obs, track_id="t", kind="final")
    np.testing.assert_allclose(rec.vector, [3, 4], atol=1e-9)
    assert rec.length == pytest.approx(5.0, abs=1e-9)
    assert rec.angle == pytest.approx(math.degrees(math.atan2(4, 3)), abs=1e-9)
    assert rec.kind == "final"


def test_residual_wrong_camera_rejected():
    cam = unit_cam("c0")
    obs = Observation("other", np.zeros(2))
    with pytest.raises(ValueError):
        residual(cam, cam.pose_initial, [0, 0, 1], obs)


def test_residuals_match_scalar_recomputation(rng, down_rig):
    """Oracle: recompute every record with plain math.* scalar arithmetic."""
    tracks = []
    for i in range(20):
        point = np.array([rng.uniform(0, 8), rng.uniform(-1, 2), 0.0])
        tracks.append(observe(down_rig, point, f"t{i:02d}", noise=1.0, rng=rng))

    by_id = {c.id: c for c in down_rig}
    for track in tracks:
        for obs in track.observations:
            cam = by_id[obs.camera_id]
            rec = residual(cam, cam.pose_initial, track.point_initial, obs, track_id=track.id)

            # Scalar recomputation: quaternion->matrix by hand, no numpy.
            w, x, y, z = [float(v) for v in cam.pose_initial.rotation]
            R = [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
            d = [float(track.point_initial[k]) - float(cam.pose_initial.center[k]) for k in range(3)]
            p = [sum(R[r][k] * d[k] for k in range(3)) for r in range(3)]
            u = 600.0 * p[0] / p[2] + 400.0
            v = 600.0 * p[1] / p[2] + 300.0
            ru = u - float(obs.pixel[0])
            rv = v - float(obs.pixel[1])
            assert rec.vector[0] == pytest.approx(ru, abs=1e-9)
            assert rec.vector[1] == pytest.approx(rv, abs=1e-9)
            assert rec.length == pytest.approx(math.hypot(ru, rv), abs=1e-9)
            expected_angle = math.degrees(math.atan2(rv, ru)) % 360.0
            assert rec.angle == pytest.approx(expected_angle, abs=1e-9)
            assert 0.0 <= rec.angle < 360.0
            assert rec.length >= 0.0


def test_residuals_from_arrays_matches_scalar_path():
    vectors = np.array([[3.0, 4.0], [0.0, 0.0], [-1.0, 0.0]])
    recs = residuals_from_arrays(["a", "a", "b"], ["t1", "t2", "t3"], vectors, "initial")
    assert [r.length for r in recs] == pytest.approx([5.0, 0.0, 1.0])
    assert recs[0].angle == pytest.approx(math.degrees(math.atan2(4, 3)))
    assert recs[1].angle == 0.0
    assert recs[2].angle == pytest.approx(180.0)


def test_rotation_invariance_of_residuals(rng, down_rig):
    """A rigid transform of the whole scene leaves residual vectors unchanged."""
    point = np.array([3.0, 1.0, 0.0])
    track = observe(down_rig, point, "t", noise=2.0, rng=rng)

    R_g = quat_to_matrix(quat_from_rotvec(rng.uniform(-1, 1, 3)))
    t_g = rng.uniform(-10, 10, 3)

    for cam in down_rig:
        obs = next(o for o in track.observations if o.camera_id == cam.id)
        before = residual(cam, cam.pose_initial, point, obs, track_id="t")

        R_new = cam.pose_initial.rotation_matrix() @ R_g.T
        c_new = R_g @ cam.pose_initial.center + t_g
        pose_new = Pose.from_matrix(R_new, c_new)
        point_new = R_g @ point + t_g
        after = residual(cam, pose_new, point_new, obs, track_id="t")
        np.testing.assert_allclose(after.vector, before.vector, atol=1e-9)


# ---------------------------------------------------------------------------
# total_reprojection_error
# ---------------------------------------------------------------------------

def test_total_error_zero_for_exact(down_rig):
    tracks = [observe(down_rig, np.array([2.0, 0.5, 0.0]), "t0")]
    assert total_reprojection_error(down_rig, tracks, "initial") == pytest.approx(0.0, abs=1e-18)


def test_total_error_single_residual():
    cam = unit_cam()
    point = np.array([3.0 / 100, 4.0 / 100, 1.0])
    k = Intrinsics(fx=100.0, fy=100.0, cx=0.0, cy=0.0, width=1000, height=1000)
    cam = make_camera("c0", Pose.identity(), k)
    cam2 = make_camera("c1", Pose(np.array([1.0, 0, 0, 0]), np.array([0.01, 0.0, 0.0])), k)
    obs = (
        Observation("c0", project(cam, cam.pose_initial, point) - np.array([3.0, 4.0])),
        Observation("c1", project(cam2, cam2.pose_initial, point)),
    )
    track = Track(id="t", observations=obs, point_initial=point)
    assert total_reprojection_error([cam, cam2], [track], "initial") == pytest.approx(25.0, abs=1e-9)


def test_total_error_matches_per_record_sum(rng, down_rig):
    tracks = [
        observe(down_rig, np.array([rng.uniform(0, 8), rng.uniform(-1, 2), 0.0]),
                f"t{i}", noise=0.7, rng=rng)
        for i in range(30)
    ]
    by_id = {c.id: c for c in down_rig}
    total = 0.0
    for track in tracks:
        for obs in track.observations:
            cam = by_id[obs.camera_id]
            rec = residual(cam, cam.pose_initial, track.point_initial, obs, track_id=track.id)
            total += rec.length**2
    assert total_reprojection_error(down_rig, tracks, "initial") == pytest.approx(total, rel=1e-12)


def test_total_error_final_requires_final_state(down_rig):
    tracks = [observe(down_rig, np.array([2.0, 0.5, 0.0]), "t0")]
    with pytest.raises(MissingFinalState):
        total_reprojection_error(down_rig, tracks, "final")


# ---------------------------------------------------------------------------
# triangulation_angle
# ---------------------------------------------------------------------------

def test_triangulation_angle_orthogonal():
    # Two cameras whose rays to the point are orthogonal.
    point = np.array([0.0, 0.0, 0.0])
    a = make_camera("a", looking_down_pose([0.0, 0.0, 5.0]))
    # Second camera along +x, looking toward origin along -x.
    R = np.array([[0.0, 0.0, -1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]).T
    b = make_camera("b", Pose.from_matrix(R, np.array([5.0, 0.0, 0.0])))
    obs = (
        Observation("a", project(a, a.pose_initial, point + np.array([0, 0, 1e-12]))),
        Observation("b", project(b, b.pose_initial, point + np.array([0, 0, 1e-12]))),
    )
    track = Track(id="t", observations=obs, point_initial=point)
    assert triangulation_angle(track, [a, b]) == pytest.approx(90.0, abs=1e-6)


def test_triangulation_angle_coincident_centers():
    pose = looking_down_pose([0.0, 0.0, 5.0])
    a = make_camera("a", pose)
    b = make_camera("b", pose)
    point = np.array([0.5, 0.5, 0.0])
    obs = (
        Observation("a", project(a, a.pose_initial, point)),
        Observation("b", project(b, b.pose_initial, point)),
    )
    track = Track(id="t", observations=obs, point_initial=point)
    assert triangulation_angle(track, [a, b]) == 0.0


def test_triangulation_angle_grows_with_baseline(down_rig):
    point = np.array([4.0, 1.0, 0.0])
    near = down_rig[:2]  # 2-unit baseline
    far = [down_rig[0], down_rig[4]]  # 8-unit baseline
    t_near = observe(near, point, "tn")
    t_far = observe(far, point, "tf")
    assert triangulation_angle(t_far, down_rig) > triangulation_angle(t_near, down_rig)
