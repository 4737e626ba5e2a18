import numpy as np
import pytest

from evline.camera import (
    CameraIntrinsics,
    PoseSE3,
    ProjectionMatrix,
    StereoRig,
    epipolar_line,
    line_intrinsics,
    point_projection,
    so3_exp,
    stereo_pose_chain,
)

from conftest import random_pose


class TestLineIntrinsics:
    def test_unit_camera_gives_identity(self):
        K = CameraIntrinsics(1.0, 1.0, 0.0, 0.0)
        assert np.allclose(line_intrinsics(K), np.eye(3))

    def test_direct_substitution(self):
        K = CameraIntrinsics(400.0, 300.0, 320.0, 240.0)
        expect = np.array([[300, 0, 0], [0, 400, 0], [-96000, -96000, 120000]], dtype=float)
        assert np.allclose(line_intrinsics(K), expect)

    def test_projected_points_incident_with_projected_line(self, rng):
        # Sample two points of a 3D line, project with K[R|T]; both projections
        # must satisfy the line equation K_e @ n_cam.
        K = CameraIntrinsics(350.0, 420.0, 310.0, 250.0)
        K_e = line_intrinsics(K)
        for _ in range(50):
            pose = random_pose(rng, 0.4, 0.3)
            P1 = rng.normal(size=3) + [0, 0, 4]
            P2 = rng.normal(size=3) + [0, 0, 4]
            c1, c2 = pose.apply(P1), pose.apply(P2)
            if min(c1[2], c2[2]) < 0.2:
                continue
            n_cam = np.cross(c1, c2)
            l = K_e @ (n_cam / np.linalg.norm(n_cam))
            M = ProjectionMatrix.from_pose(K, pose)
            for P in (P1, P2):
                p = point_projection(M, P)
                val = l[0] * p[0] + l[1] * p[1] + l[2]
                assert abs(val) / np.hypot(l[0], l[1]) < 1e-8


class TestPointProjection:
    def test_canonical_camera(self):
        M = ProjectionMatrix.from_pose(CameraIntrinsics(1, 1, 0, 0), PoseSE3.identity())
        assert np.allclose(point_projection(M, [0, 0, 1, 1]), [0, 0])

    def test_divide_by_depth(self):
        M = ProjectionMatrix.from_pose(CameraIntrinsics(1, 1, 0, 0), PoseSE3.identity())
        assert np.allclose(point_projection(M, [1, 2, 2, 1]), [0.5, 1.0])

    def test_matches_homogeneous_chain_oracle(self, rng):
        K = CameraIntrinsics(500.0, 480.0, 320.0, 240.0)
        for _ in range(100):
            pose = random_pose(rng, 0.5, 0.4)
            P = rng.normal(size=3) + [0, 0, 5]
            if pose.apply(P)[2] < 0.1:
                continue
            M = ProjectionMatrix.from_pose(K, pose)
            # Oracle: 4x4 homogeneous transform then 3x3 intrinsics, composed
            # independently of the 3x4 path.
            H = np.eye(4)
            H[:3, :3], H[:3, 3] = pose.R, pose.T
            q = H @ np.append(P, 1.0)
            pix = K.K @ q[:3]
            assert np.allclose(point_projection(M, P), pix[:2] / pix[2], atol=1e-10)

    def test_behind_camera_rejected(self):
        M = ProjectionMatrix.from_pose(CameraIntrinsics(1, 1, 0, 0), PoseSE3.identity())
        with pytest.raises(ValueError, match="behind"):
            point_projection(M, [0, 0, -1, 1])


class TestStereoPoseChain:
    def test_identity_rig(self):
        rig = StereoRig(
            CameraIntrinsics(1, 1, 0, 0), CameraIntrinsics(1, 1, 0, 0), np.eye(3), np.zeros(3)
        )
        pose = PoseSE3(so3_exp([0.1, 0.2, 0.3]), np.array([1.0, 2.0, 3.0]))
        out = stereo_pose_chain(pose, rig)
        assert np.allclose(out.R, pose.R) and np.allclose(out.T, pose.T)

    def test_identity_left_pose(self, rng):
        R = so3_exp(rng.normal(size=3))
        T = rng.normal(size=3)
        rig = StereoRig(CameraIntrinsics(1, 1, 0, 0), CameraIntrinsics(1, 1, 0, 0), R, T)
        out = stereo_pose_chain(PoseSE3.identity(), rig)
        assert np.allclose(out.R, R.T)
        assert np.allclose(out.T, -R.T @ T)

    def test_matches_homogeneous_composition(self, rng):
        for _ in range(50):
            R = so3_exp(rng.normal(size=3))
            T = rng.normal(size=3)
            rig = StereoRig(CameraIntrinsics(1, 1, 0, 0), CameraIntrinsics(1, 1, 0, 0), R, T)
            pose = random_pose(rng)
            out = stereo_pose_chain(pose, rig)
            # Oracle: invert the 4x4 right->left transform and compose.
            H_r2l = np.eye(4)
            H_r2l[:3, :3], H_r2l[:3, 3] = R, T
            H_l = np.eye(4)
            H_l[:3, :3], H_l[:3, 3] = pose.R, pose.T
            H_r = np.linalg.inv(H_r2l) @ H_l
            assert np.allclose(out.matrix(), H_r, atol=1e-12)
            assert np.max(np.abs(out.R.T @ out.R - np.eye(3))) < 1e-9


class TestEpipolarLine:
    def test_rectified_rig_horizontal_line(self, rig):
        l = epipolar_line(rig, np.array([100.0, 50.0]), "left")
        # horizontal line y = 50 in the right image
        assert abs(l[0]) < 1e-12
        assert abs(l[1] * 50.0 + l[2]) < 1e-9

    def test_true_correspondences_on_line(self, rng, rig):
        from evline.camera import project_points

        for _ in range(50):
            P = rng.uniform([-0.4, -0.3, 1.0], [0.4, 0.3, 3.0])
            p_l = project_points(rig.left, PoseSE3.identity(), P[None])[0]
            p_r = project_points(
                rig.right, stereo_pose_chain(PoseSE3.identity(), rig), P[None]
            )[0]
            l_r = epipolar_line(rig, p_l, "left")
            assert abs(l_r[0] * p_r[0] + l_r[1] * p_r[1] + l_r[2]) < 1e-8
            l_l = epipolar_line(rig, p_r, "right")
            assert abs(l_l[0] * p_l[0] + l_l[1] * p_l[1] + l_l[2]) < 1e-8

    def test_symmetric_distances_for_true_pairs(self, rng, rig):
        from evline.camera import project_points

        for _ in range(20):
            P = rng.uniform([-0.4, -0.3, 1.0], [0.4, 0.3, 3.0])
            p_l = project_points(rig.left, PoseSE3.identity(), P[None])[0]
            p_r = project_points(
                rig.right, stereo_pose_chain(PoseSE3.identity(), rig), P[None]
            )[0]
            d_r = epipolar_line(rig, p_l, "left") @ np.array([p_r[0], p_r[1], 1.0])
            d_l = epipolar_line(rig, p_r, "right") @ np.array([p_l[0], p_l[1], 1.0])
            assert abs(abs(d_r) - abs(d_l)) < 1e-8

    def test_zero_baseline_rejected(self):
        K = CameraIntrinsics(300, 300, 320, 240)
        rig = StereoRig(K, K, np.eye(3), np.zeros(3))
        with pytest.raises(ValueError, match="baseline"):
            epipolar_line(rig, np.array([0.0, 0.0]), "left")


def test_pose_invariants_enforced():
    with pytest.raises(ValueError):
        PoseSE3(np.eye(3) * 2.0, np.zeros(3))
    bad = np.eye(3)
    bad[0, 0] = -1.0  # det = -1 reflection
    with pytest.raises(ValueError):
        PoseSE3(bad, np.zeros(3))


def test_pose_compose_inverse(rng):
    a = random_pose(rng)
    b = random_pose(rng)
    x = rng.normal(size=3)
    assert np.allclose(a.compose(b).apply(x), a.apply(b.apply(x)))
    assert np.allclose(a.inverse().apply(a.apply(x)), x, atol=1e-12)
