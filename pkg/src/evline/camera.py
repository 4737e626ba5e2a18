"""Camera models, SE(3) poses and stereo rig geometry.

Conventions used throughout the package:

* Poses map world/object coordinates into camera coordinates,
  ``X_cam = R @ X + T``.
* The left camera anchors the world frame at initialization
  (``R = I``, ``T = 0``); the right camera pose follows from the rig
  extrinsics via :func:`stereo_pose_chain`.
* Pixel coordinates are (column, row) with the origin at the principal
  point offset, i.e. the usual pinhole convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

__all__ = [
    "CameraIntrinsics",
    "PoseSE3",
    "StereoRig",
    "ProjectionMatrix",
    "line_intrinsics",
    "point_projection",
    "stereo_pose_chain",
    "epipolar_line",
    "skew",
    "so3_exp",
    "so3_log",
]

_ROTATION_TOL = 1e-9


def skew(w: np.ndarray) -> np.ndarray:
    """Antisymmetric matrix such that ``skew(w) @ x == np.cross(w, x)``."""
    wx, wy, wz = w
    return np.array([[0.0, -wz, wy], [wz, 0.0, -wx], [-wy, wx, 0.0]])


def so3_exp(w: np.ndarray) -> np.ndarray:
    """Rotation matrix from an axis-angle 3-vector."""
    return Rotation.from_rotvec(np.asarray(w, dtype=float)).as_matrix()


def so3_log(R: np.ndarray) -> np.ndarray:
    """Axis-angle 3-vector of a rotation matrix."""
    return Rotation.from_matrix(R).as_rotvec()


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics: focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int = 0
    height: int = 0

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")

    @property
    def K(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


def line_intrinsics(K: CameraIntrinsics) -> np.ndarray:
    """3x3 matrix mapping a camera-frame line moment to image-line coefficients.

    Equal to ``fx*fy*inv(K).T``, so ``l = K_e @ n`` is the image of the line
    whose moment in the camera frame is ``n`` (up to scale).
    """
    return np.array(
        [
            [K.fy, 0.0, 0.0],
            [0.0, K.fx, 0.0],
            [-K.fy * K.cx, -K.fx * K.cy, K.fx * K.fy],
        ]
    )


@dataclass(frozen=True)
class PoseSE3:
    """Rigid transform, ``X_cam = R @ X_world + T`` (translation in meters)."""

    R: np.ndarray
    T: np.ndarray

    def __post_init__(self) -> None:
        R = np.asarray(self.R, dtype=float).reshape(3, 3)
        T = np.asarray(self.T, dtype=float).reshape(3)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "T", T)
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-6:
            raise ValueError("R is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-6:
            raise ValueError("R is not a proper rotation")

    @classmethod
    def identity(cls) -> "PoseSE3":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, M: np.ndarray) -> "PoseSE3":
        return cls(M[:3, :3], M[:3, 3])

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.R
        M[:3, 3] = self.T
        return M

    def inverse(self) -> "PoseSE3":
        return PoseSE3(self.R.T, -self.R.T @ self.T)

    def compose(self, other: "PoseSE3") -> "PoseSE3":
        """self after other: ``(self @ other)(X) = self(other(X))``."""
        return PoseSE3(self.R @ other.R, self.R @ other.T + self.T)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one point (3,) or a batch (N, 3)."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.R.T + self.T

    def perturbed(self, omega: np.ndarray, tau: np.ndarray) -> "PoseSE3":
        """Right-multiplicative rotation update and additive translation.

        ``R <- R @ Exp(omega)``, ``T <- T + tau``; the parameterization used
        by the pose optimizer.
        """
        return PoseSE3(self.R @ so3_exp(omega), self.T + np.asarray(tau, float))

    def rotation_angle_to(self, other: "PoseSE3") -> float:
        """Geodesic rotation distance in radians."""
        return float(np.linalg.norm(so3_log(self.R.T @ other.R)))


@dataclass(frozen=True)
class StereoRig:
    """Per-camera intrinsics plus right-to-left extrinsics.

    ``X_left = R_r2l @ X_right + T_r2l`` (meters).
    """

    left: CameraIntrinsics
    right: CameraIntrinsics
    R_r2l: np.ndarray
    T_r2l: np.ndarray

    def __post_init__(self) -> None:
        R = np.asarray(self.R_r2l, dtype=float).reshape(3, 3)
        T = np.asarray(self.T_r2l, dtype=float).reshape(3)
        object.__setattr__(self, "R_r2l", R)
        object.__setattr__(self, "T_r2l", T)
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-6:
            raise ValueError("R_r2l is not a valid rotation")

    @property
    def baseline(self) -> float:
        return float(np.linalg.norm(self.T_r2l))


@dataclass(frozen=True)
class ProjectionMatrix:
    """3x4 pinhole projection ``M = K @ [R | T]``."""

    M: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        M = np.asarray(self.M, dtype=float).reshape(3, 4)
        object.__setattr__(self, "M", M)
        if np.linalg.matrix_rank(M) != 3:
            raise ValueError("projection matrix must have rank 3")

    @classmethod
    def from_pose(cls, K: CameraIntrinsics, pose: PoseSE3) -> "ProjectionMatrix":
        Rt = np.hstack([pose.R, pose.T.reshape(3, 1)])
        return cls(K.K @ Rt)

    def row(self, i: int) -> np.ndarray:
        return self.M[i]


def point_projection(M: ProjectionMatrix, P: np.ndarray) -> np.ndarray:
    """Project a homogeneous 3D point to dehomogenized pixel coordinates."""
    P = np.asarray(P, dtype=float)
    if P.shape[-1] == 3:
        P = np.append(P, 1.0)
    q = M.M @ P
    if q[2] <= 0:
        raise ValueError("point is behind the camera")
    return q[:2] / q[2]


def project_points(K: CameraIntrinsics, pose: PoseSE3, points: np.ndarray) -> np.ndarray:
    """Vectorized pinhole projection of world points (N, 3) -> pixels (N, 2).

    Callers are responsible for depth checks; points at non-positive depth
    produce invalid pixels rather than raising.
    """
    cam = pose.apply(points)
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = K.fx * cam[:, 0] / z + K.cx
        v = K.fy * cam[:, 1] / z + K.cy
    return np.column_stack([u, v])


def stereo_pose_chain(pose_l: PoseSE3, rig: StereoRig) -> PoseSE3:
    """Right-camera pose chained from the left-camera pose and rig extrinsics.

    ``R_r = R_r2l^-1 @ R_l`` and ``T_r = R_r2l^-1 @ (T_l - T_r2l)``.
    """
    Rinv = rig.R_r2l.T
    return PoseSE3(Rinv @ pose_l.R, Rinv @ (pose_l.T - rig.T_r2l))


def fundamental_matrix(rig: StereoRig) -> np.ndarray:
    """Fundamental matrix F with ``p_r^T F p_l = 0`` for true correspondences."""
    if rig.baseline < 1e-12:
        raise ValueError("degenerate rig: zero baseline")
    # Left-to-right transform: X_r = R_lr X_l + t_lr.
    R_lr = rig.R_r2l.T
    t_lr = -rig.R_r2l.T @ rig.T_r2l
    E = skew(t_lr) @ R_lr
    Kl_inv = np.linalg.inv(rig.left.K)
    Kr_inv = np.linalg.inv(rig.right.K)
    return Kr_inv.T @ E @ Kl_inv


def epipolar_line(rig: StereoRig, p: np.ndarray, source: str) -> np.ndarray:
    """Epipolar line of pixel ``p`` from one camera in the other camera.

    Returns (a, b, c) with ``||(a, b)|| = 1``; the true correspondence of
    ``p`` lies on the returned line for noise-free geometry.
    """
    F = fundamental_matrix(rig)
    ph = np.array([p[0], p[1], 1.0])
    if source == "left":
        l = F @ ph
    elif source == "right":
        l = F.T @ ph
    else:
        raise ValueError(f"source must be 'left' or 'right', got {source!r}")
    norm = np.hypot(l[0], l[1])
    if norm < 1e-15:
        raise ValueError("degenerate epipolar line")
    return l / norm
