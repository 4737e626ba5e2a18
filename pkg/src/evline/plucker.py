"""Plucker-line algebra: construction, triangulation, transforms, projection,
the orthonormal 4-DOF parameterization, DLT point triangulation and the
point/event-to-line distances used by reconstruction and tracking.

A line is stored as ``(n, v)`` where ``v`` is the unit direction and ``n``
is the moment, ``n = P x v`` for any point ``P`` on the line. ``||n||`` is
then the distance of the line from the origin and ``v x n`` is the point of
the line closest to the origin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraIntrinsics, PoseSE3, ProjectionMatrix, skew, so3_exp

__all__ = [
    "PluckerLine",
    "OrthonormalLine",
    "Plane3D",
    "Segment3D",
    "Line2D",
    "Segment2D",
    "plucker_from_points",
    "triangulate_line",
    "backproject_plane",
    "transform_line",
    "project_line",
    "point_line_signed_distance",
    "plucker_to_orthonormal",
    "orthonormal_to_plucker",
    "orthonormal_update",
    "triangulate_point_dlt",
    "perpendicular_foot",
    "event_line_distance",
    "event_line_residuals",
    "event_line_pose_jacobian",
]


class DegenerateGeometryError(ValueError):
    """Raised when an operation has no unique geometric answer."""


@dataclass(frozen=True)
class PluckerLine:
    """Infinite 3D line as (moment, direction) with ``||v|| = 1``."""

    n: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        n = np.asarray(self.n, dtype=float).reshape(3)
        v = np.asarray(self.v, dtype=float).reshape(3)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "v", v)
        if np.linalg.norm(v) < 1e-12:
            raise DegenerateGeometryError("line direction is zero")
        if abs(float(n @ v)) > 1e-6 * max(1.0, np.linalg.norm(n)):
            raise ValueError("Plucker constraint n.v = 0 violated")

    @classmethod
    def normalized(cls, n: np.ndarray, v: np.ndarray) -> "PluckerLine":
        """Rescale (n, v) jointly so that ``||v|| = 1``."""
        v = np.asarray(v, dtype=float).reshape(3)
        s = np.linalg.norm(v)
        if s < 1e-12:
            raise DegenerateGeometryError("line direction is zero")
        return cls(np.asarray(n, dtype=float) / s, v / s)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.n, self.v])

    def closest_point_to_origin(self) -> np.ndarray:
        return np.cross(self.v, self.n)

    def point_at(self, s: float | np.ndarray) -> np.ndarray:
        """Point(s) on the line at signed arc length ``s`` from the foot of
        the origin perpendicular."""
        p0 = self.closest_point_to_origin()
        s = np.asarray(s, dtype=float)
        if s.ndim == 0:
            return p0 + float(s) * self.v
        return p0[None, :] + s[:, None] * self.v[None, :]

    def distance_to_point(self, P: np.ndarray) -> float:
        P = np.asarray(P, dtype=float)
        return float(np.linalg.norm(np.cross(P, self.v) - self.n))


@dataclass(frozen=True)
class OrthonormalLine:
    """Minimal 4-DOF line parameterization, U in SO(3), W in SO(2)."""

    U: np.ndarray
    W: np.ndarray

    def __post_init__(self) -> None:
        U = np.asarray(self.U, dtype=float).reshape(3, 3)
        W = np.asarray(self.W, dtype=float).reshape(2, 2)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "W", W)
        if np.max(np.abs(U.T @ U - np.eye(3))) > 1e-6 or np.linalg.det(U) < 0:
            raise ValueError("U must be in SO(3)")
        if np.max(np.abs(W.T @ W - np.eye(2))) > 1e-6 or np.linalg.det(W) < 0:
            raise ValueError("W must be in SO(2)")


@dataclass(frozen=True)
class Plane3D:
    """Homogeneous plane (a, b, c, d) with a unit normal."""

    pi: np.ndarray

    def __post_init__(self) -> None:
        pi = np.asarray(self.pi, dtype=float).reshape(4)
        norm = np.linalg.norm(pi[:3])
        if norm < 1e-12:
            raise DegenerateGeometryError("plane normal is zero")
        object.__setattr__(self, "pi", pi / norm)

    @property
    def normal(self) -> np.ndarray:
        return self.pi[:3]

    def signed_distance(self, P: np.ndarray) -> float:
        P = np.asarray(P, dtype=float)
        return float(self.normal @ P + self.pi[3])


@dataclass(frozen=True)
class Line2D:
    """Image line a*x + b*y + c = 0 with ``||(a, b)|| = 1``."""

    a: float
    b: float
    c: float

    def __post_init__(self) -> None:
        norm = np.hypot(self.a, self.b)
        if norm < 1e-15:
            raise DegenerateGeometryError("invalid image line: (a, b) = 0")
        object.__setattr__(self, "a", float(self.a / norm))
        object.__setattr__(self, "b", float(self.b / norm))
        object.__setattr__(self, "c", float(self.c / norm))

    @classmethod
    def from_coefficients(cls, coeffs: np.ndarray) -> "Line2D":
        return cls(float(coeffs[0]), float(coeffs[1]), float(coeffs[2]))

    @classmethod
    def through_points(cls, p: np.ndarray, q: np.ndarray) -> "Line2D":
        l = np.cross([p[0], p[1], 1.0], [q[0], q[1], 1.0])
        return cls.from_coefficients(l)

    def coeffs(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c])

    @property
    def direction(self) -> np.ndarray:
        """Unit vector along the line."""
        return np.array([-self.b, self.a])

    def foot(self, p: np.ndarray) -> np.ndarray:
        """Perpendicular projection of a pixel onto the line."""
        p = np.asarray(p, dtype=float)
        d = self.a * p[0] + self.b * p[1] + self.c
        return p - d * np.array([self.a, self.b])


@dataclass(frozen=True)
class Segment2D:
    """Finite image segment: supporting line plus two endpoints on it."""

    line: Line2D
    pa: np.ndarray
    pb: np.ndarray
    support: int = 0

    def __post_init__(self) -> None:
        pa = np.asarray(self.pa, dtype=float).reshape(2)
        pb = np.asarray(self.pb, dtype=float).reshape(2)
        object.__setattr__(self, "pa", pa)
        object.__setattr__(self, "pb", pb)
        for p in (pa, pb):
            if abs(point_line_signed_distance(p, self.line)) > 1e-6:
                raise ValueError("segment endpoint does not lie on its line")

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.pa + self.pb)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.pb - self.pa))

    @property
    def angle(self) -> float:
        """Undirected orientation in radians, in [0, pi)."""
        d = self.pb - self.pa
        return float(np.arctan2(d[1], d[0]) % np.pi)


@dataclass(frozen=True)
class Segment3D:
    """3D line segment: infinite line plus two endpoints on it (meters)."""

    line: PluckerLine
    pa: np.ndarray
    pb: np.ndarray

    def __post_init__(self) -> None:
        pa = np.asarray(self.pa, dtype=float).reshape(3)
        pb = np.asarray(self.pb, dtype=float).reshape(3)
        object.__setattr__(self, "pa", pa)
        object.__setattr__(self, "pb", pb)
        for p in (pa, pb):
            if self.line.distance_to_point(p) > 1e-6:
                raise ValueError("segment endpoint does not lie on its line")

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.pb - self.pa))

    @classmethod
    def from_endpoints(cls, pa: np.ndarray, pb: np.ndarray) -> "Segment3D":
        return cls(plucker_from_points(pa, pb), pa, pb)


def plucker_from_points(P1: np.ndarray, P2: np.ndarray) -> PluckerLine:
    """Line through two distinct 3D points."""
    P1 = np.asarray(P1, dtype=float).reshape(3)
    P2 = np.asarray(P2, dtype=float).reshape(3)
    d = P2 - P1
    norm = np.linalg.norm(d)
    if norm < 1e-12:
        raise DegenerateGeometryError("coincident points define no line")
    v = d / norm
    return PluckerLine(np.cross(P1, v), v)


def triangulate_line(pi_l: Plane3D, pi_r: Plane3D) -> PluckerLine:
    """Intersect two planes via the dual Plucker matrix.

    ``L* = pi_l pi_r^T - pi_r pi_l^T`` holds ``[v]x`` in its upper-left block
    and ``n`` in its last column.
    """
    a, b = pi_l.pi, pi_r.pi
    Lstar = np.outer(a, b) - np.outer(b, a)
    v = np.array([Lstar[2, 1], Lstar[0, 2], Lstar[1, 0]])
    n = Lstar[:3, 3].copy()
    if np.linalg.norm(v) < 1e-12:
        raise DegenerateGeometryError("parallel planes: no unique intersection")
    return PluckerLine.normalized(n, v)


def backproject_plane(M: ProjectionMatrix, l: Line2D) -> Plane3D:
    """Plane through the camera center containing all points imaging onto l."""
    return Plane3D(M.M.T @ l.coeffs())


def transform_line(pose: PoseSE3, L: PluckerLine) -> PluckerLine:
    """Map a line into the camera frame: ``n' = R n + [T]x R v``, ``v' = R v``."""
    Rv = pose.R @ L.v
    return PluckerLine(pose.R @ L.n + np.cross(pose.T, Rv), Rv)


def project_line(K_e: np.ndarray, L_cam: PluckerLine) -> Line2D:
    """Image of a camera-frame line, ``l = K_e @ n``."""
    if np.linalg.norm(L_cam.n) < 1e-12:
        raise DegenerateGeometryError("line through the camera center")
    return Line2D.from_coefficients(K_e @ L_cam.n)


def point_line_signed_distance(p: np.ndarray, l: Line2D) -> float:
    """Signed pixel distance, ``(a x + b y + c) / hypot(a, b)``."""
    return float((l.a * p[0] + l.b * p[1] + l.c) / np.hypot(l.a, l.b))


def _unit_orthogonal(v: np.ndarray) -> np.ndarray:
    """Deterministic unit vector orthogonal to v: starts from the canonical
    basis vector least aligned with v (smallest index on ties)."""
    i = int(np.argmin(np.abs(v)))
    e = np.zeros(3)
    e[i] = 1.0
    u = e - (e @ v) * v
    return u / np.linalg.norm(u)


def plucker_to_orthonormal(L: PluckerLine) -> OrthonormalLine:
    """Factor (n | v) into U in SO(3) and W in SO(2).

    The columns of U are the unit moment, unit direction, and their cross
    product; W encodes (||n||, ||v||) up to scale. For a line through the
    origin (n = 0) the first column is completed deterministically.
    """
    norm_n = np.linalg.norm(L.n)
    norm_v = np.linalg.norm(L.v)
    if norm_n < 1e-12:
        u1 = _unit_orthogonal(L.v / norm_v)
    else:
        u1 = L.n / norm_n
    u2 = L.v / norm_v
    u3 = np.cross(u1, u2)
    U = np.column_stack([u1, u2, u3])
    sigma = np.hypot(norm_n, norm_v)
    w1, w2 = norm_n / sigma, norm_v / sigma
    W = np.array([[w1, -w2], [w2, w1]])
    return OrthonormalLine(U, W)


def orthonormal_to_plucker(O: OrthonormalLine) -> PluckerLine:
    """Inverse of :func:`plucker_to_orthonormal`, rescaled to ``||v|| = 1``."""
    w1 = O.W[0, 0]
    w2 = O.W[1, 0]
    if abs(w2) < 1e-12:
        raise DegenerateGeometryError("line at infinity (||v|| = 0)")
    return PluckerLine.normalized(w1 * O.U[:, 0], w2 * O.U[:, 1])


def _rot2(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def orthonormal_update(O: OrthonormalLine, delta: np.ndarray) -> OrthonormalLine:
    """Right-multiplicative 4-DOF update: U by Exp(delta[:3]), W by Rot2(delta[3])."""
    delta = np.asarray(delta, dtype=float).reshape(4)
    return OrthonormalLine(O.U @ so3_exp(delta[:3]), O.W @ _rot2(delta[3]))


def triangulate_point_dlt(
    p_l: np.ndarray,
    p_r: np.ndarray,
    M_l: ProjectionMatrix,
    M_r: ProjectionMatrix,
) -> np.ndarray:
    """Linear two-view point triangulation.

    Stacks rows ``x m3 - m1`` / ``y m3 - m2`` for both cameras, normalizes
    them, and takes the right null-space direction of the 4x4 system.
    """
    A = np.stack(
        [
            p_l[0] * M_l.row(2) - M_l.row(0),
            p_l[1] * M_l.row(2) - M_l.row(1),
            p_r[0] * M_r.row(2) - M_r.row(0),
            p_r[1] * M_r.row(2) - M_r.row(1),
        ]
    )
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    _, s, Vt = np.linalg.svd(A)
    if s[2] - s[3] < 1e-10:
        raise DegenerateGeometryError("ill-conditioned triangulation")
    X = Vt[3]
    if abs(X[3]) < 1e-15:
        raise DegenerateGeometryError("triangulated point at infinity")
    return X[:3] / X[3]


def perpendicular_foot(P: np.ndarray, L: PluckerLine) -> np.ndarray:
    """Point on L closest to P."""
    P = np.asarray(P, dtype=float)
    p0 = L.closest_point_to_origin()
    return p0 + ((P - p0) @ L.v) * L.v


def event_line_distance(
    e_xy: np.ndarray, K_e: np.ndarray, pose: PoseSE3, L: PluckerLine
) -> float:
    """Signed pixel distance from an event to the projected model line.

    Equals ``point_line_signed_distance(e, project_line(K_e,
    transform_line(pose, L)))`` with the event in homogeneous pixel form.
    """
    g = K_e @ (pose.R @ L.n + np.cross(pose.T, pose.R @ L.v))
    rho = np.hypot(g[0], g[1])
    if rho < 1e-15:
        raise DegenerateGeometryError("degenerate projection")
    return float((g[0] * e_xy[0] + g[1] * e_xy[1] + g[2]) / rho)


def event_line_residuals(
    events: np.ndarray,
    line_index: np.ndarray,
    K_e: np.ndarray,
    pose: PoseSE3,
    lines_n: np.ndarray,
    lines_v: np.ndarray,
) -> np.ndarray:
    """Vectorized event-line distances for one camera.

    ``events`` is (N, 2) pixel coordinates, ``line_index`` (N,) selects into
    the stacked line arrays (S, 3).
    """
    n_cam = lines_n @ pose.R.T + np.cross(np.broadcast_to(pose.T, lines_v.shape), lines_v @ pose.R.T)
    G = n_cam @ K_e.T  # (S, 3) unnormalized image-line coefficients
    rho = np.hypot(G[:, 0], G[:, 1])
    g = G[line_index]
    return (g[:, 0] * events[:, 0] + g[:, 1] * events[:, 1] + g[:, 2]) / rho[line_index]


def event_line_pose_jacobian(
    events: np.ndarray,
    line_index: np.ndarray,
    K_e: np.ndarray,
    cam_pose: PoseSE3,
    chain_R: np.ndarray,
    lines_n: np.ndarray,
    lines_v: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Residuals and analytic Jacobian w.r.t. the 6 left-pose parameters.

    The update is ``R_l <- R_l Exp(omega)``, ``T_l <- T_l + tau``; for the
    right camera the chained pose is ``R_c = chain_R @ R_l`` and
    ``T_c = chain_R @ (T_l - T_r2l)``, so a left translation step enters as
    ``chain_R @ tau`` while the rotation step passes through unchanged.

    Returns ``(residuals (N,), jacobian (N, 6))`` ordered (omega, tau).
    """
    R_c, T_c = cam_pose.R, cam_pose.T
    S = lines_n.shape[0]
    Rn = lines_n @ R_c.T
    Rv = lines_v @ R_c.T
    n_cam = Rn + np.cross(np.broadcast_to(T_c, Rv.shape), Rv)
    G = n_cam @ K_e.T
    rho = np.hypot(G[:, 0], G[:, 1])

    # d n_cam / d omega = -R [n]x - [T]x R [v]x, d n_cam / d tau = -[R v]x @ chain_R
    Tx = skew(T_c)
    dG = np.empty((S, 3, 6))
    for s in range(S):
        J_omega = -R_c @ skew(lines_n[s]) - Tx @ R_c @ skew(lines_v[s])
        J_tau = -skew(Rv[s]) @ chain_R
        dG[s, :, :3] = K_e @ J_omega
        dG[s, :, 3:] = K_e @ J_tau

    g = G[line_index]
    rho_i = rho[line_index]
    num = g[:, 0] * events[:, 0] + g[:, 1] * events[:, 1] + g[:, 2]
    res = num / rho_i

    # d/dg of (e.g)/rho(g): e/rho - (e.g) (gx, gy, 0) / rho^3
    w = np.empty((len(events), 3))
    w[:, 0] = events[:, 0] / rho_i - num * g[:, 0] / rho_i**3
    w[:, 1] = events[:, 1] / rho_i - num * g[:, 1] / rho_i**3
    w[:, 2] = 1.0 / rho_i
    J = np.einsum("ni,nij->nj", w, dG[line_index])
    return res, J
