"""Trajectory container and error metrics (relative pose error, absolute
trajectory error).

Window-relative motions are composed in the camera frame,
``Q = P(t + d) o P(t)^-1``, which makes both metrics exactly invariant to a
common re-anchoring of the model frame (a constant right-multiplication of
every pose).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .camera import PoseSE3

__all__ = ["Trajectory", "ErrorReport", "align_time", "rpe", "ate", "evaluate"]


@dataclass(frozen=True)
class Trajectory:
    """Timestamped poses with strictly increasing times (seconds)."""

    t: np.ndarray
    R: np.ndarray
    T: np.ndarray

    def __post_init__(self) -> None:
        t = np.ascontiguousarray(self.t, dtype=np.float64)
        R = np.ascontiguousarray(self.R, dtype=np.float64).reshape(len(t), 3, 3)
        T = np.ascontiguousarray(self.T, dtype=np.float64).reshape(len(t), 3)
        if len(t) and np.any(np.diff(t) <= 0):
            raise ValueError("trajectory timestamps must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "T", T)

    def __len__(self) -> int:
        return len(self.t)

    def pose(self, i: int) -> PoseSE3:
        return PoseSE3(self.R[i], self.T[i])

    @classmethod
    def from_poses(cls, times: np.ndarray, poses: list[PoseSE3]) -> "Trajectory":
        return cls(
            np.asarray(times, dtype=float),
            np.stack([p.R for p in poses]) if poses else np.zeros((0, 3, 3)),
            np.stack([p.T for p in poses]) if poses else np.zeros((0, 3)),
        )

    def anchored_at_start(self) -> "Trajectory":
        """Re-gauge so the first pose is the identity (right-multiplied by
        the inverse of the first pose)."""
        g = self.pose(0).inverse()
        poses = [self.pose(i).compose(g) for i in range(len(self))]
        return Trajectory.from_poses(self.t, poses)


@dataclass(frozen=True)
class ErrorReport:
    r_rel_deg_s: float
    t_rel_cm_s: float
    t_abs_cm: float
    window_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    window_r_deg_s: np.ndarray = field(default_factory=lambda: np.zeros(0))
    window_t_cm_s: np.ndarray = field(default_factory=lambda: np.zeros(0))


def align_time(est: Trajectory, gt: Trajectory) -> tuple[np.ndarray, list[PoseSE3], list[PoseSE3]]:
    """Pair every estimate sample with the ground truth interpolated at its
    timestamp (rotation slerp, translation lerp). Samples outside the
    ground-truth span are dropped. Returns (times, est poses, gt poses)."""
    if len(est) == 0 or len(gt) == 0:
        raise ValueError("empty trajectory")
    mask = (est.t >= gt.t[0]) & (est.t <= gt.t[-1])
    if not mask.any():
        raise ValueError("trajectories do not overlap in time")
    times = est.t[mask]
    slerp = Slerp(gt.t, Rotation.from_matrix(gt.R))
    R_i = slerp(times).as_matrix()
    T_i = np.column_stack([np.interp(times, gt.t, gt.T[:, k]) for k in range(3)])
    est_poses = [est.pose(i) for i in np.flatnonzero(mask)]
    gt_poses = [PoseSE3(R_i[k], T_i[k]) for k in range(len(times))]
    return times, est_poses, gt_poses


def rpe(
    times: np.ndarray,
    est: list[PoseSE3],
    gt: list[PoseSE3],
    delta_s: float = 1.0,
) -> tuple[float, float, np.ndarray, np.ndarray, np.ndarray]:
    """Root-mean-square relative pose error over sliding windows.

    For each sample, the partner closest to ``delta_s`` later is used; the
    error transform is normalized by the actual window length, yielding
    deg/s and cm/s.
    """
    times = np.asarray(times, dtype=float)
    if len(times) < 2 or times[-1] - times[0] < delta_s:
        raise ValueError("trajectory span shorter than the RPE window")
    r_errs, t_errs, w_times = [], [], []
    for i in range(len(times)):
        target = times[i] + delta_s
        if target > times[-1] + 1e-12:
            break
        j = int(np.argmin(np.abs(times - target)))
        if j <= i:
            continue
        dt = times[j] - times[i]
        q_est = est[j].compose(est[i].inverse())
        q_gt = gt[j].compose(gt[i].inverse())
        err = q_gt.inverse().compose(q_est)
        ang = np.degrees(np.linalg.norm(Rotation.from_matrix(err.R).as_rotvec()))
        r_errs.append(ang / dt)
        t_errs.append(100.0 * np.linalg.norm(err.T) / dt)
        w_times.append(times[i])
    r = np.asarray(r_errs)
    t = np.asarray(t_errs)
    return (
        float(np.sqrt(np.mean(r**2))),
        float(np.sqrt(np.mean(t**2))),
        np.asarray(w_times),
        r,
        t,
    )


def ate(est: list[PoseSE3], gt: list[PoseSE3]) -> float:
    """Root-mean-square translation difference in cm, no alignment applied."""
    if not est:
        raise ValueError("no pose pairs")
    d = np.stack([e.T - g.T for e, g in zip(est, gt)])
    return float(100.0 * np.sqrt(np.mean(np.sum(d * d, axis=1))))


def evaluate(
    est: Trajectory, gt: Trajectory, delta_s: float = 1.0, anchor_first: bool = False
) -> ErrorReport:
    """Combined RPE/ATE report. ``anchor_first`` re-gauges both trajectories
    at their first paired sample before comparison (for externally supplied
    data whose model frames differ)."""
    times, est_p, gt_p = align_time(est, gt)
    if anchor_first:
        g_e = est_p[0].inverse()
        g_g = gt_p[0].inverse()
        est_p = [p.compose(g_e) for p in est_p]
        gt_p = [p.compose(g_g) for p in gt_p]
    r_rel, t_rel, w_times, w_r, w_t = rpe(times, est_p, gt_p, delta_s)
    t_abs = ate(est_p, gt_p)
    return ErrorReport(r_rel, t_rel, t_abs, w_times, w_r, w_t)
