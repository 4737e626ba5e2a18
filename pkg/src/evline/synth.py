"""Ground-truth scene synthesis: parametric wireframe objects, smooth 6-DOF
trajectories and stereo event streams sampled geometrically from moving
projected edges.

Stereo events are generated in correlated pairs: each sampled edge point
triggers one event per camera at the same instant (visibility permitting),
which is what makes the spatio-temporal pairing of the reconstruction
stage meaningful. The mean event rate is calibrated on the left camera.
Every event records the index of its generating segment (or -1 for
background noise) in a label sidecar used only by tests, never by the
tracking pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import CameraIntrinsics, PoseSE3, StereoRig
from .events import EventStream
from .metrics import Trajectory
from .model import WireframeModel
from .plucker import Segment3D, plucker_from_points

__all__ = [
    "TrajectorySpec",
    "NoiseSpec",
    "EventRateSpec",
    "RenderedScene",
    "make_primitive",
    "pose_at",
    "poses_at",
    "render_events",
]

NOISE_LABEL = -1


def _cuboid(sx: float, sy: float, sz: float) -> tuple[list[Segment3D], list[list[int]]]:
    h = np.array([sx, sy, sz]) / 2.0
    corners = np.array(
        [[x, y, z] for x in (-h[0], h[0]) for y in (-h[1], h[1]) for z in (-h[2], h[2])]
    )
    edges = []
    for i in range(8):
        for j in range(i + 1, 8):
            if np.sum(np.abs(corners[i] - corners[j]) > 1e-12) == 1:
                edges.append((i, j))
    segments = [Segment3D.from_endpoints(corners[i], corners[j]) for i, j in edges]
    faces = []
    for axis in range(3):
        for sign in (-1.0, 1.0):
            face = [
                k
                for k, (i, j) in enumerate(edges)
                if abs(corners[i][axis] - sign * h[axis]) < 1e-12
                and abs(corners[j][axis] - sign * h[axis]) < 1e-12
            ]
            faces.append(face)
    return segments, faces


def _rectangle(corners: np.ndarray) -> list[Segment3D]:
    return [Segment3D.from_endpoints(corners[k], corners[(k + 1) % 4]) for k in range(4)]


def make_primitive(kind: str, dims: tuple[float, ...]) -> WireframeModel:
    """Parametric wireframe objects.

    ``cuboid`` with dims (sx, sy, sz): 12 edges, 6 faces, centered at the
    origin. ``panel_satellite`` with dims (body, panel_w, panel_h): a cubic
    body plus two coplanar panels extending along +-x in the z = 0 plane
    (20 segments total).
    """
    if any(d <= 0 for d in dims):
        raise ValueError("dimensions must be positive")
    if kind == "cuboid":
        sx, sy, sz = dims
        segments, faces = _cuboid(sx, sy, sz)
        return WireframeModel(tuple(segments), tuple(tuple(f) for f in faces))
    if kind == "panel_satellite":
        body, pw, ph = dims
        segments, faces = _cuboid(body, body, body)
        for side in (1.0, -1.0):
            x0, x1 = side * body / 2.0, side * (body / 2.0 + pw)
            corners = np.array(
                [[x0, -ph / 2, 0.0], [x1, -ph / 2, 0.0], [x1, ph / 2, 0.0], [x0, ph / 2, 0.0]]
            )
            start = len(segments)
            segments.extend(_rectangle(corners))
            faces.append(list(range(start, start + 4)))
        return WireframeModel(tuple(segments), tuple(tuple(f) for f in faces))
    raise ValueError(f"unknown primitive kind {kind!r}")


@dataclass(frozen=True)
class TrajectorySpec:
    """Smooth object motion in the left-camera frame.

    ``constant_screw`` rotates at ``angular_velocity_deg_s`` about a fixed
    ``axis`` while translating at ``linear_velocity``. ``tumble``
    additionally precesses: the spin rotation is composed with a rotation
    about ``precession_axis`` (orthogonalized against ``axis``), giving a
    constant total angular speed ``hypot(spin, precession)``.
    """

    kind: str = "constant_screw"
    angular_velocity_deg_s: float = 20.0
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    linear_velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    initial_translation: tuple[float, float, float] = (0.0, 0.0, 1.5)
    initial_rotvec: tuple[float, float, float] = (0.0, 0.0, 0.0)
    duration_s: float = 10.0
    precession_rate_deg_s: float = 0.0
    precession_axis: tuple[float, float, float] = (1.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if self.kind not in ("constant_screw", "tumble"):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if self.duration_s <= 0:
            raise ValueError("duration must be positive")
        a = np.asarray(self.axis, dtype=float)
        if np.linalg.norm(a) < 1e-12:
            raise ValueError("axis must be nonzero")
        object.__setattr__(self, "axis", tuple(a / np.linalg.norm(a)))
        if self.kind == "tumble":
            p = np.asarray(self.precession_axis, dtype=float)
            p = p - (p @ a) * a / (np.linalg.norm(a) ** 2)
            if np.linalg.norm(p) < 1e-12:
                raise ValueError("precession axis parallel to spin axis")
            object.__setattr__(self, "precession_axis", tuple(p / np.linalg.norm(p)))

    @property
    def angular_speed_deg_s(self) -> float:
        """Total instantaneous angular speed (constant along the trajectory)."""
        if self.kind == "tumble":
            return float(np.hypot(self.angular_velocity_deg_s, self.precession_rate_deg_s))
        return abs(self.angular_velocity_deg_s)


def _rodrigues_batch(axis: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Rotations about a fixed unit axis for a batch of angles, (N, 3, 3)."""
    K = np.array(
        [[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]]
    )
    K2 = K @ K
    s = np.sin(angles)[:, None, None]
    c = (1.0 - np.cos(angles))[:, None, None]
    return np.eye(3)[None] + s * K[None] + c * K2[None]


def poses_at(spec: TrajectorySpec, t_s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batch pose evaluation: rotations (N, 3, 3) and translations (N, 3)."""
    t_s = np.asarray(t_s, dtype=float)
    w = np.radians(spec.angular_velocity_deg_s)
    R = _rodrigues_batch(np.asarray(spec.axis), w * t_s)
    if spec.kind == "tumble":
        p = np.radians(spec.precession_rate_deg_s)
        R = _rodrigues_batch(np.asarray(spec.precession_axis), p * t_s) @ R
    rv = np.asarray(spec.initial_rotvec, dtype=float)
    if np.linalg.norm(rv) > 0:
        R = R @ _rodrigues_batch(rv / np.linalg.norm(rv), np.array([np.linalg.norm(rv)]))[0]
    T = np.asarray(spec.initial_translation)[None] + np.outer(t_s, np.asarray(spec.linear_velocity))
    return R, T


def pose_at(spec: TrajectorySpec, t_s: float) -> PoseSE3:
    """Object-in-left-camera pose at time t (seconds)."""
    if not (0.0 <= t_s <= spec.duration_s + 1e-12):
        raise ValueError(f"t = {t_s} outside trajectory duration")
    R, T = poses_at(spec, np.array([t_s]))
    return PoseSE3(R[0], T[0])


@dataclass(frozen=True)
class NoiseSpec:
    pixel_jitter_sigma_px: float = 0.0
    timestamp_jitter_sigma_us: float = 0.0
    background_rate_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if min(
            self.pixel_jitter_sigma_px,
            self.timestamp_jitter_sigma_us,
            self.background_rate_fraction,
        ) < 0:
            raise ValueError("noise parameters must be non-negative")


@dataclass(frozen=True)
class EventRateSpec:
    mean_event_rate: float = 3.43e5

    def __post_init__(self) -> None:
        if self.mean_event_rate <= 0:
            raise ValueError("event rate must be positive")


@dataclass(frozen=True)
class RenderedScene:
    stream_left: EventStream
    stream_right: EventStream
    ground_truth: Trajectory
    labels_left: np.ndarray
    labels_right: np.ndarray


def _param_interval(pa_cam: np.ndarray, pb_cam: np.ndarray, K: CameraIntrinsics) -> tuple[float, float] | None:
    """Sub-range of u in [0, 1] where pa + u (pb - pa) is in front of the
    camera and inside the image. All constraints are linear in u once
    restricted to positive depth."""
    lo, hi = 0.0, 1.0
    d = pb_cam - pa_cam

    def restrict(a: float, b: float) -> bool:
        # a + b u >= 0
        nonlocal lo, hi
        if abs(b) < 1e-15:
            return a >= 0
        u = -a / b
        if b > 0:
            lo = max(lo, u)
        else:
            hi = min(hi, u)
        return lo <= hi

    zmin = 1e-6
    checks = [
        (pa_cam[2] - zmin, d[2]),
        (K.fx * pa_cam[0] + K.cx * pa_cam[2], K.fx * d[0] + K.cx * d[2]),
        (
            -(K.fx * pa_cam[0] + (K.cx - (K.width - 1)) * pa_cam[2]),
            -(K.fx * d[0] + (K.cx - (K.width - 1)) * d[2]),
        ),
        (K.fy * pa_cam[1] + K.cy * pa_cam[2], K.fy * d[1] + K.cy * d[2]),
        (
            -(K.fy * pa_cam[1] + (K.cy - (K.height - 1)) * pa_cam[2]),
            -(K.fy * d[1] + (K.cy - (K.height - 1)) * d[2]),
        ),
    ]
    for a, b in checks:
        if not restrict(a, b):
            return None
    if hi - lo < 1e-9:
        return None
    return lo, hi


def _project(K: CameraIntrinsics, pts_cam: np.ndarray) -> np.ndarray:
    z = pts_cam[..., 2]
    return np.stack(
        [K.fx * pts_cam[..., 0] / z + K.cx, K.fy * pts_cam[..., 1] / z + K.cy], axis=-1
    )


def render_events(
    model: WireframeModel,
    spec: TrajectorySpec,
    rig: StereoRig,
    rate: EventRateSpec,
    noise: NoiseSpec = NoiseSpec(),
    micro_step_us: int = 1000,
    quantize_pixels: bool = True,
) -> RenderedScene:
    """Synthesize stereo event streams for a moving wireframe.

    Time is discretized into micro-steps; per step, left-visible arc
    ranges are computed at the step pose, edge points are drawn uniformly
    along the projected arc length, and each point is projected into both
    cameras at the exact pose of its own (integer-microsecond) timestamp.
    Pixel jitter is applied before optional integer quantization; events
    leaving the sensor are dropped. Background noise events are appended
    per camera at ``background_rate_fraction`` of the line-event count.

    The returned ground truth is re-anchored so its first pose is the
    identity, matching the tracker's model gauge (left camera at t0).
    """
    rng = np.random.default_rng(noise.seed)
    duration_us = int(round(spec.duration_s * 1e6))
    n_steps = max(1, duration_us // micro_step_us)
    pa_all = np.stack([s.pa for s in model.segments])
    pb_all = np.stack([s.pb for s in model.segments])

    cols: dict[str, list[np.ndarray]] = {k: [] for k in ("l", "r")}
    out: dict[str, dict[str, list[np.ndarray]]] = {
        c: {"t": [], "x": [], "y": [], "p": [], "lab": []} for c in ("l", "r")
    }
    acc_line = 0.0
    acc_bg = {"l": 0.0, "r": 0.0}
    prev_mid: dict[int, np.ndarray] = {}

    for k in range(n_steps):
        t_start = k * micro_step_us
        step_pose = pose_at(spec, (t_start + 0.5 * micro_step_us) * 1e-6)
        pose_r_step = PoseSE3(
            rig.R_r2l.T @ step_pose.R, rig.R_r2l.T @ (step_pose.T - rig.T_r2l)
        )
        hidden_l = model.hidden_segments(step_pose.R, step_pose.T)
        hidden_r = model.hidden_segments(pose_r_step.R, pose_r_step.T)

        seg_ids, u_los, u_his, lens, depth_a, depth_b = [], [], [], [], [], []
        polarity_sign = {}
        for s in range(len(model.segments)):
            if hidden_l[s]:
                prev_mid.pop(s, None)
                continue
            a_cam = step_pose.apply(pa_all[s])
            b_cam = step_pose.apply(pb_all[s])
            interval = _param_interval(a_cam, b_cam, rig.left)
            if interval is None:
                prev_mid.pop(s, None)
                continue
            lo, hi = interval
            A = a_cam + lo * (b_cam - a_cam)
            B = a_cam + hi * (b_cam - a_cam)
            pa_img, pb_img = _project(rig.left, np.stack([A, B]))
            seg_ids.append(s)
            u_los.append(lo)
            u_his.append(hi)
            lens.append(float(np.linalg.norm(pb_img - pa_img)))
            depth_a.append(A[2])
            depth_b.append(B[2])
            # Polarity from the image-normal motion of the segment midpoint.
            mid = 0.5 * (pa_img + pb_img)
            normal = pb_img - pa_img
            normal = np.array([-normal[1], normal[0]]) / max(np.linalg.norm(normal), 1e-12)
            if s in prev_mid:
                shift = float((mid - prev_mid[s]) @ normal)
                polarity_sign[s] = 1 if shift > 1e-9 else (-1 if shift < -1e-9 else 0)
            else:
                polarity_sign[s] = 0
            prev_mid[s] = mid

        if not seg_ids:
            continue
        lens_arr = np.asarray(lens)
        total_len = lens_arr.sum()
        if total_len <= 0:
            continue

        acc_line += rate.mean_event_rate * micro_step_us * 1e-6
        n_k = int(acc_line)
        acc_line -= n_k
        if n_k == 0:
            continue

        choice = rng.choice(len(seg_ids), size=n_k, p=lens_arr / total_len)
        alpha = rng.random(n_k)
        t_int = t_start + rng.integers(0, micro_step_us, size=n_k)

        zA = np.asarray(depth_a)[choice]
        zB = np.asarray(depth_b)[choice]
        s_persp = alpha * zA / (zB + alpha * (zA - zB))
        u = np.asarray(u_los)[choice] + s_persp * (np.asarray(u_his) - np.asarray(u_los))[choice]
        seg_of_event = np.asarray(seg_ids)[choice]
        X = pa_all[seg_of_event] + u[:, None] * (pb_all[seg_of_event] - pa_all[seg_of_event])

        R_e, T_e = poses_at(spec, t_int * 1e-6)
        X_l = np.einsum("nij,nj->ni", R_e, X) + T_e
        Qt = rig.R_r2l.T
        X_r = (X_l - rig.T_r2l) @ Qt.T

        pol = np.array([polarity_sign[s] for s in seg_ids])[choice]
        random_pol = rng.integers(0, 2, size=n_k) * 2 - 1
        pol = np.where(pol == 0, random_pol, pol).astype(np.int8)

        for cam, X_c, K, hidden in (
            ("l", X_l, rig.left, hidden_l),
            ("r", X_r, rig.right, hidden_r),
        ):
            z_ok = X_c[:, 2] > 1e-6
            pix = np.full((n_k, 2), -1.0)
            pix[z_ok] = _project(K, X_c[z_ok])
            if noise.pixel_jitter_sigma_px > 0:
                pix = pix + rng.normal(0.0, noise.pixel_jitter_sigma_px, size=pix.shape)
            if quantize_pixels:
                pix = np.round(pix)
            t_cam = t_int.astype(np.int64)
            if noise.timestamp_jitter_sigma_us > 0:
                t_cam = t_cam + np.round(
                    rng.normal(0.0, noise.timestamp_jitter_sigma_us, size=n_k)
                ).astype(np.int64)
            valid = (
                z_ok
                & ~hidden[seg_of_event]
                & (pix[:, 0] >= 0)
                & (pix[:, 0] <= K.width - 1)
                & (pix[:, 1] >= 0)
                & (pix[:, 1] <= K.height - 1)
                & (t_cam >= 0)
            )
            out[cam]["t"].append(t_cam[valid])
            out[cam]["x"].append(pix[valid, 0])
            out[cam]["y"].append(pix[valid, 1])
            out[cam]["p"].append(pol[valid])
            out[cam]["lab"].append(seg_of_event[valid])

            # Background noise, proportional to the line events just kept.
            acc_bg[cam] += noise.background_rate_fraction * int(valid.sum())
            n_bg = int(acc_bg[cam])
            acc_bg[cam] -= n_bg
            if n_bg:
                bx = rng.uniform(0, K.width - 1, size=n_bg)
                by = rng.uniform(0, K.height - 1, size=n_bg)
                if quantize_pixels:
                    bx, by = np.round(bx), np.round(by)
                bt = t_start + rng.integers(0, micro_step_us, size=n_bg)
                out[cam]["t"].append(bt.astype(np.int64))
                out[cam]["x"].append(bx)
                out[cam]["y"].append(by)
                out[cam]["p"].append((rng.integers(0, 2, size=n_bg) * 2 - 1).astype(np.int8))
                out[cam]["lab"].append(np.full(n_bg, NOISE_LABEL))

    streams: dict[str, EventStream] = {}
    labels: dict[str, np.ndarray] = {}
    for cam, K in (("l", rig.left), ("r", rig.right)):
        if not out[cam]["t"] or sum(len(a) for a in out[cam]["t"]) == 0:
            raise ValueError("object never visible: no events generated")
        t = np.concatenate(out[cam]["t"])
        x = np.concatenate(out[cam]["x"])
        y = np.concatenate(out[cam]["y"])
        p = np.concatenate(out[cam]["p"])
        lab = np.concatenate(out[cam]["lab"]).astype(np.int64)
        order = np.lexsort((lab, p, x, y, t))
        streams[cam] = EventStream(t[order], x[order], y[order], p[order], K.width, K.height)
        labels[cam] = lab[order]

    gt_t = np.arange(0, n_steps + 1) * (micro_step_us * 1e-6)
    gt_t[-1] = min(gt_t[-1], spec.duration_s)
    R_gt, T_gt = poses_at(spec, gt_t)
    anchor = PoseSE3(R_gt[0], T_gt[0]).inverse()
    gt_poses = [PoseSE3(R_gt[i], T_gt[i]).compose(anchor) for i in range(len(gt_t))]
    gt = Trajectory.from_poses(gt_t, gt_poses)

    return RenderedScene(streams["l"], streams["r"], gt, labels["l"], labels["r"])
