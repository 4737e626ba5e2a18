"""Continuous 6-DOF pose tracking by robust event-to-line alignment.

Each incoming stereo cluster warm-starts from the previous pose: model
segments are projected and clipped, events are gated onto segments by the
nearest / midpoint / second-nearest distance tests, and the left-camera
pose is refined by Levenberg-Marquardt over Huber-weighted event-line
distances from both cameras (the right pose is chained through the rig
extrinsics every iteration).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .camera import PoseSE3, StereoRig, line_intrinsics, stereo_pose_chain
from .events import ClusterParams, EventCluster, EventStream, cluster_sequence, downsample
from .metrics import Trajectory
from .model import WireframeModel
from .model_init import (
    EndpointMatchParams,
    ExtractionParams,
    InitializationError,
    NoLinesDetectedError,
    StereoMatchingError,
    StereoMatchParams,
    initialize_model,
)
from .plucker import Line2D, Segment2D, event_line_pose_jacobian

log = logging.getLogger(__name__)

__all__ = [
    "MatchThresholds",
    "RobustLoss",
    "Association",
    "TrackerState",
    "TrackerParams",
    "TrackResult",
    "InsufficientAssociationsError",
    "visible_segments",
    "match_events",
    "optimize_pose",
    "track_step",
    "track_sequence",
]


class InsufficientAssociationsError(RuntimeError):
    pass


@dataclass(frozen=True)
class MatchThresholds:
    """Event-segment gating distances (pixels)."""

    tau_near_px: float = 3.0
    midpoint_slack_px: float = 5.0
    tau_ambig_px: float = 6.0

    def __post_init__(self) -> None:
        if self.tau_near_px <= 0:
            raise ValueError("tau_near must be positive")
        if self.tau_ambig_px <= self.tau_near_px:
            raise ValueError("tau_ambig must exceed tau_near")


@dataclass(frozen=True)
class RobustLoss:
    """Huber penalty on squared pixel residuals."""

    delta_px: float = 1.0

    def __post_init__(self) -> None:
        if self.delta_px <= 0:
            raise ValueError("delta must be positive")

    def rho(self, sq: np.ndarray) -> np.ndarray:
        d = self.delta_px
        sq = np.asarray(sq, dtype=float)
        return np.where(sq <= d * d, sq, 2.0 * d * np.sqrt(np.maximum(sq, 0.0)) - d * d)

    def weights(self, r: np.ndarray) -> np.ndarray:
        a = np.abs(r)
        return np.where(a <= self.delta_px, 1.0, self.delta_px / np.maximum(a, 1e-300))


@dataclass(frozen=True)
class Association:
    event_index: int
    segment_index: int
    residual_px: float


@dataclass(frozen=True)
class TrackerParams:
    thresholds: MatchThresholds = MatchThresholds()
    loss: RobustLoss = RobustLoss()
    downsample_stride: int = 4
    reassociation_rounds: int = 3
    lm_max_iters: int = 10
    min_associations: int = 10
    rho_min: float = 0.3
    r_max_px: float = 3.0


@dataclass(frozen=True)
class TrackerState:
    model: WireframeModel
    pose_l: PoseSE3
    rig: StereoRig
    last_cost: float = 0.0
    inlier_ratio: float = 1.0
    status: str = "tracking"
    n_associations: int = 0


def _clip_z(pa: np.ndarray, pb: np.ndarray, z_min: float = 1e-6) -> tuple[np.ndarray, np.ndarray] | None:
    """Clip a camera-frame segment against the z = z_min plane."""
    za, zb = pa[2], pb[2]
    if za < z_min and zb < z_min:
        return None
    if za >= z_min and zb >= z_min:
        return pa, pb
    s = (z_min - za) / (zb - za)
    cut = pa + s * (pb - pa)
    return (cut, pb) if za < z_min else (pa, cut)


def _clip_rect(pa: np.ndarray, pb: np.ndarray, w: float, h: float) -> tuple[np.ndarray, np.ndarray] | None:
    """Liang-Barsky clip of a 2D segment to [0, w-1] x [0, h-1]."""
    d = pb - pa
    t0, t1 = 0.0, 1.0
    for p, q in (
        (-d[0], pa[0]),
        (d[0], (w - 1) - pa[0]),
        (-d[1], pa[1]),
        (d[1], (h - 1) - pa[1]),
    ):
        if abs(p) < 1e-15:
            if q < 0:
                return None
            continue
        r = q / p
        if p < 0:
            if r > t1:
                return None
            t0 = max(t0, r)
        else:
            if r < t0:
                return None
            t1 = min(t1, r)
    if t0 > t1:
        return None
    return pa + t0 * d, pa + t1 * d


def visible_segments(
    model: WireframeModel, pose_l: PoseSE3, rig: StereoRig, camera: str = "left"
) -> list[tuple[int, Segment2D]]:
    """Project model segments into one camera, keeping the visible ones.

    Segments behind the camera are culled, the rest are clipped to the
    image. When the model carries faces, a segment adjacent to two or more
    faces is culled if every adjacent face points away from the camera;
    boundary segments (fewer than two adjacent faces) are treated as
    visible from both sides.
    """
    if camera == "left":
        pose, K = pose_l, rig.left
    elif camera == "right":
        pose, K = stereo_pose_chain(pose_l, rig), rig.right
    else:
        raise ValueError(f"camera must be 'left' or 'right', got {camera!r}")

    hidden = model.hidden_segments(pose.R, pose.T)

    out: list[tuple[int, Segment2D]] = []
    for idx, seg in enumerate(model.segments):
        if hidden[idx]:
            continue
        clipped = _clip_z(pose.apply(seg.pa), pose.apply(seg.pb))
        if clipped is None:
            continue
        ca, cb = clipped
        pa = np.array([K.fx * ca[0] / ca[2] + K.cx, K.fy * ca[1] / ca[2] + K.cy])
        pb = np.array([K.fx * cb[0] / cb[2] + K.cx, K.fy * cb[1] / cb[2] + K.cy])
        rect = _clip_rect(pa, pb, K.width, K.height)
        if rect is None:
            continue
        qa, qb = rect
        if np.linalg.norm(qb - qa) < 1e-6:
            continue
        line = Line2D.through_points(qa, qb)
        out.append((idx, Segment2D(line, line.foot(qa), line.foot(qb))))
    return out


def _match_arrays(
    events_xy: np.ndarray, segments: list[Segment2D], thr: MatchThresholds
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized gating; returns (event indices, segment indices, signed d1).

    Segments are ranked per event by distance to the finite segment; d1 is
    the signed distance to the nearest segment's infinite line, d2 the
    distance to its midpoint, d3 the distance to the second-nearest
    segment. Events failing any gate are discarded.
    """
    n, m = len(events_xy), len(segments)
    if n == 0 or m == 0:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int), np.zeros(0)
    pa = np.stack([s.pa for s in segments])
    dirs = np.stack([(s.pb - s.pa) / s.length for s in segments])
    lengths = np.array([s.length for s in segments])
    abc = np.stack([s.line.coeffs() for s in segments])
    mids = np.stack([s.midpoint for s in segments])

    rel = events_xy[:, None, :] - pa[None, :, :]  # (n, m, 2)
    u = np.clip(np.einsum("nmk,mk->nm", rel, dirs), 0.0, lengths[None, :])
    foot = pa[None, :, :] + u[..., None] * dirs[None, :, :]
    seg_dist = np.linalg.norm(events_xy[:, None, :] - foot, axis=2)

    order = np.argsort(seg_dist, axis=1)
    nearest = order[:, 0]
    rows = np.arange(n)
    d1 = events_xy[:, 0] * abc[nearest, 0] + events_xy[:, 1] * abc[nearest, 1] + abc[nearest, 2]
    d2 = np.linalg.norm(events_xy - mids[nearest], axis=1)
    d3 = seg_dist[rows, order[:, 1]] if m > 1 else np.full(n, np.inf)

    ok = (
        (np.abs(d1) <= thr.tau_near_px)
        & (d2 <= 0.5 * lengths[nearest] + thr.midpoint_slack_px)
        & (d3 >= thr.tau_ambig_px)
    )
    idx = np.flatnonzero(ok)
    return idx, nearest[idx], d1[idx]


def match_events(
    cluster: EventCluster, segments: list[Segment2D], thr: MatchThresholds
) -> list[Association]:
    """Gated event-to-segment associations (see :func:`_match_arrays`)."""
    ev_idx, seg_idx, d1 = _match_arrays(cluster.pixels(), segments, thr)
    return [Association(int(e), int(s), float(d)) for e, s, d in zip(ev_idx, seg_idx, d1)]


def _lm_refine(
    pose: PoseSE3,
    ev_l: np.ndarray,
    li_l: np.ndarray,
    ev_r: np.ndarray,
    li_r: np.ndarray,
    rig: StereoRig,
    lines_n: np.ndarray,
    lines_v: np.ndarray,
    loss: RobustLoss,
    max_iters: int,
) -> tuple[PoseSE3, float]:
    """Levenberg-Marquardt over the 6 left-pose parameters; only improving
    steps are accepted, so the returned pose is the best iterate."""
    K_e_l = line_intrinsics(rig.left)
    K_e_r = line_intrinsics(rig.right)
    chain_l = np.eye(3)
    chain_r = rig.R_r2l.T

    def residuals(p: PoseSE3) -> tuple[np.ndarray, np.ndarray]:
        r_l, J_l = event_line_pose_jacobian(ev_l, li_l, K_e_l, p, chain_l, lines_n, lines_v)
        p_r = stereo_pose_chain(p, rig)
        r_r, J_r = event_line_pose_jacobian(ev_r, li_r, K_e_r, p_r, chain_r, lines_n, lines_v)
        return np.concatenate([r_l, r_r]), np.vstack([J_l, J_r])

    r, J = residuals(pose)
    cost = float(loss.rho(r * r).sum())
    lam = 1e-3
    for _ in range(max_iters):
        w = loss.weights(r)
        JtW = J.T * w
        H = JtW @ J
        g = JtW @ r
        if np.linalg.norm(g) < 1e-12:
            break
        accepted = False
        for _ in range(8):
            try:
                step = np.linalg.solve(H + lam * np.diag(np.diag(H)) + 1e-15 * np.eye(6), -g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            cand = pose.perturbed(step[:3], step[3:])
            r_new, J_new = residuals(cand)
            cost_new = float(loss.rho(r_new * r_new).sum())
            if cost_new < cost:
                pose, r, J, cost = cand, r_new, J_new, cost_new
                lam = max(lam / 3, 1e-12)
                accepted = True
                break
            lam *= 10
        if not accepted:
            break
        if np.linalg.norm(step) < 1e-10:
            break
    return pose, cost


def optimize_pose(
    pose_init: PoseSE3,
    cluster_l: EventCluster,
    cluster_r: EventCluster,
    model: WireframeModel,
    rig: StereoRig,
    loss: RobustLoss = RobustLoss(),
    thr: MatchThresholds = MatchThresholds(),
    rounds: int = 3,
    lm_max_iters: int = 10,
    min_associations: int = 10,
) -> tuple[PoseSE3, float, float, float, int]:
    """Alternate event-line association and robust pose refinement.

    Returns (pose, robust cost, inlier ratio, mean |residual|, associations).
    Residuals are measured against the infinite model lines; the finite
    extent enters only through the association gates.
    """
    lines_n = np.stack([s.line.n for s in model.segments])
    lines_v = np.stack([s.line.v for s in model.segments])
    pose = pose_init
    cost = np.inf
    stats: tuple[float, float, int] | None = None

    for _ in range(rounds):
        vis_l = visible_segments(model, pose, rig, "left")
        vis_r = visible_segments(model, pose, rig, "right")
        ev_l_idx, seg_l_idx, d1_l = _match_arrays(cluster_l.pixels(), [s for _, s in vis_l], thr)
        ev_r_idx, seg_r_idx, d1_r = _match_arrays(cluster_r.pixels(), [s for _, s in vis_r], thr)
        map_l = np.array([i for i, _ in vis_l], dtype=int)
        map_r = np.array([i for i, _ in vis_r], dtype=int)
        n_assoc = len(ev_l_idx) + len(ev_r_idx)
        if n_assoc < min_associations:
            raise InsufficientAssociationsError(
                f"insufficient associations: {n_assoc} < {min_associations}"
            )
        total = len(cluster_l) + len(cluster_r)
        resid = np.concatenate([d1_l, d1_r])
        stats = (n_assoc / total, float(np.mean(np.abs(resid))), n_assoc)
        pose, cost = _lm_refine(
            pose,
            cluster_l.pixels()[ev_l_idx],
            map_l[seg_l_idx],
            cluster_r.pixels()[ev_r_idx],
            map_r[seg_r_idx],
            rig,
            lines_n,
            lines_v,
            loss,
            lm_max_iters,
        )
    assert stats is not None
    inlier_ratio, mean_abs_residual, n_assoc = stats
    return pose, cost, inlier_ratio, mean_abs_residual, n_assoc


def track_step(
    state: TrackerState, cluster_l: EventCluster, cluster_r: EventCluster, params: TrackerParams
) -> TrackerState:
    """One tracking update, warm-started from the previous pose.

    Optimizer failures and gate checks (inlier ratio below ``rho_min`` or
    mean residual above ``r_max_px``) flip the status to ``lost`` without
    raising.
    """
    dl = downsample(cluster_l, params.downsample_stride)
    dr = downsample(cluster_r, params.downsample_stride)
    try:
        pose, cost, ratio, mean_res, n_assoc = optimize_pose(
            state.pose_l,
            dl,
            dr,
            state.model,
            state.rig,
            params.loss,
            params.thresholds,
            params.reassociation_rounds,
            params.lm_max_iters,
            params.min_associations,
        )
    except InsufficientAssociationsError:
        return replace(state, status="lost", inlier_ratio=0.0, n_associations=0)
    status = "tracking"
    if ratio < params.rho_min or mean_res > params.r_max_px:
        status = "lost"
    return TrackerState(
        model=state.model,
        pose_l=pose,
        rig=state.rig,
        last_cost=cost,
        inlier_ratio=ratio,
        status=status,
        n_associations=n_assoc,
    )


@dataclass(frozen=True)
class TrackResult:
    trajectory: Trajectory
    diagnostics: list[dict] = field(default_factory=list)
    n_lost: int = 0
    n_reinit: int = 0


def _regauge_model(model: WireframeModel, pose: PoseSE3) -> WireframeModel:
    """Express a model reconstructed in the current camera frame in the
    original model frame, given the pose mapping that frame to the camera."""
    inv = pose.inverse()
    from .plucker import Segment3D

    return WireframeModel(
        tuple(Segment3D.from_endpoints(inv.apply(s.pa), inv.apply(s.pb)) for s in model.segments),
        model.faces,
    )


def track_sequence(
    stream_l: EventStream,
    stream_r: EventStream,
    rig: StereoRig,
    cluster_params: ClusterParams = ClusterParams(),
    tracker_params: TrackerParams = TrackerParams(),
    extraction: ExtractionParams = ExtractionParams(),
    endpoint: EndpointMatchParams = EndpointMatchParams(),
    stereo: StereoMatchParams = StereoMatchParams(),
    seed: int = 0,
    model: WireframeModel | None = None,
) -> TrackResult:
    """Cluster both streams, initialize the model on the first clusters and
    track the rest; on lost status the model is re-initialized from the
    current clusters (failures leave gaps in the trajectory).

    Re-initialization preserves the model gauge: the fresh reconstruction
    is mapped back into the original model frame through the last reliable
    pose, so the emitted trajectory stays in one frame (up to the pose
    drift accumulated at the moment tracking was lost).

    A pre-built ``model`` skips initialization (the first cluster is then
    tracked like any other).
    """
    t0 = max(stream_l.t_first, stream_r.t_first)
    t_end = min(stream_l.t_last, stream_r.t_last)
    if t0 > t_end:
        raise ValueError("streams do not overlap in time")
    clusters_l = cluster_sequence(stream_l, cluster_params, t0, camera="left")
    clusters_r = cluster_sequence(stream_r, cluster_params, t0, camera="right")
    n = min(len(clusters_l), len(clusters_r))

    times: list[float] = []
    poses: list[PoseSE3] = []
    diagnostics: list[dict] = []
    n_lost = 0
    n_reinit = 0

    def _init(cl: EventCluster, cr: EventCluster) -> WireframeModel:
        return initialize_model(cl, cr, rig, extraction, endpoint, stereo, seed=seed)

    start = 0
    if model is None:
        model = _init(clusters_l[0], clusters_r[0])  # raises InitializationError on failure
        times.append(clusters_l[0].center_time * 1e-6)
        poses.append(PoseSE3.identity())
        diagnostics.append(
            {
                "t_s": clusters_l[0].center_time * 1e-6,
                "cost": 0.0,
                "inlier_ratio": 1.0,
                "status": "init",
                "n_assoc": 0,
            }
        )
        start = 1
    state = TrackerState(model=model, pose_l=PoseSE3.identity(), rig=rig)
    last_good_pose = state.pose_l

    for k in range(start, n):
        cl, cr = clusters_l[k], clusters_r[k]
        t_s = cl.center_time * 1e-6
        if state.status == "lost":
            try:
                new_model = _init(cl, cr)
            except (InitializationError, NoLinesDetectedError, StereoMatchingError) as exc:
                log.debug("re-initialization failed at t=%.3f s: %s", t_s, exc)
                n_lost += 1
                diagnostics.append(
                    {"t_s": t_s, "cost": 0.0, "inlier_ratio": 0.0, "status": "lost", "n_assoc": 0}
                )
                continue
            n_reinit += 1
            state = TrackerState(
                model=_regauge_model(new_model, last_good_pose),
                pose_l=last_good_pose,
                rig=rig,
            )
            diagnostics.append(
                {"t_s": t_s, "cost": 0.0, "inlier_ratio": 1.0, "status": "reinit", "n_assoc": 0}
            )
            continue
        state = track_step(state, cl, cr, tracker_params)
        diagnostics.append(
            {
                "t_s": t_s,
                "cost": state.last_cost,
                "inlier_ratio": state.inlier_ratio,
                "status": state.status,
                "n_assoc": state.n_associations,
            }
        )
        if state.status == "tracking":
            times.append(t_s)
            poses.append(state.pose_l)
            last_good_pose = state.pose_l
        else:
            n_lost += 1

    return TrackResult(
        trajectory=Trajectory.from_poses(np.array(times), poses),
        diagnostics=diagnostics,
        n_lost=n_lost,
        n_reinit=n_reinit,
    )
