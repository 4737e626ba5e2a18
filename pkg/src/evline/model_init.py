"""One-time wireframe reconstruction from the first stereo event clusters.

Pipeline: extract 2D segments from each camera's cluster (robust sequential
line fitting on the space-time point cloud), match segments across the
stereo pair, triangulate each pair into a 3D line, refine the lines with
poses held fixed, and finally pin down segment endpoints from
spatio-temporally consistent event pairs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .camera import (
    PoseSE3,
    ProjectionMatrix,
    StereoRig,
    epipolar_line,
    fundamental_matrix,
    line_intrinsics,
    stereo_pose_chain,
)
from .events import EventCluster, to_spacetime_points
from .model import WireframeModel
from .plucker import (
    DegenerateGeometryError,
    Line2D,
    OrthonormalLine,
    PluckerLine,
    Segment2D,
    Segment3D,
    backproject_plane,
    orthonormal_to_plucker,
    orthonormal_update,
    perpendicular_foot,
    plucker_to_orthonormal,
    point_line_signed_distance,
    project_line,
    transform_line,
    triangulate_line,
    triangulate_point_dlt,
)

log = logging.getLogger(__name__)

__all__ = [
    "ExtractionParams",
    "EndpointMatchParams",
    "StereoMatchParams",
    "NoLinesDetectedError",
    "StereoMatchingError",
    "EndpointDeterminationError",
    "InitializationError",
    "extract_lines",
    "match_stereo_lines",
    "triangulate_model",
    "refine_lines",
    "determine_endpoints",
    "initialize_model",
]


class NoLinesDetectedError(RuntimeError):
    pass


class StereoMatchingError(RuntimeError):
    pass


class EndpointDeterminationError(RuntimeError):
    pass


class InitializationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExtractionParams:
    c_z_us: float = 1000.0
    inlier_threshold_px: float = 1.5
    min_events_per_line: int = 40
    max_lines: int = 16
    split_gap_px: float = 8.0
    ransac_confidence: float = 0.99
    ransac_max_iters: int = 500
    refit_rounds: int = 2
    refit_shrink: float = 0.5

    def __post_init__(self) -> None:
        if min(self.c_z_us, self.inlier_threshold_px, self.split_gap_px) <= 0:
            raise ValueError("extraction parameters must be positive")
        if self.min_events_per_line < 2 or self.max_lines < 1:
            raise ValueError("extraction parameters must be positive")
        if not (0 < self.refit_shrink <= 1):
            raise ValueError("refit_shrink must be in (0, 1]")


@dataclass(frozen=True)
class EndpointMatchParams:
    eps_e_px: float = 2.0
    eps_t_us: float = 2000.0
    sample_count: int = 20
    c_max: float = 1.0
    max_line_distance_m: float = 0.05

    def __post_init__(self) -> None:
        if self.eps_e_px <= 0 or self.eps_t_us <= 0:
            raise ValueError("normalizing scalars must be positive")
        if self.sample_count < 2:
            raise ValueError("need at least two samples per line")
        if self.max_line_distance_m <= 0:
            raise ValueError("line distance tolerance must be positive")


@dataclass(frozen=True)
class StereoMatchParams:
    """Score scales: one unit of score per `scale` of each cue.

    The midpoint cue is measured perpendicular to the epipolar direction so
    that stereo disparity does not penalize correct pairs; the epipolar cue
    is the distance to the segment of the epipolar line bounded by the
    plausible depth range, which also rejects implausible disparities.
    """

    angle_scale_deg: float = 10.0
    midpoint_scale_px: float = 20.0
    epipolar_scale_px: float = 2.0
    score_cap: float = 3.0
    z_near_m: float = 0.3
    z_far_m: float = 50.0


def _fit_line_pca(xy: np.ndarray) -> tuple[Line2D, np.ndarray, np.ndarray]:
    """Principal-direction fit; returns (line, centroid, unit direction)."""
    centroid = xy.mean(axis=0)
    centered = xy - centroid
    _, _, Vt = np.linalg.svd(centered, full_matrices=False)
    direction = Vt[0]
    normal = np.array([-direction[1], direction[0]])
    c = -float(normal @ centroid)
    return Line2D(float(normal[0]), float(normal[1]), c), centroid, direction


def _ransac_line_xy(
    xy: np.ndarray, params: ExtractionParams, rng: np.random.Generator
) -> np.ndarray:
    """Best-supported line through the collapsed (x, y) cloud; returns an
    inlier mask. Sampling draws space-time point pairs, degenerate pairs
    (coincident image positions) are skipped."""
    n = len(xy)
    best_mask = np.zeros(n, dtype=bool)
    best_count = 0
    max_iters = params.ransac_max_iters
    it = 0
    while it < max_iters:
        it += 1
        i, j = rng.integers(0, n, size=2)
        if i == j:
            continue
        d = xy[j] - xy[i]
        norm = np.hypot(d[0], d[1])
        if norm < 1.0:
            continue
        normal = np.array([-d[1], d[0]]) / norm
        dist = np.abs((xy - xy[i]) @ normal)
        mask = dist <= params.inlier_threshold_px
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
            # Standard adaptive stopping rule for 2-point samples.
            w = count / n
            if w >= 1.0:
                break
            needed = np.log(1.0 - params.ransac_confidence) / np.log(1.0 - w * w)
            max_iters = min(params.ransac_max_iters, max(20, int(np.ceil(needed))))
    return best_mask


def extract_lines(
    cluster: EventCluster,
    params: ExtractionParams,
    rng: np.random.Generator | None = None,
) -> list[Segment2D]:
    """Detect 2D line segments supported by a cluster's events.

    Sequentially fits lines to the space-time point cloud (inliers judged in
    the image plane after collapsing time), refits each inlier set along its
    principal direction, splits runs at gaps wider than ``split_gap_px`` and
    keeps segments with enough supporting events. Output is sorted by
    support size, descending.
    """
    if len(cluster) == 0:
        raise NoLinesDetectedError("empty cluster")
    if rng is None:
        rng = np.random.default_rng(0)
    pts = to_spacetime_points(cluster, params.c_z_us)
    xy = pts[:, :2]
    remaining = np.arange(len(xy))
    segments: list[Segment2D] = []

    for _ in range(params.max_lines):
        if len(remaining) < params.min_events_per_line:
            break
        mask = _ransac_line_xy(xy[remaining], params, rng)
        if mask.sum() < params.min_events_per_line:
            break
        inlier_idx = remaining[mask]
        sub = xy[inlier_idx]
        _, centroid, direction = _fit_line_pca(sub)
        t_param = (sub - centroid) @ direction
        order = np.argsort(t_param, kind="stable")
        gaps = np.diff(t_param[order])
        breaks = np.flatnonzero(gaps > params.split_gap_px)
        runs = np.split(order, breaks + 1)
        consumed: list[np.ndarray] = []
        for run in runs:
            if len(run) < params.min_events_per_line:
                continue
            kept_sel = run  # indices into sub
            line, run_centroid, run_dir = _fit_line_pca(sub[kept_sel])
            # Re-fit with a shrinking band: sheds corner events bleeding in
            # from adjacent edges, which otherwise bias the fit.
            for round_idx in range(params.refit_rounds):
                band = params.inlier_threshold_px * params.refit_shrink ** (round_idx + 1)
                dist = np.abs((sub[kept_sel] - run_centroid) @ np.array([-run_dir[1], run_dir[0]]))
                tight = kept_sel[dist <= band]
                if len(tight) < params.min_events_per_line:
                    break
                kept_sel = tight
                line, run_centroid, run_dir = _fit_line_pca(sub[kept_sel])
            s = (sub[kept_sel] - run_centroid) @ run_dir
            pa = line.foot(run_centroid + s.min() * run_dir)
            pb = line.foot(run_centroid + s.max() * run_dir)
            if np.linalg.norm(pb - pa) < 1e-9:
                continue
            segments.append(Segment2D(line, pa, pb, support=len(kept_sel)))
            consumed.append(kept_sel)
        # Only the events actually supporting a kept segment are consumed;
        # loose-band events stay available for their own structures.
        if consumed:
            drop = np.zeros(len(remaining), dtype=bool)
            drop[np.flatnonzero(mask)[np.concatenate(consumed)]] = True
            remaining = remaining[~drop]
        else:
            remaining = remaining[~mask]

    if not segments:
        raise NoLinesDetectedError("no lines detected")
    segments.sort(key=lambda s: -s.support)
    return segments


def _angle_diff_deg(a: float, b: float) -> float:
    d = abs(a - b) % np.pi
    return float(np.degrees(min(d, np.pi - d)))


def _epipolar_segment(
    rig: StereoRig, p_left: np.ndarray, z_near: float, z_far: float
) -> tuple[np.ndarray, np.ndarray]:
    """Projection into the right camera of the left pixel's viewing ray,
    bounded by the plausible depth range."""
    ray = np.linalg.inv(rig.left.K) @ np.array([p_left[0], p_left[1], 1.0])
    R_lr = rig.R_r2l.T
    t_lr = -rig.R_r2l.T @ rig.T_r2l
    pts = []
    for z in (z_near, z_far):
        X_r = R_lr @ (z * ray) + t_lr
        pts.append(
            np.array(
                [
                    rig.right.fx * X_r[0] / X_r[2] + rig.right.cx,
                    rig.right.fy * X_r[1] / X_r[2] + rig.right.cy,
                ]
            )
        )
    return pts[0], pts[1]


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    d = b - a
    L2 = float(d @ d)
    if L2 < 1e-18:
        return float(np.linalg.norm(p - a))
    u = np.clip(float((p - a) @ d) / L2, 0.0, 1.0)
    return float(np.linalg.norm(p - (a + u * d)))


def match_stereo_lines(
    segs_l: list[Segment2D],
    segs_r: list[Segment2D],
    rig: StereoRig,
    params: StereoMatchParams = StereoMatchParams(),
) -> list[tuple[int, int]]:
    """Mutual-nearest one-to-one pairing of left/right segments.

    Candidate pairs are scored by orientation difference, the midpoint's
    distance to the depth-bounded epipolar segment, and midpoint proximity
    measured in disparity-corrected position: a purely geometric first pass
    votes on the object's typical disparity (median over the best
    candidates), and the midpoint cue then penalizes deviation from that
    consensus. This keeps the proximity cue meaningful at short range,
    where the raw midpoint offset is dominated by disparity itself.
    """
    if not segs_l or not segs_r:
        raise StereoMatchingError("stereo matching failed: empty segment list")

    n_l, n_r = len(segs_l), len(segs_r)
    geo = np.full((n_l, n_r), np.inf)  # angle + epipolar terms
    along = np.zeros((n_l, n_r))  # signed midpoint offset along the epipolar line
    for i, sl in enumerate(segs_l):
        epi = epipolar_line(rig, sl.midpoint, "left")  # (a, b, c), ||(a, b)|| = 1
        direction = np.array([-epi[1], epi[0]])
        if direction[0] < 0 or (direction[0] == 0 and direction[1] < 0):
            direction = -direction  # consistent orientation across segments
        ea, eb = _epipolar_segment(rig, sl.midpoint, params.z_near_m, params.z_far_m)
        for j, sr in enumerate(segs_r):
            a = _angle_diff_deg(sl.angle, sr.angle) / params.angle_scale_deg
            e = _point_segment_distance(sr.midpoint, ea, eb) / params.epipolar_scale_px
            geo[i, j] = a + e
            along[i, j] = float((sr.midpoint - sl.midpoint) @ direction)

    best_geo = geo.argmin(axis=1)
    votes = [
        along[i, j]
        for i, j in enumerate(best_geo)
        if np.isfinite(geo[i, j]) and geo[i, j] <= params.score_cap
    ]
    disparity = float(np.median(votes)) if votes else 0.0
    scores = geo + np.abs(along - disparity) / params.midpoint_scale_px

    pairs: list[tuple[int, int]] = []
    best_r = scores.argmin(axis=1)
    best_l = scores.argmin(axis=0)
    for i, j in enumerate(best_r):
        if best_l[j] == i and scores[i, j] <= params.score_cap:
            pairs.append((i, int(j)))
    if not pairs:
        raise StereoMatchingError("stereo matching failed")
    return pairs


def triangulate_model(
    pairs: list[tuple[int, int]],
    segs_l: list[Segment2D],
    segs_r: list[Segment2D],
    rig: StereoRig,
    pose_l: PoseSE3,
    pose_r: PoseSE3,
) -> list[tuple[int, int, PluckerLine]]:
    """Plane-intersection triangulation of each matched segment pair.

    Pairs whose back-projected planes are (near-)parallel are skipped with
    a warning; the survivors keep their segment indices for later stages.
    """
    M_l = ProjectionMatrix.from_pose(rig.left, pose_l)
    M_r = ProjectionMatrix.from_pose(rig.right, pose_r)
    out: list[tuple[int, int, PluckerLine]] = []
    for i, j in pairs:
        pi_l = backproject_plane(M_l, segs_l[i].line)
        pi_r = backproject_plane(M_r, segs_r[j].line)
        try:
            out.append((i, j, triangulate_line(pi_l, pi_r)))
        except DegenerateGeometryError:
            log.warning("skipping pair (%d, %d): back-projected planes are parallel", i, j)
    return out


def _huber_rho(sq: np.ndarray, delta: float) -> np.ndarray:
    """Robust penalty of squared residuals: quadratic core, linear tail."""
    sq = np.asarray(sq, dtype=float)
    lin = 2.0 * delta * np.sqrt(np.maximum(sq, 0.0)) - delta * delta
    return np.where(sq <= delta * delta, sq, lin)


def _line_reprojection_residuals(
    L: PluckerLine,
    points_l: np.ndarray,
    points_r: np.ndarray,
    K_e_l: np.ndarray,
    K_e_r: np.ndarray,
    pose_l: PoseSE3,
    pose_r: PoseSE3,
) -> np.ndarray:
    res = []
    for K_e, pose, pts in ((K_e_l, pose_l, points_l), (K_e_r, pose_r, points_r)):
        l2d = project_line(K_e, transform_line(pose, L))
        res.extend(point_line_signed_distance(p, l2d) for p in np.atleast_2d(pts))
    return np.array(res)


def refine_lines(
    lines: list[PluckerLine],
    observations: list[tuple[np.ndarray, np.ndarray]],
    rig: StereoRig,
    pose_l: PoseSE3,
    pose_r: PoseSE3,
    huber_delta_px: float = 1.0,
    max_iters: int = 50,
) -> tuple[list[PluckerLine], list[bool]]:
    """Structure-only refinement: per line, minimize the robust sum of the
    observed-point-to-projected-line distances over the 4-DOF orthonormal
    parameters, with both camera poses fixed.

    ``observations[k]`` holds the observed image points per camera,
    typically the two extracted segment endpoints (the Huber weighting can
    only reject outliers when more than two points per camera are given;
    with exactly two per camera the problem is exactly determined and any
    observation set admits an interpolating line).

    Returns the refined lines and a per-line convergence flag.
    """
    K_e_l = line_intrinsics(rig.left)
    K_e_r = line_intrinsics(rig.right)
    refined: list[PluckerLine] = []
    converged: list[bool] = []

    for L, (pts_l, pts_r) in zip(lines, observations):
        O = plucker_to_orthonormal(L)
        n_res = len(np.atleast_2d(pts_l)) + len(np.atleast_2d(pts_r))

        def cost_of(orth: OrthonormalLine) -> tuple[float, np.ndarray]:
            r = _line_reprojection_residuals(
                orthonormal_to_plucker(orth), pts_l, pts_r, K_e_l, K_e_r, pose_l, pose_r
            )
            return float(_huber_rho(r * r, huber_delta_px).sum()), r

        cost, r = cost_of(O)
        lam = 1e-4
        ok = False
        for _ in range(max_iters):
            # Numeric Jacobian over the 4 local parameters.
            J = np.empty((n_res, 4))
            h = 1e-7
            for k in range(4):
                d = np.zeros(4)
                d[k] = h
                _, rp = cost_of(orthonormal_update(O, d))
                _, rm = cost_of(orthonormal_update(O, -d))
                J[:, k] = (rp - rm) / (2 * h)
            w = np.where(
                np.abs(r) <= huber_delta_px, 1.0, huber_delta_px / np.maximum(np.abs(r), 1e-300)
            )
            JtW = J.T * w
            H = JtW @ J
            g = JtW @ r
            if np.linalg.norm(g) < 1e-14:
                ok = True
                break
            step_ok = False
            for _ in range(8):
                try:
                    delta = np.linalg.solve(H + lam * np.diag(np.diag(H)) + 1e-15 * np.eye(4), -g)
                except np.linalg.LinAlgError:
                    lam *= 10
                    continue
                O_new = orthonormal_update(O, delta)
                cost_new, r_new = cost_of(O_new)
                if cost_new < cost:
                    O, cost, r = O_new, cost_new, r_new
                    lam = max(lam / 3, 1e-12)
                    step_ok = True
                    break
                lam *= 10
            if not step_ok:
                ok = True  # no improving step: at a (robust) local minimum
                break
            if np.linalg.norm(delta) < 1e-12:
                ok = True
                break
        refined.append(orthonormal_to_plucker(O))
        converged.append(ok)
    return refined, converged


def _events_near_segment(
    cluster: EventCluster, seg: Segment2D, eps_e_px: float, extent_margin_px: float = 0.0
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Events within ``eps_e_px`` of the segment's line and within its
    extent (optionally extended by a margin, since extracted extents are
    conservative); returns (pixels (N, 2), timestamps (N,), arc positions)."""
    px = cluster.pixels()
    d = px @ np.array([seg.line.a, seg.line.b]) + seg.line.c
    direction = (seg.pb - seg.pa) / seg.length
    s = (px - seg.pa) @ direction
    near = (np.abs(d) <= eps_e_px) & (s >= -extent_margin_px) & (s <= seg.length + extent_margin_px)
    idx = np.flatnonzero(near)
    return px[idx], cluster.t[idx], s[idx]


def _sample_at_positions(s: np.ndarray, sample_count: int) -> list[int]:
    """Index of the arc-nearest event for each of ``sample_count``
    equidistant positions spanning the events' arc coverage."""
    targets = np.linspace(float(s.min()), float(s.max()), sample_count)
    return [int(np.argmin(np.abs(s - target))) for target in targets]


def determine_endpoints(
    seg_l: Segment2D,
    seg_r: Segment2D,
    cluster_l: EventCluster,
    cluster_r: EventCluster,
    rig: StereoRig,
    L: PluckerLine,
    params: EndpointMatchParams,
    pose_l: PoseSE3,
    pose_r: PoseSE3,
) -> Segment3D:
    """Locate 3D segment endpoints from spatio-temporally consistent event
    pairs.

    Sample events are drawn at equidistant arc positions along the left 2D
    segment; each is paired with the right-segment event minimizing the
    consistency loss ``C = C_e + C_t`` (symmetric epipolar distance over
    ``2 eps_e`` plus timestamp gap over ``eps_t``), and pairs above
    ``c_max`` are rejected. The accepted pairs nearest the segment
    extremities are triangulated and snapped onto ``L``.
    """
    margin = 4.0 * params.eps_e_px
    px_l, t_l, s_l = _events_near_segment(cluster_l, seg_l, params.eps_e_px, margin)
    px_r, t_r, _ = _events_near_segment(cluster_r, seg_r, params.eps_e_px, margin)
    if len(px_l) == 0 or len(px_r) == 0:
        raise EndpointDeterminationError("endpoint determination failed: no nearby events")
    sample_idx = _sample_at_positions(s_l, params.sample_count)

    F = fundamental_matrix(rig)
    ph_r = np.column_stack([px_r, np.ones(len(px_r))])
    lines_in_left = ph_r @ F  # rows: epipolar lines of right events in the left image
    norm_left = np.hypot(lines_in_left[:, 0], lines_in_left[:, 1])

    accepted: list[tuple[float, np.ndarray, np.ndarray]] = []  # (left arc pos, p_l, p_r)
    for i in sample_idx:
        ph_l = np.array([px_l[i, 0], px_l[i, 1], 1.0])
        epi_in_right = F @ ph_l
        bilinear = ph_r @ epi_in_right  # p_r^T F p_l for all right candidates
        d_right = np.abs(bilinear) / np.hypot(epi_in_right[0], epi_in_right[1])
        d_left = np.abs(lines_in_left @ ph_l) / norm_left
        c_e = (d_right + d_left) / (2.0 * params.eps_e_px)
        c_t = np.abs(t_r - t_l[i]) / params.eps_t_us
        c = c_e + c_t
        j = int(np.argmin(c))
        if c[j] <= params.c_max:
            accepted.append((float(s_l[i]), px_l[i], px_r[j]))

    if len(accepted) < 2:
        raise EndpointDeterminationError("endpoint determination failed: fewer than 2 pairs")
    accepted.sort(key=lambda a: a[0])

    # For lines nearly parallel to the epipolar direction the loss cannot
    # pin the correspondence along the line, so a mispaired sample slides
    # the triangulated point along L. Validate each candidate endpoint by
    # reprojecting its foot into both images and requiring it to fall
    # within the observed segment extents (small margin in pixels).
    M_l = ProjectionMatrix.from_pose(rig.left, pose_l)
    M_r = ProjectionMatrix.from_pose(rig.right, pose_r)
    foot_margin = margin + params.eps_e_px

    def _foot_if_valid(p_l_px: np.ndarray, p_r_px: np.ndarray) -> np.ndarray | None:
        try:
            P = triangulate_point_dlt(p_l_px, p_r_px, M_l, M_r)
        except DegenerateGeometryError:
            return None
        Q = perpendicular_foot(P, L)
        for M, seg, K in ((M_l, seg_l, rig.left), (M_r, seg_r, rig.right)):
            q = M.M @ np.append(Q, 1.0)
            if q[2] <= 0:
                return None
            pix = q[:2] / q[2]
            direction = (seg.pb - seg.pa) / seg.length
            s = float((pix - seg.pa) @ direction)
            if not (-foot_margin <= s <= seg.length + foot_margin):
                return None
        return Q

    first = next(
        (q for _, p_l, p_r in accepted if (q := _foot_if_valid(p_l, p_r)) is not None), None
    )
    last = next(
        (q for _, p_l, p_r in reversed(accepted) if (q := _foot_if_valid(p_l, p_r)) is not None),
        None,
    )
    if first is None or last is None or np.linalg.norm(last - first) < 1e-9:
        raise EndpointDeterminationError("endpoint determination failed: no valid extremities")
    return Segment3D(L, first, last)


def initialize_model(
    cluster_l: EventCluster,
    cluster_r: EventCluster,
    rig: StereoRig,
    extraction: ExtractionParams = ExtractionParams(),
    endpoint: EndpointMatchParams = EndpointMatchParams(),
    stereo: StereoMatchParams = StereoMatchParams(),
    seed: int = 0,
    min_segments: int = 3,
) -> WireframeModel:
    """Full reconstruction from the first stereo clusters.

    The model is expressed in the left-camera frame at the cluster time
    (left pose = identity, right pose chained from the rig).
    """
    pose_l = PoseSE3.identity()
    pose_r = stereo_pose_chain(pose_l, rig)
    rng = np.random.default_rng(seed)
    segs_l = extract_lines(cluster_l, extraction, rng)
    segs_r = extract_lines(cluster_r, extraction, rng)
    pairs = match_stereo_lines(segs_l, segs_r, rig, stereo)
    triangulated = triangulate_model(pairs, segs_l, segs_r, rig, pose_l, pose_r)
    if not triangulated:
        raise InitializationError("initialization failed: no triangulated lines")

    lines = [L for _, _, L in triangulated]
    observations = [
        (np.stack([segs_l[i].pa, segs_l[i].pb]), np.stack([segs_r[j].pa, segs_r[j].pb]))
        for i, j, _ in triangulated
    ]
    refined, _ = refine_lines(lines, observations, rig, pose_l, pose_r)

    segments: list[Segment3D] = []
    for (i, j, _), L in zip(triangulated, refined):
        try:
            segments.append(
                determine_endpoints(
                    segs_l[i], segs_r[j], cluster_l, cluster_r, rig, L, endpoint, pose_l, pose_r
                )
            )
        except EndpointDeterminationError as exc:
            log.warning("dropping line (%d, %d): %s", i, j, exc)
    if len(segments) < min_segments:
        raise InitializationError(
            f"initialization failed: only {len(segments)} segments survived"
        )
    return WireframeModel(tuple(segments))
