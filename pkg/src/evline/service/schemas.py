"""Pydantic request/response models for the tracking service.

Requests reference files on the server's filesystem; heavy artifacts are
exchanged through those paths, never inlined, so service and CLI runs
produce identical bytes on disk.
"""

from __future__ import annotations

from pydantic import BaseModel


class SimulateRequest(BaseModel):
    scene: str
    out_dir: str


class SimulateResponse(BaseModel):
    n_events_left: int
    n_events_right: int
    n_gt_poses: int
    duration_s: float
    events_left: str
    events_right: str
    labels_left: str
    labels_right: str
    gt: str
    model: str
    rig: str


class InitRequest(BaseModel):
    events_left: str
    events_right: str
    rig: str
    out: str
    config: str | None = None


class InitResponse(BaseModel):
    model: str
    n_segments: int
    t0_us: int


class TrackRequest(BaseModel):
    events_left: str
    events_right: str
    rig: str
    model: str
    out: str
    config: str | None = None
    diagnostics: str | None = None


class TrackResponse(BaseModel):
    trajectory: str
    n_poses: int
    n_lost: int
    n_reinit: int
    diagnostics: str | None = None


class EvalRequest(BaseModel):
    est: str
    gt: str
    out: str
    delta_s: float = 1.0
    anchor_first: bool = False


class EvalResponse(BaseModel):
    r_rel_deg_s: float
    t_rel_cm_s: float
    t_abs_cm: float
    report: str
    windows: str
    xy: str | None = None


class RunAllRequest(BaseModel):
    scene: str
    out_dir: str
    config: str | None = None


class RunAllResponse(BaseModel):
    simulate: SimulateResponse
    init: InitResponse
    track: TrackResponse
    eval: EvalResponse


class ErrorDetail(BaseModel):
    code: str
    message: str
