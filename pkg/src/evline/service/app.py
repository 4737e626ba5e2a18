"""FastAPI application wrapping the pipeline stages."""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, pipeline
from ..config import PipelineConfig
from .schemas import (
    EvalRequest,
    EvalResponse,
    InitRequest,
    InitResponse,
    RunAllRequest,
    RunAllResponse,
    SimulateRequest,
    SimulateResponse,
    TrackRequest,
    TrackResponse,
)

_ERROR_CODES = {
    pipeline.PipelineInitError: "init_failed",
    pipeline.PipelineTrackingLostError: "tracking_lost",
    pipeline.PipelineIOError: "io_error",
}


def _load_config(path: str | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        return PipelineConfig.load(path)
    except (OSError, ValueError) as exc:
        raise pipeline.PipelineIOError(f"failed to read config from {path}: {exc}") from exc


def create_app() -> FastAPI:
    app = FastAPI(title="evline", version=__version__)

    @app.exception_handler(pipeline.PipelineInitError)
    @app.exception_handler(pipeline.PipelineTrackingLostError)
    @app.exception_handler(pipeline.PipelineIOError)
    async def pipeline_error(request: Request, exc: Exception) -> JSONResponse:
        return JSONResponse(
            status_code=422,
            content={"detail": {"code": _ERROR_CODES[type(exc)], "message": str(exc)}},
        )

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate(req: SimulateRequest) -> SimulateResponse:
        return SimulateResponse(**pipeline.simulate(req.scene, req.out_dir))

    @app.post("/init", response_model=InitResponse)
    def init(req: InitRequest) -> InitResponse:
        cfg = _load_config(req.config)
        return InitResponse(
            **pipeline.init_model(req.events_left, req.events_right, req.rig, req.out, cfg)
        )

    @app.post("/track", response_model=TrackResponse)
    def track(req: TrackRequest) -> TrackResponse:
        cfg = _load_config(req.config)
        return TrackResponse(
            **pipeline.track(
                req.events_left,
                req.events_right,
                req.rig,
                req.model,
                req.out,
                cfg,
                diagnostics=req.diagnostics,
            )
        )

    @app.post("/eval", response_model=EvalResponse)
    def eval_(req: EvalRequest) -> EvalResponse:
        return EvalResponse(
            **pipeline.evaluate_trajectories(
                req.est, req.gt, req.out, delta_s=req.delta_s, anchor_first=req.anchor_first
            )
        )

    @app.post("/run-all", response_model=RunAllResponse)
    def run_all(req: RunAllRequest) -> RunAllResponse:
        cfg = _load_config(req.config)
        result = pipeline.run_all(req.scene, req.out_dir, cfg)
        return RunAllResponse(
            simulate=SimulateResponse(**result["simulate"]),
            init=InitResponse(**result["init"]),
            track=TrackResponse(**result["track"]),
            eval=EvalResponse(**result["eval"]),
        )

    return app
