"""End-to-end pipeline stages shared by the service and the CLI.

Each stage reads and writes files through :mod:`evline.io`, so identical
inputs and seeds produce byte-identical artifacts regardless of the entry
point. Failures raise typed errors that map onto the process exit codes
(2 initialization, 3 tracking lost without recovery, 4 I/O or format).
"""

from __future__ import annotations

import json
from pathlib import Path

from . import io as evio
from .config import PipelineConfig, SceneConfig
from .events import cluster_at
from .metrics import evaluate
from .model_init import (
    InitializationError,
    NoLinesDetectedError,
    StereoMatchingError,
    initialize_model,
)
from .synth import render_events
from .tracking import track_sequence

__all__ = [
    "PipelineInitError",
    "PipelineTrackingLostError",
    "PipelineIOError",
    "simulate",
    "init_model",
    "track",
    "evaluate_trajectories",
    "run_all",
]


class PipelineInitError(RuntimeError):
    exit_code = 2


class PipelineTrackingLostError(RuntimeError):
    exit_code = 3


class PipelineIOError(RuntimeError):
    exit_code = 4


def _load(reader, path, what: str):
    try:
        return reader(path)
    except FileNotFoundError as exc:
        raise PipelineIOError(f"{what} not found: {path}") from exc
    except (ValueError, KeyError, json.JSONDecodeError, OSError) as exc:
        raise PipelineIOError(f"failed to read {what} from {path}: {exc}") from exc


def simulate(scene_path: str | Path, out_dir: str | Path) -> dict:
    """Render a synthetic scene to ``out_dir``: event CSVs with metadata and
    label sidecars, the ground-truth model and trajectory, and the rig."""
    scene_path = Path(scene_path)
    scene = _load(SceneConfig.load, scene_path, "scene config")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = scene.build_model()
    rig = scene.build_rig(base_dir=scene_path.parent)
    rendered = render_events(
        model,
        scene.trajectory,
        rig,
        scene.rate,
        scene.noise,
        micro_step_us=scene.micro_step_us,
        quantize_pixels=scene.quantize_pixels,
    )
    paths = {
        "events_left": out / "events_left.csv",
        "events_right": out / "events_right.csv",
        "labels_left": out / "labels_left.csv",
        "labels_right": out / "labels_right.csv",
        "gt": out / "gt.txt",
        "model": out / "model_gt.json",
        "rig": out / "rig.json",
    }
    evio.write_events(paths["events_left"], rendered.stream_left)
    evio.write_events(paths["events_right"], rendered.stream_right)
    evio.write_labels(paths["labels_left"], rendered.labels_left)
    evio.write_labels(paths["labels_right"], rendered.labels_right)
    evio.write_trajectory(paths["gt"], rendered.ground_truth)
    evio.write_model(paths["model"], model)
    evio.write_rig(paths["rig"], rig)
    return {
        "n_events_left": len(rendered.stream_left),
        "n_events_right": len(rendered.stream_right),
        "n_gt_poses": len(rendered.ground_truth),
        "duration_s": scene.trajectory.duration_s,
        **{k: str(v) for k, v in paths.items()},
    }


def init_model(
    events_left: str | Path,
    events_right: str | Path,
    rig_path: str | Path,
    out: str | Path,
    config: PipelineConfig | None = None,
) -> dict:
    """Reconstruct a wireframe model from the first stereo clusters."""
    cfg = config or PipelineConfig()
    stream_l = _load(evio.read_events, events_left, "left events")
    stream_r = _load(evio.read_events, events_right, "right events")
    rig = _load(evio.read_rig, rig_path, "rig calibration")
    t0 = max(stream_l.t_first, stream_r.t_first)
    cl = cluster_at(stream_l, t0, cfg.cluster.n, camera="left")
    cr = cluster_at(stream_r, t0, cfg.cluster.n, camera="right")
    try:
        model = initialize_model(
            cl, cr, rig, cfg.extraction, cfg.endpoint, cfg.stereo_match, seed=cfg.seed
        )
    except (InitializationError, NoLinesDetectedError, StereoMatchingError) as exc:
        raise PipelineInitError(str(exc)) from exc
    evio.write_model(out, model)
    return {"model": str(out), "n_segments": len(model), "t0_us": t0}


def track(
    events_left: str | Path,
    events_right: str | Path,
    rig_path: str | Path,
    model_path: str | Path,
    out: str | Path,
    config: PipelineConfig | None = None,
    diagnostics: str | Path | None = None,
) -> dict:
    """Track the model through both streams and write the trajectory.

    Raises :class:`PipelineTrackingLostError` after writing outputs when
    tracking is lost and never recovers.
    """
    cfg = config or PipelineConfig()
    stream_l = _load(evio.read_events, events_left, "left events")
    stream_r = _load(evio.read_events, events_right, "right events")
    rig = _load(evio.read_rig, rig_path, "rig calibration")
    model = _load(evio.read_model, model_path, "model")
    try:
        result = track_sequence(
            stream_l,
            stream_r,
            rig,
            cluster_params=cfg.cluster,
            tracker_params=cfg.tracker_params(),
            extraction=cfg.extraction,
            endpoint=cfg.endpoint,
            stereo=cfg.stereo_match,
            seed=cfg.seed,
            model=model,
        )
    except (InitializationError, NoLinesDetectedError, StereoMatchingError) as exc:
        raise PipelineInitError(str(exc)) from exc
    evio.write_trajectory(out, result.trajectory)
    if diagnostics is not None:
        evio.write_diagnostics(diagnostics, result.diagnostics)
    summary = {
        "trajectory": str(out),
        "n_poses": len(result.trajectory),
        "n_lost": result.n_lost,
        "n_reinit": result.n_reinit,
    }
    if diagnostics is not None:
        summary["diagnostics"] = str(diagnostics)
    statuses = [row["status"] for row in result.diagnostics]
    if result.n_lost > 0 and (not statuses or statuses[-1] != "tracking"):
        raise PipelineTrackingLostError(
            f"tracking lost without recovery ({result.n_lost} lost clusters); "
            f"partial trajectory written to {out}"
        )
    return summary


def evaluate_trajectories(
    est_path: str | Path,
    gt_path: str | Path,
    out: str | Path,
    delta_s: float = 1.0,
    anchor_first: bool = False,
) -> dict:
    est = _load(evio.read_trajectory, est_path, "estimated trajectory")
    gt = _load(evio.read_trajectory, gt_path, "ground-truth trajectory")
    try:
        report = evaluate(est, gt, delta_s=delta_s, anchor_first=anchor_first)
    except ValueError as exc:
        raise PipelineIOError(f"evaluation failed: {exc}") from exc
    paths = evio.write_report(out, report, est, gt)
    return {
        "r_rel_deg_s": report.r_rel_deg_s,
        "t_rel_cm_s": report.t_rel_cm_s,
        "t_abs_cm": report.t_abs_cm,
        **paths,
    }


def run_all(
    scene_path: str | Path,
    out_dir: str | Path,
    config: PipelineConfig | None = None,
) -> dict:
    """simulate -> init -> track -> eval in one directory."""
    cfg = config or PipelineConfig()
    out = Path(out_dir)
    sim = simulate(scene_path, out)
    init = init_model(
        sim["events_left"], sim["events_right"], sim["rig"], out / "model.json", cfg
    )
    trk = track(
        sim["events_left"],
        sim["events_right"],
        sim["rig"],
        init["model"],
        out / "trajectory.txt",
        cfg,
        diagnostics=out / "diagnostics.csv",
    )
    ev = evaluate_trajectories(
        trk["trajectory"], sim["gt"], out / "report.csv", delta_s=cfg.rpe_delta_s
    )
    return {"simulate": sim, "init": init, "track": trk, "eval": ev}
