"""Readers and writers for the on-disk formats.

Event streams are CSV (`t_us,x,y,p` with p in {0, 1} on disk, mapped to
{-1, +1} in memory) plus a `.meta.json` sidecar carrying the sensor
resolution. Trajectories are plain text `t_s tx ty tz qx qy qz qw`. Floats
are written in shortest round-trip form so exports re-read bit-exactly and
identical runs produce byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.spatial.transform import Rotation

from .camera import CameraIntrinsics, PoseSE3, StereoRig
from .events import EventStream
from .metrics import ErrorReport, Trajectory
from .model import WireframeModel
from .plucker import Segment3D

__all__ = [
    "read_events",
    "write_events",
    "read_rig",
    "write_rig",
    "read_model",
    "write_model",
    "read_trajectory",
    "write_trajectory",
    "read_labels",
    "write_labels",
    "write_diagnostics",
    "write_report",
]


def _meta_path(events_path: Path) -> Path:
    return events_path.with_suffix(".meta.json")


def _fmt(v: float) -> str:
    return repr(float(v))


def write_events(path: str | Path, stream: EventStream) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    p_disk = ((stream.p.astype(np.int64) + 1) // 2).astype(np.int64)
    integral = np.all(stream.x == np.round(stream.x)) and np.all(stream.y == np.round(stream.y))
    x = stream.x.astype(np.int64) if integral else stream.x
    y = stream.y.astype(np.int64) if integral else stream.y
    pd.DataFrame({"t_us": stream.t, "x": x, "y": y, "p": p_disk}).to_csv(path, index=False)
    _meta_path(path).write_text(
        json.dumps({"width": stream.width, "height": stream.height}) + "\n"
    )


def read_events(path: str | Path) -> EventStream:
    path = Path(path)
    meta = json.loads(_meta_path(path).read_text())
    df = pd.read_csv(path, float_precision="round_trip")
    t = df["t_us"].to_numpy(dtype=np.int64)
    p = (2 * df["p"].to_numpy(dtype=np.int64) - 1).astype(np.int8)
    return EventStream(
        t,
        df["x"].to_numpy(dtype=np.float64),
        df["y"].to_numpy(dtype=np.float64),
        p,
        int(meta["width"]),
        int(meta["height"]),
    )


def write_labels(path: str | Path, labels: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame({"label": np.asarray(labels, dtype=np.int64)}).to_csv(path, index=False)


def read_labels(path: str | Path) -> np.ndarray:
    return pd.read_csv(path)["label"].to_numpy(dtype=np.int64)


def _intrinsics_to_dict(K: CameraIntrinsics) -> dict:
    return {"fx": K.fx, "fy": K.fy, "cx": K.cx, "cy": K.cy, "width": K.width, "height": K.height}


def write_rig(path: str | Path, rig: StereoRig) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "left": _intrinsics_to_dict(rig.left),
        "right": _intrinsics_to_dict(rig.right),
        "R_r2l": [float(v) for v in rig.R_r2l.reshape(-1)],
        "T_r2l": [float(v) for v in rig.T_r2l],
    }
    path.write_text(json.dumps(payload, indent=2) + "\n")


def read_rig(path: str | Path) -> StereoRig:
    d = json.loads(Path(path).read_text())

    def cam(c: dict) -> CameraIntrinsics:
        return CameraIntrinsics(
            c["fx"], c["fy"], c["cx"], c["cy"], int(c["width"]), int(c["height"])
        )

    return StereoRig(
        cam(d["left"]),
        cam(d["right"]),
        np.array(d["R_r2l"], dtype=float).reshape(3, 3),
        np.array(d["T_r2l"], dtype=float),
    )


def write_model(path: str | Path, model: WireframeModel) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "segments": [
            {"pa": [float(v) for v in s.pa], "pb": [float(v) for v in s.pb]}
            for s in model.segments
        ],
        "faces": [list(f) for f in model.faces],
    }
    path.write_text(json.dumps(payload, indent=2) + "\n")


def read_model(path: str | Path) -> WireframeModel:
    d = json.loads(Path(path).read_text())
    segments = tuple(
        Segment3D.from_endpoints(np.array(s["pa"], dtype=float), np.array(s["pb"], dtype=float))
        for s in d["segments"]
    )
    return WireframeModel(segments, tuple(tuple(f) for f in d.get("faces", [])))


def write_trajectory(path: str | Path, traj: Trajectory) -> None:
    """One line per pose: ``t_s tx ty tz qx qy qz qw``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for i in range(len(traj)):
            q = Rotation.from_matrix(traj.R[i]).as_quat()
            vals = [traj.t[i], *traj.T[i], *q]
            f.write(" ".join(_fmt(v) for v in vals) + "\n")


def read_trajectory(path: str | Path) -> Trajectory:
    rows = np.genfromtxt(path, dtype=np.float64, ndmin=2)
    if rows.size == 0:
        return Trajectory(np.zeros(0), np.zeros((0, 3, 3)), np.zeros((0, 3)))
    R = Rotation.from_quat(rows[:, 4:8]).as_matrix()
    return Trajectory(rows[:, 0], R, rows[:, 1:4])


def write_diagnostics(path: str | Path, rows: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write("t_s,cost,inlier_ratio,status,n_assoc\n")
        for r in rows:
            f.write(
                f"{_fmt(r['t_s'])},{_fmt(r['cost'])},{_fmt(r['inlier_ratio'])},"
                f"{r['status']},{int(r['n_assoc'])}\n"
            )


def write_report(
    path: str | Path, report: ErrorReport, est: Trajectory | None = None, gt: Trajectory | None = None
) -> dict[str, str]:
    """Write the summary CSV plus sidecars: per-window errors and a
    gnuplot-compatible XY trace of both trajectories. Returns the paths."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write("R_rel,T_rel,T_abs\n")
        f.write(f"{_fmt(report.r_rel_deg_s)},{_fmt(report.t_rel_cm_s)},{_fmt(report.t_abs_cm)}\n")

    windows = path.with_name(path.stem + "_windows.csv")
    with open(windows, "w") as f:
        f.write("t_s,r_rel_deg_s,t_rel_cm_s\n")
        for t, r, tr in zip(report.window_times, report.window_r_deg_s, report.window_t_cm_s):
            f.write(f"{_fmt(t)},{_fmt(r)},{_fmt(tr)}\n")

    paths = {"report": str(path), "windows": str(windows)}
    if est is not None and gt is not None:
        xy = path.with_name(path.stem + "_xy.dat")
        with open(xy, "w") as f:
            f.write("# t_s x_est y_est z_est x_gt y_gt z_gt\n")
            for i in range(len(est)):
                t = est.t[i]
                k = int(np.argmin(np.abs(gt.t - t)))
                vals = [t, *est.T[i], *gt.T[k]]
                f.write(" ".join(_fmt(v) for v in vals) + "\n")
        paths["xy"] = str(xy)
    return paths
