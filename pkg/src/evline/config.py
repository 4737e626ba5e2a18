"""Pipeline and scene configuration, serialized as JSON.

The pipeline config mirrors the parameter bundles of each stage; every
field has a default so a missing/partial file is usable. The scene config
describes a synthetic scene end to end: primitive, trajectory, rig
(inline or referenced by path), event rate and noise.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .camera import CameraIntrinsics, StereoRig
from .events import ClusterParams
from .model import WireframeModel
from .model_init import EndpointMatchParams, ExtractionParams, StereoMatchParams
from .synth import EventRateSpec, NoiseSpec, TrajectorySpec, make_primitive
from .tracking import MatchThresholds, RobustLoss, TrackerParams

__all__ = ["PipelineConfig", "SceneConfig", "default_rig"]


def _from_dict(cls, d: dict):
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**d)


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    cluster: ClusterParams = field(default_factory=ClusterParams)
    extraction: ExtractionParams = field(default_factory=ExtractionParams)
    endpoint: EndpointMatchParams = field(default_factory=EndpointMatchParams)
    stereo_match: StereoMatchParams = field(default_factory=StereoMatchParams)
    thresholds: MatchThresholds = field(default_factory=MatchThresholds)
    loss: RobustLoss = field(default_factory=RobustLoss)
    downsample_stride: int = 4
    reassociation_rounds: int = 3
    lm_max_iters: int = 10
    min_associations: int = 10
    rho_min: float = 0.3
    r_max_px: float = 3.0
    rpe_delta_s: float = 1.0

    def tracker_params(self) -> TrackerParams:
        return TrackerParams(
            thresholds=self.thresholds,
            loss=self.loss,
            downsample_stride=self.downsample_stride,
            reassociation_rounds=self.reassociation_rounds,
            lm_max_iters=self.lm_max_iters,
            min_associations=self.min_associations,
            rho_min=self.rho_min,
            r_max_px=self.r_max_px,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        for key, sub in (
            ("cluster", ClusterParams),
            ("extraction", ExtractionParams),
            ("endpoint", EndpointMatchParams),
            ("stereo_match", StereoMatchParams),
            ("thresholds", MatchThresholds),
            ("loss", RobustLoss),
        ):
            if key in d and isinstance(d[key], dict):
                d[key] = _from_dict(sub, d[key])
        return _from_dict(cls, d)

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def default_rig(
    width: int = 640,
    height: int = 480,
    focal_px: float = 300.0,
    baseline_m: float = 0.2,
) -> StereoRig:
    """Fronto-parallel rig: identical pinhole cameras, pure x baseline."""
    K = CameraIntrinsics(focal_px, focal_px, (width - 1) / 2.0, (height - 1) / 2.0, width, height)
    return StereoRig(K, K, np.eye(3), np.array([baseline_m, 0.0, 0.0]))


@dataclass(frozen=True)
class SceneConfig:
    model_kind: str = "cuboid"
    model_dims: tuple[float, ...] = (1.0, 1.0, 1.0)
    trajectory: TrajectorySpec = field(default_factory=TrajectorySpec)
    rate: EventRateSpec = field(default_factory=EventRateSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    rig_path: str | None = None
    rig_inline: dict | None = None
    quantize_pixels: bool = True
    micro_step_us: int = 1000

    def build_model(self) -> WireframeModel:
        return make_primitive(self.model_kind, tuple(self.model_dims))

    def build_rig(self, base_dir: Path | None = None) -> StereoRig:
        from .io import read_rig  # local import: io depends on core types only

        if self.rig_inline is not None:
            d = self.rig_inline

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
        if self.rig_path is not None:
            p = Path(self.rig_path)
            if not p.is_absolute() and base_dir is not None:
                p = base_dir / p
            return read_rig(p)
        return default_rig()

    def to_dict(self) -> dict:
        d = {
            "model_kind": self.model_kind,
            "model_dims": list(self.model_dims),
            "trajectory": asdict(self.trajectory),
            "rate": asdict(self.rate),
            "noise": asdict(self.noise),
            "quantize_pixels": self.quantize_pixels,
            "micro_step_us": self.micro_step_us,
        }
        if self.rig_path is not None:
            d["rig_path"] = self.rig_path
        if self.rig_inline is not None:
            d["rig_inline"] = self.rig_inline
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        d = dict(d)
        if "trajectory" in d and isinstance(d["trajectory"], dict):
            t = dict(d["trajectory"])
            for key in (
                "axis",
                "linear_velocity",
                "initial_translation",
                "initial_rotvec",
                "precession_axis",
            ):
                if key in t:
                    t[key] = tuple(t[key])
            d["trajectory"] = _from_dict(TrajectorySpec, t)
        if "rate" in d and isinstance(d["rate"], dict):
            d["rate"] = _from_dict(EventRateSpec, d["rate"])
        if "noise" in d and isinstance(d["noise"], dict):
            d["noise"] = _from_dict(NoiseSpec, d["noise"])
        if "model_dims" in d:
            d["model_dims"] = tuple(d["model_dims"])
        return _from_dict(cls, d)

    @classmethod
    def load(cls, path: str | Path) -> "SceneConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")
