"""Stereo event-camera wireframe reconstruction and line-based 6-DOF pose
tracking, with a synthetic event generator and a trajectory evaluator for
closed-loop verification."""

__version__ = "0.1.0"

from .camera import CameraIntrinsics, PoseSE3, StereoRig
from .events import ClusterParams, Event, EventCluster, EventStream
from .model import WireframeModel
from .plucker import PluckerLine, Segment2D, Segment3D

__all__ = [
    "__version__",
    "CameraIntrinsics",
    "PoseSE3",
    "StereoRig",
    "ClusterParams",
    "Event",
    "EventCluster",
    "EventStream",
    "WireframeModel",
    "PluckerLine",
    "Segment2D",
    "Segment3D",
]
