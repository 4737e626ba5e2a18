import numpy as np
import pytest

from evline.camera import CameraIntrinsics, PoseSE3, StereoRig, so3_exp
from evline.config import default_rig
from evline.events import EventCluster, EventStream
from evline.plucker import plucker_from_points


@pytest.fixture
def rig() -> StereoRig:
    return default_rig()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)


def random_pose(rng: np.random.Generator, rot_scale: float = 0.5, t_scale: float = 0.5) -> PoseSE3:
    return PoseSE3(so3_exp(rot_scale * rng.normal(size=3)), t_scale * rng.normal(size=3))


def random_line(rng: np.random.Generator, offset=(0.0, 0.0, 3.0)):
    """Random line through a box ahead of the origin (never through it)."""
    while True:
        P1 = rng.normal(size=3) + offset
        P2 = rng.normal(size=3) + offset
        if np.linalg.norm(P2 - P1) > 1e-3:
            return plucker_from_points(P1, P2)


def make_stream(t, x, y, p, width=640, height=480) -> EventStream:
    return EventStream(
        np.asarray(t, dtype=np.int64),
        np.asarray(x, dtype=float),
        np.asarray(y, dtype=float),
        np.asarray(p, dtype=np.int8),
        width,
        height,
    )


def make_cluster(t, x, y, p=None, center_time=0, camera="left") -> EventCluster:
    t = np.asarray(t, dtype=np.int64)
    if p is None:
        p = np.ones(len(t), dtype=np.int8)
    return EventCluster(
        t=t,
        x=np.asarray(x, dtype=float),
        y=np.asarray(y, dtype=float),
        p=np.asarray(p, dtype=np.int8),
        center_time=center_time,
        camera=camera,
    )


def segment_events(
    pa, pb, n: int, rng: np.random.Generator, jitter_px: float = 0.0, t_span_us: int = 10_000
):
    """Events spread uniformly along a 2D segment, timestamps uniform."""
    u = rng.random(n)
    pts = np.asarray(pa, dtype=float)[None, :] + u[:, None] * (
        np.asarray(pb, dtype=float) - np.asarray(pa, dtype=float)
    )[None, :]
    if jitter_px > 0:
        pts = pts + rng.normal(0.0, jitter_px, size=pts.shape)
    t = np.sort(rng.integers(0, t_span_us, size=n))
    return t, pts
