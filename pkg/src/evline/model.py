"""Wireframe object models: 3D line segments plus optional planar faces.

Faces are stored as lists of segment indices; they are only consulted for
hidden-edge culling during projection. A reconstructed model typically has
no faces, in which case every in-frustum segment counts as visible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .plucker import Segment3D

__all__ = ["WireframeModel"]


@dataclass(frozen=True)
class WireframeModel:
    segments: tuple[Segment3D, ...]
    faces: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "faces", tuple(tuple(f) for f in self.faces))
        for face in self.faces:
            for s in face:
                if not (0 <= s < len(self.segments)):
                    raise ValueError("face references a segment that does not exist")
        centers, normals = self._fit_face_planes()
        adjacency = tuple(
            tuple(f for f, face in enumerate(self.faces) if s in face)
            for s in range(len(self.segments))
        )
        object.__setattr__(self, "_face_centers", centers)
        object.__setattr__(self, "_face_normals", normals)
        object.__setattr__(self, "_segment_faces", adjacency)

    def __len__(self) -> int:
        return len(self.segments)

    def endpoints(self) -> np.ndarray:
        """All segment endpoints stacked, shape (2 * n_segments, 3)."""
        return np.array([p for s in self.segments for p in (s.pa, s.pb)])

    def centroid(self) -> np.ndarray:
        return self.endpoints().mean(axis=0)

    def face_vertices(self, face_idx: int) -> np.ndarray:
        pts = np.array(
            [p for s in self.faces[face_idx] for p in (self.segments[s].pa, self.segments[s].pb)]
        )
        # Collapse duplicate corners shared by adjacent edges.
        _, unique = np.unique(np.round(pts, 9), axis=0, return_index=True)
        return pts[np.sort(unique)]

    def _fit_face_planes(self) -> tuple[np.ndarray, np.ndarray]:
        """Centers (F, 3) and unit normals (F, 3), normals oriented away
        from the model centroid. For a plane through the centroid the sign
        is arbitrary; such faces only occur on boundary sheets whose edges
        are never face-culled."""
        n_faces = len(self.faces)
        centers = np.zeros((n_faces, 3))
        normals = np.zeros((n_faces, 3))
        if n_faces == 0:
            return centers, normals
        model_centroid = self.centroid()
        for f in range(n_faces):
            verts = self.face_vertices(f)
            center = verts.mean(axis=0)
            _, _, Vt = np.linalg.svd(verts - center)
            normal = Vt[2]
            if normal @ (center - model_centroid) < 0:
                normal = -normal
            centers[f] = center
            normals[f] = normal
        return centers, normals

    def face_plane(self, face_idx: int) -> tuple[np.ndarray, np.ndarray]:
        """(center, outward unit normal) of a face in the model frame."""
        return self._face_centers[face_idx], self._face_normals[face_idx]

    def face_planes(self) -> tuple[np.ndarray, np.ndarray]:
        """All face centers (F, 3) and outward normals (F, 3)."""
        return self._face_centers, self._face_normals

    def faces_of_segment(self) -> tuple[tuple[int, ...], ...]:
        """Segment index -> adjacent face indices."""
        return self._segment_faces

    def hidden_segments(self, R: np.ndarray, T: np.ndarray) -> np.ndarray:
        """Face-culling mask under pose (R, T): a segment with two or more
        adjacent faces is hidden when every adjacent face points away from
        the camera."""
        hidden = np.zeros(len(self.segments), dtype=bool)
        if not self.faces:
            return hidden
        centers_cam = self._face_centers @ R.T + T
        normals_cam = self._face_normals @ R.T
        back = np.einsum("fi,fi->f", normals_cam, centers_cam) > 0.0
        for s, faces in enumerate(self._segment_faces):
            if len(faces) >= 2 and all(back[f] for f in faces):
                hidden[s] = True
        return hidden
