"""Pinhole projection."""
from __future__ import annotations

import numpy as np

from ..errors import AI4ARError
from ..protocol import CameraIntrinsics, Pose6D


class GeometryError(AI4ARError):
    pass


def project_rt(points_3d: np.ndarray, R: np.ndarray, t: np.ndarray,
               intrinsics: CameraIntrinsics) -> np.ndarray:
    """Project camera-frame points R @ x + t; depths must be positive."""
    pts = np.asarray(points_3d, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise GeometryError(f"points must be (n, 3), got {pts.shape}")
    cam = pts @ np.asarray(R, dtype=float).T + np.asarray(t, dtype=float)
    z = cam[:, 2]
    bad = np.flatnonzero(z <= 0.0)
    if bad.size:
        raise GeometryError(f"point {int(bad[0])} has nonpositive depth "
                            f"{z[bad[0]]:.6g}; it is behind the camera")
    u = intrinsics.fx * cam[:, 0] / z + intrinsics.cx
    v = intrinsics.fy * cam[:, 1] / z + intrinsics.cy
    return np.column_stack([u, v])


def project_points(points_3d, pose: Pose6D,
                   intrinsics: CameraIntrinsics) -> np.ndarray:
    """Project model points under an object pose into pixel coordinates."""
    return project_rt(points_3d, pose.rotation, pose.translation_vec,
                      intrinsics)
