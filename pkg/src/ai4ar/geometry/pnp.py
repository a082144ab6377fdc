"""Pose from 2D-3D correspondences.

A linear DLT estimate (on Hartley-normalized coordinates) seeds a damped
Gauss-Newton refinement over an axis-angle/translation increment.  Steps
are only accepted when they reduce the reprojection RMS, so the error is
monotone over accepted iterations; refinement stops when the step norm
drops below 1e-10 or after 100 iterations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import AI4ARError
from ..protocol import CameraIntrinsics, Pose6D

MIN_CORRESPONDENCES = 6
COPLANARITY_RATIO = 1e-9
STEP_TOL = 1e-10
MAX_ITERATIONS = 100


class PnPError(AI4ARError):
    pass


@dataclass(eq=False)
class CorrespondenceSet:
    """Aligned 3D model points (mm) and observed pixel coordinates."""

    points_3d: np.ndarray
    points_2d: np.ndarray
    intrinsics: CameraIntrinsics

    def __post_init__(self):
        p3 = np.ascontiguousarray(np.asarray(self.points_3d, dtype=float))
        p2 = np.ascontiguousarray(np.asarray(self.points_2d, dtype=float))
        if p3.ndim != 2 or p3.shape[1] != 3:
            raise PnPError(f"points_3d must be (n, 3), got {p3.shape}")
        if p2.ndim != 2 or p2.shape[1] != 2:
            raise PnPError(f"points_2d must be (n, 2), got {p2.shape}")
        if len(p3) != len(p2):
            raise PnPError(f"{len(p3)} 3D points vs {len(p2)} 2D points")
        if len(p3) < MIN_CORRESPONDENCES:
            raise PnPError(f"need at least {MIN_CORRESPONDENCES} "
                           f"correspondences, got {len(p3)}")
        if not (np.isfinite(p3).all() and np.isfinite(p2).all()):
            raise PnPError("correspondences must be finite")
        centered = p3 - p3.mean(axis=0)
        sv = np.linalg.svd(centered, compute_uv=False)
        if sv[-1] <= COPLANARITY_RATIO * sv[0]:
            raise PnPError(
                f"3D points are coplanar or collinear (singular value ratio "
                f"{sv[-1] / sv[0] if sv[0] > 0 else 0.0:.3g}); the linear "
                f"estimate is degenerate")
        self.points_3d = p3
        self.points_2d = p2


def _hat(w: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]],
                     [w[2], 0.0, -w[0]],
                     [-w[1], w[0], 0.0]])


def _exp_so3(w: np.ndarray) -> np.ndarray:
    """Rodrigues exponential with a series fallback near zero."""
    theta = float(np.linalg.norm(w))
    K = _hat(w)
    if theta < 1e-9:
        return np.eye(3) + K + 0.5 * (K @ K)
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * K + b * (K @ K)


def _dlt(corr: CorrespondenceSet) -> tuple[np.ndarray, np.ndarray]:
    """Linear initial pose via the direct linear transform."""
    intr = corr.intrinsics
    # Normalized image coordinates remove the intrinsics from the system.
    xn = (corr.points_2d[:, 0] - intr.cx) / intr.fx
    yn = (corr.points_2d[:, 1] - intr.cy) / intr.fy
    # Hartley normalization of the 3D points conditions the DLT matrix.
    mu = corr.points_3d.mean(axis=0)
    rms = float(np.sqrt(((corr.points_3d - mu) ** 2).sum(axis=1).mean()))
    s = math.sqrt(3.0) / rms if rms > 0 else 1.0
    Xn = (corr.points_3d - mu) * s

    n = len(Xn)
    A = np.zeros((2 * n, 12))
    Xh = np.hstack([Xn, np.ones((n, 1))])
    A[0::2, 0:4] = Xh
    A[0::2, 8:12] = -xn[:, None] * Xh
    A[1::2, 4:8] = Xh
    A[1::2, 8:12] = -yn[:, None] * Xh
    _, _, Vt = np.linalg.svd(A)
    M = Vt[-1].reshape(3, 4)

    # Undo the 3D normalization: M maps raw homogeneous points.
    T = np.eye(4)
    T[:3, :3] *= s
    T[:3, 3] = -s * mu
    M = M @ T

    # Fix the projective sign so depths come out positive.
    depths = corr.points_3d @ M[2, :3] + M[2, 3]
    if depths.sum() < 0:
        M = -M
    B = M[:, :3]
    U, sv, Vt = np.linalg.svd(B)
    d = np.sign(np.linalg.det(U @ Vt))
    R = U @ np.diag([1.0, 1.0, d]) @ Vt
    scale = sv.mean()
    if not np.isfinite(scale) or scale <= 0:
        raise PnPError("linear estimate collapsed (zero scale)")
    t = M[:, 3] / scale
    return R, t


def _rms(residuals: np.ndarray) -> float:
    return float(np.sqrt(np.mean(residuals ** 2)))


def _residuals(R, t, corr: CorrespondenceSet) -> np.ndarray:
    intr = corr.intrinsics
    cam = corr.points_3d @ R.T + t
    z = cam[:, 2]
    if np.any(z <= 0):
        raise PnPError("refinement pushed a point behind the camera")
    u = intr.fx * cam[:, 0] / z + intr.cx
    v = intr.fy * cam[:, 1] / z + intr.cy
    return np.column_stack([u - corr.points_2d[:, 0],
                            v - corr.points_2d[:, 1]]).ravel()


def _jacobian(R, t, corr: CorrespondenceSet) -> np.ndarray:
    """Derivative of the pixel residuals w.r.t. (rotation increment,
    translation increment) applied as R <- exp(w) R, t <- t + dt."""
    intr = corr.intrinsics
    rotated = corr.points_3d @ R.T
    cam = rotated + t
    x, y, z = cam[:, 0], cam[:, 1], cam[:, 2]
    n = len(cam)
    J = np.zeros((2 * n, 6))
    # d(pixel)/d(cam point)
    du = np.zeros((n, 3))
    du[:, 0] = intr.fx / z
    du[:, 2] = -intr.fx * x / z ** 2
    dv = np.zeros((n, 3))
    dv[:, 1] = intr.fy / z
    dv[:, 2] = -intr.fy * y / z ** 2
    # d(cam point)/dw = -[R x]_x ; d(cam point)/dt = I
    for i in range(n):
        dP_dw = -_hat(rotated[i])
        J[2 * i, :3] = du[i] @ dP_dw
        J[2 * i, 3:] = du[i]
        J[2 * i + 1, :3] = dv[i] @ dP_dw
        J[2 * i + 1, 3:] = dv[i]
    return J


def pnp_solve(corr: CorrespondenceSet) -> tuple[Pose6D, float]:
    """Estimate the object pose; returns (pose, reprojection RMS in px)."""
    R, t = _dlt(corr)
    try:
        r = _residuals(R, t, corr)
    except PnPError:
        raise PnPError("linear estimate places points behind the camera")
    rms = _rms(r)
    lam = 1e-3
    for _ in range(MAX_ITERATIONS):
        J = _jacobian(R, t, corr)
        g = J.T @ r
        H = J.T @ J
        step = None
        while True:
            try:
                cand = np.linalg.solve(H + lam * np.eye(6), -g)
            except np.linalg.LinAlgError:
                cand = None
            if cand is not None and np.isfinite(cand).all():
                R_new = _exp_so3(cand[:3]) @ R
                t_new = t + cand[3:]
                try:
                    r_new = _residuals(R_new, t_new, corr)
                    rms_new = _rms(r_new)
                except PnPError:
                    rms_new = math.inf
                if math.isfinite(rms_new) and rms_new <= rms:
                    R, t, r, rms = R_new, t_new, r_new, rms_new
                    step = cand
                    lam = max(lam / 10.0, 1e-12)
                    break
            lam *= 10.0
            if lam > 1e12:
                break
        if step is None or float(np.linalg.norm(step)) < STEP_TOL:
            break
    if not (np.isfinite(R).all() and np.isfinite(t).all()
            and math.isfinite(rms)):
        raise PnPError(f"refinement diverged: R={R!r} t={t!r} rms={rms!r}")
    return Pose6D.from_matrix(R, t), rms
