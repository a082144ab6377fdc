"""Unit quaternion helpers.

Rotations cross the wire as unit quaternions (w, x, y, z) and are expanded
to 3x3 matrices where the math needs them.  Quaternions are kept in a
canonical sign (first nonzero component positive) so that a value survives
an encode/decode cycle byte for byte.
"""
from __future__ import annotations

import math

import numpy as np

Quat = tuple[float, float, float, float]

UNIT_TOL = 1e-9


def norm(q) -> float:
    w, x, y, z = q
    return math.sqrt(w * w + x * x + y * y + z * z)


def normalize(q) -> Quat:
    n = norm(q)
    if not math.isfinite(n) or n == 0.0:
        raise ValueError(f"cannot normalize quaternion {q!r}")
    w, x, y, z = q
    return (w / n, x / n, y / n, z / n)


def canonicalize(q) -> Quat:
    """Flip sign so the first nonzero component is positive.

    q and -q describe the same rotation; picking one representative makes
    quaternion comparison and re-encoding deterministic.
    """
    for c in q:
        if c != 0.0:
            if c < 0.0:
                return (-q[0], -q[1], -q[2], -q[3])
            break
    return (float(q[0]), float(q[1]), float(q[2]), float(q[3]))


def to_matrix(q) -> np.ndarray:
    """Expand a unit quaternion to a rotation matrix."""
    w, x, y, z = normalize(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ],
        dtype=float,
    )


def from_matrix(R) -> Quat:
    """Recover the canonical unit quaternion from a rotation matrix.

    Uses the max-diagonal branch method, which is numerically stable for
    all rotations including those near 180 degrees.
    """
    R = np.asarray(R, dtype=float)
    t = float(np.trace(R))
    if t > 0.0:
        s = math.sqrt(t + 1.0) * 2.0
        w = 0.25 * s
        x = (R[2, 1] - R[1, 2]) / s
        y = (R[0, 2] - R[2, 0]) / s
        z = (R[1, 0] - R[0, 1]) / s
    elif R[0, 0] >= R[1, 1] and R[0, 0] >= R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        w = (R[2, 1] - R[1, 2]) / s
        x = 0.25 * s
        y = (R[0, 1] + R[1, 0]) / s
        z = (R[0, 2] + R[2, 0]) / s
    elif R[1, 1] >= R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        w = (R[0, 2] - R[2, 0]) / s
        x = (R[0, 1] + R[1, 0]) / s
        y = 0.25 * s
        z = (R[1, 2] + R[2, 1]) / s
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        w = (R[1, 0] - R[0, 1]) / s
        x = (R[0, 2] + R[2, 0]) / s
        y = (R[1, 2] + R[2, 1]) / s
        z = 0.25 * s
    return canonicalize(normalize((w, x, y, z)))


def rotation_angle_between(Ra, Rb) -> float:
    """Geodesic angle in radians between two rotation matrices."""
    c = (float(np.trace(np.asarray(Ra) @ np.asarray(Rb).T)) - 1.0) / 2.0
    return math.acos(max(-1.0, min(1.0, c)))
