"""Value types shared across the pipeline.

Everything here is an immutable dataclass that validates its invariants on
construction, so any instance that exists is safe to encode, route, or
evaluate.  Float fields are coerced to float and int fields to int so that
a value encodes to identical bytes no matter how it was built.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping

import numpy as np

from ..errors import InvariantError
from . import quaternions


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise InvariantError(msg)


def _fin(v: Any, name: str) -> float:
    f = float(v)
    _require(math.isfinite(f), f"{name} must be finite, got {v!r}")
    return f


class PixelFormat(str, Enum):
    GRAY8 = "GRAY8"
    RGB8 = "RGB8"

    @property
    def channels(self) -> int:
        return 1 if self is PixelFormat.GRAY8 else 3


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera parameters in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        object.__setattr__(self, "fx", _fin(self.fx, "fx"))
        object.__setattr__(self, "fy", _fin(self.fy, "fy"))
        object.__setattr__(self, "cx", _fin(self.cx, "cx"))
        object.__setattr__(self, "cy", _fin(self.cy, "cy"))
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        _require(self.fx > 0 and self.fy > 0,
                 f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        _require(self.width > 0 and self.height > 0,
                 f"image size must be positive, got {self.width}x{self.height}")
        _require(0 <= self.cx < self.width, f"cx={self.cx} outside [0, {self.width})")
        _require(0 <= self.cy < self.height, f"cy={self.cy} outside [0, {self.height})")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}

    @classmethod
    def from_dict(cls, d: Mapping) -> "CameraIntrinsics":
        return cls(fx=d["fx"], fy=d["fy"], cx=d["cx"], cy=d["cy"],
                   width=d["width"], height=d["height"])


@dataclass(frozen=True)
class HeadPose:
    """Headset pose: unit quaternion (w, x, y, z) plus translation in meters."""

    quaternion: tuple[float, float, float, float]
    translation: tuple[float, float, float]

    def __post_init__(self):
        q = tuple(_fin(v, "quaternion component") for v in self.quaternion)
        _require(len(q) == 4, f"quaternion needs 4 components, got {len(q)}")
        _require(abs(quaternions.norm(q) - 1.0) <= quaternions.UNIT_TOL,
                 f"quaternion norm {quaternions.norm(q)!r} not within 1e-9 of 1")
        t = tuple(_fin(v, "translation component") for v in self.translation)
        _require(len(t) == 3, f"translation needs 3 components, got {len(t)}")
        object.__setattr__(self, "quaternion", q)
        object.__setattr__(self, "translation", t)

    def to_dict(self) -> dict:
        return {"quaternion": list(self.quaternion), "translation": list(self.translation)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "HeadPose":
        return cls(quaternion=tuple(d["quaternion"]), translation=tuple(d["translation"]))


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box, top-left corner plus extent, in pixel units."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        object.__setattr__(self, "x", _fin(self.x, "x"))
        object.__setattr__(self, "y", _fin(self.y, "y"))
        object.__setattr__(self, "w", _fin(self.w, "w"))
        object.__setattr__(self, "h", _fin(self.h, "h"))
        _require(self.w > 0 and self.h > 0,
                 f"box extent must be positive, got w={self.w} h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]

    @classmethod
    def from_list(cls, v) -> "BBox":
        x, y, w, h = v
        return cls(x, y, w, h)


@dataclass(frozen=True)
class Detection:
    bbox: BBox
    class_id: int
    class_name: str
    confidence: float

    def __post_init__(self):
        _require(isinstance(self.bbox, BBox), "bbox must be a BBox")
        object.__setattr__(self, "class_id", int(self.class_id))
        object.__setattr__(self, "class_name", str(self.class_name))
        object.__setattr__(self, "confidence", _fin(self.confidence, "confidence"))
        _require(0.0 <= self.confidence <= 1.0,
                 f"confidence {self.confidence} outside [0, 1]")

    def to_dict(self) -> dict:
        return {"bbox": self.bbox.to_list(), "class_id": self.class_id,
                "class_name": self.class_name, "confidence": self.confidence}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Detection":
        return cls(bbox=BBox.from_list(d["bbox"]), class_id=d["class_id"],
                   class_name=d["class_name"], confidence=d["confidence"])


@dataclass(frozen=True)
class Pose6D:
    """Rigid object pose: canonical unit quaternion plus translation in mm.

    The quaternion is the stored representation (it is what crosses the
    wire); the equivalent rotation matrix is available as `.rotation`.
    """

    quaternion: tuple[float, float, float, float]
    translation: tuple[float, float, float]
    object_id: int = 0

    def __post_init__(self):
        q = tuple(_fin(v, "quaternion component") for v in self.quaternion)
        _require(len(q) == 4, f"quaternion needs 4 components, got {len(q)}")
        _require(abs(quaternions.norm(q) - 1.0) <= quaternions.UNIT_TOL,
                 f"quaternion norm {quaternions.norm(q)!r} not within 1e-9 of 1")
        q = quaternions.canonicalize(q)
        t = tuple(_fin(v, "translation component") for v in self.translation)
        _require(len(t) == 3, f"translation needs 3 components, got {len(t)}")
        object.__setattr__(self, "quaternion", q)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "object_id", int(self.object_id))

    @property
    def rotation(self) -> np.ndarray:
        """3x3 rotation matrix (orthonormal, det +1)."""
        return quaternions.to_matrix(self.quaternion)

    @property
    def translation_vec(self) -> np.ndarray:
        return np.array(self.translation)

    @classmethod
    def from_matrix(cls, R, t, object_id: int = 0) -> "Pose6D":
        R = np.asarray(R, dtype=float)
        _require(R.shape == (3, 3), f"rotation matrix must be 3x3, got {R.shape}")
        err = float(np.abs(R.T @ R - np.eye(3)).max())
        _require(err <= 1e-6, f"matrix not orthonormal (max |R'R - I| = {err:.3g})")
        _require(abs(float(np.linalg.det(R)) - 1.0) <= 1e-6,
                 f"matrix determinant {np.linalg.det(R):.6f} is not +1")
        t = np.asarray(t, dtype=float).reshape(3)
        return cls(quaternion=quaternions.from_matrix(R),
                   translation=(float(t[0]), float(t[1]), float(t[2])),
                   object_id=object_id)

    def to_dict(self) -> dict:
        return {"quaternion": list(self.quaternion),
                "translation_mm": list(self.translation),
                "object_id": self.object_id}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Pose6D":
        return cls(quaternion=tuple(d["quaternion"]),
                   translation=tuple(d["translation_mm"]),
                   object_id=d.get("object_id", 0))


@dataclass(frozen=True)
class OCRReading:
    bbox: BBox
    text: str
    confidence: float

    def __post_init__(self):
        _require(isinstance(self.bbox, BBox), "bbox must be a BBox")
        object.__setattr__(self, "text", str(self.text))
        object.__setattr__(self, "confidence", _fin(self.confidence, "confidence"))
        _require(0.0 <= self.confidence <= 1.0,
                 f"confidence {self.confidence} outside [0, 1]")
        _require(self.confidence == 0.0 or len(self.text) > 0,
                 "reading with nonzero confidence must carry text")

    def to_dict(self) -> dict:
        return {"bbox": self.bbox.to_list(), "text": self.text,
                "confidence": self.confidence}

    @classmethod
    def from_dict(cls, d: Mapping) -> "OCRReading":
        return cls(bbox=BBox.from_list(d["bbox"]), text=d["text"],
                   confidence=d["confidence"])


class AnnotationStatus(str, Enum):
    COMPLETE = "complete"
    PARTIAL = "partial"
    FAILED = "failed"
