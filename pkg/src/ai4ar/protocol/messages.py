"""Wire messages carried inside envelopes.

Each message serializes its fields into the envelope's JSON header; only
Frame uses the binary blob (raw pixels).  `to_header` returns a plain dict
of JSON-safe values, `from_header` rebuilds the message and re-runs all
type invariants, so a decoded message is as trustworthy as a locally
constructed one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from ..errors import InvariantError
from .types import (AnnotationStatus, BBox, CameraIntrinsics, Detection,
                    HeadPose, OCRReading, PixelFormat, Pose6D, _require)


class WorkerKind(str, Enum):
    DETECTION = "detection"
    POSE = "pose"
    OCR = "ocr"


@dataclass(frozen=True)
class Frame:
    """One camera frame; pixels ride in the envelope blob."""

    frame_id: int
    timestamp_ns: int
    intrinsics: CameraIntrinsics
    pixel_format: PixelFormat
    pixels: bytes
    head_pose: HeadPose | None = None

    def __post_init__(self):
        object.__setattr__(self, "frame_id", int(self.frame_id))
        object.__setattr__(self, "timestamp_ns", int(self.timestamp_ns))
        object.__setattr__(self, "pixel_format", PixelFormat(self.pixel_format))
        object.__setattr__(self, "pixels", bytes(self.pixels))
        _require(self.frame_id >= 0, f"frame_id must be >= 0, got {self.frame_id}")
        expected = (self.intrinsics.width * self.intrinsics.height
                    * self.pixel_format.channels)
        _require(len(self.pixels) == expected,
                 f"pixel buffer holds {len(self.pixels)} bytes, expected {expected} "
                 f"for {self.intrinsics.width}x{self.intrinsics.height} "
                 f"{self.pixel_format.value}")

    def pixel_array(self) -> np.ndarray:
        """View the pixel buffer as (H, W) or (H, W, 3) uint8."""
        h, w = self.intrinsics.height, self.intrinsics.width
        arr = np.frombuffer(self.pixels, dtype=np.uint8)
        if self.pixel_format is PixelFormat.GRAY8:
            return arr.reshape(h, w)
        return arr.reshape(h, w, 3)

    def to_header(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "timestamp_ns": self.timestamp_ns,
            "intrinsics": self.intrinsics.to_dict(),
            "pixel_format": self.pixel_format.value,
            "head_pose": None if self.head_pose is None else self.head_pose.to_dict(),
        }

    def wire_blob(self) -> bytes:
        return self.pixels

    @classmethod
    def from_header(cls, d: Mapping, blob: bytes) -> "Frame":
        hp = d["head_pose"]
        return cls(frame_id=d["frame_id"], timestamp_ns=d["timestamp_ns"],
                   intrinsics=CameraIntrinsics.from_dict(d["intrinsics"]),
                   pixel_format=PixelFormat(d["pixel_format"]), pixels=blob,
                   head_pose=None if hp is None else HeadPose.from_dict(hp))


def _tuple_of(seq: Sequence, kind, what: str) -> tuple:
    out = tuple(seq)
    for item in out:
        _require(isinstance(item, kind), f"{what} entries must be {kind.__name__}")
    return out


@dataclass(frozen=True)
class AnnotationSet:
    """Merged per-frame results the gateway returns to the headset."""

    frame_id: int
    detections: tuple[Detection, ...] = ()
    poses: tuple[Pose6D, ...] = ()
    readings: tuple[OCRReading, ...] = ()
    worker_timings: tuple[tuple[str, int], ...] = ()
    status: AnnotationStatus = AnnotationStatus.COMPLETE

    def __post_init__(self):
        object.__setattr__(self, "frame_id", int(self.frame_id))
        _require(self.frame_id >= 0, f"frame_id must be >= 0, got {self.frame_id}")
        object.__setattr__(self, "detections",
                           _tuple_of(self.detections, Detection, "detections"))
        object.__setattr__(self, "poses", _tuple_of(self.poses, Pose6D, "poses"))
        object.__setattr__(self, "readings",
                           _tuple_of(self.readings, OCRReading, "readings"))
        timings = tuple((str(w), int(ns)) for w, ns in self.worker_timings)
        for _, ns in timings:
            _require(ns >= 0, "worker timing must be a nonnegative latency in ns")
        object.__setattr__(self, "worker_timings", timings)
        object.__setattr__(self, "status", AnnotationStatus(self.status))

    def to_header(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "detections": [d.to_dict() for d in self.detections],
            "poses": [p.to_dict() for p in self.poses],
            "readings": [r.to_dict() for r in self.readings],
            "worker_timings": [[w, ns] for w, ns in self.worker_timings],
            "status": self.status.value,
        }

    def wire_blob(self) -> bytes:
        return b""

    @classmethod
    def from_header(cls, d: Mapping, blob: bytes) -> "AnnotationSet":
        return cls(frame_id=d["frame_id"],
                   detections=tuple(Detection.from_dict(x) for x in d["detections"]),
                   poses=tuple(Pose6D.from_dict(x) for x in d["poses"]),
                   readings=tuple(OCRReading.from_dict(x) for x in d["readings"]),
                   worker_timings=tuple((w, ns) for w, ns in d["worker_timings"]),
                   status=AnnotationStatus(d["status"]))


@dataclass(frozen=True)
class WorkerRegister:
    """Worker hello; the gateway acks by echoing it with a session_id set."""

    worker_id: str
    kind: WorkerKind
    deadline_ms: int
    session_id: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "worker_id", str(self.worker_id))
        object.__setattr__(self, "kind", WorkerKind(self.kind))
        object.__setattr__(self, "deadline_ms", int(self.deadline_ms))
        _require(len(self.worker_id) > 0, "worker_id must be nonempty")
        _require(self.deadline_ms > 0,
                 f"deadline_ms must be positive, got {self.deadline_ms}")

    def to_header(self) -> dict:
        return {"worker_id": self.worker_id, "kind": self.kind.value,
                "deadline_ms": self.deadline_ms, "session_id": self.session_id}

    def wire_blob(self) -> bytes:
        return b""

    @classmethod
    def from_header(cls, d: Mapping, blob: bytes) -> "WorkerRegister":
        return cls(worker_id=d["worker_id"], kind=WorkerKind(d["kind"]),
                   deadline_ms=d["deadline_ms"], session_id=d["session_id"])


@dataclass(frozen=True)
class WorkerResult:
    """One worker's answer for one frame."""

    worker_id: str
    frame_id: int
    detections: tuple[Detection, ...] = ()
    poses: tuple[Pose6D, ...] = ()
    readings: tuple[OCRReading, ...] = ()
    unknown_frame: bool = False

    def __post_init__(self):
        object.__setattr__(self, "worker_id", str(self.worker_id))
        object.__setattr__(self, "frame_id", int(self.frame_id))
        _require(len(self.worker_id) > 0, "worker_id must be nonempty")
        _require(self.frame_id >= 0, f"frame_id must be >= 0, got {self.frame_id}")
        object.__setattr__(self, "detections",
                           _tuple_of(self.detections, Detection, "detections"))
        object.__setattr__(self, "poses", _tuple_of(self.poses, Pose6D, "poses"))
        object.__setattr__(self, "readings",
                           _tuple_of(self.readings, OCRReading, "readings"))
        object.__setattr__(self, "unknown_frame", bool(self.unknown_frame))

    def to_header(self) -> dict:
        return {"worker_id": self.worker_id, "frame_id": self.frame_id,
                "detections": [d.to_dict() for d in self.detections],
                "poses": [p.to_dict() for p in self.poses],
                "readings": [r.to_dict() for r in self.readings],
                "unknown_frame": self.unknown_frame}

    def wire_blob(self) -> bytes:
        return b""

    @classmethod
    def from_header(cls, d: Mapping, blob: bytes) -> "WorkerResult":
        return cls(worker_id=d["worker_id"], frame_id=d["frame_id"],
                   detections=tuple(Detection.from_dict(x) for x in d["detections"]),
                   poses=tuple(Pose6D.from_dict(x) for x in d["poses"]),
                   readings=tuple(OCRReading.from_dict(x) for x in d["readings"]),
                   unknown_frame=d["unknown_frame"])


@dataclass(frozen=True)
class Heartbeat:
    sender_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "sender_id", str(self.sender_id))

    def to_header(self) -> dict:
        return {"sender_id": self.sender_id}

    def wire_blob(self) -> bytes:
        return b""

    @classmethod
    def from_header(cls, d: Mapping, blob: bytes) -> "Heartbeat":
        return cls(sender_id=d["sender_id"])


@dataclass(frozen=True)
class ErrorMessage:
    code: str
    message: str = ""

    def __post_init__(self):
        object.__setattr__(self, "code", str(self.code))
        object.__setattr__(self, "message", str(self.message))
        _require(len(self.code) > 0, "error code must be nonempty")

    def to_header(self) -> dict:
        return {"code": self.code, "message": self.message}

    def wire_blob(self) -> bytes:
        return b""

    @classmethod
    def from_header(cls, d: Mapping, blob: bytes) -> "ErrorMessage":
        return cls(code=d["code"], message=d["message"])


@dataclass(frozen=True)
class StatsRequest:
    def to_header(self) -> dict:
        return {}

    def wire_blob(self) -> bytes:
        return b""

    @classmethod
    def from_header(cls, d: Mapping, blob: bytes) -> "StatsRequest":
        return cls()


@dataclass(frozen=True)
class StatsReport:
    """Gateway counters as a JSON-safe mapping (see gateway.GatewayStats)."""

    stats: dict = field(default_factory=dict)

    def to_header(self) -> dict:
        return {"stats": self.stats}

    def wire_blob(self) -> bytes:
        return b""

    @classmethod
    def from_header(cls, d: Mapping, blob: bytes) -> "StatsReport":
        stats = d["stats"]
        _require(isinstance(stats, dict), "stats must be a JSON object")
        return cls(stats=stats)
