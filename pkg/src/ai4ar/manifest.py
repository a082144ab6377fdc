"""Frame-sequence manifest: the on-disk contract between the fixture
generator, the replay simulator, the mock workers, and the evaluators.

A manifest directory holds manifest.json plus the frame images (and
optionally masks and an object model) it references by relative path.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from . import pnm
from .errors import AI4ARError
from .protocol import (CameraIntrinsics, Detection, Frame, HeadPose,
                       OCRReading, PixelFormat, Pose6D)


class ManifestError(AI4ARError):
    pass


@dataclass(frozen=True)
class FrameRecord:
    frame_id: int
    timestamp_ns: int
    image: str
    mask: str | None = None
    scene: str | None = None
    head_pose: HeadPose | None = None
    gt_detections: tuple[Detection, ...] = ()
    gt_poses: tuple[Pose6D, ...] = ()
    gt_readings: tuple[OCRReading, ...] = ()

    def to_dict(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "timestamp_ns": self.timestamp_ns,
            "image": self.image,
            "mask": self.mask,
            "scene": self.scene,
            "head_pose": None if self.head_pose is None else self.head_pose.to_dict(),
            "gt": {
                "detections": [d.to_dict() for d in self.gt_detections],
                "poses": [p.to_dict() for p in self.gt_poses],
                "readings": [r.to_dict() for r in self.gt_readings],
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FrameRecord":
        gt = d.get("gt", {})
        hp = d.get("head_pose")
        return cls(
            frame_id=int(d["frame_id"]),
            timestamp_ns=int(d["timestamp_ns"]),
            image=str(d["image"]),
            mask=d.get("mask"),
            scene=d.get("scene"),
            head_pose=None if hp is None else HeadPose.from_dict(hp),
            gt_detections=tuple(Detection.from_dict(x)
                                for x in gt.get("detections", [])),
            gt_poses=tuple(Pose6D.from_dict(x) for x in gt.get("poses", [])),
            gt_readings=tuple(OCRReading.from_dict(x)
                              for x in gt.get("readings", [])),
        )


@dataclass(frozen=True)
class SequenceManifest:
    root: Path
    intrinsics: CameraIntrinsics
    frames: tuple[FrameRecord, ...]
    classes: tuple[str, ...] = ()
    fps: float = 30.0
    model: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))
        object.__setattr__(self, "frames", tuple(self.frames))
        object.__setattr__(self, "classes", tuple(self.classes))
        last = -1
        for rec in self.frames:
            if rec.frame_id <= last:
                raise ManifestError(f"frame ids must be strictly increasing; "
                                    f"{rec.frame_id} follows {last}")
            last = rec.frame_id

    def to_dict(self) -> dict:
        return {"version": 1,
                "fps": self.fps,
                "intrinsics": self.intrinsics.to_dict(),
                "classes": list(self.classes),
                "model": self.model,
                "frames": [f.to_dict() for f in self.frames]}

    def save(self, path: str | Path | None = None) -> Path:
        path = Path(path) if path else self.root / "manifest.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True)
                        + "\n")
        return path

    @classmethod
    def load(cls, path: str | Path, check_files: bool = True) -> "SequenceManifest":
        """Load and validate; referenced files must exist so problems
        surface before any frame is sent anywhere."""
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        if not path.is_file():
            raise ManifestError(f"manifest {path} not found")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ManifestError(f"{path}: invalid JSON: {e}") from e
        root = path.parent
        try:
            manifest = cls(
                root=root,
                intrinsics=CameraIntrinsics.from_dict(data["intrinsics"]),
                frames=tuple(FrameRecord.from_dict(f) for f in data["frames"]),
                classes=tuple(data.get("classes", [])),
                fps=float(data.get("fps", 30.0)),
                model=data.get("model"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ManifestError(f"{path}: {type(e).__name__}: {e}") from e
        if check_files:
            for rec in manifest.frames:
                for rel in (rec.image, rec.mask):
                    if rel is not None and not (root / rel).is_file():
                        raise ManifestError(
                            f"frame {rec.frame_id}: file {rel} missing "
                            f"under {root}")
            if manifest.model and not (root / manifest.model).is_file():
                raise ManifestError(f"model file {manifest.model} missing "
                                    f"under {root}")
        return manifest

    def gt_by_frame_id(self) -> dict[int, FrameRecord]:
        return {rec.frame_id: rec for rec in self.frames}

    def load_frame_message(self, rec: FrameRecord) -> Frame:
        """Read the frame image and wrap it as a wire Frame."""
        arr = pnm.read_pnm(self.root / rec.image)
        fmt = PixelFormat.GRAY8 if arr.ndim == 2 else PixelFormat.RGB8
        h, w = arr.shape[:2]
        if (w, h) != (self.intrinsics.width, self.intrinsics.height):
            raise ManifestError(
                f"frame {rec.frame_id}: image is {w}x{h}, intrinsics say "
                f"{self.intrinsics.width}x{self.intrinsics.height}")
        return Frame(frame_id=rec.frame_id, timestamp_ns=rec.timestamp_ns,
                     intrinsics=self.intrinsics, pixel_format=fmt,
                     pixels=arr.tobytes(), head_pose=rec.head_pose)
