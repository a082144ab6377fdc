"""Mask-to-label core: tight boxes from binary masks and YOLO-format
label records.

A mask is an 8-bit grayscale image where any nonzero pixel belongs to
the object.  The tight box spans the extreme nonzero rows and columns
inclusively, so a single nonzero pixel yields a 1x1 box.  Label lines
are `class_id cx cy w h` with the geometry normalized to [0, 1] and
serialized at six decimals.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from ..errors import AI4ARError
from ..protocol import BBox

# Serialized labels carry 6 decimals, so a value parsed back can sit up
# to ~7.5e-7 past the unit-square edge even though the source geometry
# was exactly inside.  Containment is therefore checked with
# quantization-aware slack rather than exact tolerance.
EDGE_TOL = 2e-6


class LabelError(AI4ARError):
    pass


@dataclass(frozen=True)
class MaskImage:
    """8-bit single-channel mask; nonzero means object."""

    width: int
    height: int
    data: bytes

    def __post_init__(self):
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "data", bytes(self.data))
        if self.width < 0 or self.height < 0:
            raise LabelError(f"bad mask shape {self.width}x{self.height}")
        if len(self.data) != self.width * self.height:
            raise LabelError(f"mask data holds {len(self.data)} bytes, "
                             f"expected {self.width * self.height}")

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "MaskImage":
        a = np.asarray(arr)
        if a.ndim != 2:
            raise LabelError(f"mask array must be 2-D, got shape {a.shape}")
        return cls(width=a.shape[1], height=a.shape[0],
                   data=a.astype(np.uint8).tobytes())

    def to_array(self) -> np.ndarray:
        return np.frombuffer(self.data, dtype=np.uint8).reshape(
            self.height, self.width)


def mask_to_bbox(mask: MaskImage) -> Optional[BBox]:
    """Tight integer-coordinate box over the nonzero pixels, or None for
    an all-zero mask."""
    if mask.width == 0 or mask.height == 0:
        return None
    arr = mask.to_array()
    cols = arr.any(axis=0)
    if not cols.any():
        return None
    rows = arr.any(axis=1)
    xs = np.flatnonzero(cols)
    ys = np.flatnonzero(rows)
    x0, x1 = int(xs[0]), int(xs[-1])
    y0, y1 = int(ys[0]), int(ys[-1])
    return BBox(x=float(x0), y=float(y0),
                w=float(x1 - x0 + 1), h=float(y1 - y0 + 1))


@dataclass(frozen=True)
class LabelRecord:
    """One YOLO label line: class id plus normalized center/extent."""

    class_id: int
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        object.__setattr__(self, "class_id", int(self.class_id))
        for name in ("cx", "cy", "w", "h"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.class_id < 0:
            raise LabelError(f"class_id {self.class_id} negative")
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise LabelError(f"center ({self.cx}, {self.cy}) outside [0, 1]")
        if not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise LabelError(f"extent ({self.w}, {self.h}) outside (0, 1]")
        for lo, hi in ((self.cx - self.w / 2, self.cx + self.w / 2),
                       (self.cy - self.h / 2, self.cy + self.h / 2)):
            if lo < -EDGE_TOL or hi > 1.0 + EDGE_TOL:
                raise LabelError(
                    f"box [{lo}, {hi}] leaves the unit square")

    def to_line(self) -> str:
        return (f"{self.class_id} {self.cx:.6f} {self.cy:.6f} "
                f"{self.w:.6f} {self.h:.6f}")

    @classmethod
    def from_line(cls, line: str) -> "LabelRecord":
        parts = line.split()
        if len(parts) != 5:
            raise LabelError(f"label line needs 5 fields, got {len(parts)}: "
                             f"{line!r}")
        try:
            return cls(class_id=int(parts[0]), cx=float(parts[1]),
                       cy=float(parts[2]), w=float(parts[3]),
                       h=float(parts[4]))
        except ValueError as e:
            raise LabelError(f"bad label line {line!r}: {e}") from e

    def to_pixel_bbox(self, width: int, height: int) -> BBox:
        """Denormalize back to pixel units."""
        w = self.w * width
        h = self.h * height
        return BBox(x=self.cx * width - w / 2.0, y=self.cy * height - h / 2.0,
                    w=w, h=h)


def bbox_to_label(bbox: BBox, class_id: int, width: int, height: int) -> LabelRecord:
    """Normalize a pixel box into a label record."""
    if width <= 0 or height <= 0:
        raise LabelError(f"bad image size {width}x{height}")
    if bbox.x < 0 or bbox.y < 0 or bbox.x2 > width or bbox.y2 > height:
        raise LabelError(f"box {bbox.to_list()} outside {width}x{height}")
    return LabelRecord(class_id=class_id,
                       cx=(bbox.x + bbox.w / 2.0) / width,
                       cy=(bbox.y + bbox.h / 2.0) / height,
                       w=bbox.w / width,
                       h=bbox.h / height)


def sequence_to_labels(frames: Mapping[str, Mapping[int, MaskImage]],
                       class_map: Mapping[int, int],
                       width: int, height: int) -> dict[str, list[LabelRecord]]:
    """Convert per-frame, per-object masks into label records.

    frames maps frame key -> {object_id: mask}; class_map maps object id
    to class id.  Objects within a frame are emitted in object-id order.
    Empty masks contribute no record, so a frame can legitimately map to
    an empty list.
    """
    out: dict[str, list[LabelRecord]] = {}
    for frame_key, objects in frames.items():
        records = []
        for object_id in sorted(objects):
            mask = objects[object_id]
            if (mask.width, mask.height) != (width, height):
                raise LabelError(
                    f"frame {frame_key!r} object {object_id}: mask is "
                    f"{mask.width}x{mask.height}, dataset is {width}x{height}")
            if object_id not in class_map:
                raise LabelError(f"frame {frame_key!r}: object {object_id} "
                                 f"missing from the class map")
            bbox = mask_to_bbox(mask)
            if bbox is None:
                continue
            records.append(bbox_to_label(bbox, class_map[object_id],
                                         width, height))
        out[frame_key] = records
    return out


def format_label_file(records: Sequence[LabelRecord]) -> str:
    """Label file body: one LF-terminated line per record."""
    return "".join(r.to_line() + "\n" for r in records)


def parse_label_file(text: str) -> list[LabelRecord]:
    return [LabelRecord.from_line(line)
            for line in text.splitlines() if line.strip()]
