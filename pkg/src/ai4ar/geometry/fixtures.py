"""Synthetic fixture scenes: a flat-shaded convex object over a noise
background, an optional seven-segment readout, per-frame masks, and a
replay-ready manifest with full ground truth.

Generation is deterministic: the same scene spec and seed produce
byte-identical images and an identical manifest.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .. import pnm
from ..errors import AI4ARError
from ..manifest import FrameRecord, SequenceManifest
from ..metrics.pose import ObjectModel, max_pairwise_distance
from ..protocol import (BBox, CameraIntrinsics, Detection, OCRReading,
                        Pose6D)
from ..samal import mask_to_bbox, MaskImage
from .camera import project_rt
from .sevenseg import render_seven_segment


class FixtureError(AI4ARError):
    pass


def _rot_x(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=float)


def _rot_y(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=float)


@dataclass(frozen=True)
class SceneSpec:
    """Declarative description of a fixture scene; every field has a
    usable default so `SceneSpec()` already renders."""

    name: str = "scene"
    frames: int = 30
    fps: float = 30.0
    width: int = 640
    height: int = 360
    fx: float = 600.0
    fy: float = 600.0
    cx: float | None = None   # None -> image center
    cy: float | None = None
    object_size_mm: tuple[float, float, float] = (120.0, 80.0, 60.0)
    object_points_mm: tuple | None = None  # overrides the box when given
    class_name: str = "pdt"
    object_id: int = 1
    object_gray: int = 200
    trajectory: str = "static"  # static | translate | orbit
    start_mm: tuple[float, float, float] = (0.0, 0.0, 700.0)
    velocity_mm: tuple[float, float, float] = (0.0, 0.0, 0.0)
    orbit_step_deg: float = 3.0
    tilt_deg: tuple[float, float] = (20.0, 35.0)
    display: bool = True
    display_region: tuple[int, int, int, int] = (8, 8, 150, 36)
    display_value_start: float = 12.3
    display_value_step: float = 0.1
    display_decimals: int = 1
    noise_low: int = 20
    noise_high: int = 90

    def __post_init__(self):
        if self.frames < 1:
            raise FixtureError(f"frames {self.frames} < 1")
        if self.fps <= 0:
            raise FixtureError(f"fps {self.fps} <= 0")
        if self.trajectory not in ("static", "translate", "orbit"):
            raise FixtureError(f"unknown trajectory {self.trajectory!r}")
        if not 0 <= self.noise_low <= self.noise_high <= 255:
            raise FixtureError(f"noise range [{self.noise_low}, "
                               f"{self.noise_high}] invalid")

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(
            fx=self.fx, fy=self.fy,
            cx=self.width / 2.0 if self.cx is None else self.cx,
            cy=self.height / 2.0 if self.cy is None else self.cy,
            width=self.width, height=self.height)

    def model_points(self) -> np.ndarray:
        if self.object_points_mm is not None:
            return np.asarray(self.object_points_mm, dtype=float)
        sx, sy, sz = self.object_size_mm
        return np.array([[dx * sx / 2, dy * sy / 2, dz * sz / 2]
                         for dx in (-1, 1) for dy in (-1, 1) for dz in (-1, 1)],
                        dtype=float)

    def pose_at(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        base = _rot_x(self.tilt_deg[0]) @ _rot_y(self.tilt_deg[1])
        t = np.asarray(self.start_mm, dtype=float)
        if self.trajectory == "translate":
            t = t + i * np.asarray(self.velocity_mm, dtype=float)
        elif self.trajectory == "orbit":
            base = base @ _rot_y(i * self.orbit_step_deg)
        return base, t

    _GROUPS = {
        "image": {"width": "width", "height": "height"},
        "intrinsics": {"fx": "fx", "fy": "fy", "cx": "cx", "cy": "cy"},
        "object": {"size_mm": "object_size_mm", "points_mm": "object_points_mm",
                   "class_name": "class_name", "object_id": "object_id",
                   "gray": "object_gray"},
        "trajectory": {"kind": "trajectory", "start_mm": "start_mm",
                       "velocity_mm": "velocity_mm",
                       "orbit_step_deg": "orbit_step_deg",
                       "tilt_deg": "tilt_deg"},
        "display": {"enabled": "display", "region": "display_region",
                    "value_start": "display_value_start",
                    "value_step": "display_value_step",
                    "decimals": "display_decimals"},
        "background": {"noise_low": "noise_low", "noise_high": "noise_high"},
    }

    @classmethod
    def from_dict(cls, data: dict) -> "SceneSpec":
        kwargs = {}
        for key, value in data.items():
            if key in ("name", "frames", "fps"):
                kwargs[key] = value
            elif key in cls._GROUPS:
                for sub, subval in value.items():
                    target = cls._GROUPS[key].get(sub)
                    if target is None:
                        raise FixtureError(f"unknown scene key {key}.{sub}")
                    if isinstance(subval, list):
                        subval = tuple(subval)
                    kwargs[target] = subval
            else:
                raise FixtureError(f"unknown scene key {key}")
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "SceneSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fill_convex_polygon(height: int, width: int,
                        verts: np.ndarray) -> np.ndarray:
    """Rasterize a convex polygon: a pixel is filled when its center lies
    inside (or on) the hull."""
    v = np.asarray(verts, dtype=float)
    # Consistent orientation so the half-plane test has one sign.
    area2 = float(np.sum(v[:, 0] * np.roll(v[:, 1], -1)
                         - np.roll(v[:, 0], -1) * v[:, 1]))
    if area2 < 0:
        v = v[::-1]
    mask = np.zeros((height, width), dtype=bool)
    x0 = max(0, int(math.floor(v[:, 0].min())))
    x1 = min(width - 1, int(math.ceil(v[:, 0].max())))
    y0 = max(0, int(math.floor(v[:, 1].min())))
    y1 = min(height - 1, int(math.ceil(v[:, 1].max())))
    if x1 < x0 or y1 < y0:
        return mask
    xs = np.arange(x0, x1 + 1) + 0.5
    ys = np.arange(y0, y1 + 1) + 0.5
    X, Y = np.meshgrid(xs, ys)
    inside = np.ones(X.shape, dtype=bool)
    for i in range(len(v)):
        ax, ay = v[i]
        bx, by = v[(i + 1) % len(v)]
        cross = (bx - ax) * (Y - ay) - (by - ay) * (X - ax)
        inside &= cross >= 0.0
    mask[y0:y1 + 1, x0:x1 + 1] = inside
    return mask


@dataclass(frozen=True)
class FixtureScene:
    root: Path
    manifest: SequenceManifest
    model: ObjectModel


def gen_fixture_scene(spec: SceneSpec, seed: int,
                      out_dir: str | Path) -> FixtureScene:
    """Render the scene to out_dir and return the written artifacts.

    Every emitted ground-truth bbox is computed from the emitted mask, so
    the two agree by construction.
    """
    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(exist_ok=True)
    intr = spec.intrinsics()
    points = spec.model_points()
    rng = np.random.default_rng(seed)

    records = []
    for i in range(spec.frames):
        R, t = spec.pose_at(i)
        try:
            uv = project_rt(points, R, t, intr)
        except AI4ARError as e:
            raise FixtureError(f"frame {i}: {e}") from e
        try:
            hull = ConvexHull(uv)
        except QhullError as e:
            raise FixtureError(f"frame {i}: degenerate silhouette: {e}") from e
        silhouette = fill_convex_polygon(spec.height, spec.width,
                                         uv[hull.vertices])
        if not silhouette.any():
            raise FixtureError(f"frame {i}: object fell entirely outside "
                               f"the {spec.width}x{spec.height} view")

        image = rng.integers(spec.noise_low, spec.noise_high + 1,
                             size=(spec.height, spec.width),
                             dtype=np.uint8)
        image[silhouette] = spec.object_gray

        readings = ()
        if spec.display:
            dx, dy, dw, dh = spec.display_region
            value = spec.display_value_start + i * spec.display_value_step
            text = f"{value:.{spec.display_decimals}f}"
            glyphs = render_seven_segment(
                text, cell_size=(max(3, dw // max(1, len(text))), dh))
            garr = glyphs.to_array()
            gh, gw = garr.shape
            if dy + gh > spec.height or dx + gw > spec.width:
                raise FixtureError(f"frame {i}: display region "
                                   f"{spec.display_region} leaves the image")
            region = image[dy:dy + gh, dx:dx + gw]
            region[:] = 5
            region[garr > 0] = 250
            readings = (OCRReading(bbox=BBox(float(dx), float(dy),
                                             float(gw), float(gh)),
                                   text=text, confidence=1.0),)

        stem = f"{spec.name}_{i:06d}"
        image_rel = f"frames/{stem}.pgm"
        mask_rel = f"masks/{stem}_{spec.object_id}.pgm"
        pnm.write_pnm(out / image_rel, image)
        mask_u8 = silhouette.astype(np.uint8) * 255
        pnm.write_pnm(out / mask_rel, mask_u8)

        bbox = mask_to_bbox(MaskImage.from_array(mask_u8))
        pose = Pose6D.from_matrix(R, t, object_id=spec.object_id)
        records.append(FrameRecord(
            frame_id=i,
            timestamp_ns=int(round(i * 1e9 / spec.fps)),
            image=image_rel,
            mask=mask_rel,
            scene=spec.name,
            gt_detections=(Detection(bbox=bbox, class_id=0,
                                     class_name=spec.class_name,
                                     confidence=1.0),),
            gt_poses=(pose,),
            gt_readings=readings,
        ))

    model = ObjectModel.create(points, object_id=spec.object_id)
    model_payload = {"points_mm": points.tolist(),
                     "diameter_mm": model.diameter,
                     "symmetric": False,
                     "object_id": spec.object_id}
    (out / "model.json").write_text(
        json.dumps(model_payload, indent=2, sort_keys=True) + "\n")
    _write_ply(out / "model.ply", points)

    manifest = SequenceManifest(root=out, intrinsics=intr,
                                frames=tuple(records),
                                classes=(spec.class_name,),
                                fps=spec.fps, model="model.json")
    manifest.save()
    return FixtureScene(root=out, manifest=manifest, model=model)


def _write_ply(path: Path, points: np.ndarray) -> None:
    lines = ["ply", "format ascii 1.0", f"element vertex {len(points)}",
             "property float x", "property float y", "property float z",
             "end_header"]
    lines += [f"{x:.6f} {y:.6f} {z:.6f}" for x, y, z in points]
    path.write_text("\n".join(lines) + "\n")
