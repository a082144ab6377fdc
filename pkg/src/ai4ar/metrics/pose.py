"""6D pose evaluation: ADD / ADD-S, thresholded accuracy, and the
bounding-box perturbation robustness study.

Distances are in model units (mm).  A pose is counted correct when its
metric is strictly below threshold_fraction times the model diameter.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from ..errors import AI4ARError
from ..protocol import BBox, Pose6D

log = logging.getLogger(__name__)


class PoseMetricsError(AI4ARError):
    pass


@dataclass(eq=False)
class ObjectModel:
    """Rigid object as a point set in mm with its precomputed diameter."""

    points: np.ndarray
    diameter: float
    symmetric: bool = False
    object_id: int = 0

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=float))
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise PoseMetricsError(f"points must be (n, 3), got {pts.shape}")
        if pts.shape[0] < 4:
            raise PoseMetricsError(f"model needs >= 4 points, got {pts.shape[0]}")
        if not np.isfinite(pts).all():
            raise PoseMetricsError("model points must be finite")
        pts.setflags(write=False)
        self.points = pts
        self.diameter = float(self.diameter)
        if not self.diameter > 0.0:
            raise PoseMetricsError(f"diameter must be positive, got {self.diameter}")
        actual = max_pairwise_distance(pts)
        if abs(actual - self.diameter) > 1e-6:
            raise PoseMetricsError(
                f"declared diameter {self.diameter} differs from computed "
                f"{actual} by more than 1e-6")

    @classmethod
    def create(cls, points, symmetric: bool = False, object_id: int = 0,
               diameter: float | None = None) -> "ObjectModel":
        pts = np.asarray(points, dtype=float)
        if diameter is None:
            diameter = max_pairwise_distance(pts)
        return cls(points=pts, diameter=diameter, symmetric=symmetric,
                   object_id=object_id)


def max_pairwise_distance(points: np.ndarray) -> float:
    """Largest distance between any two points, chunked to bound memory."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n < 2:
        raise PoseMetricsError("need at least 2 points for a diameter")
    best = 0.0
    step = 512
    for i in range(0, n, step):
        block = pts[i:i + step]
        d2 = ((block[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        best = max(best, float(d2.max()))
    return float(np.sqrt(best))


def load_object_model(path: str | Path) -> ObjectModel:
    """Load a model from an ASCII PLY vertex cloud or a JSON point list."""
    path = Path(path)
    if path.suffix.lower() == ".ply":
        return _load_ply(path)
    data = json.loads(path.read_text())
    return ObjectModel.create(points=data["points_mm"],
                              symmetric=bool(data.get("symmetric", False)),
                              object_id=int(data.get("object_id", 0)),
                              diameter=data.get("diameter_mm"))


def _load_ply(path: Path) -> ObjectModel:
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise PoseMetricsError(f"{path}: not a PLY file")
    n_vertices = None
    header_end = None
    in_vertex = False
    vertex_props: list[str] = []
    for i, line in enumerate(lines[1:], start=1):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format":
            if tok[1] != "ascii":
                raise PoseMetricsError(f"{path}: only ASCII PLY supported")
        elif tok[0] == "element":
            in_vertex = tok[1] == "vertex"
            if in_vertex:
                n_vertices = int(tok[2])
        elif tok[0] == "property" and in_vertex:
            vertex_props.append(tok[-1])
        elif tok[0] == "end_header":
            header_end = i
            break
    if n_vertices is None or header_end is None:
        raise PoseMetricsError(f"{path}: missing vertex element or end_header")
    for axis in ("x", "y", "z"):
        if axis not in vertex_props:
            raise PoseMetricsError(f"{path}: vertex property {axis} missing")
    cols = [vertex_props.index(a) for a in ("x", "y", "z")]
    rows = []
    for line in lines[header_end + 1:header_end + 1 + n_vertices]:
        tok = line.split()
        if len(tok) < len(vertex_props):
            raise PoseMetricsError(f"{path}: truncated vertex row {line!r}")
        rows.append([float(tok[c]) for c in cols])
    if len(rows) != n_vertices:
        raise PoseMetricsError(f"{path}: expected {n_vertices} vertices, "
                               f"got {len(rows)}")
    return ObjectModel.create(points=np.array(rows))


def _transformed(points: np.ndarray, pose: Pose6D) -> np.ndarray:
    return points @ pose.rotation.T + pose.translation_vec


def add_metric(model: ObjectModel, gt: Pose6D, est: Pose6D) -> float:
    """Average distance between corresponding transformed model points."""
    diff = _transformed(model.points, gt) - _transformed(model.points, est)
    return float(np.linalg.norm(diff, axis=1).mean())


def adds_metric(model: ObjectModel, gt: Pose6D, est: Pose6D) -> float:
    """Symmetric variant: average distance from each ground-truth-transformed
    point to its nearest estimate-transformed point."""
    gt_pts = _transformed(model.points, gt)
    est_pts = _transformed(model.points, est)
    dists, _ = cKDTree(est_pts).query(gt_pts, k=1)
    return float(np.mean(dists))


@dataclass(frozen=True)
class PoseEvalConfig:
    threshold_fraction: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.threshold_fraction < 1.0:
            raise PoseMetricsError(
                f"threshold_fraction {self.threshold_fraction} outside (0, 1)")


def _model_for(models, pose: Pose6D) -> ObjectModel:
    if isinstance(models, ObjectModel):
        return models
    model = models.get(pose.object_id)
    if model is None:
        raise PoseMetricsError(f"no model for object_id {pose.object_id}")
    return model


def pose_metric(model: ObjectModel, gt: Pose6D, est: Pose6D) -> float:
    """ADD-S for symmetric models, plain ADD otherwise."""
    return adds_metric(model, gt, est) if model.symmetric else add_metric(model, gt, est)


def pose_accuracy(models: ObjectModel | Mapping[int, ObjectModel],
                  gt_poses: Sequence[Pose6D],
                  est_poses: Sequence[Optional[Pose6D]],
                  cfg: PoseEvalConfig = PoseEvalConfig()) -> float:
    """Fraction of samples whose metric is strictly below
    threshold_fraction * diameter.  A None estimate counts as wrong."""
    if len(gt_poses) != len(est_poses):
        raise PoseMetricsError(f"gt and est lists differ in length: "
                               f"{len(gt_poses)} vs {len(est_poses)}")
    if not gt_poses:
        raise PoseMetricsError("cannot score an empty pose list")
    correct = 0
    for gt, est in zip(gt_poses, est_poses):
        if est is None:
            continue
        model = _model_for(models, gt)
        if pose_metric(model, gt, est) < cfg.threshold_fraction * model.diameter:
            correct += 1
    return correct / len(gt_poses)


@dataclass(frozen=True)
class PerturbConfig:
    """Bounding-box perturbation: center shifted per axis by up to
    max_shift_fraction of the extent, extents scaled per axis by an
    independent uniform draw from [scale_low, scale_high]."""

    max_shift_fraction: float = 0.25
    scale_low: float = 0.75
    scale_high: float = 1.25
    repetitions: int = 5
    seed: int | None = None

    def __post_init__(self):
        if self.max_shift_fraction < 0.0:
            raise PoseMetricsError(
                f"max_shift_fraction {self.max_shift_fraction} negative")
        if not 0.0 < self.scale_low <= self.scale_high:
            raise PoseMetricsError(
                f"scale range [{self.scale_low}, {self.scale_high}] invalid")
        if self.repetitions < 1:
            raise PoseMetricsError(f"repetitions {self.repetitions} < 1")


def perturb_bbox(bbox: BBox, cfg: PerturbConfig, rng: np.random.Generator,
                 image_size: tuple[float, float] | None = None) -> BBox:
    """Draw one perturbed box.  Draw order is fixed (shift x, shift y,
    scale x, scale y) so results are reproducible for a given generator
    state.  With image_size given, the box is clipped to the image."""
    s = cfg.max_shift_fraction
    du = rng.uniform(-s, s) * bbox.w
    dv = rng.uniform(-s, s) * bbox.h
    sw = rng.uniform(cfg.scale_low, cfg.scale_high)
    sh = rng.uniform(cfg.scale_low, cfg.scale_high)
    if du == 0.0 and dv == 0.0 and sw == 1.0 and sh == 1.0:
        return bbox
    cx = bbox.x + bbox.w / 2.0 + du
    cy = bbox.y + bbox.h / 2.0 + dv
    w = bbox.w * sw
    h = bbox.h * sh
    x, y = cx - w / 2.0, cy - h / 2.0
    if image_size is not None:
        iw, ih = image_size
        x0 = min(max(x, 0.0), iw)
        y0 = min(max(y, 0.0), ih)
        x1 = min(max(x + w, 0.0), iw)
        y1 = min(max(y + h, 0.0), ih)
        if x1 - x0 <= 0.0 or y1 - y0 <= 0.0:
            raise PoseMetricsError(
                f"perturbed box {x, y, w, h} left the {iw}x{ih} image entirely")
        x, y, w, h = x0, y0, x1 - x0, y1 - y0
    return BBox(x, y, w, h)


@dataclass(frozen=True)
class StudySample:
    """One evaluation unit: an opaque frame handle the evaluator
    understands, the ground-truth box, and the ground-truth pose."""

    frame: Any
    gt_bbox: BBox
    gt_pose: Pose6D


@dataclass(frozen=True)
class StudyDataset:
    samples: tuple[StudySample, ...]
    models: Any  # ObjectModel or mapping object_id -> ObjectModel
    eval_cfg: PoseEvalConfig = PoseEvalConfig()
    image_size: tuple[float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if not self.samples:
            raise PoseMetricsError("study dataset is empty")


@dataclass(frozen=True)
class PerturbationStudyReport:
    baseline_accuracy: float
    mean_perturbed_accuracy: float
    per_run_accuracies: tuple[float, ...]
    evaluator_failures: int

    def to_dict(self) -> dict:
        return {"baseline_accuracy": self.baseline_accuracy,
                "mean_perturbed_accuracy": self.mean_perturbed_accuracy,
                "per_run_accuracies": list(self.per_run_accuracies),
                "evaluator_failures": self.evaluator_failures}


Evaluator = Callable[[Any, BBox], Pose6D]


def perturbation_study(dataset: StudyDataset, evaluator: Evaluator,
                       cfg: PerturbConfig = PerturbConfig()) -> PerturbationStudyReport:
    """Robustness of a pose evaluator to bounding-box jitter.

    Runs the evaluator once on the ground-truth boxes (baseline) and then
    cfg.repetitions times with every box independently perturbed, scoring
    each run with pose_accuracy.  An evaluator exception on a frame counts
    that frame as incorrect.
    """
    rng = np.random.default_rng(cfg.seed)
    failures = 0

    def run(boxes: Sequence[BBox]) -> float:
        nonlocal failures
        ests: list[Optional[Pose6D]] = []
        for sample, box in zip(dataset.samples, boxes):
            try:
                ests.append(evaluator(sample.frame, box))
            except Exception as e:
                # Expected under heavy jitter; counted in the report.
                failures += 1
                log.debug("evaluator failed: %s", e)
                ests.append(None)
        gt = [s.gt_pose for s in dataset.samples]
        return pose_accuracy(dataset.models, gt, ests, dataset.eval_cfg)

    baseline = run([s.gt_bbox for s in dataset.samples])
    per_run = []
    for _ in range(cfg.repetitions):
        boxes = [perturb_bbox(s.gt_bbox, cfg, rng, dataset.image_size)
                 for s in dataset.samples]
        per_run.append(run(boxes))
    return PerturbationStudyReport(
        baseline_accuracy=baseline,
        mean_perturbed_accuracy=float(np.mean(per_run)),
        per_run_accuracies=tuple(per_run),
        evaluator_failures=failures)
