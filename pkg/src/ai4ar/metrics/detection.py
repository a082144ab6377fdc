"""Detection evaluation: IoU, greedy matching, 101-point AP, mAP, text F1.

Matching follows the usual COCO discipline: within each class,
predictions are ranked by descending confidence (ties keep input order)
and each is matched to the unmatched ground-truth box of highest IoU at
or above the threshold.  AP integrates the 101-point interpolated
precision envelope over the full ranking; the point precision/recall
numbers are reported at a confidence threshold.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..errors import AI4ARError
from ..protocol import BBox, Detection

COCO_IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))

RECALL_GRID = np.linspace(0.0, 1.0, 101)


class MetricsError(AI4ARError):
    pass


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes in continuous coordinates."""
    ix = max(a.x, b.x)
    iy = max(a.y, b.y)
    ix2 = min(a.x2, b.x2)
    iy2 = min(a.y2, b.y2)
    iw = ix2 - ix
    ih = iy2 - iy
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class GroundTruthSet:
    """Per-image ground truth boxes with image extents.

    boxes maps image id -> sequence of (BBox, class_id); sizes maps
    image id -> (width, height).  Every box must lie inside its image.
    """

    boxes: Mapping[str, tuple[tuple[BBox, int], ...]]
    sizes: Mapping[str, tuple[float, float]]

    def __post_init__(self):
        frozen = {}
        for img, entries in self.boxes.items():
            frozen[str(img)] = tuple((b, int(c)) for b, c in entries)
        sizes = {str(img): (float(w), float(h)) for img, (w, h) in self.sizes.items()}
        for img, entries in frozen.items():
            if img not in sizes:
                raise MetricsError(f"image {img!r} has boxes but no size")
            w, h = sizes[img]
            for b, _ in entries:
                if b.x < -1e-6 or b.y < -1e-6 or b.x2 > w + 1e-6 or b.y2 > h + 1e-6:
                    raise MetricsError(
                        f"image {img!r}: box {b.to_list()} outside {w}x{h}")
        object.__setattr__(self, "boxes", frozen)
        object.__setattr__(self, "sizes", sizes)

    def class_ids(self) -> set[int]:
        return {c for entries in self.boxes.values() for _, c in entries}

    def count_for_class(self, class_id: int) -> int:
        return sum(1 for entries in self.boxes.values()
                   for _, c in entries if c == class_id)


Predictions = Mapping[str, Sequence[Detection]]


@dataclass(frozen=True)
class ClassDetectionMetrics:
    class_id: int
    ap: float
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int
    num_gt: int

    def to_dict(self) -> dict:
        return {"class_id": self.class_id, "ap": self.ap,
                "precision": self.precision, "recall": self.recall,
                "tp": self.tp, "fp": self.fp, "fn": self.fn,
                "num_gt": self.num_gt}


@dataclass(frozen=True)
class DetectionReport:
    """Metrics at one IoU threshold (point P/R at one confidence threshold)."""

    iou_threshold: float
    confidence_threshold: float
    per_class: tuple[ClassDetectionMetrics, ...]
    precision: float
    recall: float
    ap: float

    def to_dict(self) -> dict:
        return {"iou_threshold": self.iou_threshold,
                "confidence_threshold": self.confidence_threshold,
                "precision": self.precision, "recall": self.recall,
                "ap": self.ap,
                "per_class": [c.to_dict() for c in self.per_class]}


def _ranked_predictions(preds: Predictions, class_id: int):
    """All predictions of one class, ranked by descending confidence;
    confidence ties keep input (image, list) order via the stable sort."""
    pool = [(img, det) for img, dets in preds.items()
            for det in dets if det.class_id == class_id]
    pool.sort(key=lambda item: -item[1].confidence)
    return pool


def _match_class(preds: Predictions, gts: GroundTruthSet, class_id: int,
                 iou_threshold: float):
    """Greedy confidence-ordered one-to-one matching for one class.

    Returns (tp_flags, confidences) aligned with the class ranking.
    """
    ranked = _ranked_predictions(preds, class_id)
    gt_by_img: dict[str, list[BBox]] = {}
    for img, entries in gts.boxes.items():
        gt_by_img[img] = [b for b, c in entries if c == class_id]
    taken: dict[str, set[int]] = {img: set() for img in gt_by_img}
    tp_flags = np.zeros(len(ranked), dtype=bool)
    confs = np.array([det.confidence for _, det in ranked])
    for i, (img, det) in enumerate(ranked):
        candidates = gt_by_img.get(img, ())
        best_j = -1
        best_iou = 0.0
        for j, gt_box in enumerate(candidates):
            if j in taken[img]:
                continue
            v = iou(det.bbox, gt_box)
            if v >= iou_threshold and v > best_iou:
                best_iou = v
                best_j = j
        if best_j >= 0:
            taken[img].add(best_j)
            tp_flags[i] = True
    return tp_flags, confs


def _ap_101(tp_flags: np.ndarray, num_gt: int) -> float:
    """Average precision as the mean of the interpolated precision envelope
    sampled at 101 evenly spaced recall points."""
    if num_gt == 0:
        return 1.0 if len(tp_flags) == 0 else 0.0
    if len(tp_flags) == 0:
        return 0.0
    tp = np.cumsum(tp_flags)
    fp = np.cumsum(~tp_flags)
    recall = tp / num_gt
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_GRID, side="left")
    sampled = np.where(idx < len(envelope), envelope[np.minimum(idx, len(envelope) - 1)], 0.0)
    return float(sampled.mean())


def evaluate_detections(preds: Predictions, gts: GroundTruthSet,
                        iou_threshold: float = 0.5,
                        confidence_threshold: float = 0.5) -> DetectionReport:
    """Score predictions against ground truth at one IoU threshold.

    A class with no ground truth and no predictions scores
    precision = recall = AP = 1 (vacuous success).  Aggregates are macro
    means over the union of classes present in either input.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise MetricsError(f"iou_threshold {iou_threshold} outside (0, 1]")
    if not 0.0 < confidence_threshold <= 1.0:
        raise MetricsError(
            f"confidence_threshold {confidence_threshold} outside (0, 1]")
    classes = sorted(gts.class_ids()
                     | {d.class_id for dets in preds.values() for d in dets})
    per_class = []
    for c in classes:
        tp_flags, confs = _match_class(preds, gts, c, iou_threshold)
        num_gt = gts.count_for_class(c)
        ap = _ap_101(tp_flags, num_gt)
        above = confs >= confidence_threshold
        tp = int(np.count_nonzero(tp_flags & above))
        fp = int(np.count_nonzero(~tp_flags & above))
        fn = num_gt - tp
        if tp + fp > 0:
            precision = tp / (tp + fp)
        else:
            precision = 1.0 if num_gt == 0 else 0.0
        recall = tp / num_gt if num_gt > 0 else 1.0
        per_class.append(ClassDetectionMetrics(
            class_id=c, ap=ap, precision=precision, recall=recall,
            tp=tp, fp=fp, fn=fn, num_gt=num_gt))
    if per_class:
        agg_p = float(np.mean([m.precision for m in per_class]))
        agg_r = float(np.mean([m.recall for m in per_class]))
        agg_ap = float(np.mean([m.ap for m in per_class]))
    else:
        agg_p = agg_r = agg_ap = 1.0
    return DetectionReport(iou_threshold=iou_threshold,
                           confidence_threshold=confidence_threshold,
                           per_class=tuple(per_class),
                           precision=agg_p, recall=agg_r, ap=agg_ap)


def map_coco(preds: Predictions, gts: GroundTruthSet,
             confidence_threshold: float = 0.5) -> tuple[float, float]:
    """(mAP@0.5, mAP@0.5:0.95) with the standard 10-threshold sweep."""
    aps = []
    map50 = 0.0
    for t in COCO_IOU_THRESHOLDS:
        report = evaluate_detections(preds, gts, iou_threshold=t,
                                     confidence_threshold=confidence_threshold)
        aps.append(report.ap)
        if t == 0.5:
            map50 = report.ap
    return map50, float(np.mean(aps))


def greedy_iou_match(pred_boxes: Sequence[BBox], gt_boxes: Sequence[BBox],
                     iou_threshold: float) -> list[tuple[int, int]]:
    """One-to-one matching without confidences: predictions in input order,
    each takes the unmatched ground-truth box of highest IoU >= threshold.
    Returns (pred_index, gt_index) pairs."""
    taken: set[int] = set()
    pairs = []
    for i, pb in enumerate(pred_boxes):
        best_j = -1
        best_iou = 0.0
        for j, gb in enumerate(gt_boxes):
            if j in taken:
                continue
            v = iou(pb, gb)
            if v >= iou_threshold and v > best_iou:
                best_iou = v
                best_j = j
        if best_j >= 0:
            taken.add(best_j)
            pairs.append((i, best_j))
    return pairs


def text_detection_f1(pred_boxes: Sequence[BBox], gt_boxes: Sequence[BBox],
                      iou_threshold: float = 0.5) -> float:
    """Confidence-free detection F1 used for text regions.

    Empty prediction or ground-truth sides score vacuous precision or
    recall of 1, so two empty sets give F1 = 1 and an empty prediction
    set against real boxes gives 0.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise MetricsError(f"iou_threshold {iou_threshold} outside (0, 1]")
    tp = len(greedy_iou_match(pred_boxes, gt_boxes, iou_threshold))
    precision = tp / len(pred_boxes) if pred_boxes else 1.0
    recall = tp / len(gt_boxes) if gt_boxes else 1.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)
