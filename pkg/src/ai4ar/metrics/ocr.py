"""Character-readout recognition accuracy and the detect-then-recognize
pipeline comparison.

recognition_accuracy is exact string match, case-sensitive, with
surrounding whitespace trimmed.  ocr_pipeline_eval contrasts recognition
fed by ground-truth regions (oracle) against recognition gated by a
detector: a ground-truth box only scores for the pipeline when some
detection matched it, so the pipeline can lose boxes but never gain
them and pipeline accuracy is bounded by oracle accuracy.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Sequence

from ..errors import AI4ARError
from ..protocol import BBox
from .detection import greedy_iou_match


class OCRMetricsError(AI4ARError):
    pass


def recognition_accuracy(predicted: Sequence[str], truth: Sequence[str]) -> float:
    """Fraction of exact matches between aligned string lists."""
    if len(predicted) != len(truth):
        raise OCRMetricsError(f"prediction and truth lists differ in length: "
                              f"{len(predicted)} vs {len(truth)}")
    if not truth:
        raise OCRMetricsError("cannot score empty string lists")
    hits = sum(1 for p, t in zip(predicted, truth) if p.strip() == t.strip())
    return hits / len(truth)


@dataclass(frozen=True)
class OCRSample:
    """One image with its ground-truth text regions."""

    image: Any
    gt_boxes: tuple[BBox, ...]
    gt_texts: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "gt_boxes", tuple(self.gt_boxes))
        object.__setattr__(self, "gt_texts", tuple(str(t) for t in self.gt_texts))
        if len(self.gt_boxes) != len(self.gt_texts):
            raise OCRMetricsError(f"{len(self.gt_boxes)} boxes vs "
                                  f"{len(self.gt_texts)} texts")


@dataclass(frozen=True)
class OCRPipelineReport:
    oracle_accuracy: float
    pipeline_accuracy: float
    detection_f1: float

    def to_dict(self) -> dict:
        return {"oracle_accuracy": self.oracle_accuracy,
                "pipeline_accuracy": self.pipeline_accuracy,
                "detection_f1": self.detection_f1}


Detector = Callable[[Any], Sequence[BBox]]
Recognizer = Callable[[Any, BBox], str]


def ocr_pipeline_eval(samples: Sequence[OCRSample], detector: Detector,
                      recognizer: Recognizer,
                      iou_threshold: float = 0.5) -> OCRPipelineReport:
    """Compare oracle-fed and detector-fed recognition over a corpus.

    Detection quality is summarized with the confidence-free greedy-IoU
    F1 (micro-averaged over the corpus).  A corpus with no ground-truth
    boxes at all scores vacuous accuracy 1.0.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise OCRMetricsError(f"iou_threshold {iou_threshold} outside (0, 1]")
    total = 0
    oracle_hits = 0
    pipeline_hits = 0
    match_tp = 0
    n_pred = 0
    n_gt = 0
    for sample in samples:
        det_boxes = list(detector(sample.image))
        pairs = greedy_iou_match(det_boxes, sample.gt_boxes, iou_threshold)
        matched_gt = {j for _, j in pairs}
        match_tp += len(pairs)
        n_pred += len(det_boxes)
        n_gt += len(sample.gt_boxes)
        for j, (box, text) in enumerate(zip(sample.gt_boxes, sample.gt_texts)):
            out = recognizer(sample.image, box)
            ok = str(out).strip() == text.strip()
            total += 1
            if ok:
                oracle_hits += 1
                if j in matched_gt:
                    pipeline_hits += 1
    oracle_acc = oracle_hits / total if total else 1.0
    pipeline_acc = pipeline_hits / total if total else 1.0
    precision = match_tp / n_pred if n_pred else 1.0
    recall = match_tp / n_gt if n_gt else 1.0
    f1 = 0.0 if precision + recall == 0.0 else \
        2.0 * precision * recall / (precision + recall)
    return OCRPipelineReport(oracle_accuracy=oracle_acc,
                             pipeline_accuracy=pipeline_acc,
                             detection_f1=f1)
