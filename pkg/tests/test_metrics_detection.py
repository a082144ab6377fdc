"""Detection scoring against independent references.

IoU is checked against shapely polygon intersection; matching, AP, and
the full report are checked against a plain-Python reimplementation in
oracles.py that shares no code with the package.
"""
import numpy as np
import pytest

from ai4ar.metrics import (DetectionReport, GroundTruthSet, MetricsError,
                           evaluate_detections, greedy_iou_match, iou,
                           map_coco, text_detection_f1)
from ai4ar.protocol import BBox, Detection

from oracles import (detection_report_reference, iou_shapely,
                     map_coco_reference)


def det(x, y, w, h, conf, class_id=0):
    return Detection(bbox=BBox(x, y, w, h), class_id=class_id,
                     class_name=f"c{class_id}", confidence=conf)


def random_scene(rng, num_images=2, classes=(0, 1, 2), max_boxes=8):
    """Ground truth plus predictions that are jittered copies, misses,
    and spurious extras."""
    W, H = 100.0, 80.0
    gt_boxes = {}
    sizes = {}
    preds = {}
    for i in range(num_images):
        img = f"img{i}"
        sizes[img] = (W, H)
        entries = []
        for _ in range(int(rng.integers(0, max_boxes + 1))):
            w = float(rng.uniform(4, 30))
            h = float(rng.uniform(4, 30))
            x = float(rng.uniform(0, W - w))
            y = float(rng.uniform(0, H - h))
            entries.append((BBox(x, y, w, h), int(rng.choice(classes))))
        gt_boxes[img] = tuple(entries)
        dets = []
        for bbox, c in entries:
            if rng.uniform() < 0.75:  # detected, with jitter
                dets.append(det(bbox.x + rng.uniform(-3, 3),
                                bbox.y + rng.uniform(-3, 3),
                                bbox.w * rng.uniform(0.8, 1.2),
                                bbox.h * rng.uniform(0.8, 1.2),
                                float(rng.uniform(0.05, 1.0)), c))
        for _ in range(int(rng.integers(0, 3))):  # spurious
            dets.append(det(float(rng.uniform(0, 70)),
                            float(rng.uniform(0, 50)),
                            float(rng.uniform(4, 30)),
                            float(rng.uniform(4, 30)),
                            float(rng.uniform(0.05, 1.0)),
                            int(rng.choice(classes))))
        preds[img] = dets
    return preds, gt_boxes, sizes


def test_iou_hand_values():
    assert iou(BBox(0, 0, 2, 2), BBox(0, 0, 2, 2)) == 1.0
    assert iou(BBox(0, 0, 2, 2), BBox(1, 0, 2, 2)) == pytest.approx(1 / 3)
    assert iou(BBox(0, 0, 1, 1), BBox(1, 1, 1, 1)) == 0.0   # corner touch
    assert iou(BBox(0, 0, 1, 1), BBox(1, 0, 1, 1)) == 0.0   # edge touch
    assert iou(BBox(0, 0, 4, 4), BBox(1, 1, 2, 2)) == 0.25  # containment


def test_iou_matches_shapely_on_random_boxes():
    rng = np.random.default_rng(42)
    for _ in range(500):
        a = BBox(*rng.uniform(0, 50, 2), *rng.uniform(0.5, 40, 2))
        b = BBox(*rng.uniform(0, 50, 2), *rng.uniform(0.5, 40, 2))
        assert iou(a, b) == pytest.approx(iou_shapely(a, b), abs=1e-12)


def test_ap_half_on_miss_then_hit():
    gt = GroundTruthSet(boxes={"i": ((BBox(10, 10, 10, 10), 0),)},
                        sizes={"i": (100, 100)})
    preds = {"i": [det(50, 50, 10, 10, 0.9),       # confident miss
                   det(10, 10, 10, 10, 0.4)]}      # hesitant hit
    report = evaluate_detections(preds, gt, iou_threshold=0.5,
                                 confidence_threshold=0.5)
    assert report.ap == pytest.approx(0.5)
    m = report.per_class[0]
    # at the 0.5 confidence cut only the miss survives
    assert (m.tp, m.fp, m.fn) == (0, 1, 1)
    assert m.precision == 0.0 and m.recall == 0.0


def test_perfect_predictions_score_one():
    gt = GroundTruthSet(boxes={"i": ((BBox(0, 0, 10, 10), 0),
                                     (BBox(30, 30, 8, 8), 1))},
                        sizes={"i": (100, 100)})
    preds = {"i": [det(0, 0, 10, 10, 1.0, 0), det(30, 30, 8, 8, 1.0, 1)]}
    report = evaluate_detections(preds, gt)
    assert report.ap == 1.0
    assert report.precision == 1.0
    assert report.recall == 1.0


def test_report_matches_reference_randomized():
    rng = np.random.default_rng(7)
    for _ in range(50):
        preds, gt_boxes, sizes = random_scene(rng)
        gt = GroundTruthSet(boxes=gt_boxes, sizes=sizes)
        got = evaluate_detections(preds, gt, iou_threshold=0.5,
                                  confidence_threshold=0.5)
        want = detection_report_reference(preds, gt_boxes, 0.5, 0.5)
        assert got.ap == pytest.approx(want["ap"], abs=1e-12)
        assert got.precision == pytest.approx(want["precision"], abs=1e-12)
        assert got.recall == pytest.approx(want["recall"], abs=1e-12)
        for m in got.per_class:
            ref = want["per_class"][m.class_id]
            assert m.ap == pytest.approx(ref["ap"], abs=1e-12)
            assert (m.tp, m.fp, m.fn) == (ref["tp"], ref["fp"], ref["fn"])


def test_map_coco_matches_reference():
    rng = np.random.default_rng(19)
    preds, gt_boxes, sizes = random_scene(rng, num_images=3)
    gt = GroundTruthSet(boxes=gt_boxes, sizes=sizes)
    map50, map5095 = map_coco(preds, gt, confidence_threshold=0.5)
    ref50, ref5095 = map_coco_reference(preds, gt_boxes, 0.5)
    assert map50 == pytest.approx(ref50, abs=1e-12)
    assert map5095 == pytest.approx(ref5095, abs=1e-12)
    assert map5095 <= map50 + 1e-12  # stricter thresholds can only hurt


def test_class_union_covers_prediction_only_classes():
    gt = GroundTruthSet(boxes={"i": ((BBox(0, 0, 10, 10), 0),)},
                        sizes={"i": (100, 100)})
    preds = {"i": [det(0, 0, 10, 10, 0.9, 0), det(40, 40, 5, 5, 0.9, 7)]}
    report = evaluate_detections(preds, gt)
    by_class = {m.class_id: m for m in report.per_class}
    assert set(by_class) == {0, 7}
    assert by_class[0].ap == 1.0
    ghost = by_class[7]  # no ground truth for it, one false positive
    assert ghost.ap == 0.0
    assert ghost.precision == 0.0
    assert ghost.recall == 1.0


def test_empty_everything_is_vacuously_perfect():
    gt = GroundTruthSet(boxes={"i": ()}, sizes={"i": (10, 10)})
    report = evaluate_detections({"i": []}, gt)
    assert report.per_class == ()
    assert report.precision == 1.0
    assert report.recall == 1.0
    assert report.ap == 1.0


def test_missed_everything_scores_zero():
    gt = GroundTruthSet(boxes={"i": ((BBox(0, 0, 10, 10), 0),)},
                        sizes={"i": (100, 100)})
    report = evaluate_detections({"i": []}, gt)
    assert report.ap == 0.0
    assert report.recall == 0.0
    assert report.per_class[0].fn == 1


def test_confidence_exactly_at_threshold_counts():
    gt = GroundTruthSet(boxes={"i": ((BBox(0, 0, 10, 10), 0),)},
                        sizes={"i": (100, 100)})
    preds = {"i": [det(0, 0, 10, 10, 0.5)]}
    report = evaluate_detections(preds, gt, confidence_threshold=0.5)
    assert report.per_class[0].tp == 1
    below = {"i": [det(0, 0, 10, 10, 0.4999)]}
    report = evaluate_detections(below, gt, confidence_threshold=0.5)
    assert report.per_class[0].tp == 0
    assert report.per_class[0].ap == 1.0  # ranking metric ignores the cut


def test_one_to_one_matching_no_double_credit():
    # two predictions over one gt box: only the more confident one is tp
    gt = GroundTruthSet(boxes={"i": ((BBox(0, 0, 10, 10), 0),)},
                        sizes={"i": (100, 100)})
    preds = {"i": [det(0, 0, 10, 10, 0.8), det(1, 1, 10, 10, 0.9)]}
    report = evaluate_detections(preds, gt, confidence_threshold=0.5)
    m = report.per_class[0]
    assert (m.tp, m.fp) == (1, 1)


def test_ground_truth_validation():
    with pytest.raises(MetricsError):
        GroundTruthSet(boxes={"i": ((BBox(95, 0, 10, 10), 0),)},
                       sizes={"i": (100, 100)})
    with pytest.raises(MetricsError):
        GroundTruthSet(boxes={"i": ((BBox(0, 0, 10, 10), 0),)}, sizes={})


def test_threshold_validation():
    gt = GroundTruthSet(boxes={"i": ()}, sizes={"i": (10, 10)})
    with pytest.raises(MetricsError):
        evaluate_detections({}, gt, iou_threshold=0.0)
    with pytest.raises(MetricsError):
        evaluate_detections({}, gt, iou_threshold=1.5)
    with pytest.raises(MetricsError):
        evaluate_detections({}, gt, confidence_threshold=0.0)
    with pytest.raises(MetricsError):
        text_detection_f1([], [], iou_threshold=2.0)


def test_greedy_iou_match_is_input_order_one_to_one():
    gt_boxes = [BBox(0, 0, 10, 10), BBox(0, 0, 12, 12)]
    pred_boxes = [BBox(0, 0, 11, 11), BBox(0, 0, 10, 10)]
    pairs = greedy_iou_match(pred_boxes, gt_boxes, 0.5)
    # first prediction grabs its best fit (the 12x12), second takes the rest
    assert pairs == [(0, 1), (1, 0)]


def test_text_detection_f1_values():
    boxes = [BBox(0, 0, 10, 10), BBox(20, 20, 10, 10)]
    assert text_detection_f1(boxes, list(boxes)) == 1.0
    assert text_detection_f1([], []) == 1.0
    assert text_detection_f1([], boxes) == 0.0
    assert text_detection_f1(boxes, []) == 0.0
    half = [boxes[0], BBox(50, 50, 10, 10)]
    assert text_detection_f1(half, boxes) == pytest.approx(0.5)
