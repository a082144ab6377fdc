"""Readout recognition accuracy and the detect-then-recognize pipeline."""
import numpy as np
import pytest

from ai4ar.metrics import (OCRMetricsError, OCRSample, ocr_pipeline_eval,
                           recognition_accuracy)
from ai4ar.protocol import BBox


def test_recognition_accuracy_exact_match():
    assert recognition_accuracy(["12.5", "80"], ["12.5", "80"]) == 1.0
    assert recognition_accuracy(["12.5", "81"], ["12.5", "80"]) == 0.5
    assert recognition_accuracy(["  12.5 "], ["12.5"]) == 1.0  # trim only
    assert recognition_accuracy(["12.50"], ["12.5"]) == 0.0
    assert recognition_accuracy(["A"], ["a"]) == 0.0  # case matters


def test_recognition_accuracy_validation():
    with pytest.raises(OCRMetricsError):
        recognition_accuracy(["a"], ["a", "b"])
    with pytest.raises(OCRMetricsError):
        recognition_accuracy([], [])


def test_sample_validation():
    with pytest.raises(OCRMetricsError):
        OCRSample(image=None, gt_boxes=(BBox(0, 0, 1, 1),), gt_texts=())


def corpus():
    return [
        OCRSample(image="a",
                  gt_boxes=(BBox(0, 0, 20, 10), BBox(40, 0, 20, 10)),
                  gt_texts=("12.5", "80")),
        OCRSample(image="b",
                  gt_boxes=(BBox(0, 30, 20, 10),),
                  gt_texts=("-3.1",)),
    ]


def true_text(image, box):
    table = {("a", 0.0): "12.5", ("a", 40.0): "80", ("b", 0.0): "-3.1"}
    return table[(image, box.x)]


def test_pipeline_perfect_detector_matches_oracle():
    samples = corpus()

    def detector(image):
        for s in samples:
            if s.image == image:
                return list(s.gt_boxes)
        return []

    report = ocr_pipeline_eval(samples, detector, true_text)
    assert report.oracle_accuracy == 1.0
    assert report.pipeline_accuracy == 1.0
    assert report.detection_f1 == 1.0


def test_pipeline_loses_unmatched_boxes():
    samples = corpus()

    def half_blind(image):
        # finds only the leftmost region of every image
        for s in samples:
            if s.image == image:
                return [s.gt_boxes[0]]
        return []

    report = ocr_pipeline_eval(samples, half_blind, true_text)
    assert report.oracle_accuracy == 1.0
    assert report.pipeline_accuracy == pytest.approx(2 / 3)
    # micro F1: tp=2, npred=2, ngt=3 -> p=1, r=2/3
    assert report.detection_f1 == pytest.approx(0.8)


def test_pipeline_never_beats_oracle_randomized():
    rng = np.random.default_rng(31)
    samples = corpus()
    for _ in range(60):
        hit_p = rng.uniform(0.2, 1.0)
        read_p = rng.uniform(0.2, 1.0)
        salt = int(rng.integers(0, 10**6))

        def detector(image, hit_p=hit_p, salt=salt):
            out = []
            for s in samples:
                if s.image != image:
                    continue
                for j, b in enumerate(s.gt_boxes):
                    r = np.random.default_rng([salt, j, len(image)])
                    if r.uniform() < hit_p:
                        out.append(b)
                    if r.uniform() < 0.2:  # spurious extra
                        out.append(BBox(b.x + 100, b.y + 50, 5, 5))
            return out

        def recognizer(image, box, read_p=read_p, salt=salt):
            r = np.random.default_rng([salt, int(box.x), int(box.y)])
            if r.uniform() < read_p:
                return true_text(image, box)
            return "garbled"

        report = ocr_pipeline_eval(samples, detector, recognizer)
        assert report.pipeline_accuracy <= report.oracle_accuracy + 1e-12
        assert 0.0 <= report.detection_f1 <= 1.0


def test_pipeline_vacuous_empty_corpus():
    report = ocr_pipeline_eval([], lambda img: [], lambda img, box: "")
    assert report.oracle_accuracy == 1.0
    assert report.pipeline_accuracy == 1.0
    assert report.detection_f1 == 1.0


def test_pipeline_threshold_validation():
    with pytest.raises(OCRMetricsError):
        ocr_pipeline_eval([], lambda img: [], lambda img, box: "",
                          iou_threshold=0.0)
