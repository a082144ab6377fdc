"""Evaluation toolkits: detection mAP, 6D pose ADD/ADD-S, OCR accuracy."""

from .detection import (COCO_IOU_THRESHOLDS, ClassDetectionMetrics,
                        DetectionReport, GroundTruthSet, MetricsError,
                        evaluate_detections, greedy_iou_match, iou, map_coco,
                        text_detection_f1)
from .ocr import (OCRMetricsError, OCRPipelineReport, OCRSample,
                  ocr_pipeline_eval, recognition_accuracy)
from .pose import (ObjectModel, PerturbConfig, PerturbationStudyReport,
                   PoseEvalConfig, PoseMetricsError, StudyDataset,
                   StudySample, add_metric, adds_metric, load_object_model,
                   max_pairwise_distance, perturb_bbox, perturbation_study,
                   pose_accuracy, pose_metric)

__all__ = [
    "COCO_IOU_THRESHOLDS", "ClassDetectionMetrics", "DetectionReport",
    "GroundTruthSet", "MetricsError", "OCRMetricsError", "OCRPipelineReport",
    "OCRSample", "ObjectModel", "PerturbConfig", "PerturbationStudyReport",
    "PoseEvalConfig", "PoseMetricsError", "StudyDataset", "StudySample",
    "add_metric", "adds_metric", "evaluate_detections", "greedy_iou_match",
    "iou", "load_object_model", "map_coco", "max_pairwise_distance",
    "ocr_pipeline_eval", "perturb_bbox", "perturbation_study",
    "pose_accuracy", "pose_metric", "recognition_accuracy",
    "text_detection_f1",
]
