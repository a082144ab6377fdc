"""Segmentation-assisted auto-labeling: masks to YOLO datasets."""

from .dataset import (ClassMap, DatasetError, DatasetFrame, DatasetManifest,
                      TimingReport, build_dataset_from_masks, scan_mask_dir,
                      split_stems, write_dataset)
from .labeling import (EDGE_TOL, LabelError, LabelRecord, MaskImage,
                       bbox_to_label, format_label_file, mask_to_bbox,
                       parse_label_file, sequence_to_labels)

__all__ = [
    "ClassMap", "DatasetError", "DatasetFrame", "DatasetManifest", "EDGE_TOL",
    "LabelError", "LabelRecord", "MaskImage", "TimingReport", "bbox_to_label",
    "build_dataset_from_masks", "format_label_file", "mask_to_bbox",
    "parse_label_file", "scan_mask_dir", "sequence_to_labels", "split_stems",
    "write_dataset",
]
