"""Pose ground-truth annotation from 2D-3D point correspondences.

Given clicked (or otherwise measured) image points for known model
points, each frame's object pose is recovered with the PnP solver and
reported with its reprojection RMS, so bad clicks surface as large
residuals instead of silently wrong ground truth.

The module also provides the box-gated pose evaluator used by the
bounding-box robustness study: model points are projected with the
frame's reference pose, only those landing inside the supplied box are
kept (a detector crop hides the rest), and the pose is re-estimated
from the survivors.  Shrunken or shifted boxes starve the solver of
points, which is exactly the failure mode the study quantifies.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from ..errors import AI4ARError
from ..manifest import FrameRecord, SequenceManifest
from ..metrics.pose import (ObjectModel, PoseEvalConfig, StudyDataset,
                            StudySample)
from ..protocol import BBox, Pose6D
from .camera import project_points
from .pnp import MIN_CORRESPONDENCES, CorrespondenceSet, PnPError, pnp_solve


class AnnotateError(AI4ARError):
    pass


@dataclass(frozen=True)
class PoseAnnotation:
    frame_id: int
    pose: Pose6D
    rms_px: float
    n_points: int

    def to_dict(self) -> dict:
        return {"frame_id": self.frame_id, "pose": self.pose.to_dict(),
                "rms_px": self.rms_px, "n_points": self.n_points}


def load_correspondence_file(path: str | Path) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Read {"frames": {"<frame_id>": {"object_points_mm": [[x,y,z]..],
    "image_points": [[u,v]..]}}} into per-frame point arrays."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise AnnotateError(f"cannot read correspondences {path}: {err}") from err
    frames = data.get("frames")
    if not isinstance(frames, dict) or not frames:
        raise AnnotateError(f"{path}: needs a nonempty 'frames' object")
    out = {}
    for key, entry in frames.items():
        try:
            fid = int(key)
        except ValueError:
            raise AnnotateError(f"{path}: frame key {key!r} is not an integer")
        try:
            p3 = np.asarray(entry["object_points_mm"], dtype=float)
            p2 = np.asarray(entry["image_points"], dtype=float)
        except (KeyError, TypeError, ValueError) as err:
            raise AnnotateError(f"{path}: frame {key}: {err}") from err
        out[fid] = (p3, p2)
    return out


def annotate_poses(manifest: SequenceManifest,
                   correspondences: Mapping[int, tuple[np.ndarray, np.ndarray]],
                   object_id: int = 0,
                   max_rms_px: Optional[float] = None) -> list[PoseAnnotation]:
    """Solve one pose per annotated frame; frames must exist in the
    sequence.  With max_rms_px set, a residual above it is an error
    (likely a misclicked point)."""
    known = {rec.frame_id for rec in manifest.frames}
    annotations = []
    for fid in sorted(correspondences):
        if fid not in known:
            raise AnnotateError(f"frame {fid} is not in the sequence")
        p3, p2 = correspondences[fid]
        try:
            corr = CorrespondenceSet(points_3d=p3, points_2d=p2,
                                     intrinsics=manifest.intrinsics)
            pose, rms = pnp_solve(corr)
        except PnPError as err:
            raise AnnotateError(f"frame {fid}: {err}") from err
        if max_rms_px is not None and rms > max_rms_px:
            raise AnnotateError(
                f"frame {fid}: reprojection RMS {rms:.3f}px exceeds "
                f"{max_rms_px}px; check the clicked points")
        pose = Pose6D(quaternion=pose.quaternion, translation=pose.translation,
                      object_id=object_id)
        annotations.append(PoseAnnotation(frame_id=fid, pose=pose,
                                          rms_px=rms, n_points=len(p3)))
    return annotations


def reference_correspondences(manifest: SequenceManifest,
                              points_mm: np.ndarray,
                              frame_ids: Optional[Sequence[int]] = None
                              ) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Synthesize correspondences by projecting the stored reference poses.

    Re-solving from these must reproduce the stored poses with tiny RMS;
    a discrepancy means the sequence's poses, intrinsics, and geometry
    disagree.  Also handy as a template for manual annotation files.
    """
    points = np.asarray(points_mm, dtype=float)
    wanted = None if frame_ids is None else set(frame_ids)
    out = {}
    for rec in manifest.frames:
        if wanted is not None and rec.frame_id not in wanted:
            continue
        if not rec.gt_poses:
            continue
        projected = project_points(points, rec.gt_poses[0],
                                   manifest.intrinsics)
        out[rec.frame_id] = (points.copy(), projected)
    if not out:
        raise AnnotateError("no frames with reference poses to project")
    return out


def save_annotations(annotations: Sequence[PoseAnnotation],
                     path: str | Path) -> None:
    dump = {"poses": {str(a.frame_id): a.to_dict() for a in annotations}}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dump, fh, indent=2, sort_keys=True)
        fh.write("\n")


def box_gated_pnp_evaluator(manifest: SequenceManifest, model: ObjectModel,
                            margin_px: float = 1.0):
    """Evaluator(frame_record, bbox) -> Pose6D for the robustness study.

    Keeps the model points whose reference projection lands within
    margin_px of the box and solves PnP on them; fewer than the solver
    minimum raises, which the study counts as a failed frame.
    """

    def evaluate(record: FrameRecord, bbox: BBox) -> Pose6D:
        if not record.gt_poses:
            raise AnnotateError(f"frame {record.frame_id} has no reference pose")
        projected = project_points(model.points, record.gt_poses[0],
                                   manifest.intrinsics)
        inside = ((projected[:, 0] >= bbox.x - margin_px)
                  & (projected[:, 0] <= bbox.x2 + margin_px)
                  & (projected[:, 1] >= bbox.y - margin_px)
                  & (projected[:, 1] <= bbox.y2 + margin_px))
        if int(inside.sum()) < MIN_CORRESPONDENCES:
            raise AnnotateError(
                f"frame {record.frame_id}: only {int(inside.sum())} of "
                f"{len(model.points)} points visible in the box")
        corr = CorrespondenceSet(points_3d=model.points[inside],
                                 points_2d=projected[inside],
                                 intrinsics=manifest.intrinsics)
        pose, _ = pnp_solve(corr)
        return Pose6D(quaternion=pose.quaternion, translation=pose.translation,
                      object_id=record.gt_poses[0].object_id)

    return evaluate


def study_dataset_from_sequence(manifest: SequenceManifest,
                                model: ObjectModel,
                                eval_cfg: PoseEvalConfig = PoseEvalConfig()
                                ) -> StudyDataset:
    """Pair each frame's first reference box and pose into study samples."""
    samples = []
    for rec in manifest.frames:
        if not rec.gt_detections or not rec.gt_poses:
            continue
        samples.append(StudySample(frame=rec,
                                   gt_bbox=rec.gt_detections[0].bbox,
                                   gt_pose=rec.gt_poses[0]))
    if not samples:
        raise AnnotateError("sequence has no frames with both a reference "
                            "box and a reference pose")
    return StudyDataset(samples=tuple(samples),
                        models={model.object_id: model},
                        eval_cfg=eval_cfg,
                        image_size=(float(manifest.intrinsics.width),
                                    float(manifest.intrinsics.height)))
