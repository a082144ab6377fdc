"""Command line entry points for the full pipeline.

Every subcommand prints its result as JSON on stdout (reports) or a
short status line, and all failures exit nonzero with an `error:` line
on stderr.  Commands that consume randomness take --seed; when omitted
where a run should be reproducible after the fact, a fresh seed is
drawn and echoed on stderr.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import socket
import sys
from pathlib import Path
from typing import Optional

from .config import AppConfig, ConfigError, load_config
from .errors import AI4ARError
from .gateway import GatewayConfig, GatewayServer
from .geometry import (SceneSpec, annotate_poses, box_gated_pnp_evaluator,
                       gen_fixture_scene, load_correspondence_file,
                       reference_correspondences, save_annotations,
                       study_dataset_from_sequence)
from .manifest import SequenceManifest
from .metrics.detection import (GroundTruthSet, evaluate_detections, iou,
                                map_coco)
from .metrics.ocr import OCRSample, ocr_pipeline_eval
from .metrics.pose import (ObjectModel, PerturbConfig, PoseEvalConfig,
                           load_object_model, perturbation_study,
                           pose_accuracy)
from .netio import read_message, write_message
from .protocol import (AnnotationSet, BBox, Detection, StatsReport,
                       StatsRequest, WorkerKind)
from .samal.dataset import ClassMap, build_dataset_from_masks
from .simulator import (BBoxNoise, MockWorker, NoiseSpec, PoseNoise,
                        ReplayConfig, TextNoise, replay_sequence)
from .util import parse_addr


def _print_json(data: dict) -> None:
    json.dump(data, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _fresh_seed(args_seed: Optional[int]) -> int:
    if args_seed is not None:
        return args_seed
    seed = int.from_bytes(os.urandom(4), "little")
    print(f"seed: {seed}", file=sys.stderr)
    return seed


def _gateway_addr(args, cfg: AppConfig) -> tuple[str, int]:
    addr = args.gateway if args.gateway else cfg.gateway.listen_addr
    return parse_addr(addr)


# -- serve ----------------------------------------------------------------

def _cmd_serve(args) -> int:
    cfg = load_config(args.config)
    host, port = parse_addr(args.listen if args.listen
                            else cfg.gateway.listen_addr)
    gw_cfg = GatewayConfig(
        default_deadline_ms=cfg.gateway.default_deadline_ms,
        heartbeat_interval_s=cfg.gateway.heartbeat_interval_s,
        missed_heartbeats=cfg.gateway.missed_heartbeats,
        max_in_flight=cfg.gateway.max_in_flight)
    stats_log = args.stats_log if args.stats_log else cfg.gateway.stats_log
    with GatewayServer(host=host, port=port, config=gw_cfg,
                       stats_log=stats_log) as gw:
        print(f"listening on {gw.address[0]}:{gw.address[1]}", flush=True)
        try:
            gw.wait()
        except KeyboardInterrupt:
            print("shutting down", file=sys.stderr)
    return 0


# -- mock-worker ------------------------------------------------------------

def _cmd_mock_worker(args) -> int:
    cfg = load_config(args.config)
    host, port = _gateway_addr(args, cfg)
    manifest = SequenceManifest.load(args.sequence)
    noise = NoiseSpec(
        bbox=BBoxNoise(shift_fraction=args.bbox_shift,
                       scale_low=args.bbox_scale[0],
                       scale_high=args.bbox_scale[1],
                       confidence_low=args.confidence[0],
                       confidence_high=args.confidence[1]),
        pose=PoseNoise(rotation_deg=args.pose_rot_deg,
                       translation_mm=args.pose_trans_mm),
        text=TextNoise(corrupt_probability=args.text_corrupt_prob))
    worker = MockWorker(worker_id=args.id, kind=WorkerKind(args.kind),
                        manifest=manifest, seed=args.seed, noise=noise,
                        deadline_ms=(args.deadline_ms if args.deadline_ms
                                     else cfg.gateway.default_deadline_ms),
                        delay_s=args.delay_ms / 1000.0,
                        heartbeat_interval_s=cfg.gateway.heartbeat_interval_s)
    try:
        answered = worker.run(host, port, max_frames=args.max_frames)
    except KeyboardInterrupt:
        answered = worker.frames_answered
    _print_json({"worker_id": args.id, "frames_answered": answered})
    return 0


# -- replay -----------------------------------------------------------------

def _cmd_replay(args) -> int:
    cfg = load_config(args.config)
    host, port = _gateway_addr(args, cfg)
    manifest = SequenceManifest.load(args.sequence)
    replay_cfg = ReplayConfig(
        fps=args.fps if args.fps else cfg.replay.fps,
        max_frames=args.max_frames,
        drain_timeout_s=(args.drain_timeout_s if args.drain_timeout_s is not None
                         else cfg.replay.drain_timeout_s))
    report = replay_sequence(manifest, host, port, replay_cfg,
                             annotations_out=args.annotations)
    _print_json(report.to_dict())
    return 0


# -- stats --------------------------------------------------------------------

def _cmd_stats(args) -> int:
    cfg = load_config(args.config)
    host, port = _gateway_addr(args, cfg)
    with socket.create_connection((host, port), timeout=10.0) as sock:
        write_message(sock, StatsRequest())
        reply = read_message(sock)
    if not isinstance(reply, StatsReport):
        raise AI4ARError(f"expected a stats report, got {type(reply).__name__}")
    _print_json(reply.stats)
    return 0


# -- synth-gen ------------------------------------------------------------------

def _cmd_synth_gen(args) -> int:
    seed = _fresh_seed(args.seed)
    spec = SceneSpec.load(args.scene) if args.scene else SceneSpec()
    overrides = {}
    if args.name is not None:
        overrides["name"] = args.name
    if args.frames is not None:
        overrides["frames"] = args.frames
    if args.fps is not None:
        overrides["fps"] = args.fps
    if args.trajectory is not None:
        overrides["trajectory"] = args.trajectory
    if overrides:
        spec = dataclasses.replace(spec, **overrides)
    scene = gen_fixture_scene(spec, seed, args.out)
    _print_json({"out": str(args.out), "frames": len(scene.manifest.frames),
                 "seed": seed, "classes": list(scene.manifest.classes)})
    return 0


# -- label (masks -> dataset) ------------------------------------------------

def _cmd_label(args) -> int:
    seed = _fresh_seed(args.seed)
    class_map = ClassMap.load(args.classes)
    train_frac = args.train_frac
    manifest, timing = build_dataset_from_masks(
        args.masks, args.images, class_map, args.out,
        split_fractions=(train_frac, round(1.0 - train_frac, 12)),
        seed=seed, overwrite=args.overwrite,
        manual_baseline_minutes=args.manual_baseline_minutes)
    _print_json({"out": str(args.out),
                 "train": len(manifest.train), "val": len(manifest.val),
                 "classes": list(manifest.classes), "seed": seed,
                 "timing": timing.to_dict()})
    return 0


# -- shared annotation-dump plumbing ----------------------------------------

def _load_annotation_dump(path: str) -> dict[int, AnnotationSet]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise AI4ARError(f"cannot read annotations {path}: {err}") from err
    if "annotations" not in data or not isinstance(data["annotations"], dict):
        raise AI4ARError(f"{path}: missing 'annotations' object")
    out = {}
    for key, header in data["annotations"].items():
        out[int(key)] = AnnotationSet.from_header(header, b"")
    return out


def _sequence_gt(manifest: SequenceManifest) -> GroundTruthSet:
    size = (float(manifest.intrinsics.width), float(manifest.intrinsics.height))
    boxes = {}
    sizes = {}
    for rec in manifest.frames:
        img = str(rec.frame_id)
        boxes[img] = tuple((d.bbox, d.class_id) for d in rec.gt_detections)
        sizes[img] = size
    return GroundTruthSet(boxes=boxes, sizes=sizes)


# -- eval-det -----------------------------------------------------------------

def _read_yolo_dir(labels_dir: str, with_confidence: bool):
    """Read YOLO txt labels (normalized coordinates); returns
    img -> [(class_id, BBox, confidence)] in the unit square."""
    root = Path(labels_dir)
    if not root.is_dir():
        raise AI4ARError(f"label directory {root} does not exist")
    out = {}
    for path in sorted(root.glob("*.txt")):
        entries = []
        for ln, line in enumerate(path.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split()
            expected = 6 if with_confidence else 5
            if len(parts) != expected:
                raise AI4ARError(f"{path}:{ln}: expected {expected} fields, "
                                 f"got {len(parts)}")
            cid = int(parts[0])
            cx, cy, w, h = (float(v) for v in parts[1:5])
            conf = float(parts[5]) if with_confidence else 1.0
            entries.append((cid, BBox(cx - w / 2, cy - h / 2, w, h), conf))
        out[path.stem] = entries
    if not out:
        raise AI4ARError(f"no .txt label files under {root}")
    return out


def _cmd_eval_det(args) -> int:
    cfg = load_config(args.config)
    conf_thr = (args.confidence_threshold if args.confidence_threshold
                is not None else cfg.eval.confidence_threshold)
    if args.sequence:
        if not args.annotations:
            raise AI4ARError("--sequence needs --annotations with the "
                             "replies to score")
        manifest = SequenceManifest.load(args.sequence)
        gts = _sequence_gt(manifest)
        dump = _load_annotation_dump(args.annotations)
        preds = {str(fid): list(ann.detections)
                 for fid, ann in dump.items()}
        for img in gts.boxes:
            preds.setdefault(img, [])
    elif args.gt_labels and args.pred_labels:
        gt_raw = _read_yolo_dir(args.gt_labels, with_confidence=False)
        pred_raw = _read_yolo_dir(args.pred_labels, with_confidence=True)
        gts = GroundTruthSet(
            boxes={img: tuple((b, c) for c, b, _ in entries)
                   for img, entries in gt_raw.items()},
            sizes={img: (1.0, 1.0) for img in gt_raw})
        preds = {img: [Detection(bbox=b, class_id=c, class_name=str(c),
                                 confidence=conf)
                       for c, b, conf in entries]
                 for img, entries in pred_raw.items()}
        unknown = set(preds) - set(gts.boxes)
        if unknown:
            raise AI4ARError(f"predictions for unknown image(s): "
                             f"{', '.join(sorted(unknown)[:5])}")
        for img in gts.boxes:
            preds.setdefault(img, [])
    else:
        raise AI4ARError("give either --sequence/--annotations or "
                         "--gt-labels/--pred-labels")
    report = evaluate_detections(preds, gts, iou_threshold=args.iou,
                                 confidence_threshold=conf_thr)
    map50, map5095 = map_coco(preds, gts, confidence_threshold=conf_thr)
    out = report.to_dict()
    out["map50"] = map50
    out["map50_95"] = map5095
    _print_json(out)
    return 0


# -- eval-pose ---------------------------------------------------------------

def _load_sequence_model(manifest: SequenceManifest) -> ObjectModel:
    if not manifest.model:
        raise AI4ARError("sequence manifest names no object model")
    return load_object_model(manifest.root / manifest.model)


def _cmd_eval_pose(args) -> int:
    cfg = load_config(args.config)
    fraction = (args.threshold_fraction if args.threshold_fraction is not None
                else cfg.eval.pose_threshold_fraction)
    manifest = SequenceManifest.load(args.sequence)
    model = (load_object_model(args.model) if args.model
             else _load_sequence_model(manifest))
    dump = _load_annotation_dump(args.annotations)
    gt_poses = []
    est_poses = []
    for rec in manifest.frames:
        for gt in rec.gt_poses:
            gt_poses.append(gt)
            ann = dump.get(rec.frame_id)
            est = None
            if ann is not None:
                est = next((p for p in ann.poses
                            if p.object_id == gt.object_id), None)
            est_poses.append(est)
    if not gt_poses:
        raise AI4ARError("sequence has no reference poses to score")
    eval_cfg = PoseEvalConfig(threshold_fraction=fraction)
    accuracy = pose_accuracy({model.object_id: model}, gt_poses, est_poses,
                             eval_cfg)
    _print_json({"accuracy": accuracy, "poses_scored": len(gt_poses),
                 "threshold_fraction": fraction,
                 "metric": "adds" if model.symmetric else "add",
                 "diameter_mm": model.diameter})
    return 0


# -- perturb-study -------------------------------------------------------------

def _cmd_perturb_study(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    manifest = SequenceManifest.load(args.sequence)
    model = (load_object_model(args.model) if args.model
             else _load_sequence_model(manifest))
    fraction = (args.threshold_fraction if args.threshold_fraction is not None
                else cfg.eval.pose_threshold_fraction)
    dataset = study_dataset_from_sequence(
        manifest, model, PoseEvalConfig(threshold_fraction=fraction))
    perturb_cfg = PerturbConfig(
        max_shift_fraction=(args.max_shift if args.max_shift is not None
                            else cfg.perturb.max_shift_fraction),
        scale_low=(args.scale_low if args.scale_low is not None
                   else cfg.perturb.scale_low),
        scale_high=(args.scale_high if args.scale_high is not None
                    else cfg.perturb.scale_high),
        repetitions=(args.repetitions if args.repetitions is not None
                     else cfg.perturb.repetitions),
        seed=seed)
    evaluator = box_gated_pnp_evaluator(manifest, model,
                                        margin_px=args.margin_px)
    report = perturbation_study(dataset, evaluator, perturb_cfg)
    out = report.to_dict()
    out["samples"] = len(dataset.samples)
    out["seed"] = seed
    _print_json(out)
    return 0


# -- eval-ocr -----------------------------------------------------------------

def _cmd_eval_ocr(args) -> int:
    manifest = SequenceManifest.load(args.sequence)
    dump = _load_annotation_dump(args.annotations)
    samples = []
    for rec in manifest.frames:
        samples.append(OCRSample(
            image=rec.frame_id,
            gt_boxes=tuple(r.bbox for r in rec.gt_readings),
            gt_texts=tuple(r.text for r in rec.gt_readings)))

    def detector(frame_id):
        ann = dump.get(frame_id)
        return [] if ann is None else [r.bbox for r in ann.readings]

    def recognizer(frame_id, box):
        ann = dump.get(frame_id)
        if ann is None or not ann.readings:
            return ""
        best = max(ann.readings, key=lambda r: iou(r.bbox, box))
        return best.text if iou(best.bbox, box) >= args.iou else ""

    report = ocr_pipeline_eval(samples, detector, recognizer,
                               iou_threshold=args.iou)
    out = report.to_dict()
    out["frames"] = len(samples)
    _print_json(out)
    return 0


# -- pnp-annotate ---------------------------------------------------------------

def _cmd_pnp_annotate(args) -> int:
    manifest = SequenceManifest.load(args.sequence)
    if args.points:
        correspondences = load_correspondence_file(args.points)
    else:
        model = (load_object_model(args.model) if args.model
                 else _load_sequence_model(manifest))
        correspondences = reference_correspondences(manifest, model.points)
    annotations = annotate_poses(manifest, correspondences,
                                 object_id=args.object_id,
                                 max_rms_px=args.max_rms_px)
    if args.out:
        save_annotations(annotations, args.out)
    rms_values = [a.rms_px for a in annotations]
    _print_json({"frames_annotated": len(annotations),
                 "max_rms_px": max(rms_values),
                 "mean_rms_px": sum(rms_values) / len(rms_values),
                 "out": args.out})
    return 0


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ai4ar",
        description="Desk-scale AR annotation pipeline: frame gateway, "
                    "replay simulator, evaluation toolkits, and dataset "
                    "builders.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(
            name, help=help_text, description=help_text,
            formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        p.set_defaults(func=func)
        return p

    p = add("serve", _cmd_serve, "run the frame-routing gateway")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--listen", help="host:port to bind (overrides config)")
    p.add_argument("--stats-log", help="append per-second stats JSONL here")

    p = add("mock-worker", _cmd_mock_worker,
            "run a scripted worker that answers from a sequence's ground truth")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--gateway", help="gateway host:port")
    p.add_argument("--id", required=True, help="unique worker id")
    p.add_argument("--kind", required=True,
                   choices=[k.value for k in WorkerKind])
    p.add_argument("--sequence", required=True, help="sequence directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--deadline-ms", type=int, help="per-worker reply deadline")
    p.add_argument("--delay-ms", type=float, default=0.0,
                   help="artificial processing delay per frame")
    p.add_argument("--max-frames", type=int, help="stop after this many replies")
    p.add_argument("--bbox-shift", type=float, default=0.0,
                   help="box center jitter as a fraction of extent")
    p.add_argument("--bbox-scale", type=float, nargs=2, default=[1.0, 1.0],
                   metavar=("LO", "HI"), help="box extent scale range")
    p.add_argument("--confidence", type=float, nargs=2, default=[1.0, 1.0],
                   metavar=("LO", "HI"), help="detection confidence range")
    p.add_argument("--pose-rot-deg", type=float, default=0.0,
                   help="max pose rotation noise in degrees")
    p.add_argument("--pose-trans-mm", type=float, default=0.0,
                   help="pose translation noise in mm per axis")
    p.add_argument("--text-corrupt-prob", type=float, default=0.0,
                   help="probability a reading is garbled")

    p = add("replay", _cmd_replay,
            "stream a recorded sequence to the gateway at a fixed rate")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--gateway", help="gateway host:port")
    p.add_argument("--sequence", required=True, help="sequence directory")
    p.add_argument("--fps", type=float, help="frame rate (overrides config)")
    p.add_argument("--max-frames", type=int, help="send only the first N frames")
    p.add_argument("--drain-timeout-s", type=float,
                   help="wait this long for stragglers after the last frame")
    p.add_argument("--annotations", help="write received annotations here (JSON)")

    p = add("stats", _cmd_stats, "query a running gateway's counters")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--gateway", help="gateway host:port")

    p = add("synth-gen", _cmd_synth_gen,
            "render a synthetic desk scene with exact reference annotations")
    p.add_argument("--out", required=True, help="output sequence directory")
    p.add_argument("--scene", help="scene spec JSON (defaults when omitted)")
    p.add_argument("--seed", type=int, help="RNG seed (random when omitted)")
    p.add_argument("--name", help="scene name override")
    p.add_argument("--frames", type=int, help="frame count override")
    p.add_argument("--fps", type=float, help="frame rate override")
    p.add_argument("--trajectory", choices=["static", "translate", "orbit"],
                   help="object motion override")

    p = add("label", _cmd_label,
            "turn segmentation masks into a YOLO train/val dataset")
    p.add_argument("--masks", required=True, help="directory of mask PGMs")
    p.add_argument("--images", required=True, help="directory of frame images")
    p.add_argument("--classes", required=True, help="classes.json mapping")
    p.add_argument("--out", required=True, help="dataset output directory")
    p.add_argument("--train-frac", type=float, default=0.8,
                   help="fraction of frames in the train split")
    p.add_argument("--seed", type=int, help="split seed (random when omitted)")
    p.add_argument("--overwrite", action="store_true",
                   help="replace an existing dataset directory")
    p.add_argument("--manual-baseline-minutes", type=float,
                   help="human labeling time for the same frames, for the "
                        "speedup figure")

    p = add("eval-det", _cmd_eval_det,
            "score detections against ground truth (mAP and point P/R)")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--sequence", help="sequence directory with ground truth")
    p.add_argument("--annotations", help="replay annotation dump to score")
    p.add_argument("--gt-labels", help="YOLO ground-truth label directory")
    p.add_argument("--pred-labels", help="YOLO prediction label directory "
                                         "(6th column = confidence)")
    p.add_argument("--iou", type=float, default=0.5,
                   help="IoU threshold for the point metrics")
    p.add_argument("--confidence-threshold", type=float,
                   help="confidence cut for the point metrics")

    p = add("eval-pose", _cmd_eval_pose,
            "score 6D poses with ADD / ADD-S thresholded accuracy")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--sequence", required=True, help="sequence directory")
    p.add_argument("--annotations", required=True,
                   help="replay annotation dump to score")
    p.add_argument("--model", help="object model file (defaults to the "
                                   "sequence's model)")
    p.add_argument("--threshold-fraction", type=float,
                   help="correctness threshold as a fraction of diameter")

    p = add("eval-ocr", _cmd_eval_ocr,
            "score character readout against ground truth")
    p.add_argument("--sequence", required=True, help="sequence directory")
    p.add_argument("--annotations", required=True,
                   help="replay annotation dump to score")
    p.add_argument("--iou", type=float, default=0.5,
                   help="IoU threshold for region matching")

    p = add("perturb-study", _cmd_perturb_study,
            "measure pose accuracy under bounding-box jitter")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--sequence", required=True, help="sequence directory")
    p.add_argument("--model", help="object model file (defaults to the "
                                   "sequence's model)")
    p.add_argument("--repetitions", type=int, help="perturbed runs")
    p.add_argument("--max-shift", type=float,
                   help="max center shift as a fraction of extent")
    p.add_argument("--scale-low", type=float, help="min extent scale")
    p.add_argument("--scale-high", type=float, help="max extent scale")
    p.add_argument("--threshold-fraction", type=float,
                   help="pose correctness threshold fraction")
    p.add_argument("--margin-px", type=float, default=1.0,
                   help="slack when gating points by the box")
    p.add_argument("--seed", type=int, help="perturbation seed")

    p = add("pnp-annotate", _cmd_pnp_annotate,
            "recover reference poses from 2D-3D point correspondences")
    p.add_argument("--sequence", required=True, help="sequence directory")
    p.add_argument("--points", help="correspondence JSON; when omitted, "
                                    "projects the stored poses as a "
                                    "consistency check")
    p.add_argument("--model", help="object model file for the consistency "
                                   "check (defaults to the sequence's model)")
    p.add_argument("--out", help="write recovered poses here (JSON)")
    p.add_argument("--object-id", type=int, default=0)
    p.add_argument("--max-rms-px", type=float,
                   help="fail when any frame's reprojection RMS exceeds this")

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (AI4ARError, ConfigError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("error: interrupted", file=sys.stderr)
        return 130
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
