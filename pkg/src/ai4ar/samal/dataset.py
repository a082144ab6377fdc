"""Dataset assembly: seeded train/val split, atomic on-disk layout, and
the mask-directory ingestion pipeline.

Output layout:

    out/
      manifest.json
      images/<stem>.pgm
      labels/<stem>.txt      one per image, possibly empty

Writes go to a staging directory that is renamed into place only when
complete, so a crash or rejected overwrite never leaves a half-written
dataset at the destination.
"""
from __future__ import annotations

import json
import os
import re
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .. import pnm
from ..errors import AI4ARError
from .labeling import (LabelRecord, MaskImage, format_label_file,
                       sequence_to_labels)

MASK_NAME_RE = re.compile(r"^(?P<video>.+)_(?P<frame>\d{6})_(?P<obj>\d+)\.pgm$")


class DatasetError(AI4ARError):
    pass


@dataclass(frozen=True)
class DatasetFrame:
    """One frame heading into a dataset: where its image lives now, its
    label records, and where it came from."""

    stem: str
    image_path: Path
    records: tuple[LabelRecord, ...]
    video: str
    frame_index: int

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "image_path", Path(self.image_path))


@dataclass(frozen=True)
class DatasetManifest:
    classes: tuple[str, ...]
    split_fractions: tuple[float, float]
    seed: int
    train: tuple[str, ...]
    val: tuple[str, ...]
    frames: dict
    source: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"version": 1,
                "classes": list(self.classes),
                "split_fractions": {"train": self.split_fractions[0],
                                    "val": self.split_fractions[1]},
                "seed": self.seed,
                "images_dir": "images",
                "labels_dir": "labels",
                "split": {"train": list(self.train), "val": list(self.val)},
                "frames": self.frames,
                "source": self.source}


@dataclass(frozen=True)
class TimingReport:
    frames: int
    wall_time_s: float
    frames_per_s: float
    manual_baseline_minutes: float | None = None

    def to_dict(self) -> dict:
        d = {"frames": self.frames, "wall_time_s": self.wall_time_s,
             "frames_per_s": self.frames_per_s}
        if self.manual_baseline_minutes is not None:
            d["manual_baseline_minutes"] = self.manual_baseline_minutes
            d["speedup_vs_manual"] = (self.manual_baseline_minutes * 60.0
                                      / self.wall_time_s)
        return d


def split_stems(stems: Sequence[str], fractions: tuple[float, float],
                seed: int) -> tuple[list[str], list[str]]:
    """Deterministic shuffled split; same stems + fractions + seed always
    produce the same membership."""
    if abs(fractions[0] + fractions[1] - 1.0) > 1e-9:
        raise DatasetError(f"split fractions {fractions} do not sum to 1")
    if not 0.0 < fractions[0] < 1.0:
        raise DatasetError(f"train fraction {fractions[0]} outside (0, 1)")
    ordered = sorted(stems)
    if len(set(ordered)) != len(ordered):
        raise DatasetError("duplicate stems in dataset")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ordered))
    n_train = int(round(fractions[0] * len(ordered)))
    n_train = min(max(n_train, 0), len(ordered))
    train = sorted(ordered[i] for i in perm[:n_train])
    val = sorted(ordered[i] for i in perm[n_train:])
    return train, val


def write_dataset(frames: Sequence[DatasetFrame], out_dir: str | Path, *,
                  classes: Sequence[str],
                  split_fractions: tuple[float, float] = (0.8, 0.2),
                  seed: int = 0, overwrite: bool = False,
                  source: dict | None = None) -> DatasetManifest:
    """Assemble the dataset at out_dir via a staging directory.

    Refuses to touch an existing non-empty out_dir unless overwrite is
    set.  The staging directory lives next to the destination so the
    final rename stays on one filesystem.
    """
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()) and not overwrite:
        raise DatasetError(f"{out} already exists; pass overwrite to replace it")
    if not frames:
        raise DatasetError("no frames to write")
    stems = [f.stem for f in frames]
    train, val = split_stems(stems, split_fractions, seed)
    by_stem = {f.stem: f for f in frames}

    stage = out.parent / f".{out.name}.staging-{os.getpid()}"
    if stage.exists():
        shutil.rmtree(stage)
    try:
        (stage / "images").mkdir(parents=True)
        (stage / "labels").mkdir()
        frame_index = {}
        for stem in sorted(by_stem):
            f = by_stem[stem]
            if not f.image_path.is_file():
                raise DatasetError(f"image {f.image_path} missing for {stem}")
            suffix = f.image_path.suffix or ".pgm"
            image_rel = f"images/{stem}{suffix}"
            shutil.copyfile(f.image_path, stage / image_rel)
            label_rel = f"labels/{stem}.txt"
            (stage / label_rel).write_text(format_label_file(f.records))
            frame_index[stem] = {"video": f.video,
                                 "frame_index": f.frame_index,
                                 "image": image_rel, "label": label_rel}
        manifest = DatasetManifest(classes=tuple(classes),
                                   split_fractions=split_fractions,
                                   seed=seed, train=tuple(train),
                                   val=tuple(val), frames=frame_index,
                                   source=dict(source or {}))
        (stage / "manifest.json").write_text(
            json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
        if out.exists():
            shutil.rmtree(out)
        os.rename(stage, out)
    except Exception:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    return manifest


@dataclass(frozen=True)
class ClassMap:
    """Parsed classes.json: class names, object-id to class-id mapping,
    and optional per-object prompt points kept as provenance."""

    names: tuple[str, ...]
    object_to_class: dict[int, int]
    prompts: dict[int, tuple[float, float]] = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path) -> "ClassMap":
        data = json.loads(Path(path).read_text())
        names = tuple(str(n) for n in data["names"])
        objects = data["objects"]
        mapping = {}
        prompts = {}
        for key, spec in objects.items():
            oid = int(key)
            cid = int(spec["class_id"])
            if not 0 <= cid < len(names):
                raise DatasetError(f"object {oid}: class_id {cid} has no name")
            mapping[oid] = cid
            if "prompt" in spec:
                px, py = spec["prompt"]
                prompts[oid] = (float(px), float(py))
        if not mapping:
            raise DatasetError(f"{path}: no objects defined")
        return cls(names=names, object_to_class=mapping, prompts=prompts)


def scan_mask_dir(masks_dir: str | Path) -> dict[str, dict[int, Path]]:
    """Group mask files by frame stem; names must look like
    <video>_<frame:06d>_<object_id>.pgm."""
    masks_dir = Path(masks_dir)
    grouped: dict[str, dict[int, Path]] = {}
    for p in sorted(masks_dir.iterdir()):
        if not p.is_file() or p.suffix != ".pgm":
            continue
        m = MASK_NAME_RE.match(p.name)
        if m is None:
            raise DatasetError(f"mask name {p.name!r} does not match "
                               f"<video>_<frame:06d>_<object_id>.pgm")
        stem = f"{m['video']}_{m['frame']}"
        grouped.setdefault(stem, {})[int(m["obj"])] = p
    if not grouped:
        raise DatasetError(f"no .pgm masks found in {masks_dir}")
    return grouped


def build_dataset_from_masks(masks_dir: str | Path, images_dir: str | Path,
                             class_map: ClassMap, out_dir: str | Path, *,
                             split_fractions: tuple[float, float] = (0.8, 0.2),
                             seed: int = 0, overwrite: bool = False,
                             manual_baseline_minutes: float | None = None
                             ) -> tuple[DatasetManifest, TimingReport]:
    """Full labeling run: masks in, train/val dataset out, with timing."""
    t0 = time.perf_counter()
    images_dir = Path(images_dir)
    grouped = scan_mask_dir(masks_dir)

    masks: dict[str, dict[int, MaskImage]] = {}
    width = height = None
    for stem, objects in grouped.items():
        loaded = {}
        for oid, path in objects.items():
            arr = pnm.read_pnm(path)
            if arr.ndim != 2:
                raise DatasetError(f"{path}: masks must be single-channel")
            if width is None:
                height, width = arr.shape
            loaded[oid] = MaskImage.from_array(arr)
        masks[stem] = loaded

    labels = sequence_to_labels(masks, class_map.object_to_class, width, height)

    frames = []
    for stem in sorted(labels):
        image_path = None
        for suffix in (".pgm", ".ppm"):
            candidate = images_dir / f"{stem}{suffix}"
            if candidate.is_file():
                image_path = candidate
                break
        if image_path is None:
            raise DatasetError(f"no image for frame {stem!r} in {images_dir}")
        video, _, frame_str = stem.rpartition("_")
        frames.append(DatasetFrame(stem=stem, image_path=image_path,
                                   records=tuple(labels[stem]), video=video,
                                   frame_index=int(frame_str)))

    source = {"masks_dir": str(Path(masks_dir).resolve()),
              "images_dir": str(images_dir.resolve())}
    if class_map.prompts:
        source["prompts"] = {str(k): list(v)
                             for k, v in sorted(class_map.prompts.items())}
    manifest = write_dataset(frames, out_dir, classes=class_map.names,
                             split_fractions=split_fractions, seed=seed,
                             overwrite=overwrite, source=source)
    wall = time.perf_counter() - t0
    timing = TimingReport(frames=len(frames), wall_time_s=wall,
                          frames_per_s=len(frames) / wall if wall > 0 else 0.0,
                          manual_baseline_minutes=manual_baseline_minutes)
    return manifest, timing
