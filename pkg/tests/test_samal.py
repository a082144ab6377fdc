"""Mask-to-box labeling, YOLO label records, split determinism, and the
atomic dataset writer.
"""
import json

import numpy as np
import pytest

from ai4ar import pnm
from ai4ar.protocol import BBox
from ai4ar.samal import (EDGE_TOL, ClassMap, DatasetError, DatasetFrame,
                         LabelError, LabelRecord, MaskImage, bbox_to_label,
                         build_dataset_from_masks, format_label_file,
                         mask_to_bbox, parse_label_file, scan_mask_dir,
                         sequence_to_labels, split_stems, write_dataset)

from oracles import bbox_scan


def blob_mask(width, height, x0, y0, x1, y1, fill=255):
    arr = np.zeros((height, width), dtype=np.uint8)
    arr[y0:y1 + 1, x0:x1 + 1] = fill
    return arr


# -- mask -> box ------------------------------------------------------------

def test_mask_to_bbox_matches_scan_oracle():
    rng = np.random.default_rng(8)
    for _ in range(200):
        arr = (rng.uniform(size=(24, 32)) < 0.05).astype(np.uint8) * 255
        got = mask_to_bbox(MaskImage.from_array(arr))
        want = bbox_scan(arr)
        if want is None:
            assert got is None
        else:
            assert (got.x, got.y, got.w, got.h) == want


def test_mask_to_bbox_edge_cases():
    assert mask_to_bbox(MaskImage.from_array(np.zeros((5, 5), np.uint8))) is None
    one = np.zeros((5, 7), np.uint8)
    one[3, 2] = 1  # any nonzero value counts, not just 255
    assert mask_to_bbox(MaskImage.from_array(one)) == BBox(2, 3, 1, 1)
    full = np.full((4, 6), 255, np.uint8)
    assert mask_to_bbox(MaskImage.from_array(full)) == BBox(0, 0, 6, 4)
    assert mask_to_bbox(MaskImage(width=0, height=0, data=b"")) is None


def test_mask_to_bbox_is_tight():
    rng = np.random.default_rng(9)
    for _ in range(50):
        arr = (rng.uniform(size=(20, 20)) < 0.1).astype(np.uint8) * 255
        box = mask_to_bbox(MaskImage.from_array(arr))
        if box is None:
            continue
        x0, y0 = int(box.x), int(box.y)
        x1, y1 = int(box.x2) - 1, int(box.y2) - 1
        # every edge of the box touches at least one object pixel
        assert arr[y0, x0:x1 + 1].any()
        assert arr[y1, x0:x1 + 1].any()
        assert arr[y0:y1 + 1, x0].any()
        assert arr[y0:y1 + 1, x1].any()
        # and nothing lies outside it
        outside = arr.copy()
        outside[y0:y1 + 1, x0:x1 + 1] = 0
        assert not outside.any()


def test_mask_image_validation():
    with pytest.raises(LabelError):
        MaskImage(width=4, height=4, data=b"123")
    with pytest.raises(LabelError):
        MaskImage.from_array(np.zeros((2, 2, 3), np.uint8))
    arr = np.arange(6, dtype=np.uint8).reshape(2, 3)
    assert np.array_equal(MaskImage.from_array(arr).to_array(), arr)


# -- YOLO label records -------------------------------------------------------

def test_label_line_is_six_decimals():
    rec = LabelRecord(class_id=0, cx=0.501563, cy=0.506944, w=0.18125,
                      h=0.275)
    assert rec.to_line() == "0 0.501563 0.506944 0.181250 0.275000"
    assert LabelRecord.from_line(rec.to_line()) == LabelRecord(
        0, 0.501563, 0.506944, 0.18125, 0.275)


def test_label_roundtrip_stays_within_half_pixel():
    rng = np.random.default_rng(21)
    W, H = 640, 360
    for _ in range(300):
        w = int(rng.integers(1, W + 1))
        h = int(rng.integers(1, H + 1))
        x = int(rng.integers(0, W - w + 1))
        y = int(rng.integers(0, H - h + 1))
        bbox = BBox(x, y, w, h)
        rec = bbox_to_label(bbox, 2, W, H)
        back = LabelRecord.from_line(rec.to_line()).to_pixel_bbox(W, H)
        for got, want in ((back.x, bbox.x), (back.y, bbox.y),
                          (back.x2, bbox.x2), (back.y2, bbox.y2)):
            assert abs(got - want) <= 0.5
            assert abs(got - want) <= 1e-2  # quantization is far tighter


def test_label_validation():
    with pytest.raises(LabelError):
        LabelRecord(class_id=-1, cx=0.5, cy=0.5, w=0.1, h=0.1)
    with pytest.raises(LabelError):
        LabelRecord(class_id=0, cx=1.5, cy=0.5, w=0.1, h=0.1)
    with pytest.raises(LabelError):
        LabelRecord(class_id=0, cx=0.5, cy=0.5, w=0.0, h=0.1)
    # quantization slack: barely past the edge is fine, clearly past is not
    LabelRecord(class_id=0, cx=1.0, cy=0.5, w=EDGE_TOL, h=0.1)
    with pytest.raises(LabelError):
        LabelRecord(class_id=0, cx=1.0, cy=0.5, w=1e-4, h=0.1)


def test_label_from_line_errors():
    with pytest.raises(LabelError):
        LabelRecord.from_line("0 0.5 0.5 0.1")
    with pytest.raises(LabelError):
        LabelRecord.from_line("0 0.5 0.5 0.1 zero")


def test_bbox_to_label_rejects_out_of_frame():
    with pytest.raises(LabelError):
        bbox_to_label(BBox(630, 0, 20, 10), 0, 640, 360)
    with pytest.raises(LabelError):
        bbox_to_label(BBox(0, 0, 10, 10), 0, 0, 360)


def test_label_file_roundtrip():
    records = [LabelRecord(0, 0.5, 0.5, 0.25, 0.25),
               LabelRecord(3, 0.1, 0.9, 0.2, 0.125)]
    text = format_label_file(records)
    assert text.endswith("\n") and text.count("\n") == 2
    assert parse_label_file(text) == records
    assert parse_label_file("") == []
    assert parse_label_file("\n  \n") == []


def test_sequence_to_labels_ordering_and_gaps():
    w, h = 16, 12
    frames = {
        "v_000000": {
            2: MaskImage.from_array(blob_mask(w, h, 8, 2, 11, 5)),
            1: MaskImage.from_array(blob_mask(w, h, 0, 0, 3, 3)),
            5: MaskImage.from_array(np.zeros((h, w), np.uint8)),  # empty
        },
        "v_000001": {
            1: MaskImage.from_array(np.zeros((h, w), np.uint8)),
        },
    }
    class_map = {1: 0, 2: 1, 5: 0}
    out = sequence_to_labels(frames, class_map, w, h)
    assert [r.class_id for r in out["v_000000"]] == [0, 1]  # object-id order
    assert out["v_000001"] == []
    got = out["v_000000"][0].to_pixel_bbox(w, h)
    assert (got.x, got.y, got.w, got.h) == pytest.approx((0, 0, 4, 4))


def test_sequence_to_labels_validation():
    w, h = 16, 12
    wrong = {"f": {1: MaskImage.from_array(blob_mask(8, 8, 0, 0, 1, 1))}}
    with pytest.raises(LabelError):
        sequence_to_labels(wrong, {1: 0}, w, h)
    unmapped = {"f": {9: MaskImage.from_array(blob_mask(w, h, 0, 0, 1, 1))}}
    with pytest.raises(LabelError):
        sequence_to_labels(unmapped, {1: 0}, w, h)


# -- split ----------------------------------------------------------------

def test_split_sizes_and_determinism():
    stems = [f"video_{i:06d}" for i in range(459)]
    train, val = split_stems(stems, (0.8, 0.2), seed=7)
    assert (len(train), len(val)) == (367, 92)
    assert sorted(train + val) == sorted(stems)
    assert not set(train) & set(val)
    assert train == sorted(train) and val == sorted(val)

    again = split_stems(list(reversed(stems)), (0.8, 0.2), seed=7)
    assert again == (train, val)  # input order is irrelevant
    other_train, _ = split_stems(stems, (0.8, 0.2), seed=8)
    assert other_train != train


def test_split_validation():
    with pytest.raises(DatasetError):
        split_stems(["a", "b"], (0.7, 0.2), seed=0)
    with pytest.raises(DatasetError):
        split_stems(["a", "b"], (1.0, 0.0), seed=0)
    with pytest.raises(DatasetError):
        split_stems(["a", "a"], (0.8, 0.2), seed=0)


# -- on-disk dataset ---------------------------------------------------------

def make_frames(tmp_path, count=3):
    src = tmp_path / "src"
    src.mkdir(exist_ok=True)
    frames = []
    for i in range(count):
        stem = f"vid_{i:06d}"
        img = (np.full((12, 16), i * 20, np.uint8))
        path = src / f"{stem}.pgm"
        pnm.write_pnm(path, img)
        rec = LabelRecord(0, 0.5, 0.5, 0.25, 0.25)
        frames.append(DatasetFrame(stem=stem, image_path=path,
                                   records=(rec,), video="vid",
                                   frame_index=i))
    return frames


def test_write_dataset_layout(tmp_path):
    frames = make_frames(tmp_path, 5)
    out = tmp_path / "dataset"
    manifest = write_dataset(frames, out, classes=["widget"],
                             split_fractions=(0.8, 0.2), seed=3)
    data = json.loads((out / "manifest.json").read_text())
    assert data["classes"] == ["widget"]
    assert sorted(data["split"]["train"] + data["split"]["val"]) == \
        sorted(f.stem for f in frames)
    assert set(data["split"]["train"]) == set(manifest.train)
    for f in frames:
        assert (out / "images" / f"{f.stem}.pgm").is_file()
        text = (out / "labels" / f"{f.stem}.txt").read_text()
        assert parse_label_file(text) == list(f.records)
    # no staging leftovers next to the result
    assert [p.name for p in tmp_path.iterdir()
            if p.name.startswith(".dataset")] == []


def test_write_dataset_overwrite_rules(tmp_path):
    frames = make_frames(tmp_path)
    out = tmp_path / "dataset"
    write_dataset(frames, out, classes=["w"])
    with pytest.raises(DatasetError):
        write_dataset(frames, out, classes=["w"])
    marker = out / "labels" / "stale.txt"
    marker.write_text("junk")
    write_dataset(frames, out, classes=["w"], overwrite=True)
    assert not marker.exists()  # replaced wholesale, not merged


def test_write_dataset_failure_leaves_no_output(tmp_path):
    frames = make_frames(tmp_path)
    broken = frames + [DatasetFrame(stem="vid_000099",
                                    image_path=tmp_path / "nope.pgm",
                                    records=(), video="vid", frame_index=99)]
    out = tmp_path / "dataset"
    with pytest.raises(DatasetError):
        write_dataset(broken, out, classes=["w"])
    assert not out.exists()
    assert [p.name for p in tmp_path.iterdir()
            if p.name.startswith(".dataset")] == []


def test_scan_mask_dir_grouping(tmp_path):
    masks = tmp_path / "masks"
    masks.mkdir()
    for name in ("run_000000_1.pgm", "run_000000_2.pgm", "run_000001_1.pgm"):
        pnm.write_pnm(masks / name, np.zeros((4, 4), np.uint8))
    (masks / "notes.txt").write_text("ignored")
    grouped = scan_mask_dir(masks)
    assert sorted(grouped) == ["run_000000", "run_000001"]
    assert sorted(grouped["run_000000"]) == [1, 2]

    pnm.write_pnm(masks / "badname.pgm", np.zeros((4, 4), np.uint8))
    with pytest.raises(DatasetError):
        scan_mask_dir(masks)


def test_scan_mask_dir_empty(tmp_path):
    empty = tmp_path / "none"
    empty.mkdir()
    with pytest.raises(DatasetError):
        scan_mask_dir(empty)


def test_class_map_load(tmp_path):
    path = tmp_path / "classes.json"
    path.write_text(json.dumps({
        "names": ["dial", "screen"],
        "objects": {"1": {"class_id": 0, "prompt": [12, 34]},
                    "2": {"class_id": 1}},
    }))
    cm = ClassMap.load(path)
    assert cm.names == ("dial", "screen")
    assert cm.object_to_class == {1: 0, 2: 1}
    assert cm.prompts == {1: (12.0, 34.0)}

    path.write_text(json.dumps({"names": ["dial"],
                                "objects": {"1": {"class_id": 5}}}))
    with pytest.raises(DatasetError):
        ClassMap.load(path)
    path.write_text(json.dumps({"names": ["dial"], "objects": {}}))
    with pytest.raises(DatasetError):
        ClassMap.load(path)


def test_build_dataset_from_masks_end_to_end(tmp_path):
    masks_dir = tmp_path / "masks"
    images_dir = tmp_path / "images"
    masks_dir.mkdir()
    images_dir.mkdir()
    W, H = 32, 24
    rng = np.random.default_rng(4)
    truth = {}
    for i in range(6):
        stem = f"run_{i:06d}"
        pnm.write_pnm(images_dir / f"{stem}.pgm",
                      rng.integers(0, 255, size=(H, W)).astype(np.uint8))
        x0, y0 = int(rng.integers(0, 20)), int(rng.integers(0, 14))
        arr = blob_mask(W, H, x0, y0, x0 + 6, y0 + 5)
        pnm.write_pnm(masks_dir / f"{stem}_1.pgm", arr)
        truth[stem] = bbox_scan(arr)
    classes = tmp_path / "classes.json"
    classes.write_text(json.dumps({"names": ["widget"],
                                   "objects": {"1": {"class_id": 0}}}))
    out = tmp_path / "dataset"
    manifest, timing = build_dataset_from_masks(
        masks_dir, images_dir, ClassMap.load(classes), out,
        split_fractions=(0.5, 0.5), seed=1, manual_baseline_minutes=30.0)
    assert (len(manifest.train), len(manifest.val)) == (3, 3)
    for stem, (x, y, w, h) in truth.items():
        recs = parse_label_file((out / "labels" / f"{stem}.txt").read_text())
        assert len(recs) == 1
        back = recs[0].to_pixel_bbox(W, H)
        assert (back.x, back.y, back.w, back.h) == pytest.approx(
            (x, y, w, h), abs=1e-3)
    assert timing.frames == 6
    assert timing.frames_per_s > 0
    report = timing.to_dict()
    assert report["speedup_vs_manual"] == pytest.approx(
        30.0 * 60.0 / timing.wall_time_s)
