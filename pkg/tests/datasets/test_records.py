"""
Tests for the JSON-lines record files.
"""
import json

import numpy as np
import pytest

from datasets.records import (
    gt_from_dict, gt_to_dict, read_detections, read_ground_truth, read_header, read_records,
    read_weak_annotations, record_from_dict, record_to_dict, write_ground_truth, write_records, write_results,
    write_weak_annotations,
)
from datasets.synthetic import KITTI_CAMERA, SceneSpec, generate_scene, gt_to_records, scene_weaks
from services.annotation_service import AnnotationService
from services.inference_service import run_inference
from utils.errors import ParseError, ValidationError


@pytest.fixture
def annotated(bank):
    scene = generate_scene(SceneSpec(seed=3, n_vehicles=3), bank)
    return scene, AnnotationService(bank, KITTI_CAMERA).annotate_scene(scene)


def test_record_dict_round_trip(bank, annotated):
    _, gts = annotated
    for record in gt_to_records(gts, bank, image_id="000003"):
        back = record_from_dict(json.loads(json.dumps(record_to_dict(record))))
        assert back.image_id == "000003"
        assert back.box == record.box
        assert np.array_equal(back.parts2d, record.parts2d)
        assert np.array_equal(back.vis_scores, record.vis_scores)
        assert np.array_equal(back.template_sim, record.template_sim)


def test_rows_reject_missing_and_unknown_keys(bank, annotated):
    _, gts = annotated
    row = record_to_dict(gt_to_records(gts, bank)[0])
    with pytest.raises(ValidationError, match="unknown keys"):
        record_from_dict({**row, "extra": 1})
    del row["score"]
    with pytest.raises(ValidationError, match="missing keys"):
        record_from_dict(row)
    gt_row = gt_to_dict(gts[0], "0")
    gt_row["parts3d"] = [[1.0, 2.0]] * len(gt_row["parts3d"])
    with pytest.raises(ValidationError):
        gt_from_dict(gt_row)


def test_record_file_with_header(tmp_path, bank, annotated):
    _, gts = annotated
    records = gt_to_records(gts, bank, image_id="000003")
    path = write_records(tmp_path / "records.jsonl", records, header={"seed": 3})
    assert read_header(path) == {"seed": 3}
    back = read_records(path)
    assert len(back) == len(records)
    lines = path.read_text().splitlines()
    assert json.loads(lines[1]) == record_to_dict(records[0])


def test_bad_row_reports_line_number(tmp_path, bank, annotated):
    _, gts = annotated
    row = record_to_dict(gt_to_records(gts, bank)[0])
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps({"header": {}}) + "\n" + json.dumps(row) + "\n" + json.dumps({**row, "x": 0}) + "\n")
    with pytest.raises(ParseError) as exc:
        read_records(path)
    assert exc.value.line == 3
    path.write_text(json.dumps(row) + "\n" + json.dumps({"header": {}}) + "\n")
    with pytest.raises(ParseError, match="header row must come first"):
        read_records(path)
    path.write_text("{not json\n")
    with pytest.raises(ParseError) as exc:
        read_records(path)
    assert exc.value.line == 1


def test_ground_truth_file_round_trip(tmp_path, annotated):
    _, gts = annotated
    path = write_ground_truth(tmp_path / "gt.jsonl", {"000003": gts})
    back = read_ground_truth(path)["000003"]
    assert len(back) == len(gts)
    for a, b in zip(back, gts):
        assert a.B == b.B and a.B3d == b.B3d and a.model_id == b.model_id
        assert np.array_equal(a.V, b.V) and np.array_equal(a.S, b.S) and np.array_equal(a.S3d, b.S3d)
    row = json.loads(path.read_text().splitlines()[0])
    assert set(row["visibility"]) <= {"visible", "occluded", "self_occluded", "truncated"}


def test_weak_annotation_file(tmp_path, annotated):
    scene, _ = annotated
    weaks, ids = scene_weaks(scene)
    path = write_weak_annotations(tmp_path / "weak.jsonl", {"000003": weaks}, {"000003": ids}, header={"seed": 3})
    header, grouped = read_weak_annotations(path)
    assert header == {"seed": 3}
    assert [w.box3d for w, _ in grouped["000003"]] == [w.box3d for w in weaks]
    assert [m for _, m in grouped["000003"]] == ids


def test_results_read_back_as_detections(tmp_path, bank, annotated):
    _, gts = annotated
    records = gt_to_records(gts, bank, image_id="000003")
    outputs = run_inference(records, bank, KITTI_CAMERA)
    path = write_results(tmp_path / "results.jsonl", {"000003": outputs})
    dets = read_detections(path)["000003"]
    assert len(dets) == len(outputs)
    for det, (record, recovered) in zip(dets, outputs):
        assert det.box == record.box
        assert det.yaw == recovered.box3d.yaw
        assert np.array_equal(det.visibility, record.visibility)
