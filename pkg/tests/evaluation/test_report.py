"""
Tests for the evaluation report: pooling over images, difficulty levels and curve output.
"""
import math

import numpy as np
import pytest

from datasets.noise import NoiseSpec, perturb_records
from datasets.synthetic import KITTI_CAMERA, SceneSpec, generate_scene, generate_scenes, gt_to_records
from evaluation.difficulty import Difficulty
from evaluation.metrics import EvalConfig
from evaluation.report import (
    EvalDetection, EvalObject, ImageGT, detection_from_result, evaluate, evaluate_all_levels, object_from_vehicle_gt,
    write_pr_curve_csv,
)
from geometry.boxes import Box2D, ScoredBox, Template3D
from services.annotation_service import AnnotationService
from services.inference_service import run_inference

TEMPLATE = Template3D(w=1.8, h=1.5, l=4.2)


def _obj(cx, h=60.0, occlusion=0, yaw=0.0, center=(0.0, 0.0, 20.0)):
    return EvalObject(box=Box2D(cx, 200.0, 80.0, h), yaw=yaw, center=center, occlusion=occlusion,
                      parts2d=np.array([[cx, 200.0], [cx + 10.0, 210.0]]), visibility=np.array([0, 1]),
                      template=TEMPLATE)


def _det(obj, score, yaw=None, center=None):
    return EvalDetection(box=ScoredBox(obj.box, score), yaw=obj.yaw if yaw is None else yaw,
                         center=obj.center if center is None else center, parts2d=obj.parts2d,
                         visibility=obj.visibility, template=obj.template)


def test_perfect_detections_score_one():
    gts = {"a": ImageGT([_obj(100.0), _obj(400.0)]), "b": ImageGT([_obj(700.0)])}
    dets = {k: [_det(o, 0.9 - 0.1 * i) for i, o in enumerate(v.objects)] for k, v in gts.items()}
    report = evaluate(dets, gts)
    assert report.ap == pytest.approx(1.0)
    assert report.aos == pytest.approx(1.0)
    assert report.alp == {"1.0": pytest.approx(1.0), "2.0": pytest.approx(1.0)}
    assert (report.part_loc, report.vis_acc, report.template_acc) == (1.0, 1.0, 1.0)
    assert (report.n_images, report.n_gt, report.n_det) == (2, 3, 3)


def test_pooling_and_error_weights():
    gts = {"a": ImageGT([_obj(100.0)]), "b": ImageGT([_obj(400.0)])}
    dets = {"a": [_det(gts["a"].objects[0], 0.9, yaw=math.pi / 2, center=(1.5, 0.0, 20.0))],
            "b": []}
    report = evaluate(dets, gts)
    # one of two GTs found with precision 1: recall levels 0..0.5 reached
    assert report.ap == pytest.approx(6 / 11)
    assert report.aos == pytest.approx(0.5 * 6 / 11)
    assert report.alp["1.0"] == 0.0 and report.alp["2.0"] == pytest.approx(6 / 11)


def test_images_missing_from_either_side():
    gts = {"a": ImageGT([_obj(100.0)])}
    dets = {"z": [_det(_obj(100.0), 0.5)]}
    report = evaluate(dets, gts)
    assert report.ap == 0.0 and report.n_images == 2
    assert evaluate({}, {}).ap == 0.0


def test_dontcare_regions_drop_false_positives():
    stray = _obj(900.0)
    gts = {"a": ImageGT([_obj(100.0)], dontcare=[Box2D(900.0, 200.0, 120.0, 100.0)])}
    dets = {"a": [_det(stray, 0.95), _det(gts["a"].objects[0], 0.5)]}
    assert evaluate(dets, gts).ap == pytest.approx(1.0)
    gts["a"].dontcare.clear()
    assert evaluate(dets, gts).ap == pytest.approx(0.5)


def test_difficulty_levels_ignore_hard_objects():
    small, occluded = _obj(100.0, h=30.0), _obj(400.0, occlusion=2)
    gts = {"a": ImageGT([small, occluded])}
    dets = {"a": [_det(small, 0.9), _det(occluded, 0.8)]}
    levels = evaluate_all_levels(dets, gts)
    assert levels["easy"].n_gt == 0 and levels["easy"].ap == 0.0
    assert levels["moderate"].n_gt == 1 and levels["moderate"].ap == pytest.approx(1.0)
    assert levels["hard"].n_gt == 2 and levels["hard"].ap == pytest.approx(1.0)
    assert levels["mean"]["ap"] == pytest.approx(2 / 3)
    assert set(levels["mean"]["alp"]) == {"1.0", "2.0"}


def test_report_schema_and_text():
    gts = {"a": ImageGT([_obj(100.0)])}
    report = evaluate({"a": [_det(gts["a"].objects[0], 0.7)]}, gts, EvalConfig(interpolation=41))
    doc = report.to_dict(EvalConfig(interpolation=41).to_dict())
    assert set(doc) == {"config", "ap", "aos", "alp", "part_loc", "vis_acc", "template_acc",
                        "n_images", "n_gt", "n_det"}
    assert doc["config"]["interpolation"] == 41
    text = report.format_text("synthetic")
    assert text.startswith("synthetic") and "ALP@1.0m" in text


def test_curve_csv(tmp_path):
    gts = {"a": ImageGT([_obj(100.0), _obj(400.0)])}
    dets = {"a": [_det(gts["a"].objects[0], 0.9), _det(_obj(700.0), 0.4)]}
    report = evaluate(dets, gts)
    assert [row["threshold"] for row in report.curve] == [0.9, 0.4]
    path = write_pr_curve_csv(tmp_path / "curves" / "pr.csv", report.curve)
    lines = path.read_text().splitlines()
    assert lines[0] == ("threshold,recall,precision,orientation_similarity,"
                        "localization_precision_1.0m,localization_precision_2.0m")
    assert lines[1].split(",")[:3] == ["0.9", "0.5", "1"]
    assert len(lines) == 3
    empty = write_pr_curve_csv(tmp_path / "empty.csv", [])
    assert len(empty.read_text().splitlines()) == 1


def test_annotated_scene_scores_itself_perfectly(bank):
    scene = generate_scene(SceneSpec(seed=5, n_vehicles=4), bank)
    gts = AnnotationService(bank, KITTI_CAMERA).annotate_scene(scene)
    objects = [object_from_vehicle_gt(g) for g in gts]
    dets = [_det(o, 1.0 - 0.1 * i) for i, o in enumerate(objects)]
    report = evaluate({"0": dets}, {"0": ImageGT(objects)})
    assert report.ap == pytest.approx(1.0)
    assert report.part_loc == 1.0 and report.vis_acc == 1.0 and report.template_acc == 1.0


def test_default_and_explicit_levels_accept_enum_members():
    gts = {"a": ImageGT([_obj(100.0)])}
    dets = {"a": [_det(gts["a"].objects[0], 0.8)]}
    assert evaluate(dets, gts, EvalConfig()).ap == pytest.approx(1.0)
    assert evaluate(dets, gts, EvalConfig(difficulty=Difficulty.HARD)).ap == pytest.approx(1.0)


def _pipeline(bank, spec, n_images, noise=None, seed=0):
    service = AnnotationService(bank, KITTI_CAMERA)
    detections, ground_truth = {}, {}
    for image_id, scene in generate_scenes(spec, bank, n_images).items():
        gts = service.annotate_scene(scene)
        records = gt_to_records(gts, bank, image_id)
        if noise is not None:
            records = perturb_records(records, noise, seed)
        pairs = run_inference(records, bank, KITTI_CAMERA)
        detections[image_id] = [detection_from_result(rec, rec3d) for rec, rec3d in pairs]
        ground_truth[image_id] = ImageGT([object_from_vehicle_gt(g) for g in gts])
    return evaluate(detections, ground_truth)


def test_ideal_records_recover_every_metric_exactly(bank):
    report = _pipeline(bank, SceneSpec(seed=7), 20)
    assert report.n_det == report.n_gt > 0
    for value in (report.ap, report.aos, report.alp["1.0"], report.alp["2.0"], report.part_loc,
                  report.vis_acc, report.template_acc):
        assert abs(value - 1.0) <= 1e-9


def test_pixel_noise_keeps_near_vehicles_localized(bank):
    report = _pipeline(bank, SceneSpec(seed=3, depth_range=(5.0, 25.0)), 10, NoiseSpec(part_sigma=1.0), seed=5)
    assert report.ap >= 0.95
    assert report.alp["1.0"] >= 0.9
