"""
Tests for KITTI label and calib parsing and write-back.
"""
import math
from pathlib import Path

import numpy as np
import pytest

from datasets.kitti import (
    format_label_line, kitti_object_from_result, load_kitti_frame, load_kitti_ground_truth, parse_calib_text,
    parse_label_line, parse_label_text, write_kitti_labels,
)
from geometry.boxes import Box2D, Box3D, Template3D
from utils.errors import MissingCalib, ParseError

KITTI_DIR = Path(__file__).resolve().parents[2] / "data" / "kitti"
LABEL = KITTI_DIR / "label_2" / "000000.txt"
CALIB = KITTI_DIR / "calib" / "000000.txt"


def test_first_label_line():
    obj = parse_label_text(LABEL.read_text())[0]
    assert obj.type == "Car"
    assert obj.box2d.cx == pytest.approx(600.565)
    assert obj.box2d.cy == pytest.approx(186.725)
    assert obj.box3d.template.as_tuple() == pytest.approx((1.67, 1.65, 3.64))
    # label y is the bottom face; the box center sits half a height above it
    assert obj.box3d.center == pytest.approx((-0.65, 1.71 - 0.825, 46.70))
    assert obj.location == pytest.approx([-0.65, 1.71, 46.70])
    assert obj.box3d.yaw == pytest.approx(-1.59)
    assert obj.score is None


def test_vehicle_filter_keeps_dontcare():
    objects = parse_label_text(LABEL.read_text())
    assert [o.type for o in objects] == ["Car", "Car", "Van", "Car", "Car", "Car", "Truck", "DontCare"]
    assert objects[-1].box3d is None
    assert len(parse_label_text(LABEL.read_text(), keep_all=True)) == 10


def test_write_back_reproduces_file(tmp_path):
    text = LABEL.read_text()
    objects = parse_label_text(text, keep_all=True)
    assert [format_label_line(o) for o in objects] == text.splitlines()
    out = write_kitti_labels(tmp_path / "out" / "000000.txt", objects)
    assert out.read_text().splitlines() == text.splitlines()


def test_malformed_lines_report_position():
    good = LABEL.read_text().splitlines()[0]
    with pytest.raises(ParseError) as exc:
        parse_label_text(good + "\nCar 0.00 0 -1.58 587.01\n", path="bad.txt")
    assert exc.value.line == 2 and exc.value.path == "bad.txt"
    with pytest.raises(ParseError):
        parse_label_line(good.replace("46.70", "far"))
    with pytest.raises(ParseError):
        parse_label_line(good.replace("1.65 1.67", "-1.65 1.67"))


def test_score_column_is_optional():
    obj = parse_label_line(LABEL.read_text().splitlines()[0] + " 0.87")
    assert obj.score == pytest.approx(0.87)
    assert format_label_line(obj).endswith(" 0.87")


def test_calib_p2_row():
    camera = parse_calib_text(CALIB.read_text())
    assert camera.fx == pytest.approx(721.5377)
    assert camera.fy == pytest.approx(721.5377)
    assert (camera.cx, camera.cy) == pytest.approx((609.5593, 172.854))
    assert (camera.img_w, camera.img_h) == (1242, 375)


def test_calib_without_p2():
    with pytest.raises(MissingCalib):
        parse_calib_text("P0: 1 0 0 0 0 1 0 0 0 0 1 0\n")
    with pytest.raises(MissingCalib):
        parse_calib_text("P2: 1 0 0\n")


def test_frame_and_ground_truth_loading():
    frame = load_kitti_frame(LABEL, CALIB)
    assert frame.camera.fx == pytest.approx(721.5377)
    assert len(frame.vehicles()) == 7
    assert len(frame.weak_annotations(("Car",))) == 5
    assert frame.dontcare_boxes()[0] == Box2D.from_corners(503.89, 169.71, 590.61, 190.13)
    gts = load_kitti_ground_truth(LABEL.parent)
    assert list(gts) == ["000000"]
    assert len(gts["000000"].objects) == 7 and len(gts["000000"].dontcare) == 1
    truncated = gts["000000"].objects[5]
    assert (truncated.truncation, truncated.occlusion) == (0.5, 2)


def test_result_objects_carry_observation_angle():
    box3d = Box3D(center=(0.0, 1.0, 20.0), yaw=0.4, template=Template3D(w=1.7, h=1.5, l=4.0))
    obj = kitti_object_from_result(Box2D(600, 180, 80, 60), box3d, 0.9)
    assert obj.alpha == pytest.approx(0.4)
    side = kitti_object_from_result(Box2D(600, 180, 80, 60), Box3D((20.0, 1.0, 20.0), 0.4, box3d.template), 0.9)
    assert side.alpha == pytest.approx(0.4 - math.pi / 4)
    line = format_label_line(obj)
    assert line.startswith("Car -1.00 -1 0.40 ") and line.endswith(" 0.90")
    assert np.allclose(parse_label_line(line).location, [0.0, 1.75, 20.0])
