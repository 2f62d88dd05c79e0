"""
Tests for box, part, visibility and template-similarity encodings.
"""
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from geometry.boxes import Box2D, Template3D
from models.parts import N_PARTS
from models.shape_bank import ShapeBank
from models.synthetic import build_synthetic_model
from training.codec import (
    BoxDeltas, Visibility, decode_box_deltas, decode_parts, decode_template_similarity, encode_box_deltas,
    encode_parts, encode_template_similarity, encode_visibility, one_hot_visibility,
)
from utils.errors import LengthMismatch, ValidationError

boxes = st.builds(Box2D, cx=st.floats(-500, 1500), cy=st.floats(-500, 500),
                  w=st.floats(1, 800), h=st.floats(1, 400))


def test_box_delta_examples():
    gt = Box2D(100, 210, 200, 50)
    assert encode_box_deltas(gt, gt).as_tuple() == (0.0, 0.0, 0.0, 0.0)
    d = encode_box_deltas(Box2D(110, 200, 100, 50), gt)
    assert d.dx == pytest.approx(0.05)
    assert d.dy == pytest.approx(-0.2)
    assert d.dw == pytest.approx(-0.6931, abs=1e-4)
    assert d.dh == 0.0
    d = encode_box_deltas(Box2D(100, 100, 400, 100), Box2D(100, 100, 100, 100))
    assert d.as_tuple() == pytest.approx((0.0, 0.0, 1.3863, 0.0), abs=1e-4)


def test_box_delta_decode_examples():
    proposal = Box2D(110, 200, 100, 50)
    assert decode_box_deltas(proposal, BoxDeltas.zeros()) == proposal
    back = decode_box_deltas(proposal, encode_box_deltas(proposal, Box2D(100, 210, 200, 50)))
    assert (back.cx, back.cy, back.w, back.h) == pytest.approx((100, 210, 200, 50))
    assert decode_box_deltas(Box2D(100, 100, 400, 100), BoxDeltas(0, 0, math.log(4), 0)).w == pytest.approx(100)


@given(boxes, boxes)
def test_box_delta_round_trip(proposal, gt):
    back = decode_box_deltas(proposal, encode_box_deltas(proposal, gt))
    assert back.as_array() == pytest.approx(gt.as_array(), rel=1e-12, abs=1e-9)


def test_deltas_must_be_finite():
    with pytest.raises(ValidationError):
        BoxDeltas(float("nan"), 0, 0, 0)


def test_part_examples():
    box = Box2D(100, 100, 50, 50)
    parts = np.array([[100, 100], [125, 75], [200, 100]], dtype=float)
    norm = encode_parts(parts, box)
    np.testing.assert_allclose(norm, [[0, 0], [0.5, -0.5], [2.0, 0.0]])
    np.testing.assert_allclose(decode_parts(norm, box), parts, atol=1e-12)


@given(boxes)
def test_part_round_trip(box):
    parts = np.random.default_rng(1).uniform(-200, 1400, size=(N_PARTS, 2))
    np.testing.assert_allclose(decode_parts(encode_parts(parts, box), box), parts, rtol=1e-12, atol=1e-9)


def _bank(*dims):
    return ShapeBank([build_synthetic_model(f"m{i}", d, 0.0, 0.0, grid=1) for i, d in enumerate(dims)], N_PARTS)


def test_template_similarity_examples():
    bank = _bank((2.0, 1.5, 4.0), (1.8, 1.5, 4.4))
    sim = encode_template_similarity(Template3D(w=1.8, h=1.5, l=4.4), bank)
    assert sim.shape == (2, 3)
    np.testing.assert_allclose(sim[0], [-0.1054, 0.0, 0.0953], atol=1e-4)
    np.testing.assert_array_equal(sim[1], [0.0, 0.0, 0.0])
    doubled = _bank((4.0, 3.0, 8.0))
    shifted = encode_template_similarity(Template3D(w=2.0, h=1.5, l=4.0), doubled)
    np.testing.assert_allclose(shifted[0], [-math.log(2)] * 3)


def test_template_similarity_round_trip():
    bank = _bank((2.0, 1.5, 4.0), (1.8, 1.5, 4.4))
    t = Template3D(w=1.7, h=1.4, l=4.1)
    decoded = decode_template_similarity(encode_template_similarity(t, bank), bank)
    np.testing.assert_allclose(decoded, [t.as_array()] * 2)
    with pytest.raises(LengthMismatch):
        decode_template_similarity(np.zeros((3, 3)), bank)


def test_template_similarity_argmin_is_closest_in_log_ratio(bank):
    t = Template3D(w=1.75, h=1.48, l=4.0)
    sim = encode_template_similarity(t, bank)
    log_dist = [np.linalg.norm(np.log(t.as_array() / m.template.as_array())) for m in bank]
    assert int(np.argmin(np.linalg.norm(sim, axis=1))) == int(np.argmin(log_dist))


def test_visibility_classes():
    assert [int(v) for v in Visibility] == [0, 1, 2, 3]
    assert Visibility.SELF_OCCLUDED.label == "self_occluded"
    np.testing.assert_array_equal(encode_visibility(["visible", 1, Visibility.TRUNCATED, "Occluded"]), [0, 1, 3, 1])
    with pytest.raises(ValidationError):
        Visibility.parse("hidden")
    np.testing.assert_array_equal(one_hot_visibility(np.array([2, 0])), [[0, 0, 1, 0], [1, 0, 0, 0]])
