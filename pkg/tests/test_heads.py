"""Box encoding, target assignment, detection losses and decoding."""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radarfuse.autodiff import Tensor
from radarfuse.geom3d import Box7, wrap_angle
from radarfuse.heads import (
    ANCHORS,
    CLASS_NAMES,
    HeadError,
    OUT_DIM,
    REG_DIM,
    assign_targets,
    class_index,
    cls_loss,
    decode_boxes,
    decode_predictions,
    detect_head,
    encode_box,
    init_head_params,
    lidar_loss,
    nms,
    reg_loss,
)


def _raw_with_reg(reg, obj_logit=5.0, cls=0):
    raw = np.full((reg.shape[0], OUT_DIM), -5.0)
    raw[:, :REG_DIM] = reg
    raw[:, REG_DIM + cls] = 5.0
    raw[:, -1] = obj_logit
    return raw


class TestCodec:
    def test_zero_regression_is_anchor_at_keypoint(self):
        kp = np.array([[3.0, -1.0, 0.5]])
        reg = np.zeros((1, REG_DIM))
        reg[0, 7] = 1.0
        for c in range(3):
            box = decode_boxes(reg, kp, [c])[0]
            assert np.array_equal(box[:3], kp[0])
            assert np.array_equal(box[3:6], ANCHORS[c])
            assert box[6] == 0.0

    @settings(max_examples=60, deadline=None)
    @given(
        st.floats(-20, 20), st.floats(-20, 20), st.floats(-2, 2),
        st.floats(0.2, 6), st.floats(0.2, 3), st.floats(0.2, 3),
        st.floats(-math.pi, math.pi, exclude_max=True), st.integers(0, 2),
    )
    def test_round_trip(self, x, y, z, l, w, h, th, c):
        gt = np.array([x, y, z, l, w, h, th])
        kp = np.array([x + 0.3, y - 0.2, z + 0.1])
        back = decode_boxes(encode_box(gt, c, kp)[None, :], kp[None, :], [c])[0]
        assert np.allclose(back[:6], gt[:6], rtol=1e-12, atol=1e-9)
        assert abs(wrap_angle(back[6] - gt[6])) < 1e-9

    def test_class_index(self):
        assert [class_index(n) for n in CLASS_NAMES] == [0, 1, 2]
        with pytest.raises(HeadError):
            class_index("Truck")


class TestTargets:
    def test_center_keypoint_has_zero_offsets(self):
        box = np.array([[5.0, 1.0, 0.8, 4.0, 1.8, 1.6, 0.4]])
        t = assign_targets(np.array([[5.0, 1.0, 0.8]]), box, [0])
        assert t.foreground.tolist() == [True]
        assert np.array_equal(t.reg[0, :3], np.zeros(3))

    def test_background(self):
        box = np.array([[5.0, 1.0, 0.8, 4.0, 1.8, 1.6, 0.0]])
        t = assign_targets(np.array([[20.0, 0.0, 0.0]]), box, [0])
        assert t.foreground.tolist() == [False]
        assert t.class_ids.tolist() == [-1]

    def test_overlap_nearest_center(self):
        boxes = np.array([[0.0, 0, 0, 4, 4, 2, 0], [1.5, 0, 0, 4, 4, 2, 0]])
        kp = np.array([[0.5, 0, 0], [1.2, 0, 0]])
        t = assign_targets(kp, boxes, [0, 2])
        d = np.linalg.norm(kp[:, None, :] - boxes[None, :, :3], axis=-1)
        assert t.owner.tolist() == np.argmin(d, axis=1).tolist()
        assert t.class_ids.tolist() == [0, 2]


def _scalar_smooth_l1(e):
    return 0.5 * e * e if abs(e) < 1 else abs(e) - 0.5


def _scalar_focal(p, y, a=0.25, g=2.0):
    p = min(max(p, 1e-7), 1 - 1e-7)
    return -(a * y * (1 - p) ** g * math.log(p) + (1 - a) * (1 - y) * p**g * math.log(1 - p))


class TestLosses:
    def _setup(self, rng):
        kp = np.array([[5.0, 0.0, 0.8], [5.6, 0.3, 0.7], [12.0, 3.0, 0.9], [25.0, -4.0, 0.5]])
        boxes = np.array([[5.3, 0.2, 0.8, 4.0, 1.8, 1.6, 0.3], [12.1, 3.1, 0.85, 0.7, 0.6, 1.7, -1.0]])
        return kp, assign_targets(kp, boxes, [0, 1])

    def test_perfect_regression(self, rng):
        kp, t = self._setup(rng)
        raw = _raw_with_reg(t.reg)
        assert float(reg_loss(Tensor(raw), t).data) == 0.0

    def test_single_error_closed_form(self, rng):
        kp, t = self._setup(rng)
        reg = t.reg.copy()
        reg[0, 0] += 0.3
        # one component off by 0.3 over F = 3 foreground keypoints
        assert float(reg_loss(Tensor(_raw_with_reg(reg)), t).data) == pytest.approx(0.5 * 0.09 / 3, abs=1e-15)

    def test_random_batch_matches_scalar_oracle(self, rng):
        kp, t = self._setup(rng)
        raw = rng.normal(size=(4, OUT_DIM)) * 1.5
        fg = t.fg_index
        reg = 0.0
        for i in fg:
            for j in range(REG_DIM):
                reg += _scalar_smooth_l1(raw[i, j] - t.reg[i, j])
        reg /= fg.size
        cls = 0.0
        for i in range(4):
            for c in range(4):
                y = 0.0
                if t.foreground[i] and (c == t.class_ids[i] or c == 3):
                    y = 1.0
                cls += _scalar_focal(1 / (1 + math.exp(-raw[i, REG_DIM + c])), y)
        cls /= 4
        assert float(reg_loss(Tensor(raw), t).data) == pytest.approx(reg, rel=1e-12)
        assert float(cls_loss(Tensor(raw), t).data) == pytest.approx(cls, rel=1e-12)
        assert float(lidar_loss(Tensor(raw), t).data) == pytest.approx(reg + cls, rel=1e-12)

    def test_no_foreground(self):
        t = assign_targets(np.zeros((3, 3)) + 50.0, np.zeros((0, 7)), [])
        assert float(reg_loss(Tensor(np.zeros((3, OUT_DIM))), t).data) == 0.0


class TestDecoding:
    def test_nms_keeps_higher_score(self):
        a = np.array([0, 0, 0, 4, 2, 1.5, 0.0])
        b = a.copy()
        b[0] = 0.2  # IoU = 3.8/4.2 ~ 0.905
        assert nms(np.stack([a, b]), np.array([0.6, 0.9]), 0.5).tolist() == [1]
        assert nms(np.stack([a, b]), np.array([0.9, 0.6]), 0.5).tolist() == [0]

    def test_threshold_and_confidence(self):
        kp = np.array([[0.0, 0, 0], [10.0, 0, 0]])
        reg = np.zeros((2, REG_DIM))
        reg[:, 7] = 1.0
        raw = _raw_with_reg(reg)
        raw[1, -1] = -5.0
        preds = decode_predictions(raw, kp, 0.3, 0.5)
        assert len(preds) == 1 and preds[0].keypoint == 0
        s = 1 / (1 + math.exp(-5.0))
        assert preds[0].confidence == pytest.approx(s * s, rel=1e-12)
        assert preds[0].label == 0

    def test_shape_error(self):
        with pytest.raises(HeadError):
            decode_predictions(np.zeros((3, OUT_DIM)), np.zeros((2, 3)))

    def test_detect_head(self, rng):
        params = init_head_params(rng, 5, 8, "h")
        preds = detect_head(Tensor(rng.normal(size=(6, 5))), rng.normal(size=(6, 3)), params, "h", 0.0, 0.5)
        assert all(isinstance(p.box, Box7) for p in preds)
        with pytest.raises(HeadError):
            detect_head(Tensor(rng.normal(size=(6, 4))), rng.normal(size=(6, 3)), params, "h")
