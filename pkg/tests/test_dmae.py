"""Motion-aware encoding: forward contract, labels and the focal motion loss."""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radarfuse import autodiff as ad
from radarfuse.autodiff import Tape, Tensor
from radarfuse.dmae import (
    MotionError,
    PROB_EPS,
    dmae_forward,
    encode_velocity,
    init_dmae_params,
    label_point_motion,
    motion_loss_layer,
    motion_loss_total,
    threshold_baseline,
)


def _setup(rng, m=7, n=8):
    f = Tensor(rng.normal(size=(m, n)))
    v = rng.normal(size=(m, 2))
    return f, v, init_dmae_params(rng, n, "d")


def reference_layer_loss(p, y, alpha, gamma):
    """Scalar per-point re-implementation of the focal motion loss."""
    total = 0.0
    for pi, yi in zip(p, y):
        pi = min(max(pi, PROB_EPS), 1 - PROB_EPS)
        total += -(alpha * yi * (1 - pi) ** gamma * math.log(pi) + (1 - alpha) * (1 - yi) * pi**gamma * math.log(1 - pi))
    return total / len(p)


class TestForward:
    def test_shapes_and_range(self, rng):
        f, v, params = _setup(rng)
        h, y = dmae_forward(f, v, params, "d")
        assert h.shape == (7, 8) and y.shape == (7,)
        assert np.all((y.data > 0) & (y.data < 1))

    def test_encode_velocity_zero_params(self, rng):
        _, v, params = _setup(rng)
        for k in params:
            params[k].data = np.zeros_like(params[k].data)
        assert np.array_equal(encode_velocity(v, params, "d").data, np.zeros((7, 8)))

    def test_zero_encoder_gives_residual(self, rng):
        f, v, params = _setup(rng)
        for k in params:
            if ".enc." in k:
                params[k].data = np.zeros_like(params[k].data)
        h, _ = dmae_forward(f, v, params, "d")
        assert np.array_equal(h.data, f.data)

    def test_row_permutation_equivariance(self, rng):
        f, v, params = _setup(rng)
        perm = rng.permutation(7)
        h, y = dmae_forward(f, v, params, "d")
        hp, yp = dmae_forward(Tensor(f.data[perm]), v[perm], params, "d")
        assert np.allclose(hp.data, h.data[perm], rtol=0, atol=1e-13)
        assert np.allclose(yp.data, y.data[perm], rtol=0, atol=1e-15)

    def test_shape_mismatch(self, rng):
        f, v, params = _setup(rng)
        with pytest.raises(MotionError):
            dmae_forward(f, v[:3], params, "d")
        with pytest.raises(MotionError):
            encode_velocity(np.zeros((3, 3)), params, "d")


class TestLabels:
    def test_moving_static_background(self):
        boxes = np.array([[0, 0, 0, 2, 2, 2, 0.0], [10, 0, 0, 2, 2, 2, 0.0]])
        pts = np.array([[0, 0, 0], [10, 0.5, 0], [30, 0, 0]], dtype=float)
        assert label_point_motion(pts, boxes, [True, False]).tolist() == [1, 0, 0]

    def test_overlap_nearest_center(self):
        boxes = np.array([[0, 0, 0, 4, 4, 2, 0.0], [1.5, 0, 0, 4, 4, 2, 0.0]])
        pts = np.array([[0.2, 0, 0], [1.4, 0, 0]])
        assert label_point_motion(pts, boxes, [True, False]).tolist() == [1, 0]

    def test_threshold_baseline(self):
        assert threshold_baseline(np.array([[0.0, 0.0], [1.0, 0.3], [-2.0, 0.0]])).tolist() == [0, 1, 0]


class TestLoss:
    def test_closed_form_half_log2(self):
        val = motion_loss_layer(Tensor(np.array([0.5])), np.array([1]), alpha=0.5, gamma=0.0)
        assert float(val.data) == pytest.approx(0.5 * math.log(2), abs=1e-15)

    def test_perfect_prediction(self):
        y = np.array([1, 0, 1, 0])
        val = motion_loss_layer(Tensor(y.astype(float)), y)
        assert 0.0 <= float(val.data) < 1e-5

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(0.05, 0.95), st.floats(0.0, 4.0))
    def test_matches_scalar_reference(self, seed, alpha, gamma):
        rng = np.random.default_rng(seed)
        p = rng.uniform(1e-9, 1 - 1e-9, size=11)
        y = rng.integers(0, 2, size=11)
        got = float(motion_loss_layer(Tensor(p), y, alpha, gamma).data)
        assert got == pytest.approx(reference_layer_loss(p, y, alpha, gamma), rel=1e-12, abs=1e-15)
        assert got >= 0.0

    def test_bce_reduction(self, rng):
        p = rng.uniform(0.01, 0.99, size=50)
        y = rng.integers(0, 2, size=50)
        bce = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
        got = float(motion_loss_layer(Tensor(p), y, 0.5, 0.0).data)
        assert abs(got - 0.5 * bce) < 1e-12

    def test_decreasing_in_p_for_positive(self):
        p = Tensor(np.linspace(0.05, 0.95, 10), requires_grad=True)
        with Tape() as t:
            val = motion_loss_layer(p, np.ones(10))
        assert np.all(t.backward(val, [p])[0] < 0)

    def test_total_is_mean_of_four(self):
        assert float(motion_loss_total([Tensor(np.array(2.0))] * 4).data) == 2.0
        assert float(motion_loss_total([Tensor(np.array(v)) for v in (0.0, 0.0, 0.0, 4.0)]).data) == 1.0
        with pytest.raises(MotionError):
            motion_loss_total([Tensor(np.array(1.0))] * 3)

    def test_errors(self):
        with pytest.raises(MotionError):
            motion_loss_layer(Tensor(np.array([0.5, 0.5])), np.array([1]))
        with pytest.raises(MotionError):
            motion_loss_layer(Tensor(np.array([0.5])), np.array([1]), alpha=1.5)
