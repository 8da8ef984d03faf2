"""Oriented-box geometry against analytic and Monte-Carlo oracles."""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radarfuse.geom3d import (
    Box7,
    GeometryError,
    bev_iou,
    bev_iou_matrix,
    box_corners,
    center_distance,
    center_distance_matrix,
    in_corridor,
    in_corridor_mask,
    iou3d,
    iou3d_matrix,
    point_in_box,
    points_in_box,
    to_box_frame,
    wrap_angle,
    wrap_angles,
)

from conftest import mc_bev_iou, random_box


class TestWrapAngle:
    def test_examples(self):
        assert wrap_angle(0.0) == 0.0
        assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2, abs=1e-15)
        assert wrap_angle(math.pi) == -math.pi

    @given(st.floats(-1e6, 1e6, allow_nan=False))
    def test_range_idempotent_congruent(self, t):
        w = wrap_angle(t)
        assert -math.pi <= w < math.pi
        assert wrap_angle(w) == w
        assert math.isclose(math.remainder(t - w, 2 * math.pi), 0.0, abs_tol=1e-9)

    def test_rejects_nonfinite(self):
        with pytest.raises(GeometryError):
            wrap_angle(float("nan"))

    def test_vectorized_matches_scalar(self, rng):
        t = rng.uniform(-50, 50, size=100)
        assert np.array_equal(wrap_angles(t), np.array([wrap_angle(x) for x in t]))


class TestBox7:
    def test_rejects_nonpositive_extent(self):
        with pytest.raises(GeometryError):
            Box7(0, 0, 0, 0.0, 1, 1, 0)

    def test_wraps_heading_and_round_trips(self):
        b = Box7(1, 2, 3, 4, 5, 6, 3 * math.pi / 2)
        assert b.theta == pytest.approx(-math.pi / 2)
        assert Box7.from_array(b.as_array()) == b


class TestContainment:
    def test_center_inside_and_far_point_outside(self):
        b = Box7(1, 2, 0.5, 4, 2, 1, 0.7)
        assert point_in_box((1, 2, 0.5), b)
        p = np.array([1, 2, 0.5]) + 2 * 4 * np.array([math.cos(0.7), math.sin(0.7), 0])
        assert not point_in_box(p, b)

    def test_rotated_face_is_inclusive(self):
        b = Box7(0, 0, 0, 2, 2, 2, math.pi / 4)
        face = np.array([math.cos(math.pi / 4), math.sin(math.pi / 4), 0.0])  # +x face center
        assert point_in_box(face, b)
        assert np.allclose(to_box_frame(face[None], b), [[1.0, 0, 0]], atol=1e-12)

    def test_rigid_motion_invariance(self, rng):
        for _ in range(50):
            box = random_box(rng)
            pts = rng.uniform(-4, 4, size=(200, 3))
            before = points_in_box(pts, box)
            ang, shift = rng.uniform(-np.pi, np.pi), rng.normal(size=3) * 10
            c, s = math.cos(ang), math.sin(ang)
            rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
            moved = box.copy()
            moved[:3] = rot @ box[:3] + shift
            moved[6] = wrap_angle(box[6] + ang)
            after = points_in_box(pts @ rot.T + shift, moved)
            # ignore points within rounding distance of a face
            local = np.abs(to_box_frame(pts, box)) - box[3:6] / 2
            clear = np.all(np.abs(local) > 1e-9, axis=1)
            assert np.array_equal(before[clear], after[clear])

    def test_corners_lie_on_box(self, rng):
        b = random_box(rng)
        assert points_in_box(box_corners(b) * (1 - 1e-12) + b[:3] * 1e-12, b).all()


class TestIoU:
    def test_identical_disjoint_offset(self):
        a = np.array([0, 0, 0, 1, 1, 1, 0.0])
        assert bev_iou(a, a) == pytest.approx(1.0, abs=1e-12)
        far = a.copy()
        far[0] = 100
        assert bev_iou(a, far) == 0.0
        b = a.copy()
        b[0] = 0.5
        assert bev_iou(a, b) == pytest.approx(1 / 3, abs=1e-12)
        assert iou3d(a, b) == pytest.approx(1 / 3, abs=1e-12)

    def test_vertically_disjoint(self):
        a = np.array([0, 0, 0, 1, 1, 1, 0.0])
        b = a.copy()
        b[2] = 1.01
        assert iou3d(a, b) == 0.0

    def test_monte_carlo_agreement(self):
        rng = np.random.default_rng(2024)
        worst = 0.0
        for i in range(100):
            a = random_box(rng, 1.0)
            b = random_box(rng, 1.0)
            worst = max(worst, abs(bev_iou(a, b) - mc_bev_iou(a, b, n_side=300, seed=i)))
        assert worst < 3e-3  # the full 10^6-sample run at 1e-3 lives in the acceptance suite

    def test_axis_aligned_analytic(self, rng):
        for _ in range(20):
            a = np.concatenate([rng.uniform(-1, 1, 3), rng.uniform(0.5, 2, 3), [0.0]])
            b = np.concatenate([rng.uniform(-1, 1, 3), rng.uniform(0.5, 2, 3), [0.0]])
            ov = [max(0.0, min(a[i] + a[i + 3] / 2, b[i] + b[i + 3] / 2) - max(a[i] - a[i + 3] / 2, b[i] - b[i + 3] / 2)) for i in range(3)]
            inter = ov[0] * ov[1] * ov[2]
            expect = inter / (np.prod(a[3:6]) + np.prod(b[3:6]) - inter)
            assert abs(iou3d(a, b) - expect) < 1e-9

    def test_symmetric_bounded_rigid_invariant(self, rng):
        for _ in range(100):
            a, b = random_box(rng), random_box(rng)
            v = bev_iou(a, b)
            assert 0.0 <= v <= 1.0
            assert v == pytest.approx(bev_iou(b, a), abs=1e-12)
            assert iou3d(a, b) == pytest.approx(iou3d(b, a), abs=1e-12)
            ang, shift = rng.uniform(-np.pi, np.pi), rng.normal(size=3) * 20
            c, s = math.cos(ang), math.sin(ang)
            rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
            ma, mb = a.copy(), b.copy()
            for src, dst in ((a, ma), (b, mb)):
                dst[:3] = rot @ src[:3] + shift
                dst[6] = wrap_angle(src[6] + ang)
            assert iou3d(ma, mb) == pytest.approx(iou3d(a, b), abs=1e-9)

    def test_generic_boxes_iou_one_only_when_identical_up_to_flip(self, rng):
        a = random_box(rng)
        flipped = a.copy()
        flipped[6] = wrap_angle(a[6] + math.pi)
        assert iou3d(a, flipped) == pytest.approx(1.0, abs=1e-9)
        shifted = a.copy()
        shifted[0] += 1e-3
        assert iou3d(a, shifted) < 1.0

    def test_matrices_match_scalar(self, rng):
        A = np.array([random_box(rng) for _ in range(6)])
        B = np.array([random_box(rng) for _ in range(4)])
        assert np.allclose(bev_iou_matrix(A, B), [[bev_iou(a, b) for b in B] for a in A], atol=1e-12)
        assert np.allclose(iou3d_matrix(A, B), [[iou3d(a, b) for b in B] for a in A], atol=1e-12)


def test_rotated_analytic_cases_on_each_backend(backend):
    unit = np.array([0, 0, 0, 1, 1, 1, 0.0])
    diamond = unit.copy()
    diamond[6] = math.pi / 4
    # square rotated 45 degrees over the unit square: octagon of area 2(sqrt2 - 1)
    inter = 2 * (math.sqrt(2) - 1)
    assert bev_iou(unit, diamond) == pytest.approx(inter / (2 - inter), abs=1e-12)
    half = unit.copy()
    half[1] = 0.5
    assert bev_iou(unit, half) == pytest.approx(1 / 3, abs=1e-12)
    assert bev_iou(unit, unit) == pytest.approx(1.0, abs=1e-12)


class TestDistanceAndCorridor:
    def test_center_distance(self, rng):
        a = np.array([0, 0, 0, 1, 1, 1, 0.0])
        b = np.array([3, 4, 0, 2, 2, 2, 1.0])
        assert center_distance(a, a) == 0.0
        assert center_distance(a, b) == 5.0
        A = np.array([random_box(rng) for _ in range(5)])
        B = np.array([random_box(rng) for _ in range(3)])
        assert np.allclose(center_distance_matrix(A, B), np.linalg.norm(A[:, None, :3] - B[None, :, :3], axis=-1))

    def test_corridor(self):
        box = lambda x, y: np.array([x, y, 0, 1, 1, 1, 0.0])
        assert in_corridor(box(10, 0))
        assert not in_corridor(box(10, 8))
        assert not in_corridor(box(25, 0))
        assert in_corridor_mask(np.array([box(10, 0), box(25, 0), box(1, -3.9)])).tolist() == [True, False, True]
