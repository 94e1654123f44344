import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from guided_anchoring.losses import (
    ConfigurationError,
    FocalParams,
    LossWeights,
    ProbabilityMap,
    bounded_iou_loss,
    focal_loss_levels,
    focal_loss_map,
    joint_loss,
    shape_loss,
    smooth_l1,
)
from guided_anchoring.pyramid import Label, LocationTargetMap, ShapeAssignment

from oracles import focal_loop_oracle

pos_dim = st.floats(0.01, 1e4)


def random_map(rng, h, w):
    p = rng.uniform(0, 1, (h, w))
    labels = rng.choice([0, 1, 2], size=(h, w), p=[0.8, 0.1, 0.1]).astype(np.int8)
    return ProbabilityMap(0, p), LocationTargetMap(0, labels)


class TestSmoothL1:
    def test_values(self):
        assert smooth_l1(0.0) == 0.0
        assert smooth_l1(0.5, 1.0) == 0.125
        assert smooth_l1(2.0, 1.0) == 1.5

    def test_bad_beta(self):
        with pytest.raises(ConfigurationError):
            smooth_l1(1.0, 0.0)

    @given(st.floats(-50, 50), st.floats(0.01, 5))
    def test_even(self, x, beta):
        assert smooth_l1(x, beta) == smooth_l1(-x, beta)

    @given(st.floats(0, 50), st.floats(0, 50), st.floats(0.01, 5))
    def test_monotone_in_abs(self, a, b, beta):
        lo, hi = sorted((a, b))
        assert smooth_l1(lo, beta) <= smooth_l1(hi, beta)

    @given(st.floats(0.1, 5))
    def test_continuous_at_beta(self, beta):
        eps = 1e-9
        assert smooth_l1(beta - eps, beta) == pytest.approx(smooth_l1(beta + eps, beta), abs=1e-8)
        assert smooth_l1(beta, beta) == pytest.approx(beta / 2)
        # derivative is 1 on both sides of the transition
        h = 1e-6
        left = (smooth_l1(beta - h, beta) - smooth_l1(beta - 2 * h, beta)) / h
        right = (smooth_l1(beta + 2 * h, beta) - smooth_l1(beta + h, beta)) / h
        # one-sided differences carry O(h / beta) truncation error on the quadratic side
        assert left == pytest.approx(1.0, abs=1e-4)
        assert right == pytest.approx(1.0, abs=1e-4)


class TestBoundedIoULoss:
    def test_zero_at_target(self):
        assert bounded_iou_loss((30, 70), (30, 70)) == 0.0

    def test_double_width(self):
        assert bounded_iou_loss((2 * 40, 25), (40, 25), beta=1.0) == pytest.approx(0.125, abs=1e-15)

    @given(pos_dim, pos_dim, pos_dim, pos_dim)
    def test_symmetric(self, w, h, wg, hg):
        assert bounded_iou_loss((w, h), (wg, hg)) == pytest.approx(bounded_iou_loss((wg, hg), (w, h)), abs=1e-12)

    @given(pos_dim, pos_dim, pos_dim, pos_dim)
    def test_positive_off_target(self, w, h, wg, hg):
        v = bounded_iou_loss((w, h), (wg, hg))
        if (w, h) == (wg, hg):
            assert v == 0
        elif w / wg != 1 or h / hg != 1:
            assert v >= 0

    @given(pos_dim, pos_dim, st.floats(1.001, 100))
    def test_strictly_positive_when_shapes_differ(self, wg, hg, f):
        assert bounded_iou_loss((wg * f, hg), (wg, hg)) > 0
        assert bounded_iou_loss((wg, hg / f), (wg, hg)) > 0

    @given(pos_dim, pos_dim, pos_dim, pos_dim, st.sampled_from([0.25, 0.5, 2.0, 8.0, 1024.0]))
    def test_scale_invariant(self, w, h, wg, hg, c):
        # power-of-two scale factors leave every ratio bit-identical
        assert bounded_iou_loss((c * w, c * h), (c * wg, c * hg)) == bounded_iou_loss((w, h), (wg, hg))

    @pytest.mark.parametrize("wg,hg", [(10.0, 20.0), (64.0, 64.0), (300.0, 12.5)])
    def test_gradient_vanishes_at_target(self, wg, hg):
        step = 1e-5

        def f(w):
            return bounded_iou_loss((w, hg), (wg, hg))

        grad = lambda w: (f(w + step) - f(w - step)) / (2 * step)  # noqa: E731
        assert abs(grad(wg)) <= 1e-6
        assert grad(wg * 0.9) < 0 < grad(wg * 1.1)

    def test_array_inputs(self):
        v = bounded_iou_loss((np.array([1.0, 2.0]), np.array([1.0, 1.0])), (1.0, 1.0))
        np.testing.assert_allclose(v, [0.0, 0.125])


class TestFocal:
    def test_perfect_prediction(self):
        labels = np.array([[2, 0], [0, 1]], np.int8)
        p = np.array([[1.0, 0.0], [0.0, 0.7]])
        assert focal_loss_map(ProbabilityMap(0, p), LocationTargetMap(0, labels)) == pytest.approx(0, abs=1e-20)

    def test_single_positive(self):
        v = focal_loss_map(ProbabilityMap(0, [[0.5]]), LocationTargetMap(0, np.array([[2]], np.int8)), FocalParams(0.25, 2))
        assert v == pytest.approx(0.25 * 0.25 * math.log(2), rel=1e-15)
        assert v == pytest.approx(0.04332, abs=5e-6)

    def test_matches_loop_oracle(self, rng):
        for _ in range(30):
            h, w = rng.integers(1, 33, 2)
            pm, tm = random_map(rng, h, w)
            a, g = rng.uniform(0.05, 0.95), rng.uniform(0, 4)
            assert focal_loss_map(pm, tm, FocalParams(a, g)) == pytest.approx(
                focal_loop_oracle(pm.values, tm.labels, a, g), rel=1e-12, abs=1e-12
            )

    def test_gamma0_alpha_half_is_half_bce(self, rng):
        pm, tm = random_map(rng, 20, 17)
        p = np.clip(pm.values, 1e-12, 1 - 1e-12)
        pos, neg = tm.labels == 2, tm.labels == 0
        bce = (-np.log(p[pos]).sum() - np.log(1 - p[neg]).sum()) / max(pos.sum(), 1)
        assert focal_loss_map(pm, tm, FocalParams(0.5, 0.0)) == pytest.approx(0.5 * bce, rel=1e-12)

    def test_ignore_cells_have_no_influence(self, rng):
        pm, tm = random_map(rng, 24, 24)
        base = focal_loss_map(pm, tm)
        q = pm.values.copy()
        ign = tm.labels == Label.IGNORE
        q[ign] = rng.uniform(0, 1, ign.sum())
        assert focal_loss_map(ProbabilityMap(0, q), tm) == base

    def test_exact_zero_and_one_stay_finite(self):
        labels = np.array([[2, 0]], np.int8)
        v = focal_loss_map(ProbabilityMap(0, [[0.0, 1.0]]), LocationTargetMap(0, labels))
        assert math.isfinite(v) and v > 0

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigurationError):
            focal_loss_map(ProbabilityMap(0, np.zeros((2, 3))), LocationTargetMap(0, np.zeros((3, 2), np.int8)))

    def test_probability_range_checked(self):
        with pytest.raises(ConfigurationError):
            ProbabilityMap(0, [[1.5]])

    def test_params_validated(self):
        with pytest.raises(ConfigurationError):
            FocalParams(0.0, 2)
        with pytest.raises(ConfigurationError):
            FocalParams(0.25, -1)

    def test_levels_pool_positives(self, rng):
        maps = [random_map(rng, 8, 8) for _ in range(3)]
        pooled = focal_loss_levels([m[0] for m in maps], [m[1] for m in maps])
        num = sum(focal_loop_oracle(p.values, t.labels, 0.25, 2) * max(t.count(Label.POSITIVE), 1) for p, t in maps)
        den = max(sum(t.count(Label.POSITIVE) for _, t in maps), 1)
        assert pooled == pytest.approx(num / den, rel=1e-12)


def test_shape_loss_averages_assigned_cells():
    gt_index = np.array([[0, -1], [-1, 0]])
    target = np.full((2, 2, 2), np.nan)
    target[0, 0] = target[1, 1] = (10, 10)
    pred = np.full((2, 2, 2), 10.0)
    pred[1, 1] = (20, 10)
    v = shape_loss([pred], [ShapeAssignment(0, gt_index, target)])
    assert v == pytest.approx((0 + 0.125) / 2)
    assert shape_loss([pred], [ShapeAssignment(0, np.full((2, 2), -1), target)]) == 0.0


class TestJointLoss:
    def test_paper_weights(self):
        assert joint_loss(1, 2, 0, 0, LossWeights(1, 0.1)) == pytest.approx(1.2)

    def test_zero(self):
        assert joint_loss(0, 0, 0, 0) == 0

    @given(st.floats(0, 100), st.floats(0, 100), st.floats(0, 10), st.floats(0.5, 4))
    def test_linear_in_shape_weight(self, l_loc, l_shape, lam2, c):
        a = joint_loss(l_loc, l_shape, 0, 0, LossWeights(1, lam2))
        b = joint_loss(l_loc, l_shape, 0, 0, LossWeights(1, c * lam2))
        assert b - l_loc == pytest.approx(c * (a - l_loc), rel=1e-12, abs=1e-12)

    def test_rejects_negative(self):
        with pytest.raises(ConfigurationError):
            joint_loss(-1, 0, 0, 0)
        with pytest.raises(ConfigurationError):
            LossWeights(-1, 0)
