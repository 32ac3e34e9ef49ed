import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from backdoorlab.errors import ContractViolation
from backdoorlab.numerics import (
    Rng, cross_entropy, grad_check, kl_divergence, l1_mean_distance,
    l1_mean_distance_grad, log_softmax, sigmoid, softmax,
)

finite_logits = st.lists(
    st.floats(min_value=-50, max_value=50, allow_nan=False), min_size=1, max_size=8
)


class TestSoftmax:
    def test_equal_logits_uniform(self):
        out = softmax(np.zeros(4))
        assert np.allclose(out, 0.25, atol=1e-15)

    def test_large_logit_no_overflow(self):
        out = softmax(np.array([1000.0, 0.0]))
        assert out[0] == pytest.approx(1.0)
        assert out[1] == pytest.approx(0.0, abs=1e-300)

    def test_worked_example(self):
        out = softmax(np.array([1.0, 2.0, 3.0]))
        e = np.exp([1.0, 2.0, 3.0])
        assert np.allclose(out, e / e.sum(), atol=1e-15)
        assert out[0] == pytest.approx(0.09003, abs=1e-5)
        assert out[2] == pytest.approx(0.66524, abs=1e-5)

    def test_empty_rejected(self):
        with pytest.raises(ContractViolation):
            softmax(np.zeros(0))

    @given(finite_logits)
    @settings(max_examples=60, deadline=None)
    def test_sums_to_one_and_shift_invariant(self, logits):
        z = np.array(logits)
        out = softmax(z)
        assert abs(out.sum() - 1.0) < 1e-12
        shifted = softmax(z + 13.7)
        assert np.allclose(out, shifted, atol=1e-12)

    @given(finite_logits)
    @settings(max_examples=40, deadline=None)
    def test_log_softmax_consistent(self, logits):
        z = np.array(logits)
        assert np.allclose(log_softmax(z), np.log(softmax(z)), atol=1e-10)


class TestCrossEntropy:
    def test_uniform_case(self):
        loss, _ = cross_entropy(np.zeros(4), 2)
        assert loss == pytest.approx(math.log(4), abs=1e-12)

    def test_certainty_limit(self):
        logits = np.zeros(5)
        logits[3] = 1e6
        loss, _ = cross_entropy(logits, 3)
        assert loss == pytest.approx(0.0, abs=1e-12)

    def test_worked_example(self):
        loss, _ = cross_entropy(np.array([1.0, 2.0, 3.0]), 0)
        assert loss == pytest.approx(2.40761, abs=1e-5)

    def test_gradient_is_softmax_minus_onehot(self):
        z = np.array([0.3, -1.2, 2.0])
        _, grad = cross_entropy(z, 1)
        expect = softmax(z)
        expect[1] -= 1
        assert np.allclose(grad, expect, atol=1e-14)

    def test_out_of_range_index(self):
        with pytest.raises(ContractViolation):
            cross_entropy(np.zeros(3), 3)


class TestKl:
    def test_identity_zero(self):
        z = np.array([0.4, -2.0, 1.1])
        assert kl_divergence(z, z) == pytest.approx(0.0, abs=1e-9)

    def test_closed_form(self):
        # distributions [0.5, 0.5] and [0.25, 0.75] via their log forms
        p = np.log(np.array([0.5, 0.5]))
        q = np.log(np.array([0.25, 0.75]))
        forward = 0.5 * math.log(2) - 0.5 * math.log(1.5)
        reverse = 0.75 * math.log(1.5) - 0.25 * math.log(2)
        assert kl_divergence(p, q) == pytest.approx(forward, abs=1e-12)
        assert kl_divergence(p, q) == pytest.approx(0.143841, abs=1e-6)
        assert kl_divergence(q, p) == pytest.approx(reverse, abs=1e-12)
        assert kl_divergence(p, q) != pytest.approx(kl_divergence(q, p), abs=1e-3)

    def test_shape_mismatch(self):
        with pytest.raises(ContractViolation):
            kl_divergence(np.zeros(3), np.zeros(4))

    @given(finite_logits, finite_logits)
    @settings(max_examples=60, deadline=None)
    def test_gibbs_nonnegative(self, a, b):
        n = min(len(a), len(b))
        val = kl_divergence(np.array(a[:n]), np.array(b[:n]))
        assert val >= -1e-12


class TestL1Mean:
    def test_identity(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert l1_mean_distance(a, a) == 0.0

    def test_single_row(self):
        assert l1_mean_distance(np.array([1.0, 2.0]), np.array([1.0, 0.0])) == 2.0

    def test_mean_over_rows(self):
        a = np.array([[1.0, 1.0], [0.0, 0.0]])
        x = np.array([[0.0, 0.0], [1.0, 0.0]])
        assert l1_mean_distance(a, x) == pytest.approx(1.5)

    def test_tie_subgradient_zero(self):
        a = np.array([[1.0, 2.0]])
        grad = l1_mean_distance_grad(a, a)
        assert np.all(grad == 0.0)

    def test_shape_mismatch(self):
        with pytest.raises(ContractViolation):
            l1_mean_distance(np.zeros((2, 2)), np.zeros((2, 3)))


class TestSigmoid:
    def test_zero(self):
        assert sigmoid(0.0) == 0.5

    def test_worked_example(self):
        assert sigmoid(2.0) == pytest.approx(0.880797, abs=1e-6)

    def test_symmetry(self):
        assert sigmoid(-2.0) == pytest.approx(1.0 - sigmoid(2.0), abs=1e-12)

    def test_extreme_stability(self):
        assert sigmoid(800.0) == 1.0
        assert sigmoid(-800.0) == pytest.approx(0.0, abs=1e-300)


class TestGradCheck:
    def test_quadratic(self):
        def f(x):
            return float(x[0] ** 2), np.array([2.0 * x[0]])

        err = grad_check(f, np.array([3.0]), eps=1e-5)
        assert err < 1e-9

    def test_cross_entropy_gradient(self):
        rng = Rng(4).split("gc")
        z = rng.normal(6)

        def f(x):
            return cross_entropy(x, 2)

        assert grad_check(f, z, eps=1e-5) < 1e-6

    def test_constant_function(self):
        def f(x):
            return 1.0, np.zeros_like(x)

        assert grad_check(f, np.ones(3), eps=1e-5) == 0.0

    def test_eps_bounds(self):
        with pytest.raises(ContractViolation):
            grad_check(lambda x: (0.0, x), np.ones(1), eps=1.0)

    def test_nonfinite_rejected(self):
        def f(x):
            return float("nan"), x

        with pytest.raises(ContractViolation):
            grad_check(f, np.ones(1), eps=1e-5)


class TestRng:
    def test_same_seed_identical_stream(self):
        a = Rng(42).normal(16)
        b = Rng(42).normal(16)
        assert np.array_equal(a, b)

    def test_split_independence(self):
        base = Rng(7)
        a = base.split("left").normal(8)
        b = base.split("right").normal(8)
        assert not np.array_equal(a, b)
        again = Rng(7).split("left").normal(8)
        assert np.array_equal(a, again)

    def test_split_does_not_disturb_parent(self):
        a = Rng(3)
        a.split("x")
        b = Rng(3)
        assert np.array_equal(a.normal(4), b.normal(4))

    def test_shuffled_copies(self):
        seq = [1, 2, 3, 4, 5]
        out = Rng(1).shuffled(seq)
        assert sorted(out) == seq
        assert seq == [1, 2, 3, 4, 5]
