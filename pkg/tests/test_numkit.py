import math

import numpy as np
import pytest

from emofuse import numkit
from emofuse.numkit import (
    AdamState,
    HeadParams,
    adam_step,
    clip_global_norm,
    cross_entropy,
    cross_entropy_from_scores,
    finite_diff_grad,
    global_norm,
    head_forward,
    head_scores,
    max_rel_error,
    mean_over_positions,
    softmax_rows,
    softmax_vec,
)


class TestSoftmax:
    def test_zero_row_is_uniform(self):
        out = softmax_rows(np.zeros((1, 4)))
        np.testing.assert_allclose(out, np.full((1, 4), 0.25), atol=1e-12)

    def test_log3_row(self):
        # e^0 = 1 and e^(ln 3) = 3, so the probabilities are 1/4 and 3/4.
        out = softmax_rows(np.array([[0.0, math.log(3.0)]]))
        np.testing.assert_allclose(out[0], [0.25, 0.75], atol=1e-12)

    def test_shift_invariance(self):
        rng = np.random.default_rng(11)
        m = rng.normal(size=(6, 5))
        shifts = rng.normal(size=(6, 1)) * 50.0
        np.testing.assert_allclose(softmax_rows(m), softmax_rows(m + shifts), atol=1e-12)

    def test_rows_sum_to_one_at_large_magnitudes(self):
        rng = np.random.default_rng(12)
        m = rng.uniform(-1e4, 1e4, size=(40, 7))
        out = softmax_rows(m)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-6)
        assert np.all(out >= 0.0) and np.all(out <= 1.0)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            softmax_rows(np.array([[0.0, np.nan]]))

    def test_deterministic(self):
        rng = np.random.default_rng(13)
        m = rng.normal(size=(8, 8))
        assert softmax_rows(m).tobytes() == softmax_rows(m).tobytes()


class TestMeanOverPositions:
    def test_single_row_identity(self):
        np.testing.assert_array_equal(
            mean_over_positions(np.array([[1.0, 2.0, 3.0]])), [1.0, 2.0, 3.0]
        )

    def test_two_rows(self):
        np.testing.assert_allclose(
            mean_over_positions(np.array([[1.0, 3.0], [3.0, 5.0]])), [2.0, 4.0]
        )

    def test_constant_matrix(self):
        np.testing.assert_allclose(mean_over_positions(np.full((9, 4), 2.5)), np.full(4, 2.5))

    def test_zero_rows_rejected(self):
        with pytest.raises(ValueError):
            mean_over_positions(np.zeros((0, 3)))


class TestHeadForward:
    def test_zero_params_uniform(self):
        p = HeadParams(W=np.zeros((4, 8)), b=np.zeros(4))
        np.testing.assert_allclose(head_forward(np.ones(8), p), np.full(4, 0.25), atol=1e-12)

    def test_large_bias_matches_closed_form(self):
        # Oracle: evaluate softmax(tanh([10, 0, 0, 0])) directly.
        p = HeadParams(W=np.zeros((4, 3)), b=np.array([10.0, 0.0, 0.0, 0.0]))
        scores = np.tanh(np.array([10.0, 0.0, 0.0, 0.0]))
        expected = np.exp(scores) / np.exp(scores).sum()
        got = head_forward(np.zeros(3), p)
        np.testing.assert_allclose(got, expected, atol=1e-12)
        np.testing.assert_allclose(got, [0.4753, 0.1749, 0.1749, 0.1749], atol=1.5e-4)

    def test_scores_are_bounded(self):
        # tanh can round to exactly +-1.0 in floating point for huge inputs.
        rng = np.random.default_rng(3)
        p = HeadParams(W=rng.normal(size=(4, 6)) * 5, b=rng.normal(size=4) * 5)
        t = head_scores(rng.normal(size=6), p)
        assert np.all(np.abs(t) <= 1.0)

    def test_dimension_mismatch(self):
        p = HeadParams(W=np.zeros((4, 6)), b=np.zeros(4))
        with pytest.raises(ValueError):
            head_forward(np.zeros(5), p)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=8)
        params = {
            "W": rng.normal(size=(4, 8)) * 0.3,
            "b": rng.normal(size=4) * 0.3,
            "x": x.copy(),
        }
        label = 2

        def loss_fn(ps):
            t = np.tanh(ps["W"] @ ps["x"] + ps["b"])
            return cross_entropy_from_scores(t, label)

        numeric = finite_diff_grad(loss_fn, params)

        t = np.tanh(params["W"] @ x + params["b"])
        probs = softmax_vec(t)
        d_t = probs.copy()
        d_t[label] -= 1.0
        d_z = d_t * (1.0 - t * t)
        analytic = {
            "W": np.outer(d_z, x),
            "b": d_z,
            "x": params["W"].T @ d_z,
        }
        assert max_rel_error(analytic, numeric) <= 1e-4


class TestCrossEntropy:
    def test_uniform_is_ln4(self):
        for label in range(4):
            assert cross_entropy(np.full(4, 0.25), label) == pytest.approx(math.log(4.0))

    def test_certain_prediction_is_zero(self):
        assert cross_entropy(np.array([1.0, 0.0, 0.0, 0.0]), 0) == pytest.approx(0.0)

    def test_half_probability_is_ln2(self):
        probs = np.array([0.5, 0.25, 0.125, 0.125])
        assert cross_entropy(probs, 0) == pytest.approx(math.log(2.0))

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            cross_entropy(np.full(4, 0.25), 4)

    def test_unnormalized_rejected(self):
        with pytest.raises(ValueError):
            cross_entropy(np.array([0.5, 0.5, 0.5, 0.5]), 0)

    def test_matches_score_form(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            t = rng.uniform(-1, 1, size=4)
            label = int(rng.integers(4))
            assert cross_entropy(softmax_vec(t), label) == pytest.approx(
                cross_entropy_from_scores(t, label), abs=1e-10
            )


class TestClipGlobalNorm:
    def test_scales_down_to_max(self):
        out = clip_global_norm({"g": np.array([2.0, 0.0])}, max_norm=1.0)
        np.testing.assert_allclose(out["g"], [1.0, 0.0], atol=1e-12)

    def test_small_norm_unchanged(self):
        g = {"g": np.array([0.3, 0.4])}  # norm 0.5
        out = clip_global_norm(g, max_norm=1.0)
        np.testing.assert_array_equal(out["g"], g["g"])

    def test_zero_stays_zero(self):
        out = clip_global_norm({"g": np.zeros(5)}, max_norm=1.0)
        np.testing.assert_array_equal(out["g"], np.zeros(5))

    def test_norm_bound_and_idempotence(self):
        rng = np.random.default_rng(6)
        for _ in range(25):
            grads = {
                "a": rng.normal(size=(3, 4)) * rng.uniform(0.1, 30),
                "b": rng.normal(size=7) * rng.uniform(0.1, 30),
            }
            once = clip_global_norm(grads, max_norm=1.0)
            assert global_norm(once) <= 1.0 + 1e-6
            twice = clip_global_norm(once, max_norm=1.0)
            for key in grads:
                np.testing.assert_allclose(twice[key], once[key], rtol=1e-12, atol=1e-15)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            clip_global_norm({"g": np.array([np.inf])}, max_norm=1.0)


class TestAdam:
    def test_zero_gradient_is_identity(self):
        params = {"w": np.array([1.0, -2.0, 3.0])}
        state = AdamState.zeros_like(params)
        for _ in range(5):
            params2, state = adam_step(params, {"w": np.zeros(3)}, state, lr=0.1)
            np.testing.assert_array_equal(params2["w"], params["w"])
            params = params2
        assert state.step_count == 5

    def test_first_step_closed_form(self):
        # At t=1 the bias corrections cancel: delta = -lr * g / (|g| + eps).
        for g0 in (0.7, -1.3, 4.0):
            params = {"w": np.array([2.0])}
            state = AdamState.zeros_like(params)
            lr, eps = 1e-2, 1e-8
            new, state = adam_step(params, {"w": np.array([g0])}, state, lr=lr, eps=eps)
            expected = 2.0 - lr * g0 / (abs(g0) + eps)
            assert new["w"][0] == pytest.approx(expected, rel=1e-12)

    def test_quadratic_descent(self):
        # Scalar oracle on f(w) = w^2 from w0=1 at lr 0.1. The normalized
        # step overshoots the optimum near step 12, so the loss decreases
        # strictly only on the early steps; over 100 steps it still lands
        # far below where it started.
        params = {"w": np.array([1.0])}
        state = AdamState.zeros_like(params)
        losses = [1.0]
        for _ in range(100):
            grads = {"w": 2.0 * params["w"]}
            params, state = adam_step(params, grads, state, lr=0.1)
            losses.append(float(params["w"][0] ** 2))
        for i in range(10):
            assert losses[i + 1] < losses[i]
        assert losses[-1] < 1e-4
        assert state.step_count == 100

    def test_shape_mismatch(self):
        params = {"w": np.zeros(3)}
        with pytest.raises(ValueError):
            adam_step(params, {"w": np.zeros(4)}, AdamState.zeros_like(params))

    def test_second_moment_non_negative(self):
        rng = np.random.default_rng(7)
        params = {"w": rng.normal(size=6)}
        state = AdamState.zeros_like(params)
        for _ in range(10):
            params, state = adam_step(params, {"w": rng.normal(size=6)}, state, lr=1e-3)
        assert np.all(state.second_moment["w"] >= 0.0)


class TestFiniteDiff:
    def test_square_at_three(self):
        grad = finite_diff_grad(lambda p: float(p["w"][0] ** 2), {"w": np.array([3.0])})
        assert grad["w"][0] == pytest.approx(6.0, abs=1e-8)

    def test_linear_is_exact(self):
        rng = np.random.default_rng(8)
        coeffs = rng.normal(size=5)
        grad = finite_diff_grad(
            lambda p: float(coeffs @ p["w"]), {"w": rng.normal(size=5)}
        )
        np.testing.assert_allclose(grad["w"], coeffs, atol=1e-9)

    def test_rejects_float32(self):
        with pytest.raises(ValueError):
            finite_diff_grad(lambda p: 0.0, {"w": np.zeros(2, dtype=np.float32)})
