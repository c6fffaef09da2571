import itertools
import math

import numpy as np
import pytest

from flbounds.errors import DomainError, ParameterError
from flbounds.models import (
    Hypothesis,
    LossSpec,
    bregman_divergence,
    dequantize_code,
    eval_loss,
    eval_losses,
    init_hypothesis,
    predict_logits,
    quantize_model,
    surrogate_gradient,
    surrogate_loss,
)

ZERO_ONE = LossSpec(surrogate="cross-entropy", evaluation="zero-one", radius=1.0)
QUAD = LossSpec(surrogate="scaled-squared", evaluation="scaled-squared", radius=1.0)


def softmax_hypothesis(weights, bias):
    weights = np.asarray(weights, dtype=float)
    bias = np.asarray(bias, dtype=float)
    c, d = weights.shape
    return Hypothesis("linear-softmax", np.concatenate([weights.ravel(), bias]), d, c)


class TestEvalLoss:
    def test_correct_prediction_is_zero(self):
        w = softmax_hypothesis([[1, 0], [-1, 0]], [0, 0])
        assert eval_loss(w, np.array([0.5, 0.0]), 0, ZERO_ONE) == 0.0
        assert eval_loss(w, np.array([-0.5, 0.0]), 1, ZERO_ONE) == 0.0

    def test_tie_breaks_toward_lowest_class(self):
        w = init_hypothesis("linear-softmax", 2, 3)  # all logits equal
        x = np.array([0.2, 0.1])
        assert eval_loss(w, x, 0, ZERO_ONE) == 0.0
        assert eval_loss(w, x, 1, ZERO_ONE) == 1.0
        assert eval_loss(w, x, 2, ZERO_ONE) == 1.0

    def test_tie_break_deterministic_under_weight_permutation(self):
        # permuting rows that produce equal logits never changes the rule:
        # the predicted class is always the lowest index among the maxima
        w1 = softmax_hypothesis([[1, 0], [1, 0], [0, 1]], [0, 0, 0])
        x = np.array([0.5, 0.0])
        assert int(np.argmax(predict_logits(w1, x[None, :]))) == 0

    def test_bregman_identity_at_equal_points(self):
        w = Hypothesis("mean-vector", np.array([0.3, -0.1]), 2)
        assert eval_loss(w, np.array([0.3, -0.1]), -1, QUAD) == 0.0

    def test_normalized_squared_distance_hand_value(self):
        w = Hypothesis("mean-vector", np.array([0.5]), 1)
        assert abs(eval_loss(w, np.array([-0.5]), -1, QUAD) - 0.25) < 1e-15

    def test_out_of_domain_instance(self):
        w = init_hypothesis("mean-vector", 2)
        with pytest.raises(DomainError):
            eval_loss(w, np.array([2.0, 2.0]), -1, QUAD)

    def test_missing_label_for_zero_one(self):
        w = init_hypothesis("linear-softmax", 2, 2)
        with pytest.raises(DomainError):
            eval_loss(w, np.array([0.1, 0.1]), -1, ZERO_ONE)

    def test_range_fuzz_quadratic(self):
        rng = np.random.default_rng(0)
        w_dir = rng.standard_normal(3)
        w = Hypothesis("mean-vector", w_dir / np.linalg.norm(w_dir) * 0.9, 3)
        pts = rng.standard_normal((10**4, 3))
        pts = pts / np.maximum(np.linalg.norm(pts, axis=1, keepdims=True), 1.0)
        spec = LossSpec(surrogate="scaled-squared", evaluation="scaled-squared", radius=1.0)
        vals = eval_losses(w, pts, np.full(10**4, -1), spec)
        assert vals.min() >= 0.0 and vals.max() <= 1.0

    def test_range_fuzz_zero_one(self):
        rng = np.random.default_rng(1)
        w = softmax_hypothesis(rng.standard_normal((3, 2)), rng.standard_normal(3))
        pts = rng.uniform(-0.7, 0.7, size=(10**4, 2))
        labels = rng.integers(0, 3, 10**4)
        vals = eval_losses(w, pts, labels, ZERO_ONE)
        assert set(np.unique(vals)) <= {0.0, 1.0}


class TestBregman:
    def test_collapses_to_squared_distance(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            x, y = rng.standard_normal(4), rng.standard_normal(4)
            assert abs(bregman_divergence(x, y) - float(np.sum((x - y) ** 2))) < 1e-12


def finite_difference(w, x, y, spec, h=1e-6):
    grad = np.empty_like(w.params)
    for k in range(len(w.params)):
        plus = w.params.copy()
        plus[k] += h
        minus = w.params.copy()
        minus[k] -= h
        grad[k] = (surrogate_loss(w.with_params(plus), x, y, spec) - surrogate_loss(w.with_params(minus), x, y, spec)) / (2 * h)
    return grad


class TestSurrogateGradient:
    @pytest.mark.parametrize(
        "arch,classes,hidden,spec",
        [
            ("linear-softmax", 3, 0, ZERO_ONE),
            ("mlp-1hidden", 3, 8, LossSpec(surrogate="cross-entropy", evaluation="zero-one")),
            ("mean-vector", 0, 0, QUAD),
        ],
    )
    def test_matches_central_differences(self, arch, classes, hidden, spec):
        rng = np.random.default_rng(3)
        for trial in range(25):
            w0 = init_hypothesis(arch, 2, classes, hidden)
            w = w0.with_params(rng.standard_normal(len(w0.params)) * 0.5)
            x = rng.uniform(-0.6, 0.6, size=(4, 2))
            y = rng.integers(0, 3, 4) if classes else np.full(4, -1)
            analytic = surrogate_gradient(w, x, y, spec)
            numeric = finite_difference(w, x, y, spec)
            denom = max(np.linalg.norm(numeric), 1e-12)
            assert np.linalg.norm(analytic - numeric) / denom <= 1e-5

    def test_quadratic_single_instance(self):
        w = Hypothesis("mean-vector", np.array([0.2, -0.1]), 2)
        z = np.array([[0.5, 0.3]])
        grad = surrogate_gradient(w, z, np.array([-1]), QUAD)
        assert np.allclose(grad, QUAD.scale * (w.params - z[0]), atol=1e-15)

    def test_uniform_logits_onehot_structure(self):
        # zero weights give uniform softmax; gradient rows are (1/C - onehot) x
        w = init_hypothesis("linear-softmax", 2, 4)
        x = np.array([[0.3, -0.2]])
        y = np.array([2])
        grad = surrogate_gradient(w, x, y, ZERO_ONE)
        gw = grad[: 4 * 2].reshape(4, 2)
        probs = np.full(4, 0.25)
        probs[2] -= 1.0
        assert np.allclose(gw, probs[:, None] * x[0][None, :], atol=1e-12)
        assert np.allclose(grad[4 * 2 :], probs, atol=1e-12)

    def test_batch_mean_invariance(self):
        w = init_hypothesis("linear-softmax", 2, 3)
        x = np.array([[0.4, 0.1]])
        y = np.array([1])
        g1 = surrogate_gradient(w, x, y, ZERO_ONE)
        g2 = surrogate_gradient(w, np.vstack([x, x]), np.array([1, 1]), ZERO_ONE)
        assert np.allclose(g1, g2, atol=1e-15)

    def test_softmax_overflow_is_shifted_not_raised(self):
        w = softmax_hypothesis([[1000.0, 0.0], [0.0, 1000.0]], [0.0, 0.0])
        g = surrogate_gradient(w, np.array([[0.7, -0.7]]), np.array([0]), ZERO_ONE)
        assert np.isfinite(g).all()

    def test_empty_batch(self):
        w = init_hypothesis("linear-softmax", 2, 2)
        with pytest.raises(ParameterError):
            surrogate_gradient(w, np.empty((0, 2)), np.empty(0, dtype=int), ZERO_ONE)


class TestQuantization:
    def test_two_half_interval_cells(self):
        w_neg = Hypothesis("mean-vector", np.array([-0.3]), 1)
        w_pos = Hypothesis("mean-vector", np.array([0.3]), 1)
        assert quantize_model(w_neg, 1, 1.0) == (0,)
        assert quantize_model(w_pos, 1, 1.0) == (1,)

    def test_codes_in_range(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            w = Hypothesis("mean-vector", rng.uniform(-1, 1, 2), 2)
            code = quantize_model(w, 6, 1.0)
            assert all(0 <= c <= 2**3 - 1 for c in code)

    def test_exhaustive_code_budget(self):
        # d=2, B=4: sweep a dense grid of inputs, never more than 16 codes
        grid = np.linspace(-1, 1, 41)
        codes = set()
        for a, b in itertools.product(grid, grid):
            if a * a + b * b > 1:
                continue
            codes.add(quantize_model(Hypothesis("mean-vector", np.array([a, b]), 2), 4, 1.0))
        assert len(codes) <= 16

    def test_idempotent_on_cell_centers(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            w = Hypothesis("mean-vector", rng.uniform(-1, 1, 3), 3)
            code = quantize_model(w, 9, 1.0)
            center = dequantize_code(code, 9, 3, 1.0)
            assert quantize_model(Hypothesis("mean-vector", center, 3), 9, 1.0) == code

    def test_bit_budget_validation(self):
        w = init_hypothesis("mean-vector", 3)
        with pytest.raises(ParameterError):
            quantize_model(w, 2, 1.0)


class TestLossSpecValidation:
    def test_quadratic_fills_curvature(self):
        spec = LossSpec(surrogate="scaled-squared", evaluation="scaled-squared", radius=2.0)
        assert spec.alpha == spec.smoothness == 1.0 / 8.0

    def test_alpha_le_smoothness(self):
        with pytest.raises(ParameterError):
            LossSpec(surrogate="cross-entropy", evaluation="zero-one", alpha=2.0, smoothness=1.0)

    def test_unknown_tags(self):
        with pytest.raises(ParameterError):
            LossSpec(surrogate="hinge", evaluation="zero-one")
