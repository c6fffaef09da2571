"""Hypotheses, evaluation losses in [0, 1], training surrogates with
hand-written gradients, and model quantization.

Quadratic losses are normalized so they stay in [0, 1] on the domain
ball: with ``scale = 1 / (2 r^2)`` the evaluation loss is
``0.5 * scale * ||w - z||^2 = ||w - z||^2 / (2r)^2`` and its gradient is
``scale * (w - z)``.  The loss is therefore ``scale``-smooth and
``scale``-strongly convex after normalization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParameterError, StructuralError

ARCHITECTURES = ("linear-softmax", "mlp-1hidden", "mean-vector")
SURROGATES = ("cross-entropy", "scaled-squared")
EVALUATIONS = ("zero-one", "scaled-squared", "bregman-squared")


@dataclass(frozen=True)
class Hypothesis:
    arch: str
    params: np.ndarray  # flat float64 vector
    in_dim: int
    num_classes: int = 0
    hidden: int = 0

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ParameterError(f"unknown architecture {self.arch!r}")
        if len(self.params) != param_count(self.arch, self.in_dim, self.num_classes, self.hidden):
            raise StructuralError(
                f"{self.arch} with in_dim={self.in_dim}, classes={self.num_classes}, "
                f"hidden={self.hidden} needs {param_count(self.arch, self.in_dim, self.num_classes, self.hidden)} "
                f"parameters, got {len(self.params)}"
            )

    def with_params(self, params: np.ndarray) -> "Hypothesis":
        return Hypothesis(self.arch, params, self.in_dim, self.num_classes, self.hidden)


def param_count(arch: str, in_dim: int, num_classes: int = 0, hidden: int = 0) -> int:
    if arch == "mean-vector":
        return in_dim
    if arch == "linear-softmax":
        return num_classes * in_dim + num_classes
    if arch == "mlp-1hidden":
        return hidden * in_dim + hidden + num_classes * hidden + num_classes
    raise ParameterError(f"unknown architecture {arch!r}")


def init_hypothesis(arch: str, in_dim: int, num_classes: int = 0, hidden: int = 0) -> Hypothesis:
    """Zero-initialized hypothesis (uniform logits for classifiers)."""
    return Hypothesis(arch, np.zeros(param_count(arch, in_dim, num_classes, hidden)), in_dim, num_classes, hidden)


@dataclass(frozen=True)
class LossSpec:
    """Training surrogate plus bounded evaluation loss.

    ``alpha``/``smoothness`` describe the evaluation loss after the
    [0, 1] normalization; they are filled in automatically for the
    quadratic losses.
    """

    surrogate: str = "cross-entropy"
    evaluation: str = "zero-one"
    radius: float = 1.0
    alpha: float | None = None
    smoothness: float | None = None

    def __post_init__(self):
        if self.surrogate not in SURROGATES:
            raise ParameterError(f"unknown surrogate {self.surrogate!r}")
        if self.evaluation not in EVALUATIONS:
            raise ParameterError(f"unknown evaluation loss {self.evaluation!r}")
        if self.radius <= 0:
            raise ParameterError("radius must be > 0")
        if self.evaluation in ("scaled-squared", "bregman-squared"):
            object.__setattr__(self, "alpha", self.scale)
            object.__setattr__(self, "smoothness", self.scale)
        if (self.alpha is None) != (self.smoothness is None):
            raise ParameterError("alpha and smoothness must be given together")
        if self.alpha is not None and not (0 < self.alpha <= self.smoothness):
            raise ParameterError("need 0 < alpha <= smoothness")

    @property
    def scale(self) -> float:
        return 1.0 / (2.0 * self.radius**2)


def _unpack_softmax(w: Hypothesis):
    c, d = w.num_classes, w.in_dim
    weights = w.params[: c * d].reshape(c, d)
    bias = w.params[c * d :]
    return weights, bias


def _unpack_mlp(w: Hypothesis):
    d, h, c = w.in_dim, w.hidden, w.num_classes
    p = w.params
    w1 = p[: h * d].reshape(h, d)
    b1 = p[h * d : h * d + h]
    w2 = p[h * d + h : h * d + h + c * h].reshape(c, h)
    b2 = p[h * d + h + c * h :]
    return w1, b1, w2, b2


def predict_logits(w: Hypothesis, x: np.ndarray) -> np.ndarray:
    """Class scores for a batch x of shape (m, d)."""
    if w.arch == "linear-softmax":
        weights, bias = _unpack_softmax(w)
        return x @ weights.T + bias
    if w.arch == "mlp-1hidden":
        w1, b1, w2, b2 = _unpack_mlp(w)
        return np.tanh(x @ w1.T + b1) @ w2.T + b2
    raise ParameterError(f"{w.arch} does not produce class scores")


def _check_domain(x: np.ndarray, radius: float):
    norms = np.linalg.norm(x, axis=-1)
    if np.any(norms > radius * (1 + 1e-9)):
        raise DomainError(f"instance norm {norms.max():.6g} exceeds domain radius {radius}")


def eval_losses(w: Hypothesis, x: np.ndarray, y: np.ndarray, spec: LossSpec) -> np.ndarray:
    """Vectorized evaluation loss over a batch; always in [0, 1]."""
    _check_domain(x, spec.radius)
    if spec.evaluation == "zero-one":
        if np.any(y < 0):
            raise DomainError("zero-one loss needs labelled instances")
        preds = np.argmax(predict_logits(w, x), axis=1)  # ties go to the lowest class index
        return (preds != y).astype(np.float64)
    # quadratic: hypothesis and instance share the space
    if w.arch != "mean-vector":
        raise ParameterError("quadratic losses require a mean-vector hypothesis")
    diff = x - w.params
    vals = 0.5 * spec.scale * np.einsum("ij,ij->i", diff, diff)
    if np.any(vals > 1 + 1e-12):
        raise DomainError("quadratic loss exceeded 1; inputs left the domain ball")
    return np.minimum(vals, 1.0)


def eval_loss(w: Hypothesis, x: np.ndarray, y: int, spec: LossSpec) -> float:
    """Evaluation loss of one instance (label UNLABELED/-1 if absent)."""
    return float(eval_losses(w, np.asarray(x, dtype=np.float64)[None, :], np.asarray([y]), spec)[0])


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def surrogate_loss(w: Hypothesis, x: np.ndarray, y: np.ndarray, spec: LossSpec) -> float:
    """Mean surrogate training loss over a batch (used by gradient checks)."""
    if spec.surrogate == "scaled-squared":
        diff = w.params - x
        return float(0.5 * spec.scale * np.einsum("ij,ij->i", diff, diff).mean())
    logits = predict_logits(w, x)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return float(-log_probs[np.arange(len(y)), y].mean())


def surrogate_gradient(w: Hypothesis, x: np.ndarray, y: np.ndarray, spec: LossSpec) -> np.ndarray:
    """Gradient of the mean surrogate loss, flattened like ``w.params``."""
    if len(x) == 0:
        raise ParameterError("batch must be nonempty")
    if spec.surrogate == "scaled-squared":
        if w.arch != "mean-vector":
            raise ParameterError("scaled-squared surrogate requires a mean-vector hypothesis")
        return spec.scale * (w.params - x.mean(axis=0))
    if np.any(y < 0):
        raise DomainError("cross-entropy requires labelled instances")
    m = len(x)
    if w.arch == "linear-softmax":
        probs = _softmax(predict_logits(w, x))
        probs[np.arange(m), y] -= 1.0
        grad_w = probs.T @ x / m
        grad_b = probs.mean(axis=0)
        return np.concatenate([grad_w.ravel(), grad_b])
    if w.arch == "mlp-1hidden":
        w1, b1, w2, b2 = _unpack_mlp(w)
        hid = np.tanh(x @ w1.T + b1)
        probs = _softmax(hid @ w2.T + b2)
        probs[np.arange(m), y] -= 1.0
        grad_w2 = probs.T @ hid / m
        grad_b2 = probs.mean(axis=0)
        back = (probs @ w2) * (1.0 - hid**2)
        grad_w1 = back.T @ x / m
        grad_b1 = back.mean(axis=0)
        return np.concatenate([grad_w1.ravel(), grad_b1, grad_w2.ravel(), grad_b2])
    raise ParameterError(f"no surrogate gradient for architecture {w.arch!r}")


def bregman_divergence(x: np.ndarray, y: np.ndarray) -> float:
    """D_f(x, y) for f = ||.||^2, which collapses to the squared distance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    fx = float(x @ x)
    fy = float(y @ y)
    return fx - fy - float(2.0 * y @ (x - y))


def quantize_model(w: Hypothesis, bits: int, radius: float) -> tuple:
    """Uniformly quantize each coordinate over the box [-radius, radius].

    Spends ``bits // d`` bits per coordinate, so the code space never
    exceeds 2**bits values.  Quantizing the cell center of a code
    returns the same code.
    """
    d = len(w.params)
    if bits < d:
        raise ParameterError(f"need at least one bit per coordinate ({bits} bits for {d} dims)")
    if np.any(np.abs(w.params) > radius * (1 + 1e-9)):
        raise DomainError("hypothesis lies outside the quantization box")
    levels = 2 ** (bits // d)
    width = 2.0 * radius
    cells = np.floor((w.params + radius) / width * levels).astype(np.int64)
    cells = np.clip(cells, 0, levels - 1)
    return tuple(int(c) for c in cells)


def dequantize_code(code: tuple, bits: int, dim: int, radius: float) -> np.ndarray:
    """Center of a quantization cell."""
    levels = 2 ** (bits // dim)
    width = 2.0 * radius
    return -radius + (np.asarray(code, dtype=np.float64) + 0.5) * width / levels


def code_to_id(code: tuple, bits: int, dim: int) -> int:
    """Mixed-radix packing of a per-coordinate code into one integer."""
    levels = 2 ** (bits // dim)
    out = 0
    for c in code:
        out = out * levels + int(c)
    return out
