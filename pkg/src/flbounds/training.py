"""Local training, model averaging and the multi-round federated protocol."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, StructuralError
from .models import Hypothesis, LossSpec, surrogate_gradient
from .seeding import SeedPath

OPTIMIZERS = ("full-gd", "minibatch-sgd", "closed-form-erm")


@dataclass(frozen=True)
class TrainConfig:
    rounds: int = 1
    local_epochs: int = 5
    optimizer: str = "full-gd"
    batch_size: int = 0  # 0 means the full batch
    learning_rate: float = 0.1
    lr_decay: float = 0.01
    decay_every: int = 10
    projection_radius: float | None = None

    def __post_init__(self):
        if self.rounds < 1 or self.local_epochs < 1:
            raise ParameterError("rounds and local_epochs must be >= 1")
        if self.optimizer not in OPTIMIZERS:
            raise ParameterError(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate <= 0:
            raise ParameterError("learning rate must be > 0")
        if not (0 < self.lr_decay <= 1):
            raise ParameterError("lr decay factor must be in (0, 1]")
        if self.decay_every < 1:
            raise ParameterError("decay period must be >= 1")
        if self.batch_size < 0:
            raise ParameterError("batch size must be >= 0")


def _project(params: np.ndarray, radius: float | None) -> np.ndarray:
    if radius is None:
        return params
    norm = float(np.linalg.norm(params))
    if norm > radius:
        return params * (radius / norm)
    return params


def _rate(cfg: TrainConfig, step: int) -> float:
    return cfg.learning_rate * cfg.lr_decay ** (step // cfg.decay_every)


def local_train(
    w0: Hypothesis,
    features: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
    spec: LossSpec,
    seed: SeedPath,
    start_step: int = 0,
) -> Hypothesis:
    """Train one client from ``w0`` for ``local_epochs`` epochs.

    ``start_step`` continues the step-decay learning-rate schedule
    across communication rounds.  Iterates are projected onto the ball
    of ``projection_radius`` when one is configured (mean-vector
    hypotheses default to the loss radius so quadratic losses stay
    normalized).
    """
    if len(features) == 0:
        raise ParameterError("training set must be nonempty")
    radius = cfg.projection_radius
    if radius is None and w0.arch == "mean-vector":
        radius = spec.radius
    if cfg.optimizer == "closed-form-erm":
        if w0.arch != "mean-vector" or spec.surrogate != "scaled-squared":
            raise ParameterError("closed-form-erm is defined for mean-vector quadratic problems")
        return w0.with_params(_project(features.mean(axis=0), radius))
    params = w0.params.copy()
    step = start_step
    if cfg.optimizer == "full-gd":
        for _ in range(cfg.local_epochs):
            grad = surrogate_gradient(w0.with_params(params), features, labels, spec)
            params = _project(params - _rate(cfg, step) * grad, radius)
            step += 1
        return w0.with_params(params)
    # minibatch-sgd
    rng = seed.generator()
    m = len(features)
    batch = m if cfg.batch_size == 0 else min(cfg.batch_size, m)
    for _ in range(cfg.local_epochs):
        order = rng.permutation(m)
        for lo in range(0, m, batch):
            idx = order[lo : lo + batch]
            grad = surrogate_gradient(w0.with_params(params), features[idx], labels[idx], spec)
            params = _project(params - _rate(cfg, step) * grad, radius)
            step += 1
    return w0.with_params(params)


def aggregate_average(models: list) -> Hypothesis:
    """Coordinate-wise mean of local models.

    Summands are sorted per coordinate before reduction, so the result
    is bit-identical under any permutation of the model list.
    """
    if not models:
        raise ParameterError("need at least one model")
    head = models[0]
    for m in models[1:]:
        if (m.arch, m.in_dim, m.num_classes, m.hidden) != (
            head.arch,
            head.in_dim,
            head.num_classes,
            head.hidden,
        ):
            raise StructuralError("cannot average models with different architectures")
    stack = np.sort(np.stack([m.params for m in models]), axis=0)
    return head.with_params(np.add.reduce(stack, axis=0) / len(models))


def local_steps_per_round(cfg: TrainConfig, set_size: int) -> int:
    if cfg.optimizer == "closed-form-erm":
        return 0
    if cfg.optimizer == "full-gd" or cfg.batch_size == 0:
        return cfg.local_epochs
    batch = min(cfg.batch_size, set_size)
    return cfg.local_epochs * ((set_size + batch - 1) // batch)


def run_protocol(
    train_sets: list,
    w0: Hypothesis,
    cfg: TrainConfig,
    spec: LossSpec,
    seed: SeedPath,
) -> tuple[Hypothesis, list]:
    """Federated averaging: broadcast, train locally, average, repeat.

    Returns the final global model and the final round's local models.
    """
    if not train_sets:
        raise ParameterError("need at least one client")
    global_model = w0
    locals_ = [w0] * len(train_sets)
    steps = local_steps_per_round(cfg, len(train_sets[0][0]))
    for rnd in range(cfg.rounds):
        locals_ = [
            local_train(
                global_model,
                x,
                y,
                cfg,
                spec,
                seed.child("local", rnd, i),
                start_step=rnd * steps,
            )
            for i, (x, y) in enumerate(train_sets)
        ]
        global_model = aggregate_average(locals_)
    return global_model, locals_
