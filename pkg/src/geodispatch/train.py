"""Minibatch training loop with decoupled-weight-decay Adam.

Fully deterministic for a fixed (seed, dataset, config): shuffles, the
optional data-fraction subset, batch boundaries, and the optimizer state
all derive from one seeded generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import objective
from .errors import NumericalError, ValidationError
from .model import RouterModel

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 24
    epochs: int = 3
    seed: int = 0
    weight_decay: float = 0.01
    data_fraction: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.learning_rate) and self.learning_rate >= 0.0):
            raise ValidationError(f"learning_rate must be >= 0, got {self.learning_rate!r}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValidationError(f"epochs must be >= 0, got {self.epochs}")
        if not (math.isfinite(self.weight_decay) and self.weight_decay >= 0.0):
            raise ValidationError(f"weight_decay must be >= 0, got {self.weight_decay!r}")
        if not 0.0 < self.data_fraction <= 1.0:
            raise ValidationError(f"data_fraction must be in (0, 1], got {self.data_fraction!r}")


@dataclass
class TrainResult:
    model: RouterModel
    epoch_losses: list
    n_used: int


class AdamW:
    """Adam with decoupled weight decay on a list of parameter arrays."""

    def __init__(self, params, lr: float, weight_decay: float):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads) -> None:
        self.t += 1
        bc1 = 1.0 - ADAM_BETA1 ** self.t
        bc2 = 1.0 - ADAM_BETA2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            p -= self.lr * (m_hat / (np.sqrt(v_hat) + ADAM_EPS) + self.weight_decay * p)


def train(records, targets, cfg: TrainConfig, obj_cfg: objective.ObjectiveConfig,
          init: RouterModel) -> TrainResult:
    """Train a copy of `init` on (records, targets); init itself is untouched.

    Each epoch reshuffles with the seeded generator and walks minibatches of
    cfg.batch_size (last batch may be short). When data_fraction < 1, a
    prefix of one seeded shuffle is selected up front and reused for every
    epoch. Returns the trained model plus the mean training loss per epoch.
    """
    if len(records) == 0:
        raise ValidationError("empty dataset")
    if len(records) != len(targets):
        raise ValidationError(f"{len(records)} records vs {len(targets)} targets")

    U = init.encoder.encode_many(records)
    q = objective.labels(targets, obj_cfg)
    rng = np.random.default_rng(cfg.seed)

    n = len(records)
    if cfg.data_fraction < 1.0:
        keep = max(1, int(cfg.data_fraction * n))
        subset = rng.permutation(n)[:keep]
        U, q = U[subset], q[subset]
        n = keep

    model = init.copy()
    opt = AdamW(model.param_arrays(), cfg.learning_rate, cfg.weight_decay)
    epoch_losses = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            Ub, qb = U[batch], q[batch]
            index = start // cfg.batch_size
            scores = model.forward(Ub)
            if not np.all(np.isfinite(scores)):
                raise NumericalError(f"non-finite routing score at batch index {index}")
            batch_loss = objective.loss_from_labels(scores, qb)
            if not math.isfinite(batch_loss):
                raise NumericalError(f"non-finite loss at batch index {index}")
            total += batch_loss * len(batch)
            grads = objective.grad_wrt_params(Ub, qb, model)
            opt.step(grads)
        epoch_losses.append(total / n)
    return TrainResult(model, epoch_losses, n)
