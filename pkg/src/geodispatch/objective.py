"""Soft-label preference loss: value and analytic gradients.

The objective is a weighted binary cross-entropy of the routing score
against the soft label derived from the two paradigm errors. The hard-label
ablation swaps the soft labels for the binary winner through the same code
path, so the two objectives differ only in the label definition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ValidationError

SOFT_LABEL_CLAMP = 1e-12


@dataclass(frozen=True)
class ObjectiveConfig:
    """Label construction knobs; defaults match the training recipe."""

    alpha: float = 1.6
    epsilon: float = 1e-6
    hard_label_mode: bool = False  # ablation: train on the binary winner

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0.0):
            raise ValidationError(f"alpha must be > 0, got {self.alpha!r}")
        if not (math.isfinite(self.epsilon) and self.epsilon > 0.0):
            raise ValidationError(f"epsilon must be > 0, got {self.epsilon!r}")


def labels(targets, cfg: ObjectiveConfig) -> np.ndarray:
    """The label vector the loss trains against: soft p, or hard y in ablation."""
    if cfg.hard_label_mode:
        return np.array([float(t.hard_label) for t in targets])
    return np.array([t.soft_label for t in targets])


def _check_scores_labels(scores, q):
    r = np.asarray(scores, dtype=np.float64)
    qa = np.asarray(q, dtype=np.float64)
    if r.ndim != 1 or qa.shape != r.shape:
        raise ValidationError(f"scores and labels must be equal-length vectors, "
                              f"got {r.shape} and {qa.shape}")
    if r.size == 0:
        raise ValidationError("empty batch")
    if not np.all(np.isfinite(r)):
        raise ValidationError("scores must be finite")
    if not np.all(np.isfinite(qa)) or np.any(qa < 0.0) or np.any(qa > 1.0):
        raise ValidationError("labels must lie in [0, 1]")
    return r, qa


def loss_from_labels(scores, q) -> float:
    """Mean cross-entropy of score logits against labels already in [0, 1]."""
    r, qa = _check_scores_labels(scores, q)
    return _kernels.bce_loss(r, qa)


def loss(scores, targets, cfg: ObjectiveConfig | None = None) -> float:
    """Mean weighted binary cross-entropy over a batch of targets.

    Evaluated in softplus form, so scores with |r| up to 1e4 stay finite.
    """
    cfg = cfg if cfg is not None else ObjectiveConfig()
    if len(scores) != len(targets):
        raise ValidationError(
            f"{len(scores)} scores vs {len(targets)} targets")
    return loss_from_labels(scores, labels(targets, cfg))


def grad_wrt_score(r: float, q: float) -> float:
    """Exact per-instance derivative of the loss wrt the score: sigmoid(r) - q."""
    if not (0.0 <= q <= 1.0):
        raise ValidationError(f"label must be in [0, 1], got {q!r}")
    if not math.isfinite(r):
        raise ValidationError(f"score must be finite, got {r!r}")
    return float(_kernels.bce_grad(np.array([r]), np.array([q]))[0])


def grad_wrt_params(features, q, model) -> list:
    """Gradient of the mean batch loss wrt every model parameter.

    For the linear head this is (1/N) sum_i (sigmoid(theta.u_i) - q_i) u_i;
    for the MLP it is the exact backpropagated gradient of the same loss.
    Returned arrays match model.param_arrays() element for element.
    """
    U = np.asarray(features, dtype=np.float64)
    if U.ndim != 2:
        raise ValidationError(f"features must be a 2-d matrix, got shape {U.shape}")
    scores = model.forward(U)
    r, qa = _check_scores_labels(scores, q)
    dscore = _kernels.bce_grad(r, qa) / r.size
    return model.backward(U, dscore)


def logit(q: float) -> float:
    """Inverse sigmoid with endpoint clamping; test helper."""
    q = min(max(q, SOFT_LABEL_CLAMP), 1.0 - SOFT_LABEL_CLAMP)
    return math.log(q / (1.0 - q))
