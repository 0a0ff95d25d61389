"""Training objective: supervised terms plus weight decay.

Three parts, combined as alpha * recurrence_term + (1 - alpha) *
final_term + decay_term:

* recurrence_term averages squared error over every per-recurrence
  image: sum over images i and recurrences r of ||y_i - y_{i,r}||^2
  / (2 R N), N the per-image pixel count.
* final_term is squared error of the merged output: sum over i of
  ||y_i - final_i||^2 / (2 N).
* decay_term is beta * sum of squared weights over the non-exempt
  entries only; biases never decay.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Model, PARAM_NAMES
from .tensor_ops import ConfigurationError


@dataclass(frozen=True)
class LossConfig(object):
    alpha: float = 0.5
    beta: float = 1e-4
    # "constant" keeps alpha fixed; "linear_decay_to_zero" ramps it from
    # its initial value down to zero across the configured epoch span.
    alpha_schedule: str = "constant"
    alpha_decay_epochs: int = 80

    def validate(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigurationError("alpha must be in [0, 1]")
        if self.beta < 0.0:
            raise ConfigurationError("beta must be >= 0")
        if self.alpha_schedule not in ("constant", "linear_decay_to_zero"):
            raise ConfigurationError(
                "alpha_schedule must be 'constant' or 'linear_decay_to_zero'"
            )
        if self.alpha_decay_epochs < 1:
            raise ConfigurationError("alpha_decay_epochs must be >= 1")


def alpha_at_epoch(cfg: LossConfig, epoch: int) -> float:
    """Effective alpha for a zero-based epoch index."""
    if cfg.alpha_schedule == "constant":
        return cfg.alpha
    frac = 1.0 - epoch / cfg.alpha_decay_epochs
    return cfg.alpha * max(0.0, frac)


def recurrence_loss(target: np.ndarray, intermediates: list[np.ndarray]) -> float:
    big_r = len(intermediates)
    n = target.shape[0] * target.shape[2] * target.shape[3]
    s = 0.0
    for y in intermediates:
        d = target - y
        s += float(np.sum(d * d, dtype=np.float64))
    return s / (2.0 * big_r * n)


def recurrence_loss_grads(
    target: np.ndarray, intermediates: list[np.ndarray]
) -> list[np.ndarray]:
    big_r = len(intermediates)
    n = target.shape[0] * target.shape[2] * target.shape[3]
    return [(y - target) / (big_r * n) for y in intermediates]


def final_loss(target: np.ndarray, final: np.ndarray) -> float:
    n = target.shape[0] * target.shape[2] * target.shape[3]
    d = target - final
    return float(np.sum(d * d, dtype=np.float64)) / (2.0 * n)


def final_loss_grad(target: np.ndarray, final: np.ndarray) -> np.ndarray:
    n = target.shape[0] * target.shape[2] * target.shape[3]
    return (final - target) / n


def decay_loss(model: Model, beta: float) -> float:
    s = 0.0
    for name in PARAM_NAMES:
        entry = model.params[name]
        if entry.decay_exempt:
            continue
        s += float(np.sum(entry.weights.astype(np.float64) ** 2))
    return beta * s


def decay_grads(model: Model, beta: float) -> dict:
    """2 * beta * W for non-exempt entries, zero arrays for exempt ones."""
    out = {}
    for name in PARAM_NAMES:
        entry = model.params[name]
        if entry.decay_exempt:
            out[name] = np.zeros_like(entry.weights)
        else:
            out[name] = 2.0 * beta * entry.weights
    return out


@dataclass
class LossBreakdown(object):
    recurrence: float
    final: float
    decay: float
    total: float


def composite_loss(
    model: Model,
    target: np.ndarray,
    final: np.ndarray,
    intermediates: list[np.ndarray],
    alpha: float,
    beta: float,
) -> LossBreakdown:
    l1 = recurrence_loss(target, intermediates)
    l2 = final_loss(target, final)
    l3 = decay_loss(model, beta)
    return LossBreakdown(l1, l2, l3, alpha * l1 + (1.0 - alpha) * l2 + l3)


def composite_grads(
    target: np.ndarray,
    final: np.ndarray,
    intermediates: list[np.ndarray],
    alpha: float,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Output-side gradients of the supervised terms.

    Decay gradients act directly on the weights and are added after
    backpropagation; see decay_grads.
    """
    gf = (1.0 - alpha) * final_loss_grad(target, final)
    gis = [alpha * g for g in recurrence_loss_grads(target, intermediates)]
    return gf, gis
