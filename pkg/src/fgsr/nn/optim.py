from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], lr: float = 1e-3, **kw) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            lr=lr,
            **kw,
        )


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update, applied in place to ``params`` and ``state``.

    All gradients are checked before anything is touched, so a non-finite
    gradient leaves both parameters and moments unchanged.
    """
    for k in params:
        if k not in grads:
            raise KeyError(f"no gradient for parameter {k!r}")
        if grads[k].shape != params[k].shape:
            raise ValueError(f"gradient for {k!r} has shape {grads[k].shape}, expected {params[k].shape}")
        if not np.all(np.isfinite(grads[k])):
            raise FloatingPointError(f"non-finite gradient for parameter {k!r}")

    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for k, p in params.items():
        g = grads[k].astype(p.dtype, copy=False)
        m = state.m.setdefault(k, np.zeros_like(p))
        v = state.v.setdefault(k, np.zeros_like(p))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


@dataclass
class PlateauScheduler:
    """Halve the learning rate after ``patience`` epochs without relative improvement."""

    lr: float = 1e-3
    factor: float = 0.5
    patience: int = 3
    min_lr: float = 1e-6
    rel_threshold: float = 1e-4
    best_loss: float = math.inf
    epochs_since_improve: int = 0

    def step(self, epoch_loss: float) -> float:
        if not math.isfinite(epoch_loss):
            raise ValueError(f"epoch loss must be finite, got {epoch_loss}")
        if epoch_loss < self.best_loss * (1.0 - self.rel_threshold):
            self.best_loss = epoch_loss
            self.epochs_since_improve = 0
        else:
            self.epochs_since_improve += 1
            if self.epochs_since_improve >= self.patience:
                # never raises lr, even if it started below min_lr
                self.lr = min(self.lr, max(self.lr * self.factor, self.min_lr))
                self.epochs_since_improve = 0
        return self.lr


def scheduler_step(sched: PlateauScheduler, epoch_loss: float) -> float:
    return sched.step(epoch_loss)
