"""Optimiser and learning-rate schedule for the classifier harness.

Adam is implemented as a pure function: it takes parameter and gradient
dicts plus the current moment state and returns fresh dicts, never mutating
its inputs. Bias correction follows the standard first/second moment form.

The schedule halves the learning rate after a fixed number of consecutive
epochs without improving on the best validation loss seen so far; the
counter resets after each halving so reductions are spaced at least a full
patience window apart.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericError


@dataclass(frozen=True)
class AdamState:
    step: int
    m: dict
    v: dict


def adam_init(params: dict) -> AdamState:
    return AdamState(step=0,
                     m={k: np.zeros_like(p) for k, p in params.items()},
                     v={k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8):
    """One update; returns (new_params, new_state)."""
    t = state.step + 1
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {k!r} "
                               f"at step {t}")
        m = beta1 * state.m[k] + (1.0 - beta1) * g
        v = beta2 * state.v[k] + (1.0 - beta2) * g * g
        new_m[k] = m
        new_v[k] = v
        new_p[k] = p - lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return new_p, AdamState(step=t, m=new_m, v=new_v)


@dataclass(frozen=True)
class PlateauSchedule:
    lr: float
    factor: float = 0.5
    patience: int = 3
    best: float = field(default=np.inf)
    bad_epochs: int = 0

    def update(self, metric: float) -> "PlateauSchedule":
        """Fold in one epoch's validation metric (lower is better)."""
        if metric < self.best:
            return replace(self, best=metric, bad_epochs=0)
        bad = self.bad_epochs + 1
        if bad >= self.patience:
            return replace(self, lr=self.lr * self.factor, bad_epochs=0)
        return replace(self, bad_epochs=bad)
