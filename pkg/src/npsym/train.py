"""Training loop: minibatch Adam with a plateau schedule and ROC tracking.

A run is fully determined by (model config, data, hyperparameters, seed):
initial weights come from the seed, and each epoch shuffles with a fresh
generator keyed by (seed, epoch), so interrupted and repeated runs agree
bit for bit. Per-epoch rows record train loss, validation loss, validation
background rejection at 95% signal efficiency, and the learning rate in
effect; the validation loss drives the plateau schedule. Model selection
keeps the parameters with the lowest validation loss seen so far (earliest
epoch on ties), so the returned checkpoint is the best one, not the last.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import InputError
from .metrics import rejection_at
from .model import (ModelConfig, binary_logit_loss, forward, init_params,
                    leaf_grads, make_leaves)
from .optim import PlateauSchedule, adam_init, adam_step

EVAL_BATCH = 200


@dataclass(frozen=True)
class TrainSettings:
    epochs: int
    batch_size: int
    learning_rate: float = 1e-3
    plateau_patience: int = 3
    plateau_factor: float = 0.5

    def __post_init__(self):
        # epochs 0 is allowed: an initialization-only run
        if self.epochs < 0 or self.batch_size < 1:
            raise InputError("epochs must be >= 0 and batch_size positive")
        if not 0 < self.plateau_factor < 1:
            raise InputError("plateau factor must be in (0, 1)")


def predict_logits(params: dict, config: ModelConfig, coords,
                   batch: int = EVAL_BATCH) -> np.ndarray:
    """Scores for a stack of clouds, evaluated without gradient tracking."""
    coords = np.asarray(coords, dtype=float)
    out = np.empty(len(coords))
    with ad.no_grad():
        for i in range(0, len(coords), batch):
            out[i:i + batch] = forward(params, config,
                                       coords[i:i + batch]).value
    return out


def _mean_logit_loss(logits: np.ndarray, labels: np.ndarray) -> float:
    z = np.asarray(logits, dtype=float)
    y = np.asarray(labels, dtype=float)
    softplus = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    return float(np.mean(softplus - y * z))


def train_run(config: ModelConfig, settings: TrainSettings, seed: int,
              train_x, train_y, val_x, val_y, progress=None):
    """Train one model; returns (best-validation-loss params, history rows)."""
    train_x = np.asarray(train_x, dtype=float)
    train_y = np.asarray(train_y)
    if len(train_x) != len(train_y):
        raise InputError("training data and labels disagree in length")

    params = init_params(config, seed)
    state = adam_init(params)
    sched = PlateauSchedule(lr=settings.learning_rate,
                            factor=settings.plateau_factor,
                            patience=settings.plateau_patience)
    best_params, best_val = params, np.inf
    history = []
    for epoch in range(settings.epochs):
        tic = time.monotonic()
        rng = np.random.default_rng([seed, epoch])
        order = rng.permutation(len(train_x))
        losses = []
        for i in range(0, len(order), settings.batch_size):
            sel = order[i:i + settings.batch_size]
            leaves = make_leaves(params)
            logits = forward(leaves, config, train_x[sel])
            loss = binary_logit_loss(logits, train_y[sel])
            loss.backward()
            params, state = adam_step(params, leaf_grads(leaves), state,
                                      sched.lr)
            losses.append(float(loss.value))
        val_scores = predict_logits(params, config, val_x)
        val_loss = _mean_logit_loss(val_scores, val_y)
        row = {
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "val_loss": val_loss,
            "val_rejection": rejection_at(val_y, val_scores),
            "lr": sched.lr,
            "seconds": time.monotonic() - tic,
        }
        history.append(row)
        if val_loss < best_val:
            # adam_step never mutates in place, so holding the reference
            # is enough to freeze this epoch's weights
            best_params, best_val = params, val_loss
        sched = sched.update(val_loss)
        if progress is not None:
            progress(row)
    return best_params, history
