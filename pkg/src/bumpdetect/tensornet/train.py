from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .layers import ShapeError
from .network import Model, NetworkSpec, _loss_grads_logits, forward, init


class TrainingError(ArithmeticError):
    """Training produced a non-finite loss."""


@dataclass
class TrainConfig:
    lr: float = 0.01
    decay: float = 0.1
    step_epochs: int | None = None  # None: a third of the run
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    validation_fraction: float = 0.0
    frozen_layers: int = 0

    def __post_init__(self):
        if self.lr < 0 or not math.isfinite(self.lr):
            raise ValueError("lr must be finite and >= 0")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must lie in (0, 1]")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if not 0 <= self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in [0, 1)")

    def lr_at(self, epoch):
        step = self.step_epochs or max(1, math.ceil(self.epochs / 3))
        return self.lr * self.decay ** (epoch // step)


HISTORY_FIELDS = ("epoch", "lr", "train_loss", "train_acc", "val_acc")


def _accuracy(model, x, y, batch_size=64):
    if len(y) == 0:
        return float("nan")
    correct = 0
    for i in range(0, len(y), batch_size):
        p = forward(model, x[i:i + batch_size])
        correct += int(np.sum((p[:, 1] >= 0.5) == (y[i:i + batch_size] == 1)))
    return correct / len(y)


def train(model: Model, x, y, x_val=None, y_val=None, cfg: TrainConfig | None = None):
    """Plain minibatch SGD with step learning-rate decay.

    Works on a copy of ``model``. Returns ``(trained_model, history)`` where
    history is a list of dicts keyed by ``HISTORY_FIELDS``. If no validation
    set is given, ``cfg.validation_fraction`` of the training data is held
    out (seeded).
    """
    cfg = cfg or TrainConfig()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise ValueError("empty training set")
    if len(x) != len(y):
        raise ShapeError("x and y lengths differ")
    rng = np.random.default_rng(cfg.seed)
    if x_val is None and cfg.validation_fraction > 0:
        idx = rng.permutation(len(y))
        k = int(round(len(y) * cfg.validation_fraction))
        x_val, y_val = x[idx[:k]], y[idx[:k]]
        x, y = x[idx[k:]], y[idx[k:]]
    if x_val is not None:
        x_val = np.asarray(x_val, dtype=np.float64)
        y_val = np.asarray(y_val, dtype=np.int64)

    model = model.copy()
    frozen = cfg.frozen_layers
    history = []
    n = len(y)
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = rng.permutation(n)
        loss_sum, correct = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            b = order[start:start + cfg.batch_size]
            loss, grads, z = _loss_grads_logits(model, x[b], y[b], frozen)
            if not math.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {model.epoch + 1}, batch {start // cfg.batch_size}"
                    f" (lr={lr:g}); try a smaller learning rate")
            loss_sum += loss * len(b)
            correct += int(np.sum(np.argmax(z, axis=1) == y[b]))
            if lr:
                for i in range(frozen, len(model.params)):
                    for p, g in zip(model.params[i], grads[i]):
                        p -= lr * g
        model.epoch += 1
        history.append({
            "epoch": model.epoch, "lr": lr,
            "train_loss": loss_sum / n, "train_acc": correct / n,
            "val_acc": _accuracy(model, x_val, y_val) if x_val is not None else float("nan"),
        })
    return model, history


def predict(model: Model, batch, threshold=0.5, batch_size=64):
    """``(classes, scores)`` with ``score = P(bump)`` and class 1 iff score >= threshold."""
    batch = np.asarray(batch, dtype=np.float64)
    scores = np.concatenate([forward(model, batch[i:i + batch_size])[:, 1]
                             for i in range(0, len(batch), batch_size)]) \
        if len(batch) else np.zeros(0)
    return (scores >= threshold).astype(np.int64), scores


def fine_tune(model: Model, head, x, y, cfg: TrainConfig | None = None,
              keep=None, freeze=False, x_val=None, y_val=None):
    """Keep the first ``keep`` layers of ``model``, append ``head``, train.

    ``keep`` defaults to ``len(model layers) - len(head)``. With
    ``freeze=True`` the retained prefix gets no updates.
    """
    cfg = cfg or TrainConfig()
    head = tuple(head)
    if keep is None:
        keep = len(model.spec.layers) - len(head)
    if not 0 <= keep <= len(model.spec.layers):
        raise ShapeError(f"cannot keep {keep} layers of a {len(model.spec.layers)}-layer model")
    spec = NetworkSpec(model.spec.input_shape, model.spec.layers[:keep] + head,
                       model.spec.name + "+ft")
    fresh = init(spec, cfg.seed)
    for i in range(keep):
        fresh.params[i] = [p.copy() for p in model.params[i]]
    fresh.meta = dict(model.meta)
    if freeze:
        cfg = TrainConfig(**{**cfg.__dict__, "frozen_layers": keep})
    return train(fresh, x, y, x_val, y_val, cfg)


def write_history(history, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in history:
            w.writerow({k: repr(float(row[k])) if k != "epoch" else row[k]
                        for k in HISTORY_FIELDS})


def read_history(path):
    with open(path, newline="") as fh:
        return [{k: (int(v) if k == "epoch" else float(v)) for k, v in row.items()}
                for row in csv.DictReader(fh)]
