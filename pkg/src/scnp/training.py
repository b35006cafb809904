"""Cross-entropy loss, Adam, and the early-stopped training loop."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .autodiff import Tape, Tensor
from .errors import EmptySplit, LabelOutOfRange, ShapeMismatch
from .model import JkModel, jk_forward

__all__ = [
    "TrainConfig",
    "History",
    "AdamState",
    "cross_entropy",
    "adam_step",
    "train",
    "evaluate",
    "predict",
]

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 150
    patience: int = 25
    lr: float = 1e-3
    batch_size: int = 8
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class History:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    best_epoch: int = -1

    def __len__(self):
        return len(self.train_loss)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_loss", "val_acc"])
            for e, row in enumerate(zip(self.train_loss, self.val_loss, self.val_acc), start=1):
                w.writerow([e, *(repr(float(v)) for v in row)])


def cross_entropy(logits: Tensor, label: int) -> Tensor:
    """Softmax cross-entropy of ``(1, C)`` logits, stabilized by max subtraction."""
    if logits.shape[0] != 1:
        raise ShapeMismatch(f"logits must be a row vector, got {logits.shape}")
    C = logits.shape[1]
    if not 0 <= label < C:
        raise LabelOutOfRange(f"label {label} outside [0, {C})")
    z = logits.value[0]
    shifted = z - z.max()
    log_norm = np.log(np.exp(shifted).sum())
    probs = np.exp(shifted - log_norm)
    loss = log_norm - shifted[label]

    def vjp(g):
        d = probs.copy()
        d[label] -= 1.0
        return (g[0, 0] * d[None, :],)

    return logits.tape.op(np.array([[loss]]), (logits,), vjp)


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    t: int,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; ``params`` are updated in place and returned."""
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ShapeMismatch(f"gradient for {name} has shape {g.shape}, parameter {theta.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1 - beta1) * g if m is None else beta1 * m + (1 - beta1) * g
        v = (1 - beta2) * g * g if v is None else beta2 * v + (1 - beta2) * g * g
        state.m[name], state.v[name] = m, v
        theta -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    state.t = t
    return params, state


def _sample_loss_and_grads(model: JkModel, sample, rng) -> tuple[float, dict[str, np.ndarray]]:
    tape = Tape()
    loss = cross_entropy(jk_forward(model, sample.complex, sample.X, tape, rng), sample.label)
    grads = tape.backward(loss)
    return loss.value[0, 0], {name: tape.grad_of(grads, p) for name, p in model.named_parameters().items()}


def predict(model: JkModel, sample, rng=None) -> np.ndarray:
    """Logits of one sample as a 1-D array (no gradient recording)."""
    return jk_forward(model, sample.complex, sample.X, Tape(record=False), rng).value[0]


def _mean_loss_and_acc(model: JkModel, dataset, rng) -> tuple[float, float]:
    losses, correct = [], 0
    for s in dataset:
        logits = jk_forward(model, s.complex, s.X, Tape(record=False), rng)
        losses.append(cross_entropy(logits, s.label).value[0, 0])
        correct += int(np.argmax(logits.value[0]) == s.label)
    return float(np.mean(losses)), correct / len(dataset)


def evaluate(model: JkModel, dataset: Sequence, rng=None) -> float:
    """Fraction of samples whose argmax logit (lowest class on ties) is the label."""
    if len(dataset) == 0:
        raise EmptySplit("cannot evaluate on an empty dataset")
    rng = np.random.default_rng(0 if rng is None else rng)
    correct = sum(int(np.argmax(predict(model, s, rng)) == s.label) for s in dataset)
    return correct / len(dataset)


def train(
    model: JkModel,
    train_set: Sequence,
    val_set: Sequence,
    config: TrainConfig,
    on_epoch: Callable[[int, History], None] | None = None,
) -> tuple[JkModel, History]:
    """Mini-batch Adam with early stopping on validation loss.

    A batch is a set of independent per-sample passes whose losses are
    averaged. Training stops once validation loss has not improved for
    ``config.patience`` consecutive epochs; the returned model holds the
    parameters of the best validation epoch. ``model`` itself is trained in
    place and ends with the last-epoch parameters.
    """
    if not train_set or not val_set:
        raise EmptySplit("train and validation sets must be non-empty")
    rng = np.random.default_rng([config.seed, 0])
    pool_rng = np.random.default_rng([config.seed, 1])
    params = model.named_parameters()
    state = AdamState()
    history = History()
    best_loss, best_state, stale = np.inf, None, 0

    for epoch in range(config.epochs):
        order = rng.permutation(len(train_set))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            total = {name: np.zeros_like(p) for name, p in params.items()}
            for i in batch:
                loss, grads = _sample_loss_and_grads(model, train_set[i], pool_rng)
                epoch_loss += loss
                for name, g in grads.items():
                    total[name] += g
            for g in total.values():
                g /= len(batch)
            adam_step(params, total, state, state.t + 1, config.lr, config.beta1, config.beta2, config.eps)

        val_loss, val_acc = _mean_loss_and_acc(model, val_set, np.random.default_rng([config.seed, 2]))
        history.train_loss.append(epoch_loss / len(train_set))
        history.val_loss.append(val_loss)
        history.val_acc.append(val_acc)
        if val_loss < best_loss:
            best_loss, stale = val_loss, 0
            best_state = {k: v.copy() for k, v in params.items()}
            history.best_epoch = epoch
        else:
            stale += 1
        log.debug("epoch %d train %.4f val %.4f acc %.3f", epoch + 1, history.train_loss[-1], val_loss, val_acc)
        if on_epoch is not None:
            on_epoch(epoch, history)
        if stale >= config.patience:
            break

    best = model.copy()
    best.load_state(best_state)
    return best, history
