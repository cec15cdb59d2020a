"""Per-example backpropagation training and threshold evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np

from mhealth.engine.features import LabeledSet
from mhealth.engine.mlp import DimensionMismatch, MlpModel, classify
from mhealth.vitals import PatientState


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 0.1
    epochs: int = 2000
    seed: int = 0
    init_scale: float = 0.5
    target_loss: float = 0.01

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not (isinstance(self.epochs, int) and self.epochs > 0):
            raise ValueError("epochs must be a positive integer")
        if not self.init_scale > 0:
            raise ValueError("init_scale must be > 0")
        if not self.target_loss >= 0:
            raise ValueError("target_loss must be >= 0")


@dataclass
class TrainResult:
    model: MlpModel
    losses: list[float] = field(default_factory=list)
    epochs_to_target: Optional[int] = None

    @property
    def epochs_run(self) -> int:
        return len(self.losses)

    @property
    def converged(self) -> bool:
        return self.epochs_to_target is not None


@numba.njit(cache=True)
def _epoch(W1, b1, W2, b2, X, y, order, lr):
    """One pass of per-example updates, in place. Returns (mean loss, b2).

    Mirrors mlp.backprop_step: the loss is taken before each update and
    all four parameter blocks move using the pre-update weights.
    """
    n_hidden, n_in = W1.shape
    h = np.empty(n_hidden)
    d_hidden = np.empty(n_hidden)
    total = 0.0
    for k in range(order.shape[0]):
        i = order[k]
        for j in range(n_hidden):
            z = 0.0
            for c in range(n_in):
                z += W1[j, c] * X[i, c]
            h[j] = 1.0 / (1.0 + math.exp(-(z + b1[j])))
        z = 0.0
        for j in range(n_hidden):
            z += W2[j] * h[j]
        out = 1.0 / (1.0 + math.exp(-(z + b2)))
        err = out - y[i]
        total += 0.5 * err * err
        d_out = err * out * (1.0 - out)
        for j in range(n_hidden):
            d_hidden[j] = d_out * W2[j] * h[j] * (1.0 - h[j])
        for j in range(n_hidden):
            W2[j] -= lr * d_out * h[j]
            b1[j] -= lr * d_hidden[j]
            for c in range(n_in):
                W1[j, c] -= lr * d_hidden[j] * X[i, c]
        b2 -= lr * d_out
    return total / order.shape[0], b2


def train_arrays(m: MlpModel, X: np.ndarray, y: np.ndarray, hp: Hyperparams) -> TrainResult:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != m.n_inputs:
        raise DimensionMismatch(f"model takes {m.n_inputs} inputs, data has shape {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("training set is empty")
    W1 = m.W1.copy()
    b1 = m.b1.copy()
    W2 = m.W2[0].copy()
    b2 = m.b2
    rng = np.random.default_rng(hp.seed)
    losses: list[float] = []
    reached = None
    for epoch in range(1, hp.epochs + 1):
        order = rng.permutation(X.shape[0])
        mean_loss, b2 = _epoch(W1, b1, W2, b2, X, y, order, hp.learning_rate)
        losses.append(float(mean_loss))
        if mean_loss <= hp.target_loss:
            reached = epoch
            break
    model = MlpModel(m.n_inputs, m.n_hidden, W1, b1, W2.reshape(1, -1), b2)
    return TrainResult(model, losses, reached)


def train(m: MlpModel, data: LabeledSet, hp: Hyperparams = Hyperparams()) -> TrainResult:
    """Stochastic backprop over ``data`` with a seeded shuffle each epoch.

    Stops early once an epoch's mean loss is at or below ``hp.target_loss``.
    """
    return train_arrays(m, data.features(m.n_inputs), data.labels, hp)


@dataclass(frozen=True)
class Evaluation:
    accuracy: float
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


def evaluate_arrays(m: MlpModel, X: np.ndarray, y: np.ndarray) -> Evaluation:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != m.n_inputs:
        raise DimensionMismatch(f"model takes {m.n_inputs} inputs, data has shape {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("test set is empty")
    tp = tn = fp = fn = 0
    # Decisions go through classify() so they agree with it bit for bit.
    for row, label in zip(X, y):
        anomalous = classify(m, row) is PatientState.ANOMALY
        if anomalous and label == 1:
            tp += 1
        elif anomalous:
            fp += 1
        elif label == 1:
            fn += 1
        else:
            tn += 1
    return Evaluation((tp + tn) / X.shape[0], tp, tn, fp, fn)


def evaluate(m: MlpModel, test: LabeledSet) -> Evaluation:
    return evaluate_arrays(m, test.features(m.n_inputs), test.labels)
