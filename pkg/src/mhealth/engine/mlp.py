"""Single-hidden-layer sigmoid network, written out by hand.

Shapes: W1 is (hidden, inputs), b1 is (hidden,), W2 is (1, hidden), b2 a
float. Loss is half squared error on the sigmoid output.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from mhealth.vitals import PatientState

THRESHOLD = 0.5


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MlpModel:
    n_inputs: int
    n_hidden: int
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: float

    def __post_init__(self):
        if self.n_inputs not in (3, 4):
            raise ValueError(f"n_inputs must be 3 or 4, got {self.n_inputs}")
        if self.n_hidden < 1:
            raise ValueError("n_hidden must be >= 1")
        W1 = np.array(self.W1, dtype=np.float64).reshape(self.n_hidden, self.n_inputs)
        b1 = np.array(self.b1, dtype=np.float64).reshape(self.n_hidden)
        W2 = np.array(self.W2, dtype=np.float64).reshape(1, self.n_hidden)
        for a in (W1, b1, W2):
            a.setflags(write=False)
        object.__setattr__(self, "W1", W1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "W2", W2)
        object.__setattr__(self, "b2", float(self.b2))
        if not (np.isfinite(W1).all() and np.isfinite(b1).all() and np.isfinite(W2).all()
                and math.isfinite(self.b2)):
            raise ValueError("model weights must be finite")

    def __eq__(self, other):
        if not isinstance(other, MlpModel):
            return NotImplemented
        return (self.n_inputs == other.n_inputs and self.n_hidden == other.n_hidden
                and np.array_equal(self.W1, other.W1) and np.array_equal(self.b1, other.b1)
                and np.array_equal(self.W2, other.W2) and self.b2 == other.b2)

    def to_dict(self) -> dict:
        return {
            "n_inputs": self.n_inputs,
            "n_hidden": self.n_hidden,
            "W1": self.W1.ravel().tolist(),
            "b1": self.b1.tolist(),
            "W2": self.W2.ravel().tolist(),
            "b2": self.b2,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        n, h = int(d["n_inputs"]), int(d["n_hidden"])
        if len(d["W1"]) != n * h or len(d["b1"]) != h or len(d["W2"]) != h:
            raise ValueError("model file dimensions are inconsistent")
        return cls(n, h, np.array(d["W1"], dtype=np.float64), np.array(d["b1"], dtype=np.float64),
                   np.array(d["W2"], dtype=np.float64), float(d["b2"]))


def save_model(model: MlpModel, path: str | Path) -> None:
    # json writes floats with repr(), which round-trips binary64 exactly.
    Path(path).write_text(json.dumps(model.to_dict(), indent=1) + "\n")


def load_model(path: str | Path) -> MlpModel:
    return MlpModel.from_dict(json.loads(Path(path).read_text()))


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def init_model(n_inputs: int, n_hidden: int = 5, seed: int = 0, init_scale: float = 0.5) -> MlpModel:
    """Uniform weights in [-init_scale, init_scale], zero biases."""
    if init_scale < 0:
        raise ValueError("init_scale must be >= 0")
    rng = np.random.default_rng(seed)
    W1 = rng.uniform(-init_scale, init_scale, size=(n_hidden, n_inputs))
    W2 = rng.uniform(-init_scale, init_scale, size=(1, n_hidden))
    return MlpModel(n_inputs, n_hidden, W1, np.zeros(n_hidden), W2, 0.0)


def _check(m: MlpModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (m.n_inputs,):
        raise DimensionMismatch(f"model takes {m.n_inputs} inputs, got shape {x.shape}")
    return x


def forward(m: MlpModel, x: Sequence[float]) -> float:
    x = _check(m, x)
    h = sigmoid(m.W1 @ x + m.b1)
    return float(sigmoid(m.W2[0] @ h + m.b2))


def forward_batch(m: MlpModel, X: np.ndarray) -> np.ndarray:
    """Row-wise forward pass. May differ from ``forward`` in the last ulp."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != m.n_inputs:
        raise DimensionMismatch(f"model takes {m.n_inputs} inputs, got shape {X.shape}")
    H = sigmoid(X @ m.W1.T + m.b1)
    return sigmoid(H @ m.W2[0] + m.b2)


@dataclass(frozen=True)
class Gradients:
    loss: float
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: float


def loss(m: MlpModel, x: Sequence[float], label: float) -> float:
    y = forward(m, x)
    return 0.5 * (y - label) ** 2


def gradients(m: MlpModel, x: Sequence[float], label: float) -> Gradients:
    x = _check(m, x)
    h = sigmoid(m.W1 @ x + m.b1)
    y = float(sigmoid(m.W2[0] @ h + m.b2))
    err = y - label
    d_out = err * y * (1.0 - y)
    d_hidden = d_out * m.W2[0] * h * (1.0 - h)
    return Gradients(
        loss=0.5 * err * err,
        W1=np.outer(d_hidden, x),
        b1=d_hidden,
        W2=(d_out * h).reshape(1, -1),
        b2=d_out,
    )


def backprop_step(m: MlpModel, x: Sequence[float], label: float,
                  learning_rate: float) -> tuple[MlpModel, float]:
    """One gradient-descent update; the loss returned is the pre-update loss."""
    g = gradients(m, x, label)
    updated = MlpModel(
        m.n_inputs,
        m.n_hidden,
        m.W1 - learning_rate * g.W1,
        m.b1 - learning_rate * g.b1,
        m.W2 - learning_rate * g.W2,
        m.b2 - learning_rate * g.b2,
    )
    return updated, g.loss


def classify(m: MlpModel, x: Sequence[float]) -> PatientState:
    # Strictly greater: an output of exactly 0.5 is not an anomaly.
    return PatientState.ANOMALY if forward(m, x) > THRESHOLD else PatientState.NORMAL
