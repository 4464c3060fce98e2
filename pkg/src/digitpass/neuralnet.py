"""Single-hidden-layer MLP trained by per-sample backpropagation.

Logistic hidden units, softmax output, cross-entropy loss, SGD with
classical momentum. Everything is seeded and deterministic: identical
(model, data, config) reproduces bit-identical weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError, EmptyAllowedSetError, EmptyDatasetError

NUM_CLASSES = 10


@dataclass(frozen=True)
class Topology:
    """Layer widths of a 3-layer net."""

    inputs: int
    hidden: int
    outputs: int = NUM_CLASSES

    def __post_init__(self):
        if min(self.inputs, self.hidden, self.outputs) < 1:
            raise ValueError(f"layer widths must be >= 1, got {self}")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    momentum: float = 0.9
    epochs: int = 100
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass(frozen=True)
class LabeledFeatures:
    """One feature vector with its digit label."""

    features: np.ndarray
    label: int

    def __post_init__(self):
        if not 0 <= self.label < NUM_CLASSES:
            raise ValueError(f"label must be 0..9, got {self.label}")


@dataclass
class MlpModel:
    topology: Topology
    hidden_weights: np.ndarray   # (hidden, inputs)
    hidden_biases: np.ndarray    # (hidden,)
    output_weights: np.ndarray   # (outputs, hidden)
    output_biases: np.ndarray    # (outputs,)

    def __post_init__(self):
        t = self.topology
        shapes = (
            (self.hidden_weights, (t.hidden, t.inputs)),
            (self.hidden_biases, (t.hidden,)),
            (self.output_weights, (t.outputs, t.hidden)),
            (self.output_biases, (t.outputs,)),
        )
        for arr, want in shapes:
            if arr.shape != want:
                raise ValueError(f"weight shape {arr.shape} does not match topology {t}")
            if not np.all(np.isfinite(arr)):
                raise ValueError("model weights must be finite")


def init_model(topology: Topology, seed: int) -> MlpModel:
    """Uniform Glorot weights in +-sqrt(6/(fan_in+fan_out)); zero biases."""
    rng = np.random.default_rng(seed)
    t = topology

    def layer(fan_out, fan_in):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_out, fan_in))

    return MlpModel(
        topology=t,
        hidden_weights=layer(t.hidden, t.inputs),
        hidden_biases=np.zeros(t.hidden),
        output_weights=layer(t.outputs, t.hidden),
        output_biases=np.zeros(t.outputs),
    )


def _logistic(a: np.ndarray) -> np.ndarray:
    # Split by sign so exp never overflows.
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _check_width(model: MlpModel, width: int):
    if width != model.topology.inputs:
        raise DimensionMismatchError(
            f"feature width {width} does not match model input width {model.topology.inputs}"
        )


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Class scores for one feature vector; positive, summing to 1."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatchError(f"expected a 1-d feature vector, got shape {x.shape}")
    _check_width(model, x.shape[0])
    hidden = _logistic(model.hidden_weights @ x + model.hidden_biases)
    return _softmax(model.output_weights @ hidden + model.output_biases)


def _forward_batch(model: MlpModel, x: np.ndarray) -> np.ndarray:
    hidden = _logistic(x @ model.hidden_weights.T + model.hidden_biases)
    return _softmax(hidden @ model.output_weights.T + model.output_biases)


def as_arrays(data) -> tuple[np.ndarray, np.ndarray]:
    """Accept (features, labels) arrays or a sequence of LabeledFeatures."""
    if isinstance(data, tuple):
        x, y = data
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
    else:
        x = np.asarray([s.features for s in data], dtype=np.float64)
        y = np.asarray([s.label for s in data], dtype=np.int64)
    if x.size and x.ndim != 2:
        raise DimensionMismatchError(f"expected 2-d feature array, got shape {x.shape}")
    return x, y


def train(model: MlpModel, data, cfg: TrainConfig) -> tuple[MlpModel, list[float]]:
    """Per-sample SGD with momentum on cross-entropy; returns a new model
    and the mean loss per epoch. The input model is left untouched."""
    x, y = as_arrays(data)
    n = x.shape[0]
    if n == 0:
        raise EmptyDatasetError("cannot train on an empty dataset")
    _check_width(model, x.shape[1])

    w1 = model.hidden_weights.copy()
    b1 = model.hidden_biases.copy()
    w2 = model.output_weights.copy()
    b2 = model.output_biases.copy()
    vw1 = np.zeros_like(w1)
    vb1 = np.zeros_like(b1)
    vw2 = np.zeros_like(w2)
    vb2 = np.zeros_like(b2)

    rng = np.random.default_rng(cfg.seed)
    lr, mu = cfg.learning_rate, cfg.momentum
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        total = 0.0
        for k in order:
            xi = x[k]
            hidden = _logistic(w1 @ xi + b1)
            logits = w2 @ hidden + b2
            shifted = logits - logits.max()
            logp = shifted - np.log(np.exp(shifted).sum())
            total -= logp[y[k]]

            # dL/dlogits for softmax + cross-entropy.
            dz = np.exp(logp)
            dz[y[k]] -= 1.0
            dh = w2.T @ dz
            da = dh * hidden * (1.0 - hidden)

            vw2 = mu * vw2 - lr * np.outer(dz, hidden)
            vb2 = mu * vb2 - lr * dz
            vw1 = mu * vw1 - lr * np.outer(da, xi)
            vb1 = mu * vb1 - lr * da
            w2 += vw2
            b2 += vb2
            w1 += vw1
            b1 += vb1
        history.append(float(total) / n)
    return MlpModel(model.topology, w1, b1, w2, b2), history


def predict(model: MlpModel, x: np.ndarray, allowed: Sequence[int] | None = None) -> int:
    """Argmax of forward scores, restricted to `allowed` labels when given.
    Ties break toward the smallest label."""
    scores = forward(model, x)
    return _restricted_argmax(scores, model.topology.outputs, allowed)


def _restricted_argmax(scores: np.ndarray, width: int, allowed) -> int:
    if allowed is None:
        return int(np.argmax(scores))
    allowed = sorted(set(int(a) for a in allowed))
    if not allowed:
        raise EmptyAllowedSetError("allowed label set must be non-empty")
    if allowed[0] < 0 or allowed[-1] >= width:
        raise EmptyAllowedSetError(f"allowed labels {allowed} outside 0..{width - 1}")
    masked = np.full_like(scores, -np.inf)
    masked[allowed] = scores[allowed]
    return int(np.argmax(masked))


def predict_batch(model: MlpModel, x: np.ndarray, allowed: Sequence[int] | None = None) -> np.ndarray:
    """Predictions for a (n, inputs) feature array, optionally restricted."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatchError(f"expected 2-d feature array, got shape {x.shape}")
    _check_width(model, x.shape[1])
    scores = _forward_batch(model, x)
    if allowed is not None:
        labels = sorted(set(int(a) for a in allowed))
        if not labels:
            raise EmptyAllowedSetError("allowed label set must be non-empty")
        masked = np.full_like(scores, -np.inf)
        masked[:, labels] = scores[:, labels]
        scores = masked
    return np.argmax(scores, axis=1)


def confusion(model: MlpModel, data) -> np.ndarray:
    """10x10 count matrix indexed [true][predicted], unrestricted predict."""
    x, y = as_arrays(data)
    if x.shape[0] == 0:
        raise EmptyDatasetError("cannot evaluate an empty dataset")
    _check_width(model, x.shape[1])
    pred = predict_batch(model, x)
    cm = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    np.add.at(cm, (y, pred), 1)
    return cm


def accuracy(model: MlpModel, data) -> float:
    """Fraction of samples whose unrestricted prediction is correct."""
    cm = confusion(model, data)
    return float(np.trace(cm)) / float(cm.sum())
