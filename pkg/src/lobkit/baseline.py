"""Multinomial logistic regression over flattened windows.

Stands in for a deep model so the pipeline runs end to end; external models
plug in through the prediction CSV instead.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyClass, NonFiniteLoss, ShapeMismatch

BATCH_SIZE = 32
_MAGIC = b"LOBKITLM"


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _class_index(labels):
    return np.asarray(labels, dtype=np.int64) + 1


@dataclass
class LinearModel:
    weights: np.ndarray                 # (3, n_features)
    bias: np.ndarray                    # (3,)
    meta: dict = field(default_factory=dict)

    @classmethod
    def zeros(cls, n_features, **meta):
        return cls(np.zeros((3, n_features)), np.zeros(3), dict(meta))

    @property
    def n_features(self):
        return self.weights.shape[1]

    def logits(self, x):
        return x @ self.weights.T + self.bias

    def predict_proba(self, x) -> np.ndarray:
        """Row-wise probabilities for an (n, n_features) matrix or one flat vector."""
        x = np.asarray(x, dtype=np.float64)
        x = x.reshape(1, -1) if x.ndim == 1 else x.reshape(len(x), -1)
        if x.shape[1] != self.n_features:
            raise ShapeMismatch(f"expected {self.n_features} features, got {x.shape[1]}")
        return softmax(self.logits(x))

    def save(self, path):
        header = json.dumps({
            "shape": list(self.weights.shape),
            "dtype": "<f8",
            "layout": "weights row-major then bias",
            **self.meta,
        }, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            fh.write(np.ascontiguousarray(self.weights, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.bias, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            if fh.read(len(_MAGIC)) != _MAGIC:
                raise ValueError(f"{path} is not a lobkit model file")
            (n,) = struct.unpack("<I", fh.read(4))
            meta = json.loads(fh.read(n))
            k, d = meta.pop("shape")
            meta.pop("dtype")
            meta.pop("layout")
            flat = np.frombuffer(fh.read(), dtype="<f8")
        if flat.size != k * d + k:
            raise ValueError(f"{path}: truncated parameter block")
        return cls(flat[: k * d].reshape(k, d).copy(), flat[k * d:].copy(), meta)


def loss_and_grad(weights, bias, x, y, l2=0.0):
    """Mean cross-entropy (plus optional L2 on weights) and its gradients."""
    n = len(x)
    p = softmax(x @ weights.T + bias)
    loss = -np.mean(np.log(p[np.arange(n), y] + 1e-300)) + 0.5 * l2 * np.sum(weights ** 2)
    d = p
    d[np.arange(n), y] -= 1.0
    d /= n
    return loss, d.T @ x + l2 * weights, d.sum(axis=0)


def train(x, labels, epochs=10, lr=0.1, seed=0, l2=0.0, batch_size=BATCH_SIZE):
    """Mini-batch gradient descent from zero parameters.

    ``x`` is (n, ...) and is flattened per sample; ``labels`` are -1/0/1.
    Per-epoch mean losses are kept in ``model.meta["epoch_losses"]``.
    """
    x = np.asarray(x, dtype=np.float64).reshape(len(x), -1)
    y = _class_index(labels)
    counts = np.bincount(y, minlength=3)
    if np.any(counts == 0):
        raise EmptyClass(f"training set class counts {counts.tolist()}")
    rng = np.random.default_rng(seed)
    w = np.zeros((3, x.shape[1]))
    b = np.zeros(3)
    history = []
    for _ in range(epochs):
        order = rng.permutation(len(x))
        total = 0.0
        for start in range(0, len(x), batch_size):
            batch = order[start:start + batch_size]
            loss, gw, gb = loss_and_grad(w, b, x[batch], y[batch], l2)
            if not np.isfinite(loss):
                raise NonFiniteLoss("training loss became non-finite")
            w -= lr * gw
            b -= lr * gb
            total += loss * len(batch)
        history.append(total / len(x))
    model = LinearModel(w, b, {
        "seed": seed, "epochs": epochs, "learning_rate": lr, "l2": l2,
        "batch_size": batch_size, "final_loss": history[-1] if history else None,
        "epoch_losses": history,
    })
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
        raise NonFiniteLoss("parameters became non-finite")
    return model


def predict(model: LinearModel, window) -> np.ndarray:
    """Class probabilities (p_down, p_stable, p_up) for one window or a stack."""
    window = np.asarray(window, dtype=np.float64)
    if window.size == model.n_features:
        return model.predict_proba(window.reshape(1, -1))[0]
    if window.ndim < 2 or window[0].size != model.n_features:
        raise ShapeMismatch(f"window of shape {window.shape} does not match {model.n_features} features")
    return model.predict_proba(window.reshape(len(window), -1))
