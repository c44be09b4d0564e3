"""Multilayer perceptron for binary classification, trained by backpropagation.

ReLU hidden layers, one logistic output unit, mean binary cross-entropy and
plain mini-batch gradient descent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..rng import make_rng
from .errors import IdsError


@dataclass
class MlpModel:
    sizes: tuple
    weights: list
    biases: list
    activation: str = "relu"
    params: dict = field(default_factory=dict)

    @property
    def n_features(self):
        return self.sizes[0]

    def logits(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise IdsError("WIDTH_MISMATCH",
                           f"expected {self.n_features} features, got shape {X.shape}")
        h = X
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(h @ W + b, 0.0)
        return (h @ self.weights[-1] + self.biases[-1])[:, 0]

    def predict_proba(self, X):
        return _sigmoid(self.logits(X))

    def predict(self, X):
        return (self.predict_proba(X) >= 0.5).astype(np.int64)

    def to_json(self):
        return {
            "kind": "mlp",
            "sizes": list(self.sizes),
            "activation": self.activation,
            "weights": [W.ravel().tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "params": self.params,
        }

    @classmethod
    def from_json(cls, d):
        sizes = tuple(d["sizes"])
        weights = [np.array(w, dtype=np.float64).reshape(sizes[i], sizes[i + 1])
                   for i, w in enumerate(d["weights"])]
        biases = [np.array(b, dtype=np.float64) for b in d["biases"]]
        return cls(sizes, weights, biases, d.get("activation", "relu"), d.get("params", {}))


def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def init_mlp(n_features, hidden=(16, 8), seed=0):
    """Weights and biases uniform in +-1/sqrt(fan_in)."""
    if len(hidden) < 1:
        raise IdsError("BAD_ARCHITECTURE", "an MLP needs at least one hidden layer")
    sizes = (n_features, *hidden, 1)
    rng = make_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-lim, lim, size=fan_out))
    return MlpModel(sizes, weights, biases)


def loss_and_grads(model, X, y):
    """Mean cross-entropy and its gradients w.r.t. every weight and bias."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    acts = [X]
    pre = []
    h = X
    for W, b in zip(model.weights[:-1], model.biases[:-1]):
        z = h @ W + b
        pre.append(z)
        h = np.maximum(z, 0.0)
        acts.append(h)
    z_out = (h @ model.weights[-1] + model.biases[-1])[:, 0]
    n = len(y)
    # log(1 + e^z) - y z is the stable form of the logistic cross-entropy
    loss = float(np.mean(np.logaddexp(0.0, z_out) - y * z_out))

    delta = ((_sigmoid(z_out) - y) / n)[:, None]
    gW = [None] * len(model.weights)
    gb = [None] * len(model.biases)
    for layer in range(len(model.weights) - 1, -1, -1):
        gW[layer] = acts[layer].T @ delta
        gb[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ model.weights[layer].T) * (pre[layer - 1] > 0)
    return loss, gW, gb


def train_mlp(X, y, hidden=(16, 8), learning_rate=0.05, epochs=200, batch_size=32, seed=0):
    """Fit by mini-batch gradient descent; deterministic for a given seed.

    Expects standardised inputs.  Raises NON_FINITE_LOSS if training diverges.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise IdsError("EMPTY_DATASET", "cannot train on an empty dataset")
    if not np.isin(y, (0, 1)).all():
        raise IdsError("BAD_LABELS", "labels must be 0 or 1")
    model = init_mlp(X.shape[1], hidden, seed)
    model.params = {"learning_rate": learning_rate, "epochs": epochs,
                    "batch_size": batch_size, "seed": seed, "hidden": list(hidden)}
    rng = make_rng(seed + 1)
    n = len(y)
    history = []
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            loss, gW, gb = loss_and_grads(model, X[idx], y[idx])
            if not np.isfinite(loss):
                raise IdsError("NON_FINITE_LOSS", "loss diverged; lower the learning rate")
            total += loss * len(idx)
            for W, g in zip(model.weights, gW):
                W -= learning_rate * g
            for b, g in zip(model.biases, gb):
                b -= learning_rate * g
            if not all(np.isfinite(W).all() for W in model.weights):
                raise IdsError("NON_FINITE_LOSS", "weights diverged; lower the learning rate")
        history.append(total / n)
    model.params["loss_history"] = history
    return model


def gradient_check(model, X, y, h=1e-5):
    """Largest elementwise relative error between analytic and central-difference gradients."""
    _, gW, gb = loss_and_grads(model, X, y)
    worst = 0.0
    for params, grads in ((model.weights, gW), (model.biases, gb)):
        for P, G in zip(params, grads):
            flat, gflat = P.reshape(-1), G.reshape(-1)
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + h
                up = loss_and_grads(model, X, y)[0]
                flat[i] = old - h
                down = loss_and_grads(model, X, y)[0]
                flat[i] = old
                num = (up - down) / (2 * h)
                denom = max(abs(num) + abs(gflat[i]), 1e-8)
                worst = max(worst, abs(num - gflat[i]) / denom)
    return worst
