"""Binary CART decision tree with Gini impurity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IdsError


@dataclass
class Node:
    counts: tuple  # (normal, attack) training samples reaching this node
    feature: int = -1
    threshold: float = 0.0
    left: "Node | None" = None
    right: "Node | None" = None

    @property
    def is_leaf(self):
        return self.left is None

    @property
    def prediction(self):
        # ties go to the normal class
        return int(self.counts[1] > self.counts[0])

    def to_json(self):
        d = {"counts": list(self.counts)}
        if not self.is_leaf:
            d.update(feature=self.feature, threshold=self.threshold,
                     left=self.left.to_json(), right=self.right.to_json())
        return d

    @classmethod
    def from_json(cls, d):
        if "feature" not in d:
            return cls(tuple(d["counts"]))
        return cls(tuple(d["counts"]), d["feature"], d["threshold"],
                   cls.from_json(d["left"]), cls.from_json(d["right"]))


@dataclass
class DecisionTreeModel:
    root: Node
    n_features: int
    max_depth: int = 12
    min_samples: int = 2

    def predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise IdsError("WIDTH_MISMATCH",
                           f"expected {self.n_features} features, got shape {X.shape}")
        out = np.empty(len(X), dtype=np.int64)
        self._route(self.root, X, np.arange(len(X)), out)
        return out

    def _route(self, node, X, idx, out):
        while not node.is_leaf:
            go_left = X[idx, node.feature] <= node.threshold
            self._route(node.left, X, idx[go_left], out)
            node, idx = node.right, idx[~go_left]
        out[idx] = node.prediction

    def depth(self):
        def d(n):
            return 0 if n.is_leaf else 1 + max(d(n.left), d(n.right))
        return d(self.root)

    def n_leaves(self):
        def c(n):
            return 1 if n.is_leaf else c(n.left) + c(n.right)
        return c(self.root)

    def to_json(self):
        return {"kind": "tree", "n_features": self.n_features, "max_depth": self.max_depth,
                "min_samples": self.min_samples, "root": self.root.to_json()}

    @classmethod
    def from_json(cls, d):
        return cls(Node.from_json(d["root"]), d["n_features"], d["max_depth"], d["min_samples"])


def _best_split(X, y):
    """Lowest weighted Gini split as (feature, threshold), or None if no split exists.

    Candidate thresholds are midpoints between consecutive distinct values;
    ties keep the lowest feature index, then the lowest threshold.
    """
    n = len(y)
    best = None
    best_score = np.inf
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        cut = np.nonzero(xs[1:] != xs[:-1])[0]
        if len(cut) == 0:
            continue
        pos = np.cumsum(ys)[cut]
        n_left = cut + 1.0
        n_right = n - n_left
        pos_right = ys.sum() - pos
        # n * weighted Gini = n_l*(1 - sum p^2) + n_r*(1 - sum p^2)
        left = n_left - (pos**2 + (n_left - pos) ** 2) / n_left
        right = n_right - (pos_right**2 + (n_right - pos_right) ** 2) / n_right
        score = left + right
        j = int(np.argmin(score))
        if score[j] < best_score - 1e-12 * max(1.0, n):
            best_score = score[j]
            best = (f, (xs[cut[j]] + xs[cut[j] + 1]) / 2.0)
    return best


def train_tree(X, y, max_depth=12, min_samples=2):
    """Greedy CART induction; stops at purity, ``max_depth`` or ``min_samples``."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise IdsError("EMPTY_DATASET", "cannot train on an empty dataset")
    if not np.isin(y, (0, 1)).all():
        raise IdsError("BAD_LABELS", "labels must be 0 or 1")

    def grow(idx, depth):
        ys = y[idx]
        pos = int(ys.sum())
        node = Node((len(ys) - pos, pos))
        if pos == 0 or pos == len(ys) or depth >= max_depth or len(ys) < min_samples:
            return node
        split = _best_split(X[idx], ys)
        if split is None:
            return node
        node.feature, node.threshold = split
        mask = X[idx, node.feature] <= node.threshold
        node.left = grow(idx[mask], depth + 1)
        node.right = grow(idx[~mask], depth + 1)
        return node

    return DecisionTreeModel(grow(np.arange(len(y)), 0), X.shape[1], max_depth, min_samples)
