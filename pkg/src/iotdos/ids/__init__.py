"""Intrusion detection classifiers: a CART tree and an MLP, plus metrics."""

import json

from .errors import IdsError
from .metrics import Metrics, evaluate
from .mlp import MlpModel, gradient_check, init_mlp, loss_and_grads, train_mlp
from .tree import DecisionTreeModel, train_tree

__all__ = [
    "DecisionTreeModel", "IdsError", "Metrics", "MlpModel", "evaluate", "gradient_check",
    "init_mlp", "load_model", "loss_and_grads", "predict", "save_model", "train_mlp", "train_tree",
]


def predict(model, rows):
    """Class labels: tree leaf majority, or MLP output >= 0.5."""
    return model.predict(rows)


def model_to_json(model, scaler=None):
    d = model.to_json()
    if scaler is not None:
        d["scaler"] = scaler.to_json()
    return d


def save_model(model, path, scaler=None, columns=None):
    d = model_to_json(model, scaler)
    if columns is not None:
        d["columns"] = list(columns)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(d, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path):
    """Returns ``(model, scaler or None, columns or None)``."""
    from ..dataset import ColumnStats

    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    kind = d.get("kind")
    if kind == "tree":
        model = DecisionTreeModel.from_json(d)
    elif kind == "mlp":
        model = MlpModel.from_json(d)
    else:
        raise IdsError("BAD_MODEL", f"unknown model kind {kind!r}")
    scaler = ColumnStats.from_json(d["scaler"]) if "scaler" in d else None
    return model, scaler, d.get("columns")
