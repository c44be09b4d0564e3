"""End-to-end experiment: generate train/test sets, fit classifiers, score them."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .config import config_hash, load_config_file
from .dataset import DatasetError, generate_dataset, save_dataset, standardize
from .ids import evaluate, save_model, train_mlp, train_tree
from .rng import derive_seed

MANIFEST_SCHEMA = "iotdos.manifest/1"


def bundled_config(name):
    """Path of a fixture shipped with the package (e.g. ``table1.cfg``)."""
    return str(resources.files("iotdos").joinpath("fixtures", name))


def resolve_config(path):
    if os.path.exists(path):
        return path
    candidate = bundled_config(os.path.basename(path))
    if os.path.exists(candidate):
        return candidate
    raise FileNotFoundError(path)


@dataclass
class PipelineSpec:
    config_path: str = "table1_attack.cfg"
    train_size: int = 20_000
    train_attack: float = 0.10
    test_size: int = 100_000
    test_attack: float = 0.20
    modes: tuple = ("optimal", "stochastic")
    classifiers: tuple = ("tree",)
    seed: int = 0
    out_dir: str = "run"
    withhold: tuple | None = None  # None: hold out the upper half of attack labels
    fmt: str = "csv"
    max_depth: int = 12
    min_samples: int = 2
    mlp_hidden: tuple = (16, 8)
    mlp_epochs: int = 30
    mlp_learning_rate: float = 0.05
    mlp_batch_size: int = 32

    def seeds(self):
        s = {name: derive_seed(self.seed, name) for name in ("train-data", "test-data", "mlp")}
        if s["train-data"] == s["test-data"]:
            raise ValueError("train and test seeds coincide")
        return s


def split_attacks(config, withhold):
    labels = sorted(config.attack_by_label)
    if withhold is None:
        held = labels[len(labels) // 2:]
    else:
        held = sorted(withhold)
    unknown = set(held) - set(labels)
    if unknown:
        raise DatasetError("UNKNOWN_ATTACK", f"cannot withhold unknown actions {sorted(unknown)}")
    if not held:
        return labels, labels
    train = [lab for lab in labels if lab not in held]
    if not train:
        raise DatasetError("NO_TRAIN_ATTACKS", "every attack action is withheld")
    return train, held


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def run_pipeline(spec):
    """Run every stage and write ``manifest.json`` into ``spec.out_dir``."""
    config = load_config_file(resolve_config(spec.config_path))
    seeds = spec.seeds()
    os.makedirs(spec.out_dir, exist_ok=True)
    train_labels, test_labels = split_attacks(config, spec.withhold)

    train = generate_dataset(config, spec.train_size, spec.train_attack, seeds["train-data"],
                             modes=spec.modes, attack_labels=train_labels)
    test = generate_dataset(config, spec.test_size, spec.test_attack, seeds["test-data"],
                            modes=spec.modes, attack_labels=test_labels)
    files = []
    ext = "jsonl" if spec.fmt == "jsonl" else "csv"
    for name, ds in (("train", train), ("test", test)):
        path = os.path.join(spec.out_dir, f"{name}.{ext}")
        save_dataset(ds, path, spec.fmt)
        files.append(path)

    metrics = {}
    for clf in spec.classifiers:
        path = os.path.join(spec.out_dir, f"model_{clf}.json")
        if clf == "tree":
            model = train_tree(train.X, train.y, spec.max_depth, spec.min_samples)
            save_model(model, path, columns=train.columns)
            pred = model.predict(test.X)
        elif clf == "mlp":
            (tr_std, te_std), scaler = standardize(train, test)
            model = train_mlp(tr_std.X, tr_std.y, spec.mlp_hidden, spec.mlp_learning_rate,
                              spec.mlp_epochs, spec.mlp_batch_size, seeds["mlp"])
            save_model(model, path, scaler=scaler, columns=train.columns)
            pred = model.predict(te_std.X)
        else:
            raise ValueError(f"unknown classifier '{clf}'")
        files.append(path)
        metrics[clf] = evaluate(pred, test.y).as_dict()

    metrics_path = os.path.join(spec.out_dir, "metrics.json")
    with open(metrics_path, "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=1, sort_keys=True)
        fh.write("\n")
    files.append(metrics_path)

    manifest = {
        "schema": MANIFEST_SCHEMA,
        "config": os.path.basename(spec.config_path),
        "config_hash": config_hash(config),
        "root_seed": spec.seed,
        "stage_seeds": seeds,
        "train": {"size": len(train), "attack": train.n_attack, "normal": len(train) - train.n_attack,
                  "attack_fraction": spec.train_attack, "attack_actions": train_labels},
        "test": {"size": len(test), "attack": test.n_attack, "normal": len(test) - test.n_attack,
                 "attack_fraction": spec.test_attack, "attack_actions": test_labels},
        "attacker_modes": list(spec.modes),
        "classifiers": list(spec.classifiers),
        "metrics": metrics,
        "files": {os.path.basename(p): _sha256(p) for p in files},
    }
    with open(os.path.join(spec.out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True, default=_jsonable)
        fh.write("\n")
    return manifest


def _jsonable(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    raise TypeError(type(o))
