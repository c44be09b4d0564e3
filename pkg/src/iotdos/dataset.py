"""Labelled feature tables from traces and web-server logs.

Model traces are already numeric: one row per transition with the
inter-arrival time, endpoint and action codes, both drains and the four
payload features.  Categorical data (e.g. parsed Apache logs) is one-hot
encoded by :func:`binarise` before training.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

from .attacker import MODES, simulate_attack, solve
from .payload import HulkProfile
from .rng import derive_seed, make_rng
from .semantics import ATTACK, ATTACKER, Stop, run_device_trace

FEATURES = (
    "delta", "src", "dst", "action", "drain_src", "drain_dst",
    "ua_code", "ref_code", "keepalive", "url_unique",
)


class DatasetError(ValueError):
    def __init__(self, code, message):
        self.code = code
        super().__init__(f"{code}: {message}")


@dataclass(frozen=True)
class DatasetRow:
    features: tuple
    label: int


@dataclass
class Dataset:
    columns: list
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64).reshape(len(self.y), len(self.columns))
        self.y = np.asarray(self.y, dtype=np.int64)

    def __len__(self):
        return len(self.y)

    def __getitem__(self, i):
        return DatasetRow(tuple(self.X[i].tolist()), int(self.y[i]))

    @property
    def n_attack(self):
        return int(self.y.sum())

    @classmethod
    def empty(cls, columns=FEATURES):
        return cls(list(columns), np.empty((0, len(columns))), np.empty(0, dtype=np.int64))

    def subset(self, idx):
        return Dataset(list(self.columns), self.X[idx], self.y[idx])


# --------------------------------------------------------------------------
# Traces -> rows
# --------------------------------------------------------------------------


def _trace_rows(trace, config, rng):
    dev = config.device_index
    codes = config.action_codes
    n_dev = len(dev)
    rows, labels = [], []
    prev = trace.initial_state.clock if trace.initial_state is not None else (
        trace.transitions[0].t_start if trace.transitions else 0)
    for tr in trace.transitions:
        dst = dev[tr.dst]
        if tr.src == ATTACKER:
            # never expose the attacker as a source; pretend to be a peer
            if n_dev > 1:
                src = int(rng.integers(n_dev - 1))
                src += src >= dst
            else:
                src = dst
        else:
            src = dev[tr.src]
        p = tr.payload
        rows.append((tr.t_end - prev, src, dst, codes[tr.action], tr.drain_src, tr.drain_dst,
                     p.ua_code, p.ref_code, p.keepalive, p.url_unique))
        labels.append(1 if tr.label == ATTACK else 0)
        prev = tr.t_end
    return rows, labels


def encode_trace(trace, config, rng=None):
    """One row per transition; ``config`` fixes the device and action codes."""
    if rng is None:
        rng = make_rng(trace.seed or 0)
    rows, labels = _trace_rows(trace, config, rng)
    if not rows:
        return Dataset.empty()
    return Dataset(list(FEATURES), np.array(rows, dtype=np.float64), np.array(labels))


def generate_dataset(config, size, attack_fraction, seed, modes=("optimal", "stochastic"),
                     attack_labels=None, hulk=HulkProfile(), stealth_weight=None,
                     max_idle_episodes=1000):
    """Model-generated dataset of exactly ``size`` rows.

    Normal rows come from device-only traces; attack rows are the attack
    transitions of attacker episodes, cycling through ``modes``.  When
    ``attack_labels`` is given only those attack actions are used, but codes
    still come from the full ``config`` so datasets built from different
    subsets share one schema.
    """
    n_attack = int(round(size * attack_fraction))
    n_normal = size - n_attack
    for m in modes:
        if m not in MODES:
            raise DatasetError("BAD_MODE", f"unknown attacker mode '{m}'")

    normal_rng = make_rng(derive_seed(seed, "normal"))
    devices_only = config.without_attacker()
    rows, labels = [], []
    while len(rows) < n_normal:
        trace = run_device_trace(devices_only, normal_rng)
        if not trace.transitions:
            raise DatasetError("INSUFFICIENT_ROWS", "device traffic produces no normal rows")
        r, lab = _trace_rows(trace, config, normal_rng)
        rows.extend(r)
        labels.extend(lab)
    normal = Dataset(list(FEATURES), np.array(rows, dtype=np.float64).reshape(-1, len(FEATURES)),
                     np.array(labels, dtype=np.int64))

    rows, labels = [], []
    if n_attack > 0:
        if config.attacker is None:
            raise DatasetError("INSUFFICIENT_ROWS", "attack rows requested but config has no attacker")
        sub = config if attack_labels is None else config.with_attack_subset(attack_labels)
        kappa = sub.attacker.stealth_weight if stealth_weight is None else stealth_weight
        policies = {}
        for m in set(modes):
            if m != "stochastic":
                policies[m] = solve(sub, 0.0 if m == "optimal" else kappa)[2]
        attack_rng = make_rng(derive_seed(seed, "attack"))
        episode = idle = 0
        while len(rows) < n_attack:
            mode = modes[episode % len(modes)]
            episode += 1
            trace = simulate_attack(sub, mode, None, policy=policies.get(mode), hulk=hulk,
                                    rng=attack_rng)
            r, lab = _trace_rows(trace, config, attack_rng)
            got = [row for row, y in zip(r, lab) if y == 1]
            idle = 0 if got else idle + 1
            if idle >= max_idle_episodes:
                raise DatasetError("INSUFFICIENT_ROWS", "attacker produces no attack rows")
            rows.extend(got)
            labels.extend([1] * len(got))
    attack = Dataset(list(FEATURES), np.array(rows, dtype=np.float64).reshape(-1, len(FEATURES)),
                     np.array(labels, dtype=np.int64))
    return mix(normal, attack, attack_fraction, size, derive_seed(seed, "mix"))


# --------------------------------------------------------------------------
# Mixing and scaling
# --------------------------------------------------------------------------


def mix(normal, attack, attack_fraction, total, seed):
    """Draw ``round(total * attack_fraction)`` attack rows and the rest normal, shuffled."""
    if not 0 <= attack_fraction <= 1:
        raise DatasetError("BAD_FRACTION", "attack_fraction must lie in [0, 1]")
    n_attack = int(round(total * attack_fraction))
    n_normal = total - n_attack
    if len(normal) < n_normal:
        raise DatasetError("INSUFFICIENT_ROWS",
                           f"normal class has {len(normal)} rows, {n_normal} needed")
    if len(attack) < n_attack:
        raise DatasetError("INSUFFICIENT_ROWS",
                           f"attack class has {len(attack)} rows, {n_attack} needed")
    if n_attack and n_normal and list(normal.columns) != list(attack.columns):
        raise DatasetError("SCHEMA_MISMATCH", "normal and attack columns differ")
    columns = list(normal.columns if n_normal else attack.columns)
    rng = make_rng(seed)
    parts_x, parts_y = [], []
    for src, n in ((normal, n_normal), (attack, n_attack)):
        if n:
            idx = np.sort(rng.choice(len(src), size=n, replace=False))
            parts_x.append(src.X[idx])
            parts_y.append(src.y[idx])
    if not parts_x:
        return Dataset.empty(columns)
    X = np.concatenate(parts_x)
    y = np.concatenate(parts_y)
    perm = rng.permutation(len(y))
    return Dataset(columns, X[perm], y[perm])


@dataclass
class ColumnStats:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, ds):
        scale = np.where(self.std > 0, self.std, 1.0)
        shift = np.where(self.std > 0, self.mean, 0.0)
        return Dataset(list(ds.columns), (ds.X - shift) / scale, ds.y.copy())

    def to_json(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_json(cls, d):
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64))


def standardize(train, *others):
    """Z-score every column with train statistics; constant columns pass through."""
    if len(train) == 0:
        raise DatasetError("EMPTY_DATASET", "cannot standardise an empty training set")
    stats = ColumnStats(train.X.mean(axis=0), train.X.std(axis=0))
    return [stats.apply(train)] + [stats.apply(o) for o in others], stats


# --------------------------------------------------------------------------
# Binarisation
# --------------------------------------------------------------------------


@dataclass
class EncodingMap:
    """Categories per column in first-occurrence order; position i is one-hot bit i."""

    columns: dict = field(default_factory=dict)

    def fit(self, name, values):
        cats = self.columns.setdefault(name, [])
        seen = set(cats)
        for v in values:
            if v not in seen:
                seen.add(v)
                cats.append(v)
        return self

    def encode(self, name, values):
        cats = self.columns[name]
        pos = {c: i for i, c in enumerate(cats)}
        out = np.zeros((len(values), len(cats)), dtype=np.int8)
        for r, v in enumerate(values):
            if v not in pos:
                raise DatasetError("UNKNOWN_CATEGORY", f"{v!r} not in column '{name}'")
            out[r, pos[v]] = 1
        return out

    def decode(self, name, onehot):
        cats = self.columns[name]
        return [cats[int(i)] for i in np.argmax(np.asarray(onehot), axis=1)]

    def bitstring(self, name, value):
        """Render one value's code with bit 0 rightmost, e.g. ``0010``."""
        bits = self.encode(name, [value])[0]
        return "".join(str(int(b)) for b in bits[::-1])

    def column_names(self, name):
        return [f"{name}={c}" for c in self.columns[name]]

    def to_json(self):
        return {"columns": self.columns}

    @classmethod
    def from_json(cls, d):
        return cls({k: list(v) for k, v in d["columns"].items()})


def binarise(values, name="value"):
    """One-hot encode a categorical column: k distinct values give k columns."""
    values = list(values)
    if not values:
        raise DatasetError("EMPTY_COLUMN", "cannot binarise an empty column")
    enc = EncodingMap().fit(name, values)
    return enc, enc.encode(name, values)


# --------------------------------------------------------------------------
# Apache logs
# --------------------------------------------------------------------------

APACHE_COLUMNS = ("host", "timestamp", "method", "path", "status", "size", "referrer", "user-agent")

_CLF = re.compile(
    r'^(?P<host>\S+) (?P<ident>\S+) (?P<user>\S+) \[(?P<ts>[^\]]+)\] '
    r'"(?P<request>[^"]*)" (?P<status>\d{3}) (?P<size>\d+|-)'
    r'(?: "(?P<referrer>[^"]*)" "(?P<agent>[^"]*)")?\s*$'
)


@dataclass
class IngestResult:
    rows: list
    rejects: list  # (line number, raw line, reason)


def ingest_apache_log(lines):
    """Parse Common/Combined Log Format lines; bad lines land in ``rejects``."""
    rows, rejects = [], []
    for n, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        m = _CLF.match(line)
        if m is None:
            rejects.append((n, line, "not in common log format"))
            continue
        parts = m["request"].split()
        if len(parts) not in (2, 3):
            rejects.append((n, line, "malformed request line"))
            continue
        try:
            ts = datetime.strptime(m["ts"], "%d/%b/%Y:%H:%M:%S %z")
        except ValueError:
            rejects.append((n, line, "bad timestamp"))
            continue
        rows.append({
            "host": m["host"],
            "timestamp": int(ts.timestamp()),
            "method": parts[0],
            "path": parts[1],
            "status": int(m["status"]),
            "size": 0 if m["size"] == "-" else int(m["size"]),
            "referrer": m["referrer"] if m["referrer"] is not None else "-",
            "user-agent": m["agent"] if m["agent"] is not None else "-",
        })
    return IngestResult(rows, rejects)


def log_to_dataset(rows, label=0, categorical=("method", "status", "referrer", "user-agent"),
                   numeric=("size",), encoding=None):
    """Binarise chosen log columns into a numeric dataset (plus an inter-arrival column).

    Pass an existing ``encoding`` to reuse category positions across files.
    """
    enc = encoding if encoding is not None else EncodingMap()
    if encoding is None:
        for c in categorical:
            enc.fit(c, [r[c] for r in rows])
    ts = np.array([r["timestamp"] for r in rows], dtype=np.float64)
    delta = np.diff(ts, prepend=ts[:1]) if len(ts) else ts
    blocks, columns = [delta[:, None]], ["delta"]
    for c in numeric:
        blocks.append(np.array([[r[c]] for r in rows], dtype=np.float64).reshape(-1, 1))
        columns.append(c)
    for c in categorical:
        blocks.append(enc.encode(c, [r[c] for r in rows]).astype(np.float64))
        columns.extend(enc.column_names(c))
    X = np.hstack(blocks) if rows else np.empty((0, len(columns)))
    y = np.full(len(rows), int(label)) if np.isscalar(label) else np.asarray(label)
    return Dataset(columns, X, y), enc


# --------------------------------------------------------------------------
# Files
# --------------------------------------------------------------------------


def _num(v):
    f = float(v)
    return str(int(f)) if f.is_integer() else repr(f)


def dumps_dataset(ds, fmt="csv"):
    buf = io.StringIO()
    if fmt == "csv":
        buf.write(",".join(list(ds.columns) + ["label"]) + "\n")
        for row, y in zip(ds.X.tolist(), ds.y.tolist()):
            buf.write(",".join(_num(v) for v in row) + f",{y}\n")
    elif fmt == "jsonl":
        for row, y in zip(ds.X.tolist(), ds.y.tolist()):
            rec = {c: (int(v) if float(v).is_integer() else v) for c, v in zip(ds.columns, row)}
            rec["label"] = y
            buf.write(json.dumps(rec) + "\n")
    else:
        raise DatasetError("BAD_FORMAT", f"unknown format '{fmt}'")
    return buf.getvalue()


def save_dataset(ds, path, fmt="csv"):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(dumps_dataset(ds, fmt))


def load_dataset(path, fmt=None):
    fmt = fmt or ("jsonl" if str(path).endswith(".jsonl") else "csv")
    with open(path, encoding="utf-8", newline="") as fh:
        if fmt == "jsonl":
            recs = [json.loads(ln) for ln in fh if ln.strip()]
            if not recs:
                raise DatasetError("EMPTY_DATASET", f"{path} has no rows")
            columns = [k for k in recs[0] if k != "label"]
            X = [[r[c] for c in columns] for r in recs]
            y = [r["label"] for r in recs]
        else:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header or header[-1] != "label":
                raise DatasetError("BAD_HEADER", f"{path}: last column must be 'label'")
            columns = header[:-1]
            X, y = [], []
            for n, rec in enumerate(reader, start=2):
                if len(rec) != len(header):
                    raise DatasetError("BAD_ROW", f"{path}:{n}: expected {len(header)} fields")
                X.append([float(v) for v in rec[:-1]])
                y.append(int(rec[-1]))
    return Dataset(columns, np.array(X, dtype=np.float64).reshape(-1, len(columns)), np.array(y))
