"""Timed, guarded trace semantics for devices under battery monitors.

One transition is one message: the sender pays ``drain_send``, the receiver
pays ``drain_recv`` and the global clock advances by the action's total
duration.  An action is enabled only while both participants can afford
their drain (``battery >= drain``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .payload import DEVICE_PAYLOAD, PayloadFeatures
from .rng import make_rng

ATTACKER = "ATTACKER"
NORMAL = "normal"
ATTACK = "attack"

TRACE_SCHEMA = "iotdos.trace/1"

# slack for float drains; integer fixtures are unaffected
EPS = 1e-12


class SemanticsError(RuntimeError):
    def __init__(self, code, message):
        self.code = code
        super().__init__(f"{code}: {message}")


@dataclass(frozen=True)
class SystemState:
    """Battery per device (aligned with ``config.devices``) and global clock."""

    batteries: tuple
    clock: float = 0

    def battery_map(self, config):
        return dict(zip(config.device_ids, self.batteries))


@dataclass(frozen=True)
class Transition:
    seq: int
    action: str
    probability: float
    t_start: float
    t_end: float
    src: str
    dst: str
    drain_src: float
    drain_dst: float
    payload: PayloadFeatures = DEVICE_PAYLOAD
    label: str = NORMAL

    def to_record(self):
        return {
            "seq": self.seq, "action": self.action, "probability": self.probability,
            "t_start": self.t_start, "t_end": self.t_end, "src": self.src, "dst": self.dst,
            "drain_src": self.drain_src, "drain_dst": self.drain_dst,
            "payload": {
                "ua_code": self.payload.ua_code, "ref_code": self.payload.ref_code,
                "keepalive": self.payload.keepalive, "url_unique": self.payload.url_unique,
            },
            "label": self.label,
        }

    @classmethod
    def from_record(cls, rec):
        return cls(
            seq=rec["seq"], action=rec["action"], probability=rec["probability"],
            t_start=rec["t_start"], t_end=rec["t_end"], src=rec["src"], dst=rec["dst"],
            drain_src=rec["drain_src"], drain_dst=rec["drain_dst"],
            payload=PayloadFeatures(**rec["payload"]), label=rec["label"],
        )


@dataclass
class Trace:
    transitions: list
    final_state: SystemState
    termination: str
    initial_state: SystemState | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.transitions)

    def timestamps(self):
        return [t.t_end for t in self.transitions]


@dataclass(frozen=True)
class Stop:
    """Stop condition; with both limits unset the run goes until exhaustion."""

    max_steps: int | None = None
    max_time: float | None = None


def initial_state(config):
    return SystemState(config.initial_batteries(), 0)


def _affordable(battery, drain):
    return battery + EPS >= drain


def _drained(battery, drain):
    left = battery - drain
    return left if left > 0 else 0 * left


def enabled(state, config):
    """Labels of device actions whose battery guards hold, in config order."""
    b = state.batteries
    return tuple(
        a.label
        for a, si, ri in config.action_table
        if a.probability > 0 and _affordable(b[si], a.drain_send) and _affordable(b[ri], a.drain_recv)
    )


def enabled_attacks(state, config):
    """Labels of attack actions whose target can still absorb the drain."""
    b = state.batteries
    return tuple(a.label for a, ti in config.attack_table if _affordable(b[ti], a.drain_target))


def step(state, action, config, seq=0):
    """Apply device action ``action``; returns ``(new_state, transition)``."""
    spec = config.action_by_label.get(action)
    if spec is None:
        raise SemanticsError("UNKNOWN_ACTION", f"no device action '{action}'")
    idx = config.device_index
    si, ri = idx[spec.sender], idx[spec.receiver]
    b = list(state.batteries)
    if not (spec.probability > 0 and _affordable(b[si], spec.drain_send)
            and _affordable(b[ri], spec.drain_recv)):
        raise SemanticsError("DISABLED_ACTION", f"'{action}' is not enabled")
    b[si] = _drained(b[si], spec.drain_send)
    b[ri] = _drained(b[ri], spec.drain_recv)
    t_end = state.clock + spec.duration
    tr = Transition(
        seq=seq, action=action, probability=spec.probability,
        t_start=state.clock, t_end=t_end, src=spec.sender, dst=spec.receiver,
        drain_src=spec.drain_send, drain_dst=spec.drain_recv,
    )
    return SystemState(tuple(b), t_end), tr


def attack_step(state, action, config, payload=None, seq=0):
    """Apply attack action ``action`` against its target device."""
    spec = config.attack_by_label.get(action)
    if spec is None:
        raise SemanticsError("UNKNOWN_ACTION", f"no attack action '{action}'")
    ti = config.device_index[spec.target]
    b = list(state.batteries)
    if not _affordable(b[ti], spec.drain_target):
        raise SemanticsError("DISABLED_ACTION", f"'{action}' is not enabled")
    b[ti] = _drained(b[ti], spec.drain_target)
    t_end = state.clock + spec.time_per_message
    tr = Transition(
        seq=seq, action=action, probability=0,
        t_start=state.clock, t_end=t_end, src=ATTACKER, dst=spec.target,
        drain_src=0, drain_dst=spec.drain_target,
        payload=payload if payload is not None else PayloadFeatures(url_unique=1),
        label=ATTACK,
    )
    return SystemState(tuple(b), t_end), tr


def sample_device_action(state, config, rng):
    """Draw one enabled device action, weights renormalised over the enabled set.

    Returns None when nothing is enabled.
    """
    b = state.batteries
    labels, weights = [], []
    for a, si, ri in config.action_table:
        if a.probability > 0 and _affordable(b[si], a.drain_send) and _affordable(b[ri], a.drain_recv):
            labels.append(a.label)
            weights.append(a.probability)
    if not labels:
        return None
    if len(labels) == 1:
        return labels[0]
    u = rng.random() * sum(weights)
    acc = 0.0
    for lab, w in zip(labels, weights):
        acc += w
        if u < acc:
            return lab
    return labels[-1]


def run_device_trace(config, rng, stop=Stop(), state=None):
    """Simulate device-only traffic from ``state`` drawing from ``rng``."""
    state = initial_state(config) if state is None else state
    start = state
    out = []
    termination = "exhausted"
    while True:
        if stop.max_steps is not None and len(out) >= stop.max_steps:
            termination = "step_limit"
            break
        if stop.max_time is not None and state.clock >= stop.max_time:
            termination = "time_limit"
            break
        action = sample_device_action(state, config, rng)
        if action is None:
            break
        state, tr = step(state, action, config, seq=len(out))
        out.append(tr)
    return Trace(out, state, termination, initial_state=start)


def simulate(config, seed, stop=Stop()):
    """Deterministic device-only simulation for ``(config, seed, stop)``."""
    trace = run_device_trace(config, make_rng(seed), stop)
    trace.seed = seed
    return trace


def replay(config, actions, state=None):
    """Force the listed device actions in order (raises if one is disabled)."""
    state = initial_state(config) if state is None else state
    start = state
    out = []
    for action in actions:
        state, tr = step(state, action, config, seq=len(out))
        out.append(tr)
    termination = "exhausted" if not enabled(state, config) else "step_limit"
    return Trace(out, state, termination, initial_state=start)


# --------------------------------------------------------------------------
# Trace stream: header record then one JSON object per transition
# --------------------------------------------------------------------------


def trace_header(trace, config):
    from .config import config_hash

    return {
        "schema": TRACE_SCHEMA,
        "config_hash": config_hash(config),
        "seed": trace.seed,
        "termination": trace.termination,
        "devices": list(config.device_ids),
        "final_batteries": list(trace.final_state.batteries),
        "final_clock": trace.final_state.clock,
        **trace.meta,
    }


def write_trace(trace, config, fh):
    fh.write(json.dumps(trace_header(trace, config), sort_keys=True) + "\n")
    for tr in trace.transitions:
        fh.write(json.dumps(tr.to_record(), sort_keys=True) + "\n")


def read_trace(fh):
    """Parse a trace stream; returns ``(header, transitions)``."""
    lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise ValueError("empty trace stream")
    header = json.loads(lines[0])
    if header.get("schema") != TRACE_SCHEMA:
        raise ValueError(f"unsupported trace schema {header.get('schema')!r}")
    return header, [Transition.from_record(json.loads(ln)) for ln in lines[1:]]
