"""Attack synthesis: minimum expected time until the goal battery state.

The attack MDP alternates device rounds (one probabilistic device message,
resolved first) with ``power_level`` attacker moves.  An attacker move is an
attack message or WAIT, which hands the turn back to the devices.  Every
move either drains some battery or leads to a device round that does, so
the graph is acyclic and a single backwards pass over a topological order
gives exact values.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .rng import make_rng
from .payload import HulkProfile
from .semantics import (
    ATTACK,
    EPS,
    SemanticsError,
    Stop,
    SystemState,
    Trace,
    _affordable,
    _drained,
    attack_step,
    sample_device_action,
    step,
)

log = logging.getLogger(__name__)

DEVICE_TURN = "device_turn"
ATTACKER_TURN = "attacker_turn"
GOAL = "goal"
DEAD_END = "dead_end"

WAIT = "WAIT"
DEVICE = "DEVICE"

ORACLE_STATE_CAP = 10_000
WARN_STATES = 1_000_000

MODES = ("optimal", "stealth", "stochastic")


class AttackError(RuntimeError):
    def __init__(self, code, message):
        self.code = code
        super().__init__(f"{code}: {message}")


@dataclass(frozen=True)
class AttackState:
    batteries: tuple
    phase: str
    moves_left: int = 0


@dataclass(frozen=True)
class Choice:
    """One action at a node: ``outcomes`` is a list of (prob, cost, successor)."""

    action: str
    outcomes: tuple


@dataclass
class ExplicitMdp:
    config: object
    stealth_weight: float
    states: list
    index: dict
    choices: list
    initial: int
    goal_set: frozenset

    def __len__(self):
        return len(self.states)

    def battery_vectors(self):
        return {s.batteries for s in self.states}

    def topological_order(self):
        """Node indices such that every successor precedes its predecessors."""
        n = len(self.states)
        seen = bytearray(n)
        order = []
        for root in range(n):
            if seen[root]:
                continue
            seen[root] = 1
            stack = [(root, iter(self._succ(root)))]
            while stack:
                node, it = stack[-1]
                nxt = next(it, None)
                if nxt is None:
                    stack.pop()
                    order.append(node)
                elif not seen[nxt]:
                    seen[nxt] = 1
                    stack.append((nxt, iter(self._succ(nxt))))
        return order

    def _succ(self, i):
        return [succ for ch in self.choices[i] for _, _, succ in ch.outcomes]


@dataclass
class ValueFunction:
    mdp: ExplicitMdp
    values: np.ndarray

    @property
    def initial(self):
        return float(self.values[self.mdp.initial])

    def __getitem__(self, state):
        return float(self.values[self.mdp.index[state]])


@dataclass
class AttackPolicy:
    mdp: ExplicitMdp
    actions: dict = field(default_factory=dict)

    def action_at(self, batteries, moves_left):
        key = AttackState(canonical(batteries), ATTACKER_TURN, moves_left)
        i = self.mdp.index.get(key)
        if i is None:
            raise AttackError("UNKNOWN_STATE", f"no attacker node for {key}")
        return self.actions[i]

    def rows(self):
        """(battery vector, moves left, action) per attacker node, in state order."""
        return [
            (self.mdp.states[i].batteries, self.mdp.states[i].moves_left, a)
            for i, a in sorted(self.actions.items())
        ]


def canonical(batteries):
    # float paths to the same battery level must hash equal
    return tuple(b if isinstance(b, int) else round(float(b), 9) for b in batteries)


def goal_predicate(config):
    at = config.attacker
    dead = lambda v: v <= EPS  # noqa: E731
    if at.goal_device is not None:
        i = config.device_index[at.goal_device]
        return lambda b: dead(b[i])
    if at.goal == "all_devices_dead":
        return lambda b: all(dead(v) for v in b)
    return lambda b: any(dead(v) for v in b)


def _device_outcomes(b, config):
    """(prob, duration, next batteries) for each enabled device action."""
    enabled = [
        (a, si, ri) for a, si, ri in config.action_table
        if a.probability > 0 and _affordable(b[si], a.drain_send) and _affordable(b[ri], a.drain_recv)
    ]
    total = sum(a.probability for a, _, _ in enabled)
    out = []
    for a, si, ri in enabled:
        nb = list(b)
        nb[si] = _drained(nb[si], a.drain_send)
        nb[ri] = _drained(nb[ri], a.drain_recv)
        out.append((a.probability / total, a.duration, canonical(nb)))
    return out


def _attack_options(b, config, kappa):
    """(label, cost, next batteries) for each enabled attack action."""
    out = []
    for a, ti in config.attack_table:
        if _affordable(b[ti], a.drain_target):
            nb = list(b)
            nb[ti] = _drained(nb[ti], a.drain_target)
            out.append((a.label, a.time_per_message + kappa * a.stealth_cost, canonical(nb)))
    return out


def build_mdp(config, stealth_weight=0.0):
    """Explicit MDP over reachable battery vectors and turn phases.

    ``stealth_weight`` adds ``stealth_weight * stealth_cost`` to every attack
    edge; 0 gives the pure time objective.
    """
    if config.attacker is None:
        raise AttackError("NO_ATTACKER", "config has no attacker")
    kappa = float(stealth_weight)
    k = config.attacker.power_level
    is_goal = goal_predicate(config)

    states, index, choices = [], {}, []
    queue = []

    def has_device(b):
        return any(
            a.probability > 0 and _affordable(b[si], a.drain_send) and _affordable(b[ri], a.drain_recv)
            for a, si, ri in config.action_table
        )

    def node(b, moves):
        # moves == 0 means the device round is next
        if is_goal(b):
            key = AttackState(b, GOAL)
        elif moves == 0 and has_device(b):
            key = AttackState(b, DEVICE_TURN)
        else:
            m = k if moves == 0 else moves
            if not has_device(b) and not _attack_options(b, config, kappa):
                key = AttackState(b, DEAD_END)
            else:
                key = AttackState(b, ATTACKER_TURN, m)
        i = index.get(key)
        if i is None:
            i = len(states)
            index[key] = i
            states.append(key)
            choices.append(None)
            queue.append(i)
        return i

    b0 = canonical(config.initial_batteries())
    initial = node(b0, 0 if config.scheduling.device_round_first else k)

    head = 0
    while head < len(queue):
        i = queue[head]
        head += 1
        s = states[i]
        if s.phase in (GOAL, DEAD_END):
            choices[i] = ()
        elif s.phase == DEVICE_TURN:
            outs = tuple((p, c, node(nb, k)) for p, c, nb in _device_outcomes(s.batteries, config))
            choices[i] = (Choice(DEVICE, outs),)
        else:
            m = s.moves_left
            opts = []
            for label, cost, nb in _attack_options(s.batteries, config, kappa):
                opts.append(Choice(label, ((1.0, cost, node(nb, m - 1)),)))
            if has_device(s.batteries):
                opts.append(Choice(WAIT, ((1.0, 0, node(s.batteries, 0)),)))
            choices[i] = tuple(opts)

    if len(states) > WARN_STATES:
        log.warning("attack MDP has %d states", len(states))
    goal_set = frozenset(i for i, s in enumerate(states) if s.phase == GOAL)
    mdp = ExplicitMdp(config, kappa, states, index, choices, initial, goal_set)
    _check_acyclic(mdp)
    return mdp


def _check_acyclic(mdp):
    for i, chs in enumerate(mdp.choices):
        src = mdp.states[i]
        for ch in chs:
            assert abs(sum(p for p, _, _ in ch.outcomes) - 1.0) <= 1e-9
            for _, _, j in ch.outcomes:
                dst = mdp.states[j]
                drop = sum(src.batteries) - sum(dst.batteries)
                # only WAIT (handing over to a draining device round) and a
                # skipped device round keep total battery constant
                if drop <= 0 and not (ch.action == WAIT and dst.phase == DEVICE_TURN):
                    raise AttackError("CYCLE", f"edge {src} -> {dst} does not drain")


def _q(values, choice):
    total = 0.0
    for p, c, j in choice.outcomes:
        v = values[j]
        if v == math.inf:
            return math.inf
        total += p * (c + v)
    return total


def value_iterate(mdp, tolerance=1e-9):
    """Exact minimum expected cost to the goal set, one pass in topological order."""
    values = np.full(len(mdp.states), math.inf)
    for i in mdp.topological_order():
        if i in mdp.goal_set:
            values[i] = 0.0
            continue
        best = math.inf
        for ch in mdp.choices[i]:
            q = _q(values, ch)
            if q < best:
                best = q
        values[i] = best
    vf = ValueFunction(mdp, values)
    res = bellman_residual(mdp, vf)
    if res > tolerance:
        raise AttackError("RESIDUAL", f"Bellman residual {res} exceeds {tolerance}")
    return vf


def bellman_residual(mdp, vf):
    worst = 0.0
    v = vf.values
    for i, chs in enumerate(mdp.choices):
        if i in mdp.goal_set:
            target = 0.0
        else:
            target = min((_q(v, ch) for ch in chs), default=math.inf)
        if math.isinf(target) and math.isinf(v[i]):
            continue
        worst = max(worst, abs(target - v[i]))
    return worst


def extract_policy(mdp, vf, tie_tol=1e-12):
    """Greedy policy at attacker nodes; ties go to the smallest action label."""
    pol = AttackPolicy(mdp)
    v = vf.values
    for i, s in enumerate(mdp.states):
        if s.phase != ATTACKER_TURN:
            continue
        qs = [(_q(v, ch), ch.action) for ch in mdp.choices[i]]
        best = min(q for q, _ in qs)
        if math.isinf(best):
            cands = [a for _, a in qs]
        else:
            cands = [a for q, a in qs if q <= best + tie_tol * (1 + abs(best))]
        pol.actions[i] = min(cands)
    return pol


def solve(config, stealth_weight=0.0):
    """Build, value-iterate and extract in one call: ``(mdp, vf, policy)``."""
    mdp = build_mdp(config, stealth_weight)
    vf = value_iterate(mdp)
    return mdp, vf, extract_policy(mdp, vf)


def brute_force_min_time(config, horizon, stealth_weight=0.0, state_cap=ORACLE_STATE_CAP):
    """Expectimin over every attacker choice and device outcome, ``horizon`` rounds deep.

    Independent of :func:`build_mdp`: walks the semantics directly with the
    step functions.  Raises STATE_LIMIT beyond ``state_cap`` battery vectors.
    """
    if config.attacker is None:
        raise AttackError("NO_ATTACKER", "config has no attacker")
    at = config.attacker
    k = at.power_level
    kappa = float(stealth_weight)
    is_goal = goal_predicate(config)
    seen = set()
    memo = {}

    def visit(b):
        if b not in seen:
            seen.add(b)
            if len(seen) > state_cap:
                raise AttackError("STATE_LIMIT", f"more than {state_cap} reachable states")

    def device_round(b, left):
        visit(b)
        if is_goal(b):
            return 0.0
        if left <= 0:
            return math.inf
        key = ("d", b, left)
        if key in memo:
            return memo[key]
        state = SystemState(b, 0)
        labels = [a.label for a, _, _ in config.action_table]
        outcomes = []
        for lab in labels:
            try:
                nxt, tr = step(state, lab, config)
            except SemanticsError:
                continue
            outcomes.append((config.action_by_label[lab].probability, tr.t_end, canonical(nxt.batteries)))
        if not outcomes:
            val = attacker_move(b, k, left)
        else:
            z = sum(p for p, _, _ in outcomes)
            val = 0.0
            for p, dt, nb in outcomes:
                visit(nb)
                rest = 0.0 if is_goal(nb) else attacker_move(nb, k, left)
                val += (p / z) * (dt + rest)
        memo[key] = val
        return val

    def attacker_move(b, m, left):
        key = ("a", b, m, left)
        if key in memo:
            return memo[key]
        state = SystemState(b, 0)
        best = math.inf
        for a in at.actions:
            try:
                nxt, tr = attack_step(state, a.label, config)
            except SemanticsError:
                continue
            nb = canonical(nxt.batteries)
            visit(nb)
            cost = tr.t_end + kappa * a.stealth_cost
            if is_goal(nb):
                total = cost
            elif m > 1:
                total = cost + attacker_move(nb, m - 1, left)
            else:
                total = cost + device_round(nb, left - 1)
            best = min(best, total)
        device_live = False
        for lab in config.action_by_label:
            try:
                step(state, lab, config)
                device_live = True
                break
            except SemanticsError:
                pass
        if device_live:
            best = min(best, device_round(b, left - 1))
        memo[key] = best
        return best

    b0 = canonical(config.initial_batteries())
    if is_goal(b0):
        return 0.0
    if config.scheduling.device_round_first:
        return device_round(b0, horizon)
    if horizon <= 0:
        return math.inf
    return attacker_move(b0, k, horizon)


# --------------------------------------------------------------------------
# Attack simulation
# --------------------------------------------------------------------------


def simulate_attack(config, mode, seed, stop=Stop(), policy=None, stealth_weight=None,
                    hulk=HulkProfile(), rng=None):
    """Interleave device rounds with attacker moves until goal, dead end or ``stop``.

    ``optimal`` and ``stealth`` follow a solved policy (built here when not
    given); ``stochastic`` picks uniformly among enabled attack actions and
    only WAITs when none is enabled.
    """
    if config.attacker is None:
        raise AttackError("NO_ATTACKER", "config has no attacker")
    if mode not in MODES:
        raise AttackError("BAD_MODE", f"unknown mode '{mode}'")
    if mode != "stochastic" and policy is None:
        kappa = 0.0 if mode == "optimal" else (
            config.attacker.stealth_weight if stealth_weight is None else stealth_weight)
        _, _, policy = solve(config, kappa)
    rng = make_rng(seed) if rng is None else rng

    k = config.attacker.power_level
    is_goal = goal_predicate(config)
    state = SystemState(config.initial_batteries(), 0)
    start = state
    out = []
    moves = 0 if config.scheduling.device_round_first else k
    termination = "exhausted"

    def device_live(b):
        return any(
            a.probability > 0 and _affordable(b[si], a.drain_send) and _affordable(b[ri], a.drain_recv)
            for a, si, ri in config.action_table
        )

    while True:
        if is_goal(state.batteries):
            termination = "goal_reached"
            break
        if stop.max_steps is not None and len(out) >= stop.max_steps:
            termination = "step_limit"
            break
        if stop.max_time is not None and state.clock >= stop.max_time:
            termination = "time_limit"
            break
        if moves == 0:
            action = sample_device_action(state, config, rng)
            moves = k
            if action is not None:
                state, tr = step(state, action, config, seq=len(out))
                out.append(tr)
            continue
        b = state.batteries
        attacks = [a.label for a, ti in config.attack_table if _affordable(b[ti], a.drain_target)]
        if not attacks and not device_live(b):
            break
        if mode == "stochastic":
            choice = attacks[int(rng.integers(len(attacks)))] if attacks else WAIT
        else:
            choice = policy.action_at(b, moves)
        if choice == WAIT:
            moves = 0
            continue
        state, tr = attack_step(state, choice, config, payload=hulk.sample(rng), seq=len(out))
        out.append(tr)
        moves -= 1

    trace = Trace(out, state, termination, initial_state=start, seed=seed)
    trace.meta = {"attack_mode": mode}
    return trace


def attack_count(trace):
    return sum(1 for t in trace.transitions if t.label == ATTACK)


def format_report(mdp, vf, policy):
    """Plain-text solve report: state count, V(initial), policy rows."""
    lines = [
        f"states: {len(mdp)}",
        f"battery_vectors: {len(mdp.battery_vectors())}",
        f"stealth_weight: {mdp.stealth_weight:g}",
        f"V(initial)={_fmt(vf.initial)}",
        "policy:",
    ]
    ids = ",".join(mdp.config.device_ids)
    lines.append(f"  ({ids}) moves_left -> action  [value]")
    for i, a in sorted(policy.actions.items()):
        s = mdp.states[i]
        vec = ",".join(_fmt(x) for x in s.batteries)
        lines.append(f"  ({vec}) {s.moves_left} -> {a}  [{_fmt(vf.values[i])}]")
    return "\n".join(lines) + "\n"


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        if math.isinf(x):
            return "inf"
        if float(x).is_integer():
            return str(int(x))
        return repr(float(x))
    return str(x)
