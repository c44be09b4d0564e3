"""Shared builders for tests: fixture configs and random small systems."""

import numpy as np

from iotdos.config import (
    ActionSpec,
    AttackActionSpec,
    AttackerSpec,
    DeviceSpec,
    Scheduling,
    SystemConfig,
)
from iotdos.semantics import SemanticsError, SystemState, attack_step, step


def chain_config(battery=4, drain=2, time=5, actions=None, power=1):
    if actions is None:
        actions = (AttackActionSpec("hit", "d", drain, time),)
    return SystemConfig(
        devices=(DeviceSpec("d", battery),),
        attacker=AttackerSpec(tuple(actions), power_level=power),
    )


def two_device_config(power=1, stealth_weight=0.0):
    """Fixed two-device system with stochastic traffic and three attack messages."""
    a = DeviceSpec("a", 10, active=(
        ActionSpec("ping_ab", "a", "b", 0.6, 1, 1, 3),
        ActionSpec("push_ab", "a", "b", 0.4, 2, 1, 5, 1),
    ), passive=("ack_ba",))
    b = DeviceSpec("b", 8, active=(
        ActionSpec("ack_ba", "b", "a", 1.0, 1, 1, 2),
    ), passive=("ping_ab", "push_ab"))
    attacker = AttackerSpec((
        AttackActionSpec("flood_a", "a", 2, 3, stealth_cost=2),
        AttackActionSpec("flood_b", "b", 1, 1, stealth_cost=1),
        AttackActionSpec("slow_b", "b", 3, 4, stealth_cost=0),
    ), power_level=power, stealth_weight=stealth_weight)
    return SystemConfig((a, b), attacker)


def random_config(seed, max_devices=3, max_battery=12, max_attacks=4, allow_float=True):
    """Valid random system: <= max_devices devices, integer or half-unit drains."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, max_devices + 1))
    ids = [f"d{i}" for i in range(n)]
    unit = 0.5 if allow_float and rng.random() < 0.3 else 1
    actives = {i: [] for i in ids}
    passives = {i: [] for i in ids}
    count = 0
    if n > 1:
        for i in ids:
            k = int(rng.integers(0, 3))
            weights = rng.integers(1, 6, size=k)
            for w in weights:
                recv = ids[(ids.index(i) + int(rng.integers(1, n))) % n]
                ds, dr = 0, 0
                while ds + dr == 0:
                    ds, dr = int(rng.integers(0, 3)), int(rng.integers(0, 3))
                label = f"m{count}"
                count += 1
                actives[i].append(ActionSpec(
                    label, i, recv, float(w) / float(weights.sum()),
                    ds * unit, dr * unit, int(rng.integers(1, 7)), int(rng.integers(0, 3)),
                ))
                passives[recv].append(label)
    devices = tuple(
        DeviceSpec(i, int(rng.integers(1, max_battery + 1)), tuple(actives[i]), tuple(passives[i]))
        for i in ids
    )
    attacks = tuple(
        AttackActionSpec(f"x{j}", ids[int(rng.integers(n))], int(rng.integers(1, 4)) * unit,
                         int(rng.integers(1, 6)), int(rng.integers(0, 4)))
        for j in range(int(rng.integers(0, max_attacks + 1)))
    )
    goal = ["any_device_dead", "all_devices_dead", f"device:{ids[int(rng.integers(n))]}"][
        int(rng.integers(3))]
    attacker = AttackerSpec(attacks, power_level=int(rng.integers(1, 3)), goal=goal)
    return SystemConfig(devices, attacker, Scheduling(bool(rng.random() < 0.8)), seed)


def crawl_battery_vectors(config):
    """Battery vectors reachable under the round structure, walked with the step functions."""
    k = config.attacker.power_level
    from iotdos.attacker import canonical, goal_predicate

    is_goal = goal_predicate(config)

    def device_moves(b):
        out = []
        for a in config.actions:
            try:
                out.append(canonical(step(SystemState(b, 0), a.label, config)[0].batteries))
            except SemanticsError:
                pass
        return out

    def attack_moves(b):
        out = []
        for a in config.attacker.actions:
            try:
                out.append(canonical(attack_step(SystemState(b, 0), a.label, config)[0].batteries))
            except SemanticsError:
                pass
        return out

    b0 = canonical(config.initial_batteries())
    start = (b0, 0) if config.scheduling.device_round_first else (b0, k)
    seen = {start}
    todo = [start]
    while todo:
        b, stage = todo.pop()
        if is_goal(b):
            continue
        nxt = []
        if stage == 0:
            dm = device_moves(b)
            nxt = [(nb, k) for nb in dm] if dm else [(b, k)]
        else:
            nxt = [(nb, stage - 1) for nb in attack_moves(b)]
            if device_moves(b):
                nxt.append((b, 0))
        for s in nxt:
            if s not in seen:
                seen.add(s)
                todo.append(s)
    return {b for b, _ in seen}
