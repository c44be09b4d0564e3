import dataclasses
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import chain_config, crawl_battery_vectors, random_config, two_device_config
from iotdos.attacker import (
    ATTACKER_TURN,
    DEAD_END,
    AttackError,
    brute_force_min_time,
    build_mdp,
    extract_policy,
    format_report,
    simulate_attack,
    solve,
    value_iterate,
)
from iotdos.config import AttackActionSpec, AttackerSpec, Scheduling
from iotdos.rng import make_rng
from iotdos.semantics import Stop


def test_chain_mdp_states():
    mdp = build_mdp(chain_config())
    assert len(mdp) == 3
    assert mdp.battery_vectors() == {(4,), (2,), (0,)}


def test_chain_value_and_policy():
    mdp, vf, pol = solve(chain_config())
    assert vf.initial == 10
    assert all(vf.values[i] == 0 for i in mdp.goal_set)
    assert set(pol.actions.values()) == {"hit"}


def test_no_attacker():
    cfg = dataclasses.replace(chain_config(), attacker=None)
    with pytest.raises(AttackError) as exc:
        build_mdp(cfg)
    assert exc.value.code == "NO_ATTACKER"


def test_wait_only_dead_end():
    cfg = chain_config(actions=())
    mdp = build_mdp(cfg)
    assert mdp.states[mdp.initial].phase == DEAD_END
    assert math.isinf(value_iterate(mdp).initial)


def test_two_attacks_by_hand():
    # 5 = 2 + 3 in either order, 5 + 6 = 11; 2 + 2 strands the battery at 1
    cfg = chain_config(battery=5, actions=(AttackActionSpec("two", "d", 2, 5),
                                           AttackActionSpec("three", "d", 3, 6)))
    assert brute_force_min_time(cfg, 10) == 11
    assert solve(cfg)[1].initial == 11


def test_brute_force_chain_and_horizon():
    assert brute_force_min_time(chain_config(), 10) == 10
    assert math.isinf(brute_force_min_time(chain_config(), 0))
    assert math.isinf(brute_force_min_time(chain_config(), 1))


def test_brute_force_state_cap():
    with pytest.raises(AttackError) as exc:
        brute_force_min_time(two_device_config(), 500, state_cap=5)
    assert exc.value.code == "STATE_LIMIT"


def test_table1_state_count_matches_crawl(table1):
    cfg = dataclasses.replace(table1, attacker=AttackerSpec((
        AttackActionSpec("hit_x", "x", 1, 2),
        AttackActionSpec("hit_y", "y", 2, 3),
        AttackActionSpec("hit_z", "z", 1, 2),
    )))
    mdp = build_mdp(cfg)
    assert mdp.battery_vectors() == crawl_battery_vectors(cfg)


@pytest.mark.parametrize("seed", range(10))
def test_random_state_sets_match_crawl(seed):
    cfg = random_config(500 + seed)
    assert build_mdp(cfg).battery_vectors() == crawl_battery_vectors(cfg)


def test_small_two_device_matches_expectimin():
    base = two_device_config()
    a, b = base.devices
    cfg = dataclasses.replace(base, devices=(dataclasses.replace(a, battery_capacity=4),
                                             dataclasses.replace(b, battery_capacity=3)))
    mdp = build_mdp(cfg)
    assert len(mdp) <= 60
    vi = value_iterate(mdp).initial
    assert abs(vi - brute_force_min_time(cfg, len(mdp))) <= 1e-9


def test_goal_values_zero_and_residual():
    mdp = build_mdp(two_device_config())
    vf = value_iterate(mdp)
    assert all(vf.values[i] == 0.0 for i in mdp.goal_set)


def test_tie_break_smallest_label():
    cfg = chain_config(actions=(AttackActionSpec("b_hit", "d", 2, 5),
                                AttackActionSpec("a_hit", "d", 2, 5)))
    mdp, vf, pol = solve(cfg)
    assert set(pol.actions.values()) == {"a_hit"}


def test_policy_monte_carlo_matches_value():
    cfg = two_device_config()
    mdp, vf, pol = solve(cfg)
    rng = make_rng(77)
    times = np.array([simulate_attack(cfg, "optimal", None, policy=pol, rng=rng).final_state.clock
                      for _ in range(2000)])
    se = times.std(ddof=1) / np.sqrt(len(times))
    assert abs(times.mean() - vf.initial) <= 3 * se


def test_optimal_attack_on_chain():
    t = simulate_attack(chain_config(), "optimal", 0)
    assert len(t) == 2 and all(tr.label == "attack" for tr in t.transitions)
    assert t.final_state.batteries == (0,) and t.final_state.clock == 10
    assert t.termination == "goal_reached"
    assert all(tr.src == "ATTACKER" and tr.payload.url_unique == 1 for tr in t.transitions)


def test_stochastic_mode_is_uniform():
    cfg = chain_config(battery=10_000, actions=(AttackActionSpec("p", "d", 1, 1),
                                                AttackActionSpec("q", "d", 1, 1)))
    t = simulate_attack(cfg, "stochastic", 11, stop=Stop(max_steps=10_000))
    counts = Counter(tr.action for tr in t.transitions)
    assert len(t) == 10_000
    assert abs(counts["p"] / 10_000 - 0.5) <= 0.02


def test_stealth_prefers_quiet_action():
    cfg = chain_config(battery=6, actions=(AttackActionSpec("fast", "d", 3, 1, stealth_cost=5),
                                           AttackActionSpec("quiet", "d", 1, 10, stealth_cost=0)))
    assert {tr.action for tr in simulate_attack(cfg, "optimal", 0).transitions} == {"fast"}
    t = simulate_attack(cfg, "stealth", 0, stealth_weight=1e12)
    assert {tr.action for tr in t.transitions} == {"quiet"}


def test_stealth_zero_equals_time_optimal():
    cfg = two_device_config()
    assert solve(cfg, 0.0)[1].initial == solve(cfg)[1].initial


def test_device_round_first_false_starts_with_attacker():
    cfg = dataclasses.replace(two_device_config(), scheduling=Scheduling(device_round_first=False))
    mdp = build_mdp(cfg)
    assert mdp.states[mdp.initial].phase == ATTACKER_TURN
    t = simulate_attack(cfg, "stochastic", 3)
    assert t.transitions[0].label == "attack"
    assert abs(value_iterate(mdp).initial - brute_force_min_time(cfg, len(mdp))) <= 1e-9


def test_report_lists_value():
    text = format_report(*solve(chain_config()))
    assert "V(initial)=10" in text and "states: 3" in text


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32))
def test_power_never_hurts(seed):
    cfg = random_config(seed, max_battery=8)
    at = cfg.attacker
    v1 = solve(dataclasses.replace(cfg, attacker=dataclasses.replace(at, power_level=1)))[1].initial
    v2 = solve(dataclasses.replace(cfg, attacker=dataclasses.replace(at, power_level=2)))[1].initial
    assert v2 <= v1 + 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32))
def test_oracle_equivalence_property(seed):
    cfg = random_config(seed, max_battery=8)
    mdp = build_mdp(cfg)
    vi = value_iterate(mdp).initial
    bf = brute_force_min_time(cfg, len(mdp))
    assert (math.isinf(vi) and math.isinf(bf)) or abs(vi - bf) <= 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32))
def test_mdp_edges_drain(seed):
    mdp = build_mdp(random_config(seed))
    for i, chs in enumerate(mdp.choices):
        for ch in chs:
            assert abs(sum(p for p, _, _ in ch.outcomes) - 1) <= 1e-9
            for _, cost, j in ch.outcomes:
                assert cost >= 0
                if ch.action != "WAIT":
                    assert sum(mdp.states[j].batteries) < sum(mdp.states[i].batteries)


def test_extract_policy_on_unreachable_still_defined():
    cfg = chain_config(battery=5, actions=(AttackActionSpec("two", "d", 2, 1),))
    mdp = build_mdp(cfg)
    vf = value_iterate(mdp)
    assert math.isinf(vf.initial)
    assert set(extract_policy(mdp, vf).actions.values()) == {"two"}
