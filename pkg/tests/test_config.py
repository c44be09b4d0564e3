import dataclasses

import pytest
from hypothesis import given, settings, strategies as st

from helpers import random_config
from iotdos.config import (
    AttackActionSpec,
    AttackerSpec,
    ConfigError,
    load_config,
    serialize,
    validate,
)


def test_table1_loads(table1):
    assert table1.device_ids == ("x", "y", "z")
    assert table1.initial_batteries() == (5, 8, 2)
    assert [a.label for a in table1.devices[0].active] == ["read_xy", "write_xy", "read_xz"]
    assert table1.devices[1].passive == ("read_xy", "write_xy", "read_zy")


def test_table1_valid(table1):
    assert validate(table1) == []


def test_no_devices():
    with pytest.raises(ConfigError, match="no devices"):
        load_config("devices: []\n")


def test_duplicate_label(table1_text):
    text = table1_text.replace("label: read_yz,", "label: read_xy,")
    with pytest.raises(ConfigError, match="read_xy"):
        load_config(text)


def test_unknown_field_names_line():
    text = "devices:\n  - id: a\n    battery_capacity: 3\n    colour: red\n"
    with pytest.raises(ConfigError) as exc:
        load_config(text)
    assert exc.value.field == "colour"
    assert exc.value.line == 4


def test_missing_field():
    with pytest.raises(ConfigError) as exc:
        load_config("devices:\n  - id: a\n")
    assert exc.value.field == "battery_capacity"


def test_syntax_error_has_line():
    with pytest.raises(ConfigError) as exc:
        load_config("devices:\n  - id: [a\n")
    assert "syntax error" in str(exc.value)
    assert exc.value.line is not None


def test_prob_sum_violation(table1_text):
    text = table1_text.replace("label: read_xz,  receiver: z, probability: 0.2",
                               "label: read_xz,  receiver: z, probability: 0.3")
    vs = validate(load_config(text))
    assert [(v.code, v.entity) for v in vs] == [("PROB_SUM", "x")]


def test_unknown_target(table1):
    cfg = dataclasses.replace(table1, attacker=AttackerSpec((AttackActionSpec("hit_w", "w", 1, 1),)))
    assert [v.code for v in validate(cfg)] == ["UNKNOWN_TARGET"]


def test_self_loop_and_zero_drain():
    text = """
devices:
  - id: a
    battery_capacity: 3
    active:
      - {label: m, receiver: a, probability: 1, drain_send: 0, drain_recv: 0, time_send: 1}
    passive: [m]
"""
    codes = {v.code for v in validate(load_config(text))}
    assert {"SELF_LOOP", "ZERO_DRAIN"} <= codes


def test_passive_mismatch(table1_text):
    text = table1_text.replace("passive: [read_zx]", "passive: [read_zx, bogus]")
    vs = validate(load_config(text))
    assert [(v.code, v.entity) for v in vs] == [("PASSIVE_MISMATCH", "x")]


def test_dead_on_arrival_warning():
    text = """
devices:
  - id: a
    battery_capacity: 1
    active:
      - {label: m, receiver: b, probability: 1, drain_send: 2, drain_recv: 0, time_send: 1}
    passive: []
  - id: b
    battery_capacity: 1
    passive: [m]
"""
    vs = validate(load_config(text))
    assert [(v.code, v.severity) for v in vs] == [("DEAD_ON_ARRIVAL", "warning")]


def test_goal_mapping_roundtrip():
    text = """
devices: [{id: a, battery_capacity: 4}]
attacker:
  goal: {device: a}
  actions: [{label: h, target: a, drain_target: 2, time_per_message: 1}]
"""
    cfg = load_config(text)
    assert cfg.attacker.goal_device == "a"
    assert load_config(serialize(cfg)) == cfg


def test_roundtrip_table1(table1, table1_attack):
    for cfg in (table1, table1_attack):
        assert load_config(serialize(cfg)) == cfg


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32))
def test_roundtrip_preserves_validation(seed):
    cfg = random_config(seed)
    again = load_config(serialize(cfg))
    assert again == cfg
    assert validate(again) == validate(cfg)
