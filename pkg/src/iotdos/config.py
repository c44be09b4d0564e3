"""Static system description: devices, their actions, and the attacker.

A configuration is a YAML document with top-level keys ``devices``,
``attacker``, ``scheduling`` and ``seed``.  Loading resolves every
cross-reference and raises :class:`ConfigError` (with a line number where
one is known) for structural problems.  Semantic problems that a caller may
want to inspect rather than abort on are reported by :func:`validate`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property

import yaml

PROB_TOL = 1e-9

GOALS = ("any_device_dead", "all_devices_dead")


class ConfigError(ValueError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        prefix = []
        if line is not None:
            prefix.append(f"line {line}")
        if field is not None:
            prefix.append(f"field '{field}'")
        super().__init__(": ".join(prefix + [message]))


@dataclass(frozen=True)
class ActionSpec:
    label: str
    sender: str
    receiver: str
    probability: float
    drain_send: float
    drain_recv: float
    time_send: float
    time_recv: float = 0

    @property
    def duration(self):
        return self.time_send + self.time_recv


@dataclass(frozen=True)
class DeviceSpec:
    id: str
    battery_capacity: float
    active: tuple[ActionSpec, ...] = ()
    passive: tuple[str, ...] = ()


@dataclass(frozen=True)
class AttackActionSpec:
    label: str
    target: str
    drain_target: float
    time_per_message: float
    stealth_cost: float = 0


@dataclass(frozen=True)
class AttackerSpec:
    actions: tuple[AttackActionSpec, ...]
    power_level: int = 1
    goal: str = "any_device_dead"
    stealth_weight: float = 0

    @property
    def goal_device(self):
        """Device id named by a ``device:<id>`` goal, else None."""
        if self.goal.startswith("device:"):
            return self.goal.split(":", 1)[1]
        return None


@dataclass(frozen=True)
class Scheduling:
    device_round_first: bool = True


@dataclass(frozen=True)
class SystemConfig:
    devices: tuple[DeviceSpec, ...]
    attacker: AttackerSpec | None = None
    scheduling: Scheduling = field(default_factory=Scheduling)
    rng_seed: int = 0

    @cached_property
    def device_ids(self):
        return tuple(d.id for d in self.devices)

    @cached_property
    def device_index(self):
        return {d: i for i, d in enumerate(self.device_ids)}

    @cached_property
    def actions(self):
        """All device actions, in device order then declaration order."""
        return tuple(a for d in self.devices for a in d.active)

    @cached_property
    def action_by_label(self):
        return {a.label: a for a in self.actions}

    @cached_property
    def action_table(self):
        """(spec, sender index, receiver index) per device action."""
        idx = self.device_index
        return tuple((a, idx.get(a.sender), idx.get(a.receiver)) for a in self.actions)

    @cached_property
    def attack_table(self):
        """(spec, target index) per attack action."""
        if self.attacker is None:
            return ()
        idx = self.device_index
        return tuple((a, idx.get(a.target)) for a in self.attacker.actions)

    @cached_property
    def attack_by_label(self):
        if self.attacker is None:
            return {}
        return {a.label: a for a in self.attacker.actions}

    @cached_property
    def action_codes(self):
        """Stable integer code per label: device actions first, then attacks."""
        labels = [a.label for a in self.actions]
        if self.attacker is not None:
            labels += [a.label for a in self.attacker.actions]
        return {lab: i for i, lab in enumerate(labels)}

    def initial_batteries(self):
        return tuple(d.battery_capacity for d in self.devices)

    def with_attack_subset(self, labels):
        """Copy of this config whose attacker keeps only ``labels``."""
        if self.attacker is None:
            raise ConfigError("config has no attacker")
        keep = set(labels)
        unknown = keep - set(self.attack_by_label)
        if unknown:
            raise ConfigError(f"unknown attack action(s): {sorted(unknown)}")
        actions = tuple(a for a in self.attacker.actions if a.label in keep)
        return SystemConfig(
            devices=self.devices,
            attacker=AttackerSpec(
                actions=actions,
                power_level=self.attacker.power_level,
                goal=self.attacker.goal,
                stealth_weight=self.attacker.stealth_weight,
            ),
            scheduling=self.scheduling,
            rng_seed=self.rng_seed,
        )

    def without_attacker(self):
        return SystemConfig(self.devices, None, self.scheduling, self.rng_seed)


@dataclass(frozen=True)
class Violation:
    code: str
    entity: str
    message: str
    severity: str = "error"

    def __str__(self):
        return f"{self.severity.upper()} {self.code} [{self.entity}]: {self.message}"


# --------------------------------------------------------------------------
# Loading
# --------------------------------------------------------------------------


class _Mapping(dict):
    line = None
    key_lines: dict = {}


class _LineLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    loader.flatten_mapping(node)
    m = _Mapping()
    m.line = node.start_mark.line + 1
    m.key_lines = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        if key in m:
            raise ConfigError(f"duplicate key '{key}'", line=key_node.start_mark.line + 1)
        m[key] = loader.construct_object(value_node, deep=True)
        m.key_lines[key] = key_node.start_mark.line + 1
    return m


_LineLoader.add_constructor("tag:yaml.org,2002:map", _construct_mapping)


_ACTION_FIELDS = {
    "label": True, "sender": False, "receiver": True, "probability": True,
    "drain_send": True, "drain_recv": True, "time_send": True, "time_recv": False,
}
_DEVICE_FIELDS = {"id": True, "battery_capacity": True, "active": False, "passive": False}
_ATTACK_FIELDS = {
    "label": True, "target": True, "drain_target": True,
    "time_per_message": True, "stealth_cost": False,
}
_ATTACKER_FIELDS = {"actions": True, "power_level": False, "goal": False, "stealth_weight": False}
_TOP_FIELDS = {"devices": True, "attacker": False, "scheduling": False, "seed": False}
_SCHED_FIELDS = {"device_round_first": False}


def _check_fields(m, spec, where):
    if not isinstance(m, dict):
        raise ConfigError(f"{where} must be a mapping", line=getattr(m, "line", None))
    for key in m:
        if key not in spec:
            raise ConfigError(f"unknown field in {where}", line=m.key_lines.get(key), field=key)
    for key, required in spec.items():
        if required and key not in m:
            raise ConfigError(f"missing required field in {where}", line=m.line, field=key)


def _number(m, key, default=None):
    if key not in m:
        return default
    v = m[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError("expected a number", line=m.key_lines.get(key), field=key)
    return v


def _string(m, key, default=None):
    if key not in m:
        return default
    v = m[key]
    if not isinstance(v, str) or not v:
        raise ConfigError("expected a non-empty string", line=m.key_lines.get(key), field=key)
    return v


def _list(m, key):
    v = m.get(key)
    if v is None:
        return []
    if not isinstance(v, list):
        raise ConfigError("expected a list", line=m.key_lines.get(key), field=key)
    return v


def load_config(text):
    """Parse a configuration document into a :class:`SystemConfig`."""
    try:
        doc = yaml.load(text, Loader=_LineLoader)
    except ConfigError:
        raise
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else None
        raise ConfigError(f"syntax error: {exc.problem}", line=line) from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"syntax error: {exc}") from exc
    if doc is None:
        raise ConfigError("empty document")
    _check_fields(doc, _TOP_FIELDS, "document")

    raw_devices = _list(doc, "devices")
    if not raw_devices:
        raise ConfigError("no devices", line=doc.key_lines.get("devices"), field="devices")

    devices = []
    for rd in raw_devices:
        _check_fields(rd, _DEVICE_FIELDS, "device")
        dev_id = str(rd["id"])
        active = []
        for ra in _list(rd, "active"):
            _check_fields(ra, _ACTION_FIELDS, f"action of device '{dev_id}'")
            sender = str(ra.get("sender", dev_id))
            if sender != dev_id:
                raise ConfigError(
                    f"sender '{sender}' differs from enclosing device '{dev_id}'",
                    line=ra.key_lines.get("sender"), field="sender",
                )
            active.append(ActionSpec(
                label=_string(ra, "label"),
                sender=dev_id,
                receiver=str(ra["receiver"]),
                probability=_number(ra, "probability"),
                drain_send=_number(ra, "drain_send"),
                drain_recv=_number(ra, "drain_recv"),
                time_send=_number(ra, "time_send"),
                time_recv=_number(ra, "time_recv", 0),
            ))
        passive = tuple(str(p) for p in _list(rd, "passive"))
        devices.append(DeviceSpec(
            id=dev_id,
            battery_capacity=_number(rd, "battery_capacity"),
            active=tuple(active),
            passive=passive,
        ))

    attacker = None
    if doc.get("attacker") is not None:
        ra = doc["attacker"]
        _check_fields(ra, _ATTACKER_FIELDS, "attacker")
        actions = []
        for rx in _list(ra, "actions"):
            _check_fields(rx, _ATTACK_FIELDS, "attack action")
            actions.append(AttackActionSpec(
                label=_string(rx, "label"),
                target=str(rx["target"]),
                drain_target=_number(rx, "drain_target"),
                time_per_message=_number(rx, "time_per_message"),
                stealth_cost=_number(rx, "stealth_cost", 0),
            ))
        power = ra.get("power_level", 1)
        if isinstance(power, bool) or not isinstance(power, int):
            raise ConfigError("expected an integer", line=ra.key_lines.get("power_level"),
                              field="power_level")
        goal = ra.get("goal", "any_device_dead")
        if isinstance(goal, dict):
            if set(goal) != {"device"}:
                raise ConfigError("goal mapping must be {device: <id>}",
                                  line=ra.key_lines.get("goal"), field="goal")
            goal = f"device:{goal['device']}"
        elif not isinstance(goal, str):
            raise ConfigError("expected a goal name", line=ra.key_lines.get("goal"), field="goal")
        attacker = AttackerSpec(
            actions=tuple(actions),
            power_level=power,
            goal=goal,
            stealth_weight=_number(ra, "stealth_weight", 0),
        )

    scheduling = Scheduling()
    if doc.get("scheduling") is not None:
        rs = doc["scheduling"]
        _check_fields(rs, _SCHED_FIELDS, "scheduling")
        drf = rs.get("device_round_first", True)
        if not isinstance(drf, bool):
            raise ConfigError("expected a boolean", line=rs.key_lines.get("device_round_first"),
                              field="device_round_first")
        scheduling = Scheduling(device_round_first=drf)

    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer",
                          line=doc.key_lines.get("seed"), field="seed")

    config = SystemConfig(tuple(devices), attacker, scheduling, seed)
    dup = _duplicate_labels(config)
    if dup:
        raise ConfigError(f"duplicate action label '{dup[0]}'", field="label")
    return config


def load_config_file(path):
    with open(path, encoding="utf-8") as fh:
        return load_config(fh.read())


def _duplicate_labels(config):
    seen, dups = set(), []
    labels = [a.label for a in config.actions]
    if config.attacker is not None:
        labels += [a.label for a in config.attacker.actions]
    for lab in labels:
        if lab in seen and lab not in dups:
            dups.append(lab)
        seen.add(lab)
    return dups


# --------------------------------------------------------------------------
# Serialisation
# --------------------------------------------------------------------------


def to_document(config):
    doc = {"seed": config.rng_seed,
           "scheduling": {"device_round_first": config.scheduling.device_round_first},
           "devices": []}
    for d in config.devices:
        doc["devices"].append({
            "id": d.id,
            "battery_capacity": d.battery_capacity,
            "active": [
                {"label": a.label, "sender": a.sender, "receiver": a.receiver,
                 "probability": a.probability, "drain_send": a.drain_send,
                 "drain_recv": a.drain_recv, "time_send": a.time_send,
                 "time_recv": a.time_recv}
                for a in d.active
            ],
            "passive": list(d.passive),
        })
    if config.attacker is not None:
        at = config.attacker
        goal = at.goal if at.goal_device is None else {"device": at.goal_device}
        doc["attacker"] = {
            "power_level": at.power_level,
            "goal": goal,
            "stealth_weight": at.stealth_weight,
            "actions": [
                {"label": a.label, "target": a.target, "drain_target": a.drain_target,
                 "time_per_message": a.time_per_message, "stealth_cost": a.stealth_cost}
                for a in at.actions
            ],
        }
    return doc


def serialize(config):
    return yaml.safe_dump(to_document(config), sort_keys=False)


def config_hash(config):
    return hashlib.sha256(serialize(config).encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------


def validate(config):
    """Return the list of invariant violations (empty when the config is sound)."""
    out = []

    def bad(code, entity, msg, severity="error"):
        out.append(Violation(code, entity, msg, severity))

    if not config.devices:
        bad("NO_DEVICES", "devices", "no devices")
        return out

    ids = [d.id for d in config.devices]
    for dev_id in sorted({i for i in ids if ids.count(i) > 1}):
        bad("DUPLICATE_DEVICE", dev_id, "device id declared more than once")
    known = set(ids)

    for lab in _duplicate_labels(config):
        bad("DUPLICATE_LABEL", lab, f"action label '{lab}' is not unique")

    by_receiver = {}
    for d in config.devices:
        if not d.battery_capacity > 0:
            bad("BAD_CAPACITY", d.id, "battery_capacity must be > 0")
        total = 0.0
        for a in d.active:
            total += a.probability
            if a.receiver not in known:
                bad("UNKNOWN_RECEIVER", a.label, f"receiver '{a.receiver}' is not a device")
            if a.receiver == a.sender:
                bad("SELF_LOOP", a.label, "sender and receiver are the same device")
            if not 0 < a.probability <= 1:
                bad("BAD_PROBABILITY", a.label, "probability must lie in (0, 1]")
            if a.drain_send < 0 or a.drain_recv < 0:
                bad("NEGATIVE_DRAIN", a.label, "drains must be >= 0")
            elif not a.drain_send + a.drain_recv > 0:
                bad("ZERO_DRAIN", a.label, "combined drain must be > 0")
            if not a.time_send > 0 or a.time_recv < 0:
                bad("BAD_DURATION", a.label, "time_send must be > 0 and time_recv >= 0")
            by_receiver.setdefault(a.receiver, set()).add(a.label)
        if d.active and abs(total - 1.0) > PROB_TOL:
            bad("PROB_SUM", d.id, f"active probabilities sum to {total:.12g}, not 1")

    for d in config.devices:
        incoming = by_receiver.get(d.id, set())
        for p in d.passive:
            if p not in incoming:
                bad("PASSIVE_MISMATCH", d.id,
                    f"passive label '{p}' matches no action received by this device")
        for lab in sorted(incoming - set(d.passive)):
            bad("PASSIVE_MISSING", d.id, f"receives '{lab}' but does not list it as passive")

    at = config.attacker
    if at is not None:
        if at.power_level < 1:
            bad("BAD_POWER_LEVEL", "attacker", "power_level must be >= 1")
        if at.stealth_weight < 0:
            bad("BAD_STEALTH_WEIGHT", "attacker", "stealth_weight must be >= 0")
        if at.goal_device is not None:
            if at.goal_device not in known:
                bad("UNKNOWN_GOAL_DEVICE", "attacker", f"goal device '{at.goal_device}' unknown")
        elif at.goal not in GOALS:
            bad("BAD_GOAL", "attacker", f"unknown goal '{at.goal}'")
        for a in at.actions:
            if a.target not in known:
                bad("UNKNOWN_TARGET", a.label, f"target '{a.target}' is not a device")
            if not a.drain_target > 0:
                bad("BAD_ATTACK_DRAIN", a.label, "drain_target must be > 0")
            if not a.time_per_message > 0:
                bad("BAD_DURATION", a.label, "time_per_message must be > 0")
            if a.stealth_cost < 0:
                bad("BAD_STEALTH_COST", a.label, "stealth_cost must be >= 0")

    if not any(v.severity == "error" for v in out):
        from .semantics import enabled, enabled_attacks, initial_state

        s0 = initial_state(config)
        if not enabled(s0, config) and not enabled_attacks(s0, config):
            bad("DEAD_ON_ARRIVAL", "system", "no transition is enabled in the initial state",
                severity="warning")
    return out


def errors(violations):
    return [v for v in violations if v.severity == "error"]
