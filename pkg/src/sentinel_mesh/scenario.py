"""Scenario files: a flat, sectioned plain-text format.

Sections are ``[radio]``, ``[nodes]``, ``[keys]``, ``[adversary]`` and
``[events]``; every non-comment line inside a section is a ``key = value``
pair.  Repeated keys (``node =``, ``event =``, ``adversary =``) accumulate in
order.  Full-line comments start with ``#``.

    [radio]
    preset = free_space          # optional preset, fields below override it
    tx_power_mw = 1.0
    rx_sensitivity_mw = 5e-7

    [nodes]
    sink = base
    node = base 0 0
    node = n2 20 0 sens=1e-7     # per-node sensitivity override

    [keys]
    seed = 42
    degree = 3
    auth_mode = nonced           # or nonce_free
    temp = 2 5                   # scripted temp-key labels
    org = 6 7                    # scripted original-key labels
    group = M1 M2 M3 / M4 M5 M6 / M7 M8   # initial group tree, one subgroup per '/'
    pbox = narrow 0,4,8,12       # named compression box (comma-separated wiring)
    keycode_box = narrow         # box used for nonce-free key codes

    [adversary]
    adversary = z1 n1 n2         # id followed by the nodes it can overhear

    [events]
    event = 0 DEPLOY n1 n2
    event = 1 PROVISION n1
    event = 2 VERIFY n1 n2
    event = 3 ROTATE
    event = 3 JOIN_GROUP M9 attach=k78
    event = 4 LEAVE_GROUP M9
    event = 5 SEND_INTEREST base type,temperature,EQ;x-coordinate,20,LE
    event = 6 SEND_DATA n1 23 type,temperature,IS
    event = 7 COMPROMISE_NODE z1 n2
    event = 8 ADVERSARY_REPLAY z1 n1

Attribute lists are semicolon-separated ``name,value,OP`` triples.  The
parser enforces syntax only; referential checks (undeclared nodes, decreasing
times) are the validator's job, so one call enumerates every violation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .addressing import AttributeSet, parse_attribute
from .errors import ConfigError
from .exchange import AuthMode
from .radio import PRESETS, NodePosition, RadioParams

__all__ = [
    "KeyConfig",
    "ScenarioEvent",
    "Scenario",
    "EVENT_KINDS",
    "parse_scenario",
    "load_scenario",
    "validate",
]

EVENT_KINDS = (
    "DEPLOY",
    "PROVISION",
    "VERIFY",
    "ROTATE",
    "JOIN_GROUP",
    "LEAVE_GROUP",
    "SEND_INTEREST",
    "SEND_DATA",
    "COMPROMISE_NODE",
    "ADVERSARY_REPLAY",
)

_RADIO_FIELDS = (
    "tx_power_mw",
    "gain_tx",
    "gain_rx",
    "wavelength_m",
    "system_loss",
    "far_field_m",
    "path_loss_exponent",
    "rx_sensitivity_mw",
)


@dataclass
class KeyConfig:
    degree: int = 3
    key_bits: int = 64
    code_bits: int = 16
    nonce_bits: int = 64
    modulus: int = 2**32
    max_group_size: int = 2**16
    auth_mode: AuthMode = AuthMode.NONCED
    temp_labels: list[str] = field(default_factory=list)
    org_labels: list[str] = field(default_factory=list)
    initial_group: list | None = None  # nested shape for the starting key tree
    pboxes: dict[str, tuple[int, ...]] = field(default_factory=dict)
    keycode_box: str | None = None  # named box used for nonce-free key codes


@dataclass
class ScenarioEvent:
    time: int
    kind: str
    params: dict


@dataclass
class Scenario:
    radio: RadioParams
    positions: list[NodePosition]
    sensitivity_overrides: dict[str, float]
    sink_id: str | None
    events: list[ScenarioEvent]
    adversaries: dict[str, list[str]]
    seed: int
    keys: KeyConfig

    @property
    def node_ids(self) -> set[str]:
        return {p.node_id for p in self.positions}


def _parse_number(raw: str, context: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{context}: expected a number, got {raw!r}") from None


def _parse_int(raw: str, context: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{context}: expected an integer, got {raw!r}") from None


def _parse_attr_list(raw: str, context: str) -> AttributeSet:
    attrs = []
    for chunk in raw.split(";"):
        chunk = chunk.strip()
        if chunk:
            attrs.append(parse_attribute(chunk))
    if not attrs:
        raise ConfigError(f"{context}: empty attribute list")
    return AttributeSet(tuple(attrs))


def _parse_event(raw: str, lineno: int) -> ScenarioEvent:
    context = f"line {lineno}"
    parts = raw.split(None, 2)
    if len(parts) < 2:
        raise ConfigError(f"{context}: event needs at least '<time> <KIND>'")
    time = _parse_int(parts[0], context)
    kind = parts[1].upper()
    rest = parts[2] if len(parts) > 2 else ""
    args = rest.split()
    params: dict = {}
    if kind == "DEPLOY":
        if not args:
            raise ConfigError(f"{context}: DEPLOY needs node ids")
        params["nodes"] = args
    elif kind in ("PROVISION", "LEAVE_GROUP"):
        if len(args) != 1:
            raise ConfigError(f"{context}: {kind} needs exactly one node id")
        params["node"] = args[0]
    elif kind == "VERIFY":
        if len(args) != 2:
            raise ConfigError(f"{context}: VERIFY needs exactly two node ids")
        params["a"], params["b"] = args
    elif kind == "ROTATE":
        if args:
            raise ConfigError(f"{context}: ROTATE takes no arguments")
    elif kind == "JOIN_GROUP":
        if not args or len(args) > 2:
            raise ConfigError(f"{context}: JOIN_GROUP needs '<node> [attach=<key>]'")
        params["node"] = args[0]
        params["attach"] = None
        if len(args) == 2:
            if not args[1].startswith("attach="):
                raise ConfigError(f"{context}: unrecognized JOIN_GROUP option {args[1]!r}")
            params["attach"] = args[1].split("=", 1)[1]
    elif kind == "SEND_INTEREST":
        pieces = rest.split(None, 1)
        if len(pieces) != 2:
            raise ConfigError(f"{context}: SEND_INTEREST needs '<origin> <attributes>'")
        params["origin"] = pieces[0]
        params["attributes"] = _parse_attr_list(pieces[1], context)
    elif kind == "SEND_DATA":
        pieces = rest.split(None, 2)
        if len(pieces) != 3:
            raise ConfigError(
                f"{context}: SEND_DATA needs '<producer> <value> <attributes>'"
            )
        params["producer"] = pieces[0]
        params["value"] = _parse_int(pieces[1], context)
        params["attributes"] = _parse_attr_list(pieces[2], context)
    elif kind == "COMPROMISE_NODE":
        if len(args) != 2:
            raise ConfigError(f"{context}: COMPROMISE_NODE needs '<adversary> <node>'")
        params["adversary"], params["node"] = args
    elif kind == "ADVERSARY_REPLAY":
        if len(args) != 2:
            raise ConfigError(f"{context}: ADVERSARY_REPLAY needs '<adversary> <victim>'")
        params["adversary"], params["victim"] = args
    else:
        raise ConfigError(f"{context}: unknown event kind {kind!r}")
    return ScenarioEvent(time=time, kind=kind, params=params)


def _parse_group_shape(raw: str) -> list:
    subgroups = [part.split() for part in raw.split("/")]
    if any(not part for part in subgroups):
        raise ConfigError(f"empty subgroup in group shape {raw!r}")
    if len(subgroups) == 1:
        return list(subgroups[0])  # flat group
    return [part[0] if len(part) == 1 else part for part in subgroups]


def parse_scenario(text: str) -> Scenario:
    """Parse scenario text; raises ConfigError on the first syntax error."""
    radio_fields: dict[str, float] = {}
    radio_preset: str | None = None
    positions: list[NodePosition] = []
    overrides: dict[str, float] = {}
    sink_id: str | None = None
    events: list[ScenarioEvent] = []
    adversaries: dict[str, list[str]] = {}
    seed = 0
    keys = KeyConfig()

    section = None
    seen_ids = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in ("radio", "nodes", "keys", "adversary", "events"):
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if section is None:
            raise ConfigError(f"line {lineno}: content before the first section header")
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        context = f"line {lineno}"

        if section == "radio":
            if key == "preset":
                if value not in PRESETS:
                    raise ConfigError(
                        f"{context}: unknown preset {value!r}; options {sorted(PRESETS)}"
                    )
                radio_preset = value
            elif key in _RADIO_FIELDS:
                radio_fields[key] = _parse_number(value, context)
            else:
                raise ConfigError(f"{context}: unknown radio field {key!r}")
        elif section == "nodes":
            if key == "sink":
                sink_id = value
            elif key == "node":
                parts = value.split()
                if len(parts) not in (3, 4):
                    raise ConfigError(
                        f"{context}: node needs '<id> <x> <y> [sens=<mw>]'"
                    )
                node_id = parts[0]
                if node_id in seen_ids:
                    raise ConfigError(f"{context}: duplicate node id {node_id!r}")
                seen_ids.add(node_id)
                x = _parse_number(parts[1], context)
                y = _parse_number(parts[2], context)
                positions.append(NodePosition(node_id, x, y))
                if len(parts) == 4:
                    if not parts[3].startswith("sens="):
                        raise ConfigError(f"{context}: unrecognized option {parts[3]!r}")
                    overrides[node_id] = _parse_number(parts[3][5:], context)
            else:
                raise ConfigError(f"{context}: unknown nodes field {key!r}")
        elif section == "keys":
            if key == "seed":
                seed = _parse_int(value, context)
            elif key in ("degree", "key_bits", "code_bits", "nonce_bits",
                         "modulus", "max_group_size"):
                setattr(keys, key, _parse_int(value, context))
            elif key == "auth_mode":
                try:
                    keys.auth_mode = AuthMode(value)
                except ValueError:
                    raise ConfigError(
                        f"{context}: auth_mode must be 'nonced' or 'nonce_free'"
                    ) from None
            elif key == "temp":
                keys.temp_labels = value.split()
            elif key == "org":
                keys.org_labels = value.split()
            elif key == "group":
                keys.initial_group = _parse_group_shape(value)
            elif key == "pbox":
                parts = value.split()
                if len(parts) != 2:
                    raise ConfigError(
                        f"{context}: pbox needs '<name> <comma-separated wiring>'"
                    )
                name, wiring_text = parts
                try:
                    wiring = tuple(int(i) for i in wiring_text.split(","))
                except ValueError:
                    raise ConfigError(
                        f"{context}: pbox wiring must be comma-separated integers"
                    ) from None
                if name in keys.pboxes:
                    raise ConfigError(f"{context}: duplicate pbox name {name!r}")
                keys.pboxes[name] = wiring
            elif key == "keycode_box":
                keys.keycode_box = value
            else:
                raise ConfigError(f"{context}: unknown keys field {key!r}")
        elif section == "adversary":
            if key != "adversary":
                raise ConfigError(f"{context}: unknown adversary field {key!r}")
            parts = value.split()
            if len(parts) < 2:
                raise ConfigError(
                    f"{context}: adversary needs '<id> <node> [<node> ...]'"
                )
            if parts[0] in adversaries:
                raise ConfigError(f"{context}: duplicate adversary id {parts[0]!r}")
            adversaries[parts[0]] = parts[1:]
        elif section == "events":
            if key != "event":
                raise ConfigError(f"{context}: unknown events field {key!r}")
            events.append(_parse_event(value, lineno))

    base = PRESETS[radio_preset]() if radio_preset else RadioParams()
    radio = RadioParams(**{**base.__dict__, **radio_fields})
    return Scenario(
        radio=radio,
        positions=positions,
        sensitivity_overrides=overrides,
        sink_id=sink_id,
        events=events,
        adversaries=adversaries,
        seed=seed,
        keys=keys,
    )


def load_scenario(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_scenario(handle.read())


def _group_members(shape) -> list[str]:
    members = []
    stack = [shape]
    while stack:
        item = stack.pop()
        if isinstance(item, str):
            members.append(item)
        else:
            stack.extend(item)
    return members


def validate(scenario: Scenario) -> list[str]:
    """All semantic violations, empty when the scenario is runnable."""
    violations: list[str] = []
    node_ids = scenario.node_ids

    if not scenario.positions:
        violations.append("no nodes declared")
    if scenario.sink_id is None:
        violations.append("no sink declared")
    elif scenario.sink_id not in node_ids:
        violations.append(f"sink {scenario.sink_id!r} is not a declared node")

    for adversary, adjacent in scenario.adversaries.items():
        for node in adjacent:
            if node not in node_ids:
                violations.append(
                    f"adversary {adversary!r} adjacent to undeclared node {node!r}"
                )

    cfg = scenario.keys
    if cfg.keycode_box is not None and cfg.keycode_box not in cfg.pboxes:
        violations.append(
            f"keycode_box {cfg.keycode_box!r} references no defined pbox"
        )
    for name, wiring in cfg.pboxes.items():
        if not wiring or len(wiring) >= cfg.key_bits:
            violations.append(
                f"pbox {name!r} needs 0 < outputs < key_bits ({cfg.key_bits})"
            )
        for entry in wiring:
            if not 0 <= entry < cfg.key_bits:
                violations.append(
                    f"pbox {name!r} wiring entry {entry} outside 0..{cfg.key_bits - 1}"
                )

    if scenario.keys.initial_group is not None:
        members = _group_members(scenario.keys.initial_group)
        if len(set(members)) != len(members):
            violations.append("initial group contains duplicate members")
        for member in members:
            if member not in node_ids:
                violations.append(f"initial group member {member!r} is not declared")

    last_time = None
    for index, event in enumerate(scenario.events):
        tag = f"event {index} (t={event.time} {event.kind})"
        if last_time is not None and event.time < last_time:
            violations.append(
                f"{tag}: time {event.time} decreases from previous tick {last_time}"
            )
        last_time = event.time

        def check_node(node, role="node"):
            if node not in node_ids:
                violations.append(f"{tag}: undeclared {role} {node!r}")

        if event.kind == "DEPLOY":
            for node in event.params["nodes"]:
                check_node(node)
        elif event.kind in ("PROVISION", "LEAVE_GROUP", "JOIN_GROUP"):
            check_node(event.params["node"])
        elif event.kind == "VERIFY":
            check_node(event.params["a"])
            check_node(event.params["b"])
        elif event.kind == "SEND_INTEREST":
            check_node(event.params["origin"], "origin")
        elif event.kind == "SEND_DATA":
            check_node(event.params["producer"], "producer")
        elif event.kind == "COMPROMISE_NODE":
            check_node(event.params["node"])
            if event.params["adversary"] not in scenario.adversaries:
                violations.append(
                    f"{tag}: undeclared adversary {event.params['adversary']!r}"
                )
        elif event.kind == "ADVERSARY_REPLAY":
            check_node(event.params["victim"], "victim")
            if event.params["adversary"] not in scenario.adversaries:
                violations.append(
                    f"{tag}: undeclared adversary {event.params['adversary']!r}"
                )
    return violations
