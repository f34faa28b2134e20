"""Deterministic event-driven harness binding radio, addressing, keys and data.

A run builds the topology, assigns addresses in declaration order, then walks
the event script in time order.  Interests flood once over directed links;
data messages are masked readings routed hop-by-hop toward the sink along
minimum-hop paths (ties to the smallest-address, then smallest-id next hop)
and delivered only where they match a disseminated interest.  Every data
message ends in exactly one disposition: delivered, dropped for lack of a
route, dropped unmatched, or intercepted at a compromised forwarder.

Adversaries passively record every frame to or from a node they sit next to
(or control), and their take is scored at the end by the key-closure oracle:
a recorded reading counts as compromised only when the producing key is
derivable from what the adversary actually captured.

All randomness flows from the scenario seed through per-subsystem streams, so
a rerun reproduces the report byte for byte; mid-run protocol violations are
recorded in the report instead of raised.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field

from .addressing import AddressTable, address_frequency_histogram, assign_address, match
from .errors import ConfigError, DomainError, SentinelMeshError
from .exchange import (
    AuthMode,
    AuthParams,
    KeySchedule,
    PhParams,
    SinkState,
    deploy,
    decrypt_reading,
    encrypt_reading,
    impersonate,
    provision,
    rotate_keys,
    verify_pair,
)
from .keygraph import KeyGraph, MemberView, build_explicit, build_group, join, leave, member_closure, member_sort_key
from .radio import Topology, build_topology, mw_to_dbm
from .scenario import Scenario, load_scenario, validate

__all__ = ["RunReport", "EventRecord", "route", "run", "run_file"]


def _derive_seed(seed: int, label: str) -> int:
    digest = hashlib.blake2b(f"{seed}:{label}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def route(topology: Topology, src: str, dst: str,
          addresses: AddressTable | None = None) -> list[str] | None:
    """Minimum-hop directed path from src to dst, or None when unreachable.

    Among equal-length choices the next hop with the smallest address (then
    smallest id) wins, so routes are reproducible.
    """
    for node in (src, dst):
        if node not in topology.positions:
            raise DomainError(f"unknown node {node!r}")
    if src == dst:
        return [src]
    # Hop counts toward dst over reversed links.
    dist = {dst: 0}
    frontier = [dst]
    while frontier:
        next_frontier = []
        for node in frontier:
            for pred in topology.in_neighbors(node):
                if pred not in dist:
                    dist[pred] = dist[node] + 1
                    next_frontier.append(pred)
        frontier = sorted(next_frontier)
    if src not in dist:
        return None

    def hop_rank(node: str):
        addr = addresses.assignments.get(node) if addresses else None
        return (addr if addr is not None else float("inf"), node)

    path = [src]
    current = src
    while current != dst:
        candidates = [
            n for n in topology.out_neighbors(current)
            if dist.get(n) == dist[current] - 1
        ]
        current = min(candidates, key=hop_rank)
        path.append(current)
    return path


@dataclass
class EventRecord:
    index: int
    time: int
    kind: str
    detail: str
    status: str
    trace_first: int
    trace_last: int


@dataclass
class RunReport:
    seed: int
    sink_id: str
    node_count: int
    link_count: int
    addresses: dict[str, int]
    address_histogram: dict[int, float]
    messages_sent: int = 0
    delivered: int = 0
    dropped_no_route: int = 0
    dropped_no_match: int = 0
    intercepted: int = 0
    delivery_ratio: float = 0.0
    rekey_messages: list = field(default_factory=list)  # (index, time, action, count)
    compromised_reads: int = 0
    replays: list = field(default_factory=list)  # (time, adversary, victim, outcome)
    protocol_errors: list[str] = field(default_factory=list)
    events: list[EventRecord] = field(default_factory=list)
    trace: list[str] = field(default_factory=list)
    link_powers: list = field(default_factory=list)  # (sender, receiver, mw)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "sink": self.sink_id,
            "nodes": self.node_count,
            "links": self.link_count,
            "addresses": dict(sorted(self.addresses.items())),
            "address_histogram": {
                str(addr): f"{freq:.6f}"
                for addr, freq in sorted(self.address_histogram.items())
            },
            "counters": {
                "messages_sent": self.messages_sent,
                "delivered": self.delivered,
                "dropped_no_route": self.dropped_no_route,
                "dropped_no_match": self.dropped_no_match,
                "intercepted": self.intercepted,
            },
            "delivery_ratio": f"{self.delivery_ratio:.6f}",
            "rekey_messages": [
                {"event": i, "time": t, "action": action, "count": count}
                for i, t, action, count in self.rekey_messages
            ],
            "compromised_reads": self.compromised_reads,
            "replays": [
                {"time": t, "adversary": z, "victim": v, "outcome": outcome}
                for t, z, v, outcome in self.replays
            ],
            "protocol_errors": list(self.protocol_errors),
            "events": [
                {
                    "index": e.index,
                    "time": e.time,
                    "kind": e.kind,
                    "detail": e.detail,
                    "status": e.status,
                    "trace_lines": [e.trace_first, e.trace_last],
                }
                for e in self.events
            ],
            "trace": list(self.trace),
            "link_powers": [
                {"from": a, "to": b, "mw": f"{mw:.5e}", "dbm": f"{mw_to_dbm(mw):.3f}"}
                for a, b, mw in self.link_powers
            ],
        }

    def render_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def render_text(self) -> str:
        lines = [
            "sentinel-mesh run report",
            f"seed: {self.seed}",
            f"sink: {self.sink_id}",
            f"nodes: {self.node_count}  links: {self.link_count}",
            "addresses: "
            + " ".join(f"{n}={a}" for n, a in sorted(self.addresses.items())),
            "address histogram: "
            + " ".join(
                f"{addr}:{freq:.6f}"
                for addr, freq in sorted(self.address_histogram.items())
            ),
            f"messages sent: {self.messages_sent}",
            f"  delivered: {self.delivered}",
            f"  dropped (no route): {self.dropped_no_route}",
            f"  dropped (no match): {self.dropped_no_match}",
            f"  intercepted: {self.intercepted}",
            f"delivery ratio: {self.delivery_ratio:.6f}",
            f"compromised reads: {self.compromised_reads}",
        ]
        lines.append("rekey messages:")
        for i, t, action, count in self.rekey_messages:
            lines.append(f"  e{i} t={t} {action}: {count}")
        lines.append("replay attempts:")
        for t, z, v, outcome in self.replays:
            lines.append(f"  t={t} {z} impersonates {v}: {outcome}")
        lines.append("protocol errors:")
        for err in self.protocol_errors:
            lines.append(f"  {err}")
        lines.append("events:")
        for e in self.events:
            span = (
                f"trace {e.trace_first}..{e.trace_last}"
                if e.trace_first >= 0
                else "no trace"
            )
            lines.append(f"  e{e.index} t={e.time} {e.kind} {e.detail} [{e.status}] {span}")
        lines.append("links (received power):")
        for a, b, mw in self.link_powers:
            lines.append(f"  {a} -> {b}  {mw:.5e} mW ({mw_to_dbm(mw):.3f} dBm)")
        return "\n".join(lines) + "\n"

    def render_csv(self) -> str:
        rows = [
            ("seed", self.seed),
            ("sink", self.sink_id),
            ("nodes", self.node_count),
            ("links", self.link_count),
            ("messages_sent", self.messages_sent),
            ("delivered", self.delivered),
            ("dropped_no_route", self.dropped_no_route),
            ("dropped_no_match", self.dropped_no_match),
            ("intercepted", self.intercepted),
            ("delivery_ratio", f"{self.delivery_ratio:.6f}"),
            ("compromised_reads", self.compromised_reads),
        ]
        for node, addr in sorted(self.addresses.items()):
            rows.append((f"address.{node}", addr))
        for addr, freq in sorted(self.address_histogram.items()):
            rows.append((f"address_histogram.{addr}", f"{freq:.6f}"))
        for i, t, action, count in self.rekey_messages:
            rows.append((f"rekey.e{i}", count))
        for t, z, v, outcome in self.replays:
            rows.append((f"replay.t{t}.{z}.{v}", outcome))
        for idx, err in enumerate(self.protocol_errors):
            rows.append((f"protocol_error.{idx}", err))
        return "\n".join(f"{key},{value}" for key, value in rows) + "\n"


class _AdversaryState:
    def __init__(self, adversary_id: str, adjacent: list[str]):
        self.id = adversary_id
        self.adjacent = set(adjacent)
        self.controlled: set[str] = set()
        self.initial_keys: set[tuple[str, int]] = set()
        self.observed_messages: list = []
        self.observed_auths: list = []
        self.observed_readings: set[int] = set()

    @property
    def taps(self) -> set[str]:
        return self.adjacent | self.controlled


class _Engine:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        cfg = scenario.keys
        self.topology = build_topology(
            scenario.radio, scenario.positions, scenario.sensitivity_overrides
        )
        self.addresses = AddressTable.empty()
        for position in scenario.positions:  # declaration order
            assign_address(position.node_id, self.topology, self.addresses)

        self.auth = AuthParams(
            key_bits=cfg.key_bits, nonce_bits=cfg.nonce_bits, code_bits=cfg.code_bits
        )
        self.ph = PhParams(modulus=cfg.modulus, max_group_size=cfg.max_group_size)
        schedule = KeySchedule(
            key_bits=cfg.key_bits,
            seed=_derive_seed(scenario.seed, "schedule"),
            temp_labels=cfg.temp_labels,
            org_labels=cfg.org_labels,
        )
        self.sink = SinkState.create(schedule=schedule, auth=self.auth, ph=self.ph)
        self.sink_id = scenario.sink_id
        self.group: KeyGraph | None = None
        self.group_seed = _derive_seed(scenario.seed, "keygraph")
        if cfg.initial_group is not None:
            if all(isinstance(m, str) for m in cfg.initial_group):
                self.group = build_group(
                    list(cfg.initial_group), degree=cfg.degree,
                    key_bits=cfg.key_bits, seed=self.group_seed,
                )
            else:
                self.group = build_explicit(
                    cfg.initial_group, degree=cfg.degree,
                    key_bits=cfg.key_bits, seed=self.group_seed,
                )
        self.keycode_box = None
        if cfg.keycode_box is not None:
            self.keycode_box = CompressionPBox(
                cfg.pboxes[cfg.keycode_box], n_inputs=cfg.key_bits
            )
        self.replay_rng = random.Random(_derive_seed(scenario.seed, "replay"))
        self.adversaries = {
            z: _AdversaryState(z, adjacent)
            for z, adjacent in scenario.adversaries.items()
        }
        self.compromised: dict[str, _AdversaryState] = {}
        self.interests: list[tuple[str, object, set[str]]] = []
        self.reading_keys: dict[int, tuple[str, int]] = {}  # msg id -> key ident
        self.next_msg_id = 0
        self.report = RunReport(
            seed=scenario.seed,
            sink_id=self.sink_id,
            node_count=len(scenario.positions),
            link_count=len(self.topology.links),
            addresses=dict(self.addresses.assignments),
            address_histogram=address_frequency_histogram([self.addresses]),
            link_powers=[
                (a, b, mw) for (a, b), mw in sorted(self.topology.links.items())
            ],
        )

    # -- helpers ---------------------------------------------------------

    def _trace(self, sender: str, to: str, kind: str, payload: str, key_label: str):
        epoch = self.sink.rotation_epoch
        self.report.trace.append(f"{epoch} {sender} -> {to} : {kind} {{{payload}}} {key_label}")

    @staticmethod
    def _key_label(key) -> str:
        return key.key_id if key.version == 0 else f"{key.key_id}.v{key.version}"

    @staticmethod
    def _recipients_label(recipients) -> str:
        members = sorted(recipients, key=member_sort_key)
        return members[0] if len(members) == 1 else "{" + ",".join(members) + "}"

    def _frame(self, sender: str, receiver: str, *, message=None, transcript=None,
               reading_id: int | None = None):
        for z in self.adversaries.values():
            if sender in z.taps or receiver in z.taps:
                if message is not None and message not in z.observed_messages:
                    z.observed_messages.append(message)
                if transcript is not None and transcript not in z.observed_auths:
                    z.observed_auths.append(transcript)
                if reading_id is not None:
                    z.observed_readings.add(reading_id)

    def _deliver_control(self, message, kind: str):
        """Controller messages go out as one frame per recipient."""
        for recipient in sorted(message.recipients, key=member_sort_key):
            self._frame(self.sink_id, recipient, message=message)
        self._trace(
            self.sink_id,
            self._recipients_label(message.recipients),
            kind,
            ",".join(self._key_label(k) for k in message.payload),
            self._key_label(message.encrypting_key),
        )

    @staticmethod
    def _bits_to_hex(bits: str) -> str:
        return format(int(bits, 2), f"0{max(1, len(bits) // 4)}x")

    # -- event handlers -----------------------------------------------------

    def _do_deploy(self, event) -> str:
        deploy(self.sink, event.params["nodes"])
        for node in event.params["nodes"]:
            # Temp keys are installed out of band, before the radio exists.
            self._trace(
                self.sink_id, node, "deploy",
                self._key_label(self.sink.registry[node].temp_key), "-",
            )
        return f"nodes={','.join(event.params['nodes'])}"

    def _do_provision(self, event) -> str:
        node = event.params["node"]
        _, message = provision(self.sink, node)
        self._frame(self.sink_id, node, message=message)
        self._trace(
            self.sink_id, node, "provision",
            ",".join(self._key_label(k) for k in message.payload),
            self._key_label(message.encrypting_key),
        )
        return node

    def _do_verify(self, event) -> str:
        a, b = event.params["a"], event.params["b"]
        before = len(self.sink.auth_log)
        ok = verify_pair(
            self.sink, a, b,
            mode=self.scenario.keys.auth_mode,
            keycode_box=self.keycode_box,
        )
        for node, transcript in zip((a, b), self.sink.auth_log[before:]):
            if transcript.challenge_a is not None:
                self._trace(
                    self.sink_id, node, "challenge",
                    self._bits_to_hex(transcript.challenge_a), "-",
                )
            self._trace(
                node, self.sink_id, "response",
                self._bits_to_hex(transcript.response_b),
                self._key_label(self.sink.registry[node].original_key),
            )
            self._frame(self.sink_id, node, transcript=transcript)
        return f"{a},{b}:{'ok' if ok else 'fail'}"

    def _do_rotate(self, event) -> str:
        before = len(self.sink.message_log)
        rotate_keys(self.sink)
        fresh = self.sink.message_log[before:]
        for message in fresh:
            self._deliver_control(message, "rotate")
        return f"messages={len(fresh)}"

    def _do_join_group(self, event) -> str:
        member = event.params["node"]
        if self.group is None:
            self.group = build_group(
                [member],
                degree=self.scenario.keys.degree,
                key_bits=self.scenario.keys.key_bits,
                seed=self.group_seed,
            )
            messages = []
            leaf, root = self.group.keyset_keys(member)
            self._trace(self.sink_id, member, "group-create",
                        self._key_label(root), self._key_label(leaf))
        else:
            self.group, messages = join(self.group, member, event.params.get("attach"))
            for message in messages:
                self._deliver_control(message, "rekey")
        self.report.rekey_messages.append(
            (event_index(self.report), event.time, f"JOIN_GROUP {member}", len(messages))
        )
        return member

    def _do_leave_group(self, event) -> str:
        member = event.params["node"]
        if self.group is None:
            raise DomainError("no group exists yet")
        self.group, messages = leave(self.group, member)
        for message in messages:
            self._deliver_control(message, "rekey")
        self.report.rekey_messages.append(
            (event_index(self.report), event.time, f"LEAVE_GROUP {member}", len(messages))
        )
        return member

    def _do_send_interest(self, event) -> str:
        origin = event.params["origin"]
        attrs = event.params["attributes"]
        reached = {origin}
        frontier = [origin]
        while frontier:
            next_frontier = []
            for node in sorted(frontier):
                for neighbor in self.topology.out_neighbors(node):
                    if neighbor not in reached:
                        reached.add(neighbor)
                        next_frontier.append(neighbor)
            frontier = next_frontier
        self.interests.append((origin, attrs, reached))
        compact = attrs.serialize().replace("\n", ";")
        self._trace(origin, "*", "interest", compact, "-")
        return f"{origin} reaches {len(reached)} nodes"

    def _do_send_data(self, event) -> str:
        producer = event.params["producer"]
        value = event.params["value"]
        attrs = event.params["attributes"]
        identity = self.sink.registry.get(producer)
        if identity is None or identity.original_key is None:
            raise DomainError(f"producer {producer!r} has no provisioned key")
        self.report.messages_sent += 1
        compact = attrs.serialize().replace("\n", ";")
        msg_id = self.next_msg_id
        self.next_msg_id += 1

        matched = any(
            producer in reached and match(interest_attrs, attrs)
            for _, interest_attrs, reached in self.interests
        )
        if not matched:
            self.report.dropped_no_match += 1
            self._trace(producer, "-", "data-nomatch", compact, "-")
            return f"{producer} v={value}: no-match"

        key = identity.original_key
        reading = encrypt_reading(
            producer, value, key, self.sink.rotation_epoch, self.ph
        )
        self.reading_keys[msg_id] = key.ident
        path = route(self.topology, producer, self.sink_id, self.addresses)
        if path is None:
            self.report.dropped_no_route += 1
            self._trace(producer, "-", "data-noroute", f"ct={reading.ciphertext}",
                        self._key_label(key))
            return f"{producer} v={value}: no-route"

        for hop_from, hop_to in zip(path, path[1:]):
            self._frame(hop_from, hop_to, reading_id=msg_id)
            if hop_to != self.sink_id and hop_to in self.compromised:
                captor = self.compromised[hop_to]
                captor.observed_readings.add(msg_id)
                self.report.intercepted += 1
                self._trace(producer, hop_to, "data-intercept",
                            f"ct={reading.ciphertext}", self._key_label(key))
                return f"{producer} v={value}: intercepted at {hop_to}"

        plain = decrypt_reading(
            reading, self.sink.key_history[producer][reading.epoch], self.ph
        )
        self.report.delivered += 1
        self._trace(producer, self.sink_id, "data",
                    f"ct={reading.ciphertext}", self._key_label(key))
        return f"{producer} v={value}: delivered ({plain})"

    def _do_compromise(self, event) -> str:
        adversary = self.adversaries[event.params["adversary"]]
        node = event.params["node"]
        if node == self.sink_id:
            raise DomainError("the sink is the trust anchor and cannot be compromised")
        adversary.controlled.add(node)
        self.compromised[node] = adversary
        captured = 0
        identity = self.sink.registry.get(node)
        if identity is not None:
            adversary.initial_keys.add(identity.temp_key.ident)
            captured += 1
            if identity.original_key is not None:
                adversary.initial_keys.add(identity.original_key.ident)
                captured += 1
        if self.group is not None and node in self.group.members:
            for key in self.group.keyset_keys(node):
                adversary.initial_keys.add(key.ident)
                captured += 1
        self._trace(adversary.id, node, "compromise", f"keys={captured}", "-")
        return f"{adversary.id} owns {node} ({captured} keys)"

    def _do_replay(self, event) -> str:
        adversary = self.adversaries[event.params["adversary"]]
        victim = event.params["victim"]
        identity = self.sink.registry.get(victim)
        if identity is None or identity.original_key is None:
            raise DomainError(f"victim {victim!r} has no provisioned key to forge")
        recorded = [
            t for t in adversary.observed_auths
            if victim in (t.initiator, t.responder)
        ]
        ok = impersonate(
            adversary.id, victim, recorded,
            true_key=identity.original_key,
            mode=self.scenario.keys.auth_mode,
            params=self.auth,
            rng=self.replay_rng,
        )
        outcome = "success" if ok else "failure"
        self.report.replays.append((event.time, adversary.id, victim, outcome))
        self._trace(adversary.id, self.sink_id, "replay", victim, "-")
        return f"{adversary.id} as {victim}: {outcome}"

    # -- main loop ---------------------------------------------------------

    def execute(self) -> RunReport:
        handlers = {
            "DEPLOY": self._do_deploy,
            "PROVISION": self._do_provision,
            "VERIFY": self._do_verify,
            "ROTATE": self._do_rotate,
            "JOIN_GROUP": self._do_join_group,
            "LEAVE_GROUP": self._do_leave_group,
            "SEND_INTEREST": self._do_send_interest,
            "SEND_DATA": self._do_send_data,
            "COMPROMISE_NODE": self._do_compromise,
            "ADVERSARY_REPLAY": self._do_replay,
        }
        for index, event in enumerate(self.scenario.events):
            first_line = len(self.report.trace)
            try:
                detail = handlers[event.kind](event)
                status = "ok"
            except SentinelMeshError as exc:
                detail = "-"
                status = "error"
                self.report.protocol_errors.append(
                    f"event {index} t={event.time} {event.kind}: {exc}"
                )
            last_line = len(self.report.trace) - 1
            self.report.events.append(
                EventRecord(
                    index=index,
                    time=event.time,
                    kind=event.kind,
                    detail=detail,
                    status=status,
                    trace_first=first_line if last_line >= first_line else -1,
                    trace_last=last_line,
                )
            )
        self._score_adversaries()
        matched = self.report.delivered + self.report.dropped_no_route + self.report.intercepted
        self.report.delivery_ratio = (
            self.report.delivered / matched if matched else 0.0
        )
        return self.report

    def _score_adversaries(self):
        readable: set[int] = set()
        for z in sorted(self.adversaries):
            adversary = self.adversaries[z]
            view = MemberView(z, set(adversary.initial_keys), adversary.observed_messages)
            closure = member_closure(view)
            for msg_id in adversary.observed_readings:
                if self.reading_keys.get(msg_id) in closure:
                    readable.add(msg_id)
        self.report.compromised_reads = len(readable)


def event_index(report: RunReport) -> int:
    return len(report.events)


def run(scenario: Scenario) -> RunReport:
    """Execute a validated scenario; deterministic in (scenario, seed)."""
    violations = validate(scenario)
    if violations:
        raise ConfigError("scenario invalid: " + "; ".join(violations))
    return _Engine(scenario).execute()


def run_file(path: str) -> RunReport:
    return run(load_scenario(path))
