"""Acceptance suite: one test per shipping criterion, each printing a verdict.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines.  Every test pins its stated runtime budget and tolerance.
"""

import random
import time
from pathlib import Path

import pytest
from conftest import decryption_closure

from sentinel_mesh.addressing import (
    AddressTable,
    Attribute,
    AttributeSet,
    address_frequency_histogram,
    assign_address,
    conflict_neighborhood,
    eval_operator,
    match,
)
from sentinel_mesh.exchange import (
    AuthMode,
    KeySchedule,
    PhParams,
    SinkState,
    aggregate,
    deploy,
    encrypt_reading,
    impersonate,
    mutual_authenticate,
    provision,
    sink_decrypt_sum,
)
from sentinel_mesh.keygraph import (
    Key,
    MemberView,
    build_explicit,
    build_group,
    format_rekey_message,
    join,
    leave,
    member_closure,
)
from sentinel_mesh.pbox import CompressionPBox, apply_compression, enumerate_straight
from sentinel_mesh.radio import (
    RadioParams,
    friis_received_power,
    log_distance_received_power,
    ook_demodulate,
    ook_modulate,
)
from sentinel_mesh.radio import NodePosition, build_topology
from sentinel_mesh.sim import run_file

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

PAPER_SHAPE = [["M1", "M2", "M3"], ["M4", "M5", "M6"], ["M7", "M8"]]

GOLDEN_JOIN = [
    "C -> {M1,M2,M3,M4,M5,M6} : {k1-9} k1-8",
    "C -> {M7,M8} : {k1-9,k789} k78",
    "C -> M9 : {k1-9,k789} k9",
]
GOLDEN_LEAVE = [
    "C -> {M1,M2,M3} : {k1-8} k123",
    "C -> {M4,M5,M6} : {k1-8} k456",
    "C -> M7 : {k1-8,k78} k7",
    "C -> M8 : {k1-8,k78} k8",
]


class budget:
    """Context manager asserting the criterion's runtime bound."""

    def __init__(self, seconds):
        self.limit = seconds

    def __enter__(self):
        self.start = time.monotonic()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.monotonic() - self.start
        if exc[0] is None:
            assert self.elapsed < self.limit, (
                f"runtime {self.elapsed:.2f}s exceeds budget {self.limit}s"
            )
        return False


def verdict(number, description, timer):
    print(f"\nACCEPTANCE {number} PASS ({timer.elapsed:.2f}s): {description}")


def test_criterion_1_golden_join():
    with budget(1.0) as timer:
        graph = build_explicit(PAPER_SHAPE)
        _, messages = join(graph, "M9", attach_under="k78")
        assert len(messages) == 3
        lines = [format_rekey_message(m) for m in messages]
        diff = [pair for pair in zip(lines, GOLDEN_JOIN) if pair[0] != pair[1]]
        assert diff == []
        assert lines == GOLDEN_JOIN
    verdict(1, "join emits the exact 3-message batch (recipients, payloads, keys)", timer)


def test_criterion_2_golden_leave():
    with budget(1.0) as timer:
        graph = build_explicit(PAPER_SHAPE)
        graph, _ = join(graph, "M9", attach_under="k78")
        _, messages = leave(graph, "M9")
        assert len(messages) == 4
        lines = [format_rekey_message(m) for m in messages]
        diff = [pair for pair in zip(lines, GOLDEN_LEAVE) if pair[0] != pair[1]]
        assert diff == []
        assert lines == GOLDEN_LEAVE
    verdict(2, "leave emits the exact 4-message batch (recipients, payloads, keys)", timer)


def test_criterion_3_secrecy_closures_random_scripts():
    rng = random.Random(1337)
    names = [f"M{i}" for i in range(1, 33)]
    with budget(30.0) as timer:
        for trial in range(200):
            initial = rng.sample(names, rng.randint(2, 8))
            graph = build_group(initial, degree=3, seed=trial)
            present = set(initial)
            absent = [n for n in names if n not in present]
            existing = {key.ident for key in graph.keys}
            timeline = []  # (created_idents, messages)
            leavers = []   # (member, held keys, event index)
            joiners = []   # (member, leaf key, event index, idents existing before)
            for _ in range(rng.randint(1, 20)):
                do_join = absent and (len(present) < 3 or rng.random() < 0.5)
                if do_join:
                    member = absent.pop(rng.randrange(len(absent)))
                    before = set(existing)
                    graph, messages = join(graph, member)
                    present.add(member)
                    leaf = graph.keyset_keys(member)[0]
                    created = {k.ident for m in messages for k in m.payload}
                    created.add(leaf.ident)
                    joiners.append((member, leaf, len(timeline), before))
                else:
                    member = rng.choice(sorted(present))
                    held = graph.keyset_keys(member)
                    graph, messages = leave(graph, member)
                    present.discard(member)
                    absent.append(member)
                    created = {k.ident for m in messages for k in m.payload}
                    leavers.append((member, held, len(timeline)))
                existing |= created
                timeline.append((created, messages))

            oracle_cache = {}
            for member, held, when in leavers:
                post_messages = [m for _, msgs in timeline[when:] for m in msgs]
                post_created = set().union(*(c for c, _ in timeline[when:]))
                view = MemberView(member, {k.ident for k in held}, post_messages)
                closure = member_closure(view)
                assert not closure & post_created, (trial, member)
                assert closure == decryption_closure(held, post_messages, oracle_cache)

            for member, leaf, when, before in joiners:
                post_messages = [m for _, msgs in timeline[when:] for m in msgs]
                view = MemberView(member, {leaf.ident}, post_messages)
                closure = member_closure(view)
                assert not closure & before, (trial, member)
                assert closure == decryption_closure([leaf], post_messages, oracle_cache)
    verdict(3, "200 random scripts: departed/joined closures exclude new/old versions", timer)


def test_criterion_4_matching():
    sensor = AttributeSet(
        (
            Attribute("type", "IS", "temperature"),
            Attribute("x-coordinate", "IS", 10),
            Attribute("y-coordinate", "IS", 10),
        )
    )
    interest = AttributeSet(
        (
            Attribute("type", "EQ", "temperature"),
            Attribute("threshold-from-below", "IS", 20),
            Attribute("x-coordinate", "LE", 20),
            Attribute("x-coordinate", "GE", 0),
            Attribute("y-coordinate", "LE", 20),
            Attribute("y-coordinate", "GE", 0),
            Attribute("interval", "IS", 0.05),
            Attribute("duration", "IS", 10),
            Attribute("class", "IS", "interest"),
        )
    )
    pairs = [(a, f) for a in (-1, 0, 1) for f in (-1, 0, 1)]
    hand_table = {
        "EQ": [a == f for a, f in pairs],
        "NE": [a != f for a, f in pairs],
        "LT": [a < f for a, f in pairs],
        "GT": [a > f for a, f in pairs],
        "LE": [a <= f for a, f in pairs],
        "GE": [a >= f for a, f in pairs],
    }
    with budget(5.0) as timer:
        assert match(interest, sensor) is True
        for op, expected in hand_table.items():
            got = [eval_operator(op, a, f) for a, f in pairs]
            assert got == expected, op

        rng = random.Random(2718)
        names = ["t", "x", "y"]
        for _ in range(1000):
            formals = tuple(
                Attribute(rng.choice(names), rng.choice(["EQ", "NE", "LT", "GT", "LE", "GE"]),
                          rng.randint(-4, 4))
                for _ in range(rng.randint(0, 4))
            )
            data = AttributeSet(
                tuple(
                    Attribute(rng.choice(names), "IS", rng.randint(-4, 4))
                    for _ in range(rng.randint(0, 4))
                )
            )
            narrower = AttributeSet(
                formals + (Attribute(rng.choice(names), "LE", rng.randint(-4, 4)),)
            )
            if not match(AttributeSet(formals), data):
                assert not match(narrower, data)
    verdict(4, "worked interest matches; 6-operator truth table; monotone narrowing", timer)


def test_criterion_5_addressing():
    params = RadioParams(rx_sensitivity_mw=5e-7)
    rng = random.Random(31415)
    with budget(10.0) as timer:
        tables = []
        for _ in range(100):
            positions = [
                NodePosition(f"n{i}", rng.uniform(0, 60), rng.uniform(0, 60))
                for i in range(20)
            ]
            topology = build_topology(params, positions)
            table = AddressTable.empty()
            for node in topology.nodes:
                before = dict(table.assignments)
                address = assign_address(node, topology, table)
                neighborhood = conflict_neighborhood(topology, node)
                taken_earlier = {
                    before[m] for m in neighborhood if m in before
                }
                for smaller in range(address):  # greedy minimality
                    assert smaller in taken_earlier
            for node in topology.nodes:  # zero conflicts
                for other in conflict_neighborhood(topology, node):
                    assert table.assignments[node] != table.assignments[other]
            tables.append(table)
        histogram = address_frequency_histogram(tables)
        assert histogram[0] > histogram[1] > histogram[2]
    verdict(5, "100 random topologies: conflict-free, greedy-minimal, low addresses dominate", timer)


def test_criterion_6_radio_identities():
    params = RadioParams(
        tx_power_mw=2.5, gain_tx=1.5, gain_rx=1.2, wavelength_m=0.125,
        system_loss=1.4, far_field_m=1.0, path_loss_exponent=2.0,
    )
    rng = random.Random(6006)
    with budget(5.0) as timer:
        for _ in range(1000):
            d = params.far_field_m + rng.random() * 2000.0
            friis = friis_received_power(params, d)
            logd = log_distance_received_power(params, d)
            assert abs(logd - friis) <= 1e-12 * friis
        assert len(enumerate_straight(3)) == 6
        wave = ook_modulate("110100101", 0.0, 1.0)
        assert list(wave.symbol_energies) == [1, 1, 0, 1, 0, 0, 1, 0, 1]
        assert ook_demodulate(wave, 0.0, 1.0) == "110100101"
        for _ in range(1000):
            bits = "".join(rng.choice("01") for _ in range(rng.randint(1, 48)))
            assert ook_demodulate(ook_modulate(bits, 0.0, 1.0), 0.0, 1.0) == bits
    verdict(6, "log-distance(γ=2) == Friis @1e-12; 3x3 boxes = 6; OOK round-trips", timer)


def test_criterion_7_pbox_preimages():
    rng = random.Random(4096)
    with budget(30.0) as timer:
        for n in range(2, 13):
            for m in range(1, n):
                box = CompressionPBox(tuple(rng.sample(range(n), m)), n_inputs=n)
                counts = {}
                for value in range(2**n):
                    out = apply_compression(box, format(value, f"0{n}b"))
                    counts[out] = counts.get(out, 0) + 1
                assert len(counts) == 2**m, (n, m)
                assert set(counts.values()) == {2 ** (n - m)}, (n, m)
    verdict(7, "every (n<=12, m<n) distinct wiring: exactly 2^(n-m) preimages per output", timer)


def test_criterion_8_replay_dichotomy():
    shared = Key("shared", 0, "1011" * 16)
    with budget(1.0) as timer:
        recorded = [
            mutual_authenticate(
                "X", "Y", shared, mode=AuthMode.NONCE_FREE, rng=random.Random(8)
            )
        ]
        replay_free = impersonate(
            "Z", "Y", recorded, true_key=shared, mode=AuthMode.NONCE_FREE
        )
        replay_nonced = impersonate(
            "Z", "Y", recorded, true_key=shared, mode=AuthMode.NONCED,
            rng=random.Random(9),
        )
        assert replay_free is True
        assert replay_nonced is False
    verdict(8, "same recording: impersonation true nonce-free, false with nonces", timer)


def test_criterion_9_homomorphic_aggregation():
    rng = random.Random(9009)
    ph = PhParams()
    with budget(5.0) as timer:
        for _ in range(1000):
            k = rng.randint(1, 50)
            epoch = rng.randrange(4)
            keys = {
                f"n{i}": Key(f"o{i}", 0, format(rng.getrandbits(64), "064b"))
                for i in range(k)
            }
            values = {node: rng.randrange(2**16) for node in keys}
            readings = [
                encrypt_reading(node, values[node], keys[node], epoch, ph)
                for node in keys
            ]
            agg = aggregate(readings, ph)
            shuffled = list(readings)
            rng.shuffle(shuffled)
            assert aggregate(shuffled, ph).ciphertext == agg.ciphertext
            sink = SinkState.create(seed=0)
            for node, key in keys.items():
                sink.key_history[node] = {epoch: key}
            assert sink_decrypt_sum(sink, agg, sorted(keys)) == sum(values.values())
    verdict(9, "1000 vectors: aggregate decrypts to the exact sum, order-independent", timer)


def test_criterion_10_end_to_end_determinism():
    path = str(SCENARIOS / "demo_30node.scn")
    with budget(10.0) as timer:
        first = run_file(path)
        second = run_file(path)
        assert first.render_json() == second.render_json()
        assert first.render_text() == second.render_text()
        assert first.render_csv() == second.render_csv()
        assert first.node_count == 30
        kinds = {e.kind for e in first.events}
        assert kinds == {
            "DEPLOY", "PROVISION", "VERIFY", "ROTATE", "JOIN_GROUP", "LEAVE_GROUP",
            "SEND_INTEREST", "SEND_DATA", "COMPROMISE_NODE", "ADVERSARY_REPLAY",
        }
        total = (
            first.delivered
            + first.dropped_no_route
            + first.dropped_no_match
            + first.intercepted
        )
        assert total == first.messages_sent
    verdict(10, "30-node full-coverage scenario reruns byte-identical; counts conserve", timer)
