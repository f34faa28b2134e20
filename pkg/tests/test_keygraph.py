import random

import pytest
from conftest import decryption_closure

from sentinel_mesh.errors import DomainError
from sentinel_mesh.keygraph import (
    Key,
    KeyGraph,
    MemberView,
    build_explicit,
    build_group,
    derive_label,
    format_rekey_message,
    join,
    keyset,
    leave,
    member_closure,
    parse_rekey_line,
    userset,
)

M1_8 = [f"M{i}" for i in range(1, 9)]
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


# --- labels -----------------------------------------------------------------

def test_derive_label_paper_names():
    assert derive_label(["M7"]) == "k7"
    assert derive_label(["M7", "M8"]) == "k78"
    assert derive_label(["M7", "M8", "M9"]) == "k789"
    assert derive_label(["M1", "M2", "M3", "M4"]) == "k1234"
    assert derive_label(M1_8) == "k1-8"
    assert derive_label(M1_8 + ["M9"]) == "k1-9"


def test_derive_label_gaps_and_fallback():
    assert derive_label(["M1", "M2", "M3", "M4", "M6", "M7", "M8", "M9"]) == "k1-4.6-9"
    assert derive_label(["M2", "M9"]) == "k2.9"
    assert derive_label(["alice", "bob"]) == "kalice.bob"


# --- construction and queries -------------------------------------------------

def test_singleton_group():
    graph = build_group(["M1"])
    assert graph.keyset("M1") == {"k1", "kG"}
    assert graph.userset("kG") == {"M1"}


def test_paper_shape_explicit_builder():
    graph = build_explicit(PAPER_SHAPE)
    assert graph.root_key.key_id == "k1-8"
    assert graph.keyset("M1") == {"k1", "k123", "k1-8"}
    assert graph.keyset("M7") == {"k7", "k78", "k1-8"}
    assert graph.userset("k78") == {"M7", "M8"}
    assert graph.userset("k1-8") == set(M1_8)


def test_build_group_degree3_recovers_paper_shape():
    graph = build_group(M1_8, degree=3)
    assert graph.root_key.key_id == "k1-8"
    assert graph.keyset("M4") == {"k4", "k456", "k1-8"}
    assert graph.userset("k78") == {"M7", "M8"}


def test_full_ternary_nine_members():
    graph = build_group([f"M{i}" for i in range(1, 10)], degree=3)
    for member in graph.members:
        assert len(graph.keyset(member)) == 3  # leaf, subgroup, root


def test_build_group_rejects_duplicates_and_empty():
    with pytest.raises(DomainError):
        build_group([])
    with pytest.raises(DomainError):
        build_group(["M1", "M1"])
    with pytest.raises(DomainError):
        KeyGraph(degree=1)


def test_relation_graph_from_worked_example():
    # The four-member key graph used to introduce keyset/userset.
    graph = KeyGraph.from_relation(
        {
            "M1": {"k1", "k12", "k1234"},
            "M2": {"k12", "k234", "k1234"},
            "M3": {"k23", "k1234"},
            "M4": {"k4", "k234", "k1234"},
        }
    )
    assert keyset(graph, "M2") == {"k12", "k234", "k1234"}
    assert keyset(graph, "M3") == {"k23", "k1234"}
    assert userset(graph, "k1") == {"M1"}
    assert userset(graph, "k12") == {"M1", "M2"}
    assert userset(graph, "k1234") == {"M1", "M2", "M3", "M4"}
    for key in graph.keys:
        assert graph.userset(key.key_id)  # every key is held by someone


def test_relation_graph_cannot_rekey():
    graph = KeyGraph.from_relation({"M1": {"k1"}})
    with pytest.raises(DomainError):
        join(graph, "M2")


def test_query_errors():
    graph = build_group(["M1", "M2"])
    with pytest.raises(DomainError):
        graph.keyset("M9")
    with pytest.raises(DomainError):
        graph.userset("k9")


def test_userset_of_root_is_everyone():
    graph = build_group([f"M{i}" for i in range(1, 8)], degree=2)
    assert graph.userset(graph.root_key.key_id) == graph.members


def test_tree_discipline_keyset_size_is_depth():
    graph = build_explicit([["M1", ["M2", "M3"]], ["M4", "M5"]], degree=3)
    assert graph.keyset("M2") == {"k2", "k23", "k123", "k1-5"}
    assert graph.keyset("M4") == {"k4", "k45", "k1-5"}


# --- golden join/leave --------------------------------------------------------

def test_golden_join_messages():
    graph = build_explicit(PAPER_SHAPE)
    graph, messages = join(graph, "M9", attach_under="k78")
    assert [format_rekey_message(m) for m in messages] == GOLDEN_JOIN
    assert graph.keyset("M9") == {"k9", "k789", "k1-9"}
    assert graph.userset("k1-9") == set(M1_8) | {"M9"}


def test_golden_leave_messages():
    graph = build_explicit(PAPER_SHAPE)
    graph, _ = join(graph, "M9", attach_under="k78")
    graph, messages = leave(graph, "M9")
    assert [format_rekey_message(m) for m in messages] == GOLDEN_LEAVE
    assert graph.members == set(M1_8)
    assert graph.root_key.key_id == "k1-8"
    assert graph.root_key.version == 1  # reissued label, fresh material


def test_golden_trace_parse_round_trip():
    graph = build_explicit(PAPER_SHAPE)
    graph, messages = join(graph, "M9", attach_under="k78")
    for message, line in zip(messages, GOLDEN_JOIN):
        got = parse_rekey_line(format_rekey_message(message))
        want = parse_rekey_line("  " + line.replace(" ", "  "))  # whitespace-insensitive
        assert got == want


def test_join_into_singleton():
    graph = build_group(["M1"])
    graph, messages = join(graph, "M2")
    assert len(messages) == 2
    incumbent, joiner = messages
    assert incumbent.recipients == frozenset({"M1"})
    assert joiner.recipients == frozenset({"M2"})
    assert joiner.encrypting_key.key_id == "k2"
    assert graph.userset("k12") == {"M1", "M2"}


def test_join_rejects_duplicates_and_bad_attach():
    graph = build_explicit(PAPER_SHAPE)
    with pytest.raises(DomainError):
        join(graph, "M1")
    with pytest.raises(DomainError):
        join(graph, "M9", attach_under="nope")
    with pytest.raises(DomainError):
        join(graph, "M9", attach_under="k7")  # individual key
    with pytest.raises(DomainError):
        join(graph, "M9", attach_under="k123")  # at capacity for degree 3


def test_join_splits_leaf_when_tree_full():
    graph = build_group([f"M{i}" for i in range(1, 10)], degree=3)
    graph, messages = join(graph, "M10")
    assert graph.members == {f"M{i}" for i in range(1, 11)}
    assert graph.keyset("M10") >= {graph.root_key.key_id}
    # M1 now shares a fresh two-member subgroup with the joiner.
    assert graph.userset(sorted(graph.keyset("M10") - graph.keyset("M2"))[0]) <= {
        "M1",
        "M10",
    }
    coverage = frozenset().union(*(m.recipients for m in messages))
    assert coverage == graph.members


def test_leave_from_two_member_group():
    graph = build_group(["M1", "M2"])
    graph, messages = leave(graph, "M2")
    assert len(messages) == 1
    assert messages[0].recipients == frozenset({"M1"})
    assert messages[0].encrypting_key.key_id == "k1"
    assert graph.members == {"M1"}


def test_leave_collapses_shrunken_subgroup():
    graph = build_explicit([["M1", "M2", "M3"], ["M4", "M5"]])
    graph, messages = leave(graph, "M5")
    assert graph.members == {"M1", "M2", "M3", "M4"}
    assert graph.keyset("M4") == {"k4", "k1234"}  # k45 collapsed away
    recipients = [m.recipients for m in messages]
    assert frozenset({"M1", "M2", "M3"}) in recipients
    assert frozenset({"M4"}) in recipients


def test_leave_errors():
    graph = build_group(["M1"])
    with pytest.raises(DomainError):
        leave(graph, "M1")  # last member
    with pytest.raises(DomainError):
        leave(graph, "M9")


# --- rekey invariants -----------------------------------------------------------

def random_membership_script(rng, max_members=32, max_events=20):
    names = [f"M{i}" for i in range(1, max_members + 1)]
    initial = rng.sample(names, rng.randint(2, 6))
    events = []
    present = set(initial)
    absent = [n for n in names if n not in present]
    for _ in range(rng.randint(1, max_events)):
        if absent and (len(present) < 3 or rng.random() < 0.5):
            member = rng.choice(absent)
            events.append(("join", member))
            absent.remove(member)
            present.add(member)
        else:
            member = rng.choice(sorted(present))
            events.append(("leave", member))
            present.remove(member)
            absent.append(member)
    return initial, events


def run_script(initial, events, seed):
    graph = build_group(initial, degree=3, seed=seed)
    log = []  # (kind, member, keyset_before_for_leaver, messages)
    for kind, member in events:
        if kind == "join":
            pre_keys = None
            graph, messages = join(graph, member)
        else:
            pre_keys = graph.keyset_keys(member)
            graph, messages = leave(graph, member)
        log.append((kind, member, pre_keys, messages))
    return graph, log


def test_decryptability_and_coverage_random_scripts():
    rng = random.Random(515)
    for trial in range(20):
        initial, events = random_membership_script(rng)
        graph = build_group(initial, degree=3, seed=trial)
        for kind, member in events:
            pre_keysets = {m: set(graph.keyset(m)) for m in graph.members}
            if kind == "join":
                graph, messages = join(graph, member)
            else:
                graph, messages = leave(graph, member)
            covered = set()
            for msg in messages:
                covered |= msg.recipients
                for recipient in msg.recipients:
                    if recipient == member and kind == "join":
                        continue  # joiner keys off its new individual key
                    assert msg.encrypting_key.key_id in pre_keysets[recipient]
            assert covered == graph.members  # exact post-event membership


def test_forward_secrecy_paper_example():
    graph = build_explicit(PAPER_SHAPE)
    graph, join_msgs = join(graph, "M9", attach_under="k78")
    pre_leave_keys = graph.keyset_keys("M9")
    graph, leave_msgs = leave(graph, "M9")
    view = MemberView(
        "M9",
        {key.ident for key in pre_leave_keys},
        transcript=list(leave_msgs),
    )
    closure = member_closure(view)
    assert closure == {("k9", 0), ("k789", 0), ("k1-9", 0)}
    assert ("k1-8", 1) not in closure
    assert ("k78", 1) not in closure


def test_backward_secrecy_paper_example():
    graph = build_explicit(PAPER_SHAPE)
    old_root = graph.root_key
    graph, join_msgs = join(graph, "M9", attach_under="k78")
    leaf = next(k for k in graph.keyset_keys("M9") if k.key_id == "k9")
    view = MemberView("M9", {leaf.ident}, transcript=list(join_msgs))
    closure = member_closure(view)
    assert closure == {("k9", 0), ("k789", 0), ("k1-9", 0)}
    assert old_root.ident not in closure
    assert ("k78", 0) not in closure


def test_member_closure_empty_transcript():
    view = MemberView("M1", {("k1", 0)})
    assert member_closure(view) == {("k1", 0)}


def test_closure_matches_decryption_oracle_on_chained_rekeys():
    graph = build_explicit(PAPER_SHAPE)
    all_messages = []
    graph, msgs = join(graph, "M9", attach_under="k78")
    m9_initial = [k for k in graph.keyset_keys("M9") if k.key_id == "k9"]
    all_messages += msgs
    graph, msgs = leave(graph, "M9")
    all_messages += msgs
    graph, msgs = join(graph, "M10")
    all_messages += msgs
    graph, msgs = leave(graph, "M1")
    all_messages += msgs
    view = MemberView("M9", {k.ident for k in m9_initial}, transcript=all_messages)
    symbolic = member_closure(view)
    by_decryption = decryption_closure(m9_initial, all_messages)
    assert symbolic == by_decryption


def test_secrecy_closures_random_scripts_against_oracle():
    rng = random.Random(90210)
    for trial in range(25):
        initial, events = random_membership_script(rng, max_members=16, max_events=12)
        graph = build_group(initial, degree=3, seed=1000 + trial)
        timeline = []  # (event_index, messages)
        leavers = []  # (member, keyset at departure, event_index)
        joiners = []  # (member, leaf key, event_index, pre-existing key idents)
        all_keys_by_event = []
        for idx, (kind, member) in enumerate(events):
            if kind == "join":
                existing = {key.ident for key in graph.keys}
                graph, messages = join(graph, member)
                leaf = next(
                    k for k in graph.keyset_keys(member) if graph._leaves[member].key == k
                )
                joiners.append((member, leaf, idx, existing))
            else:
                departing_keys = graph.keyset_keys(member)
                graph, messages = leave(graph, member)
                leavers.append((member, departing_keys, idx))
            created = set()
            for msg in messages:
                created |= {k.ident for k in msg.payload}
            all_keys_by_event.append(created)
            timeline.append((idx, messages))

        for member, held, when in leavers:
            post_messages = [m for i, msgs in timeline if i >= when for m in [msgs]]
            post_messages = [m for i, msgs in timeline for m in msgs if i >= when]
            view = MemberView(member, {k.ident for k in held}, post_messages)
            closure = member_closure(view)
            post_created = set().union(*all_keys_by_event[when:]) if all_keys_by_event[when:] else set()
            # keys the departure itself created, and everything after, stay out
            assert not (closure & post_created)
            oracle = decryption_closure(held, post_messages)
            assert closure == oracle

        for member, leaf, when, preexisting in joiners:
            post_messages = [m for i, msgs in timeline for m in msgs if i >= when]
            view = MemberView(member, {leaf.ident}, post_messages)
            closure = member_closure(view)
            assert not (closure & preexisting)
            oracle = decryption_closure([leaf], post_messages)
            assert closure == oracle


def test_rekey_messages_payload_versions_fresh():
    graph = build_explicit(PAPER_SHAPE)
    seen = {key.ident for key in graph.keys}
    for op, member in [("join", "M9"), ("leave", "M9"), ("join", "M10"), ("leave", "M3")]:
        if op == "join":
            graph, messages = join(graph, member)
        else:
            graph, messages = leave(graph, member)
        batch = {key.ident for msg in messages for key in msg.payload}
        assert not (batch & seen)  # every payload key is a new id or newer version
        seen |= batch


def test_format_singleton_recipient_has_no_braces():
    graph = build_group(["M1", "M2"])
    _, messages = leave(graph, "M2")
    assert format_rekey_message(messages[0]).startswith("C -> M1 :")


def test_parse_rekey_line_rejects_garbage():
    with pytest.raises(DomainError):
        parse_rekey_line("not a trace line")
