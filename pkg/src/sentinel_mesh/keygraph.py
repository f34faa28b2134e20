"""Member-key relation as a rooted key tree, with join/leave rekeying.

A group is a relation (members, keys, relation pairs) realized as a rooted
tree: every member owns a leaf key, internal nodes carry subgroup keys, and
the root carries the group key.  A member's keyset is exactly the keys on its
leaf-to-root path; a key's userset is every member below its node.

Membership changes trigger rekeying.  On join, every key from the attach
point up to the root is replaced, and message batches partition the incoming
membership so that each stratum decrypts with a key it already holds.  On
leave, every surviving key the departing member held is replaced, and each
batch is encrypted under a key the departed member never held.  Forward and
backward secrecy are therefore checkable by closure: starting from a member's
initial keys, fold in every observed payload whose encrypting key is already
derivable, to fixpoint.

Group keys are labeled by the member range they cover (k78, k789, k1-8
style), so rekey traces can be compared as text.  Version numbers disambiguate
reissued labels.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field

from . import cipher
from .errors import DomainError

__all__ = [
    "Key",
    "RekeyMessage",
    "MemberView",
    "KeyGraph",
    "build_group",
    "build_explicit",
    "keyset",
    "userset",
    "join",
    "leave",
    "member_closure",
    "derive_label",
    "member_sort_key",
    "format_rekey_message",
    "parse_rekey_line",
]

DEFAULT_KEY_BITS = 64

_SUFFIX_RE = re.compile(r"^(.*?)(\d+)$")


@dataclass(frozen=True)
class Key:
    """Versioned secret material; (key_id, version) is unique within a group."""

    key_id: str
    version: int
    material: str

    @property
    def ident(self) -> tuple[str, int]:
        return (self.key_id, self.version)


@dataclass(frozen=True)
class RekeyMessage:
    """One controller multicast: new keys for one recipient stratum.

    The payload is also carried sealed under the encrypting key's material so
    that closure results can be cross-checked by actually decrypting.
    """

    recipients: frozenset[str]
    payload: tuple[Key, ...]
    encrypting_key: Key
    nonce: bytes
    ciphertext: bytes


@dataclass
class MemberView:
    """What one party can know: initial keys plus every message it observed."""

    member_id: str
    known_keys: set[tuple[str, int]]
    transcript: list = field(default_factory=list)


def member_sort_key(member_id: str):
    m = _SUFFIX_RE.match(member_id)
    if m:
        return (0, m.group(1), int(m.group(2)))
    return (1, member_id, 0)


def _numeric_suffixes(members) -> list[int] | None:
    """Member indices when all ids share one alphabetic prefix, else None."""
    prefix = None
    indices = []
    for member in members:
        m = _SUFFIX_RE.match(member)
        if not m:
            return None
        if prefix is None:
            prefix = m.group(1)
        elif m.group(1) != prefix:
            return None
        indices.append(int(m.group(2)))
    return sorted(indices)


def derive_label(members) -> str:
    """Human-comparable key label for the member set a key covers.

    Index-based when members share a common prefix: short contiguous runs
    concatenate (k78, k789), longer ones become ranges (k1-8), and gaps are
    dot-separated runs (k1-4.6-9).  Falls back to dot-joined names.
    """
    members = list(members)
    if not members:
        raise DomainError("cannot label a key covering no members")
    indices = _numeric_suffixes(members)
    if indices is None:
        names = sorted(members)
        return "k" + ".".join(names)
    if len(indices) == 1:
        return f"k{indices[0]}"
    runs: list[tuple[int, int]] = []
    for idx in indices:
        if runs and idx == runs[-1][1] + 1:
            runs[-1] = (runs[-1][0], idx)
        else:
            runs.append((idx, idx))
    if len(runs) == 1:
        lo, hi = runs[0]
        if len(indices) <= 4 and hi < 10:
            return "k" + "".join(str(i) for i in indices)
        return f"k{lo}-{hi}"
    return "k" + ".".join(f"{lo}" if lo == hi else f"{lo}-{hi}" for lo, hi in runs)


class _Node:
    __slots__ = ("key", "children", "parent", "member")

    def __init__(self, key: Key | None, member: str | None = None):
        self.key = key
        self.children: list[_Node] = []
        self.parent: _Node | None = None
        self.member = member

    @property
    def is_leaf(self) -> bool:
        return self.member is not None

    def attach(self, child: "_Node"):
        child.parent = self
        self.children.append(child)

    def members_below(self) -> set[str]:
        if self.is_leaf:
            return {self.member}
        found: set[str] = set()
        stack = list(self.children)
        while stack:
            node = stack.pop()
            if node.is_leaf:
                found.add(node.member)
            else:
                stack.extend(node.children)
        return found


class KeyGraph:
    """The (members, keys, relation) triple; tree-backed graphs also rekey.

    Graphs built from an explicit relation answer keyset/userset queries only;
    join and leave require the tree form produced by build_group or
    build_explicit.
    """

    def __init__(self, degree: int = 3, key_bits: int = DEFAULT_KEY_BITS, seed: int = 0):
        if degree < 2:
            raise DomainError(f"tree degree must be >= 2, got {degree}")
        self.degree = degree
        self.key_bits = key_bits
        self._rng = random.Random(seed)
        self._root: _Node | None = None
        self._leaves: dict[str, _Node] = {}
        self._label_versions: dict[str, int] = {}
        self._message_counter = 0
        self._relation: dict[str, set[str]] | None = None
        self._relation_keys: dict[str, Key] = {}

    # -- construction -----------------------------------------------------

    @classmethod
    def from_relation(cls, relation: dict[str, list[str] | set[str]],
                      key_bits: int = DEFAULT_KEY_BITS, seed: int = 0) -> "KeyGraph":
        """Query-only graph from explicit member -> key-id sets."""
        graph = cls(key_bits=key_bits, seed=seed)
        graph._relation = {m: set(keys) for m, keys in relation.items()}
        for keys in graph._relation.values():
            for key_id in keys:
                if key_id not in graph._relation_keys:
                    graph._relation_keys[key_id] = Key(
                        key_id, 0, graph._random_material()
                    )
        return graph

    def _random_material(self) -> str:
        return format(self._rng.getrandbits(self.key_bits), f"0{self.key_bits}b")

    def _fresh_key(self, label: str) -> Key:
        version = self._label_versions.get(label, -1) + 1
        self._label_versions[label] = version
        return Key(label, version, self._random_material())

    def _fresh_leaf(self, member: str) -> _Node:
        return _Node(self._fresh_key(derive_label([member])), member=member)

    def _fresh_internal_key(self, members) -> Key:
        label = "kG" if len(set(members)) == 1 else derive_label(members)
        return self._fresh_key(label)

    # -- invariant surface --------------------------------------------------

    @property
    def members(self) -> set[str]:
        if self._relation is not None:
            return set(self._relation)
        return set(self._leaves)

    @property
    def keys(self) -> set[Key]:
        if self._relation is not None:
            return set(self._relation_keys.values())
        return {node.key for node in self._walk()}

    @property
    def relation(self) -> set[tuple[str, str]]:
        return {
            (member, key_id)
            for member in sorted(self.members)
            for key_id in sorted(self.keyset(member))
        }

    @property
    def root_key(self) -> Key:
        self._require_tree()
        return self._root.key

    def _walk(self):
        if self._root is None:
            return
        stack = [self._root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(node.children)

    def _require_tree(self):
        if self._root is None:
            raise DomainError("operation requires a tree-backed key graph")

    def _find_by_key_id(self, key_id: str) -> _Node | None:
        for node in self._walk():
            if node.key.key_id == key_id:
                return node
        return None

    # -- queries ------------------------------------------------------------

    def keyset(self, member_id: str) -> set[str]:
        """Key ids held by the member (leaf-to-root path in tree form)."""
        if self._relation is not None:
            if member_id not in self._relation:
                raise DomainError(f"unknown member {member_id!r}")
            return set(self._relation[member_id])
        return {key.key_id for key in self.keyset_keys(member_id)}

    def keyset_keys(self, member_id: str) -> tuple[Key, ...]:
        """Path keys leaf-first, with versions and material."""
        self._require_tree()
        node = self._leaves.get(member_id)
        if node is None:
            raise DomainError(f"unknown member {member_id!r}")
        path = []
        while node is not None:
            path.append(node.key)
            node = node.parent
        return tuple(path)

    def userset(self, key_id: str) -> set[str]:
        """Members holding the key with the given id."""
        if self._relation is not None:
            if key_id not in self._relation_keys:
                raise DomainError(f"unknown key {key_id!r}")
            return {m for m, keys in self._relation.items() if key_id in keys}
        self._require_tree()
        node = self._find_by_key_id(key_id)
        if node is None:
            raise DomainError(f"unknown key {key_id!r}")
        return node.members_below()

    # -- rekey plumbing -------------------------------------------------------

    def _emit(self, recipients, payload, encrypting_key: Key) -> RekeyMessage:
        nonce = self._message_counter.to_bytes(8, "big")
        self._message_counter += 1
        ciphertext = cipher.seal_key_list(
            encrypting_key.material,
            nonce,
            [[k.key_id, k.version, k.material] for k in payload],
        )
        return RekeyMessage(
            recipients=frozenset(recipients),
            payload=tuple(payload),
            encrypting_key=encrypting_key,
            nonce=nonce,
            ciphertext=ciphertext,
        )


def build_group(member_ids: list[str], degree: int = 3,
                key_bits: int = DEFAULT_KEY_BITS, seed: int = 0) -> KeyGraph:
    """Tree of the given arity: leaf keys, subgroup keys, one root group key.

    Leaves are chunked bottom-up in member order; a trailing single node is
    promoted unwrapped, so eight members at degree three produce the
    {1,2,3}/{4,5,6}/{7,8} shape.
    """
    if not member_ids:
        raise DomainError("member_ids must be nonempty")
    if len(set(member_ids)) != len(member_ids):
        raise DomainError("duplicate member ids")
    graph = KeyGraph(degree=degree, key_bits=key_bits, seed=seed)
    level: list[_Node] = []
    for member in member_ids:
        leaf = graph._fresh_leaf(member)
        graph._leaves[member] = leaf
        level.append(leaf)
    if len(level) == 1:
        root = _Node(None)
        root.attach(level[0])
        root.key = graph._fresh_internal_key(root.members_below())
        graph._root = root
        return graph
    while len(level) > 1:
        next_level = []
        for i in range(0, len(level), degree):
            chunk = level[i:i + degree]
            if len(chunk) == 1:
                next_level.append(chunk[0])
                continue
            node = _Node(None)
            for child in chunk:
                node.attach(child)
            node.key = graph._fresh_internal_key(node.members_below())
            next_level.append(node)
        level = next_level
    graph._root = level[0]
    return graph


def build_explicit(shape: list, degree: int = 3,
                   key_bits: int = DEFAULT_KEY_BITS, seed: int = 0) -> KeyGraph:
    """Tree from an explicit nested shape, e.g. [[a, b, c], [d, e], f].

    Strings are members (leaves); lists are subgroups.  The top-level list is
    the root's children.
    """
    graph = KeyGraph(degree=degree, key_bits=key_bits, seed=seed)

    def build(spec) -> _Node:
        if isinstance(spec, str):
            if spec in graph._leaves:
                raise DomainError(f"duplicate member ids: {spec!r}")
            leaf = graph._fresh_leaf(spec)
            graph._leaves[spec] = leaf
            return leaf
        if not spec:
            raise DomainError("empty subgroup in shape")
        node = _Node(None)
        for sub in spec:
            node.attach(build(sub))
        node.key = graph._fresh_internal_key(node.members_below())
        return node

    if not isinstance(shape, list) or not shape:
        raise DomainError("shape must be a nonempty list")
    graph._root = build(shape)
    if graph._root.is_leaf:
        raise DomainError("shape must describe a group, not a single member")
    return graph


def keyset(graph: KeyGraph, member_id: str) -> set[str]:
    return graph.keyset(member_id)


def userset(graph: KeyGraph, key_id: str) -> set[str]:
    return graph.userset(key_id)


def _ancestors(node: _Node) -> list[_Node]:
    chain = []
    cur = node.parent
    while cur is not None:
        chain.append(cur)
        cur = cur.parent
    return chain


def join(graph: KeyGraph, new_member: str,
         attach_under: str | None = None) -> tuple[KeyGraph, list[RekeyMessage]]:
    """Admit a member; replace every key on the attach path; emit the batch.

    Message partition: each stratum of incumbents gets the new keys from the
    root down to its level, under the old key of that level; the joiner gets
    the full new path under its individual key.  Members above the attach
    subtree therefore learn the new group key only.
    """
    graph._require_tree()
    if new_member in graph._leaves:
        raise DomainError(f"member {new_member!r} already present")

    split_leaf: _Node | None = None
    if attach_under is not None:
        node = graph._find_by_key_id(attach_under)
        if node is None:
            raise DomainError(f"unknown attach point {attach_under!r}")
        if node.is_leaf:
            raise DomainError(f"attach point {attach_under!r} is an individual key")
        if len(node.children) >= graph.degree:
            raise DomainError(f"attach point {attach_under!r} is at capacity")
        attach = node
    else:
        attach = _default_attach(graph)
        if attach is None:
            # All subgroups full: split the shallowest leaf into a new subgroup.
            split_leaf = _shallowest_leaf(graph)
            attach = _Node(None)
            parent = split_leaf.parent
            parent.children[parent.children.index(split_leaf)] = attach
            attach.parent = parent
            attach.attach(split_leaf)

    path = [attach] + _ancestors(attach)  # bottom-up, ends at root
    old_keys = {id(n): n.key for n in path}
    pre_members = {
        id(n): (n.members_below() if n.key is not None else split_leaf.members_below())
        for n in path
    }

    leaf = graph._fresh_leaf(new_member)
    graph._leaves[new_member] = leaf
    attach.attach(leaf)
    for node in path:
        node.key = graph._fresh_internal_key(node.members_below())

    messages: list[RekeyMessage] = []
    top_down = list(reversed(path))
    new_path_keys: list[Key] = []
    for i, node in enumerate(top_down):
        new_path_keys.append(node.key)
        if i + 1 < len(top_down):
            stratum = pre_members[id(node)] - pre_members[id(top_down[i + 1])]
        else:
            stratum = pre_members[id(node)]
        enc = old_keys[id(node)]
        if enc is None:  # freshly split subgroup: its lone incumbent keys off its leaf
            enc = split_leaf.key
        if stratum:
            messages.append(graph._emit(stratum, list(new_path_keys), enc))
    messages.append(graph._emit({new_member}, list(new_path_keys), leaf.key))
    return graph, messages


def _default_attach(graph: KeyGraph) -> _Node | None:
    """Shallowest internal node with spare capacity, left-most first."""
    queue = [graph._root]
    while queue:
        node = queue.pop(0)
        if not node.is_leaf:
            if len(node.children) < graph.degree:
                return node
            queue.extend(node.children)
    return None


def _shallowest_leaf(graph: KeyGraph) -> _Node:
    queue = [graph._root]
    while queue:
        node = queue.pop(0)
        if node.is_leaf:
            return node
        queue.extend(node.children)
    raise DomainError("tree has no leaves")  # unreachable on valid trees


def leave(graph: KeyGraph, departing_member: str) -> tuple[KeyGraph, list[RekeyMessage]]:
    """Expel a member; destroy its leaf; replace every surviving key it held.

    A subgroup left with a single child collapses into its parent.  Every
    emitted message is encrypted under a key the departed member never held,
    and together the batches cover exactly the remaining membership.
    """
    graph._require_tree()
    leaf = graph._leaves.get(departing_member)
    if leaf is None:
        raise DomainError(f"unknown member {departing_member!r}")
    if len(graph._leaves) < 2:
        raise DomainError("cannot remove the last member of a group")

    parent = leaf.parent
    parent.children.remove(leaf)
    del graph._leaves[departing_member]

    rekey_start = parent
    if parent is not graph._root and len(parent.children) == 1:
        # Collapse the shrunken subgroup into its parent.
        child = parent.children[0]
        grandparent = parent.parent
        grandparent.children[grandparent.children.index(parent)] = child
        child.parent = grandparent
        rekey_start = grandparent
    elif parent is graph._root and len(parent.children) == 1 and not parent.children[0].is_leaf:
        # Root with one internal child: absorb the redundant level.
        child = parent.children[0]
        parent.children = child.children
        for grandchild in parent.children:
            grandchild.parent = parent
        rekey_start = parent

    path = [rekey_start] + _ancestors(rekey_start)
    for node in path:
        node.key = graph._fresh_internal_key(node.members_below())

    messages: list[RekeyMessage] = []
    top_down = list(reversed(path))
    new_path_keys: list[Key] = []
    for i, node in enumerate(top_down):
        new_path_keys.append(node.key)
        on_path_child = top_down[i + 1] if i + 1 < len(top_down) else None
        for child in node.children:
            if child is on_path_child:
                continue
            messages.append(
                graph._emit(child.members_below(), list(new_path_keys), child.key)
            )
    return graph, messages


def member_closure(view: MemberView) -> set[tuple[str, int]]:
    """Fixpoint of keys derivable from initial keys plus observed messages.

    A payload becomes derivable as soon as its encrypting key is; repeat until
    stable.  This is the oracle behind every forward/backward secrecy claim.
    """
    held = set(view.known_keys)
    changed = True
    while changed:
        changed = False
        for message in view.transcript:
            if message.encrypting_key.ident not in held:
                continue
            for key in message.payload:
                if key.ident not in held:
                    held.add(key.ident)
                    changed = True
    return held


def format_rekey_message(message: RekeyMessage) -> str:
    """Text form `C -> {M7,M8} : {k1-9,k789} k78`; singletons lose the braces."""
    members = sorted(message.recipients, key=member_sort_key)
    if len(members) == 1:
        to = members[0]
    else:
        to = "{" + ",".join(members) + "}"
    payload = ",".join(key.key_id for key in message.payload)
    return f"C -> {to} : {{{payload}}} {message.encrypting_key.key_id}"


_REKEY_LINE_RE = re.compile(
    r"^C\s*->\s*(?:\{(?P<many>[^}]*)\}|(?P<one>\S+))\s*:\s*"
    r"\{(?P<payload>[^}]*)\}\s*(?P<enc>\S+)$"
)


def parse_rekey_line(line: str) -> tuple[frozenset[str], tuple[str, ...], str]:
    """Whitespace-insensitive parse of a rekey trace line.

    Returns (recipients, payload key ids in order, encrypting key id).
    """
    m = _REKEY_LINE_RE.match(line.strip())
    if not m:
        raise DomainError(f"unparseable rekey line {line!r}")
    if m.group("many") is not None:
        recipients = frozenset(
            part.strip() for part in m.group("many").split(",") if part.strip()
        )
    else:
        recipients = frozenset({m.group("one")})
    payload = tuple(
        part.strip() for part in m.group("payload").split(",") if part.strip()
    )
    return recipients, payload, m.group("enc")
