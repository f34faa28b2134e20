"""Greedy address assignment and content-based attribute matching.

Addresses are picked greedily: each node takes the lowest non-negative
integer unused inside its conflict neighborhood, so low addresses dominate
and the distribution is non-uniform.  The conflict neighborhood accounts for
asymmetric links: two nodes conflict when a directed link exists in either
direction between them, or when they share a common inbound neighbor (two
receivers of one sender must stay distinguishable).

Interests and data messages are attribute sets.  An attribute with operator
IS carries an actual value; any comparison operator (EQ, NE, LT, GT, LE, GE)
makes it a formal constraint.  A data message matches an interest when every
formal attribute of the interest is satisfied by some actual attribute of the
same name in the data.  The check is deliberately one-sided.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .errors import DomainError
from .radio import Topology

__all__ = [
    "OPERATORS",
    "FORMAL_OPERATORS",
    "Attribute",
    "AttributeSet",
    "AddressTable",
    "eval_operator",
    "match",
    "conflict_neighborhood",
    "assign_address",
    "address_frequency_histogram",
]

OPERATORS = ("EQ", "NE", "LT", "GT", "LE", "GE", "IS")
FORMAL_OPERATORS = frozenset(op for op in OPERATORS if op != "IS")

Scalar = int | float | str


@dataclass(frozen=True)
class Attribute:
    name: str
    op: str
    value: Scalar

    def __post_init__(self):
        if self.op not in OPERATORS:
            raise DomainError(f"unknown operator {self.op!r}; expected one of {OPERATORS}")

    @property
    def is_formal(self) -> bool:
        return self.op != "IS"

    @property
    def is_actual(self) -> bool:
        return self.op == "IS"

    def serialize(self) -> str:
        return f"{self.name},{self.value},{self.op}"


@dataclass(frozen=True)
class AttributeSet:
    """An ordered list of attributes.

    Duplicate names are allowed and meaningful: an interest expresses a range
    query by constraining the same name twice (e.g. LE and GE bounds).
    """

    attributes: tuple[Attribute, ...]

    def __iter__(self):
        return iter(self.attributes)

    def __len__(self):
        return len(self.attributes)

    def serialize(self) -> str:
        """One attribute per line: <name>,<value>,<OP>."""
        return "\n".join(attr.serialize() for attr in self.attributes)

    @classmethod
    def parse(cls, text: str) -> "AttributeSet":
        """Parse one-attribute-per-line text; whitespace around fields is trimmed."""
        attrs = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            attrs.append(parse_attribute(line))
        return cls(tuple(attrs))


def parse_attribute(text: str) -> Attribute:
    parts = [part.strip() for part in text.split(",")]
    if len(parts) != 3:
        raise DomainError(f"attribute {text!r} must have exactly name,value,OP fields")
    name, raw_value, op = parts
    if op not in OPERATORS:
        raise DomainError(f"unknown operator {op!r} in attribute {text!r}")
    return Attribute(name, op, _coerce_scalar(raw_value))


def _coerce_scalar(raw: str) -> Scalar:
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def _as_number(value: Scalar) -> float | None:
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value.strip())
        except ValueError:
            return None
    return None


def eval_operator(op: str, actual_value: Scalar, formal_value: Scalar) -> bool:
    """Does the actual value satisfy the constraint (op, formal_value)?

    Values compare numerically when both parse as numbers.  Otherwise EQ/NE
    compare exact strings, the order operators evaluate false, and a
    number-vs-string pair never matches: one malformed message must not take
    down dissemination.
    """
    if op == "IS":
        raise DomainError("IS is not a comparison operator")
    if op not in FORMAL_OPERATORS:
        raise DomainError(f"unknown operator {op!r}")
    a_num = _as_number(actual_value)
    f_num = _as_number(formal_value)
    if a_num is not None and f_num is not None:
        actual, formal = a_num, f_num
    elif a_num is None and f_num is None:
        if op == "EQ":
            return str(actual_value) == str(formal_value)
        if op == "NE":
            return str(actual_value) != str(formal_value)
        return False
    else:
        return False
    if op == "EQ":
        return actual == formal
    if op == "NE":
        return actual != formal
    if op == "LT":
        return actual < formal
    if op == "GT":
        return actual > formal
    if op == "LE":
        return actual <= formal
    return actual >= formal  # GE


def match(interest: AttributeSet, data: AttributeSet) -> bool:
    """One-way match of the interest's formal attributes against the data's actuals.

    Every formal attribute in the interest must be satisfied by some actual
    (IS) attribute of the same name in the data; actual attributes carried by
    the interest are ignored.  Fails at the first unsatisfied constraint.
    """
    for constraint in interest:
        if not constraint.is_formal:
            continue
        satisfied = any(
            actual.name == constraint.name
            and actual.is_actual
            and eval_operator(constraint.op, actual.value, constraint.value)
            for actual in data
        )
        if not satisfied:
            return False
    return True


@dataclass
class AddressTable:
    """Assigned addresses plus the sequence in which nodes executed assignment."""

    assignments: dict[str, int]
    order: list[str]

    @classmethod
    def empty(cls) -> "AddressTable":
        return cls(assignments={}, order=[])


def conflict_neighborhood(topology: Topology, node_id: str) -> set[str]:
    """Nodes that must not share node_id's address.

    Covers both directions of an asymmetric link plus the hidden-receiver
    case: any two receivers of a common sender.
    """
    if node_id not in topology.positions:
        raise DomainError(f"unknown node {node_id!r}")
    neighbors = set(topology.out_neighbors(node_id))
    neighbors.update(topology.in_neighbors(node_id))
    for sender in topology.in_neighbors(node_id):
        neighbors.update(topology.out_neighbors(sender))
    neighbors.discard(node_id)
    return neighbors


def assign_address(node_id: str, topology: Topology, table: AddressTable) -> int:
    """Greedy rule: take the lowest address unused in the conflict neighborhood."""
    if node_id not in topology.positions:
        raise DomainError(f"unknown node {node_id!r}")
    if node_id in table.assignments:
        raise DomainError(f"node {node_id!r} already executed address assignment")
    taken = {
        table.assignments[other]
        for other in conflict_neighborhood(topology, node_id)
        if other in table.assignments
    }
    address = 0
    while address in taken:
        address += 1
    table.assignments[node_id] = address
    table.order.append(node_id)
    return address


def address_frequency_histogram(tables: list[AddressTable]) -> dict[int, float]:
    """Relative frequency of each address across the given tables; sums to 1."""
    if not tables:
        raise DomainError("at least one address table is required")
    counts: Counter[int] = Counter()
    for table in tables:
        counts.update(table.assignments.values())
    total = sum(counts.values())
    if total == 0:
        raise DomainError("address tables contain no assignments")
    return {address: count / total for address, count in sorted(counts.items())}
