"""Straight and compression permutation boxes over bit strings.

Wiring is output-major: entry i of a box names the input position feeding
output i.  A straight box is a bijection and therefore invertible; a
compression box drops inputs, so every output value has many preimages and
the mapping cannot be inverted.  Key codes are compression-box images of key
material: cheap to check, expensive to invert.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .errors import DomainError

__all__ = [
    "StraightPBox",
    "CompressionPBox",
    "apply_straight",
    "apply_compression",
    "enumerate_straight",
    "derive_key_code",
    "DEFAULT_KEY_BITS",
    "DEFAULT_CODE_BITS",
]

# Default key-code geometry: 64 key bits compressed to a 16-bit code leaves
# 2^48 preimages per code.
DEFAULT_KEY_BITS = 64
DEFAULT_CODE_BITS = 16

_ENUMERATION_LIMIT = 8  # n! boxes; keep enumeration tractable


@dataclass(frozen=True)
class StraightPBox:
    """An n-to-n rewiring; permutation[i] is the input wired to output i."""

    permutation: tuple[int, ...]

    def __post_init__(self):
        n = len(self.permutation)
        if sorted(self.permutation) != list(range(n)):
            raise DomainError(
                f"permutation {self.permutation!r} is not a bijection on 0..{n - 1}"
            )

    @property
    def size(self) -> int:
        return len(self.permutation)

    def inverse(self) -> "StraightPBox":
        inv = [0] * self.size
        for out_idx, in_idx in enumerate(self.permutation):
            inv[in_idx] = out_idx
        return StraightPBox(tuple(inv))

    def serialize(self) -> str:
        return ",".join(str(i) for i in self.permutation)

    @classmethod
    def parse(cls, text: str) -> "StraightPBox":
        return cls(tuple(int(part) for part in text.split(",")))


@dataclass(frozen=True)
class CompressionPBox:
    """An n-to-m box with m < n; wiring[i] is the input wired to output i.

    Entries may repeat in general, but the default constructor produces the
    distinct-entry (drop-inputs) form, for which every m-bit output value has
    exactly 2^(n-m) preimages.
    """

    wiring: tuple[int, ...]
    n_inputs: int

    def __post_init__(self):
        if len(self.wiring) >= self.n_inputs:
            raise DomainError(
                f"compression requires m < n, got m={len(self.wiring)}, "
                f"n={self.n_inputs}"
            )
        if not self.wiring:
            raise DomainError("wiring must be nonempty")
        for entry in self.wiring:
            if not 0 <= entry < self.n_inputs:
                raise DomainError(
                    f"wiring entry {entry} out of range 0..{self.n_inputs - 1}"
                )

    @property
    def n_outputs(self) -> int:
        return len(self.wiring)

    @property
    def has_distinct_wiring(self) -> bool:
        return len(set(self.wiring)) == len(self.wiring)

    @classmethod
    def spread(cls, n_inputs: int, n_outputs: int) -> "CompressionPBox":
        """Distinct wiring tapping evenly spaced input positions."""
        if n_outputs >= n_inputs:
            raise DomainError(
                f"compression requires m < n, got m={n_outputs}, n={n_inputs}"
            )
        return cls(
            tuple(i * n_inputs // n_outputs for i in range(n_outputs)), n_inputs
        )

    def serialize(self) -> str:
        return ",".join(str(i) for i in self.wiring)

    @classmethod
    def parse(cls, text: str, n_inputs: int) -> "CompressionPBox":
        return cls(tuple(int(part) for part in text.split(",")), n_inputs)


def apply_straight(box: StraightPBox, bits: str) -> str:
    """Rearrange bits through the box; the output is a permutation of the input."""
    if len(bits) != box.size:
        raise DomainError(
            f"bit string length {len(bits)} does not match box size {box.size}"
        )
    return "".join(bits[i] for i in box.permutation)


def apply_compression(box: CompressionPBox, bits: str) -> str:
    """Project the wired input positions; unwired positions are destroyed."""
    if len(bits) != box.n_inputs:
        raise DomainError(
            f"bit string length {len(bits)} does not match box inputs {box.n_inputs}"
        )
    return "".join(bits[i] for i in box.wiring)


def enumerate_straight(n: int) -> list[StraightPBox]:
    """All n! straight boxes of size n, in lexicographic wiring order."""
    if not 1 <= n <= _ENUMERATION_LIMIT:
        raise DomainError(
            f"enumeration supported for 1 <= n <= {_ENUMERATION_LIMIT}, got {n}"
        )
    return [StraightPBox(perm) for perm in itertools.permutations(range(n))]


def derive_key_code(key, box: CompressionPBox) -> str:
    """Compress a key's bit material into a short, non-invertible code.

    Accepts any object with a ``material`` bit-string attribute, or a bare bit
    string.  Equal material always yields equal codes; recovering the material
    from the code leaves 2^(n-m) candidates under distinct wiring.
    """
    material = getattr(key, "material", key)
    if not isinstance(material, str):
        raise DomainError(f"key material must be a bit string, got {type(material)!r}")
    if len(material) != box.n_inputs:
        raise DomainError(
            f"key material length {len(material)} does not match box inputs "
            f"{box.n_inputs}"
        )
    return apply_compression(box, material)
