"""Physical layer: path-loss models, connectivity derivation, and ON-OFF keying.

Received power follows the Friis free-space equation beyond the far-field
distance d0, generalized by the log-distance model with a configurable path
loss exponent.  A directed link exists wherever the received power clears the
receiver's sensitivity threshold, so per-node sensitivity overrides produce
asymmetric link sets.

All power arithmetic is carried out in linear milliwatts; dBm conversion is
provided for the reporting boundary only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigError, DemodulationError, DomainError

__all__ = [
    "RadioParams",
    "NodePosition",
    "Topology",
    "OokWaveform",
    "friis_received_power",
    "log_distance_received_power",
    "build_topology",
    "ook_modulate",
    "ook_demodulate",
    "mw_to_dbm",
]


@dataclass(frozen=True)
class RadioParams:
    """Transmitter/receiver constants for the propagation model.

    tx_power_mw is the transmit power, gain_tx/gain_rx the dimensionless
    antenna gains, wavelength_m the carrier wavelength, system_loss the
    aggregate loss factor (>= 1), far_field_m the reference distance below
    which the model is undefined, path_loss_exponent the log-distance decay
    rate, and rx_sensitivity_mw the default receiver threshold used when
    deriving connectivity.
    """

    tx_power_mw: float = 1.0
    gain_tx: float = 1.0
    gain_rx: float = 1.0
    wavelength_m: float = 0.125
    system_loss: float = 1.0
    far_field_m: float = 1.0
    path_loss_exponent: float = 2.0
    rx_sensitivity_mw: float = 1e-9

    def __post_init__(self):
        if self.system_loss < 1.0:
            raise ConfigError(f"system_loss must be >= 1, got {self.system_loss}")
        for name in ("tx_power_mw", "wavelength_m", "far_field_m"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.path_loss_exponent <= 0:
            raise ConfigError(
                f"path_loss_exponent must be > 0, got {self.path_loss_exponent}"
            )
        if self.rx_sensitivity_mw <= 0:
            raise ConfigError(
                f"rx_sensitivity_mw must be > 0, got {self.rx_sensitivity_mw}"
            )

    @classmethod
    def free_space(cls, **overrides) -> "RadioParams":
        """Preset: 2.4 GHz free-space propagation (exponent 2)."""
        return cls(**{"path_loss_exponent": 2.0, **overrides})

    @classmethod
    def urban(cls, **overrides) -> "RadioParams":
        """Preset: cluttered outdoor environment (exponent 3)."""
        return cls(**{"path_loss_exponent": 3.0, **overrides})


PRESETS = {"free_space": RadioParams.free_space, "urban": RadioParams.urban}


@dataclass(frozen=True)
class NodePosition:
    node_id: str
    x_m: float
    y_m: float

    def distance_to(self, other: "NodePosition") -> float:
        return math.hypot(self.x_m - other.x_m, self.y_m - other.y_m)


@dataclass
class Topology:
    """Directed connectivity graph with per-link received power in mW."""

    positions: dict[str, NodePosition]
    links: dict[tuple[str, str], float]
    _out: dict[str, list[str]] = field(default_factory=dict, repr=False)
    _in: dict[str, list[str]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._out:
            self._out = {n: [] for n in self.positions}
            self._in = {n: [] for n in self.positions}
            for a, b in sorted(self.links):
                self._out[a].append(b)
                self._in[b].append(a)

    @property
    def nodes(self) -> list[str]:
        return sorted(self.positions)

    def has_link(self, sender: str, receiver: str) -> bool:
        return (sender, receiver) in self.links

    def out_neighbors(self, node: str) -> list[str]:
        self._require(node)
        return list(self._out[node])

    def in_neighbors(self, node: str) -> list[str]:
        self._require(node)
        return list(self._in[node])

    def _require(self, node: str):
        if node not in self.positions:
            raise DomainError(f"unknown node {node!r}")


def friis_received_power(params: RadioParams, distance_m: float) -> float:
    """Free-space received power in mW at distance_m >= far_field_m.

    P_rcvd = P_tx * G_t * G_r * lambda^2 / ((4*pi)^2 * d^2 * L)
    """
    if distance_m < params.far_field_m:
        raise DomainError(
            f"distance_m={distance_m} is below the far-field distance "
            f"far_field_m={params.far_field_m}; the free-space model requires "
            "distance_m >= far_field_m"
        )
    numerator = params.tx_power_mw * params.gain_tx * params.gain_rx * params.wavelength_m**2
    return numerator / ((4.0 * math.pi) ** 2 * distance_m**2 * params.system_loss)


def log_distance_received_power(params: RadioParams, distance_m: float) -> float:
    """Log-distance received power: the free-space value at d0 scaled by (d0/d)^gamma."""
    if distance_m < params.far_field_m:
        raise DomainError(
            f"distance_m={distance_m} is below the far-field distance "
            f"far_field_m={params.far_field_m}; the log-distance model requires "
            "distance_m >= far_field_m"
        )
    p_d0 = friis_received_power(params, params.far_field_m)
    return p_d0 * (params.far_field_m / distance_m) ** params.path_loss_exponent


def build_topology(
    params: RadioParams,
    positions: list[NodePosition] | tuple[NodePosition, ...],
    sensitivity_overrides: dict[str, float] | None = None,
) -> Topology:
    """Derive the directed link set from positions and the propagation model.

    A link a->b exists iff the log-distance received power at dist(a, b) is at
    least b's sensitivity threshold (inclusive).  Pairs closer than the
    far-field distance are physically adjacent and always linked; their
    annotated power is the model's value at the far-field distance.
    """
    if not positions:
        raise ConfigError("positions must be nonempty")
    by_id: dict[str, NodePosition] = {}
    for pos in positions:
        if pos.node_id in by_id:
            raise ConfigError(f"duplicate node id {pos.node_id!r}")
        by_id[pos.node_id] = pos
    overrides = sensitivity_overrides or {}
    for node in overrides:
        if node not in by_id:
            raise ConfigError(f"sensitivity override for unknown node {node!r}")

    links: dict[tuple[str, str], float] = {}
    for a in by_id.values():
        for b in by_id.values():
            if a.node_id == b.node_id:
                continue
            d = a.distance_to(b)
            threshold = overrides.get(b.node_id, params.rx_sensitivity_mw)
            if d < params.far_field_m:
                links[(a.node_id, b.node_id)] = log_distance_received_power(
                    params, params.far_field_m
                )
                continue
            power = log_distance_received_power(params, d)
            if power >= threshold:
                links[(a.node_id, b.node_id)] = power
    return Topology(positions=by_id, links=links)


@dataclass(frozen=True)
class OokWaveform:
    """A transmitted symbol sequence; each energy is one of the two OOK levels."""

    symbol_energies: tuple[float, ...]


def _check_bits(bits: str):
    if not bits:
        raise DomainError("bit string must be nonempty")
    bad = set(bits) - {"0", "1"}
    if bad:
        raise DomainError(f"bit string contains non-binary symbols {sorted(bad)}")


def ook_modulate(bits: str, e0: float, e1: float) -> OokWaveform:
    """Map bit i to symbol energy e1 if set, e0 otherwise (transmitter off)."""
    if not e0 < e1:
        raise DomainError(f"OOK requires e0 < e1, got e0={e0}, e1={e1}")
    _check_bits(bits)
    return OokWaveform(tuple(e1 if bit == "1" else e0 for bit in bits))


def ook_demodulate(wave: OokWaveform, e0: float, e1: float) -> str:
    """Exact inverse of ook_modulate over the two-level energy alphabet."""
    if not e0 < e1:
        raise DomainError(f"OOK requires e0 < e1, got e0={e0}, e1={e1}")
    bits = []
    for i, energy in enumerate(wave.symbol_energies):
        if energy == e1:
            bits.append("1")
        elif energy == e0:
            bits.append("0")
        else:
            raise DemodulationError(
                f"symbol {i} has energy {energy!r}, not in {{{e0!r}, {e1!r}}}"
            )
    return "".join(bits)


def mw_to_dbm(power_mw: float) -> float:
    """Reporting-boundary conversion; power must be positive."""
    if power_mw <= 0:
        raise DomainError(f"power must be > 0 to express in dBm, got {power_mw}")
    return 10.0 * math.log10(power_mw)
