"""Sink-mediated key exchange, mutual authentication, and masked aggregation.

Lifecycle: the sink deploys nodes with temporary bootstrap keys, provisions an
original key under each temp key, verifies pairs with key-code challenges,
and periodically rotates every verified node's original key under its current
one.  States move strictly forward: DEPLOYED, TEMP_KEYED, PROVISIONED,
VERIFIED.

Authentication responses are key codes: compression-box images of key
material.  In nonce mode the challenge nonce selects which key bits the box
taps (the input is the key material concatenated with the nonce, and the taps
stay inside the key half so a forger must match the true key on every tapped
bit); a replayed response fails against a fresh challenge.  In nonce-free
mode the code is a fixed compression of the key alone, which resists
eavesdropping (preimage ambiguity) but not replay: recording one exchange is
enough to impersonate.

Sensor readings are integers masked additively modulo a fixed modulus with a
per-(key, epoch) pad, so any intermediate node can aggregate ciphertexts by
plain addition and only the sink, holding every contributor's key, recovers
the plaintext sum.
"""

from __future__ import annotations

import enum
import hashlib
import random
from dataclasses import dataclass, field

from . import cipher
from .errors import DomainError, ProtocolOrderError, UnreachableError
from .keygraph import Key
from .pbox import CompressionPBox, apply_compression, derive_key_code
from .radio import Topology

__all__ = [
    "NodeState",
    "AuthMode",
    "AuthOutcome",
    "AuthParams",
    "PhParams",
    "KeySchedule",
    "SensorIdentity",
    "SinkState",
    "ProtocolMessage",
    "AuthTranscript",
    "EncryptedReading",
    "deploy",
    "provision",
    "verify_pair",
    "rotate_keys",
    "auth_code",
    "nonce_free_code",
    "mutual_authenticate",
    "impersonate",
    "encrypt_reading",
    "decrypt_reading",
    "aggregate",
    "sink_decrypt_sum",
]

SINK_ID = "C"


class NodeState(enum.Enum):
    DEPLOYED = "deployed"
    TEMP_KEYED = "temp_keyed"
    PROVISIONED = "provisioned"
    VERIFIED = "verified"


_STATE_ORDER = [
    NodeState.DEPLOYED,
    NodeState.TEMP_KEYED,
    NodeState.PROVISIONED,
    NodeState.VERIFIED,
]


class AuthMode(enum.Enum):
    NONCED = "nonced"
    NONCE_FREE = "nonce_free"


class AuthOutcome(enum.Enum):
    MUTUAL_OK = "mutual_ok"
    FAIL_A = "fail_a"
    FAIL_B = "fail_b"


@dataclass(frozen=True)
class AuthParams:
    key_bits: int = 64
    nonce_bits: int = 64
    code_bits: int = 16

    def __post_init__(self):
        if not 0 < self.code_bits < self.key_bits:
            raise DomainError(
                f"code_bits must satisfy 0 < m < key_bits, got {self.code_bits}"
            )


@dataclass(frozen=True)
class PhParams:
    """Additive-mask parameters; headroom keeps sums from wrapping."""

    modulus: int = 2**32
    max_group_size: int = 2**16

    @property
    def max_value(self) -> int:
        return self.modulus // self.max_group_size


DEFAULT_AUTH = AuthParams()
DEFAULT_PH = PhParams()


class KeySchedule:
    """Source of temp/original keys: scripted labels first, then generated ones.

    A scenario can pin the exact key labels the protocol narration uses (temp
    keys 2 and 5, original keys 6 and 7); once the script runs dry, labels are
    generated and material always comes from the seeded generator.
    """

    def __init__(self, key_bits: int = 64, seed: int = 0,
                 temp_labels: list | None = None, org_labels: list | None = None):
        self.key_bits = key_bits
        self._rng = random.Random(seed)
        self._temp_labels = [str(l) for l in (temp_labels or [])]
        self._org_labels = [str(l) for l in (org_labels or [])]
        self._temp_count = 0
        self._org_count = 0

    def _material(self) -> str:
        return format(self._rng.getrandbits(self.key_bits), f"0{self.key_bits}b")

    def next_temp(self) -> Key:
        self._temp_count += 1
        if self._temp_labels:
            label = self._temp_labels.pop(0)
        else:
            label = f"t{self._temp_count}"
        return Key(label, 0, self._material())

    def next_org(self) -> Key:
        self._org_count += 1
        if self._org_labels:
            label = self._org_labels.pop(0)
        else:
            label = f"o{self._org_count}"
        return Key(label, 0, self._material())

    def rotated(self, key: Key) -> Key:
        return Key(key.key_id, key.version + 1, self._material())

    def nonce(self, bits: int) -> str:
        return format(self._rng.getrandbits(bits), f"0{bits}b")


@dataclass
class SensorIdentity:
    node_id: str
    temp_key: Key
    original_key: Key | None = None
    state: NodeState = NodeState.DEPLOYED

    def advance(self, new_state: NodeState):
        if _STATE_ORDER.index(new_state) < _STATE_ORDER.index(self.state):
            raise ProtocolOrderError(
                f"{self.node_id}: cannot move from {self.state.value} back to "
                f"{new_state.value}"
            )
        self.state = new_state


@dataclass(frozen=True)
class ProtocolMessage:
    """A sealed key delivery; payload/encrypting_key feed closure analysis."""

    kind: str
    sender: str
    recipients: frozenset[str]
    payload: tuple[Key, ...]
    encrypting_key: Key
    nonce: bytes
    ciphertext: bytes
    epoch: int


@dataclass(frozen=True)
class AuthTranscript:
    """One authentication session as an eavesdropper would record it.

    challenge_a is issued by the initiator and answered by response_b (the
    responder's proof); challenge_b is the responder's counter-challenge
    answered by response_a.  A one-way sink verification leaves the reverse
    direction as None.
    """

    initiator: str
    responder: str
    challenge_a: str | None
    challenge_b: str | None
    response_a: str | None
    response_b: str | None
    outcome: AuthOutcome
    epoch: int = 0


@dataclass
class SinkState:
    """The single trusted party: registry, its own key, and all key history."""

    own_key: Key
    schedule: KeySchedule
    registry: dict[str, SensorIdentity] = field(default_factory=dict)
    roster: list[str] = field(default_factory=list)
    rotation_epoch: int = 0
    key_history: dict[str, dict[int, Key]] = field(default_factory=dict)
    message_log: list[ProtocolMessage] = field(default_factory=list)
    auth_log: list[AuthTranscript] = field(default_factory=list)
    auth: AuthParams = DEFAULT_AUTH
    ph: PhParams = DEFAULT_PH
    _message_counter: int = 0

    @classmethod
    def create(cls, seed: int = 0, schedule: KeySchedule | None = None,
               auth: AuthParams = DEFAULT_AUTH, ph: PhParams = DEFAULT_PH) -> "SinkState":
        schedule = schedule or KeySchedule(key_bits=auth.key_bits, seed=seed)
        own = Key("S1", 0, schedule._material())
        return cls(own_key=own, schedule=schedule, auth=auth, ph=ph)

    def identity(self, node_id: str) -> SensorIdentity:
        identity = self.registry.get(node_id)
        if identity is None:
            raise DomainError(f"unknown node {node_id!r}")
        return identity

    def _emit(self, kind: str, recipients, payload, encrypting_key: Key) -> ProtocolMessage:
        nonce = b"X" + self._message_counter.to_bytes(8, "big")
        self._message_counter += 1
        ciphertext = cipher.seal_key_list(
            encrypting_key.material,
            nonce,
            [[k.key_id, k.version, k.material] for k in payload],
        )
        message = ProtocolMessage(
            kind=kind,
            sender=SINK_ID,
            recipients=frozenset(recipients),
            payload=tuple(payload),
            encrypting_key=encrypting_key,
            nonce=nonce,
            ciphertext=ciphertext,
            epoch=self.rotation_epoch,
        )
        self.message_log.append(message)
        return message


def deploy(sink: SinkState, node_ids: list[str]) -> SinkState:
    """Register nodes and issue each a distinct temp key (state TEMP_KEYED)."""
    for node_id in node_ids:
        if node_id in sink.registry:
            raise DomainError(f"node {node_id!r} already deployed")
    for node_id in node_ids:
        identity = SensorIdentity(node_id, temp_key=sink.schedule.next_temp())
        identity.advance(NodeState.TEMP_KEYED)
        sink.registry[node_id] = identity
        sink.roster.append(node_id)
    return sink


def provision(sink: SinkState, node_id: str) -> tuple[SinkState, ProtocolMessage]:
    """Generate and store the node's original key; deliver it under the temp key."""
    identity = sink.identity(node_id)
    if identity.state is not NodeState.TEMP_KEYED:
        raise ProtocolOrderError(
            f"provision requires state temp_keyed, {node_id} is {identity.state.value}"
        )
    original = sink.schedule.next_org()
    identity.original_key = original
    identity.advance(NodeState.PROVISIONED)
    sink.key_history.setdefault(node_id, {})[sink.rotation_epoch] = original
    message = sink._emit("provision", {node_id}, [original], identity.temp_key)
    return sink, message


def _nonce_selected_box(nonce: str, params: AuthParams) -> CompressionPBox:
    # The nonce picks which key-half positions the code taps.
    digest = hashlib.blake2b(nonce.encode(), digest_size=8).digest()
    picker = random.Random(int.from_bytes(digest, "big"))
    wiring = tuple(picker.sample(range(params.key_bits), params.code_bits))
    return CompressionPBox(wiring, n_inputs=params.key_bits + params.nonce_bits)


def auth_code(key: Key, nonce: str, params: AuthParams = DEFAULT_AUTH) -> str:
    """Nonce-bound key code over the key material concatenated with the nonce."""
    if len(key.material) != params.key_bits:
        raise DomainError(
            f"key material is {len(key.material)} bits, expected {params.key_bits}"
        )
    if len(nonce) != params.nonce_bits:
        raise DomainError(f"nonce is {len(nonce)} bits, expected {params.nonce_bits}")
    box = _nonce_selected_box(nonce, params)
    return apply_compression(box, key.material + nonce)


def nonce_free_code(key: Key, params: AuthParams = DEFAULT_AUTH,
                    box: CompressionPBox | None = None) -> str:
    """Fixed key code: replayable, but leaves 2^(n-m) preimages to an eavesdropper."""
    if box is None:
        box = CompressionPBox.spread(params.key_bits, params.code_bits)
    return derive_key_code(key, box)


def verify_pair(sink: SinkState, a: str, b: str, *,
                mode: AuthMode = AuthMode.NONCED,
                answer_override: dict | None = None,
                keycode_box: CompressionPBox | None = None) -> bool:
    """Challenge both provisioned nodes; on success both become VERIFIED.

    answer_override maps node id to a callable(identity, nonce) -> code and
    exists to script misbehaving nodes (wrong key, stale nonce) in adversary
    scenarios; honest nodes answer with their own original key.
    """
    answer_override = answer_override or {}
    results = {}
    for node_id in (a, b):
        identity = sink.identity(node_id)
        if identity.state not in (NodeState.PROVISIONED, NodeState.VERIFIED):
            raise ProtocolOrderError(
                f"verify requires a provisioned node, {node_id} is "
                f"{identity.state.value}"
            )
        if mode is AuthMode.NONCED:
            nonce = sink.schedule.nonce(sink.auth.nonce_bits)
            expected = auth_code(identity.original_key, nonce, sink.auth)
        else:
            nonce = None
            expected = nonce_free_code(identity.original_key, sink.auth, keycode_box)
        answer = answer_override.get(node_id)
        if answer is None:
            response = expected
        else:
            response = answer(identity, nonce)
        ok = response == expected
        results[node_id] = ok
        sink.auth_log.append(
            AuthTranscript(
                initiator=SINK_ID,
                responder=node_id,
                challenge_a=nonce,
                challenge_b=None,
                response_a=None,
                response_b=response,
                outcome=AuthOutcome.MUTUAL_OK if ok else AuthOutcome.FAIL_B,
                epoch=sink.rotation_epoch,
            )
        )
    if results[a] and results[b]:
        sink.identity(a).advance(NodeState.VERIFIED)
        sink.identity(b).advance(NodeState.VERIFIED)
        return True
    return False


def rotate_keys(sink: SinkState) -> SinkState:
    """Advance the epoch: fresh original keys for every verified node.

    Each fresh key travels under the node's current original key, so a party
    that never held the old key cannot follow the rotation.  Provisioned but
    unverified nodes keep their key, carried forward to the new epoch.  No-op
    when nothing is verified.
    """
    verified = [n for n in sink.roster if sink.registry[n].state is NodeState.VERIFIED]
    if not verified:
        return sink
    new_epoch = sink.rotation_epoch + 1
    for node_id in sink.roster:
        identity = sink.registry[node_id]
        if identity.original_key is None:
            continue
        if identity.state is NodeState.VERIFIED:
            fresh = sink.schedule.rotated(identity.original_key)
            sink.key_history[node_id][new_epoch] = fresh
            sink._emit("rotate", {node_id}, [fresh], identity.original_key)
            identity.original_key = fresh
        else:
            sink.key_history[node_id][new_epoch] = identity.original_key
    sink.rotation_epoch = new_epoch
    return sink


def mutual_authenticate(a: str, b: str, shared_key: Key, *,
                        topology: Topology | None = None,
                        mode: AuthMode = AuthMode.NONCED,
                        params: AuthParams = DEFAULT_AUTH,
                        rng: random.Random | None = None,
                        a_holds: Key | None = None,
                        b_holds: Key | None = None,
                        keycode_box: CompressionPBox | None = None) -> AuthTranscript:
    """Two challenge-response rounds, one per direction.

    a_holds/b_holds are the keys each party actually answers with (defaults:
    the shared key); verification is always against the shared key.  The
    responder is checked first, so a aborts before proving itself to an
    impostor (FAIL_B leaves response_a unsent).
    """
    if topology is not None:
        if not (topology.has_link(a, b) and topology.has_link(b, a)):
            raise UnreachableError(f"no bidirectional link between {a!r} and {b!r}")
    rng = rng or random.Random(0)
    a_key = a_holds or shared_key
    b_key = b_holds or shared_key

    if mode is AuthMode.NONCED:
        challenge_a = format(rng.getrandbits(params.nonce_bits), f"0{params.nonce_bits}b")
        challenge_b = format(rng.getrandbits(params.nonce_bits), f"0{params.nonce_bits}b")
        response_b = auth_code(b_key, challenge_a, params)
        if response_b != auth_code(shared_key, challenge_a, params):
            return AuthTranscript(a, b, challenge_a, challenge_b, None, response_b,
                                  AuthOutcome.FAIL_B)
        response_a = auth_code(a_key, challenge_b, params)
        if response_a != auth_code(shared_key, challenge_b, params):
            return AuthTranscript(a, b, challenge_a, challenge_b, response_a,
                                  response_b, AuthOutcome.FAIL_A)
        return AuthTranscript(a, b, challenge_a, challenge_b, response_a, response_b,
                              AuthOutcome.MUTUAL_OK)

    response_b = nonce_free_code(b_key, params, keycode_box)
    expected = nonce_free_code(shared_key, params, keycode_box)
    if response_b != expected:
        return AuthTranscript(a, b, None, None, None, response_b, AuthOutcome.FAIL_B)
    response_a = nonce_free_code(a_key, params, keycode_box)
    if response_a != expected:
        return AuthTranscript(a, b, None, None, response_a, response_b,
                              AuthOutcome.FAIL_A)
    return AuthTranscript(a, b, None, None, response_a, response_b,
                          AuthOutcome.MUTUAL_OK)


def _recorded_proofs(victim: str, recorded: list[AuthTranscript]) -> list[str]:
    proofs = []
    for transcript in recorded:
        if transcript.outcome is not AuthOutcome.MUTUAL_OK:
            continue
        if transcript.responder == victim and transcript.response_b is not None:
            proofs.append(transcript.response_b)
        if transcript.initiator == victim and transcript.response_a is not None:
            proofs.append(transcript.response_a)
    return proofs


def impersonate(z: str, victim: str, recorded: list[AuthTranscript], *,
                true_key: Key,
                mode: AuthMode = AuthMode.NONCE_FREE,
                params: AuthParams = DEFAULT_AUTH,
                rng: random.Random | None = None,
                keycode_box: CompressionPBox | None = None) -> bool:
    """Replay the victim's recorded proofs against a verifier.

    With nonce-free key codes the verifier expects the victim's fixed code,
    so one recorded exchange suffices.  With nonces the verifier issues a
    fresh challenge whose code the recording cannot contain.
    """
    if not recorded:
        raise DomainError(f"{z!r} has recorded no transcripts of {victim!r}")
    proofs = _recorded_proofs(victim, recorded)
    if not proofs:
        raise DomainError(
            f"{z!r} has no successful transcript of {victim!r} to replay"
        )
    if mode is AuthMode.NONCE_FREE:
        expected = nonce_free_code(true_key, params, keycode_box)
    else:
        rng = rng or random.Random(0)
        fresh = format(rng.getrandbits(params.nonce_bits), f"0{params.nonce_bits}b")
        expected = auth_code(true_key, fresh, params)
    return any(proof == expected for proof in proofs)


@dataclass(frozen=True)
class EncryptedReading:
    producer: str
    ciphertext: int
    epoch: int
    contributors: tuple[str, ...]


def _mask(key: Key, epoch: int, modulus: int) -> int:
    digest = hashlib.blake2b(
        cipher.material_to_bytes(key.material) + epoch.to_bytes(8, "big"),
        digest_size=16,
        person=b"reading-mask",
    ).digest()
    return int.from_bytes(digest, "big") % modulus


def encrypt_reading(node_id: str, value: int, key: Key, epoch: int,
                    ph: PhParams = DEFAULT_PH) -> EncryptedReading:
    """Mask a reading additively; decryptable only with (key, epoch)."""
    if not 0 <= value < ph.max_value:
        raise DomainError(
            f"value {value} outside [0, {ph.max_value}) aggregation headroom"
        )
    ciphertext = (value + _mask(key, epoch, ph.modulus)) % ph.modulus
    return EncryptedReading(node_id, ciphertext, epoch, (node_id,))


def decrypt_reading(reading: EncryptedReading, key: Key,
                    ph: PhParams = DEFAULT_PH) -> int:
    return (reading.ciphertext - _mask(key, reading.epoch, ph.modulus)) % ph.modulus


def aggregate(readings: list[EncryptedReading],
              ph: PhParams = DEFAULT_PH) -> EncryptedReading:
    """Fold ciphertexts by modular addition; needs no key material at all."""
    if not readings:
        raise DomainError("cannot aggregate zero readings")
    if len(readings) == 1:
        return readings[0]
    epochs = {r.epoch for r in readings}
    if len(epochs) != 1:
        raise DomainError(f"cannot aggregate across epochs {sorted(epochs)}")
    contributors = tuple(c for r in readings for c in r.contributors)
    if len(contributors) > ph.max_group_size:
        raise DomainError(
            f"{len(contributors)} contributors exceed max group size "
            f"{ph.max_group_size}"
        )
    total = sum(r.ciphertext for r in readings) % ph.modulus
    return EncryptedReading("aggregate", total, readings[0].epoch, contributors)


def sink_decrypt_sum(sink: SinkState, agg: EncryptedReading,
                     contributors) -> int:
    """Strip every contributor's mask; requires their keys at the aggregate's epoch."""
    total_mask = 0
    for node_id in contributors:
        key = sink.key_history.get(node_id, {}).get(agg.epoch)
        if key is None:
            raise DomainError(
                f"sink holds no original key for {node_id!r} at epoch {agg.epoch}"
            )
        total_mask += _mask(key, agg.epoch, sink.ph.modulus)
    return (agg.ciphertext - total_mask) % sink.ph.modulus
