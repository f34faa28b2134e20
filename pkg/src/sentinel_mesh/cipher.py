"""Toy keyed stream cipher for protocol payloads.

A keystream of BLAKE2b blocks over (key material, nonce, counter) is XORed
with the plaintext.  This gives bit-exact, deterministic transcripts that are
sufficient for secrecy-closure analysis; it makes no real cryptographic
claims.  A production cipher can be slotted in behind encrypt/decrypt without
touching callers.
"""

from __future__ import annotations

import hashlib
import json

from .errors import DomainError

_BLOCK = 32

# Plaintext framing for key payloads: trial decryption with a wrong key must
# be detectable, so payloads are prefixed with a fixed magic.
PAYLOAD_MAGIC = b"SMKY"


def material_to_bytes(material: str) -> bytes:
    """Pack a bit string into bytes (left-padded to a whole number of bytes)."""
    if not material or set(material) - {"0", "1"}:
        raise DomainError(f"key material must be a nonempty bit string")
    width = (len(material) + 7) // 8
    return int(material, 2).to_bytes(width, "big") + len(material).to_bytes(2, "big")


def _keystream(key_bytes: bytes, nonce: bytes, length: int) -> bytes:
    stream = bytearray()
    counter = 0
    while len(stream) < length:
        block = hashlib.blake2b(
            key_bytes + nonce + counter.to_bytes(8, "big"), digest_size=_BLOCK
        ).digest()
        stream.extend(block)
        counter += 1
    return bytes(stream[:length])


def encrypt(material: str, nonce: bytes, plaintext: bytes) -> bytes:
    key_bytes = material_to_bytes(material)
    stream = _keystream(key_bytes, nonce, len(plaintext))
    return bytes(p ^ s for p, s in zip(plaintext, stream))


def decrypt(material: str, nonce: bytes, ciphertext: bytes) -> bytes:
    return encrypt(material, nonce, ciphertext)  # XOR stream is an involution


def seal_payload(material: str, nonce: bytes, body: bytes) -> bytes:
    return encrypt(material, nonce, PAYLOAD_MAGIC + body)


def open_payload(material: str, nonce: bytes, ciphertext: bytes) -> bytes | None:
    """Trial decryption: returns the body, or None when the key is wrong."""
    plaintext = decrypt(material, nonce, ciphertext)
    if not plaintext.startswith(PAYLOAD_MAGIC):
        return None
    return plaintext[len(PAYLOAD_MAGIC):]


def seal_key_list(material: str, nonce: bytes, entries: list) -> bytes:
    """Seal a list of (key_id, version, material) triples."""
    return seal_payload(material, nonce, json.dumps(entries).encode())


def open_key_list(material: str, nonce: bytes, ciphertext: bytes) -> list | None:
    body = open_payload(material, nonce, ciphertext)
    if body is None:
        return None
    return json.loads(body.decode())
