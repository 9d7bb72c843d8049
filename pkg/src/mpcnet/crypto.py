"""Hash commitments and party signing keys."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

NONCE_BYTES = 16


def sha3(data: bytes) -> bytes:
    return hashlib.sha3_256(data).digest()


@dataclass(frozen=True)
class Commitment:
    digest: bytes
    value: bytes
    nonce: bytes

    @classmethod
    def make(cls, value: bytes, nonce: bytes) -> "Commitment":
        if len(nonce) != NONCE_BYTES:
            raise ValueError("nonce must be 16 bytes")
        return cls(sha3(value + nonce), value, nonce)

    def opening(self) -> bytes:
        return self.value + self.nonce


def check_opening(digest: bytes, opening: bytes) -> bool:
    return sha3(opening) == digest


def split_opening(opening: bytes) -> tuple[bytes, bytes]:
    return opening[:-NONCE_BYTES], opening[-NONCE_BYTES:]


class SigningKey:
    def __init__(self, private: Ed25519PrivateKey):
        self._key = private

    @classmethod
    def derive(cls, seed: int, party: int) -> "SigningKey":
        material = sha3(b"sign" + seed.to_bytes(16, "little", signed=True) + party.to_bytes(4, "little"))
        return cls(Ed25519PrivateKey.from_private_bytes(material))

    def sign(self, message: bytes) -> bytes:
        return self._key.sign(message)

    def public_bytes(self) -> bytes:
        return self._key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)


def verify_signature(public: bytes, message: bytes, signature: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public).verify(signature, message)
    except (InvalidSignature, ValueError):
        return False
    return True
