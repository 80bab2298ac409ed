"""Digests, signing key pairs and sealed (anonymous-sender) encryption.

One scheme of each kind is used repo-wide:

* digest: SHA-256
* signatures: Ed25519
* sealing: ephemeral X25519 key agreement, HKDF-SHA256, ChaCha20-Poly1305

A :class:`KeyPair` holds a single 32-byte secret seed from which both the
signing key and the key-agreement key are derived, so one identity can sign
and receive sealed messages. The public key is the concatenation of the two
public halves (64 bytes).
"""

from __future__ import annotations

import hashlib
import os
import random
from dataclasses import dataclass
from typing import Any, Optional

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .encoding import canonical_json, loads_strict

HASH_ALGORITHM = "SHA-256"
SIGNATURE_ALGORITHM = "Ed25519"
ENCRYPTION_ALGORITHM = "X25519-HKDF-SHA256-ChaCha20Poly1305"

DIGEST_SIZE = 32
SECRET_KEY_SIZE = 32
PUBLIC_KEY_SIZE = 64
_HALF = 32
_TAG_SIZE = 16

_RAW = serialization.Encoding.Raw
_RAW_PUB = serialization.PublicFormat.Raw


class KeyFormatError(ValueError):
    """A key has the wrong length or encoding."""


class DecryptionError(Exception):
    """Opening a sealed box failed.

    Raised identically for a wrong key, a tampered box and a truncated box.
    """

    def __init__(self) -> None:
        super().__init__("decryption failed")


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def digest_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _sub_seed(secret_key: bytes, label: bytes) -> bytes:
    return hashlib.sha256(label + secret_key).digest()


def _check_secret(secret_key: bytes) -> bytes:
    if not isinstance(secret_key, (bytes, bytearray)) or len(secret_key) != SECRET_KEY_SIZE:
        raise KeyFormatError(f"secret key must be {SECRET_KEY_SIZE} bytes")
    return bytes(secret_key)


def _check_public(public_key: bytes) -> bytes:
    if not isinstance(public_key, (bytes, bytearray)) or len(public_key) != PUBLIC_KEY_SIZE:
        raise KeyFormatError(f"public key must be {PUBLIC_KEY_SIZE} bytes")
    return bytes(public_key)


def _signing_key(secret_key: bytes) -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(_sub_seed(_check_secret(secret_key), b"sign"))


def _agreement_key(secret_key: bytes) -> X25519PrivateKey:
    return X25519PrivateKey.from_private_bytes(_sub_seed(_check_secret(secret_key), b"seal"))


def public_key_of(secret_key: bytes) -> bytes:
    sign_pub = _signing_key(secret_key).public_key().public_bytes(_RAW, _RAW_PUB)
    seal_pub = _agreement_key(secret_key).public_key().public_bytes(_RAW, _RAW_PUB)
    return sign_pub + seal_pub


@dataclass(frozen=True)
class KeyPair:
    public_key: bytes
    secret_key: bytes

    @classmethod
    def from_secret(cls, secret_key: bytes) -> "KeyPair":
        return cls(public_key_of(secret_key), bytes(secret_key))

    @classmethod
    def generate(cls, rng: Optional[random.Random] = None) -> "KeyPair":
        """Make a key pair; pass a seeded ``random.Random`` for reproducible runs."""
        seed = rng.randbytes(SECRET_KEY_SIZE) if rng is not None else os.urandom(SECRET_KEY_SIZE)
        return cls.from_secret(seed)

    @property
    def key_id(self) -> str:
        return self.public_key.hex()

    def __repr__(self) -> str:  # keep secrets out of logs and transcripts
        return f"KeyPair(public_key={self.public_key.hex()[:16]}...)"


@dataclass(frozen=True)
class Signature:
    bytes: bytes
    signer: bytes

    def to_json(self) -> dict[str, str]:
        return {"bytes": self.bytes.hex(), "signer": self.signer.hex()}

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "Signature":
        return cls(bytes.fromhex(obj["bytes"]), bytes.fromhex(obj["signer"]))


def sign(secret_key: bytes, message: bytes) -> Signature:
    key = _signing_key(secret_key)
    return Signature(key.sign(message), public_key_of(secret_key))


def verify(public_key: bytes, message: bytes, signature: Signature) -> bool:
    """True iff ``signature`` is a valid signature of ``message`` by ``public_key``."""
    try:
        public_key = _check_public(public_key)
    except KeyFormatError:
        return False
    if signature.signer != public_key:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(public_key[:_HALF]).verify(signature.bytes, message)
    except (InvalidSignature, ValueError):
        return False
    return True


@dataclass(frozen=True)
class SealedBox:
    """Ciphertext layout: ephemeral X25519 public key (32) || AEAD output."""

    ciphertext: bytes
    recipient: bytes
    sender_hint: Optional[bytes] = None

    def to_json(self) -> dict[str, Any]:
        return {
            "ciphertext": self.ciphertext.hex(),
            "recipient": self.recipient.hex(),
            "sender_hint": self.sender_hint.hex() if self.sender_hint is not None else None,
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "SealedBox":
        hint = obj.get("sender_hint")
        return cls(
            bytes.fromhex(obj["ciphertext"]),
            bytes.fromhex(obj["recipient"]),
            bytes.fromhex(hint) if hint is not None else None,
        )

    def to_bytes(self) -> bytes:
        return canonical_json(self.to_json())

    @classmethod
    def from_bytes(cls, data: bytes) -> "SealedBox":
        return cls.from_json(loads_strict(data))


def _box_key(shared: bytes, ephemeral_pub: bytes, recipient_seal_pub: bytes) -> tuple[bytes, bytes]:
    okm = HKDF(
        algorithm=hashes.SHA256(),
        length=32 + 12,
        salt=None,
        info=b"healthchain-seal" + ephemeral_pub + recipient_seal_pub,
    ).derive(shared)
    return okm[:32], okm[32:]


def seal(
    recipient_public_key: bytes,
    plaintext: bytes,
    rng: Optional[random.Random] = None,
    sender_hint: Optional[bytes] = None,
) -> SealedBox:
    recipient_public_key = _check_public(recipient_public_key)
    seal_pub = recipient_public_key[_HALF:]
    seed = rng.randbytes(32) if rng is not None else os.urandom(32)
    ephemeral = X25519PrivateKey.from_private_bytes(seed)
    ephemeral_pub = ephemeral.public_key().public_bytes(_RAW, _RAW_PUB)
    shared = ephemeral.exchange(X25519PublicKey.from_public_bytes(seal_pub))
    key, nonce = _box_key(shared, ephemeral_pub, seal_pub)
    body = ChaCha20Poly1305(key).encrypt(nonce, plaintext, seal_pub)
    return SealedBox(ephemeral_pub + body, recipient_public_key, sender_hint)


def open_box(secret_key: bytes, box: SealedBox) -> bytes:
    agreement = _agreement_key(secret_key)
    seal_pub = agreement.public_key().public_bytes(_RAW, _RAW_PUB)
    data = box.ciphertext
    if len(data) < _HALF + _TAG_SIZE:
        raise DecryptionError()
    ephemeral_pub, body = data[:_HALF], data[_HALF:]
    try:
        shared = agreement.exchange(X25519PublicKey.from_public_bytes(ephemeral_pub))
        key, nonce = _box_key(shared, ephemeral_pub, seal_pub)
        return ChaCha20Poly1305(key).decrypt(nonce, body, seal_pub)
    except (InvalidTag, ValueError):
        raise DecryptionError() from None


# ``open`` is the public name; ``open_box`` avoids shadowing the builtin inside
# this package.
open = open_box  # noqa: A001
