"""Off-chain packaging and redemption of access tokens.

A token seals a connector descriptor to one recipient's public key and is
signed by the data owner over the sealed bytes. Only the recipient's secret
key opens it, and the recovered descriptor is re-verified against the owner's
key before it is handed back.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Any, Optional

from ..crypto import (
    ENCRYPTION_ALGORITHM,
    SIGNATURE_ALGORITHM,
    DecryptionError,
    KeyPair,
    SealedBox,
    Signature,
    digest_hex,
    open_box,
    seal,
    sign,
    verify,
)
from .audit import DENIED, TOKEN_ACCESS, TOKEN_CREATE, AuditTrail
from .connector import ConnectorDescriptor, verify_connector
from .errors import InvalidInputError, TokenIntegrityError, TokenRevokedError

ACTIVE, REVOKED = "Active", "Revoked"
ALGORITHM_LABELS = {"encryption": ENCRYPTION_ALGORITHM, "signing": SIGNATURE_ALGORITHM}


@dataclass(frozen=True)
class TokenRecord:
    sealed_payload: SealedBox
    owner_signature: Signature
    algorithm_labels: dict[str, str]
    recipient_hint: str
    status: str = ACTIVE

    @property
    def token_id(self) -> str:
        return digest_hex(self.sealed_payload.to_bytes())

    def to_json(self) -> dict[str, Any]:
        """The form accepted by the on-chain token registry's ``register``."""
        return {
            "sealed_payload": self.sealed_payload.to_json(),
            "owner_signature": self.owner_signature.to_json(),
            "algorithm_labels": dict(self.algorithm_labels),
            "recipient_hint": self.recipient_hint,
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "TokenRecord":
        return cls(
            SealedBox.from_json(obj["sealed_payload"]),
            Signature.from_json(obj["owner_signature"]),
            dict(obj["algorithm_labels"]),
            obj["recipient_hint"],
            obj.get("status", ACTIVE),
        )

    def revoked(self) -> "TokenRecord":
        return replace(self, status=REVOKED)


def tokenize_connector(descriptor: ConnectorDescriptor, owner_keys: KeyPair,
                       recipient_public_key: bytes, rng: Optional[random.Random] = None,
                       trail: Optional[AuditTrail] = None) -> TokenRecord:
    if not verify_connector(descriptor, owner_keys.public_key):
        raise InvalidInputError("descriptor does not verify under the owner key")
    box = seal(recipient_public_key, descriptor.to_bytes(), rng, sender_hint=owner_keys.public_key)
    token = TokenRecord(box, sign(owner_keys.secret_key, box.to_bytes()), dict(ALGORITHM_LABELS),
                        recipient_public_key.hex())
    if trail is not None:
        trail.append(owner_keys.key_id, TOKEN_CREATE, token.token_id)
    return token


def redeem_token(token: TokenRecord, recipient_keys: KeyPair,
                 trail: Optional[AuditTrail] = None) -> ConnectorDescriptor:
    """Recover the descriptor sealed in ``token``.

    Raises ``TokenRevokedError``, ``DecryptionError`` or ``TokenIntegrityError``;
    each failure is logged as ``Denied`` when a trail is given.
    """

    def deny(reason: str) -> None:
        if trail is not None:
            trail.append(recipient_keys.key_id, DENIED, token.token_id, reason)

    if token.status != ACTIVE:
        deny("revoked")
        raise TokenRevokedError(token.token_id)
    box_bytes = token.sealed_payload.to_bytes()
    owner_key = token.owner_signature.signer
    if not verify(owner_key, box_bytes, token.owner_signature):
        deny("token-signature")
        raise TokenIntegrityError("owner signature does not cover the sealed payload")
    try:
        plaintext = open_box(recipient_keys.secret_key, token.sealed_payload)
    except DecryptionError:
        deny("decryption")
        raise
    try:
        descriptor = ConnectorDescriptor.from_bytes(plaintext)
    except (ValueError, KeyError, TypeError):
        deny("descriptor-format")
        raise TokenIntegrityError("sealed payload is not a connector descriptor") from None
    if not verify_connector(descriptor, owner_key):
        deny("descriptor-signature")
        raise TokenIntegrityError("descriptor is not signed by the token owner")
    if trail is not None:
        trail.append(recipient_keys.key_id, TOKEN_ACCESS, token.token_id)
    return descriptor
