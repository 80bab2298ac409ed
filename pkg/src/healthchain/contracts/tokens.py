"""On-chain registry of tokenized access grants with an audit trail.

Every call that reaches a token (create, access, revoke) emits an ``audit``
log event. Reads through ``access`` are transactions too, so they leave a
trace; a revoked token yields only its status and the access is logged as
``Denied``.
"""

from __future__ import annotations

from typing import Any

from ..crypto import Signature, digest_hex, verify
from ..encoding import canonical_json
from ..state import address_from_public_key
from ..vm import Contract, Frame, external, prototype

ACTIVE, REVOKED = "Active", "Revoked"
AUDIT_TOPIC = "audit"
# charged as compute steps for the in-contract signature check
VERIFY_STEPS = 200


def _parse_token(token: Any) -> tuple[bytes, Signature, dict, str]:
    box = token["sealed_payload"]
    if not isinstance(box, dict):
        raise ValueError("sealed_payload")
    labels = token["algorithm_labels"]
    if not isinstance(labels, dict) or set(labels) != {"encryption", "signing"}:
        raise ValueError("algorithm_labels")
    hint = token["recipient_hint"]
    bytes.fromhex(hint)
    return canonical_json(box), Signature.from_json(token["owner_signature"]), labels, hint


@prototype
class TokenRegistry(Contract):
    prototype_name = "token_registry"

    def _audit(self, ctx: Frame, action: str, token_id: str) -> None:
        ctx.emit(AUDIT_TOPIC, {"action": action, "token_id": token_id, "actor": ctx.caller})

    def _record(self, ctx: Frame, token_id: Any) -> dict:
        record = ctx.load("token", token_id) if isinstance(token_id, str) else None
        ctx.require(record is not None, "not-found")
        return record

    @external
    def register(self, ctx: Frame, token: dict) -> str:
        try:
            box_bytes, signature, labels, hint = _parse_token(token)
        except (KeyError, TypeError, ValueError):
            ctx.revert("invalid-token")
        ctx.step(VERIFY_STEPS)
        ctx.require(verify(signature.signer, box_bytes, signature), "invalid-token")
        ctx.require(address_from_public_key(signature.signer) == ctx.caller, "invalid-token")
        token_id = digest_hex(box_bytes)
        ctx.require(ctx.load("token", token_id) is None, "duplicate-token")
        ctx.store("token", token_id, {
            "token_id": token_id,
            "sealed_payload": token["sealed_payload"],
            "owner_signature": signature.to_json(),
            "algorithm_labels": labels,
            "recipient_hint": hint,
            "owner": ctx.caller,
            "status": ACTIVE,
        })
        self._audit(ctx, "TokenCreate", token_id)
        return token_id

    @external
    def access(self, ctx: Frame, token_id: str) -> dict:
        record = self._record(ctx, token_id)
        if record["status"] == REVOKED:
            self._audit(ctx, "Denied", token_id)
            return {"token_id": token_id, "status": REVOKED}
        self._audit(ctx, "TokenAccess", token_id)
        return record

    @external
    def revoke(self, ctx: Frame, token_id: str) -> None:
        record = self._record(ctx, token_id)
        ctx.require(ctx.caller == record["owner"], "unauthorized")
        ctx.require(record["status"] == ACTIVE, "already-revoked")
        record["status"] = REVOKED
        ctx.store("token", token_id, record)
        self._audit(ctx, "TokenRevoke", token_id)

    @external
    def status(self, ctx: Frame, token_id: str) -> str:
        return self._record(ctx, token_id)["status"]
