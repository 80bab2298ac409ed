"""Signed connector descriptors: the minimal on-chain stand-in for a silo."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional

from ..crypto import Signature, sign, verify
from ..encoding import canonical_json, loads_strict
from .errors import InvalidInputError
from .silo import DataSilo

MAX_DESCRIPTOR_BYTES = 1024


@dataclass(frozen=True)
class ConnectorDescriptor:
    name: str
    meta: dict[str, str]
    owner_signature: Signature

    def signing_bytes(self) -> bytes:
        return canonical_json({"name": self.name, "meta": self.meta})

    def to_json(self) -> dict[str, Any]:
        return {"name": self.name, "meta": self.meta,
                "owner_signature": self.owner_signature.to_json()}

    def to_bytes(self) -> bytes:
        return canonical_json(self.to_json())

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "ConnectorDescriptor":
        return cls(obj["name"], dict(obj["meta"]), Signature.from_json(obj["owner_signature"]))

    @classmethod
    def from_bytes(cls, data: bytes) -> "ConnectorDescriptor":
        return cls.from_json(loads_strict(data))

    @property
    def silo_id(self) -> str:
        return self.meta["silo_id"]


def create_connector(silo: DataSilo, name: str, meta: Optional[dict[str, str]] = None,
                     max_bytes: int = MAX_DESCRIPTOR_BYTES) -> ConnectorDescriptor:
    """Describe ``silo`` by name and reference pointers, signed by its owner.

    ``silo_id``, ``kind`` and a ``silo://`` locator are filled in; extra
    ``meta`` entries (a schema tag, say) must be strings.
    """
    full = {"silo_id": silo.silo_id, "kind": silo.kind, "locator": f"silo://{silo.silo_id}"}
    for key, value in (meta or {}).items():
        if not isinstance(key, str) or not isinstance(value, str):
            raise InvalidInputError("descriptor meta must map strings to strings")
        full[key] = value
    if full["silo_id"] != silo.silo_id or not full["locator"].startswith(f"silo://{silo.silo_id}"):
        raise InvalidInputError("meta must reference the silo being described")
    unsigned = canonical_json({"name": name, "meta": full})
    descriptor = ConnectorDescriptor(name, full, sign(silo.owner_keys.secret_key, unsigned))
    if len(descriptor.to_bytes()) > max_bytes:
        raise InvalidInputError(f"descriptor exceeds {max_bytes} bytes")
    return descriptor


def verify_connector(descriptor: ConnectorDescriptor, owner_public_key: bytes) -> bool:
    return verify(owner_public_key, descriptor.signing_bytes(), descriptor.owner_signature)
