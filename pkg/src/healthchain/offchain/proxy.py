"""Database proxy: lightweight checks and auditing in front of the silos.

Every request, allowed or not, adds exactly one entry to the audit trail.
Requests are handled one at a time under a lock, so callers on several
threads still get a strictly ordered trail.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from ..crypto import KeyPair, Signature, sign, verify
from ..encoding import canonical_json
from .audit import DENIED, READ, WRITE, AuditEntry, AuditTrail
from .connector import ConnectorDescriptor, verify_connector
from .errors import NotFoundError
from .silo import DataSilo

DEFAULT_CHECKS = ("signature-valid", "descriptor-valid", "actor-allowed", "record-exists")


@dataclass
class AccessPolicy:
    allowed: dict[str, set[str]] = field(default_factory=dict)
    checks: list[str] = field(default_factory=lambda: list(DEFAULT_CHECKS))

    def grant(self, actor_key: bytes | str, *operations: str) -> None:
        key = actor_key.hex() if isinstance(actor_key, bytes) else actor_key
        self.allowed.setdefault(key, set()).update(operations)

    def revoke(self, actor_key: bytes | str) -> None:
        key = actor_key.hex() if isinstance(actor_key, bytes) else actor_key
        self.allowed.pop(key, None)

    def permits(self, actor: str, operation: str) -> bool:
        return operation in self.allowed.get(actor, ())


@dataclass(frozen=True)
class ProxyRequest:
    operation: str
    descriptor: ConnectorDescriptor
    record_id: str
    document: Any
    signature: Signature

    @staticmethod
    def body(operation: str, descriptor: ConnectorDescriptor, record_id: str, document: Any) -> bytes:
        return canonical_json({"operation": operation, "descriptor": descriptor.to_json(),
                               "record_id": record_id, "document": document})

    @classmethod
    def signed(cls, actor_keys: KeyPair, operation: str, descriptor: ConnectorDescriptor,
               record_id: str, document: Any = None) -> "ProxyRequest":
        sig = sign(actor_keys.secret_key, cls.body(operation, descriptor, record_id, document))
        return cls(operation, descriptor, record_id, document, sig)

    @property
    def actor(self) -> str:
        return self.signature.signer.hex()


@dataclass(frozen=True)
class ProxyResponse:
    status: str  # "ok" | "denied" | "not-found"
    document: Any = None
    failed_check: Optional[str] = None
    entry: Optional[AuditEntry] = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


class ConnectorHandler:
    """Resolves descriptors to silos and performs the actual reads and writes."""

    def __init__(self, silos: Optional[list[DataSilo]] = None) -> None:
        self.silos: dict[str, DataSilo] = {}
        for silo in silos or []:
            self.register(silo)

    def register(self, silo: DataSilo) -> None:
        self.silos[silo.silo_id] = silo

    def resolve(self, descriptor: ConnectorDescriptor) -> DataSilo:
        try:
            return self.silos[descriptor.meta.get("silo_id", "")]
        except KeyError:
            raise NotFoundError(descriptor.meta.get("silo_id")) from None

    def read(self, descriptor: ConnectorDescriptor, record_id: str) -> Any:
        return self.resolve(descriptor).get(record_id)

    def write(self, descriptor: ConnectorDescriptor, record_id: str, document: Any) -> None:
        self.resolve(descriptor).put(record_id, document)


def _signature_valid(proxy: "DatabaseProxy", req: ProxyRequest) -> bool:
    body = ProxyRequest.body(req.operation, req.descriptor, req.record_id, req.document)
    return verify(req.signature.signer, body, req.signature)


def _descriptor_valid(proxy: "DatabaseProxy", req: ProxyRequest) -> bool:
    try:
        silo = proxy.handler.resolve(req.descriptor)
    except NotFoundError:
        return False
    return verify_connector(req.descriptor, silo.owner_keys.public_key)


def _actor_allowed(proxy: "DatabaseProxy", req: ProxyRequest) -> bool:
    return proxy.policy.permits(req.actor, req.operation)


def _record_exists(proxy: "DatabaseProxy", req: ProxyRequest) -> bool:
    if req.operation != READ:
        return True
    try:
        proxy.handler.read(req.descriptor, req.record_id)
    except NotFoundError:
        return False
    return True


CHECKS: dict[str, Callable[["DatabaseProxy", ProxyRequest], bool]] = {
    "signature-valid": _signature_valid,
    "descriptor-valid": _descriptor_valid,
    "actor-allowed": _actor_allowed,
    "record-exists": _record_exists,
}


class DatabaseProxy:
    def __init__(self, handler: ConnectorHandler, policy: AccessPolicy,
                 trail: Optional[AuditTrail] = None) -> None:
        unknown = [c for c in policy.checks if c not in CHECKS]
        if unknown:
            raise ValueError(f"unknown checks: {unknown}")
        self.handler = handler
        self.policy = policy
        self.trail = trail if trail is not None else AuditTrail()
        self._lock = threading.Lock()

    def handle(self, req: ProxyRequest) -> ProxyResponse:
        with self._lock:
            if req.operation not in (READ, WRITE):
                entry = self.trail.append(req.actor, DENIED, req.record_id, "bad-operation")
                return ProxyResponse("denied", failed_check="bad-operation", entry=entry)
            for name in self.policy.checks:
                if not CHECKS[name](self, req):
                    entry = self.trail.append(req.actor, DENIED, req.record_id, name)
                    status = "not-found" if name == "record-exists" else "denied"
                    return ProxyResponse(status, failed_check=name, entry=entry)
            if req.operation == READ:
                document = self.handler.read(req.descriptor, req.record_id)
            else:
                self.handler.write(req.descriptor, req.record_id, req.document)
                document = req.document
            entry = self.trail.append(req.actor, req.operation, req.record_id)
            return ProxyResponse("ok", document=document, entry=entry)

    def read(self, actor_keys: KeyPair, descriptor: ConnectorDescriptor, record_id: str) -> ProxyResponse:
        return self.handle(ProxyRequest.signed(actor_keys, READ, descriptor, record_id))

    def write(self, actor_keys: KeyPair, descriptor: ConnectorDescriptor, record_id: str,
              document: Any) -> ProxyResponse:
        return self.handle(ProxyRequest.signed(actor_keys, WRITE, descriptor, record_id, document))


def proxy_read(proxy: DatabaseProxy, actor_keys: KeyPair, descriptor: ConnectorDescriptor,
               record_id: str) -> ProxyResponse:
    return proxy.read(actor_keys, descriptor, record_id)


def proxy_write(proxy: DatabaseProxy, actor_keys: KeyPair, descriptor: ConnectorDescriptor,
                record_id: str, document: Any) -> ProxyResponse:
    return proxy.write(actor_keys, descriptor, record_id, document)
