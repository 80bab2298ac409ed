"""Append-only, hash-chained audit trail.

Each entry's digest is ``SHA-256(previous digest || canonical entry fields)``
with 32 zero bytes before the first entry, so mutating or dropping any entry
breaks every digest from that point on.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Optional

from ..crypto import digest_hex
from ..encoding import canonical_json

READ, WRITE = "Read", "Write"
TOKEN_CREATE, TOKEN_ACCESS, TOKEN_REVOKE, DENIED = "TokenCreate", "TokenAccess", "TokenRevoke", "Denied"
ACTIONS = (READ, WRITE, TOKEN_CREATE, TOKEN_ACCESS, TOKEN_REVOKE, DENIED)
GENESIS_DIGEST = "00" * 32


@dataclass(frozen=True)
class AuditEntry:
    seq: int
    actor: str
    action: str
    target: str
    reason: Optional[str]
    entry_digest: str

    def fields(self) -> dict[str, Any]:
        return {"seq": self.seq, "actor": self.actor, "action": self.action,
                "target": self.target, "reason": self.reason}

    def to_json(self) -> dict[str, Any]:
        return {**self.fields(), "entry_digest": self.entry_digest}

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "AuditEntry":
        return cls(obj["seq"], obj["actor"], obj["action"], obj["target"], obj.get("reason"),
                   obj["entry_digest"])


def chain_digest(prev_digest: str, fields: dict[str, Any]) -> str:
    return digest_hex(bytes.fromhex(prev_digest) + canonical_json(fields))


class AuditTrail:
    def __init__(self, path: Optional[str | Path] = None) -> None:
        self.entries: list[AuditEntry] = []
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def head(self) -> str:
        return self.entries[-1].entry_digest if self.entries else GENESIS_DIGEST

    def append(self, actor: str, action: str, target: str, reason: Optional[str] = None) -> AuditEntry:
        if action not in ACTIONS:
            raise ValueError(f"unknown audit action {action!r}")
        with self._lock:
            fields = {"seq": len(self.entries), "actor": actor, "action": action,
                      "target": target, "reason": reason}
            entry = AuditEntry(**fields, entry_digest=chain_digest(self.head, fields))
            self.entries.append(entry)
            if self.path is not None:
                with self.path.open("a") as fh:
                    fh.write(json.dumps(entry.to_json(), sort_keys=True) + "\n")
            return entry

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_json(), sort_keys=True) + "\n" for e in self.entries)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def load(cls, path: str | Path) -> "AuditTrail":
        trail = cls()
        for line in Path(path).read_text().splitlines():
            if line:
                trail.entries.append(AuditEntry.from_json(json.loads(line)))
        trail.path = Path(path)
        return trail


@dataclass(frozen=True)
class AuditVerdict:
    ok: bool
    seq: Optional[int] = None

    def __bool__(self) -> bool:
        return self.ok


def verify_audit(entries: Iterable[AuditEntry]) -> AuditVerdict:
    """Recompute the chain; a rejection names the first entry that fails."""
    prev = GENESIS_DIGEST
    for index, entry in enumerate(entries):
        if entry.seq != index or chain_digest(prev, entry.fields()) != entry.entry_digest:
            return AuditVerdict(False, entry.seq)
        prev = entry.entry_digest
    return AuditVerdict(True)
