"""File-backed data silos (the storage layer).

Silo file format::

    {"silo_id": "...", "kind": "LFQ" | "HFQ", "records": {record_id: document}}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from ..crypto import KeyPair
from .errors import InvalidInputError, NotFoundError

LFQ, HFQ = "LFQ", "HFQ"


@dataclass
class DataSilo:
    silo_id: str
    kind: str
    owner_keys: KeyPair
    records: dict[str, Any] = field(default_factory=dict)
    path: Optional[Path] = None

    def __post_init__(self) -> None:
        if self.kind not in (LFQ, HFQ):
            raise InvalidInputError(f"silo kind must be LFQ or HFQ, got {self.kind!r}")

    def get(self, record_id: str) -> Any:
        try:
            return self.records[record_id]
        except KeyError:
            raise NotFoundError(record_id) from None

    def put(self, record_id: str, document: Any) -> None:
        self.records[record_id] = document
        if self.path is not None:
            self.save(self.path)

    def to_json(self) -> dict[str, Any]:
        return {"silo_id": self.silo_id, "kind": self.kind, "records": self.records}

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.write_text(json.dumps(self.to_json(), sort_keys=True, indent=1) + "\n")
        self.path = path

    @classmethod
    def load(cls, path: str | Path, owner_keys: KeyPair) -> "DataSilo":
        obj = json.loads(Path(path).read_text())
        return cls(obj["silo_id"], obj["kind"], owner_keys, dict(obj["records"]), Path(path))
