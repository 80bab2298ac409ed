"""Canonical JSON encoding shared by signing, hashing and persistence."""

from __future__ import annotations

import json
from typing import Any


def canonical_json(obj: Any) -> bytes:
    """Sorted keys, no whitespace, ASCII only. Floats are rejected."""
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True, allow_nan=False
    ).encode("ascii")


def canonical_text(obj: Any) -> str:
    return canonical_json(obj).decode("ascii")


def loads_strict(data: bytes | str) -> Any:
    """Parse JSON and refuse floats, so a round trip stays byte-identical."""

    def _no_float(value: str) -> Any:
        raise ValueError(f"float literal not allowed: {value}")

    return json.loads(data, parse_float=_no_float, parse_constant=_no_float)
