"""Canonical byte encodings shared across the ledger, store, and contracts.

Everything that gets hashed, signed, or persisted goes through these
helpers so that equal values always produce equal bytes.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

HASH_BYTES = 32


def canonical_json(value: Any) -> bytes:
    """Serialize to UTF-8 JSON with sorted keys and no insignificant whitespace."""
    return json.dumps(value, sort_keys=True, separators=(",", ":")).encode("utf-8")


def from_canonical_json(data: bytes) -> Any:
    return json.loads(data.decode("utf-8"))


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def canonical_number(value: float) -> float | int:
    """Collapse whole-valued floats to ints so JSON carries no trailing zeros."""
    if isinstance(value, float) and value.is_integer():
        return int(value)
    return value
