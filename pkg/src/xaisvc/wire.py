"""Wire-format helpers: canonical JSON and content addressing.

Canonical form pins key order and float rendering so that identical payloads
hash identically across runs and processes; every results_ref in the system
is the sha256 of these bytes.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any


def canonical_json(payload: Any) -> str:
    """Serialize with sorted keys and compact separators."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)


def canonical_bytes(payload: Any) -> bytes:
    return canonical_json(payload).encode("utf-8")


def content_hash(payload: Any) -> str:
    return hashlib.sha256(canonical_bytes(payload)).hexdigest()
