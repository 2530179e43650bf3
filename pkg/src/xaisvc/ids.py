"""Identifier helpers: sortable execution tickets and caller-supplied slugs."""

from __future__ import annotations

import re
import secrets
import threading
import time

from .errors import InvalidSlug

_CROCKFORD = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"
_SLUG_RE = re.compile(r"^[a-z0-9-]+$")

_lock = threading.Lock()
_last_ms = 0
_last_rand = 0


def _encode(value: int, length: int) -> str:
    chars = []
    for _ in range(length):
        chars.append(_CROCKFORD[value & 0x1F])
        value >>= 5
    return "".join(reversed(chars))


def new_ticket() -> str:
    """ULID-style id: 48-bit ms timestamp + 80 random bits, Crockford base32.

    Monotonic within the process so tickets sort by creation order even when
    minted in the same millisecond.
    """
    global _last_ms, _last_rand
    with _lock:
        now_ms = int(time.time() * 1000)
        if now_ms > _last_ms:
            _last_ms = now_ms
            _last_rand = secrets.randbits(80)
        else:
            _last_rand += 1
        return _encode(_last_ms, 10) + _encode(_last_rand & ((1 << 80) - 1), 16)


def validate_slug(value: str, what: str = "id") -> str:
    """Caller-supplied ids are lowercase slugs so provenance stays human-diffable."""
    if not isinstance(value, str) or not _SLUG_RE.match(value):
        raise InvalidSlug(f"{what} must match [a-z0-9-]+, got {value!r}")
    return value
