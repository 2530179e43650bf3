"""Content-addressed results store: hash of canonical JSON is the address,
so reproducibility reduces to hash equality."""

from __future__ import annotations

import json
import threading
from pathlib import Path

from ..errors import UnknownResult
from ..wire import canonical_bytes, content_hash


class ResultsStore:
    def __init__(self, storage_path: str | Path | None = None):
        self._payloads: dict[str, bytes] = {}
        self._lock = threading.Lock()
        self._root = Path(storage_path) / "results" if storage_path else None
        if self._root is not None:
            self._root.mkdir(parents=True, exist_ok=True)

    def put(self, payload: dict) -> tuple[str, str]:
        """Store canonical bytes; returns (hash, location)."""
        digest = content_hash(payload)
        data = canonical_bytes(payload)
        with self._lock:
            self._payloads[digest] = data
        if self._root is not None:
            location = self._root / f"{digest}.json"
            if not location.exists():
                location.write_bytes(data)
            return digest, str(location)
        return digest, f"memory:{digest}"

    def get_bytes(self, digest: str) -> bytes:
        with self._lock:
            data = self._payloads.get(digest)
        if data is not None:
            return data
        if self._root is not None:
            location = self._root / f"{digest}.json"
            if location.exists():
                return location.read_bytes()
        raise UnknownResult(f"no stored results for hash {digest!r}")

    def get(self, digest: str) -> dict:
        return json.loads(self.get_bytes(digest))
