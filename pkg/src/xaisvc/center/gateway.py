"""Endpoint resolution for downstream service calls.

Two schemes: ``builtin:`` endpoints dispatch in-process to the reference
hub through the same payload shapes as the wire, and ``http(s)://``
endpoints go over the network. Executors never know the difference, so a
registered external service is a drop-in replacement for a built-in one.
"""

from __future__ import annotations

import threading

import httpx

from ..errors import ServiceCallError

BUILTIN_SCHEME = "builtin:"


class ServiceGateway:
    def __init__(self, hub=None, timeout: float = 30.0):
        self._hub = hub
        self._timeout = timeout
        self._client: httpx.Client | None = None
        self._lock = threading.Lock()

    def close(self) -> None:
        with self._lock:
            if self._client is not None:
                self._client.close()
                self._client = None

    def get(self, url: str, *, service_id: str = "") -> dict:
        if url.startswith(BUILTIN_SCHEME):
            return self._builtin(url, "GET", None, service_id)
        return self._http("GET", url, None, service_id)

    def post(self, url: str, body: dict, *, service_id: str = "") -> dict:
        if url.startswith(BUILTIN_SCHEME):
            return self._builtin(url, "POST", body, service_id)
        return self._http("POST", url, body, service_id)

    # -- in-process routing ------------------------------------------------

    def _builtin(self, url: str, method: str, body: dict | None,
                 service_id: str) -> dict:
        if self._hub is None:
            raise ServiceCallError("no reference hub configured for builtin endpoints",
                                   service_id=service_id, url=url)
        parts = url[len(BUILTIN_SCHEME):].strip("/").split("/")
        hub = self._hub
        if method == "GET" and len(parts) == 4 and parts[0] == "datasets" \
                and parts[1] == "groups" and parts[3] == "samples":
            return hub.handle_samples(parts[2])
        if method == "POST" and len(parts) == 4 and parts[0] == "datasets" \
                and parts[1] == "groups" and parts[3] == "augment":
            return hub.handle_augment(parts[2], body or {})
        if method == "POST" and len(parts) == 3 and parts[0] == "models" \
                and parts[2] == "predict":
            return hub.handle_predict(parts[1], body or {})
        if method == "POST" and len(parts) == 3 and parts[0] == "xai" \
                and parts[2] == "explain":
            return hub.handle_explain(parts[1], body or {})
        if method == "POST" and len(parts) == 2 and parts[0] == "evaluation" \
                and parts[1] == "evaluate":
            return hub.handle_evaluate(body or {})
        raise ServiceCallError(f"no builtin route for {method} {url}",
                               service_id=service_id, url=url)

    # -- network routing ----------------------------------------------------

    def _http(self, method: str, url: str, body: dict | None,
              service_id: str) -> dict:
        with self._lock:
            if self._client is None:
                self._client = httpx.Client(timeout=self._timeout)
            client = self._client
        try:
            response = client.request(method, url, json=body)
        except httpx.HTTPError as exc:
            raise ServiceCallError(f"call to {url} failed: {exc}",
                                   service_id=service_id, url=url) from exc
        if response.status_code >= 400:
            detail = _error_detail(response)
            raise ServiceCallError(
                f"{method} {url} returned {response.status_code}: {detail}",
                service_id=service_id, url=url, status=response.status_code,
            )
        try:
            return response.json()
        except ValueError as exc:
            raise ServiceCallError(f"non-JSON response from {url}",
                                   service_id=service_id, url=url) from exc


def _error_detail(response: httpx.Response) -> str:
    try:
        payload = response.json()
    except ValueError:
        return response.text[:200]
    if isinstance(payload, dict) and "error" in payload:
        err = payload["error"]
        if isinstance(err, dict):
            return str(err.get("message", err))
        return str(err)
    return str(payload)[:200]
