"""Thin HTTP client for the open API.

Commands built on this client print response bodies verbatim in JSON mode,
so the raw bytes are kept alongside any parsed form.
"""

from __future__ import annotations

import httpx

CONNECTION_EXIT = 2
VALIDATION_EXIT = 3
SERVER_EXIT = 4


class ClientError(Exception):
    """Transport failure or error response; ``exit_code`` drives the CLI."""

    def __init__(self, message: str, exit_code: int,
                 status: int | None = None, body: bytes = b""):
        super().__init__(message)
        self.exit_code = exit_code
        self.status = status
        self.body = body


class ApiClient:
    def __init__(self, base_url: str, timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self._client = httpx.Client(timeout=timeout)

    def close(self) -> None:
        self._client.close()

    def request(self, method: str, path: str, json_body: dict | None = None,
                params: dict | None = None) -> httpx.Response:
        url = f"{self.base_url}{path}"
        try:
            response = self._client.request(method, url, json=json_body,
                                            params=params)
        except httpx.HTTPError as exc:
            raise ClientError(f"cannot reach server at {self.base_url}: {exc}",
                              CONNECTION_EXIT) from exc
        if response.status_code >= 400:
            exit_code = VALIDATION_EXIT if response.status_code in (400, 422) \
                else SERVER_EXIT
            raise ClientError(
                f"{method} {path} failed with HTTP {response.status_code}",
                exit_code, status=response.status_code, body=response.content,
            )
        return response

    def get(self, path: str, params: dict | None = None) -> httpx.Response:
        return self.request("GET", path, params=params)

    def post(self, path: str, json_body: dict) -> httpx.Response:
        return self.request("POST", path, json_body=json_body)

    def delete(self, path: str) -> httpx.Response:
        return self.request("DELETE", path)
