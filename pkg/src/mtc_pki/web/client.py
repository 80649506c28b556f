"""Thin ``requests`` client used to talk to peer services."""
from __future__ import annotations

from typing import Any, Dict, Optional

import requests

from ..errors import TransportError, error_from_response

DEFAULT_TIMEOUT = 5.0


class ServiceClient:
    """JSON-over-HTTP client; failures surface as :class:`MTCError` subclasses."""

    def __init__(
        self,
        base_url: str,
        timeout: float = DEFAULT_TIMEOUT,
        session: Optional[requests.Session] = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._session = session or requests.Session()

    def _request(self, method: str, path: str, **kwargs: Any) -> requests.Response:
        kwargs.setdefault("timeout", self.timeout)
        url = f"{self.base_url}{path}"
        try:
            resp = self._session.request(method, url, **kwargs)
        except requests.RequestException as exc:
            raise TransportError(f"{method} {url} failed: {exc}") from exc
        if not resp.ok:
            try:
                body = resp.json()
            except ValueError:
                body = None
            raise error_from_response(resp.status_code, body)
        return resp

    def get_json(self, path: str, params: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        resp = self._request("GET", path, params=params)
        try:
            return resp.json()
        except ValueError:
            raise TransportError(f"GET {path}: response is not JSON") from None

    def post_json(
        self,
        path: str,
        payload: Dict[str, Any],
        headers: Optional[Dict[str, str]] = None,
    ) -> Dict[str, Any]:
        resp = self._request("POST", path, json=payload, headers=headers)
        try:
            return resp.json()
        except ValueError:
            raise TransportError(f"POST {path}: response is not JSON") from None

    def get_text(self, path: str) -> str:
        return self._request("GET", path).text

    def health(self) -> Dict[str, Any]:
        return self.get_json("/health")

    def close(self) -> None:
        self._session.close()
