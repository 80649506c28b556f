"""Flask application factory and embedded server shared by every role.

Each role (CA, cosigner, mirror) builds its app here: the role's blueprints,
the ``logs`` blueprint, ``GET /health`` and the JSON error envelope
``{"error": {"code": ..., "message": ...}}``.
"""

from __future__ import annotations

import threading
from typing import Any, Dict, Iterable, Optional, Tuple

from flask import Blueprint, Flask, current_app, jsonify, request
from werkzeug.exceptions import HTTPException
from werkzeug.serving import BaseWSGIServer, make_server

from ..errors import InvalidRequest, MTCError
from ..logging.logger import get_logger
from ..logging.web import bp_logs

logger = get_logger()


def create_app(role: str, blueprints: Iterable[Blueprint], services: Dict[str, Any]) -> Flask:
    """Create a service app.

    Args:
        role: Role name reported by ``/health`` (``ca``, ``cosigner``, ``mirror``).
        blueprints: Role blueprints to register.
        services: Objects the blueprints look up with :func:`service`.
    """
    app = Flask(__name__)
    app.config["MTC_ROLE"] = role
    app.extensions.update(services)

    app.register_blueprint(bp_logs)
    for bp in blueprints:
        app.register_blueprint(bp)

    @app.errorhandler(MTCError)
    def _mtc_error(exc: MTCError):
        if exc.status >= 500:
            logger.error("%s: %s", exc.code, exc.message)
        else:
            logger.info("Request rejected (%s): %s", exc.code, exc.message)
        return jsonify(exc.to_dict()), exc.status

    @app.errorhandler(HTTPException)
    def _http_error(exc: HTTPException):
        code = (exc.name or "error").lower().replace(" ", "_")
        return jsonify({"error": {"code": code, "message": exc.description}}), exc.code

    @app.errorhandler(Exception)
    def _unexpected(exc: Exception):
        logger.exception("Unhandled error in %s service", role)
        return jsonify({"error": {"code": "internal_error", "message": "An internal error occurred."}}), 500

    @app.get("/health")
    def health():
        """Simple health-check endpoint."""
        return jsonify({"status": "ok", "role": role})

    logger.info("%s service app created", role)
    return app


def service(name: str) -> Any:
    """Service object registered with :func:`create_app` for the current app."""
    return current_app.extensions[name]


def request_json() -> Dict[str, Any]:
    data = request.get_json(silent=True)
    if not isinstance(data, dict):
        raise InvalidRequest("request body must be a JSON object")
    return data


def int_arg(name: str, default: Optional[int] = None) -> int:
    raw = request.args.get(name)
    if raw is None:
        if default is None:
            raise InvalidRequest(f"missing query parameter {name!r}")
        return default
    try:
        value = int(raw)
    except ValueError:
        raise InvalidRequest(f"query parameter {name!r} must be an integer") from None
    if value < 0:
        raise InvalidRequest(f"query parameter {name!r} must be non-negative")
    return value


def parse_listen(listen: str) -> Tuple[str, int]:
    """Split ``host:port`` (``:8440`` binds all interfaces)."""
    host, sep, port = listen.rpartition(":")
    if not sep:
        raise ValueError(f"listen address must be host:port, got {listen!r}")
    try:
        return host or "0.0.0.0", int(port)
    except ValueError:
        raise ValueError(f"invalid port in listen address {listen!r}") from None


class ServiceServer:
    """Threaded WSGI server hosting one app; used by the CLI and the demo."""

    def __init__(self, app: Flask, host: str = "127.0.0.1", port: int = 0) -> None:
        self._server: BaseWSGIServer = make_server(host, port, app, threaded=True)
        self._thread: Optional[threading.Thread] = None
        self.role = app.config.get("MTC_ROLE", "service")

    @property
    def port(self) -> int:
        return self._server.server_port

    @property
    def url(self) -> str:
        host = self._server.host
        if host in ("0.0.0.0", ""):
            host = "127.0.0.1"
        return f"http://{host}:{self.port}"

    def start(self) -> "ServiceServer":
        self._thread = threading.Thread(
            target=self._server.serve_forever, name=f"{self.role}-http", daemon=True
        )
        self._thread.start()
        logger.info("%s listening on %s", self.role, self.url)
        return self

    def serve_forever(self) -> None:
        logger.info("%s listening on %s", self.role, self.url)
        self._server.serve_forever()

    def stop(self) -> None:
        self._server.shutdown()
        if self._thread is not None:
            self._thread.join(timeout=5)
        self._server.server_close()
        logger.info("%s stopped", self.role)
