"""Log tail endpoint registered on every service app."""
from __future__ import annotations

from collections import deque

from flask import Blueprint, Response, jsonify, request

from ..errors import InvalidRequest
from .logger import log_path

bp_logs = Blueprint("logs", __name__, url_prefix="/logs")

DEFAULT_LINES = 200
MAX_LINES = 5000


def _requested_lines() -> int:
    raw = request.args.get("lines")
    if raw is None:
        return DEFAULT_LINES
    try:
        lines = int(raw)
    except ValueError:
        raise InvalidRequest("query parameter 'lines' must be an integer") from None
    if lines < 0:
        raise InvalidRequest("query parameter 'lines' must be non-negative")
    return min(lines, MAX_LINES)


@bp_logs.get("/tail")
def get_log_tail() -> Response:
    """Get the last N lines of this process's log file.

    Query Parameters:
        lines: Number of lines to return (default 200, capped at 5000).

    Returns:
        JSON ``{"log": text, "file": name}``; ``log`` is empty while the
        file does not exist.
    """
    lines = _requested_lines()
    path = log_path()
    if lines == 0 or not path.exists():
        return jsonify({"log": "", "file": path.name})

    with path.open("r", encoding="utf-8", errors="replace") as f:
        tail = deque(f, maxlen=lines)
    return jsonify({"log": "".join(tail), "file": path.name})
