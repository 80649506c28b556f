"""Flask blueprint exposing the effective configuration of a running service."""

from __future__ import annotations

from flask import Blueprint, jsonify

from ..web.server import service

bp_config = Blueprint("config", __name__, url_prefix="/config")

SERVICE_KEY = "mtc.config"


@bp_config.get("/")
def get_config():
    """Get the configuration the service was started with.

    Returns:
        JSON response containing the configuration as a dictionary.
    """
    return jsonify(service(SERVICE_KEY).to_dict())
