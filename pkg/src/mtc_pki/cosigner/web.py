"""HTTP wrapper around a :class:`Cosigner`.

Endpoints:
    POST /cosign         {checkpoint, consistency_proof} -> {cosignature}
    POST /sign-subtree   {start, end, subtree_root, containment_proof, checkpoint}
    GET  /cosigner-info  -> {id, scheme, public_key, mode}

Refusals answer 409 with ``{"refusal": true, "reason": ..., "message": ...}``.
"""
from __future__ import annotations

from flask import Blueprint, jsonify

from ..errors import InvalidRequest
from ..merkle.proofs import Checkpoint, ConsistencyProof, SubtreeRange
from ..web.server import request_json, service
from .core import Cosigner

bp_cosigner = Blueprint("cosigner", __name__)

SERVICE_KEY = "mtc.cosigner"


def _cosigner() -> Cosigner:
    return service(SERVICE_KEY)


def _checkpoint(data: dict) -> Checkpoint:
    try:
        return Checkpoint.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidRequest(f"malformed checkpoint: {exc}") from None


def _proof(items) -> ConsistencyProof:
    try:
        return ConsistencyProof.from_list(items or [])
    except (TypeError, ValueError) as exc:
        raise InvalidRequest(f"malformed proof: {exc}") from None


@bp_cosigner.post("/cosign")
def cosign():
    body = request_json()
    new = _checkpoint(body.get("checkpoint") or {})
    cosig = _cosigner().cosign(new, _proof(body.get("consistency_proof")))
    return jsonify({"cosignature": cosig.to_dict()})


@bp_cosigner.post("/sign-subtree")
def sign_subtree():
    body = request_json()
    try:
        rng = SubtreeRange(int(body["start"]), int(body["end"]))
        root = bytes.fromhex(body["subtree_root"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidRequest(f"malformed subtree request: {exc}") from None
    within = _checkpoint(body.get("checkpoint") or {})
    cosig = _cosigner().sign_subtree(rng, root, _proof(body.get("containment_proof")), within)
    return jsonify({"cosignature": cosig.to_dict()})


@bp_cosigner.get("/cosigner-info")
def cosigner_info():
    return jsonify(_cosigner().info.to_dict())
