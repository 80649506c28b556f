"""Mirror HTTP API.

Endpoints:
    GET /tile/<L>/<N>        raw concatenated hashes (application/octet-stream)
    GET /checkpoint          {checkpoint, cosignatures, alarm}
    GET /entry/<index>       {index, entry, leaf}
    GET /proof/inclusion     ?index=&start=&end=
    GET /proof/consistency   ?old=&new=
    GET /proof/subtree       ?start=&end=&size=

Full tiles never change and are served with a strong ETag and a one-year
immutable cache lifetime; partial tiles are ``no-store``.
"""
from __future__ import annotations

import hashlib

from flask import Blueprint, Response, jsonify, request

from ..errors import InvalidRequest
from ..merkle.hashing import leaf_hash
from ..merkle.proofs import SubtreeRange
from ..web.server import int_arg, service
from .replica import MirrorReplica

bp_mirror = Blueprint("mirror", __name__)

SERVICE_KEY = "mtc.mirror"


def _replica() -> MirrorReplica:
    return service(SERVICE_KEY)


def _range() -> SubtreeRange:
    try:
        return SubtreeRange(int_arg("start"), int_arg("end"))
    except ValueError as exc:
        raise InvalidRequest(str(exc)) from None


@bp_mirror.get("/tile/<int:level>/<int:index>")
def tile(level: int, index: int):
    t = _replica().get_tile(level, index)
    body = t.to_bytes()
    resp = Response(body, mimetype="application/octet-stream")
    if t.is_full:
        etag = hashlib.sha256(body).hexdigest()
        resp.set_etag(etag)
        resp.headers["Cache-Control"] = "public, max-age=31536000, immutable"
        if etag in request.if_none_match:
            return Response(status=304, headers={"ETag": resp.headers["ETag"]})
    else:
        resp.headers["Cache-Control"] = "no-store"
    return resp


@bp_mirror.get("/checkpoint")
def checkpoint():
    replica = _replica()
    cp, cosigs = replica.get_checkpoint()
    return jsonify({
        "checkpoint": cp.to_dict(),
        "cosignatures": [c.to_dict() for c in cosigs],
        "alarm": replica.alarm,
    })


@bp_mirror.get("/entry/<int:index>")
def entry(index: int):
    data = _replica().get_entry(index)
    return jsonify({"index": index, "entry": data.hex(), "leaf": leaf_hash(data).hex()})


@bp_mirror.get("/proof/inclusion")
def inclusion():
    proof = _replica().get_inclusion_proof(int_arg("index"), _range())
    return jsonify({"proof": proof.to_list()})


@bp_mirror.get("/proof/consistency")
def consistency():
    proof = _replica().get_consistency_proof(int_arg("old"), int_arg("new"))
    return jsonify({"proof": proof.to_list()})


@bp_mirror.get("/proof/subtree")
def subtree():
    rng = _range()
    size = int_arg("size")
    root, proof = _replica().get_subtree_proof(rng, size)
    return jsonify({
        "start": rng.start,
        "end": rng.end,
        "size": size,
        "subtree_root": root.hex(),
        "proof": proof.to_list(),
    })
