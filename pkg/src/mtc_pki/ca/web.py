"""HTTP surface of the certificate authority.

Endpoints:
    POST /issue-cert           Bearer token; {subject, dns_names, scheme, public_key,
                               not_before?, lifetime?} -> {certificate, index, checkpoint}
    GET  /trust-config         log ID, cosigner keys, acceptance policy
    GET  /landmark-sequence    text/plain landmark sequence document
    POST /revoke               Bearer token; {lo, hi} -> {revoked}
    GET  /landmark-cert        ?index=&landmark= -> {certificate, landmark}
    GET  /entries              ?start=&count= -> {entries: [{index, entry, leaf}]}
    GET  /checkpoint           latest cosigned checkpoint and its cosignatures
    GET  /proof/consistency    ?old=&new=
"""
from __future__ import annotations

from flask import Blueprint, Response, jsonify, request

from ..codec.certificate import encode_certificate
from ..codec.schemes import SignatureSchemeId
from ..errors import AuthorizationError, InvalidRequest
from ..merkle.hashing import leaf_hash
from ..utils.helpers import from_hex
from ..web.server import int_arg, request_json, service
from .authority import CertificateAuthority, IssueRequest

bp_ca = Blueprint("ca", __name__)

SERVICE_KEY = "mtc.ca"
MAX_ENTRIES_PAGE = 1000


def _ca() -> CertificateAuthority:
    return service(SERVICE_KEY)


def _bearer_token() -> str:
    header = request.headers.get("Authorization", "")
    scheme, _, token = header.partition(" ")
    if scheme.lower() != "bearer" or not token:
        raise AuthorizationError("missing bearer token")
    return token.strip()


def _issue_request(body: dict, token: str) -> IssueRequest:
    try:
        scheme = SignatureSchemeId.parse(body.get("scheme", "ed25519"))
        names = body.get("dns_names") or []
        if not isinstance(names, list):
            raise ValueError("dns_names must be a list")
        not_before = body.get("not_before")
        lifetime = body.get("lifetime")
        return IssueRequest(
            subject=str(body["subject"]),
            dns_names=tuple(str(n) for n in names),
            scheme=scheme,
            entity_public_key=from_hex(body["public_key"], scheme.public_key_len),
            admission_token=token,
            not_before=int(not_before) if not_before is not None else None,
            lifetime=int(lifetime) if lifetime is not None else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidRequest(f"malformed issuance request: {exc}") from None


@bp_ca.post("/issue-cert")
def issue_cert():
    token = _bearer_token()
    ca = _ca()
    cert = ca.issue_standalone(_issue_request(request_json(), token))
    checkpoint, _ = ca.checkpoint()
    return jsonify({
        "certificate": encode_certificate(cert).hex(),
        "index": cert.index,
        "checkpoint": checkpoint.to_dict(),
    })


@bp_ca.get("/trust-config")
def trust_config():
    return jsonify(_ca().serve_trust_config())


@bp_ca.get("/landmark-sequence")
def landmark_sequence():
    return Response(_ca().serve_landmark_sequence(), mimetype="text/plain")


@bp_ca.post("/revoke")
def revoke():
    ca = _ca()
    ca.check_token(_bearer_token())
    body = request_json()
    try:
        lo, hi = int(body["lo"]), int(body["hi"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidRequest(f"malformed revocation request: {exc}") from None
    return jsonify({"revoked": ca.revoke(lo, hi).to_list()})


@bp_ca.get("/landmark-cert")
def landmark_cert():
    ca = _ca()
    index = int_arg("index")
    number = request.args.get("landmark")
    try:
        landmark = int(number) if number is not None else None
    except ValueError:
        raise InvalidRequest("query parameter 'landmark' must be an integer") from None
    cert = ca.issue_landmark(index, landmark)
    return jsonify({
        "certificate": encode_certificate(cert).hex(),
        "index": index,
        "landmark": landmark if landmark is not None else ca.landmark_number_for(index),
    })


@bp_ca.get("/entries")
def entries():
    ca = _ca()
    start = int_arg("start", 0)
    count = min(int_arg("count", 100), MAX_ENTRIES_PAGE)
    items = ca.fetch_entries(start, start + count)
    return jsonify({
        "entries": [
            {"index": start + i, "entry": e.hex(), "leaf": leaf_hash(e).hex()}
            for i, e in enumerate(items)
        ],
    })


@bp_ca.get("/checkpoint")
def checkpoint():
    cp, cosigs = _ca().checkpoint()
    return jsonify({
        "checkpoint": cp.to_dict(),
        "cosignatures": [c.to_dict() for c in cosigs],
    })


@bp_ca.get("/proof/consistency")
def consistency():
    proof = _ca().log.consistency_proof(int_arg("old"), int_arg("new"))
    return jsonify({"proof": proof.to_list()})
