"""Tests for the CA HTTP endpoints."""
import pytest

from conftest import ADMISSION_TOKEN, NOW, seeded_key
from mtc_pki.ca.web import SERVICE_KEY, bp_ca
from mtc_pki.codec.certificate import decode_certificate
from mtc_pki.codec.schemes import SignatureSchemeId
from mtc_pki.web.server import create_app

AUTH = {"Authorization": f"Bearer {ADMISSION_TOKEN}"}


@pytest.fixture
def client(ca):
    app = create_app("ca", [bp_ca], {SERVICE_KEY: ca})
    app.config["TESTING"] = True
    return app.test_client()


def _issue_body(subject="smf.5gc.internal"):
    key = seeded_key(subject, SignatureSchemeId.ECDSA_P256)
    return {
        "subject": subject,
        "dns_names": [subject],
        "scheme": "ecdsa-p256",
        "public_key": key.public_key.hex(),
    }


def test_issue_cert(client):
    """Test POST /issue-cert returns a decodable standalone certificate."""
    response = client.post("/issue-cert", json=_issue_body(), headers=AUTH)

    assert response.status_code == 200
    data = response.get_json()
    cert = decode_certificate(bytes.fromhex(data["certificate"]))
    assert cert.index == data["index"] == 0
    assert cert.entry.subject == "smf.5gc.internal"
    assert len(cert.proof.cosignatures) == 2
    assert data["checkpoint"]["size"] == 1


@pytest.mark.parametrize("headers", [{}, {"Authorization": "Bearer nope"}, {"Authorization": "Basic abc"}])
def test_issue_cert_requires_token(client, ca, headers):
    """Test that issuance without a valid bearer token answers 401 and appends nothing."""
    response = client.post("/issue-cert", json=_issue_body(), headers=headers)

    assert response.status_code == 401
    assert response.get_json()["error"]["code"] == "unauthorized"
    assert ca.log.size == 0


@pytest.mark.parametrize("mutate", [
    lambda b: b.pop("subject"),
    lambda b: b.update(public_key="abcd"),
    lambda b: b.update(scheme="rsa"),
    lambda b: b.update(dns_names="not-a-list"),
])
def test_issue_cert_malformed(client, mutate):
    """Test that malformed issuance requests answer 400."""
    body = _issue_body()
    mutate(body)

    response = client.post("/issue-cert", json=body, headers=AUTH)

    assert response.status_code == 400


def test_trust_config(client):
    """Test GET /trust-config lists the cosigners and the policy."""
    data = client.get("/trust-config").get_json()

    assert data["log_id"] == "32473"
    assert data["landmark_base"] == "32473.1"
    assert data["policy"] == {"required_k": 2, "require_mirror": False}
    assert [c["id"] for c in data["cosigners"]] == ["32473.2.1", "32473.2.2"]


def test_landmark_flow(client, issued):
    """Test /landmark-sequence and /landmark-cert once a landmark is allocated."""
    ca, _ = issued
    assert client.get("/landmark-cert?index=2").status_code == 404

    ca.allocate_landmark(now=NOW)
    sequence = client.get("/landmark-sequence")
    response = client.get("/landmark-cert?index=2")

    assert sequence.mimetype == "text/plain"
    assert sequence.get_data(as_text=True) == "1 1\n8\n"
    assert response.status_code == 200
    data = response.get_json()
    assert data["landmark"] == 1
    assert decode_certificate(bytes.fromhex(data["certificate"])).is_landmark
    assert client.get("/landmark-cert?index=2&landmark=x").status_code == 400


def test_revoke(client, issued):
    """Test POST /revoke with and without the token."""
    assert client.post("/revoke", json={"lo": 1, "hi": 3}).status_code == 401

    response = client.post("/revoke", json={"lo": 1, "hi": 3}, headers=AUTH)

    assert response.get_json() == {"revoked": [[1, 3]]}
    assert client.post("/revoke", json={"lo": 5, "hi": 50}, headers=AUTH).status_code == 400


def test_entries_and_checkpoint(client, issued):
    """Test the mirror-facing read endpoints."""
    ca, certs = issued

    entries = client.get("/entries?start=2&count=3").get_json()["entries"]
    checkpoint = client.get("/checkpoint").get_json()
    proof = client.get("/proof/consistency?old=4&new=8").get_json()["proof"]

    assert [e["index"] for e in entries] == [2, 3, 4]
    assert entries[0]["entry"] == certs[2].entry.encoded.hex()
    assert checkpoint["checkpoint"]["size"] == 8
    assert len(checkpoint["cosignatures"]) == 2
    assert len(proof) == 1


def test_bad_query_parameters(client, issued):
    """Test integer query parameter validation."""
    assert client.get("/entries?start=-1").status_code == 400
    assert client.get("/proof/consistency?old=4").status_code == 400
    assert client.get("/proof/consistency?old=4&new=99").status_code == 404
