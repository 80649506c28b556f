"""Shared test fixtures and configuration for pytest.

This module provides common fixtures used across all test modules: config
and logger isolation, deterministic key material, and an in-process
deployment (CA plus cosigners, no HTTP).
"""
import hashlib
import json
from pathlib import Path

import pytest

from mtc_pki.ca.authority import CertificateAuthority, IssuancePolicy, IssueRequest
from mtc_pki.codec.schemes import KeyPair, SignatureSchemeId
from mtc_pki.codec.taid import parse_taid
from mtc_pki.cosigner.core import Cosigner, CosignerMode
from mtc_pki.utils.helpers import save_json

TESTDATA = Path(__file__).parent / "testdata"
ADMISSION_TOKEN = "test-admission-token"
LOG_ID = parse_taid("32473")
#: Fixed issuance time so certificates are reproducible.
NOW = 1_760_000_000


def seeded_key(label: str, scheme: SignatureSchemeId = SignatureSchemeId.ED25519) -> KeyPair:
    """Deterministic key pair derived from *label*."""
    return KeyPair.generate(scheme, hashlib.sha256(label.encode()).digest())


def load_vectors(name: str) -> dict:
    return json.loads((TESTDATA / name).read_text(encoding="utf-8"))


def issue_request(subject: str = "nf-amf.5gc.internal", key: KeyPair = None, **kwargs) -> IssueRequest:
    key = key or seeded_key(f"entity:{subject}", SignatureSchemeId.ECDSA_P256)
    return IssueRequest(
        subject=subject,
        dns_names=kwargs.pop("dns_names", (subject,)),
        scheme=key.scheme,
        entity_public_key=key.public_key,
        admission_token=kwargs.pop("admission_token", ADMISSION_TOKEN),
        **kwargs,
    )


@pytest.fixture
def temp_config(tmp_path, monkeypatch):
    """Create a temporary config file and patch ConfigManager to use it.

    This fixture creates a fresh config file in a temporary directory and
    resets the ConfigManager singleton to ensure test isolation.

    Yields:
        Path to the temporary config file
    """
    cfg_file = tmp_path / "config.json"
    save_json(cfg_file, {
        "DataDir": str(tmp_path / "data"),
        "LogLevel": "DEBUG",
        "PolicyK": 2,
        "CosignerUrls": ["http://127.0.0.1:9001", "http://127.0.0.1:9002"],
    })

    monkeypatch.setattr(
        "mtc_pki.config.manager.config_path",
        lambda: cfg_file,
    )

    from mtc_pki.config.manager import ConfigManager
    ConfigManager._instance = None

    try:
        yield cfg_file
    finally:
        ConfigManager._instance = None


@pytest.fixture
def reset_config_manager():
    """Reset the ConfigManager singleton after each test."""
    yield
    from mtc_pki.config.manager import ConfigManager
    ConfigManager._instance = None


@pytest.fixture
def temp_log_dir(tmp_path, monkeypatch):
    """Redirect log output to a temporary directory and reset the logger singleton.

    Yields:
        Path to the temporary log file
    """
    log_file = tmp_path / "logs" / "test.log"
    log_file.parent.mkdir(parents=True, exist_ok=True)

    import mtc_pki.logging.logger as logger_module
    logger_module._LOGGER = None

    monkeypatch.setattr(
        "mtc_pki.logging.logger._LOG_FILE",
        log_file,
    )

    yield log_file

    logger_module._LOGGER = None


@pytest.fixture
def witnesses(tmp_path):
    """Two witness cosigners with persistent state under tmp_path."""
    return [
        Cosigner(
            parse_taid(f"32473.2.{i}"),
            seeded_key(f"witness-{i}"),
            CosignerMode.WITNESS,
            state_dir=tmp_path / f"witness-{i}",
        )
        for i in (1, 2)
    ]


@pytest.fixture
def policy():
    return IssuancePolicy(
        admission_token=ADMISSION_TOKEN, landmark_interval=600, cert_lifetime=86400, checkpoint_interval=0,
    )


@pytest.fixture
def make_ca(tmp_path, policy):
    """Factory for CAs over the given peers; every CA built is closed afterwards."""
    built = []

    def _make(peers, required_k=None, data_dir=None, **kwargs):
        ca = CertificateAuthority(
            LOG_ID,
            peers,
            kwargs.pop("issuance_policy", policy),
            required_k=required_k if required_k is not None else len(peers),
            data_dir=data_dir if data_dir is not None else tmp_path / "ca",
            **kwargs,
        )
        built.append(ca)
        return ca

    yield _make
    for ca in built:
        ca.close()


@pytest.fixture
def ca(make_ca, witnesses):
    """CA requiring both witnesses."""
    return make_ca(witnesses)


@pytest.fixture
def issued(ca):
    """CA with eight issued certificates; returns ``(ca, certificates)``."""
    certs = [ca.issue_standalone(issue_request(f"nf-{i}.5gc.internal"), now=NOW) for i in range(8)]
    return ca, certs
