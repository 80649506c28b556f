"""Pluggable signature-scheme registry.

Three executable schemes back cosignatures, the classical baseline issuer
signature and CertificateVerify:

* ``ed25519`` and ``ecdsa_p256`` via ``cryptography``. ECDSA signatures are
  carried as fixed 64-byte ``r || s`` and public keys as 65-byte
  uncompressed points.
* ``mldsa65_emulated``: a keyed-hash construction with the exact ML-DSA-65
  key and signature sizes (1,952 / 3,309 bytes). Anyone holding the public
  key can forge signatures. It exists for size and latency accounting only
  and must never protect anything.

The registry counts verifications per purpose so callers can prove that a
code path performed no certificate signature checks.
"""
from __future__ import annotations

import hashlib
import hmac
import os
import threading
from collections import Counter
from dataclasses import dataclass
from enum import Enum, IntEnum
from pathlib import Path
from typing import Dict, NamedTuple, Optional, Protocol

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec, ed25519
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)

from ..errors import CodecError
from ..utils.helpers import from_hex, load_json, save_json


class SignatureSchemeId(IntEnum):
    """Wire identifiers (16-bit). Values follow TLS SignatureScheme code points
    where one exists; the emulated scheme uses the private-use range."""

    ED25519 = 0x0807
    ECDSA_P256 = 0x0403
    MLDSA65_EMULATED = 0xFE65

    @property
    def label(self) -> str:
        return self.name.lower()

    @property
    def public_key_len(self) -> int:
        return _SIZES[self][0]

    @property
    def signature_len(self) -> int:
        return _SIZES[self][1]

    @classmethod
    def parse(cls, text: str) -> "SignatureSchemeId":
        try:
            return cls[text.strip().upper().replace("-", "_")]
        except KeyError:
            raise ValueError(f"unknown signature scheme: {text}") from None


_SIZES = {
    SignatureSchemeId.ED25519: (32, 64),
    SignatureSchemeId.ECDSA_P256: (65, 64),
    SignatureSchemeId.MLDSA65_EMULATED: (1952, 3309),
}


class AlgorithmSizes(NamedTuple):
    name: str
    public_key: int
    signature: int
    security: str


#: Key and signature sizes for the analytic size model. Only three of these
#: are executable (see ``SignatureSchemeId``).
ALGORITHM_SIZES: Dict[str, AlgorithmSizes] = {
    "ecdsa-p256": AlgorithmSizes("ECDSA P-256", 65, 64, "~128-bit"),
    "ed25519": AlgorithmSizes("Ed25519", 32, 64, "~128-bit"),
    "rsa-2048": AlgorithmSizes("RSA-2048", 256, 256, "~112-bit"),
    "ml-dsa-44": AlgorithmSizes("ML-DSA-44", 1312, 2420, "NIST 2"),
    "ml-dsa-65": AlgorithmSizes("ML-DSA-65", 1952, 3309, "NIST 3"),
    "ml-dsa-87": AlgorithmSizes("ML-DSA-87", 2592, 4627, "NIST 5"),
    "slh-dsa-128f": AlgorithmSizes("SLH-DSA-128f", 32, 17088, "NIST 1"),
}


class VerifyPurpose(str, Enum):
    CERTIFICATE = "certificate"
    COSIGNATURE = "cosignature"
    CERTIFICATE_VERIFY = "certificate_verify"


class SignatureScheme(Protocol):
    scheme_id: SignatureSchemeId

    def keypair(self, seed: bytes) -> tuple[bytes, bytes]:
        """Derive ``(secret_key, public_key)`` from a 32-byte seed."""

    def sign(self, secret_key: bytes, message: bytes) -> bytes: ...

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool: ...


class Ed25519Scheme:
    scheme_id = SignatureSchemeId.ED25519

    def keypair(self, seed: bytes) -> tuple[bytes, bytes]:
        sk = ed25519.Ed25519PrivateKey.from_private_bytes(seed)
        pk = sk.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        )
        return seed, pk

    def sign(self, secret_key: bytes, message: bytes) -> bytes:
        return ed25519.Ed25519PrivateKey.from_private_bytes(secret_key).sign(message)

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        try:
            ed25519.Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
        except (InvalidSignature, ValueError):
            return False
        return True


class EcdsaP256Scheme:
    scheme_id = SignatureSchemeId.ECDSA_P256
    _ORDER = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551

    def keypair(self, seed: bytes) -> tuple[bytes, bytes]:
        scalar = int.from_bytes(seed, "big") % (self._ORDER - 1) + 1
        sk = ec.derive_private_key(scalar, ec.SECP256R1())
        pk = sk.public_key().public_bytes(
            serialization.Encoding.X962, serialization.PublicFormat.UncompressedPoint
        )
        return scalar.to_bytes(32, "big"), pk

    def sign(self, secret_key: bytes, message: bytes) -> bytes:
        sk = ec.derive_private_key(int.from_bytes(secret_key, "big"), ec.SECP256R1())
        r, s = decode_dss_signature(sk.sign(message, ec.ECDSA(hashes.SHA256())))
        return r.to_bytes(32, "big") + s.to_bytes(32, "big")

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        try:
            pk = ec.EllipticCurvePublicKey.from_encoded_point(ec.SECP256R1(), public_key)
            der = encode_dss_signature(
                int.from_bytes(signature[:32], "big"), int.from_bytes(signature[32:], "big")
            )
            pk.verify(der, message, ec.ECDSA(hashes.SHA256()))
        except (InvalidSignature, ValueError):
            return False
        return True


class EmulatedMlDsa65Scheme:
    """Size-faithful stand-in for ML-DSA-65. Not a signature scheme."""

    scheme_id = SignatureSchemeId.MLDSA65_EMULATED
    _PK_DOMAIN = b"mtc-pki/mldsa65-emulated/public-key"

    def keypair(self, seed: bytes) -> tuple[bytes, bytes]:
        return seed, self._public_from_seed(seed)

    def _public_from_seed(self, seed: bytes) -> bytes:
        return hashlib.shake_256(self._PK_DOMAIN + seed).digest(self.scheme_id.public_key_len)

    def _expand(self, public_key: bytes, message: bytes) -> bytes:
        tag = hmac.new(public_key, message, hashlib.sha256).digest()
        pad = hashlib.shake_256(tag + public_key[:32]).digest(self.scheme_id.signature_len - len(tag))
        return tag + pad

    def sign(self, secret_key: bytes, message: bytes) -> bytes:
        return self._expand(self._public_from_seed(secret_key), message)

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        return hmac.compare_digest(self._expand(public_key, message), signature)


class SchemeRegistry:
    """Maps scheme identifiers to implementations and counts verifications."""

    def __init__(self) -> None:
        self._schemes: Dict[SignatureSchemeId, SignatureScheme] = {}
        self._counts: Counter[str] = Counter()
        self._lock = threading.Lock()

    def register(self, scheme: SignatureScheme) -> None:
        self._schemes[scheme.scheme_id] = scheme

    def get(self, scheme_id: SignatureSchemeId) -> SignatureScheme:
        try:
            return self._schemes[SignatureSchemeId(scheme_id)]
        except (KeyError, ValueError):
            raise CodecError(f"unsupported signature scheme {scheme_id!r}") from None

    def sign(self, scheme_id: SignatureSchemeId, secret_key: bytes, message: bytes) -> bytes:
        if len(secret_key) != 32:
            raise CodecError("secret key must be 32 bytes")
        return self.get(scheme_id).sign(secret_key, message)

    def verify(
        self,
        scheme_id: SignatureSchemeId,
        public_key: bytes,
        message: bytes,
        signature: bytes,
        purpose: VerifyPurpose = VerifyPurpose.CERTIFICATE,
    ) -> bool:
        with self._lock:
            self._counts[VerifyPurpose(purpose).value] += 1
        try:
            scheme = self.get(scheme_id)
        except CodecError:
            return False
        sid = scheme.scheme_id
        if len(public_key) != sid.public_key_len or len(signature) != sid.signature_len:
            return False
        return scheme.verify(public_key, message, signature)

    def counts(self) -> Dict[str, int]:
        with self._lock:
            return {p.value: self._counts[p.value] for p in VerifyPurpose}

    def reset_counts(self) -> None:
        with self._lock:
            self._counts.clear()


registry = SchemeRegistry()
registry.register(Ed25519Scheme())
registry.register(EcdsaP256Scheme())
registry.register(EmulatedMlDsa65Scheme())


def sign(scheme_id: SignatureSchemeId, secret_key: bytes, message: bytes) -> bytes:
    return registry.sign(scheme_id, secret_key, message)


def verify(
    scheme_id: SignatureSchemeId,
    public_key: bytes,
    message: bytes,
    signature: bytes,
    purpose: VerifyPurpose = VerifyPurpose.CERTIFICATE,
) -> bool:
    return registry.verify(scheme_id, public_key, message, signature, purpose)


@dataclass(frozen=True)
class KeyPair:
    scheme: SignatureSchemeId
    secret_key: bytes
    public_key: bytes

    @classmethod
    def generate(cls, scheme: SignatureSchemeId, seed: Optional[bytes] = None) -> "KeyPair":
        seed = seed if seed is not None else os.urandom(32)
        if len(seed) != 32:
            raise CodecError("key seed must be 32 bytes")
        sk, pk = registry.get(scheme).keypair(seed)
        return cls(SignatureSchemeId(scheme), sk, pk)

    def sign(self, message: bytes) -> bytes:
        return registry.sign(self.scheme, self.secret_key, message)

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme.label,
            "secret_key": self.secret_key.hex(),
            "public_key": self.public_key.hex(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KeyPair":
        scheme = SignatureSchemeId.parse(data["scheme"])
        return cls(
            scheme,
            from_hex(data["secret_key"], 32),
            from_hex(data["public_key"], scheme.public_key_len),
        )


def load_or_create_keypair(path: Path, scheme: SignatureSchemeId) -> KeyPair:
    """Load the key file at *path*, generating and saving a new key if absent."""
    data = load_json(path)
    if data:
        return KeyPair.from_dict(data)
    key = KeyPair.generate(scheme)
    save_json(path, key.to_dict())
    try:
        path.chmod(0o600)
    except OSError:
        pass
    return key
