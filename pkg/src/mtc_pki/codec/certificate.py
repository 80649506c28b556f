"""MTC proofs, cosignatures and certificates.

Wire layout (big-endian)::

    Cosignature  := TAID cosigner_id ; u16 scheme ; u64 checkpoint_size ;
                    u16 len ; signature
    MTCProof     := u64 start ; u64 end ;
                    u8 count ; count x 32-byte hash ;
                    u8 count ; count x Cosignature
    MTCCertificate := TAID log_id ; u64 index ;
                      u16 len ; entry bytes ;
                      u16 len ; entity public key ;
                      MTCProof
    TAID         := u8 count ; count x u64

The proof framing without hashes or cosignatures is 18 bytes.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Tuple

from ..errors import CodecError
from ..merkle.hashing import HASH_SIZE
from ..merkle.proofs import MAX_PROOF_HASHES, InclusionProof, SubtreeRange
from .entries import TBSCertEntry, read_entry
from .schemes import SignatureSchemeId
from .taid import TrustAnchorID, parse_taid
from .wire import Reader, Writer

PROOF_FRAMING_BYTES = 18
MAX_COSIGNATURES = 32


def subtree_message(subtree_root: bytes, rng: SubtreeRange) -> bytes:
    """Message a cosigner signs for a subtree: root || BE64 start || BE64 end."""
    return subtree_root + struct.pack(">QQ", rng.start, rng.end)


@dataclass(frozen=True)
class Cosignature:
    cosigner_id: TrustAnchorID
    scheme: SignatureSchemeId
    signature: bytes = field(repr=False)
    checkpoint_size: int

    def encode(self, w: Writer) -> None:
        self.cosigner_id.encode(w)
        w.u16(self.scheme)
        w.u64(self.checkpoint_size)
        w.var_bytes(self.signature, 2)

    @classmethod
    def decode(cls, r: Reader) -> "Cosignature":
        cosigner_id = TrustAnchorID.decode(r)
        raw_scheme = r.u16()
        size = r.u64()
        signature = r.var_bytes(2)
        try:
            scheme = SignatureSchemeId(raw_scheme)
        except ValueError:
            raise CodecError(f"unknown signature scheme {raw_scheme:#06x}") from None
        return cls(cosigner_id, scheme, signature, size)

    def to_dict(self) -> dict:
        return {
            "cosigner_id": str(self.cosigner_id),
            "scheme": self.scheme.label,
            "signature": self.signature.hex(),
            "checkpoint_size": self.checkpoint_size,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Cosignature":
        try:
            return cls(
                parse_taid(data["cosigner_id"]),
                SignatureSchemeId.parse(data["scheme"]),
                bytes.fromhex(data["signature"]),
                int(data["checkpoint_size"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CodecError(f"malformed cosignature: {exc}") from None


@dataclass(frozen=True)
class MTCProof:
    range: SubtreeRange
    inclusion: InclusionProof
    cosignatures: Tuple[Cosignature, ...] = ()

    @property
    def is_landmark(self) -> bool:
        return not self.cosignatures

    def encode(self, w: Writer) -> None:
        if len(self.inclusion) > MAX_PROOF_HASHES:
            raise CodecError("too many proof hashes")
        if len(self.cosignatures) > MAX_COSIGNATURES:
            raise CodecError("too many cosignatures")
        w.u64(self.range.start)
        w.u64(self.range.end)
        w.u8(len(self.inclusion))
        for h in self.inclusion.hashes:
            if len(h) != HASH_SIZE:
                raise CodecError("proof hash must be 32 bytes")
            w.raw(h)
        w.u8(len(self.cosignatures))
        for cosig in self.cosignatures:
            cosig.encode(w)

    @classmethod
    def decode(cls, r: Reader) -> "MTCProof":
        start, end = r.u64(), r.u64()
        try:
            rng = SubtreeRange(start, end)
        except ValueError as exc:
            raise CodecError(str(exc)) from None
        count = r.u8()
        if count > MAX_PROOF_HASHES:
            raise CodecError(f"proof carries {count} hashes, limit {MAX_PROOF_HASHES}")
        hashes = tuple(r.raw(HASH_SIZE) for _ in range(count))
        n_cosigs = r.u8()
        if n_cosigs > MAX_COSIGNATURES:
            raise CodecError("too many cosignatures")
        cosigs = tuple(Cosignature.decode(r) for _ in range(n_cosigs))
        return cls(rng, InclusionProof(hashes), cosigs)


def encode_proof(proof: MTCProof) -> bytes:
    w = Writer()
    proof.encode(w)
    return w.bytes


def decode_proof(data: bytes) -> MTCProof:
    r = Reader(data)
    proof = MTCProof.decode(r)
    r.finish()
    return proof


@dataclass(frozen=True)
class MTCCertificate:
    log_id: TrustAnchorID
    index: int
    entry: TBSCertEntry
    entity_public_key: bytes = field(repr=False)
    proof: MTCProof

    @property
    def is_landmark(self) -> bool:
        return self.proof.is_landmark

    def validate(self) -> None:
        """Raise :class:`CodecError` unless the structural invariants hold."""
        if hashlib.sha256(self.entity_public_key).digest() != self.entry.spki_hash:
            raise CodecError("entity public key does not match spki_hash")
        if not self.proof.range.contains(self.index):
            raise CodecError(f"index {self.index} outside proof range {self.proof.range}")

    @property
    def encoded_size(self) -> int:
        return len(encode_certificate(self))


def encode_certificate(cert: MTCCertificate) -> bytes:
    cert.validate()
    w = Writer()
    cert.log_id.encode(w)
    w.u64(cert.index)
    w.var_bytes(cert.entry.encoded, 2)
    w.var_bytes(cert.entity_public_key, 2)
    cert.proof.encode(w)
    return w.bytes


def decode_certificate(data: bytes) -> MTCCertificate:
    r = Reader(data)
    log_id = TrustAnchorID.decode(r)
    index = r.u64()
    entry_reader = Reader(r.var_bytes(2))
    entry = read_entry(entry_reader)
    entry_reader.finish()
    if entry is None:
        raise CodecError("certificate cannot carry a null entry")
    key = r.var_bytes(2)
    proof = MTCProof.decode(r)
    r.finish()
    cert = MTCCertificate(log_id, index, entry, key, proof)
    cert.validate()
    return cert
