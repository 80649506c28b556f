"""Log entry encoding.

Wire layout of a ``tbs_cert_entry`` (all integers big-endian)::

    u16   entry_type        = 1
    u16   len ; subject     UTF-8
    u16   count ; count x (u16 len ; dns_name UTF-8)
    u64   not_before        unix seconds
    u64   not_after         unix seconds
    u16   spki_algorithm    SignatureSchemeId
    32    spki_hash         SHA-256 of the full public key

A ``null_entry`` is the bare tag ``00 00``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from typing import Optional, Tuple

from ..errors import CodecError
from ..merkle.hashing import HASH_SIZE, HashCounter, leaf_hash
from .schemes import SignatureSchemeId
from .wire import Reader, Writer

MAX_DNS_NAMES = 256


class EntryType(IntEnum):
    NULL_ENTRY = 0
    TBS_CERT_ENTRY = 1


@dataclass(frozen=True)
class TBSCertEntry:
    """The to-be-certified identity record that becomes a log leaf."""

    subject: str
    dns_names: Tuple[str, ...]
    not_before: int
    not_after: int
    spki_algorithm: SignatureSchemeId
    spki_hash: bytes = field(repr=False)

    def __post_init__(self) -> None:
        if not self.subject:
            raise CodecError("entry subject must be non-empty")
        if not isinstance(self.dns_names, tuple):
            object.__setattr__(self, "dns_names", tuple(self.dns_names))
        if len(self.dns_names) > MAX_DNS_NAMES:
            raise CodecError("too many DNS names")
        if not 0 <= self.not_before < self.not_after < 1 << 64:
            raise CodecError("entry validity requires not_before < not_after")
        if len(self.spki_hash) != HASH_SIZE:
            raise CodecError("spki_hash must be 32 bytes")
        try:
            object.__setattr__(self, "spki_algorithm", SignatureSchemeId(self.spki_algorithm))
        except ValueError:
            raise CodecError(f"unknown spki algorithm {self.spki_algorithm!r}") from None

    @classmethod
    def for_key(
        cls,
        subject: str,
        dns_names,
        not_before: int,
        not_after: int,
        scheme: SignatureSchemeId,
        public_key: bytes,
    ) -> "TBSCertEntry":
        return cls(
            subject, tuple(dns_names), not_before, not_after, scheme,
            hashlib.sha256(public_key).digest(),
        )

    @cached_property
    def encoded(self) -> bytes:
        w = Writer()
        w.u16(EntryType.TBS_CERT_ENTRY)
        w.text(self.subject)
        w.u16(len(self.dns_names))
        for name in self.dns_names:
            w.text(name)
        w.u64(self.not_before)
        w.u64(self.not_after)
        w.u16(self.spki_algorithm)
        w.raw(self.spki_hash)
        return w.bytes

    def to_dict(self) -> dict:
        return {
            "subject": self.subject,
            "dns_names": list(self.dns_names),
            "not_before": self.not_before,
            "not_after": self.not_after,
            "spki_algorithm": self.spki_algorithm.label,
            "spki_hash": self.spki_hash.hex(),
        }


NULL_ENTRY_BYTES = int(EntryType.NULL_ENTRY).to_bytes(2, "big")


def encode_entry(entry: TBSCertEntry) -> bytes:
    return entry.encoded


def read_entry(r: Reader) -> Optional[TBSCertEntry]:
    """Read one entry; ``None`` stands for ``null_entry``."""
    tag = r.u16()
    if tag == EntryType.NULL_ENTRY:
        return None
    if tag != EntryType.TBS_CERT_ENTRY:
        raise CodecError(f"unknown entry type {tag}")
    subject = r.text()
    count = r.u16()
    if count > MAX_DNS_NAMES:
        raise CodecError("too many DNS names")
    names = tuple(r.text() for _ in range(count))
    not_before = r.u64()
    not_after = r.u64()
    algorithm = r.u16()
    spki_hash = r.raw(HASH_SIZE)
    try:
        algorithm = SignatureSchemeId(algorithm)
    except ValueError:
        raise CodecError(f"unknown spki algorithm {algorithm:#06x}") from None
    return TBSCertEntry(subject, names, not_before, not_after, algorithm, spki_hash)


def decode_entry(data: bytes) -> Optional[TBSCertEntry]:
    r = Reader(data)
    entry = read_entry(r)
    r.finish()
    return entry


def entry_hash(entry: TBSCertEntry, counter: Optional[HashCounter] = None) -> bytes:
    """Leaf hash of *entry*. Hashes ``spki_hash``, never the full key."""
    if counter is not None:
        return counter.leaf(entry.encoded)
    return leaf_hash(entry.encoded)
