"""Domain-separated SHA-256 hashing for the issuance log.

Leaves are hashed as SHA-256(0x00 || entry) and interior nodes as
SHA-256(0x01 || left || right), following RFC 9162.
"""
from __future__ import annotations

import hashlib

HASH_SIZE = 32
LEAF_PREFIX = b"\x00"
NODE_PREFIX = b"\x01"

#: Root of the tree with zero leaves.
EMPTY_ROOT = hashlib.sha256(b"").digest()


def leaf_hash(entry_bytes: bytes) -> bytes:
    """Hash an encoded log entry into a leaf."""
    return hashlib.sha256(LEAF_PREFIX + entry_bytes).digest()


def node_hash(left: bytes, right: bytes) -> bytes:
    """Hash two child hashes into their parent."""
    return hashlib.sha256(NODE_PREFIX + left + right).digest()


class HashCounter:
    """Counts SHA-256 evaluations made through it.

    Verifiers accept an optional counter so callers can report exactly how
    many hash operations a verification cost.
    """

    __slots__ = ("ops",)

    def __init__(self) -> None:
        self.ops = 0

    def sha256(self, data: bytes) -> bytes:
        self.ops += 1
        return hashlib.sha256(data).digest()

    def leaf(self, entry_bytes: bytes) -> bytes:
        self.ops += 1
        return hashlib.sha256(LEAF_PREFIX + entry_bytes).digest()

    def node(self, left: bytes, right: bytes) -> bytes:
        self.ops += 1
        return hashlib.sha256(NODE_PREFIX + left + right).digest()


def node_hasher(counter: HashCounter | None):
    """Return the node hash function, routed through *counter* when given."""
    return counter.node if counter is not None else node_hash
