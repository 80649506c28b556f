"""Merkle tree value types, proof construction and proof verification.

Construction functions are written against a ``subtree_hash(lo, hi)``
callable so the CA-side log and the mirror replica build byte-identical
proofs from their own node stores. Verification functions are pure and
never raise on malformed input; they return ``False``.

Tree shape follows RFC 9162: a range of ``n`` leaves splits at the largest
power of two strictly below ``n``. For aligned power-of-two ranges this is
the perfect binary tree.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .hashing import EMPTY_ROOT, HASH_SIZE, HashCounter, node_hash, node_hasher

#: Upper bound on hashes in any proof we accept or decode.
MAX_PROOF_HASHES = 64

SubtreeHashFn = Callable[[int, int], bytes]


def largest_power_of_two_below(n: int) -> int:
    """Largest power of two strictly less than ``n`` (``n`` > 1)."""
    return 1 << ((n - 1).bit_length() - 1)


def ceil_log2(n: int) -> int:
    return (n - 1).bit_length() if n > 1 else 0


@dataclass(frozen=True, order=True)
class SubtreeRange:
    """Half-open leaf range ``[start, end)``."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if not (0 <= self.start < self.end < 1 << 64):
            raise ValueError(f"invalid subtree range [{self.start}, {self.end})")

    @property
    def width(self) -> int:
        return self.end - self.start

    @property
    def is_aligned(self) -> bool:
        w = self.width
        return w & (w - 1) == 0 and self.start % w == 0

    @property
    def level(self) -> int:
        """Tree level of an aligned range (0 for a single leaf)."""
        return self.width.bit_length() - 1

    def contains(self, index: int) -> bool:
        return self.start <= index < self.end

    def to_dict(self) -> dict:
        return {"start": self.start, "end": self.end}

    def __str__(self) -> str:
        return f"[{self.start}, {self.end})"


@dataclass(frozen=True)
class Checkpoint:
    """Snapshot ``(root, size)`` of the log."""

    root: bytes
    size: int

    def __post_init__(self) -> None:
        if len(self.root) != HASH_SIZE:
            raise ValueError("checkpoint root must be 32 bytes")
        if not 0 <= self.size < 1 << 64:
            raise ValueError("checkpoint size out of range")

    def message(self) -> bytes:
        """Canonical cosignature message: root || big-endian 64-bit size."""
        return self.root + struct.pack(">Q", self.size)

    def to_dict(self) -> dict:
        return {"root": self.root.hex(), "size": self.size}

    @classmethod
    def from_dict(cls, data: dict) -> "Checkpoint":
        return cls(root=bytes.fromhex(data["root"]), size=int(data["size"]))


@dataclass(frozen=True)
class InclusionProof:
    """Sibling hashes from a leaf up to a subtree root, deepest first."""

    hashes: tuple[bytes, ...] = ()

    def __len__(self) -> int:
        return len(self.hashes)

    @property
    def byte_size(self) -> int:
        return HASH_SIZE * len(self.hashes)

    def to_list(self) -> list[str]:
        return [h.hex() for h in self.hashes]

    @classmethod
    def from_list(cls, items: Iterable[str]) -> "InclusionProof":
        return cls(tuple(bytes.fromhex(h) for h in items))


@dataclass(frozen=True)
class ConsistencyProof:
    """Hashes proving an append-only extension (or subtree containment)."""

    hashes: tuple[bytes, ...] = ()

    def __len__(self) -> int:
        return len(self.hashes)

    @property
    def byte_size(self) -> int:
        return HASH_SIZE * len(self.hashes)

    def to_list(self) -> list[str]:
        return [h.hex() for h in self.hashes]

    @classmethod
    def from_list(cls, items: Iterable[str]) -> "ConsistencyProof":
        return cls(tuple(bytes.fromhex(h) for h in items))


# ---------------------------------------------------------------------------
# Range decomposition
# ---------------------------------------------------------------------------

def decompose_range(rng: SubtreeRange) -> list[SubtreeRange]:
    """Split ``rng`` into the minimal left-to-right list of aligned subtrees.

    Greedy: at each step take the largest aligned power-of-two block that
    starts at the cursor and does not overrun ``rng.end``.
    """
    out: list[SubtreeRange] = []
    start, end = rng.start, rng.end
    while start < end:
        # alignment limit of the cursor; 0 is aligned to everything
        size = start & -start if start else 1 << 63
        while start + size > end:
            size >>= 1
        out.append(SubtreeRange(start, start + size))
        start += size
    return out


# ---------------------------------------------------------------------------
# Construction (over a subtree-hash source)
# ---------------------------------------------------------------------------

def tree_hash(lo: int, hi: int, aligned_node: Callable[[int, int], bytes]) -> bytes:
    """RFC 9162 hash of leaves ``[lo, hi)`` built from aligned node lookups.

    ``aligned_node(level, index)`` returns the stored hash of the aligned
    block ``[index << level, (index + 1) << level)``. ``lo`` must be
    aligned to the left split of every recursion step, which holds for
    ``lo == 0`` and for aligned ranges.
    """
    n = hi - lo
    if n == 0:
        return EMPTY_ROOT
    if n & (n - 1) == 0 and lo % n == 0:
        level = n.bit_length() - 1
        return aligned_node(level, lo >> level)
    k = largest_power_of_two_below(n)
    return node_hash(
        tree_hash(lo, lo + k, aligned_node), tree_hash(lo + k, hi, aligned_node)
    )


def compact_root(frontier: Sequence[tuple[int, bytes]], leaves: Sequence[bytes]) -> bytes:
    """Root after appending *leaves* to a tree given by its frontier.

    *frontier* is the list of ``(width, hash)`` perfect subtrees covering the
    current tree, widest first.
    """
    stack = list(frontier)
    for leaf in leaves:
        width, node = 1, leaf
        while stack and stack[-1][0] == width:
            left_width, left = stack.pop()
            node = node_hash(left, node)
            width += left_width
        stack.append((width, node))
    if not stack:
        return EMPTY_ROOT
    root = stack[-1][1]
    for _, left in reversed(stack[:-1]):
        root = node_hash(left, root)
    return root


def build_inclusion_path(index: int, lo: int, hi: int, subtree_hash: SubtreeHashFn) -> list[bytes]:
    """RFC 9162 PATH(index, D[lo:hi]), deepest sibling first."""
    path: list[bytes] = []
    while hi - lo > 1:
        k = largest_power_of_two_below(hi - lo)
        if index < lo + k:
            path.append(subtree_hash(lo + k, hi))
            hi = lo + k
        else:
            path.append(subtree_hash(lo, lo + k))
            lo = lo + k
    path.reverse()
    return path


def build_consistency_path(old_size: int, new_size: int, subtree_hash: SubtreeHashFn) -> list[bytes]:
    """RFC 9162 PROOF(m, D[0:n]); empty for ``m == 0`` or ``m == n``."""
    if old_size == 0 or old_size == new_size:
        return []
    return _subproof(old_size, 0, new_size, True, subtree_hash)


def consistency_proof_length(old_size: int, new_size: int) -> int:
    """Number of hashes an honest consistency proof between the two sizes carries."""
    if old_size == 0 or old_size >= new_size:
        return 0
    m, n, complete, count = old_size, new_size, True, 0
    while m != n:
        k = largest_power_of_two_below(n)
        count += 1
        if m <= k:
            n = k
        else:
            m, n, complete = m - k, n - k, False
    return count + (0 if complete else 1)


def _subproof(m: int, lo: int, hi: int, complete: bool, subtree_hash: SubtreeHashFn) -> list[bytes]:
    n = hi - lo
    if m == n:
        return [] if complete else [subtree_hash(lo, hi)]
    k = largest_power_of_two_below(n)
    if m <= k:
        return _subproof(m, lo, lo + k, complete, subtree_hash) + [subtree_hash(lo + k, hi)]
    return _subproof(m - k, lo + k, hi, False, subtree_hash) + [subtree_hash(lo, lo + k)]


def build_containment_path(rng: SubtreeRange, size: int, subtree_hash: SubtreeHashFn) -> list[bytes]:
    """Sibling path from the aligned subtree ``rng`` to the root of the size-``size`` tree.

    Every aligned block lying inside ``[0, size)`` is a node of the RFC 9162
    tree, so the path is the inclusion path of that node.
    """
    lo, hi = 0, size
    path: list[bytes] = []
    while (lo, hi) != (rng.start, rng.end):
        k = largest_power_of_two_below(hi - lo)
        if rng.end <= lo + k:
            path.append(subtree_hash(lo + k, hi))
            hi = lo + k
        else:
            path.append(subtree_hash(lo, lo + k))
            lo = lo + k
    path.reverse()
    return path


# ---------------------------------------------------------------------------
# Verification (pure)
# ---------------------------------------------------------------------------

def _fold_path(node: bytes, fn: int, sn: int, hashes: Sequence[bytes], counter: HashCounter | None) -> bytes | None:
    """RFC 9162 inclusion fold; returns the root or ``None`` when the shape is wrong."""
    h = node_hasher(counter)
    r = node
    for p in hashes:
        if sn == 0 or len(p) != HASH_SIZE:
            return None
        if fn & 1 or fn == sn:
            r = h(p, r)
            if not fn & 1:
                while not fn & 1 and fn != 0:
                    fn >>= 1
                    sn >>= 1
        else:
            r = h(r, p)
        fn >>= 1
        sn >>= 1
    if sn != 0:
        return None
    return r


def root_from_inclusion(
    leaf: bytes,
    index: int,
    proof: InclusionProof,
    rng: SubtreeRange,
    counter: HashCounter | None = None,
) -> bytes | None:
    """Recompute the subtree root implied by ``leaf`` at ``index``.

    Returns ``None`` when the inputs cannot describe a valid path.
    """
    if len(leaf) != HASH_SIZE or not rng.contains(index) or len(proof.hashes) > MAX_PROOF_HASHES:
        return None
    return _fold_path(leaf, index - rng.start, rng.width - 1, proof.hashes, counter)


def verify_inclusion(
    leaf: bytes,
    index: int,
    proof: InclusionProof,
    rng: SubtreeRange,
    expected_root: bytes,
    counter: HashCounter | None = None,
) -> bool:
    root = root_from_inclusion(leaf, index, proof, rng, counter)
    return root is not None and root == expected_root


def verify_consistency(
    old: Checkpoint,
    new: Checkpoint,
    proof: ConsistencyProof,
    counter: HashCounter | None = None,
) -> bool:
    """RFC 9162 consistency verification between two checkpoints."""
    m, n = old.size, new.size
    hashes = proof.hashes
    if m > n or len(hashes) > MAX_PROOF_HASHES:
        return False
    if m == n:
        return not hashes and old.root == new.root
    if m == 0:
        return not hashes and old.root == EMPTY_ROOT
    if not hashes or any(len(c) != HASH_SIZE for c in hashes):
        return False

    h = node_hasher(counter)
    path = list(hashes)
    if m & (m - 1) == 0:
        path.insert(0, old.root)
    fn, sn = m - 1, n - 1
    while fn & 1:
        fn >>= 1
        sn >>= 1
    fr = sr = path[0]
    for c in path[1:]:
        if sn == 0:
            return False
        if fn & 1 or fn == sn:
            fr = h(c, fr)
            sr = h(c, sr)
            if not fn & 1:
                while not fn & 1 and fn != 0:
                    fn >>= 1
                    sn >>= 1
        else:
            sr = h(sr, c)
        fn >>= 1
        sn >>= 1
    return sn == 0 and fr == old.root and sr == new.root


def verify_containment(
    rng: SubtreeRange,
    subtree_root: bytes,
    proof: ConsistencyProof,
    checkpoint: Checkpoint,
    counter: HashCounter | None = None,
) -> bool:
    """Check that the aligned subtree ``rng`` with ``subtree_root`` is part of ``checkpoint``."""
    if not rng.is_aligned or rng.end > checkpoint.size or len(subtree_root) != HASH_SIZE:
        return False
    if len(proof.hashes) > MAX_PROOF_HASHES:
        return False
    level = rng.level
    root = _fold_path(subtree_root, rng.start >> level, (checkpoint.size - 1) >> level, proof.hashes, counter)
    return root is not None and root == checkpoint.root
