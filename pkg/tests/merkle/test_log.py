"""Tests for the append-only Merkle log.

Proofs are compared byte-for-byte with an independent recursive builder
written straight from the RFC 9162 definitions.
"""
import hashlib
from functools import lru_cache

import pytest

from conftest import load_vectors
from mtc_pki.errors import LogRangeError, ProofUnavailable
from mtc_pki.merkle.hashing import EMPTY_ROOT, leaf_hash
from mtc_pki.merkle.log import MerkleLog
from mtc_pki.merkle.proofs import (
    Checkpoint,
    SubtreeRange,
    decompose_range,
    verify_consistency,
    verify_containment,
    verify_inclusion,
)

ORACLE_SIZE = 1024


def _leaf(i: int) -> bytes:
    return leaf_hash(i.to_bytes(4, "big"))


LEAVES = [_leaf(i) for i in range(ORACLE_SIZE)]


# Brute-force reference builder -------------------------------------------

def _k(n: int) -> int:
    k = 1
    while k * 2 < n:
        k *= 2
    return k


@lru_cache(maxsize=None)
def mth(lo: int, hi: int) -> bytes:
    """MTH(D[lo:hi]) over LEAVES."""
    n = hi - lo
    if n == 0:
        return hashlib.sha256(b"").digest()
    if n == 1:
        return LEAVES[lo]
    k = _k(n)
    return hashlib.sha256(b"\x01" + mth(lo, lo + k) + mth(lo + k, hi)).digest()


def oracle_path(m: int, lo: int, hi: int) -> list:
    """PATH(m, D[lo:hi]) with m relative to lo."""
    n = hi - lo
    if n == 1:
        return []
    k = _k(n)
    if m < k:
        return oracle_path(m, lo, lo + k) + [mth(lo + k, hi)]
    return oracle_path(m - k, lo + k, hi) + [mth(lo, lo + k)]


def oracle_proof(m: int, n: int) -> list:
    def subproof(m, lo, hi, b):
        size = hi - lo
        if m == size:
            return [] if b else [mth(lo, hi)]
        k = _k(size)
        if m <= k:
            return subproof(m, lo, lo + k, b) + [mth(lo + k, hi)]
        return subproof(m - k, lo + k, hi, False) + [mth(lo, lo + k)]

    if m == 0 or m == n:
        return []
    return subproof(m, 0, n, True)


@pytest.fixture(scope="module")
def full_log():
    log = MerkleLog()
    for leaf in LEAVES:
        log.append(leaf)
    return log


# Tests ---------------------------------------------------------------------

def test_empty_log():
    """Test that a new log has size zero and the empty root."""
    log = MerkleLog()

    assert log.size == 0
    assert log.checkpoint() == Checkpoint(EMPTY_ROOT, 0)
    assert log.frontier() == []


def test_rfc6962_roots():
    """Test tree heads against the RFC 6962 reference vectors."""
    vectors = load_vectors("rfc6962_vectors.json")
    log = MerkleLog()

    assert log.checkpoint().root.hex() == vectors["roots"]["0"]
    for i, data in enumerate(vectors["leaves"], start=1):
        log.append(leaf_hash(bytes.fromhex(data)))
        assert log.checkpoint().root.hex() == vectors["roots"][str(i)]


def test_roots_match_oracle(full_log):
    """Test that every prefix root equals the reference MTH."""
    for n in range(1, ORACLE_SIZE + 1):
        assert full_log.checkpoint_at(n).root == mth(0, n)


def test_inclusion_proofs_match_oracle(full_log):
    """Test every leaf of every tree size up to 1024 against the reference PATH."""
    for n in range(1, ORACLE_SIZE + 1):
        rng = SubtreeRange(0, n)
        for i in range(n):
            assert list(full_log.inclusion_proof(i, rng).hashes) == oracle_path(i, 0, n)


def test_inclusion_proofs_verify_in_aligned_subtrees(full_log):
    """Test that proofs inside every aligned piece of [0, n) verify against the piece root."""
    for n in range(1, ORACLE_SIZE + 1, 13):
        for rng in decompose_range(SubtreeRange(0, n)):
            root = mth(rng.start, rng.end)
            for i in range(rng.start, rng.end, max(1, rng.width // 8)):
                proof = full_log.inclusion_proof(i, rng)
                assert verify_inclusion(LEAVES[i], i, proof, rng, root)
    root = full_log.checkpoint().root
    whole = SubtreeRange(0, ORACLE_SIZE)
    for i in range(ORACLE_SIZE):
        assert verify_inclusion(LEAVES[i], i, full_log.inclusion_proof(i, whole), whole, root)


def test_consistency_proofs_match_oracle(full_log):
    """Test consistency proofs for all pairs up to 256 and sampled pairs up to 1024."""
    pairs = [(m, n) for n in range(1, 257) for m in range(1, n + 1)]
    pairs += [(m, n) for n in range(257, ORACLE_SIZE + 1, 7) for m in (1, 2, 3, n // 2, n - 1, n)]
    for m, n in pairs:
        proof = full_log.consistency_proof(m, n)
        assert list(proof.hashes) == oracle_proof(m, n)
        assert verify_consistency(Checkpoint(mth(0, m), m), Checkpoint(mth(0, n), n), proof)


def test_subtree_inclusion_proof_sizes(full_log):
    """Test that aligned subtree proofs carry log2(width) hashes (128/320 bytes)."""
    for width, expected in ((16, 128), (1024, 320)):
        rng = SubtreeRange(0, width)
        proof = full_log.inclusion_proof(width - 1, rng)
        assert proof.byte_size == expected
        assert verify_inclusion(LEAVES[width - 1], width - 1, proof, rng, full_log.subtree_root(rng))


def test_subtree_inclusion_4096():
    """Test the 4096-leaf subtree proof is 384 bytes."""
    log = MerkleLog()
    for i in range(4096):
        log.append(_leaf(i))
    rng = SubtreeRange(0, 4096)

    proof = log.inclusion_proof(4095, rng)

    assert proof.byte_size == 384


def test_subtree_root_matches_oracle(full_log):
    """Test aligned subtree roots of the decomposition of an arbitrary range."""
    for rng in decompose_range(SubtreeRange(37, 1000)):
        assert rng.is_aligned
        assert full_log.subtree_root(rng) == mth(rng.start, rng.end)


@pytest.mark.parametrize("size,extra", [(0, 5), (1, 1), (37, 100), (512, 300), (777, 0)])
def test_root_after_does_not_append(size, extra):
    """Test the root of a tentative extension against the oracle without growing the log."""
    log = MerkleLog()
    for leaf in LEAVES[:size]:
        log.append(leaf)

    assert log.root_after(LEAVES[size:size + extra]) == mth(0, size + extra)
    assert log.size == size


def test_containment_proofs(full_log):
    """Test that each aligned piece of a landmark range is contained in the checkpoint."""
    size = 1000
    checkpoint = full_log.checkpoint_at(size)
    for rng in decompose_range(SubtreeRange(300, size)):
        proof = full_log.containment_proof(rng, size)
        assert verify_containment(rng, full_log.subtree_root(rng), proof, checkpoint)
        assert not verify_containment(rng, bytes(32), proof, checkpoint)


def test_decompose_range_examples():
    """Test the greedy aligned decomposition."""
    assert decompose_range(SubtreeRange(0, 8)) == [SubtreeRange(0, 8)]
    assert decompose_range(SubtreeRange(0, 7)) == [
        SubtreeRange(0, 4), SubtreeRange(4, 6), SubtreeRange(6, 7),
    ]
    assert decompose_range(SubtreeRange(5, 13)) == [
        SubtreeRange(5, 6), SubtreeRange(6, 8), SubtreeRange(8, 12), SubtreeRange(12, 13),
    ]


def test_out_of_range_requests(full_log):
    """Test that requests beyond the log raise LogRangeError."""
    with pytest.raises(LogRangeError):
        full_log.checkpoint_at(ORACLE_SIZE + 1)
    with pytest.raises(LogRangeError):
        full_log.inclusion_proof(5, SubtreeRange(0, ORACLE_SIZE + 8))
    with pytest.raises(LogRangeError):
        full_log.consistency_proof(10, 5)
    with pytest.raises(LogRangeError):
        full_log.subtree_root(SubtreeRange(3, 6))


def test_append_rejects_bad_leaf():
    """Test that only 32-byte leaf hashes are accepted."""
    with pytest.raises(ValueError):
        MerkleLog().append(b"short")


def test_persistence_roundtrip(tmp_path):
    """Test that a reopened log has the same size, root and proofs."""
    log = MerkleLog(tmp_path / "log")
    for leaf in LEAVES[:100]:
        log.append(leaf)

    reopened = MerkleLog(tmp_path / "log")

    assert reopened.size == 100
    assert reopened.checkpoint() == log.checkpoint()
    assert reopened.inclusion_proof(42, SubtreeRange(0, 100)) == log.inclusion_proof(42, SubtreeRange(0, 100))


def test_prune_keeps_later_proofs(tmp_path):
    """Test that pruning drops early leaves but keeps roots and later proofs."""
    log = MerkleLog(tmp_path / "log")
    for leaf in LEAVES[:64]:
        log.append(leaf)
    root = log.checkpoint().root

    state = log.prune_before(20)

    assert state.min_available_index == 20
    assert log.checkpoint().root == root
    proof = log.inclusion_proof(40, SubtreeRange(0, 64))
    assert verify_inclusion(LEAVES[40], 40, proof, SubtreeRange(0, 64), root)
    with pytest.raises(ProofUnavailable):
        log.inclusion_proof(5, SubtreeRange(0, 64))
    with pytest.raises(ProofUnavailable):
        log.leaf_at(19)

    log.append(LEAVES[64])
    reopened = MerkleLog(tmp_path / "log")
    assert reopened.min_available_index == 20
    assert reopened.checkpoint() == log.checkpoint() == Checkpoint(mth(0, 65), 65)


def test_prune_is_monotone():
    """Test that the pruning boundary never moves backwards."""
    log = MerkleLog()
    for leaf in LEAVES[:16]:
        log.append(leaf)
    log.prune_before(8)

    with pytest.raises(LogRangeError):
        log.prune_before(4)
