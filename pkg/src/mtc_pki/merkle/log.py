"""Append-only Merkle log of entry hashes.

Storage layout of a log directory:

* ``leaves.bin``: concatenated 32-byte leaf hashes, starting at leaf
  ``leaves_offset`` (leaves before it were pruned).
* ``frontier.json``: ``size``, ``min_available_index``, ``leaves_offset``,
  ``frontier`` (hex hashes of the aligned subtrees covering ``[0, size)``,
  left to right) and ``retained`` (``[level, index, hex]`` node hashes kept
  from the pruned region so roots and proofs over retained leaves stay
  computable).

The log keeps every complete aligned node in memory, keyed by
``(level, index)``; appends extend the right edge in O(log n).
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from ..errors import LogRangeError, ProofUnavailable, StorageError
from ..logging.logger import get_logger
from ..utils.helpers import load_json, save_json
from .hashing import EMPTY_ROOT, HASH_SIZE, node_hash
from .proofs import (
    Checkpoint,
    ConsistencyProof,
    InclusionProof,
    SubtreeRange,
    build_consistency_path,
    build_containment_path,
    build_inclusion_path,
    compact_root,
    decompose_range,
    tree_hash,
)

logger = get_logger()

LEAVES_FILE = "leaves.bin"
FRONTIER_FILE = "frontier.json"


@dataclass(frozen=True)
class PruneState:
    min_available_index: int


class MerkleLog:
    """Single-writer, many-reader Merkle log.

    Pass ``data_dir=None`` for a purely in-memory log (tests, replicas built
    on the fly).
    """

    def __init__(self, data_dir: Optional[Path] = None) -> None:
        self._dir = Path(data_dir) if data_dir is not None else None
        self._lock = threading.RLock()
        self._nodes: Dict[Tuple[int, int], bytes] = {}
        self._size = 0
        self._min_available = 0
        self._leaves_offset = 0
        self._retained_doc: List[list] = []
        if self._dir is not None:
            self._dir.mkdir(parents=True, exist_ok=True)
            self._load()

    # ------------------------------------------------------------------
    # Read side
    # ------------------------------------------------------------------

    @property
    def size(self) -> int:
        with self._lock:
            return self._size

    @property
    def min_available_index(self) -> int:
        with self._lock:
            return self._min_available

    @property
    def data_dir(self) -> Optional[Path]:
        return self._dir

    def leaf_at(self, index: int) -> bytes:
        with self._lock:
            if index >= self._size:
                raise LogRangeError(f"leaf {index} beyond log size {self._size}")
            if index < self._min_available:
                raise ProofUnavailable(f"leaf {index} was pruned")
            return self._nodes[(0, index)]

    def leaves(self, start: int, end: int) -> List[bytes]:
        with self._lock:
            return [self.leaf_at(i) for i in range(start, min(end, self._size))]

    def checkpoint(self) -> Checkpoint:
        """Checkpoint over the whole log."""
        with self._lock:
            return self.checkpoint_at(self._size)

    def checkpoint_at(self, size: int) -> Checkpoint:
        with self._lock:
            if size > self._size:
                raise LogRangeError(f"size {size} exceeds log size {self._size}")
            if size == 0:
                return Checkpoint(EMPTY_ROOT, 0)
            return Checkpoint(self._tree_hash(0, size), size)

    def frontier(self, size: Optional[int] = None) -> List[bytes]:
        """Hashes of the aligned subtrees covering ``[0, size)``, left to right."""
        with self._lock:
            size = self._size if size is None else size
            if size == 0:
                return []
            return [self._node(r.level, r.start >> r.level) for r in decompose_range(SubtreeRange(0, size))]

    def root_after(self, leaves: Sequence[bytes]) -> bytes:
        """Root the log would have with *leaves* appended; the log itself is unchanged."""
        with self._lock:
            ranges = decompose_range(SubtreeRange(0, self._size)) if self._size else []
            frontier = [(r.width, self._node(r.level, r.start >> r.level)) for r in ranges]
        return compact_root(frontier, leaves)

    def subtree_root(self, rng: SubtreeRange) -> bytes:
        with self._lock:
            if not rng.is_aligned:
                raise LogRangeError(f"range {rng} is not aligned")
            self._check_within(rng.end)
            return self._node(rng.level, rng.start >> rng.level)

    def inclusion_proof(self, index: int, rng: SubtreeRange) -> InclusionProof:
        """Proof of leaf ``index`` within ``rng``.

        ``rng`` must be aligned, or start at 0 (a whole-tree proof in the
        RFC 9162 shape).
        """
        with self._lock:
            if not rng.contains(index):
                raise LogRangeError(f"index {index} outside {rng}")
            if not (rng.is_aligned or rng.start == 0):
                raise LogRangeError(f"range {rng} is neither aligned nor a tree prefix")
            self._check_within(rng.end)
            if index < self._min_available:
                raise ProofUnavailable(f"leaf {index} was pruned")
            path = build_inclusion_path(index, rng.start, rng.end, self._tree_hash)
            return InclusionProof(tuple(path))

    def consistency_proof(self, old_size: int, new_size: int) -> ConsistencyProof:
        with self._lock:
            if old_size > new_size:
                raise LogRangeError(f"old size {old_size} exceeds new size {new_size}")
            self._check_within(new_size)
            if 0 < old_size < self._min_available:
                raise ProofUnavailable(f"size {old_size} lies in the pruned region")
            return ConsistencyProof(tuple(build_consistency_path(old_size, new_size, self._tree_hash)))

    def containment_proof(self, rng: SubtreeRange, size: int) -> ConsistencyProof:
        """Proof that the aligned subtree ``rng`` is part of the tree of ``size`` leaves."""
        with self._lock:
            if not rng.is_aligned:
                raise LogRangeError(f"range {rng} is not aligned")
            if rng.end > size:
                raise LogRangeError(f"range {rng} not inside tree of size {size}")
            self._check_within(size)
            return ConsistencyProof(tuple(build_containment_path(rng, size, self._tree_hash)))

    # ------------------------------------------------------------------
    # Write side
    # ------------------------------------------------------------------

    def append(self, leaf: bytes) -> int:
        """Append a leaf hash and return its index."""
        if len(leaf) != HASH_SIZE:
            raise ValueError("leaf hash must be 32 bytes")
        with self._lock:
            index = self._size
            if self._dir is not None:
                try:
                    with (self._dir / LEAVES_FILE).open("ab") as f:
                        f.write(leaf)
                except OSError as exc:
                    raise StorageError(f"cannot append leaf: {exc}") from exc
            self._insert_leaf(index, leaf)
            self._size = index + 1
            self._persist_frontier()
            return index

    def prune_before(self, index: int) -> PruneState:
        """Drop leaves below ``index``; roots and proofs over later leaves remain available."""
        with self._lock:
            if index > self._size:
                raise LogRangeError(f"cannot prune beyond log size {self._size}")
            if index < self._min_available:
                raise LogRangeError(
                    f"pruning is monotone: {index} < current boundary {self._min_available}"
                )
            if index == self._min_available:
                return PruneState(self._min_available)

            self._nodes = {
                key: value for key, value in self._nodes.items() if self._retain(key, index)
            }
            self._min_available = index
            if self._dir is not None:
                self._rewrite_leaves(index)
            self._persist_frontier()
            logger.info("Pruned log before index %d (size %d)", index, self._size)
            return PruneState(index)

    # ------------------------------------------------------------------
    # Internals
    # ------------------------------------------------------------------

    def _check_within(self, end: int) -> None:
        if end > self._size:
            raise LogRangeError(f"range end {end} beyond log size {self._size}")

    def _node(self, level: int, index: int) -> bytes:
        try:
            return self._nodes[(level, index)]
        except KeyError:
            raise ProofUnavailable(
                f"node at level {level}, index {index} is not available"
            ) from None

    def _tree_hash(self, lo: int, hi: int) -> bytes:
        return tree_hash(lo, hi, self._node)

    def _insert_leaf(self, index: int, leaf: bytes) -> None:
        self._nodes[(0, index)] = leaf
        level, i = 0, index
        while i & 1:
            left = self._nodes.get((level, i - 1))
            if left is None:
                raise StorageError(f"missing node ({level}, {i - 1}) while extending the log")
            parent = node_hash(left, self._nodes[(level, i)])
            level, i = level + 1, i >> 1
            self._nodes[(level, i)] = parent

    @staticmethod
    def _retain(key: Tuple[int, int], boundary: int) -> bool:
        level, i = key
        if (i + 1) << level > boundary:
            return True
        # Fully pruned: keep left children whose parent still reaches live leaves.
        return i & 1 == 0 and (i + 2) << level > boundary

    def _frontier_doc(self) -> dict:
        return {
            "size": self._size,
            "min_available_index": self._min_available,
            "leaves_offset": self._leaves_offset,
            "frontier": [h.hex() for h in self.frontier()],
            "retained": self._retained_doc,
        }

    def _persist_frontier(self) -> None:
        if self._dir is None:
            return
        try:
            save_json(self._dir / FRONTIER_FILE, self._frontier_doc())
        except OSError as exc:
            raise StorageError(f"cannot persist frontier: {exc}") from exc

    def _rewrite_leaves(self, offset: int) -> None:
        assert self._dir is not None
        path = self._dir / LEAVES_FILE
        tmp = self._dir / (LEAVES_FILE + ".tmp")
        try:
            with tmp.open("wb") as f:
                for i in range(offset, self._size):
                    f.write(self._nodes[(0, i)])
            self._leaves_offset = offset
            self._retained_doc = [
                [level, i, h.hex()]
                for (level, i), h in sorted(self._nodes.items())
                if (i + 1) << level <= offset
            ]
            self._persist_frontier()
            tmp.replace(path)
        except OSError as exc:
            raise StorageError(f"cannot rewrite leaves after pruning: {exc}") from exc

    def _load(self) -> None:
        assert self._dir is not None
        doc = load_json(self._dir / FRONTIER_FILE)
        offset = int(doc.get("leaves_offset", 0))
        path = self._dir / LEAVES_FILE
        tmp = self._dir / (LEAVES_FILE + ".tmp")
        if tmp.exists():
            # Interrupted prune: the frontier document is authoritative.
            expected = (int(doc.get("size", 0)) - offset) * HASH_SIZE
            if offset > 0 and tmp.stat().st_size == expected:
                tmp.replace(path)
            else:
                tmp.unlink()

        raw = path.read_bytes() if path.exists() else b""
        if len(raw) % HASH_SIZE:
            logger.warning("Truncating torn leaf record in %s", path)
            raw = raw[: len(raw) - len(raw) % HASH_SIZE]
            path.write_bytes(raw)

        self._leaves_offset = offset
        self._min_available = int(doc.get("min_available_index", 0))
        self._retained_doc = [list(item) for item in doc.get("retained", [])]
        for level, i, h in self._retained_doc:
            self._nodes[(int(level), int(i))] = bytes.fromhex(h)
        count = len(raw) // HASH_SIZE
        for j in range(count):
            self._insert_leaf(offset + j, raw[j * HASH_SIZE:(j + 1) * HASH_SIZE])
        self._size = offset + count

        recorded = int(doc.get("size", 0))
        if self._size < recorded:
            raise StorageError(
                f"log corrupted: {recorded} leaves recorded, {self._size} on disk"
            )
        if recorded and [h.hex() for h in self.frontier(recorded)] != doc.get("frontier"):
            raise StorageError("log corrupted: frontier does not match stored leaves")
        if self._size > recorded:
            logger.warning(
                "Recovered %d leaf(s) appended after the last frontier write",
                self._size - recorded,
            )
            self._persist_frontier()
        if self._size:
            logger.info("Loaded log from %s: size %d", self._dir, self._size)
