"""Full replica of a CA's issuance log.

The replica pulls entries, recomputes the root locally and publishes a new
checkpoint only when it matches the one the CA advertises. Every read is
bounded by the published size, so readers never see leaves that are still
being appended.

Tiles use height 8: tile ``(L, N)`` holds the hashes of nodes
``256*N .. 256*N + 255`` at tree level ``L``.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Protocol, Sequence, Tuple

from ..ca.store import EntryStore
from ..codec.certificate import Cosignature
from ..cosigner.core import AcceptancePolicy, Cosigner, evaluate_policy
from ..errors import CosignRefused, LogRangeError, MTCError, ProofUnavailable
from ..logging.logger import get_logger
from ..merkle.hashing import EMPTY_ROOT, leaf_hash
from ..merkle.log import MerkleLog
from ..merkle.proofs import (
    Checkpoint,
    ConsistencyProof,
    InclusionProof,
    SubtreeRange,
    compact_root,
    decompose_range,
)
from ..utils.helpers import load_json, save_json

logger = get_logger()

TILE_HEIGHT = 8
TILE_WIDTH = 1 << TILE_HEIGHT
STATE_FILE = "state.json"


class LogSource(Protocol):
    def checkpoint(self) -> Tuple[Checkpoint, Tuple[Cosignature, ...]]: ...

    def fetch_entries(self, start: int, end: int) -> List[bytes]: ...


@dataclass(frozen=True)
class Tile:
    level: int
    index: int
    hashes: Tuple[bytes, ...]

    @property
    def is_full(self) -> bool:
        return len(self.hashes) == TILE_WIDTH

    def to_bytes(self) -> bytes:
        return b"".join(self.hashes)


@dataclass(frozen=True)
class SyncResult:
    synced_size: int
    fetched: int
    alarm: Optional[str] = None


class MirrorReplica:
    def __init__(
        self,
        data_dir: Optional[Path] = None,
        policy: Optional[AcceptancePolicy] = None,
        cosigner: Optional[Cosigner] = None,
    ) -> None:
        self._dir = Path(data_dir) if data_dir is not None else None
        self.policy = policy
        self.cosigner = cosigner
        self._sync_lock = threading.Lock()
        self._state_lock = threading.Lock()
        self.log = MerkleLog(self._dir / "log" if self._dir is not None else None)
        self.entries = EntryStore(self._dir)
        self._checkpoint = Checkpoint(EMPTY_ROOT, 0)
        self._cosignatures: Tuple[Cosignature, ...] = ()
        self._alarm: Optional[str] = None
        if self._dir is not None:
            self._load()

    # ------------------------------------------------------------------
    # Sync
    # ------------------------------------------------------------------

    @property
    def synced_size(self) -> int:
        with self._state_lock:
            return self._checkpoint.size

    @property
    def alarm(self) -> Optional[str]:
        return self._alarm

    @property
    def frozen(self) -> bool:
        return self._alarm is not None

    def sync(self, source: LogSource) -> SyncResult:
        """Pull entries up to the source's cosigned checkpoint and publish it once verified."""
        with self._sync_lock:
            if self._alarm:
                logger.error("Mirror frozen after %s; sync skipped", self._alarm)
                return SyncResult(self.synced_size, 0, self._alarm)
            target, cosigs = source.checkpoint()
            current = self.synced_size
            if self.policy is not None and target.size > 0 and not evaluate_policy(target, cosigs, self.policy):
                logger.warning("Source checkpoint %d fails the cosigner policy; not syncing", target.size)
                return SyncResult(current, 0, None)
            if target.size < current:
                logger.warning("Source checkpoint %d is behind synced size %d", target.size, current)
                return SyncResult(current, 0, None)
            if target.size == current:
                if target.root != self._checkpoint.root:
                    return self._freeze("root_mismatch", target)
                if not set(cosigs) <= set(self._cosignatures):
                    self._publish(target, cosigs)
                return SyncResult(current, 0, None)

            fetched = source.fetch_entries(current, target.size)[: target.size - current]
            if len(fetched) < target.size - current:
                logger.warning(
                    "Mirror fetched %d of %d entries (stopped at %d); will retry",
                    len(fetched), target.size - current, current + len(fetched),
                )
                return SyncResult(current, len(fetched), None)

            leaves = [leaf_hash(e) for e in fetched]
            ranges = decompose_range(SubtreeRange(0, current)) if current else []
            frontier = [(r.width, h) for r, h in zip(ranges, self.log.frontier(current))]
            if compact_root(frontier, leaves) != target.root:
                return self._freeze("root_mismatch", target)

            for entry_bytes, leaf in zip(fetched, leaves):
                self.entries.append(entry_bytes, b"")
                self.log.append(leaf)
            self._publish(target, cosigs)
            logger.info("Mirror synced %d -> %d", current, target.size)
            return SyncResult(target.size, len(fetched), None)

    def clear_alarm(self) -> None:
        """Operator acknowledgement of a root mismatch; resumes syncing."""
        with self._sync_lock:
            logger.warning("Mirror alarm %s cleared by operator", self._alarm)
            self._alarm = None
            self._persist()

    def _freeze(self, reason: str, target: Checkpoint) -> SyncResult:
        self._alarm = reason
        self._persist()
        logger.error(
            "Mirror %s: source checkpoint %d root %s does not match replayed entries; state frozen",
            reason, target.size, target.root.hex()[:16],
        )
        return SyncResult(self.synced_size, 0, reason)

    def _publish(self, checkpoint: Checkpoint, cosigs: Sequence[Cosignature]) -> None:
        cosigs = tuple(cosigs)
        with self._state_lock:
            self._checkpoint = checkpoint
            self._cosignatures = cosigs
        # entries up to the new size are readable now, which the mirror cosigner replays
        own = self._own_cosignature(checkpoint, cosigs)
        if own is not None:
            with self._state_lock:
                self._cosignatures = cosigs + (own,)
        self._persist()

    def _own_cosignature(self, checkpoint: Checkpoint, cosigs: Sequence[Cosignature]) -> Optional[Cosignature]:
        if self.cosigner is None:
            return None
        if any(c.cosigner_id == self.cosigner.cosigner_id for c in cosigs):
            return None
        try:
            return self.cosigner.mirror_cosign(checkpoint, self)
        except CosignRefused as exc:
            logger.info("Mirror did not add its own cosignature: %s", exc.reason)
            return None

    # ------------------------------------------------------------------
    # Read side
    # ------------------------------------------------------------------

    def get_checkpoint(self) -> Tuple[Checkpoint, Tuple[Cosignature, ...]]:
        with self._state_lock:
            return self._checkpoint, self._cosignatures

    def fetch_entries(self, start: int, end: int) -> List[bytes]:
        return self.entries.entries(start, min(end, self.synced_size))

    def get_entry(self, index: int) -> bytes:
        size = self._readable_size()
        if index >= size:
            raise LogRangeError(f"entry {index} beyond synced size {size}")
        return self.entries.get(index)[0]

    def get_tile(self, level: int, index: int) -> Tile:
        size = self._readable_size()
        count = size >> level if level < 64 else 0
        first = index * TILE_WIDTH
        if first >= count:
            raise LogRangeError(f"tile {level}/{index} beyond synced frontier")
        hashes = tuple(
            self.log.subtree_root(SubtreeRange(i << level, (i + 1) << level))
            for i in range(first, min(first + TILE_WIDTH, count))
        )
        return Tile(level, index, hashes)

    def get_inclusion_proof(self, index: int, rng: SubtreeRange) -> InclusionProof:
        self._check_frontier(rng.end)
        return self.log.inclusion_proof(index, rng)

    def get_consistency_proof(self, old_size: int, new_size: int) -> ConsistencyProof:
        self._check_frontier(new_size)
        return self.log.consistency_proof(old_size, new_size)

    def get_subtree_proof(self, rng: SubtreeRange, size: int) -> Tuple[bytes, ConsistencyProof]:
        """Subtree root and its containment proof in the tree of *size* leaves."""
        self._check_frontier(size)
        return self.log.subtree_root(rng), self.log.containment_proof(rng, size)

    def _readable_size(self) -> int:
        if self._alarm:
            raise ProofUnavailable(f"mirror frozen after {self._alarm}")
        return self.synced_size

    def _check_frontier(self, size: int) -> None:
        synced = self._readable_size()
        if size > synced:
            raise ProofUnavailable(f"size {size} beyond synced frontier {synced}")

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def _persist(self) -> None:
        if self._dir is None:
            return
        with self._state_lock:
            doc = {
                "checkpoint": self._checkpoint.to_dict(),
                "cosignatures": [c.to_dict() for c in self._cosignatures],
                "alarm": self._alarm,
            }
        save_json(self._dir / STATE_FILE, doc)

    def _load(self) -> None:
        assert self._dir is not None
        if len(self.entries) > self.log.size:
            self.entries.truncate(self.log.size)
        state = load_json(self._dir / STATE_FILE)
        if state:
            try:
                self._checkpoint = Checkpoint.from_dict(state["checkpoint"])
                self._cosignatures = tuple(Cosignature.from_dict(c) for c in state.get("cosignatures", []))
            except (KeyError, ValueError, MTCError):
                logger.exception("Mirror state unreadable; rebuilding checkpoint from the log")
            self._alarm = state.get("alarm")
        if self.log.size != self._checkpoint.size:
            # leaves were appended after verification but the state write was lost
            logger.warning(
                "Mirror log size %d differs from published size %d; republishing without cosignatures",
                self.log.size, self._checkpoint.size,
            )
            self._checkpoint = self.log.checkpoint()
            self._cosignatures = ()
            self._persist()
        logger.info("Mirror replica loaded at size %d", self._checkpoint.size)
