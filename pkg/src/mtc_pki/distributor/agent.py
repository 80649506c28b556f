"""Node-local landmark distributor.

Reads the CA's landmark sequence, checks every new landmark subtree against
a checkpoint that satisfies the cosigner policy (via the mirror), and
publishes the verified hashes plus revoked ranges to ``landmarks.json``.
Nothing reaches that file without having passed verification.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Protocol, Tuple

from ..codec.certificate import Cosignature
from ..codec.taid import TrustAnchorID, parse_taid
from ..cosigner.core import AcceptancePolicy, evaluate_policy
from ..errors import CodecError, MTCError, SequenceFormatError, TransportError
from ..logging.logger import get_logger
from ..merkle.proofs import Checkpoint, ConsistencyProof, SubtreeRange, decompose_range, verify_containment
from ..relying.revocation import RevokedRanges
from ..utils.helpers import load_json, save_json

logger = get_logger()

DEFAULT_MAX_LANDMARKS = 145
MAX_BACKOFF_SECONDS = 300.0


@dataclass(frozen=True)
class LandmarkSequence:
    last: int
    sizes: Tuple[int, ...]
    revoked: RevokedRanges = field(default_factory=RevokedRanges)

    def size_of(self, number: int) -> Optional[int]:
        """Tree size of landmark *number*, if it is in the active window."""
        offset = self.last - number
        if 0 <= offset < len(self.sizes):
            return self.sizes[offset]
        return None

    @property
    def numbers(self) -> List[int]:
        """Active landmark numbers, oldest first."""
        return list(range(self.last - len(self.sizes) + 1, self.last + 1))


def parse_sequence(text: str) -> LandmarkSequence:
    lines = [line.strip() for line in text.strip().splitlines() if line.strip()]
    if not lines:
        raise SequenceFormatError("empty landmark sequence")
    header = lines[0].split()
    try:
        last, count = int(header[0]), int(header[1])
        if len(header) != 2 or last < 0 or count < 0:
            raise ValueError
    except (ValueError, IndexError):
        raise SequenceFormatError(f"malformed header {lines[0]!r}") from None
    if count > last:
        raise SequenceFormatError(f"{count} active landmarks but the last is number {last}")

    body = lines[1:]
    try:
        split = body.index("revoked:")
    except ValueError:
        split = len(body)
    size_lines, revoked_lines = body[:split], body[split + 1:]
    if len(size_lines) != count:
        raise SequenceFormatError(f"header announces {count} sizes, found {len(size_lines)}")

    try:
        sizes = tuple(int(s) for s in size_lines)
        pairs = [tuple(int(v) for v in line.split()) for line in revoked_lines]
    except ValueError as exc:
        raise SequenceFormatError(f"non-numeric line: {exc}") from None
    if any(b > a for a, b in zip(sizes, sizes[1:])):
        raise SequenceFormatError("tree sizes must be listed newest (largest) first")
    revoked = RevokedRanges()
    for pair in pairs:
        if len(pair) != 2 or not 0 <= pair[0] < pair[1]:
            raise SequenceFormatError(f"malformed revoked range {pair!r}")
        revoked.add(*pair)
    return LandmarkSequence(last, sizes, revoked)


@dataclass(frozen=True)
class StoredLandmark:
    number: int
    range: SubtreeRange
    hash: bytes

    def to_dict(self) -> dict:
        return {"number": self.number, "start": self.range.start, "end": self.range.end, "hash": self.hash.hex()}

    @classmethod
    def from_dict(cls, data: dict) -> "StoredLandmark":
        return cls(int(data["number"]), SubtreeRange(int(data["start"]), int(data["end"])), bytes.fromhex(data["hash"]))


class LandmarkStore:
    """Verified landmark subtree hashes for one log."""

    def __init__(self, log_id: TrustAnchorID, max_landmarks: int = DEFAULT_MAX_LANDMARKS) -> None:
        self.log_id = log_id
        self.max_landmarks = max_landmarks
        self.landmarks: List[StoredLandmark] = []
        self.revoked = RevokedRanges()
        self.reference_checkpoint: Optional[Checkpoint] = None
        self.reference_cosignatures: Tuple[Cosignature, ...] = ()
        self.updated_at = 0

    @property
    def numbers(self) -> List[int]:
        return sorted({lm.number for lm in self.landmarks})

    def has(self, number: int) -> bool:
        return any(lm.number == number for lm in self.landmarks)

    def tree_size(self, number: int) -> Optional[int]:
        ends = [lm.range.end for lm in self.landmarks if lm.number == number]
        return max(ends) if ends else None

    def lookup(self, rng: SubtreeRange) -> Optional[StoredLandmark]:
        for lm in self.landmarks:
            if lm.range == rng:
                return lm
        return None

    def install(self, number: int, subtrees: List[Tuple[SubtreeRange, bytes]]) -> None:
        self.landmarks.extend(StoredLandmark(number, rng, h) for rng, h in subtrees)
        self.landmarks.sort(key=lambda lm: (lm.number, lm.range.start))

    def evict(self, keep_from: int = 0) -> List[int]:
        """Drop landmarks below *keep_from*, then the oldest beyond ``max_landmarks``."""
        numbers = [n for n in self.numbers if n >= keep_from]
        numbers = numbers[-self.max_landmarks:] if self.max_landmarks > 0 else numbers
        keep = set(numbers)
        evicted = sorted({lm.number for lm in self.landmarks} - keep)
        self.landmarks = [lm for lm in self.landmarks if lm.number in keep]
        return evicted

    def to_dict(self) -> dict:
        ref = None
        if self.reference_checkpoint is not None:
            ref = dict(self.reference_checkpoint.to_dict())
            ref["cosignatures"] = [c.to_dict() for c in self.reference_cosignatures]
        return {
            "log_id": str(self.log_id),
            "reference_checkpoint": ref,
            "landmarks": [lm.to_dict() for lm in self.landmarks],
            "revoked": self.revoked.to_list(),
            "updated_at": self.updated_at,
        }

    @classmethod
    def from_dict(cls, data: dict, max_landmarks: int = DEFAULT_MAX_LANDMARKS) -> "LandmarkStore":
        try:
            store = cls(parse_taid(data["log_id"]), max_landmarks)
            store.landmarks = [StoredLandmark.from_dict(d) for d in data.get("landmarks", [])]
            store.revoked = RevokedRanges.from_list(data.get("revoked", []))
            ref = data.get("reference_checkpoint")
            if ref:
                store.reference_checkpoint = Checkpoint.from_dict(ref)
                store.reference_cosignatures = tuple(Cosignature.from_dict(c) for c in ref.get("cosignatures", []))
            store.updated_at = int(data.get("updated_at", 0))
        except (KeyError, TypeError, ValueError, CodecError) as exc:
            raise SequenceFormatError(f"malformed landmark store: {exc}") from None
        return store


def load_store(path: Path, log_id: TrustAnchorID, max_landmarks: int = DEFAULT_MAX_LANDMARKS) -> LandmarkStore:
    data = load_json(Path(path))
    if not data:
        return LandmarkStore(log_id, max_landmarks)
    return LandmarkStore.from_dict(data, max_landmarks)


def publish(store: LandmarkStore, path: Path) -> None:
    """Atomically replace *path* with the store's JSON document."""
    save_json(Path(path), store.to_dict())
    logger.info("Published %d landmark(s) to %s", len(store.numbers), path)


class MirrorView(Protocol):
    def checkpoint(self) -> Tuple[Checkpoint, Tuple[Cosignature, ...]]: ...

    def subtree_proof(self, rng: SubtreeRange, size: int) -> Tuple[bytes, ConsistencyProof]: ...


@dataclass
class RefreshDelta:
    installed: List[int] = field(default_factory=list)
    evicted: List[int] = field(default_factory=list)
    skipped: Dict[int, str] = field(default_factory=dict)
    alarm: Optional[str] = None
    revoked_changed: bool = False

    @property
    def changed(self) -> bool:
        return bool(self.installed or self.evicted or self.revoked_changed)


def refresh(
    sequence_doc: str,
    mirror: MirrorView,
    policy: AcceptancePolicy,
    store: LandmarkStore,
    now: Optional[float] = None,
) -> RefreshDelta:
    """Install every verifiable landmark from *sequence_doc* into *store*."""
    sequence = parse_sequence(sequence_doc)
    delta = RefreshDelta()

    pending = [n for n in sequence.numbers if not store.has(n)]
    if pending:
        reference, cosigs = mirror.checkpoint()
        if not evaluate_policy(reference, cosigs, policy):
            delta.alarm = "policy_unsatisfied"
            logger.warning(
                "Mirror checkpoint %d does not satisfy the cosigner policy; nothing installed",
                reference.size,
            )
            return delta
        for number in pending:
            reason = _install(number, sequence, mirror, store, reference)
            if reason is None:
                delta.installed.append(number)
            else:
                delta.skipped[number] = reason
        if delta.installed:
            store.reference_checkpoint = reference
            store.reference_cosignatures = tuple(cosigs)

    oldest_active = sequence.numbers[0] if sequence.numbers else 0
    delta.evicted = store.evict(keep_from=oldest_active)

    merged = store.revoked.merged(sequence.revoked)
    if merged != store.revoked:
        store.revoked = merged
        delta.revoked_changed = True
    if delta.changed:
        store.updated_at = int(now if now is not None else time.time())
    logger.info(
        "Landmark refresh: installed %s, evicted %s, skipped %s",
        delta.installed, delta.evicted, sorted(delta.skipped),
    )
    return delta


def _install(
    number: int,
    sequence: LandmarkSequence,
    mirror: MirrorView,
    store: LandmarkStore,
    reference: Checkpoint,
) -> Optional[str]:
    """Verify and install one landmark; returns a skip reason on failure."""
    size = sequence.size_of(number)
    if number == 1:
        prev = 0
    else:
        prev = sequence.size_of(number - 1)
        if prev is None:
            prev = store.tree_size(number - 1)
    if prev is None and size is not None and sequence.numbers and number == sequence.numbers[0]:
        # predecessor retired everywhere: start at the nearest boundary still known
        known = [store.tree_size(n) for n in store.numbers if n < number]
        prev = max((s for s in known if s is not None and s <= size), default=0)
        logger.info("Landmark %d: predecessor retired, covering [%d, %d)", number, prev, size)
    if size is None or prev is None:
        logger.info("Landmark %d: previous tree size unknown, skipped", number)
        return "unknown_start"
    if size > reference.size:
        logger.info("Landmark %d (size %d) is ahead of the mirror checkpoint %d", number, size, reference.size)
        return "mirror_behind"
    if size <= prev:
        return "empty"

    verified: List[Tuple[SubtreeRange, bytes]] = []
    for rng in decompose_range(SubtreeRange(prev, size)):
        try:
            root, proof = mirror.subtree_proof(rng, reference.size)
        except TransportError:
            raise
        except MTCError as exc:
            logger.warning("Landmark %d: mirror has no proof for %s: %s", number, rng, exc)
            return "proof_unavailable"
        if not verify_containment(rng, root, proof, reference):
            logger.error(
                "Landmark %d: containment proof for %s does not verify against checkpoint %d",
                number, rng, reference.size,
            )
            return "containment_invalid"
        verified.append((rng, root))
    store.install(number, verified)
    logger.info("Installed landmark %d (%d subtree(s))", number, len(verified))
    return None


class SequenceSource(Protocol):
    def landmark_sequence(self) -> str: ...


class LandmarkDistributor:
    """Polling loop: fetch sequence, refresh, publish on change."""

    def __init__(
        self,
        ca: SequenceSource,
        mirror: MirrorView,
        policy: AcceptancePolicy,
        log_id: TrustAnchorID,
        out_path: Path,
        max_landmarks: int = DEFAULT_MAX_LANDMARKS,
    ) -> None:
        self.ca = ca
        self.mirror = mirror
        self.policy = policy
        self.out_path = Path(out_path)
        self.store = load_store(self.out_path, log_id, max_landmarks)
        self.failures = 0
        self._retry_at = 0.0
        self.last_delta: Optional[RefreshDelta] = None
        if not self.out_path.exists():
            publish(self.store, self.out_path)

    def run_once(self, now: Optional[float] = None) -> Optional[RefreshDelta]:
        now = now if now is not None else time.time()
        if now < self._retry_at:
            return None
        try:
            delta = refresh(self.ca.landmark_sequence(), self.mirror, self.policy, self.store, now)
        except TransportError as exc:
            self.failures += 1
            backoff = min(MAX_BACKOFF_SECONDS, 2.0 ** self.failures)
            self._retry_at = now + backoff
            logger.warning("Distributor cannot reach CA or mirror (%s); retrying in %.0fs", exc, backoff)
            return None
        except SequenceFormatError as exc:
            logger.error("Landmark sequence rejected: %s", exc)
            return None
        self.failures = 0
        self._retry_at = 0.0
        self.last_delta = delta
        if delta.changed:
            publish(self.store, self.out_path)
        return delta
