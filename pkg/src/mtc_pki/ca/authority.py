"""The MTC certificate authority.

Owns the issuance log, the entry store, the landmark schedule and the
revoked index ranges. Issuance is serialized; readers (HTTP handlers,
mirrors fetching entries, the landmark scheduler) work against the log's
own lock and see consistent snapshots.

Data directory layout::

    log/            Merkle log (leaves.bin, frontier.json)
    entries.bin     issued entries and entity keys
    state.json      cosigned checkpoint, landmarks, revoked ranges
    pending.json    present only while a checkpoint is collecting cosignatures

Standalone issuance is group-committed: entries appended while a checkpoint
round waits out ``checkpoint_interval`` share that round's cosigned checkpoint.
"""
from __future__ import annotations

import hmac
import math
import threading
import time
from concurrent.futures import Future, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

from ..codec.certificate import Cosignature, MTCCertificate, MTCProof
from ..codec.entries import TBSCertEntry, decode_entry, entry_hash
from ..codec.schemes import SignatureSchemeId
from ..codec.taid import TrustAnchorID, parse_taid
from ..cosigner.core import AcceptancePolicy, CosignerInfo, evaluate_policy
from ..errors import (
    AuthorizationError,
    CodecError,
    CosignRefused,
    IndexRevoked,
    InvalidRequest,
    LogRangeError,
    MTCError,
    NotReady,
    ProofUnavailable,
    QuorumUnavailable,
    StorageError,
)
from ..logging.logger import get_logger
from ..merkle.hashing import EMPTY_ROOT
from ..merkle.log import MerkleLog
from ..merkle.proofs import Checkpoint, ConsistencyProof, SubtreeRange, decompose_range
from ..relying.revocation import RevokedRanges
from ..utils.helpers import load_json, save_json
from ..utils.worker import PeriodicWorker
from .store import EntryStore

logger = get_logger()

STATE_FILE = "state.json"
PENDING_FILE = "pending.json"


def derive_max_landmarks(cert_lifetime: int, landmark_interval: int) -> int:
    """Landmarks needed so every unexpired certificate is covered: ceil(lifetime / interval) + 1."""
    return math.ceil(cert_lifetime / landmark_interval) + 1


@dataclass(frozen=True)
class IssuancePolicy:
    checkpoint_interval: float = 2.0
    landmark_interval: int = 600
    max_landmarks: int = 0
    cert_lifetime: int = 86400
    admission_token: str = field(default="", repr=False)
    cosign_timeout: float = 2.0

    def __post_init__(self) -> None:
        if self.landmark_interval <= 0 or self.cert_lifetime <= 0:
            raise InvalidRequest("landmark interval and certificate lifetime must be positive")
        if self.checkpoint_interval < 0:
            raise InvalidRequest("checkpoint interval must not be negative")
        if self.max_landmarks <= 0:
            object.__setattr__(
                self, "max_landmarks",
                derive_max_landmarks(self.cert_lifetime, self.landmark_interval),
            )


@dataclass(frozen=True)
class LandmarkRecord:
    number: int
    tree_size: int
    subtrees: Tuple[Tuple[SubtreeRange, bytes], ...]
    allocated_at: int

    def covering(self, index: int) -> Optional[Tuple[SubtreeRange, bytes]]:
        for rng, root in self.subtrees:
            if rng.contains(index):
                return rng, root
        return None

    def to_dict(self) -> dict:
        return {
            "number": self.number,
            "tree_size": self.tree_size,
            "allocated_at": self.allocated_at,
            "subtrees": [
                {"start": r.start, "end": r.end, "hash": h.hex()} for r, h in self.subtrees
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LandmarkRecord":
        return cls(
            int(data["number"]),
            int(data["tree_size"]),
            tuple(
                (SubtreeRange(int(s["start"]), int(s["end"])), bytes.fromhex(s["hash"]))
                for s in data["subtrees"]
            ),
            int(data["allocated_at"]),
        )


@dataclass(frozen=True)
class TrustConfig:
    log_id: TrustAnchorID
    policy: AcceptancePolicy
    landmark_base: TrustAnchorID
    landmark_url: str = ""
    first_available_index: int = 0

    def __post_init__(self) -> None:
        if self.landmark_base.components[:-1] != self.log_id.components:
            raise InvalidRequest(
                f"landmark base {self.landmark_base} must extend log ID {self.log_id} by one component"
            )

    @property
    def cosigners(self) -> Tuple[CosignerInfo, ...]:
        return self.policy.trusted_cosigners

    def to_dict(self) -> dict:
        return {
            "log_id": str(self.log_id),
            "landmark_base": str(self.landmark_base),
            "landmark_url": self.landmark_url,
            "first_available_index": self.first_available_index,
            "cosigners": [c.to_dict() for c in self.cosigners],
            "policy": {
                "required_k": self.policy.required_k,
                "require_mirror": self.policy.require_mirror,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrustConfig":
        try:
            policy = AcceptancePolicy(
                int(data["policy"]["required_k"]),
                tuple(CosignerInfo.from_dict(c) for c in data["cosigners"]),
                bool(data["policy"].get("require_mirror", False)),
            )
            return cls(
                parse_taid(data["log_id"]),
                policy,
                parse_taid(data["landmark_base"]),
                data.get("landmark_url", ""),
                int(data.get("first_available_index", 0)),
            )
        except (KeyError, TypeError, ValueError, CodecError) as exc:
            raise InvalidRequest(f"malformed trust config: {exc}") from None


@dataclass(frozen=True)
class IssueRequest:
    subject: str
    dns_names: Tuple[str, ...]
    scheme: SignatureSchemeId
    entity_public_key: bytes = field(repr=False)
    admission_token: str = field(default="", repr=False)
    not_before: Optional[int] = None
    lifetime: Optional[int] = None


class CosignerPeer(Protocol):
    @property
    def info(self) -> CosignerInfo: ...

    def cosign(self, new: Checkpoint, proof: ConsistencyProof) -> Cosignature: ...


class CertificateAuthority:
    """Issues standalone and landmark certificates over one issuance log."""

    def __init__(
        self,
        log_id: TrustAnchorID,
        peers: Sequence[CosignerPeer],
        policy: IssuancePolicy,
        required_k: int,
        require_mirror: bool = False,
        data_dir: Optional[Path] = None,
        public_url: str = "",
    ) -> None:
        self.log_id = log_id
        self.landmark_base = log_id.child(1)
        self.policy = policy
        self.public_url = public_url.rstrip("/")
        self._peers = list(peers)
        self._acceptance = AcceptancePolicy(
            required_k, tuple(p.info for p in self._peers), require_mirror
        )
        self._dir = Path(data_dir) if data_dir is not None else None
        self._issue_lock = threading.RLock()
        self._state_lock = threading.RLock()
        self._pool = ThreadPoolExecutor(
            max_workers=max(1, 2 * len(self._peers)), thread_name_prefix="cosign"
        )
        self.log = MerkleLog(self._dir / "log" if self._dir is not None else None)
        self.entries = EntryStore(self._dir)

        self._checkpoint = Checkpoint(EMPTY_ROOT, 0)
        self._cosignatures: Tuple[Cosignature, ...] = ()
        self._landmarks: List[LandmarkRecord] = []
        self._revoked = RevokedRanges()
        self._cosigner_sizes: Dict[str, int] = {}
        self._sizes_lock = threading.Lock()
        self._withheld: set = set()

        self._commit = threading.Condition()
        self._committing = False
        self._last_commit = float("-inf")
        self._failed = RevokedRanges()

        if self._dir is not None:
            self._dir.mkdir(parents=True, exist_ok=True)
            self._load_state()

    # ------------------------------------------------------------------
    # Issuance
    # ------------------------------------------------------------------

    def issue_standalone(self, request: IssueRequest, now: Optional[float] = None) -> MTCCertificate:
        """Append the entry, collect a cosigner quorum and return a standalone certificate."""
        self.check_token(request.admission_token)
        entry = self._build_entry(request, int(now if now is not None else time.time()))

        with self._issue_lock:
            self.entries.append(entry.encoded, request.entity_public_key)
            index = self.log.append(entry_hash(entry))

        checkpoint, cosigs = self._await_checkpoint(index)
        rng = SubtreeRange(0, checkpoint.size)
        proof = MTCProof(rng, self.log.inclusion_proof(index, rng), cosigs)
        cert = MTCCertificate(self.log_id, index, entry, request.entity_public_key, proof)
        logger.info(
            "Issued standalone certificate #%d for %s (checkpoint size %d, %d cosignature(s))",
            index, entry.subject, checkpoint.size, len(cosigs),
        )
        return cert

    def _settled(self, index: int) -> Optional[Tuple[Checkpoint, Tuple[Cosignature, ...]]]:
        if self._failed.contains(index):
            raise QuorumUnavailable(f"the checkpoint covering index {index} did not reach quorum")
        checkpoint, cosigs = self.checkpoint()
        return (checkpoint, cosigs) if checkpoint.size > index else None

    def _await_checkpoint(self, index: int) -> Tuple[Checkpoint, Tuple[Cosignature, ...]]:
        """Block until a cosigned checkpoint covers *index*, leading a round when none is running."""
        while True:
            with self._commit:
                while self._committing and self._settled(index) is None:
                    self._commit.wait()
                settled = self._settled(index)
                if settled is not None:
                    return settled
                self._committing = True
            try:
                self._commit_round()
            finally:
                with self._commit:
                    self._committing = False
                    self._commit.notify_all()

    def _commit_round(self) -> None:
        """Cosign everything appended so far, no sooner than ``checkpoint_interval`` after the last round."""
        delay = self._last_commit + self.policy.checkpoint_interval - time.monotonic()
        if delay > 0:
            time.sleep(delay)
        with self._issue_lock:
            new = self.log.checkpoint()
            old_size = self.checkpoint()[0].size
            if new.size <= old_size:
                return
            self._write_pending(new.size)
            try:
                cosigs = self._collect_cosignatures(new)
            except QuorumUnavailable as exc:
                logger.error("Checkpoint size %d failed: %s", new.size, exc)
                self._failed.add(old_size, new.size)
                self._void(old_size, new.size)
                return
            finally:
                self._last_commit = time.monotonic()
            with self._state_lock:
                self._checkpoint = new
                self._cosignatures = cosigs
                self._persist_state()
            self._clear_pending()
        logger.debug("Checkpoint size %d covers %d new entry(ies)", new.size, new.size - old_size)

    def issue_landmark(self, index: int, landmark_number: Optional[int] = None) -> MTCCertificate:
        """Landmark certificate for *index*: inclusion proof to its subtree, no signatures.

        Without *landmark_number* the newest landmark covering the index is used.
        """
        with self._state_lock:
            if index >= self.log.size:
                raise LogRangeError(f"index {index} was never issued")
            if self._revoked.contains(index):
                raise IndexRevoked(f"index {index} is revoked")
            if not self._landmarks:
                raise NotReady("no landmark has been allocated yet")
            candidates = [
                lm for lm in self._landmarks
                if landmark_number is None or lm.number == landmark_number
            ]
            if landmark_number is not None and not candidates:
                raise NotReady(f"landmark {landmark_number} is not active")
            for record in reversed(candidates):
                hit = record.covering(index)
                if hit is not None:
                    break
            else:
                raise NotReady(f"no active landmark covers index {index} yet")
            rng, _ = hit

        entry_bytes, public_key = self.entries.get(index)
        entry = decode_entry(entry_bytes)
        if entry is None:
            raise ProofUnavailable(f"index {index} holds a null entry")
        proof = MTCProof(rng, self.log.inclusion_proof(index, rng), ())
        return MTCCertificate(self.log_id, index, entry, public_key, proof)

    def landmark_number_for(self, index: int) -> Optional[int]:
        with self._state_lock:
            for record in reversed(self._landmarks):
                if record.covering(index) is not None:
                    return record.number
        return None

    def check_token(self, token: str) -> None:
        expected = self.policy.admission_token
        if not expected or not hmac.compare_digest(token.encode(), expected.encode()):
            logger.warning("Issuance request with invalid admission token rejected")
            raise AuthorizationError("invalid admission token")

    def _build_entry(self, request: IssueRequest, now: int) -> TBSCertEntry:
        scheme = request.scheme
        if len(request.entity_public_key) != scheme.public_key_len:
            raise InvalidRequest(
                f"{scheme.label} public key must be {scheme.public_key_len} bytes"
            )
        lifetime = request.lifetime or self.policy.cert_lifetime
        if lifetime > self.policy.cert_lifetime:
            raise InvalidRequest(
                f"requested lifetime {lifetime}s exceeds {self.policy.cert_lifetime}s"
            )
        not_before = request.not_before if request.not_before is not None else now
        try:
            return TBSCertEntry.for_key(
                request.subject, request.dns_names, not_before, not_before + lifetime,
                scheme, request.entity_public_key,
            )
        except CodecError as exc:
            raise InvalidRequest(str(exc)) from None

    def _collect_cosignatures(self, new: Checkpoint) -> Tuple[Cosignature, ...]:
        futures = {}
        for peer in self._peers:
            info = peer.info
            with self._sizes_lock:
                last = min(self._cosigner_sizes.get(str(info.cosigner_id), 0), new.size)
            try:
                proof = self.log.consistency_proof(last, new.size)
            except ProofUnavailable:
                logger.warning(
                    "Cosigner %s last signed size %d, which is now pruned", info.cosigner_id, last
                )
                continue
            fut = self._pool.submit(peer.cosign, new, proof)
            # late answers still move the peer forward
            fut.add_done_callback(lambda f, key=str(info.cosigner_id): self._record_size(key, new.size, f))
            futures[fut] = info
        done, pending = wait(futures, timeout=self.policy.cosign_timeout)

        cosigs: List[Cosignature] = []
        for fut in done:
            info = futures[fut]
            try:
                cosig = fut.result()
            except CosignRefused as exc:
                logger.warning(
                    "Cosigner %s refused checkpoint %d: %s", info.cosigner_id, new.size, exc.reason
                )
                continue
            except MTCError as exc:
                logger.warning("Cosigner %s unavailable: %s", info.cosigner_id, exc)
                continue
            except Exception:
                logger.exception("Cosigner %s failed", info.cosigner_id)
                continue
            self._record_size(str(info.cosigner_id), new.size, fut)
            cosigs.append(cosig)
        for fut in pending:
            logger.warning("Cosigner %s missed the %.1fs deadline", futures[fut].cosigner_id,
                           self.policy.cosign_timeout)

        # stable order: as configured
        order = {str(p.info.cosigner_id): i for i, p in enumerate(self._peers)}
        cosigs.sort(key=lambda c: order.get(str(c.cosigner_id), len(order)))
        if not evaluate_policy(new, cosigs, self._acceptance):
            raise QuorumUnavailable(
                f"{len(cosigs)} cosignature(s) collected for size {new.size}, "
                f"policy needs {self._acceptance.required_k}"
            )
        return tuple(cosigs)

    def _record_size(self, key: str, size: int, fut: Future) -> None:
        if fut.cancelled() or fut.exception() is not None:
            return
        with self._sizes_lock:
            if size > self._cosigner_sizes.get(key, 0):
                self._cosigner_sizes[key] = size

    def _signed_sizes(self) -> Dict[str, int]:
        with self._sizes_lock:
            return dict(self._cosigner_sizes)

    # ------------------------------------------------------------------
    # Landmarks
    # ------------------------------------------------------------------

    def allocate_landmark(self, now: Optional[float] = None) -> Optional[LandmarkRecord]:
        """Designate the current cosigned checkpoint as the next landmark.

        Returns ``None`` when the tree has not grown since the last landmark.
        """
        with self._issue_lock, self._state_lock:
            size = self._checkpoint.size
            prev = self._landmarks[-1] if self._landmarks else None
            prev_size = prev.tree_size if prev else 0
            if size <= prev_size:
                logger.debug("Landmark allocation skipped: tree size unchanged at %d", size)
                return None
            if prev_size < self.log.min_available_index:
                raise InvalidRequest(
                    f"landmark range [{prev_size}, {size}) starts inside the pruned prefix "
                    f"below {self.log.min_available_index}"
                )
            subtrees = tuple(
                (rng, self.log.subtree_root(rng))
                for rng in decompose_range(SubtreeRange(prev_size, size))
            )
            record = LandmarkRecord(
                (prev.number if prev else 0) + 1,
                size,
                subtrees,
                int(now if now is not None else time.time()),
            )
            self._landmarks.append(record)
            while len(self._landmarks) > self.policy.max_landmarks:
                retired = self._landmarks.pop(0)
                logger.info("Retired landmark %d", retired.number)
            self._persist_state()
        logger.info(
            "Allocated landmark %d at tree size %d (%d subtree(s))",
            record.number, size, len(subtrees),
        )
        return record

    @property
    def landmarks(self) -> Tuple[LandmarkRecord, ...]:
        with self._state_lock:
            return tuple(self._landmarks)

    def serve_landmark_sequence(self) -> str:
        """``<last> <count>`` then tree sizes newest first, then ``revoked:`` lines."""
        with self._state_lock:
            landmarks = list(self._landmarks)
            revoked = self._revoked.ranges
        last = landmarks[-1].number if landmarks else 0
        lines = [f"{last} {len(landmarks)}"]
        lines.extend(str(lm.tree_size) for lm in reversed(landmarks))
        if revoked:
            lines.append("revoked:")
            lines.extend(f"{lo} {hi}" for lo, hi in revoked)
        return "\n".join(lines) + "\n"

    # ------------------------------------------------------------------
    # Revocation and pruning
    # ------------------------------------------------------------------

    def revoke(self, lo: int, hi: int) -> RevokedRanges:
        with self._issue_lock, self._state_lock:
            if not 0 <= lo < hi <= self.log.size:
                raise InvalidRequest(f"revocation range [{lo}, {hi}) outside log of size {self.log.size}")
            self._revoked.add(lo, hi)
            self._persist_state()
            logger.info("Revoked indices [%d, %d)", lo, hi)
            return self._revoked.copy()

    @property
    def revoked(self) -> RevokedRanges:
        with self._state_lock:
            return self._revoked.copy()

    def prune_expired(self, now: Optional[float] = None) -> int:
        """Prune the longest prefix of expired entries; returns the new first available index."""
        now = int(now if now is not None else time.time())
        with self._issue_lock, self._state_lock:
            boundary = self.log.min_available_index
            limit = self._checkpoint.size
            while boundary < limit:
                entry = decode_entry(self.entries.get(boundary)[0])
                if entry is not None and entry.not_after > now:
                    break
                boundary += 1
            if boundary == self.log.min_available_index:
                return boundary
            self.log.prune_before(boundary)
            self._revoked.add(0, boundary)
            self._persist_state()
        logger.info("Pruned expired entries; first available index is now %d", boundary)
        return boundary

    @property
    def first_available_index(self) -> int:
        return self.log.min_available_index

    # ------------------------------------------------------------------
    # Read side
    # ------------------------------------------------------------------

    def trust_config(self) -> TrustConfig:
        return TrustConfig(
            self.log_id,
            self._acceptance,
            self.landmark_base,
            f"{self.public_url}/landmark-sequence" if self.public_url else "/landmark-sequence",
            self.first_available_index,
        )

    def serve_trust_config(self) -> dict:
        return self.trust_config().to_dict()

    def checkpoint(self) -> Tuple[Checkpoint, Tuple[Cosignature, ...]]:
        with self._state_lock:
            return self._checkpoint, self._cosignatures

    def fetch_entries(self, start: int, end: int) -> List[bytes]:
        """Encoded entries ``[start, end)``; stops early at a withheld or pruned index."""
        end = min(end, len(self.entries))
        if start < self.log.min_available_index:
            raise ProofUnavailable(f"entries below {self.log.min_available_index} were pruned")
        out = []
        for i in range(start, end):
            if i in self._withheld:
                logger.warning("Withholding entry %d", i)
                break
            out.append(self.entries.get(i)[0])
        return out

    def withhold(self, index: int) -> None:
        """Fault injection: refuse to serve entry *index* to mirrors."""
        self._withheld.add(index)

    def release(self, index: int) -> None:
        self._withheld.discard(index)

    def tick(self, now: Optional[float] = None) -> Optional[LandmarkRecord]:
        """One scheduler step: allocate the next landmark, then prune expired entries."""
        record = self.allocate_landmark(now)
        self.prune_expired(now)
        return record

    def scheduler(self) -> PeriodicWorker:
        return PeriodicWorker("landmark-scheduler", self.policy.landmark_interval, self.tick)

    def close(self) -> None:
        self._pool.shutdown(wait=False)

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def _void(self, lo: int, hi: int) -> None:
        with self._state_lock:
            self._revoked.add(lo, hi)
            self._persist_state()
        self._clear_pending()
        logger.error("Issuance of indices [%d, %d) failed closed; indices voided", lo, hi)

    def _write_pending(self, index: int) -> None:
        if self._dir is not None:
            save_json(self._dir / PENDING_FILE, {"index": index})

    def _clear_pending(self) -> None:
        if self._dir is not None:
            (self._dir / PENDING_FILE).unlink(missing_ok=True)

    def _persist_state(self) -> None:
        if self._dir is None:
            return
        save_json(self._dir / STATE_FILE, {
            "checkpoint": self._checkpoint.to_dict(),
            "cosignatures": [c.to_dict() for c in self._cosignatures],
            "landmarks": [lm.to_dict() for lm in self._landmarks],
            "revoked": self._revoked.to_list(),
            "cosigner_sizes": self._signed_sizes(),
        })

    def _load_state(self) -> None:
        assert self._dir is not None
        if len(self.entries) > self.log.size:
            self.entries.truncate(self.log.size)
        state = load_json(self._dir / STATE_FILE)
        if state:
            self._checkpoint = Checkpoint.from_dict(state["checkpoint"])
            self._cosignatures = tuple(Cosignature.from_dict(c) for c in state.get("cosignatures", []))
            self._landmarks = [LandmarkRecord.from_dict(d) for d in state.get("landmarks", [])]
            self._revoked = RevokedRanges.from_list(state.get("revoked", []))
            self._cosigner_sizes = {k: int(v) for k, v in state.get("cosigner_sizes", {}).items()}
        if self._checkpoint.size > self.log.size:
            raise StorageError(
                f"cosigned checkpoint size {self._checkpoint.size} exceeds log size {self.log.size}"
            )

        # Every index past the cosigned checkpoint belongs to an issuance that never completed.
        dangling = range(self._checkpoint.size, self.log.size)
        pending = load_json(self._dir / PENDING_FILE)
        if dangling:
            self._revoked.add(dangling.start, dangling.stop)
            self._persist_state()
            logger.warning(
                "Voided %d dangling index(es) [%d, %d) left by an interrupted issuance",
                len(dangling), dangling.start, dangling.stop,
            )
        if pending:
            self._clear_pending()
        logger.info(
            "CA state loaded: log size %d, cosigned size %d, %d landmark(s), %d revoked range(s)",
            self.log.size, self._checkpoint.size, len(self._landmarks), len(self._revoked),
        )

