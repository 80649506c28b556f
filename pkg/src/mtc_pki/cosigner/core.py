"""Witness and mirror cosigners, and the relying-party cosigner policy.

A witness keeps exactly one checkpoint (the last one it signed) and only
signs checkpoints that consistently extend it. A mirror replays the log
from entry bytes and only signs once every entry up to the checkpoint is
available and the recomputed root matches.
"""
from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Protocol, Sequence, Tuple

from ..codec.certificate import Cosignature, subtree_message
from ..codec.schemes import KeyPair, SignatureSchemeId, VerifyPurpose, verify
from ..codec.taid import TrustAnchorID, parse_taid
from ..errors import CosignRefused, InvalidRequest, MTCError, StorageError
from ..logging.logger import get_logger
from ..merkle.hashing import HASH_SIZE, HashCounter, leaf_hash
from ..merkle.log import MerkleLog
from ..merkle.proofs import (
    Checkpoint,
    ConsistencyProof,
    SubtreeRange,
    consistency_proof_length,
    verify_consistency,
    verify_containment,
)
from ..utils.helpers import from_hex, load_json, save_json

logger = get_logger()

STATE_FILE = "state.json"
AUDIT_FILE = "audit.log"


class CosignerMode(str, Enum):
    WITNESS = "witness"
    MIRROR = "mirror"


@dataclass(frozen=True)
class CosignerInfo:
    """Public description of a cosigner, as listed in trust configs."""

    cosigner_id: TrustAnchorID
    scheme: SignatureSchemeId
    public_key: bytes
    mode: CosignerMode = CosignerMode.WITNESS

    def to_dict(self) -> dict:
        return {
            "id": str(self.cosigner_id),
            "scheme": self.scheme.label,
            "public_key": self.public_key.hex(),
            "mode": self.mode.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CosignerInfo":
        try:
            scheme = SignatureSchemeId.parse(data["scheme"])
            return cls(
                parse_taid(data["id"]),
                scheme,
                from_hex(data["public_key"], scheme.public_key_len),
                CosignerMode(data.get("mode", "witness")),
            )
        except (KeyError, ValueError, MTCError) as exc:
            raise InvalidRequest(f"malformed cosigner description: {exc}") from None


@dataclass(frozen=True)
class AcceptancePolicy:
    required_k: int
    trusted_cosigners: Tuple[CosignerInfo, ...]
    require_mirror: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "trusted_cosigners", tuple(self.trusted_cosigners))
        if not 1 <= self.required_k <= len(self.trusted_cosigners):
            raise InvalidRequest(
                f"policy needs 1 <= k <= {len(self.trusted_cosigners)}, got k={self.required_k}"
            )
        if self.require_mirror and not any(
            c.mode is CosignerMode.MIRROR for c in self.trusted_cosigners
        ):
            raise InvalidRequest("policy requires a mirror but trusts none")

    def lookup(self, cosigner_id: TrustAnchorID) -> Optional[CosignerInfo]:
        for info in self.trusted_cosigners:
            if info.cosigner_id == cosigner_id:
                return info
        return None

    def to_dict(self) -> dict:
        return {
            "required_k": self.required_k,
            "require_mirror": self.require_mirror,
            "cosigners": [c.to_dict() for c in self.trusted_cosigners],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AcceptancePolicy":
        return cls(
            int(data["required_k"]),
            tuple(CosignerInfo.from_dict(c) for c in data.get("cosigners", [])),
            bool(data.get("require_mirror", False)),
        )


def evaluate_policy(
    checkpoint: Checkpoint,
    cosignatures: Sequence[Cosignature],
    policy: AcceptancePolicy,
) -> bool:
    """Accept iff enough distinct trusted cosigners signed ``root || size``.

    Stops verifying as soon as the policy is satisfied.
    """
    message = checkpoint.message()
    verified: set = set()
    mirror_seen = False
    for cosig in cosignatures:
        if cosig.checkpoint_size != checkpoint.size or cosig.cosigner_id in verified:
            continue
        info = policy.lookup(cosig.cosigner_id)
        if info is None or info.scheme != cosig.scheme:
            continue
        if not verify(info.scheme, info.public_key, message, cosig.signature, VerifyPurpose.COSIGNATURE):
            continue
        verified.add(cosig.cosigner_id)
        mirror_seen = mirror_seen or info.mode is CosignerMode.MIRROR
        if len(verified) >= policy.required_k and (mirror_seen or not policy.require_mirror):
            return True
    return False


class EntrySource(Protocol):
    """Read access to encoded log entries, as a mirror sees the CA."""

    def fetch_entries(self, start: int, end: int) -> List[bytes]:
        """Entries ``[start, end)`` in order; may return a short list."""


class Cosigner:
    """One cosigner identity. Requests are processed serially."""

    def __init__(
        self,
        cosigner_id: TrustAnchorID,
        key: KeyPair,
        mode: CosignerMode = CosignerMode.WITNESS,
        state_dir: Optional[Path] = None,
        source: Optional[EntrySource] = None,
        replica: Optional[MerkleLog] = None,
    ) -> None:
        self.cosigner_id = cosigner_id
        self.key = key
        self.mode = CosignerMode(mode)
        self._dir = Path(state_dir) if state_dir is not None else None
        self._source = source
        self._lock = threading.Lock()
        self._last: Optional[Checkpoint] = None
        self.last_hash_ops = 0
        if replica is None:
            use_disk = self._dir is not None and self.mode is CosignerMode.MIRROR
            replica = MerkleLog(self._dir / "replay" if use_disk else None)
        self._replay = replica
        if self._dir is not None:
            self._dir.mkdir(parents=True, exist_ok=True)
            state = load_json(self._dir / STATE_FILE)
            if state.get("last_signed"):
                self._last = Checkpoint.from_dict(state["last_signed"])
                logger.info(
                    "Cosigner %s resumed at checkpoint size %d", cosigner_id, self._last.size
                )

    @property
    def info(self) -> CosignerInfo:
        return CosignerInfo(self.cosigner_id, self.key.scheme, self.key.public_key, self.mode)

    @property
    def last_signed(self) -> Optional[Checkpoint]:
        with self._lock:
            return self._last

    # ------------------------------------------------------------------
    # Checkpoint cosigning
    # ------------------------------------------------------------------

    def cosign(self, new: Checkpoint, proof: ConsistencyProof) -> Cosignature:
        """Dispatch on mode: witnesses check *proof*, mirrors replay from their source."""
        if self.mode is CosignerMode.MIRROR:
            if self._source is None:
                raise StorageError("mirror cosigner has no entry source")
            return self.mirror_cosign(new, self._source)
        return self.witness_cosign(new, proof)

    def witness_cosign(self, new: Checkpoint, proof: ConsistencyProof) -> Cosignature:
        with self._lock:
            last = self._last
            self.last_hash_ops = 0
            if last is None:
                # first checkpoint is trusted on first use
                logger.info("Cosigner %s bootstrapping at size %d", self.cosigner_id, new.size)
            elif new.size < last.size:
                self._refuse("size_regression", new, f"size {new.size} < last signed {last.size}")
            elif new.size == last.size:
                if new.root != last.root:
                    self._refuse("fork_detected", new, f"two roots at size {new.size}")
            else:
                expected = consistency_proof_length(last.size, new.size)
                if len(proof) != expected or any(len(h) != HASH_SIZE for h in proof.hashes):
                    self._refuse(
                        "bad_proof", new,
                        f"consistency proof has {len(proof)} hashes, expected {expected}",
                    )
                counter = HashCounter()
                ok = verify_consistency(last, new, proof, counter)
                self.last_hash_ops = counter.ops
                if not ok:
                    self._refuse(
                        "fork_detected", new,
                        f"checkpoint {new.size} is not an extension of {last.size}",
                    )
            return self._sign_checkpoint(new)

    def mirror_cosign(self, new: Checkpoint, entries: EntrySource) -> Cosignature:
        with self._lock:
            last = self._last
            if last is not None and new.size < last.size:
                self._refuse("size_regression", new, f"size {new.size} < last signed {last.size}")
            replay = self._replay
            if replay.size < new.size:
                start = replay.size
                fetched = entries.fetch_entries(start, new.size)[: new.size - start]
                if len(fetched) < new.size - start:
                    missing = start + len(fetched)
                    self._refuse(
                        "entry_unavailable", new, f"entry {missing} is unavailable", index=missing,
                    )
                leaves = [leaf_hash(e) for e in fetched]
                # leaves reach the replay only once they reproduce the requested root
                if replay.root_after(leaves) != new.root:
                    self._refuse("root_mismatch", new, f"replayed root differs at size {new.size}")
                for leaf in leaves:
                    replay.append(leaf)
            elif replay.checkpoint_at(new.size).root != new.root:
                self._refuse("root_mismatch", new, f"replayed root differs at size {new.size}")
            return self._sign_checkpoint(new)

    # ------------------------------------------------------------------
    # Subtree signing
    # ------------------------------------------------------------------

    def sign_subtree(
        self,
        rng: SubtreeRange,
        subtree_root: bytes,
        containment: ConsistencyProof,
        within: Checkpoint,
    ) -> Cosignature:
        """Sign ``subtree_root || start || end`` once it is proven inside a known checkpoint."""
        with self._lock:
            if not self._knows(within):
                self._refuse("unknown_checkpoint", within, f"checkpoint {within.size} was never signed")
            if not verify_containment(rng, subtree_root, containment, within):
                self._refuse("not_contained", within, f"subtree {rng} not contained in {within.size}")
            signature = self.key.sign(subtree_message(subtree_root, rng))
            self._audit("sign_subtree", within, "signed", subtree=str(rng))
            return Cosignature(self.cosigner_id, self.key.scheme, signature, within.size)

    def _knows(self, checkpoint: Checkpoint) -> bool:
        if self._last == checkpoint:
            return True
        if self.mode is CosignerMode.MIRROR and self._last is not None:
            size = checkpoint.size
            if size <= self._last.size and size <= self._replay.size:
                return self._replay.checkpoint_at(size) == checkpoint
        return False

    # ------------------------------------------------------------------
    # Internals
    # ------------------------------------------------------------------

    def _sign_checkpoint(self, new: Checkpoint) -> Cosignature:
        # persisted before the signature leaves this process
        self._last = new
        self._persist()
        signature = self.key.sign(new.message())
        self._audit("cosign", new, "signed")
        logger.info("Cosigner %s signed checkpoint size %d", self.cosigner_id, new.size)
        return Cosignature(self.cosigner_id, self.key.scheme, signature, new.size)

    def _refuse(self, reason: str, checkpoint: Checkpoint, message: str, index: Optional[int] = None) -> None:
        self._audit("cosign", checkpoint, "refused", reason=reason)
        logger.warning("Cosigner %s refused (%s): %s", self.cosigner_id, reason, message)
        raise CosignRefused(reason, message, index=index)

    def _persist(self) -> None:
        if self._dir is None:
            return
        try:
            save_json(self._dir / STATE_FILE, {
                "cosigner_id": str(self.cosigner_id),
                "mode": self.mode.value,
                "last_signed": self._last.to_dict() if self._last else None,
            })
        except OSError as exc:
            raise StorageError(f"cannot persist cosigner state: {exc}") from exc

    def _audit(self, action: str, checkpoint: Checkpoint, outcome: str, **extra: object) -> None:
        if self._dir is None:
            return
        record: Dict[str, object] = {
            "time": int(time.time()),
            "action": action,
            "size": checkpoint.size,
            "root": checkpoint.root.hex(),
            "outcome": outcome,
        }
        record.update(extra)
        try:
            with (self._dir / AUDIT_FILE).open("a", encoding="utf-8") as f:
                f.write(json.dumps(record, sort_keys=True) + "\n")
        except OSError:
            logger.exception("Cannot append to cosigner audit log")


def trusted_from(cosigners: Iterable[Cosigner]) -> Tuple[CosignerInfo, ...]:
    return tuple(c.info for c in cosigners)
