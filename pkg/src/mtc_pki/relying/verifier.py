"""Relying-party verification of MTC certificates.

Verification is offline and pure: a :class:`RelyingTrust` snapshot holds the
trust config, the distributor's landmark store and the revoked ranges, and
every verifier returns a :class:`VerificationOutcome` instead of raising.
Landmark verification never touches the signature registry.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from ..ca.authority import TrustConfig
from ..codec.certificate import MTCCertificate, decode_certificate
from ..codec.entries import entry_hash
from ..codec.schemes import registry
from ..codec.taid import TrustAnchorRange
from ..cosigner.core import evaluate_policy
from ..distributor.agent import LandmarkStore, load_store
from ..errors import CodecError
from ..logging.logger import get_logger
from ..merkle.hashing import HashCounter
from ..merkle.proofs import Checkpoint, root_from_inclusion
from ..utils.helpers import load_json
from .revocation import RevokedRanges, check_revoked

logger = get_logger()

DEFAULT_CLOCK_SKEW = 300


class Verdict(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"


class VerifyMode(str, Enum):
    LANDMARK = "landmark"
    STANDALONE = "standalone"


class Reason(str, Enum):
    OK = "ok"
    REVOKED = "revoked"
    UNKNOWN_LANDMARK = "unknown_landmark"
    UNKNOWN_LOG = "unknown_log"
    PROOF_MISMATCH = "proof_mismatch"
    POLICY_UNSATISFIED = "policy_unsatisfied"
    EXPIRED = "expired"
    NOT_YET_VALID = "not_yet_valid"
    KEY_MISMATCH = "key_mismatch"
    MALFORMED = "malformed"


@dataclass(frozen=True)
class VerificationOutcome:
    verdict: Verdict
    mode: VerifyMode
    reason: Reason
    hash_ops: int = 0

    @property
    def accepted(self) -> bool:
        return self.verdict is Verdict.ACCEPT

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "mode": self.mode.value,
            "reason": self.reason.value,
            "hash_ops": self.hash_ops,
        }


def _accept(mode: VerifyMode, counter: HashCounter) -> VerificationOutcome:
    return VerificationOutcome(Verdict.ACCEPT, mode, Reason.OK, counter.ops)


def _reject(mode: VerifyMode, reason: Reason, counter: Optional[HashCounter] = None) -> VerificationOutcome:
    return VerificationOutcome(Verdict.REJECT, mode, reason, counter.ops if counter else 0)


@dataclass(frozen=True)
class RelyingTrust:
    """Immutable trust snapshot; reloading produces a new one."""

    trust_config: TrustConfig
    landmark_store: Optional[LandmarkStore] = None
    revoked: RevokedRanges = field(default_factory=RevokedRanges)
    clock_skew: int = DEFAULT_CLOCK_SKEW

    @classmethod
    def build(
        cls,
        trust_config: TrustConfig,
        landmark_store: Optional[LandmarkStore] = None,
        extra_revoked: Optional[RevokedRanges] = None,
        clock_skew: int = DEFAULT_CLOCK_SKEW,
    ) -> "RelyingTrust":
        revoked = RevokedRanges()
        if trust_config.first_available_index > 0:
            # everything below the pruning boundary is revoked up front
            revoked.add(0, trust_config.first_available_index)
        if landmark_store is not None:
            revoked = revoked.merged(landmark_store.revoked)
        if extra_revoked is not None:
            revoked = revoked.merged(extra_revoked)
        return cls(trust_config, landmark_store, revoked, clock_skew)

    @classmethod
    def from_files(
        cls,
        trust_config_path: Path,
        landmarks_path: Optional[Path] = None,
        clock_skew: int = DEFAULT_CLOCK_SKEW,
    ) -> "RelyingTrust":
        config = TrustConfig.from_dict(load_json(Path(trust_config_path)))
        store = None
        if landmarks_path is not None and Path(landmarks_path).exists():
            store = load_store(Path(landmarks_path), config.log_id)
        return cls.build(config, store, clock_skew=clock_skew)

    @property
    def landmark_numbers(self) -> List[int]:
        return self.landmark_store.numbers if self.landmark_store else []


CertificateInput = Union[MTCCertificate, bytes]


def _decode(cert: CertificateInput) -> Optional[MTCCertificate]:
    if isinstance(cert, MTCCertificate):
        return cert
    try:
        return decode_certificate(cert)
    except CodecError as exc:
        logger.debug("Certificate rejected as malformed: %s", exc)
        return None


def _common_checks(
    cert: MTCCertificate,
    trust: RelyingTrust,
    mode: VerifyMode,
    now: Optional[float],
    counter: HashCounter,
) -> Optional[VerificationOutcome]:
    if cert.log_id != trust.trust_config.log_id:
        return _reject(mode, Reason.UNKNOWN_LOG)
    # revocation is decided before any proof work
    if check_revoked(cert.index, trust.revoked):
        return _reject(mode, Reason.REVOKED)
    now = time.time() if now is None else now
    if now > cert.entry.not_after + trust.clock_skew:
        return _reject(mode, Reason.EXPIRED)
    if now < cert.entry.not_before - trust.clock_skew:
        return _reject(mode, Reason.NOT_YET_VALID)
    if counter.sha256(cert.entity_public_key) != cert.entry.spki_hash:
        return _reject(mode, Reason.KEY_MISMATCH, counter)
    return None


def verify_landmark(cert: CertificateInput, trust: RelyingTrust, now: Optional[float] = None) -> VerificationOutcome:
    """Hash-only verification against a locally stored landmark subtree."""
    mode = VerifyMode.LANDMARK
    decoded = _decode(cert)
    if decoded is None or decoded.proof.cosignatures:
        return _reject(mode, Reason.MALFORMED)
    counter = HashCounter()
    failed = _common_checks(decoded, trust, mode, now, counter)
    if failed is not None:
        return failed
    store = trust.landmark_store
    stored = store.lookup(decoded.proof.range) if store is not None else None
    if stored is None:
        return _reject(mode, Reason.UNKNOWN_LANDMARK, counter)
    leaf = entry_hash(decoded.entry, counter)
    root = root_from_inclusion(leaf, decoded.index, decoded.proof.inclusion, decoded.proof.range, counter)
    if root is None or root != stored.hash:
        return _reject(mode, Reason.PROOF_MISMATCH, counter)
    return _accept(mode, counter)


def verify_standalone(cert: CertificateInput, trust: RelyingTrust, now: Optional[float] = None) -> VerificationOutcome:
    """Verify the inclusion proof and the cosignatures over the checkpoint it implies."""
    mode = VerifyMode.STANDALONE
    decoded = _decode(cert)
    if decoded is None or not decoded.proof.cosignatures or decoded.proof.range.start != 0:
        return _reject(mode, Reason.MALFORMED)
    counter = HashCounter()
    failed = _common_checks(decoded, trust, mode, now, counter)
    if failed is not None:
        return failed
    rng = decoded.proof.range
    leaf = entry_hash(decoded.entry, counter)
    root = root_from_inclusion(leaf, decoded.index, decoded.proof.inclusion, rng, counter)
    if root is None:
        return _reject(mode, Reason.PROOF_MISMATCH, counter)
    checkpoint = Checkpoint(root, rng.end)
    policy = trust.trust_config.policy
    if evaluate_policy(checkpoint, decoded.proof.cosignatures, policy):
        return _accept(mode, counter)
    # Enough trusted cosignatures for this size that still fail to verify means
    # the reconstructed root is wrong, i.e. the proof was altered.
    candidates = {
        c.cosigner_id
        for c in decoded.proof.cosignatures
        if c.checkpoint_size == rng.end
        and (info := policy.lookup(c.cosigner_id)) is not None
        and info.scheme == c.scheme
    }
    if len(candidates) >= policy.required_k:
        return _reject(mode, Reason.PROOF_MISMATCH, counter)
    return _reject(mode, Reason.POLICY_UNSATISFIED, counter)


def verify_certificate(cert: CertificateInput, trust: RelyingTrust, now: Optional[float] = None) -> VerificationOutcome:
    """Dispatch on the proof type: no cosignatures means landmark mode."""
    decoded = _decode(cert)
    if decoded is None:
        return _reject(VerifyMode.STANDALONE, Reason.MALFORMED)
    if decoded.is_landmark:
        return verify_landmark(decoded, trust, now)
    return verify_standalone(decoded, trust, now)


# ---------------------------------------------------------------------------
# Trust anchor negotiation
# ---------------------------------------------------------------------------

def advertise_anchors(trust: RelyingTrust) -> List[TrustAnchorRange]:
    """Landmark window held locally (if any), then the bare log anchor."""
    config = trust.trust_config
    anchors: List[TrustAnchorRange] = []
    numbers = trust.landmark_numbers
    if numbers:
        anchors.append(TrustAnchorRange(config.landmark_base, numbers[0], numbers[-1]))
    anchors.append(TrustAnchorRange(config.log_id, 0, 0))
    return anchors


@dataclass
class CertificateInventory:
    """Certificates a server holds for one key: the standalone one plus landmark ones by number."""

    standalone: MTCCertificate
    landmarks: Dict[int, MTCCertificate] = field(default_factory=dict)

    def add_landmark(self, number: int, cert: MTCCertificate) -> None:
        if not cert.is_landmark:
            raise ValueError("landmark inventory slot needs a certificate without cosignatures")
        self.landmarks[number] = cert


def select_certificate(available: CertificateInventory, peer_anchors: Sequence[TrustAnchorRange]) -> MTCCertificate:
    """Newest owned landmark certificate inside a peer window, else the standalone one."""
    base = available.standalone.log_id.child(1)
    for number in sorted(available.landmarks, reverse=True):
        if any(not a.is_bare and a.covers(base, number) for a in peer_anchors):
            return available.landmarks[number]
    return available.standalone


def signature_verifications_during(fn, *args, **kwargs):
    """Run *fn* and return ``(result, verifications per purpose)`` from the registry counters."""
    before = registry.counts()
    result = fn(*args, **kwargs)
    after = registry.counts()
    return result, {k: after.get(k, 0) - before.get(k, 0) for k in after}

