"""Tests for the certificate authority: issuance, landmarks, revocation, pruning and recovery."""
import threading
import time
from concurrent.futures import ThreadPoolExecutor

import pytest

from conftest import ADMISSION_TOKEN, LOG_ID, NOW, issue_request, seeded_key
from mtc_pki.ca.authority import (
    IssuancePolicy,
    IssueRequest,
    LandmarkRecord,
    TrustConfig,
    derive_max_landmarks,
)
from mtc_pki.codec.entries import entry_hash
from mtc_pki.codec.schemes import SignatureSchemeId
from mtc_pki.codec.taid import parse_taid
from mtc_pki.cosigner.core import Cosigner, CosignerInfo, CosignerMode, evaluate_policy
from mtc_pki.errors import (
    AuthorizationError,
    IndexRevoked,
    InvalidRequest,
    NotReady,
    ProofUnavailable,
    QuorumUnavailable,
    TransportError,
)
from mtc_pki.merkle.proofs import SubtreeRange, decompose_range, verify_inclusion


class DownPeer:
    """Cosigner peer that cannot be reached."""

    def __init__(self, label="down"):
        key = seeded_key(label)
        self.info = CosignerInfo(parse_taid("32473.2.9"), key.scheme, key.public_key, CosignerMode.WITNESS)
        self.up = False
        self.delegate = Cosigner(self.info.cosigner_id, key, CosignerMode.WITNESS)

    def cosign(self, new, proof):
        if self.up:
            return self.delegate.cosign(new, proof)
        raise TransportError("connection refused")


class LatePeer:
    """Witness whose first answer arrives after a delay."""

    def __init__(self, delay):
        self.witness = Cosigner(parse_taid("32473.2.7"), seeded_key("late"), CosignerMode.WITNESS)
        self.delay = delay
        self.calls = 0

    @property
    def info(self):
        return self.witness.info

    def cosign(self, new, proof):
        self.calls += 1
        if self.calls == 1:
            time.sleep(self.delay)
        return self.witness.cosign(new, proof)


def _wait_for(predicate, timeout=5.0):
    deadline = time.monotonic() + timeout
    while not predicate():
        assert time.monotonic() < deadline, "condition not reached in time"
        time.sleep(0.01)


class TestIssuance:
    def test_standalone_certificate(self, ca):
        """Test that a standalone certificate proves inclusion in a quorum-signed checkpoint."""
        cert = ca.issue_standalone(issue_request(), now=NOW)
        checkpoint, cosigs = ca.checkpoint()

        assert cert.index == 0
        assert cert.proof.range == SubtreeRange(0, 1)
        assert cert.proof.cosignatures == cosigs
        assert len(cosigs) == 2
        assert evaluate_policy(checkpoint, cosigs, ca.trust_config().policy)
        assert cert.entry.not_after == NOW + 86400

    def test_certificates_verify_against_their_checkpoint(self, issued):
        """Test every issued certificate's inclusion proof."""
        ca, certs = issued
        for cert in certs:
            rng = cert.proof.range
            root = ca.log.checkpoint_at(rng.end).root
            assert verify_inclusion(entry_hash(cert.entry), cert.index, cert.proof.inclusion, rng, root)
        assert [c.index for c in certs] == list(range(8))

    def test_bad_token(self, ca):
        """Test that issuance without the admission token is rejected."""
        with pytest.raises(AuthorizationError):
            ca.issue_standalone(issue_request(admission_token="wrong"), now=NOW)
        assert ca.log.size == 0

    def test_wrong_key_length(self, ca):
        """Test that a key of the wrong length for its scheme is rejected."""
        key = seeded_key("short", SignatureSchemeId.ED25519)
        request = issue_request(key=key)
        bad = IssueRequest(request.subject, request.dns_names, SignatureSchemeId.ECDSA_P256,
                            key.public_key, ADMISSION_TOKEN)

        with pytest.raises(InvalidRequest):
            ca.issue_standalone(bad, now=NOW)

    def test_lifetime_cap(self, ca):
        """Test that lifetimes beyond the policy are rejected."""
        with pytest.raises(InvalidRequest):
            ca.issue_standalone(issue_request(lifetime=86401), now=NOW)

    def test_quorum_failure_voids_index(self, make_ca, witnesses):
        """Test that a failed quorum voids the appended index and later issuance continues."""
        down = DownPeer()
        ca = make_ca([witnesses[0], down], required_k=2)

        with pytest.raises(QuorumUnavailable):
            ca.issue_standalone(issue_request("a.5gc"), now=NOW)

        assert 0 in ca.revoked
        assert ca.log.size == 1
        assert ca.checkpoint()[0].size == 0

        down.up = True
        cert = ca.issue_standalone(issue_request("b.5gc"), now=NOW)
        assert cert.index == 1
        assert ca.checkpoint()[0].size == 2

    def test_late_cosigner_rejoins_quorum(self, make_ca, witnesses):
        """Test that a cosigner answering after the deadline is asked with a proof from its new size."""
        late = LatePeer(delay=0.5)
        policy = IssuancePolicy(admission_token=ADMISSION_TOKEN, checkpoint_interval=0, cosign_timeout=0.2)
        ca = make_ca([witnesses[0], late], required_k=1, issuance_policy=policy)

        first = ca.issue_standalone(issue_request("a.5gc"), now=NOW)
        assert [c.cosigner_id for c in first.proof.cosignatures] == [witnesses[0].cosigner_id]

        late_id = str(late.info.cosigner_id)
        _wait_for(lambda: ca._signed_sizes().get(late_id) == 1)
        second = ca.issue_standalone(issue_request("b.5gc"), now=NOW)

        assert [c.cosigner_id for c in second.proof.cosignatures] == [
            witnesses[0].cosigner_id, late.witness.cosigner_id,
        ]
        assert late.witness.last_signed.size == 2

    def test_checkpoint_interval_batches_issuance(self, make_ca, witnesses):
        """Test that issuances arriving within one checkpoint interval share a cosigned checkpoint."""
        policy = IssuancePolicy(admission_token=ADMISSION_TOKEN, checkpoint_interval=0.5)
        ca = make_ca(witnesses, issuance_policy=policy)
        first = ca.issue_standalone(issue_request("first.5gc"), now=NOW)
        start = threading.Barrier(3)

        def issue(name):
            start.wait()
            return ca.issue_standalone(issue_request(name), now=NOW)

        with ThreadPoolExecutor(max_workers=3) as pool:
            certs = list(pool.map(issue, ["a.5gc", "b.5gc", "c.5gc"]))

        assert first.proof.range == SubtreeRange(0, 1)
        assert sorted(c.index for c in certs) == [1, 2, 3]
        assert all(c.proof.range == SubtreeRange(0, 4) for c in certs)
        assert all(c.proof.cosignatures == certs[0].proof.cosignatures for c in certs)
        assert witnesses[0].last_signed.size == 4
        assert ca.checkpoint()[0].size == 4

    def test_negative_checkpoint_interval(self):
        """Test that a negative checkpoint interval is rejected."""
        with pytest.raises(InvalidRequest):
            IssuancePolicy(checkpoint_interval=-1)

    def test_withheld_entries(self, issued):
        """Test that fetch_entries stops at a withheld index."""
        ca, _ = issued
        ca.withhold(5)

        assert len(ca.fetch_entries(0, 8)) == 5
        ca.release(5)
        assert len(ca.fetch_entries(0, 8)) == 8


class TestLandmarks:
    def test_allocate_and_issue(self, issued):
        """Test the first landmark over eight entries and its certificate."""
        ca, certs = issued

        record = ca.allocate_landmark(now=NOW)
        cert = ca.issue_landmark(3)

        assert record.number == 1
        assert record.tree_size == 8
        assert [r for r, _ in record.subtrees] == [SubtreeRange(0, 8)]
        assert cert.is_landmark
        assert cert.proof.range == SubtreeRange(0, 8)
        assert len(cert.proof.inclusion) == 3
        assert verify_inclusion(entry_hash(cert.entry), 3, cert.proof.inclusion, cert.proof.range,
                                record.subtrees[0][1])

    def test_no_growth_no_landmark(self, issued):
        """Test that allocation is skipped when the tree has not grown."""
        ca, _ = issued
        ca.allocate_landmark(now=NOW)

        assert ca.allocate_landmark(now=NOW + 600) is None

    def test_second_landmark_decomposition(self, make_ca, witnesses):
        """Test that 20 issuances past size 16 give the decomposition of [16, 36)."""
        ca = make_ca(witnesses)
        for i in range(16):
            ca.issue_standalone(issue_request(f"a{i}.5gc"), now=NOW)
        ca.allocate_landmark(now=NOW)
        for i in range(20):
            ca.issue_standalone(issue_request(f"b{i}.5gc"), now=NOW)

        record = ca.allocate_landmark(now=NOW + 600)

        assert record.number == 2
        assert [r for r, _ in record.subtrees] == decompose_range(SubtreeRange(16, 36))
        cert = ca.issue_landmark(33)
        assert cert.proof.range == SubtreeRange(32, 36)
        assert ca.landmark_number_for(33) == 2
        assert ca.landmark_number_for(3) == 1

    def test_not_ready(self, issued):
        """Test landmark requests before allocation or for uncovered indices."""
        ca, _ = issued
        with pytest.raises(NotReady):
            ca.issue_landmark(0)
        ca.allocate_landmark(now=NOW)
        ca.issue_standalone(issue_request("late.5gc"), now=NOW)
        with pytest.raises(NotReady):
            ca.issue_landmark(8)
        with pytest.raises(NotReady):
            ca.issue_landmark(0, landmark_number=7)

    def test_retires_oldest(self, make_ca, witnesses):
        """Test that only max_landmarks records stay active."""
        policy = IssuancePolicy(admission_token=ADMISSION_TOKEN, max_landmarks=2, checkpoint_interval=0)
        ca = make_ca(witnesses, issuance_policy=policy)
        for i in range(3):
            ca.issue_standalone(issue_request(f"n{i}.5gc"), now=NOW)
            ca.allocate_landmark(now=NOW + i)

        assert [lm.number for lm in ca.landmarks] == [2, 3]

    def test_landmark_sequence_document(self, issued):
        """Test the text form: header, sizes newest first, then revocations."""
        ca, _ = issued
        ca.allocate_landmark(now=NOW)
        ca.issue_standalone(issue_request("x.5gc"), now=NOW)
        ca.allocate_landmark(now=NOW + 600)
        ca.revoke(2, 4)

        assert ca.serve_landmark_sequence() == "2 2\n9\n8\nrevoked:\n2 4\n"

    def test_record_dict_roundtrip(self, issued):
        """Test the persisted form of a landmark record."""
        ca, _ = issued
        record = ca.allocate_landmark(now=NOW)

        assert LandmarkRecord.from_dict(record.to_dict()) == record

    def test_max_landmarks_derivation(self):
        """Test ceil(lifetime / interval) + 1."""
        assert derive_max_landmarks(86400, 600) == 145
        assert derive_max_landmarks(86400, 3600) == 25
        assert IssuancePolicy(landmark_interval=3600).max_landmarks == 25


class TestRevocationAndPruning:
    def test_revoke(self, issued):
        """Test that revoked indices get no landmark certificate."""
        ca, _ = issued
        ca.allocate_landmark(now=NOW)

        revoked = ca.revoke(2, 4)

        assert revoked.to_list() == [[2, 4]]
        with pytest.raises(IndexRevoked):
            ca.issue_landmark(3)
        assert ca.issue_landmark(4).index == 4

    def test_revoke_bounds(self, issued):
        """Test that revocation ranges must lie inside the log."""
        ca, _ = issued
        with pytest.raises(InvalidRequest):
            ca.revoke(4, 9)
        with pytest.raises(InvalidRequest):
            ca.revoke(3, 3)

    def test_prune_expired(self, issued):
        """Test that expired entries are pruned and preemptively revoked."""
        ca, _ = issued
        ca.issue_standalone(issue_request("fresh.5gc"), now=NOW + 50_000)

        boundary = ca.prune_expired(now=NOW + 86_401)

        assert boundary == 8
        assert ca.first_available_index == 8
        assert ca.revoked.to_list() == [[0, 8]]
        assert ca.trust_config().first_available_index == 8
        with pytest.raises(ProofUnavailable):
            ca.fetch_entries(0, 4)

    def test_landmark_inside_pruned_prefix(self, issued):
        """Test that a landmark whose range starts in the pruned prefix is refused."""
        ca, _ = issued
        ca.issue_standalone(issue_request("fresh.5gc"), now=NOW + 50_000)
        ca.prune_expired(now=NOW + 86_401)

        with pytest.raises(InvalidRequest):
            ca.allocate_landmark(now=NOW + 86_401)
        assert ca.landmarks == ()

    def test_prune_nothing_expired(self, issued):
        """Test that pruning before expiry is a no-op."""
        ca, _ = issued

        assert ca.prune_expired(now=NOW + 10) == 0
        assert len(ca.revoked) == 0


class TestPersistence:
    def test_restart_keeps_state(self, make_ca, witnesses, tmp_path):
        """Test that a restarted CA keeps its log, landmarks and revocations."""
        ca = make_ca(witnesses, data_dir=tmp_path / "ca")
        for i in range(4):
            ca.issue_standalone(issue_request(f"n{i}.5gc"), now=NOW)
        ca.allocate_landmark(now=NOW)
        ca.revoke(1, 2)
        ca.close()

        again = make_ca(witnesses, data_dir=tmp_path / "ca")

        assert again.log.size == 4
        assert again.checkpoint() == ca.checkpoint()
        assert [lm.number for lm in again.landmarks] == [1]
        assert again.revoked.to_list() == [[1, 2]]
        assert again.issue_landmark(3).index == 3
        assert again.issue_standalone(issue_request("n4.5gc"), now=NOW).index == 4

    def test_restart_voids_dangling_index(self, make_ca, witnesses, tmp_path):
        """Test that an index appended without a cosigned checkpoint is voided on restart."""
        ca = make_ca(witnesses, data_dir=tmp_path / "ca")
        ca.issue_standalone(issue_request("ok.5gc"), now=NOW)
        entry = ca._build_entry(issue_request("crash.5gc"), NOW)
        ca.entries.append(entry.encoded, b"\x00" * 65)
        ca.log.append(entry_hash(entry))
        ca.close()

        again = make_ca(witnesses, data_dir=tmp_path / "ca")

        assert 1 in again.revoked
        assert again.checkpoint()[0].size == 1
        assert again.issue_standalone(issue_request("next.5gc"), now=NOW).index == 2


class TestTrustConfig:
    def test_roundtrip(self, ca):
        """Test the published trust configuration."""
        config = ca.trust_config()

        assert config.log_id == LOG_ID
        assert str(config.landmark_base) == "32473.1"
        assert TrustConfig.from_dict(config.to_dict()) == config

    def test_malformed(self):
        """Test that malformed trust configs raise InvalidRequest."""
        with pytest.raises(InvalidRequest):
            TrustConfig.from_dict({"log_id": "32473"})
