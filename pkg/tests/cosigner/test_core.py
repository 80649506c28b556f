"""Tests for witness and mirror cosigning and the acceptance policy."""
import json

import pytest

from conftest import seeded_key
from mtc_pki.codec.certificate import Cosignature, subtree_message
from mtc_pki.codec.schemes import verify
from mtc_pki.codec.taid import parse_taid
from mtc_pki.cosigner.core import (
    AcceptancePolicy,
    Cosigner,
    CosignerMode,
    evaluate_policy,
    trusted_from,
)
from mtc_pki.errors import CosignRefused, InvalidRequest
from mtc_pki.merkle.hashing import leaf_hash
from mtc_pki.merkle.log import MerkleLog
from mtc_pki.merkle.proofs import ConsistencyProof, SubtreeRange


def _entries(n, tag=b"entry"):
    return [tag + b"-%d" % i for i in range(n)]


def _log(entries):
    log = MerkleLog()
    for e in entries:
        log.append(leaf_hash(e))
    return log


class ListSource:
    """Entry source over a list, optionally withholding one index."""

    def __init__(self, entries, withheld=None):
        self.entries = entries
        self.withheld = withheld

    def fetch_entries(self, start, end):
        out = []
        for i in range(start, min(end, len(self.entries))):
            if i == self.withheld:
                break
            out.append(self.entries[i])
        return out


@pytest.fixture
def witness(tmp_path):
    return Cosigner(parse_taid("32473.2.1"), seeded_key("w1"), CosignerMode.WITNESS, state_dir=tmp_path / "w1")


@pytest.fixture
def log32():
    return _log(_entries(32))


class TestWitness:
    def test_bootstrap_then_extend(self, witness, log32):
        """Test trust on first use followed by an honest 8 -> 16 extension."""
        first = witness.cosign(log32.checkpoint_at(8), ConsistencyProof())

        cosig = witness.cosign(log32.checkpoint_at(16), log32.consistency_proof(8, 16))

        assert first.checkpoint_size == 8
        assert cosig.checkpoint_size == 16
        assert verify(cosig.scheme, witness.key.public_key, log32.checkpoint_at(16).message(), cosig.signature)
        assert witness.last_signed == log32.checkpoint_at(16)
        assert witness.last_hash_ops > 0

    def test_same_checkpoint_is_idempotent(self, witness, log32):
        """Test that re-signing the last checkpoint is allowed."""
        witness.cosign(log32.checkpoint_at(8), ConsistencyProof())

        assert witness.cosign(log32.checkpoint_at(8), ConsistencyProof()).checkpoint_size == 8

    def test_fork_same_size(self, witness, log32):
        """Test refusal of a second root at the same size."""
        witness.cosign(log32.checkpoint_at(8), ConsistencyProof())
        forked = _log(_entries(8, b"fork"))

        with pytest.raises(CosignRefused) as exc_info:
            witness.cosign(forked.checkpoint_at(8), ConsistencyProof())

        assert exc_info.value.reason == "fork_detected"

    def test_fork_on_extension(self, witness, log32):
        """Test refusal of a larger checkpoint that does not extend the signed one."""
        witness.cosign(log32.checkpoint_at(8), ConsistencyProof())
        forked = _log(_entries(16, b"fork"))

        with pytest.raises(CosignRefused) as exc_info:
            witness.cosign(forked.checkpoint_at(16), forked.consistency_proof(8, 16))

        assert exc_info.value.reason == "fork_detected"
        assert witness.last_signed == log32.checkpoint_at(8)

    def test_size_regression(self, witness, log32):
        """Test refusal of a smaller checkpoint."""
        witness.cosign(log32.checkpoint_at(16), ConsistencyProof())

        with pytest.raises(CosignRefused) as exc_info:
            witness.cosign(log32.checkpoint_at(8), ConsistencyProof())

        assert exc_info.value.reason == "size_regression"

    def test_bad_proof_length(self, witness, log32):
        """Test refusal of a proof with the wrong number of hashes."""
        witness.cosign(log32.checkpoint_at(5), ConsistencyProof())
        proof = log32.consistency_proof(5, 13)

        with pytest.raises(CosignRefused) as exc_info:
            witness.cosign(log32.checkpoint_at(13), ConsistencyProof(proof.hashes[:-1]))

        assert exc_info.value.reason == "bad_proof"

    def test_state_survives_restart(self, tmp_path, witness, log32):
        """Test that a restarted witness remembers its last checkpoint and keeps an audit trail."""
        witness.cosign(log32.checkpoint_at(8), ConsistencyProof())
        with pytest.raises(CosignRefused):
            witness.cosign(log32.checkpoint_at(4), ConsistencyProof())

        restarted = Cosigner(witness.cosigner_id, witness.key, CosignerMode.WITNESS, state_dir=tmp_path / "w1")

        assert restarted.last_signed == log32.checkpoint_at(8)
        records = [json.loads(line) for line in (tmp_path / "w1" / "audit.log").read_text().splitlines()]
        assert [r["outcome"] for r in records] == ["signed", "refused"]
        assert records[1]["reason"] == "size_regression"


class TestMirror:
    def test_replays_and_signs(self, tmp_path, log32):
        """Test that a mirror replays entries from its source and signs the matching root."""
        entries = _entries(32)
        mirror = Cosigner(parse_taid("32473.3.1"), seeded_key("m"), CosignerMode.MIRROR,
                          state_dir=tmp_path / "m", source=ListSource(entries))

        cosig = mirror.cosign(log32.checkpoint_at(20), ConsistencyProof())

        assert cosig.checkpoint_size == 20

    def test_withheld_entry(self, log32):
        """Test refusal naming the first entry the source cannot provide."""
        mirror = Cosigner(parse_taid("32473.3.1"), seeded_key("m"), CosignerMode.MIRROR,
                          source=ListSource(_entries(32), withheld=11))

        with pytest.raises(CosignRefused) as exc_info:
            mirror.cosign(log32.checkpoint_at(16), ConsistencyProof())

        assert exc_info.value.reason == "entry_unavailable"
        assert exc_info.value.index == 11

    def test_root_mismatch(self, log32):
        """Test refusal when the replayed entries give a different root."""
        mirror = Cosigner(parse_taid("32473.3.1"), seeded_key("m"), CosignerMode.MIRROR,
                          source=ListSource(_entries(32, b"other")))

        with pytest.raises(CosignRefused) as exc_info:
            mirror.cosign(log32.checkpoint_at(16), ConsistencyProof())

        assert exc_info.value.reason == "root_mismatch"

    def test_mismatch_leaves_replay_untouched(self, tmp_path, log32):
        """Test that entries refused for a root mismatch are not kept for later requests."""
        source = ListSource(_entries(32, b"other"))
        mirror = Cosigner(parse_taid("32473.3.1"), seeded_key("m"), CosignerMode.MIRROR,
                          state_dir=tmp_path / "m", source=source)

        with pytest.raises(CosignRefused) as exc_info:
            mirror.cosign(log32.checkpoint_at(16), ConsistencyProof())
        assert exc_info.value.reason == "root_mismatch"
        assert mirror.last_signed is None

        source.entries = _entries(32)
        assert mirror.cosign(log32.checkpoint_at(16), ConsistencyProof()).checkpoint_size == 16
        assert mirror.cosign(log32.checkpoint_at(24), ConsistencyProof()).checkpoint_size == 24

    def test_accepts_after_withheld_entry_released(self, log32):
        """Test that a mirror refusing on a withheld entry signs once the entry is served."""
        source = ListSource(_entries(32), withheld=11)
        mirror = Cosigner(parse_taid("32473.3.1"), seeded_key("m"), CosignerMode.MIRROR, source=source)

        with pytest.raises(CosignRefused):
            mirror.cosign(log32.checkpoint_at(16), ConsistencyProof())

        source.withheld = None
        assert mirror.cosign(log32.checkpoint_at(16), ConsistencyProof()).checkpoint_size == 16


class TestSubtreeSigning:
    def test_signs_contained_subtree(self, witness, log32):
        """Test signing [16, 32) inside a signed 32-leaf checkpoint."""
        checkpoint = log32.checkpoint_at(32)
        witness.cosign(checkpoint, ConsistencyProof())
        rng = SubtreeRange(16, 32)
        root = log32.subtree_root(rng)

        cosig = witness.sign_subtree(rng, root, log32.containment_proof(rng, 32), checkpoint)

        assert verify(cosig.scheme, witness.key.public_key, subtree_message(root, rng), cosig.signature)

    def test_unknown_checkpoint(self, witness, log32):
        """Test refusal when the checkpoint was never signed."""
        rng = SubtreeRange(0, 8)

        with pytest.raises(CosignRefused) as exc_info:
            witness.sign_subtree(rng, log32.subtree_root(rng), log32.containment_proof(rng, 16),
                                 log32.checkpoint_at(16))

        assert exc_info.value.reason == "unknown_checkpoint"

    def test_not_contained(self, witness, log32):
        """Test refusal of a subtree root that is not in the checkpoint."""
        checkpoint = log32.checkpoint_at(32)
        witness.cosign(checkpoint, ConsistencyProof())
        rng = SubtreeRange(16, 32)

        with pytest.raises(CosignRefused) as exc_info:
            witness.sign_subtree(rng, bytes(32), log32.containment_proof(rng, 32), checkpoint)

        assert exc_info.value.reason == "not_contained"


class TestPolicy:
    @pytest.fixture
    def cosigners(self):
        keys = [seeded_key(f"p{i}") for i in range(3)]
        modes = [CosignerMode.WITNESS, CosignerMode.WITNESS, CosignerMode.MIRROR]
        return [Cosigner(parse_taid(f"32473.2.{i}"), k, m) for i, (k, m) in enumerate(zip(keys, modes))]

    @pytest.fixture
    def signed(self, cosigners, log32):
        checkpoint = log32.checkpoint_at(16)
        return checkpoint, [c.witness_cosign(checkpoint, ConsistencyProof()) for c in cosigners]

    def test_k_of_n(self, cosigners, signed):
        """Test acceptance with exactly k valid cosignatures and rejection below k."""
        checkpoint, cosigs = signed
        policy = AcceptancePolicy(2, trusted_from(cosigners))

        assert evaluate_policy(checkpoint, cosigs[:2], policy)
        assert not evaluate_policy(checkpoint, cosigs[:1], policy)

    def test_duplicates_count_once(self, cosigners, signed):
        """Test that repeated cosignatures from one cosigner do not reach k."""
        checkpoint, cosigs = signed
        policy = AcceptancePolicy(2, trusted_from(cosigners))

        assert not evaluate_policy(checkpoint, [cosigs[0], cosigs[0]], policy)

    def test_untrusted_and_mislabelled_are_ignored(self, cosigners, signed):
        """Test that unknown cosigners and wrong checkpoint sizes do not count."""
        checkpoint, cosigs = signed
        policy = AcceptancePolicy(1, trusted_from(cosigners[1:]))
        relabelled = Cosignature(cosigs[1].cosigner_id, cosigs[1].scheme, cosigs[1].signature, 15)

        assert not evaluate_policy(checkpoint, [cosigs[0], relabelled], policy)
        assert evaluate_policy(checkpoint, [cosigs[0], cosigs[1]], policy)

    def test_require_mirror(self, cosigners, signed):
        """Test that a mirror-requiring policy needs a mirror among the signers."""
        checkpoint, cosigs = signed
        policy = AcceptancePolicy(2, trusted_from(cosigners), require_mirror=True)

        assert not evaluate_policy(checkpoint, cosigs[:2], policy)
        assert evaluate_policy(checkpoint, [cosigs[0], cosigs[2]], policy)

    def test_policy_validation(self, cosigners):
        """Test rejection of impossible policies."""
        with pytest.raises(InvalidRequest):
            AcceptancePolicy(0, trusted_from(cosigners))
        with pytest.raises(InvalidRequest):
            AcceptancePolicy(4, trusted_from(cosigners))
        with pytest.raises(InvalidRequest):
            AcceptancePolicy(1, trusted_from(cosigners[:2]), require_mirror=True)

    def test_policy_dict_roundtrip(self, cosigners):
        """Test the JSON form of a policy."""
        policy = AcceptancePolicy(2, trusted_from(cosigners), require_mirror=True)

        assert AcceptancePolicy.from_dict(json.loads(json.dumps(policy.to_dict()))) == policy
