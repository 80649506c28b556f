"""Tests for the mirror replica: sync, withholding, root mismatch alarms and tiles."""
import pytest

from conftest import seeded_key
from mtc_pki.codec.taid import parse_taid
from mtc_pki.cosigner.core import Cosigner, CosignerMode
from mtc_pki.errors import LogRangeError, ProofUnavailable
from mtc_pki.merkle.hashing import leaf_hash, node_hash
from mtc_pki.merkle.log import MerkleLog
from mtc_pki.merkle.proofs import Checkpoint, SubtreeRange, compact_root, verify_consistency, verify_inclusion
from mtc_pki.mirror.replica import TILE_WIDTH, MirrorReplica
from mtc_pki.mirror.web import SERVICE_KEY, bp_mirror
from mtc_pki.web.server import create_app


class ListLog:
    """Uncosigned log source over plain byte entries."""

    def __init__(self, count, tag=b"entry"):
        self.items = [tag + b"-%d" % i for i in range(count)]
        self.log = MerkleLog()
        for item in self.items:
            self.log.append(leaf_hash(item))
        self.root_override = None

    def checkpoint(self):
        cp = self.log.checkpoint()
        if self.root_override is not None:
            cp = Checkpoint(self.root_override, cp.size)
        return cp, ()

    def fetch_entries(self, start, end):
        return self.items[start:end]


@pytest.fixture
def big_source():
    return ListLog(300)


@pytest.fixture
def synced(tmp_path, big_source):
    replica = MirrorReplica(tmp_path / "mirror")
    replica.sync(big_source)
    return replica


class TestSync:
    def test_sync_from_ca(self, issued):
        """Test a replica following a CA under its acceptance policy."""
        ca, _ = issued
        replica = MirrorReplica(policy=ca.trust_config().policy)

        result = replica.sync(ca)

        assert result.synced_size == 8 and result.fetched == 8 and result.alarm is None
        assert replica.get_checkpoint() == ca.checkpoint()
        assert replica.sync(ca).fetched == 0

    def test_withheld_entry_blocks_progress(self, issued):
        """Test that a withheld entry stops the sync short of publishing."""
        ca, _ = issued
        replica = MirrorReplica(policy=ca.trust_config().policy)
        ca.withhold(3)

        result = replica.sync(ca)

        assert result.synced_size == 0
        assert result.fetched == 3
        ca.release(3)
        assert replica.sync(ca).synced_size == 8

    def test_policy_failure(self, issued, big_source):
        """Test that a checkpoint without enough cosignatures is not followed."""
        ca, _ = issued
        replica = MirrorReplica(policy=ca.trust_config().policy)

        assert replica.sync(big_source).synced_size == 0

    def test_root_mismatch_freezes(self, big_source):
        """Test that a source root that does not match its entries raises the alarm."""
        replica = MirrorReplica()
        big_source.root_override = bytes(32)

        result = replica.sync(big_source)

        assert result.alarm == "root_mismatch"
        assert replica.frozen
        with pytest.raises(ProofUnavailable):
            replica.get_entry(0)
        assert replica.sync(big_source).alarm == "root_mismatch"

        big_source.root_override = None
        replica.clear_alarm()
        assert replica.sync(big_source).synced_size == 300

    def test_fork_at_same_size(self, synced, big_source):
        """Test that a different root at the synced size raises the alarm."""
        big_source.root_override = bytes(32)

        assert synced.sync(big_source).alarm == "root_mismatch"

    def test_incremental_sync(self):
        """Test that a later sync only fetches the new entries."""
        source = ListLog(300)
        source.log = MerkleLog()
        for item in source.items[:100]:
            source.log.append(leaf_hash(item))
        replica = MirrorReplica()
        replica.sync(source)
        for item in source.items[100:]:
            source.log.append(leaf_hash(item))

        result = replica.sync(source)

        assert result.fetched == 200
        assert replica.log.checkpoint() == source.log.checkpoint()

    def test_restart(self, tmp_path, synced):
        """Test that a reopened replica keeps its published checkpoint."""
        reopened = MirrorReplica(tmp_path / "mirror")

        assert reopened.synced_size == 300
        assert reopened.get_checkpoint() == synced.get_checkpoint()

    def test_mirror_adds_own_cosignature(self, tmp_path, issued):
        """Test that a mirror cosigner signs checkpoints it has replayed."""
        ca, _ = issued
        cosigner = Cosigner(parse_taid("32473.3.1"), seeded_key("mirror"), CosignerMode.MIRROR,
                            state_dir=tmp_path / "mc")
        replica = MirrorReplica(policy=ca.trust_config().policy, cosigner=cosigner)

        replica.sync(ca)

        _, cosigs = replica.get_checkpoint()
        assert [str(c.cosigner_id) for c in cosigs] == ["32473.2.1", "32473.2.2", "32473.3.1"]


class TestReads:
    def test_proofs_within_frontier(self, synced, big_source):
        """Test proofs served by the replica verify against the source log."""
        rng = SubtreeRange(256, 288)
        proof = synced.get_inclusion_proof(270, rng)
        consistency = synced.get_consistency_proof(100, 300)
        root, containment = synced.get_subtree_proof(rng, 300)

        assert verify_inclusion(leaf_hash(big_source.items[270]), 270, proof, rng, root)
        assert verify_consistency(big_source.log.checkpoint_at(100), big_source.log.checkpoint(), consistency)
        assert len(containment) > 0

    def test_reads_beyond_frontier(self, synced):
        """Test that reads beyond the synced size are refused."""
        with pytest.raises(ProofUnavailable):
            synced.get_consistency_proof(10, 301)
        with pytest.raises(LogRangeError):
            synced.get_entry(300)

    def test_tiles(self, synced):
        """Test level-0 and level-1 tiles."""
        level0 = synced.get_tile(0, 0)
        partial = synced.get_tile(0, 1)
        level1 = synced.get_tile(1, 0)

        assert level0.is_full
        assert len(partial.hashes) == 300 - TILE_WIDTH
        assert not partial.is_full
        assert len(level1.hashes) == 150
        assert level1.hashes[0] == node_hash(level0.hashes[0], level0.hashes[1])
        with pytest.raises(LogRangeError):
            synced.get_tile(0, 2)

    def test_compact_root(self, big_source):
        """Test the frontier-based root computation."""
        leaves = [big_source.log.leaf_at(i) for i in range(300)]

        assert compact_root([], leaves) == big_source.log.checkpoint().root


class TestWeb:
    @pytest.fixture
    def client(self, synced):
        app = create_app("mirror", [bp_mirror], {SERVICE_KEY: synced})
        app.config["TESTING"] = True
        return app.test_client()

    def test_full_tile_is_cacheable(self, client):
        """Test that a full tile carries an ETag and answers 304 on revalidation."""
        response = client.get("/tile/0/0")

        assert response.status_code == 200
        assert len(response.data) == TILE_WIDTH * 32
        assert "immutable" in response.headers["Cache-Control"]
        again = client.get("/tile/0/0", headers={"If-None-Match": response.headers["ETag"]})
        assert again.status_code == 304

    def test_partial_tile_not_cached(self, client):
        """Test that a partial tile is served no-store."""
        response = client.get("/tile/0/1")

        assert response.headers["Cache-Control"] == "no-store"
        assert len(response.data) == (300 - TILE_WIDTH) * 32

    def test_checkpoint_and_entry(self, client, big_source):
        """Test the checkpoint and entry endpoints."""
        checkpoint = client.get("/checkpoint").get_json()
        entry = client.get("/entry/7").get_json()

        assert checkpoint["checkpoint"]["size"] == 300
        assert checkpoint["alarm"] is None
        assert bytes.fromhex(entry["entry"]) == big_source.items[7]
        assert client.get("/entry/300").status_code == 404

    def test_proof_endpoints(self, client):
        """Test proof endpoints and their validation."""
        assert len(client.get("/proof/inclusion?index=3&start=0&end=16").get_json()["proof"]) == 4
        assert client.get("/proof/subtree?start=0&end=256&size=300").status_code == 200
        assert client.get("/proof/inclusion?index=3&start=9&end=2").status_code == 400
        assert client.get("/proof/consistency?old=1&new=400").status_code == 410
