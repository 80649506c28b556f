"""End-to-end lifecycle run with every role in one process.

Two witnesses, a mirror and the CA listen on loopback ports; the distributor
and the relying party run in-process against them. Each stage prints one line
and the first failing stage aborts the run with :class:`DemoStageError`.
"""
from __future__ import annotations

import socket
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

from .ca.client import CaClient
from .codec.schemes import KeyPair, SignatureSchemeId
from .config.manager import AppConfig
from .errors import HandshakeFailure, MTCError
from .handshake.session import ServerIdentity, run_handshake
from .logging.logger import get_logger
from .relying.revocation import RevokedRanges
from .relying.verifier import CertificateInventory, RelyingTrust
from .roles import RoleService, build_ca, build_cosigner, build_distributor, build_mirror, read_token
from .utils.helpers import save_json

logger = get_logger()

FAIL_INJECTIONS = ("withhold-entry",)
SERVER_NAME = "amf.5gc.mnc001.mcc001.3gppnetwork.org"
#: Other certificates issued around the demo server's, so the tree has some depth.
FILLER_CERTS = 6


class DemoStageError(RuntimeError):
    def __init__(self, stage: str, message: str) -> None:
        super().__init__(f"stage {stage!r} failed: {message}")
        self.stage = stage


@dataclass
class DemoReport:
    stages: List[str] = field(default_factory=list)
    handshake_mode: str = ""
    rejected_reason: str = ""
    mirror_refusal: Optional[str] = None
    elapsed: float = 0.0


def _free_port() -> int:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class _Deployment:
    """The running roles plus the helpers stages share."""

    def __init__(self, base: Path) -> None:
        self.base = base
        self.roles: List[RoleService] = []
        self.ca_port = _free_port()
        self.ca_url = f"http://127.0.0.1:{self.ca_port}"
        self.token_file = base / "admission_token.txt"
        self.landmarks_file = base / "landmarks.json"
        self.trust_file = base / "trust-config.json"
        self.client: Optional[CaClient] = None

    def _config(self, name: str, **overrides) -> AppConfig:
        return AppConfig(
            DataDir=str(self.base / name),
            KeyFile=str(self.base / name / "key.json"),
            AdmissionTokenFile=str(self.token_file),
            LandmarksFile=str(self.landmarks_file),
            CaUrl=self.ca_url,
            # stages drive every periodic task explicitly
            SyncIntervalSeconds=3600,
            DistributorIntervalSeconds=3600,
            LandmarkIntervalSeconds=3600,
            CheckpointIntervalSeconds=0,
        ).merged(overrides)

    def _run(self, role: RoleService, listen: str = "127.0.0.1:0") -> RoleService:
        self.roles.append(role.start(listen))
        return role

    def start(self) -> None:
        w1 = self._run(build_cosigner(self._config("witness-1", CosignerId="32473.2.1")))
        w2 = self._run(build_cosigner(self._config("witness-2", CosignerId="32473.2.2")))
        self.mirror = self._run(build_mirror(self._config("mirror", CosignerId="32473.3.1", MirrorCosign=True)))
        self.ca_role = self._run(
            build_ca(self._config(
                "ca",
                PolicyK=2,
                RequireMirror=True,
                CosignerUrls=[w1.url, w2.url, self.mirror.url],
            )),
            f"127.0.0.1:{self.ca_port}",
        )
        self.ca = self.ca_role.components["ca"]
        self.client = CaClient(self.ca_url, read_token(self.token_file))

    def sync_mirror(self) -> int:
        self.mirror.workers[0].run_once()
        return self.mirror.components["replica"].synced_size

    def distributor(self) -> RoleService:
        cfg = self._config("distributor", MirrorUrl=self.mirror.url)
        role = build_distributor(cfg, policy_file=self.trust_file)
        self.roles.append(role)
        return role

    def stop(self) -> None:
        for role in reversed(self.roles):
            role.stop()
        if self.client is not None:
            self.client.close()


def run_demo(
    data_dir: Optional[Path] = None,
    fail_inject: Optional[str] = None,
    stale_distributor: bool = False,
    emit: Callable[[str], None] = print,
) -> DemoReport:
    """Issuance, cosigning, mirror sync, landmark allocation, distribution,
    landmark handshake, revocation and the rejected handshake that follows."""
    if fail_inject is not None and fail_inject not in FAIL_INJECTIONS:
        raise ValueError(f"unknown fault injection {fail_inject!r}")
    started = time.perf_counter()
    base = Path(data_dir) if data_dir is not None else Path(tempfile.mkdtemp(prefix="mtc-demo-"))
    base.mkdir(parents=True, exist_ok=True)
    report = DemoReport()
    stage = "startup"

    def step(name: str, message: str) -> None:
        report.stages.append(name)
        emit(f"[{name}] {message}")

    deployment = _Deployment(base)
    try:
        deployment.start()
        step(stage, f"CA {deployment.ca_url}, mirror {deployment.mirror.url}, data in {base}")
        client = deployment.client
        save_json(deployment.trust_file, client.trust_config().to_dict())

        stage = "issuance"
        server_key = KeyPair.generate(SignatureSchemeId.ECDSA_P256)
        for i in range(FILLER_CERTS // 2):
            filler = KeyPair.generate(SignatureSchemeId.ED25519)
            client.issue(f"nf-{i}.5gc.internal", [f"nf-{i}.5gc.internal"], "ed25519", filler.public_key)
        cert = client.issue(SERVER_NAME, [SERVER_NAME], "ecdsa-p256", server_key.public_key)
        for i in range(FILLER_CERTS // 2, FILLER_CERTS):
            filler = KeyPair.generate(SignatureSchemeId.ED25519)
            client.issue(f"nf-{i}.5gc.internal", [f"nf-{i}.5gc.internal"], "ed25519", filler.public_key)
        step(stage, f"standalone certificate for {SERVER_NAME} at index {cert.index} "
                    f"({cert.encoded_size} B)")

        stage = "cosign"
        checkpoint, cosigs = client.checkpoint()
        step(stage, f"checkpoint size {checkpoint.size} carries {len(cosigs)} cosignature(s): "
                    + ", ".join(str(c.cosigner_id) for c in cosigs))

        if fail_inject == "withhold-entry":
            stage = "mirror-refusal"
            victim = deployment.ca.log.size
            deployment.ca.withhold(victim)
            try:
                client.issue("withheld.5gc.internal", ["withheld.5gc.internal"], "ed25519",
                             KeyPair.generate(SignatureSchemeId.ED25519).public_key)
            except MTCError as exc:
                report.mirror_refusal = exc.code
            else:
                raise DemoStageError(stage, "issuance succeeded although the entry was withheld")
            finally:
                deployment.ca.release(victim)
            if victim not in deployment.ca.revoked:
                raise DemoStageError(stage, f"index {victim} was not voided")
            step(stage, f"mirror refused to cosign with entry {victim} withheld; issuance "
                        f"failed with {report.mirror_refusal} and index {victim} was voided")

        stage = "mirror-sync"
        synced = deployment.sync_mirror()
        if synced != checkpoint.size:
            raise DemoStageError(stage, f"mirror at size {synced}, CA at {checkpoint.size}")
        step(stage, f"mirror replicated {synced} entries and verified the root")

        stage = "landmark"
        record = deployment.ca.allocate_landmark()
        if record is None:
            raise DemoStageError(stage, "no landmark allocated")
        landmark_cert = client.landmark_certificate(cert.index, record.number)
        step(stage, f"landmark {record.number} at tree size {record.tree_size}; landmark certificate "
                    f"{landmark_cert.encoded_size} B with {landmark_cert.proof.inclusion.byte_size} proof bytes")

        stage = "distribute"
        distributor = None
        if stale_distributor:
            step(stage, "distributor not run; the relying party keeps no landmarks")
        else:
            distributor = deployment.distributor().components["distributor"]
            delta = distributor.run_once()
            if delta is None or record.number not in delta.installed:
                raise DemoStageError(stage, f"landmark {record.number} not installed ({delta})")
            step(stage, f"installed landmark(s) {delta.installed} into {deployment.landmarks_file}")

        stage = "handshake"
        trust = RelyingTrust.from_files(
            deployment.trust_file, None if stale_distributor else deployment.landmarks_file
        )
        inventory = CertificateInventory(cert)
        inventory.add_landmark(record.number, landmark_cert)
        server = ServerIdentity(inventory, server_key)
        try:
            result = run_handshake(trust, server)
        except HandshakeFailure as exc:
            raise DemoStageError(stage, f"handshake rejected: {exc.reason}") from None
        expected = "standalone" if stale_distributor else "landmark"
        if result.mode != expected:
            raise DemoStageError(stage, f"expected {expected} authentication, got {result.mode}")
        report.handshake_mode = result.mode
        step(stage, f"accepted via {result.mode} ({result.bytes_on_wire} B on the wire, "
                    f"{sum(result.cert_path_verifications.values())} certificate-path signature check(s))")

        stage = "revoke"
        revoked = client.revoke(cert.index, cert.index + 1)
        if distributor is not None:
            distributor.run_once()
            trust = RelyingTrust.from_files(deployment.trust_file, deployment.landmarks_file)
        else:
            trust = RelyingTrust.build(trust.trust_config, extra_revoked=RevokedRanges(revoked))
        step(stage, f"revoked index {cert.index}; CA revocation list {revoked}")

        stage = "rejected-handshake"
        try:
            run_handshake(trust, server)
        except HandshakeFailure as exc:
            if exc.reason != "revoked":
                raise DemoStageError(stage, f"rejected for {exc.reason}, expected revoked") from None
            report.rejected_reason = exc.reason
        else:
            raise DemoStageError(stage, "revoked certificate was accepted")
        step(stage, "handshake rejected: revoked")
    except DemoStageError:
        raise
    except Exception as exc:
        logger.exception("Demo stage %s failed", stage)
        raise DemoStageError(stage, str(exc)) from exc
    finally:
        deployment.stop()
    report.elapsed = time.perf_counter() - started
    emit(f"[done] {len(report.stages)} stage(s) in {report.elapsed:.2f}s")
    return report


def stage_summary(report: DemoReport) -> Dict[str, object]:
    return {
        "stages": report.stages,
        "handshake_mode": report.handshake_mode,
        "rejected_reason": report.rejected_reason,
        "mirror_refusal": report.mirror_refusal,
        "elapsed": round(report.elapsed, 3),
    }
