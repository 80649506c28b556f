"""Verification and handshake microbenchmarks.

Each scenario builds an in-memory log whose width matches the scenario,
issues the server certificate into it and times three things with a
monotonic clock: certificate-path verification, CertificateVerify checking
and a full loopback handshake. Every scenario uses an ECDSA P-256 entity key.

The classical baseline is a one-leaf log whose checkpoint is signed by a
single ECDSA issuer key, so its certificate path costs exactly one
signature verification and two hashes.
"""
from __future__ import annotations

import csv
import hashlib
import io
import platform
import statistics
import sys
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

from ..ca.authority import TrustConfig
from ..codec.certificate import Cosignature, MTCCertificate, MTCProof, encode_certificate
from ..codec.entries import TBSCertEntry, entry_hash
from ..codec.schemes import KeyPair, SignatureSchemeId, registry
from ..codec.taid import TrustAnchorID, parse_taid
from ..cosigner.core import AcceptancePolicy, CosignerInfo, CosignerMode
from ..distributor.agent import LandmarkStore
from ..errors import InvalidRequest
from ..logging.logger import get_logger
from ..merkle.hashing import leaf_hash
from ..merkle.log import MerkleLog
from ..merkle.proofs import SubtreeRange
from ..relying.verifier import CertificateInventory, RelyingTrust, verify_certificate
from .session import (
    ServerIdentity,
    certificate_verify_message,
    check_certificate_verify,
    encode_certificate_verify,
    run_handshake,
)
from .sizes import SizeModel

logger = get_logger()

BENCH_LOG_ID = parse_taid("32473")
LANDMARK_NUMBER = 1
COSIGNER_COUNT = 2

#: name -> (tree width, landmark certificate?)
SCENARIOS: Dict[str, tuple[int, bool]] = {
    "classical-ecdsa": (1, False),
    "standalone-16": (16, False),
    "landmark-16": (16, True),
    "landmark-1024": (1024, True),
    "landmark-4096": (4096, True),
}

DEFAULT_ITERATIONS = 1000
DEFAULT_WARMUP = 100


@dataclass
class ScenarioFixture:
    name: str
    width: int
    certificate: MTCCertificate
    client: RelyingTrust
    server: ServerIdentity
    now: int

    @property
    def is_landmark(self) -> bool:
        return self.certificate.is_landmark


def _seed(label: str) -> bytes:
    return (label.encode() * 32)[:32]


def build_fixture(name: str, now: Optional[int] = None, log_id: TrustAnchorID = BENCH_LOG_ID) -> ScenarioFixture:
    """Deterministic log, keys, trust material and certificates for one scenario."""
    if name not in SCENARIOS:
        raise InvalidRequest(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    width, landmark = SCENARIOS[name]
    now = int(time.time()) if now is None else now
    classical = name == "classical-ecdsa"

    entity = KeyPair.generate(SignatureSchemeId.ECDSA_P256, _seed(f"entity-{name}"))
    entry = TBSCertEntry.for_key(
        "bench.mtc.internal", ("bench.mtc.internal",), now - 60, now + 86400,
        entity.scheme, entity.public_key,
    )
    target = width - 1
    log = MerkleLog()
    for i in range(width):
        log.append(entry_hash(entry) if i == target else leaf_hash(f"filler-{i}".encode()))
    checkpoint = log.checkpoint()

    if classical:
        signers = [(log_id.child(99), KeyPair.generate(SignatureSchemeId.ECDSA_P256, _seed("issuer")))]
    else:
        signers = [
            (log_id.child(10 + i), KeyPair.generate(SignatureSchemeId.ED25519, _seed(f"cosigner-{i}")))
            for i in range(COSIGNER_COUNT)
        ]
    infos = tuple(CosignerInfo(cid, key.scheme, key.public_key, CosignerMode.WITNESS) for cid, key in signers)
    cosigs = tuple(
        Cosignature(cid, key.scheme, key.sign(checkpoint.message()), checkpoint.size) for cid, key in signers
    )
    whole = SubtreeRange(0, width)
    standalone = MTCCertificate(
        log_id, target, entry, entity.public_key,
        MTCProof(whole, log.inclusion_proof(target, whole), cosigs),
    )
    inventory = CertificateInventory(standalone)
    store = LandmarkStore(log_id)
    cert = standalone
    if landmark:
        cert = MTCCertificate(
            log_id, target, entry, entity.public_key,
            MTCProof(whole, log.inclusion_proof(target, whole), ()),
        )
        inventory.add_landmark(LANDMARK_NUMBER, cert)
        store.install(LANDMARK_NUMBER, [(whole, log.subtree_root(whole))])

    config = TrustConfig(log_id, AcceptancePolicy(len(infos), infos), log_id.child(1))
    return ScenarioFixture(
        name, width, cert,
        RelyingTrust.build(config, store if landmark else None),
        ServerIdentity(inventory, entity),
        now,
    )


@dataclass
class Timing:
    median_us: float
    p95_us: float
    iterations: int

    @classmethod
    def measure(cls, fn: Callable[[], object], iterations: int, warmup: int) -> "Timing":
        for _ in range(warmup):
            fn()
        samples = []
        for _ in range(iterations):
            start = time.perf_counter_ns()
            fn()
            samples.append(time.perf_counter_ns() - start)
        p95 = statistics.quantiles(samples, n=20)[18] if len(samples) > 1 else samples[0]
        return cls(statistics.median(samples) / 1000, p95 / 1000, iterations)


@dataclass
class BenchRow:
    scenario: str
    cert_bytes: int
    proof_bytes: int
    hash_ops: int
    cert_path_verifications: int
    verify: Timing
    certverify: Timing
    handshake: Optional[Timing]
    handshake_bytes: int
    handshake_bytes_without_cv: Optional[int] = None

    def flat(self) -> Dict[str, object]:
        out: Dict[str, object] = {
            "scenario": self.scenario,
            "cert_bytes": self.cert_bytes,
            "proof_bytes": self.proof_bytes,
            "hash_ops": self.hash_ops,
            "cert_path_verifications": self.cert_path_verifications,
            "verify_median_us": round(self.verify.median_us, 3),
            "verify_p95_us": round(self.verify.p95_us, 3),
            "certverify_median_us": round(self.certverify.median_us, 3),
            "certverify_p95_us": round(self.certverify.p95_us, 3),
            "handshake_median_us": round(self.handshake.median_us, 1) if self.handshake else "",
            "handshake_p95_us": round(self.handshake.p95_us, 1) if self.handshake else "",
            "handshake_bytes": self.handshake_bytes,
            "handshake_bytes_without_cv": (
                self.handshake_bytes_without_cv if self.handshake_bytes_without_cv is not None else ""
            ),
        }
        return out


def host_metadata() -> Dict[str, str]:
    return {
        "platform": platform.platform(),
        "machine": platform.machine(),
        "processor": platform.processor() or "unknown",
        "python": sys.version.split()[0],
        "implementation": platform.python_implementation(),
    }


@dataclass
class BenchReport:
    rows: List[BenchRow]
    environment: Dict[str, str] = field(default_factory=host_metadata)

    def row(self, scenario: str) -> BenchRow:
        for row in self.rows:
            if row.scenario == scenario:
                return row
        raise KeyError(scenario)

    def projected_mldsa(self, model: SizeModel | None = None) -> List[Dict[str, object]]:
        """Certificate size of each scenario with an ML-DSA-65 entity key instead of ECDSA."""
        delta = (model or SizeModel()).entity_key_delta()
        return [
            {"scenario": f"{r.scenario} (ML-DSA-65 entity, projected)", "cert_bytes": r.cert_bytes + delta}
            for r in self.rows
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        flat = [r.flat() for r in self.rows]
        writer = csv.DictWriter(buf, fieldnames=list(flat[0]) if flat else ["scenario"], lineterminator="\n")
        writer.writeheader()
        writer.writerows(flat)
        return buf.getvalue()

    def to_markdown(self) -> str:
        lines = [
            "### Verification and handshake benchmark",
            "",
            "| Scenario | Cert (B) | Proof (B) | Hash ops | Verify (us) | CertVerify (us) | Handshake (us) | Handshake bytes |",
            "|---|---|---|---|---|---|---|---|",
        ]
        for r in self.rows:
            hs = f"{r.handshake.median_us:,.1f}" if r.handshake else "-"
            proof = f"{r.proof_bytes:,}" if r.proof_bytes else "-"
            lines.append(
                f"| {r.scenario} | {r.cert_bytes:,} | {proof} | {r.hash_ops} | "
                f"{r.verify.median_us:.3f} | {r.certverify.median_us:.3f} | {hs} | {r.handshake_bytes:,} |"
            )
        if any(r.handshake_bytes_without_cv is not None for r in self.rows):
            lines += ["", "Without CertificateVerify (sizes only):", ""]
            lines += [
                f"- {r.scenario}: {r.handshake_bytes_without_cv:,} B"
                for r in self.rows if r.handshake_bytes_without_cv is not None
            ]
        lines += ["", "Projected with an ML-DSA-65 entity key:", ""]
        lines += [f"- {p['scenario']}: {p['cert_bytes']:,} B" for p in self.projected_mldsa()]
        lines += ["", "Host: " + ", ".join(f"{k}={v}" for k, v in self.environment.items())]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "environment": self.environment,
            "rows": [r.flat() for r in self.rows],
            "projected": self.projected_mldsa(),
        }


def _cert_path_count(counts: Dict[str, int]) -> int:
    return sum(v for k, v in counts.items() if k != "certificate_verify")


def bench_scenario(
    name: str,
    iterations: int = DEFAULT_ITERATIONS,
    warmup: int = DEFAULT_WARMUP,
    handshake_iterations: Optional[int] = None,
    without_certificate_verify: bool = False,
) -> BenchRow:
    fx = build_fixture(name)
    cert = fx.certificate

    before = registry.counts()
    outcome = verify_certificate(cert, fx.client, fx.now)
    after = registry.counts()
    if not outcome.accepted:
        raise RuntimeError(f"scenario {name}: fixture certificate rejected ({outcome.reason.value})")
    cert_path = _cert_path_count({k: after[k] - before.get(k, 0) for k in after})

    verify_time = Timing.measure(lambda: verify_certificate(cert, fx.client, fx.now), iterations, warmup)

    prior = [b"\x01" * 64, b"\x02" * 96, encode_certificate(cert)]
    signature = fx.server.key.sign(certificate_verify_message(hashlib.sha256(b"".join(prior)).digest()))
    cv_body = encode_certificate_verify(fx.server.key.scheme, signature)
    certverify_time = Timing.measure(
        lambda: check_certificate_verify(prior, cv_body, cert), iterations, warmup
    )

    hs_iterations = iterations if handshake_iterations is None else handshake_iterations
    handshake_time = None
    if hs_iterations > 0:
        handshake_time = Timing.measure(
            lambda: run_handshake(fx.client, fx.server, fx.now), hs_iterations, min(warmup, hs_iterations)
        )
    sample = run_handshake(fx.client, fx.server, fx.now)
    without_cv = None
    if without_certificate_verify:
        without_cv = run_handshake(fx.client, fx.server, fx.now, skip_certificate_verify=True).bytes_on_wire

    row = BenchRow(
        scenario=name,
        cert_bytes=cert.encoded_size,
        proof_bytes=cert.proof.inclusion.byte_size,
        hash_ops=outcome.hash_ops,
        cert_path_verifications=cert_path,
        verify=verify_time,
        certverify=certverify_time,
        handshake=handshake_time,
        handshake_bytes=sample.bytes_on_wire,
        handshake_bytes_without_cv=without_cv,
    )
    logger.info(
        "Bench %s: verify median %.3fus, %d hash op(s), %d certificate-path signature check(s)",
        name, verify_time.median_us, row.hash_ops, cert_path,
    )
    return row


def bench(
    scenarios: Sequence[str] = tuple(SCENARIOS),
    iterations: int = DEFAULT_ITERATIONS,
    warmup: int = DEFAULT_WARMUP,
    handshake_iterations: Optional[int] = None,
    without_certificate_verify: bool = False,
) -> BenchReport:
    if not scenarios:
        raise InvalidRequest("at least one scenario is required")
    unknown = [s for s in scenarios if s not in SCENARIOS]
    if unknown:
        raise InvalidRequest(f"unknown scenario(s): {', '.join(unknown)}")
    rows = [
        bench_scenario(s, iterations, warmup, handshake_iterations, without_certificate_verify)
        for s in scenarios
    ]
    return BenchReport(rows)


def render(report: BenchReport, fmt: str = "markdown") -> str:
    if fmt == "csv":
        return report.to_csv()
    if fmt == "markdown":
        return report.to_markdown()
    raise ValueError(f"unknown report format {fmt!r}")

