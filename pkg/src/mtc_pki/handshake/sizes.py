"""Analytic size model.

Recomputes the per-handshake certificate size comparison, the bandwidth
reduction of landmark certificates and the relying-party state cost from
scheme constants and proof depths. All numbers are arithmetic over the
constants in :data:`mtc_pki.codec.schemes.ALGORITHM_SIZES`; nothing here is
measured.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

from ..codec.certificate import PROOF_FRAMING_BYTES
from ..codec.schemes import ALGORITHM_SIZES, AlgorithmSizes
from ..merkle.hashing import HASH_SIZE

#: Subject, validity, extensions and DER framing of a certificate body.
BASE_CERT_BYTES = 200
#: Reference total for identity-based TLS, which carries no certificate.
IBE_TLS_TOTAL_BYTES = 5000
#: Per-verification cost used for the projected PQ X.509 chain, microseconds.
MLDSA65_VERIFY_US = 150.0


@dataclass(frozen=True)
class SizeModel:
    """Scheme constants plus the chain and proof shapes being compared."""

    algorithms: Dict[str, AlgorithmSizes] = field(default_factory=lambda: dict(ALGORITHM_SIZES))
    base_cert: int = BASE_CERT_BYTES
    chain_depth: int = 2
    sct_count: int = 2
    landmark_depth: int = 23
    standalone_depth: int = 12
    cosigners: int = 2
    proof_framing: int = PROOF_FRAMING_BYTES
    ibe_total: int = IBE_TLS_TOTAL_BYTES

    def alg(self, name: str) -> AlgorithmSizes:
        try:
            return self.algorithms[name]
        except KeyError:
            raise ValueError(f"no size constants for {name!r}") from None

    # X.509 -----------------------------------------------------------------

    def pq_x509_auth_overhead(self, name: str = "ml-dsa-65", depth: int | None = None,
                              scts: int | None = None) -> int:
        """Signature bytes of a chain of *depth* issuer signatures plus *scts* SCTs."""
        depth = self.chain_depth if depth is None else depth
        scts = self.sct_count if scts is None else scts
        sig = self.alg(name).signature
        return depth * sig + scts * sig

    def x509_total(self, name: str) -> int:
        # entity key plus the intermediate's key carried in the chain
        a = self.alg(name)
        return self.pq_x509_auth_overhead(name) + a.public_key + self.base_cert + a.public_key

    # MTC -------------------------------------------------------------------

    def hash_bytes(self, depth: int) -> int:
        return depth * HASH_SIZE

    def landmark_auth(self) -> int:
        return self.hash_bytes(self.landmark_depth) + self.proof_framing

    def standalone_auth(self, cosigner_alg: str) -> int:
        return (
            self.hash_bytes(self.standalone_depth)
            + self.proof_framing
            + self.cosigners * self.alg(cosigner_alg).signature
        )

    def mtc_total(self, auth: int, entity_alg: str) -> int:
        return auth + self.alg(entity_alg).public_key + self.base_cert

    def landmark_total(self, entity_alg: str) -> int:
        return self.mtc_total(self.landmark_auth(), entity_alg)

    def standalone_total(self, alg: str) -> int:
        return self.mtc_total(self.standalone_auth(alg), alg)

    def entity_key_delta(self, pq: str = "ml-dsa-65", classical: str = "ecdsa-p256") -> int:
        """Certificate growth when the entity key moves from *classical* to *pq*."""
        return self.alg(pq).public_key - self.alg(classical).public_key

    def certificate_verify_bytes(self, entity_alg: str) -> int:
        """CertificateVerify body: u16 scheme, u16 length, signature."""
        return 4 + self.alg(entity_alg).signature


def reduction(baseline: int, candidate: int) -> float:
    """Fractional saving of *candidate* over *baseline*; negative when larger."""
    return 1.0 - candidate / baseline


def max_landmarks(cert_lifetime: int, landmark_interval: int) -> int:
    """Landmarks a relying party keeps so every live certificate has one."""
    return math.ceil(cert_lifetime / landmark_interval) + 1


def projected_chain_verify_us(signatures: int = 4, per_verify_us: float = MLDSA65_VERIFY_US) -> float:
    return signatures * per_verify_us


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------

@dataclass
class Table:
    title: str
    headers: Tuple[str, ...]
    rows: List[Tuple] = field(default_factory=list)

    def add(self, *row) -> None:
        if len(row) != len(self.headers):
            raise ValueError(f"row has {len(row)} cells, table {self.title!r} has {len(self.headers)}")
        self.rows.append(tuple(row))

    def column(self, header: str) -> List:
        i = self.headers.index(header)
        return [row[i] for row in self.rows]

    def row(self, label: str) -> Tuple:
        for row in self.rows:
            if row[0] == label:
                return row
        raise KeyError(label)

    def to_markdown(self) -> str:
        def cell(value) -> str:
            if isinstance(value, float):
                return f"{value:.1%}" if -10 < value < 10 else f"{value:,.1f}"
            if isinstance(value, int):
                return f"{value:,}"
            return str(value)

        lines = [
            f"### {self.title}",
            "",
            "| " + " | ".join(self.headers) + " |",
            "|" + "|".join("---" for _ in self.headers) + "|",
        ]
        lines.extend("| " + " | ".join(cell(v) for v in row) + " |" for row in self.rows)
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.headers)
        writer.writerows(self.rows)
        return buf.getvalue()


def size_table(model: SizeModel | None = None) -> Table:
    """Per-handshake certificate size comparison."""
    m = model or SizeModel()
    table = Table(
        "Per-handshake certificate size",
        ("Scenario", "Auth overhead (B)", "Entity key (B)", "Base cert (B)", "Total (B)"),
    )
    for label, alg in (("ECDSA P-256", "ecdsa-p256"), ("Ed25519", "ed25519"), ("ML-DSA-65", "ml-dsa-65")):
        table.add(
            f"X.509 + {m.sct_count} SCTs ({label})",
            m.pq_x509_auth_overhead(alg), m.alg(alg).public_key, m.base_cert, m.x509_total(alg),
        )
    for label, alg in (("Ed25519", "ed25519"), ("ML-DSA-65", "ml-dsa-65")):
        table.add(
            f"MTC standalone ({label} x{m.cosigners})",
            m.standalone_auth(alg), m.alg(alg).public_key, m.base_cert, m.standalone_total(alg),
        )
    for label, alg in (("ECDSA P-256", "ecdsa-p256"), ("ML-DSA-65", "ml-dsa-65")):
        table.add(
            f"MTC landmark ({label} entity)",
            m.landmark_auth(), m.alg(alg).public_key, m.base_cert, m.landmark_total(alg),
        )
    return table


def bandwidth_table(model: SizeModel | None = None) -> Table:
    """Landmark certificates against the conventional baselines."""
    m = model or SizeModel()
    pq_landmark = m.landmark_total("ml-dsa-65")
    classical_landmark = m.landmark_total("ecdsa-p256")
    table = Table("Bandwidth reduction of landmark certificates", ("Comparison", "Baseline (B)", "MTC landmark (B)", "Reduction"))
    rows = (
        ("vs PQ X.509 (ML-DSA-65)", m.x509_total("ml-dsa-65"), pq_landmark),
        ("vs PQ X.509 (SLH-DSA-128f)", m.x509_total("slh-dsa-128f"), pq_landmark),
        ("vs classical X.509 (ECDSA P-256)", m.x509_total("ecdsa-p256"), classical_landmark),
        ("vs classical X.509 (Ed25519)", m.x509_total("ed25519"), classical_landmark),
        ("vs IBE-TLS", m.ibe_total, pq_landmark),
    )
    for label, baseline, mtc in rows:
        table.add(label, baseline, mtc, reduction(baseline, mtc))
    return table


def certificate_verify_table(model: SizeModel | None = None) -> Table:
    """Landmark authentication bytes with and without CertificateVerify.

    Dropping CertificateVerify removes proof of key possession; this table
    reports sizes only.
    """
    m = model or SizeModel()
    table = Table(
        "Landmark authentication with and without CertificateVerify",
        ("Entity key", "Certificate (B)", "CertificateVerify (B)", "With CV (B)", "Without CV (B)"),
    )
    for label, alg in (("ECDSA P-256", "ecdsa-p256"), ("Ed25519", "ed25519"), ("ML-DSA-65", "ml-dsa-65")):
        cert = m.landmark_total(alg)
        cv = m.certificate_verify_bytes(alg)
        table.add(label, cert, cv, cert + cv, cert)
    return table


@dataclass(frozen=True)
class RpEnvironment:
    name: str
    cert_lifetime: int
    landmark_interval: int
    hashes_per_landmark: int
    anchors: int = 1

    @property
    def landmarks(self) -> int:
        return max_landmarks(self.cert_lifetime, self.landmark_interval)

    @property
    def per_anchor(self) -> int:
        return self.landmarks * self.hashes_per_landmark * HASH_SIZE

    @property
    def total(self) -> int:
        return self.per_anchor * self.anchors


DAY = 86400

#: Deployments compared in the relying-party state table. A landmark covers at
#: most two subtrees; the satellite estimate keeps one hash per landmark.
RP_ENVIRONMENTS: Tuple[RpEnvironment, ...] = (
    RpEnvironment("K8s (1 CA, 1h landmarks)", DAY, 3600, 2),
    RpEnvironment("K8s (10 CAs)", DAY, 3600, 2, anchors=10),
    RpEnvironment("5G/6G (1 NRF, 10min landmarks)", DAY, 600, 2),
    RpEnvironment("5G/6G (5 PLMNs roaming)", DAY, 600, 2, anchors=5),
    RpEnvironment("LEO constellation (1,000 satellites, 1h landmarks)", DAY, 3600, 1, anchors=1000),
)


def rp_state_table(environments: Sequence[RpEnvironment] = RP_ENVIRONMENTS) -> Table:
    table = Table(
        "Relying party landmark state",
        ("Environment", "Active landmarks", "Per CA (B)", "Total (B)"),
    )
    for env in environments:
        table.add(env.name, env.landmarks, env.per_anchor, env.total)
    return table


def projection_table(model: SizeModel | None = None) -> Table:
    """Projected effect of a post-quantum entity key and a PQ X.509 chain."""
    m = model or SizeModel()
    table = Table("Projected post-quantum figures", ("Quantity", "Value"))
    table.add("ML-DSA-65 entity key growth (B)", m.entity_key_delta())
    table.add("PQ X.509 chain verification (us)", projected_chain_verify_us())
    table.add("Landmark proof hash bytes at depth 23", m.hash_bytes(23))
    table.add("max_landmarks (24h lifetime, 10min interval)", max_landmarks(DAY, 600))
    return table


def all_tables(model: SizeModel | None = None) -> List[Table]:
    m = model or SizeModel()
    return [
        size_table(m),
        bandwidth_table(m),
        certificate_verify_table(m),
        rp_state_table(),
        projection_table(m),
    ]


def render(tables: Sequence[Table], fmt: str = "markdown") -> str:
    if fmt == "csv":
        return "\n".join(f"# {t.title}\n{t.to_csv()}" for t in tables)
    if fmt == "markdown":
        return "\n".join(t.to_markdown() for t in tables)
    raise ValueError(f"unknown table format {fmt!r}")
