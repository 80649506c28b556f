"""Assembly of the long-running roles.

Turns an :class:`AppConfig` into a running CA, cosigner, mirror or
distributor: the domain object, its Flask app, its background workers and
the hooks that flush state on shutdown. The CLI runs one role per process;
the demo runs all of them in one process on distinct ports.
"""
from __future__ import annotations

import secrets
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

from flask import Flask

from .ca.authority import (
    CertificateAuthority,
    CosignerPeer,
    IssuancePolicy,
    TrustConfig,
    derive_max_landmarks,
)
from .ca.client import CaClient
from .ca.web import SERVICE_KEY as CA_KEY
from .ca.web import bp_ca
from .codec.schemes import SignatureSchemeId, load_or_create_keypair
from .codec.taid import parse_taid
from .config.manager import AppConfig
from .config.web import SERVICE_KEY as CONFIG_KEY
from .config.web import bp_config
from .cosigner.client import CosignerClient, RemoteCosigner
from .cosigner.core import Cosigner, CosignerMode, EntrySource
from .cosigner.web import SERVICE_KEY as COSIGNER_KEY
from .cosigner.web import bp_cosigner
from .distributor.agent import LandmarkDistributor
from .errors import InvalidRequest, MTCError
from .logging.logger import get_logger
from .mirror.client import MirrorClient
from .mirror.replica import LogSource, MirrorReplica
from .mirror.web import SERVICE_KEY as MIRROR_KEY
from .mirror.web import bp_mirror
from .utils.helpers import load_json
from .utils.worker import PeriodicWorker
from .web.server import ServiceServer, create_app, parse_listen

logger = get_logger()


def read_token(path: Path, create: bool = False) -> str:
    """Read the admission token; with *create*, generate one if the file is missing."""
    path = Path(path)
    if path.exists():
        token = path.read_text(encoding="utf-8").strip()
        if token:
            return token
    if not create:
        raise InvalidRequest(f"admission token file {path} is missing or empty")
    path.parent.mkdir(parents=True, exist_ok=True)
    token = secrets.token_urlsafe(32)
    path.write_text(token + "\n", encoding="utf-8")
    path.chmod(0o600)
    logger.info("Generated a new admission token in %s", path)
    return token


@dataclass
class RoleService:
    """One role: optional HTTP app plus background workers."""

    role: str
    app: Optional[Flask]
    workers: List[PeriodicWorker] = field(default_factory=list)
    on_stop: List[Callable[[], None]] = field(default_factory=list)
    components: Dict[str, Any] = field(default_factory=dict)
    server: Optional[ServiceServer] = None

    @property
    def url(self) -> str:
        return self.server.url if self.server is not None else ""

    def start(self, listen: str = "127.0.0.1:0") -> "RoleService":
        if self.app is not None:
            host, port = parse_listen(listen)
            self.server = ServiceServer(self.app, host, port).start()
        for worker in self.workers:
            worker.start()
        return self

    def run_until(self, stop: threading.Event, listen: str) -> None:
        """Run until *stop* is set (by a signal handler), then shut down cleanly."""
        self.start(listen)
        try:
            stop.wait()
        finally:
            self.stop()

    def stop(self) -> None:
        for worker in self.workers:
            worker.stop()
        if self.server is not None:
            self.server.stop()
            self.server = None
        for hook in self.on_stop:
            try:
                hook()
            except Exception:
                logger.exception("%s shutdown hook failed", self.role)
        logger.info("%s role stopped", self.role)


def _data_dir(cfg: AppConfig) -> Path:
    if not cfg.DataDir:
        raise InvalidRequest("a data directory is required (--data-dir)")
    return Path(cfg.DataDir)


def issuance_policy(cfg: AppConfig, admission_token: str) -> IssuancePolicy:
    return IssuancePolicy(
        checkpoint_interval=float(cfg.CheckpointIntervalSeconds),
        landmark_interval=int(cfg.LandmarkIntervalSeconds),
        max_landmarks=int(cfg.MaxLandmarks),
        cert_lifetime=int(cfg.CertLifetimeSeconds),
        admission_token=admission_token,
        cosign_timeout=float(cfg.CosignTimeoutSeconds),
    )


def remote_peers(urls: Sequence[str], timeout: float) -> List[RemoteCosigner]:
    return [RemoteCosigner(CosignerClient(url, timeout=timeout)) for url in urls]


def build_ca(cfg: AppConfig, peers: Optional[Sequence[CosignerPeer]] = None) -> RoleService:
    """CA role: issuance API plus the landmark scheduler."""
    data_dir = _data_dir(cfg)
    token = read_token(Path(cfg.AdmissionTokenFile), create=True)
    if peers is None:
        if not cfg.CosignerUrls:
            raise InvalidRequest("the CA needs at least one cosigner (--cosigner-url)")
        peers = remote_peers(cfg.CosignerUrls, float(cfg.CosignTimeoutSeconds))
    ca = CertificateAuthority(
        parse_taid(cfg.LogId),
        peers,
        issuance_policy(cfg, token),
        required_k=int(cfg.PolicyK),
        require_mirror=bool(cfg.RequireMirror),
        data_dir=data_dir,
        public_url=cfg.PublicUrl,
    )
    app = create_app("ca", [bp_ca, bp_config], {CA_KEY: ca, CONFIG_KEY: cfg})
    return RoleService("ca", app, [ca.scheduler()], [ca.close], {"ca": ca})


def build_cosigner(cfg: AppConfig, mode: CosignerMode = CosignerMode.WITNESS,
                   source: Optional[EntrySource] = None) -> RoleService:
    """Witness role; a mirror cosigner is built by :func:`build_mirror`."""
    data_dir = _data_dir(cfg)
    key = load_or_create_keypair(Path(cfg.KeyFile), SignatureSchemeId.parse(cfg.Scheme))
    cosigner = Cosigner(parse_taid(cfg.CosignerId), key, mode, state_dir=data_dir, source=source)
    app = create_app("cosigner", [bp_cosigner, bp_config], {COSIGNER_KEY: cosigner, CONFIG_KEY: cfg})
    return RoleService("cosigner", app, components={"cosigner": cosigner})


class _SyncTask:
    """Mirror sync step that learns the acceptance policy from the CA on first use."""

    def __init__(self, replica: MirrorReplica, source: LogSource, trust: Callable[[], TrustConfig]) -> None:
        self.replica = replica
        self.source = source
        self.trust = trust

    def __call__(self) -> None:
        if self.replica.policy is None:
            try:
                self.replica.policy = self.trust().policy
            except MTCError as exc:
                logger.warning("Mirror cannot fetch the trust config yet: %s", exc)
                return
        try:
            self.replica.sync(self.source)
        except MTCError as exc:
            logger.warning("Mirror sync failed: %s", exc)


def build_mirror(cfg: AppConfig, ca: Optional[CaClient] = None) -> RoleService:
    """Mirror role: full replica and tile API; with ``MirrorCosign`` also a mirror-mode cosigner on the same port."""
    data_dir = _data_dir(cfg)
    ca = ca or CaClient(cfg.CaUrl)
    cosigner: Optional[Cosigner] = None
    blueprints = [bp_mirror, bp_config]
    if cfg.MirrorCosign:
        key = load_or_create_keypair(Path(cfg.KeyFile), SignatureSchemeId.parse(cfg.Scheme))
        cosigner = Cosigner(
            parse_taid(cfg.CosignerId), key, CosignerMode.MIRROR,
            state_dir=data_dir / "cosigner", source=ca,
        )
        blueprints.append(bp_cosigner)
    replica = MirrorReplica(data_dir / "replica", cosigner=cosigner)
    services = {MIRROR_KEY: replica, CONFIG_KEY: cfg}
    if cosigner is not None:
        services[COSIGNER_KEY] = cosigner
    app = create_app("mirror", blueprints, services)
    worker = PeriodicWorker("mirror-sync", float(cfg.SyncIntervalSeconds), _SyncTask(replica, ca, ca.trust_config))
    return RoleService("mirror", app, [worker], [ca.close], {"replica": replica, "cosigner": cosigner})


def build_distributor(cfg: AppConfig, policy_file: Optional[Path] = None) -> RoleService:
    """Distributor role: no HTTP surface, only the refresh loop."""
    ca = CaClient(cfg.CaUrl)
    if policy_file is not None:
        trust = TrustConfig.from_dict(load_json(Path(policy_file)))
    else:
        trust = ca.trust_config()
    distributor = LandmarkDistributor(
        ca,
        MirrorClient(cfg.MirrorUrl),
        trust.policy,
        trust.log_id,
        Path(cfg.LandmarksFile),
        max_landmarks=int(cfg.MaxLandmarks)
        or derive_max_landmarks(int(cfg.CertLifetimeSeconds), int(cfg.LandmarkIntervalSeconds)),
    )
    worker = PeriodicWorker(
        "landmark-distributor", float(cfg.DistributorIntervalSeconds), distributor.run_once, run_first=True
    )
    return RoleService("distributor", None, [worker], [ca.close], {"distributor": distributor})
