"""Configuration management module.

Provides thread-safe configuration management with JSON file persistence,
TOML/JSON overlay files for individual service runs and a singleton for
application-wide config access.
"""

from __future__ import annotations

import argparse
import threading
import tomllib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

from ..errors import InvalidRequest
from ..logging.logger import get_logger
from ..utils.helpers import config_default_path, config_path, load_json, save_json, seed_from_default

logger = get_logger()

VERSION = "2026-10-18 09:12:44"


def log_version_info():
    logger.info(f"==== mtc_pki.config.manager VERSION: {VERSION} ====")


@dataclass
class AppConfig:
    """Application configuration dataclass.

    Attributes:
        Listen: ``host:port`` the service binds (``:8440`` binds all interfaces).
        DataDir: Directory holding the role's persistent state; services refuse to start without one.
        LogLevel: Logging level (DEBUG, INFO, WARNING, ERROR).
        LogId: Trust anchor ID of the issuance log.
        CheckpointIntervalSeconds: Minimum spacing of cosigned checkpoints; issuances inside one interval share a checkpoint.
        LandmarkIntervalSeconds: Seconds between landmark allocations.
        CertLifetimeSeconds: Maximum certificate lifetime.
        MaxLandmarks: Active landmark window; 0 derives it from lifetime and interval.
        PolicyK: Cosignatures required per checkpoint.
        RequireMirror: Whether one of the cosignatures must come from a mirror.
        CosignerUrls: Base URLs of the cosigners the CA asks for cosignatures.
        CosignTimeoutSeconds: Deadline for collecting cosignatures.
        AdmissionTokenFile: File holding the shared-secret issuance token.
        CaUrl: Base URL of the CA (mirror, distributor, issue, revoke).
        MirrorUrl: Base URL of the mirror (distributor).
        SyncIntervalSeconds: Seconds between mirror sync rounds.
        MirrorCosign: Whether the mirror also serves as a mirror-mode cosigner.
        DistributorIntervalSeconds: Seconds between distributor refreshes.
        LandmarksFile: Where the distributor publishes verified landmarks.
        ClockSkewSeconds: Tolerance applied to certificate validity checks.
        KeyFile: Signing key of a cosigner or mirror (created on first run).
        Scheme: Signature scheme of newly generated keys.
        CosignerId: Trust anchor ID of a cosigner or mirror.
        PublicUrl: URL the CA advertises in its trust config.
    """

    Listen: str = "127.0.0.1:8440"
    DataDir: str = ""
    LogLevel: str = "INFO"
    LogId: str = "32473"
    CheckpointIntervalSeconds: float = 2.0
    LandmarkIntervalSeconds: int = 600
    CertLifetimeSeconds: int = 86400
    MaxLandmarks: int = 0
    PolicyK: int = 1
    RequireMirror: bool = False
    CosignerUrls: List[str] = field(default_factory=list)
    CosignTimeoutSeconds: float = 2.0
    AdmissionTokenFile: str = "./run/admission_token.txt"
    CaUrl: str = "http://127.0.0.1:8440"
    MirrorUrl: str = "http://127.0.0.1:8442"
    SyncIntervalSeconds: float = 2.0
    MirrorCosign: bool = False
    DistributorIntervalSeconds: float = 10.0
    LandmarksFile: str = "./run/landmarks.json"
    ClockSkewSeconds: int = 300
    KeyFile: str = "./run/key.json"
    Scheme: str = "ed25519"
    CosignerId: str = "32473.2.1"
    PublicUrl: str = ""

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "AppConfig":
        """Create an AppConfig instance from a dictionary; unknown keys are ignored."""
        base = cls()
        for name in asdict(base).keys():
            if name in data:
                setattr(base, name, data[name])
        if isinstance(base.CosignerUrls, str):
            base.CosignerUrls = [u for u in base.CosignerUrls.split(",") if u]
        return base

    def to_dict(self) -> Dict[str, Any]:
        """Convert the AppConfig to a dictionary."""
        return asdict(self)

    def merged(self, overrides: Mapping[str, Any]) -> "AppConfig":
        """Copy with *overrides* applied; ``None`` values are skipped."""
        data = self.to_dict()
        data.update({k: v for k, v in overrides.items() if v is not None})
        return AppConfig.from_dict(data)


def load_overlay(path: Path) -> Dict[str, Any]:
    """Read a TOML or JSON overlay file into a flat dictionary."""
    path = Path(path)
    if not path.exists():
        raise InvalidRequest(f"config file {path} does not exist")
    if path.suffix == ".toml":
        try:
            with path.open("rb") as f:
                return tomllib.load(f)
        except tomllib.TOMLDecodeError as exc:
            raise InvalidRequest(f"config file {path}: {exc}") from None
    data = load_json(path)
    if not isinstance(data, dict):
        raise InvalidRequest(f"config file {path} must hold a JSON object")
    return data


class ConfigManager:
    """Thread-safe configuration manager with JSON backing.

    Implements a simple singleton so the whole application shares the same
    loaded configuration instance. All access is protected by a re-entrant lock.
    """

    _instance: Optional["ConfigManager"] = None
    _lock = threading.Lock()

    def __init__(self, path: Optional[Path] = None) -> None:
        """Initialise the configuration manager."""
        self._path: Path = path or config_path()
        self._cfg_lock = threading.RLock()
        seed_from_default(self._path, config_default_path())
        raw = load_json(self._path)
        self._cfg = AppConfig.from_dict(raw)

    @classmethod
    def instance(cls) -> "ConfigManager":
        """Get the singleton ConfigManager instance."""
        with cls._lock:
            if cls._instance is None:
                cls._instance = ConfigManager()
            return cls._instance

    @property
    def path(self) -> Path:
        return self._path

    def get(self) -> AppConfig:
        """Return a shallow copy of the current configuration."""
        with self._cfg_lock:
            return AppConfig.from_dict(self._cfg.to_dict())

    def update(self, **kwargs: Any) -> AppConfig:
        """Update configuration values and persist them to disk.

        Only known AppConfig fields are updated; unknown keys are ignored.
        """
        with self._cfg_lock:
            for key, value in kwargs.items():
                if hasattr(self._cfg, key):
                    setattr(self._cfg, key, value)
            save_json(self._path, self._cfg.to_dict())
            return self.get()

    def reload(self) -> AppConfig:
        """Reload configuration from disk and return the new config."""
        with self._cfg_lock:
            data = load_json(self._path)
            self._cfg = AppConfig.from_dict(data)
            return self.get()


#: argparse destination -> AppConfig key
FLAG_KEYS: Dict[str, str] = {
    "listen": "Listen",
    "data_dir": "DataDir",
    "log_level": "LogLevel",
    "log_id": "LogId",
    "checkpoint_interval": "CheckpointIntervalSeconds",
    "landmark_interval": "LandmarkIntervalSeconds",
    "cert_lifetime": "CertLifetimeSeconds",
    "max_landmarks": "MaxLandmarks",
    "policy_k": "PolicyK",
    "require_mirror": "RequireMirror",
    "cosigner_url": "CosignerUrls",
    "cosign_timeout": "CosignTimeoutSeconds",
    "admission_token_file": "AdmissionTokenFile",
    "mtca_url": "CaUrl",
    "mirror_url": "MirrorUrl",
    "sync_interval": "SyncIntervalSeconds",
    "cosign": "MirrorCosign",
    "interval": "DistributorIntervalSeconds",
    "out": "LandmarksFile",
    "clock_skew": "ClockSkewSeconds",
    "key_file": "KeyFile",
    "scheme": "Scheme",
    "cosigner_id": "CosignerId",
    "public_url": "PublicUrl",
}


@dataclass
class CommandConfig:
    """A parsed subcommand together with its effective configuration."""

    subcommand: str
    config: AppConfig
    args: argparse.Namespace

    @classmethod
    def resolve(cls, args: argparse.Namespace, manager: Optional[ConfigManager] = None) -> "CommandConfig":
        """Layer file values, then the ``--config`` overlay, then explicit flags."""
        if manager is not None:
            base = manager.get()
        elif getattr(args, "config", None) is None and config_path().exists():
            base = ConfigManager.instance().get()
        else:
            base = AppConfig()
        overlay_path = getattr(args, "config", None)
        if overlay_path:
            base = base.merged(load_overlay(Path(overlay_path)))
        flags = {key: getattr(args, dest) for dest, key in FLAG_KEYS.items() if hasattr(args, dest)}
        return cls(args.command, base.merged(flags), args)
