"""Paths, crash-safe JSON files and hex decoding used by every role."""
import json
import os
import shutil
import tempfile
from pathlib import Path
from typing import Any, Dict


def project_root() -> Path:
    """Directory holding config.json and logs/.

    ``MTC_PKI_HOME`` wins; otherwise the repository root, three levels above
    ``src/mtc_pki/utils``.
    """
    home = os.environ.get("MTC_PKI_HOME")
    if home:
        return Path(home)
    return Path(__file__).resolve().parents[3]


def config_path() -> Path:
    return project_root() / "config.json"


def config_default_path() -> Path:
    return project_root() / "config.default.json"


def seed_from_default(live: Path, default: Path) -> None:
    """Copy *default* to *live* unless *live* already exists."""
    if not live.exists() and default.exists():
        live.parent.mkdir(parents=True, exist_ok=True)
        shutil.copy2(default, live)


def load_json(path: Path) -> Dict[str, Any]:
    """Parsed JSON document at *path*, or ``{}`` when the file is absent."""
    if not path.exists():
        return {}
    with path.open("r", encoding="utf-8") as f:
        return json.load(f)


def save_json(path: Path, data: Dict[str, Any]) -> None:
    """Atomically save data to a JSON file.

    Writes to a temporary file in the same directory and renames it over
    *path*, so concurrent readers see either the old or the new document.

    Args:
        path: Path to the JSON file to write.
        data: Dictionary to serialize as JSON.
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, sort_keys=True)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def from_hex(text: str, length: int | None = None) -> bytes:
    """Decode hex text, optionally enforcing a byte length.

    Raises:
        ValueError: on non-hex input or a length mismatch.
    """
    raw = bytes.fromhex(text)
    if length is not None and len(raw) != length:
        raise ValueError(f"expected {length} bytes, got {len(raw)}")
    return raw
