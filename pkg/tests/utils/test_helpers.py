"""Tests for utility helper functions.

Tests path resolution, atomic JSON file operations, hex helpers and the
periodic worker.
"""
import json
import threading

import pytest

from mtc_pki.utils.helpers import (
    config_default_path,
    config_path,
    from_hex,
    load_json,
    project_root,
    save_json,
    seed_from_default,
)
from mtc_pki.utils.worker import PeriodicWorker


def test_project_root():
    """Test that project_root returns the repository root."""
    root = project_root()

    assert root.is_dir()
    assert (root / "pyproject.toml").exists()
    assert (root / "src").exists()


def test_project_root_override(tmp_path, monkeypatch):
    """Test the MTC_PKI_HOME override."""
    monkeypatch.setenv("MTC_PKI_HOME", str(tmp_path))

    assert project_root() == tmp_path
    assert config_path() == tmp_path / "config.json"
    assert config_default_path() == tmp_path / "config.default.json"


def test_load_json(tmp_path):
    """Test loading JSON from a file."""
    json_file = tmp_path / "test.json"
    expected = {"key": "value", "number": 42, "nested": {"a": 1}}
    json_file.write_text(json.dumps(expected))

    assert load_json(json_file) == expected


def test_load_json_missing_file(tmp_path):
    """Test loading JSON from non-existent file."""
    assert load_json(tmp_path / "nonexistent.json") == {}


def test_save_json_creates_directories(tmp_path):
    """Test that save_json creates parent directories."""
    nested = tmp_path / "deep" / "nested" / "file.json"

    save_json(nested, {"test": True})

    assert load_json(nested) == {"test": True}


def test_save_json_formatting(tmp_path):
    """Test that saved JSON is indented with sorted keys."""
    json_file = tmp_path / "formatted.json"

    save_json(json_file, {"b": 2, "a": 1})

    content = json_file.read_text()
    assert "\n" in content
    assert content.index('"a"') < content.index('"b"')


def test_save_json_leaves_no_temp_files(tmp_path):
    """Test that the atomic replace cleans up after itself."""
    json_file = tmp_path / "landmarks.json"
    save_json(json_file, {"old": True})

    save_json(json_file, {"new": True})

    assert load_json(json_file) == {"new": True}
    assert [p.name for p in tmp_path.iterdir()] == ["landmarks.json"]


def test_save_json_failure_keeps_old_file(tmp_path):
    """Test that a failed write leaves the previous document in place."""
    json_file = tmp_path / "state.json"
    save_json(json_file, {"ok": 1})

    with pytest.raises(TypeError):
        save_json(json_file, {"bad": object()})

    assert load_json(json_file) == {"ok": 1}
    assert [p.name for p in tmp_path.iterdir()] == ["state.json"]


def test_seed_from_default(tmp_path):
    """Test that the default file seeds a missing live file only."""
    default = tmp_path / "config.default.json"
    live = tmp_path / "sub" / "config.json"
    save_json(default, {"LogId": "1"})

    seed_from_default(live, default)
    save_json(default, {"LogId": "2"})
    seed_from_default(live, default)

    assert load_json(live) == {"LogId": "1"}


def test_from_hex():
    """Test hex decoding with a length check."""
    assert from_hex("00ff") == b"\x00\xff"
    assert from_hex("ab" * 32, 32) == b"\xab" * 32
    with pytest.raises(ValueError):
        from_hex("abcd", 32)
    with pytest.raises(ValueError):
        from_hex("zz")


def test_periodic_worker_runs_and_survives_errors():
    """Test that the worker keeps running after a failing iteration."""
    calls = []
    done = threading.Event()

    def task():
        calls.append(1)
        if len(calls) == 1:
            raise RuntimeError("first run fails")
        if len(calls) >= 3:
            done.set()

    worker = PeriodicWorker("test-worker", 0.01, task, run_first=True).start()
    try:
        assert done.wait(timeout=5)
    finally:
        worker.stop()

    assert not worker.running
    assert worker.runs >= 3


def test_periodic_worker_rejects_bad_interval():
    """Test that a non-positive interval is refused."""
    with pytest.raises(ValueError):
        PeriodicWorker("bad", 0, lambda: None)
