"""Durable store of issued entries and the entity keys that go with them.

``entries.bin`` is a sequence of records ``u32 len ; entry bytes ; u16 len ;
public key``. The Merkle log only holds hashes; this file lets the CA serve
entries to mirrors and assemble landmark certificates later.
"""
from __future__ import annotations

import threading
from pathlib import Path
from typing import List, Optional, Tuple

from ..codec.wire import Reader, Writer
from ..errors import CodecError, StorageError
from ..logging.logger import get_logger

logger = get_logger()

ENTRIES_FILE = "entries.bin"

Record = Tuple[bytes, bytes]


class EntryStore:
    def __init__(self, data_dir: Optional[Path] = None) -> None:
        self._path = Path(data_dir) / ENTRIES_FILE if data_dir is not None else None
        self._lock = threading.Lock()
        self._records: List[Record] = []
        if self._path is not None:
            self._load()

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def append(self, entry: bytes, public_key: bytes) -> int:
        record = Writer().var_bytes(entry, 4).var_bytes(public_key, 2).bytes
        with self._lock:
            if self._path is not None:
                try:
                    with self._path.open("ab") as f:
                        f.write(record)
                except OSError as exc:
                    raise StorageError(f"cannot append entry: {exc}") from exc
            self._records.append((entry, public_key))
            return len(self._records) - 1

    def get(self, index: int) -> Record:
        with self._lock:
            return self._records[index]

    def entries(self, start: int, end: int) -> List[bytes]:
        with self._lock:
            return [entry for entry, _ in self._records[start:end]]

    def truncate(self, count: int) -> None:
        """Drop records beyond *count* (recovery after an interrupted append)."""
        with self._lock:
            dropped = len(self._records) - count
            if dropped <= 0:
                return
            del self._records[count:]
            if self._path is not None:
                self._path.write_bytes(b"".join(
                    Writer().var_bytes(e, 4).var_bytes(k, 2).bytes for e, k in self._records
                ))
            logger.warning("Dropped %d entry record(s) not present in the log", dropped)

    def _load(self) -> None:
        assert self._path is not None
        if not self._path.exists():
            return
        raw = self._path.read_bytes()
        r = Reader(raw)
        good = 0
        while r.remaining:
            try:
                entry = r.var_bytes(4)
                key = r.var_bytes(2)
            except CodecError:
                logger.warning("Truncating torn record at offset %d in %s", good, self._path)
                self._path.write_bytes(raw[:good])
                break
            self._records.append((entry, key))
            good = len(raw) - r.remaining
