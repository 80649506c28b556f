"""In-process duplex byte channel with per-direction byte counting."""
from __future__ import annotations

import queue
import threading
from typing import Optional, Tuple

from ..errors import TransportError

DEFAULT_RECV_TIMEOUT = 5.0


class ChannelEnd:
    """One side of a :func:`duplex_pair`. ``send`` never blocks."""

    def __init__(self, name: str, inbox: "queue.Queue[bytes]", outbox: "queue.Queue[bytes]") -> None:
        self.name = name
        self._inbox = inbox
        self._outbox = outbox
        self._lock = threading.Lock()
        self.bytes_sent = 0
        self.bytes_received = 0

    def send(self, data: bytes) -> None:
        with self._lock:
            self.bytes_sent += len(data)
        self._outbox.put(bytes(data))

    def recv(self, timeout: Optional[float] = DEFAULT_RECV_TIMEOUT) -> bytes:
        try:
            data = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise TransportError(f"{self.name}: receive timed out") from None
        with self._lock:
            self.bytes_received += len(data)
        return data


def duplex_pair() -> Tuple[ChannelEnd, ChannelEnd]:
    """Return connected ``(client, server)`` ends."""
    to_server: "queue.Queue[bytes]" = queue.Queue()
    to_client: "queue.Queue[bytes]" = queue.Queue()
    return (
        ChannelEnd("client", inbox=to_client, outbox=to_server),
        ChannelEnd("server", inbox=to_server, outbox=to_client),
    )


def bytes_transferred(*ends: ChannelEnd) -> int:
    return sum(end.bytes_sent for end in ends)
