"""Background thread that runs a task at a fixed interval.

Instantiate once, call start() when the service comes up and stop() on
shutdown. Exceptions raised by the task are logged and the loop carries on.
"""
from __future__ import annotations

import threading
from typing import Callable, Optional

from ..logging.logger import get_logger

logger = get_logger()


class PeriodicWorker:
    def __init__(self, name: str, interval: float, task: Callable[[], object], run_first: bool = False) -> None:
        if interval <= 0:
            raise ValueError("interval must be positive")
        self.name = name
        self.interval = interval
        self._task = task
        self._run_first = run_first
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self.runs = 0

    @property
    def running(self) -> bool:
        return self._thread is not None and self._thread.is_alive()

    def start(self) -> "PeriodicWorker":
        if self.running:
            return self
        self._stop.clear()
        self._thread = threading.Thread(target=self._run, daemon=True, name=self.name)
        self._thread.start()
        logger.info("%s started (every %.1fs)", self.name, self.interval)
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._thread:
            self._thread.join(timeout=3)
            self._thread = None

    def run_once(self) -> None:
        try:
            self._task()
        except Exception:
            logger.exception("%s iteration failed", self.name)
        finally:
            self.runs += 1

    def _run(self) -> None:
        if self._run_first:
            self.run_once()
        while not self._stop.wait(self.interval):
            self.run_once()
