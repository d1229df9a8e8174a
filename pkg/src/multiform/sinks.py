"""Event sinks: the JSON-lines log and at-least-once webhooks.

The event log is the source of truth and is written synchronously by
the stream worker, one sorted-key JSON object per line. Webhooks are
best-effort: a bounded queue feeds a worker thread, delivery failures
retry with bounded backoff, and anything that still fails (or finds the
queue full) is dropped and counted rather than stalling the pipeline.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
import time
from pathlib import Path

import requests

log = logging.getLogger("multiform.sinks")

_STOP = object()


class EventLogWriter:
    """Append-only JSON-lines writer, safe for multiple stream threads."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh = open(self.path, "a", encoding="utf-8")
        self._lock = threading.Lock()
        self.written = 0

    def write(self, entry: dict):
        line = json.dumps(entry, sort_keys=True, separators=(",", ":"))
        with self._lock:
            self._fh.write(line + "\n")
            self._fh.flush()
            self.written += 1

    def close(self):
        with self._lock:
            self._fh.close()


class WebhookSink:
    """POSTs event entries as JSON; 2xx means delivered.

    offer() never blocks: when the queue is full the entry is dropped
    and counted. Failed deliveries retry up to `retries` times with
    doubling backoff before being dropped.
    """

    def __init__(
        self,
        url: str,
        timeout_s: float = 2.0,
        retries: int = 3,
        queue_size: int = 256,
        actions: tuple[str, ...] | None = None,
        backoff_s: float = 0.05,
    ):
        self.url = url
        self.timeout_s = timeout_s
        self.retries = retries
        self.actions = actions
        self.backoff_s = backoff_s
        self.delivered = 0
        self.dropped = 0
        self._queue: queue.Queue = queue.Queue(maxsize=queue_size)
        self._worker = threading.Thread(target=self._drain, daemon=True)
        self._worker.start()

    def offer(self, entry: dict):
        if self.actions is not None and entry.get("action") not in self.actions:
            return
        try:
            self._queue.put_nowait(entry)
        except queue.Full:
            self.dropped += 1

    def _drain(self):
        while True:
            item = self._queue.get()
            if item is _STOP:
                return
            self._deliver(item)

    def _deliver(self, entry: dict):
        for attempt in range(self.retries + 1):
            try:
                response = requests.post(self.url, json=entry, timeout=self.timeout_s)
                if 200 <= response.status_code < 300:
                    self.delivered += 1
                    return
                log.warning(
                    "webhook %s returned %s (attempt %d)",
                    self.url, response.status_code, attempt + 1,
                )
            except requests.RequestException as e:
                log.warning("webhook %s failed: %s (attempt %d)", self.url, e, attempt + 1)
            if attempt < self.retries:
                time.sleep(min(self.backoff_s * (2**attempt), 0.5))
        self.dropped += 1

    def close(self):
        """Drain the backlog and stop the worker."""
        self._queue.put(_STOP)
        self._worker.join(timeout=30)
