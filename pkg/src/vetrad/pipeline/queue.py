"""In-process durable work queue with a write-ahead log.

Messages are opaque string ids. A message handed to a worker is invisible to
other workers until acked or nacked; unacked messages survive restarts via the
WAL and are re-delivered on recovery (at-least-once semantics).
"""

from __future__ import annotations

import json
import os
import queue as _stdqueue
import threading


class QueueError(RuntimeError):
    pass


class DurableQueue:
    def __init__(self, wal_path: str | None = None):
        self._q: _stdqueue.Queue[str] = _stdqueue.Queue()
        self._lock = threading.Lock()
        self._in_flight: set[str] = set()
        self._enqueued: set[str] = set()  # ids currently queued or in flight
        self._wal_path = wal_path
        self._wal = None
        if wal_path is not None:
            os.makedirs(os.path.dirname(wal_path) or ".", exist_ok=True)
            self._recover()
            self._wal = open(wal_path, "a")

    # -- durability ----------------------------------------------------------
    def _log(self, op: str, item_id: str) -> None:
        if self._wal is not None:
            self._wal.write(json.dumps({"op": op, "id": item_id}) + "\n")
            self._wal.flush()

    def _recover(self) -> None:
        """Replay the WAL: anything enqueued but never acked is re-delivered."""
        if not os.path.exists(self._wal_path):
            return
        pending: dict[str, bool] = {}
        with open(self._wal_path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                if entry["op"] == "enq":
                    pending[entry["id"]] = True
                elif entry["op"] == "ack":
                    pending.pop(entry["id"], None)
        for item_id in pending:
            self._enqueued.add(item_id)
            self._q.put(item_id)

    # -- queue protocol ------------------------------------------------------
    def put(self, item_id: str) -> int:
        """Enqueue; duplicate ids already queued or in flight are ignored.
        Returns the queue depth after the operation."""
        with self._lock:
            if item_id not in self._enqueued:
                self._enqueued.add(item_id)
                self._log("enq", item_id)
                self._q.put(item_id)
            return self._q.qsize()

    def get(self, timeout: float | None = None) -> str | None:
        """Take a message for exclusive processing; None on timeout."""
        try:
            item_id = self._q.get(timeout=timeout)
        except _stdqueue.Empty:
            return None
        with self._lock:
            self._in_flight.add(item_id)
        return item_id

    def ack(self, item_id: str) -> None:
        with self._lock:
            if item_id not in self._in_flight:
                raise QueueError(f"ack of message not in flight: {item_id}")
            self._in_flight.discard(item_id)
            self._enqueued.discard(item_id)
            self._log("ack", item_id)

    def nack(self, item_id: str) -> None:
        """Return a message to the queue for re-delivery."""
        with self._lock:
            if item_id not in self._in_flight:
                raise QueueError(f"nack of message not in flight: {item_id}")
            self._in_flight.discard(item_id)
            self._q.put(item_id)

    def depth(self) -> int:
        return self._q.qsize()

    def in_flight_count(self) -> int:
        with self._lock:
            return len(self._in_flight)

    def close(self) -> None:
        if self._wal is not None:
            self._wal.close()
            self._wal = None
