"""Result stores: a TTL-expiring short-term map and an append-only,
idempotent long-term JSON-lines store keyed by record id."""

from __future__ import annotations

import json
import os
import threading
import time


class TtlStore:
    """Thread-safe key/value map whose entries expire after ttl_s seconds."""

    def __init__(self, ttl_s: float, clock=time.monotonic):
        if ttl_s <= 0:
            raise ValueError("ttl_s must be positive")
        self._ttl = ttl_s
        self._clock = clock
        self._lock = threading.Lock()
        self._data: dict[str, tuple[float, object]] = {}

    def put(self, key: str, value) -> None:
        with self._lock:
            self._data[key] = (self._clock() + self._ttl, value)

    def get(self, key: str):
        with self._lock:
            entry = self._data.get(key)
            if entry is None:
                return None
            expires, value = entry
            if self._clock() >= expires:
                del self._data[key]
                return None
            return value

    def expire(self, key: str) -> None:
        with self._lock:
            self._data.pop(key, None)

    def sweep(self) -> int:
        """Drop all expired entries; returns how many were removed."""
        now = self._clock()
        with self._lock:
            dead = [k for k, (exp, _) in self._data.items() if now >= exp]
            for k in dead:
                del self._data[k]
            return len(dead)

    def __len__(self) -> int:
        with self._lock:
            return len(self._data)


class LongTermStore:
    """Append-only JSON-lines store with idempotent writes keyed by id.

    A second write under an existing key is a no-op, so retried work produces
    exactly one observable record per key.
    """

    def __init__(self, path: str):
        self._path = path
        self._lock = threading.Lock()
        self._index: dict[str, dict] = {}
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        if os.path.exists(path):
            with open(path) as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        record = json.loads(line)
                        # put() never appends twice for one key, so any
                        # duplicate lines come from replace(): last wins
                        self._index[record["_key"]] = record
        self._fh = open(path, "a")

    def put(self, key: str, record: dict) -> bool:
        """Write once per key; returns False if the key already existed."""
        with self._lock:
            if key in self._index:
                return False
            stored = {"_key": key, **record}
            self._fh.write(json.dumps(stored) + "\n")
            self._fh.flush()
            self._index[key] = stored
            return True

    def replace(self, key: str, record: dict) -> None:
        """Overwrite a key (used by explicit requeue); appends a superseding
        line, reads resolve to the latest record."""
        with self._lock:
            stored = {"_key": key, **record}
            self._fh.write(json.dumps(stored) + "\n")
            self._fh.flush()
            self._index[key] = stored

    def get(self, key: str) -> dict | None:
        with self._lock:
            record = self._index.get(key)
            return None if record is None else {k: v for k, v in record.items() if k != "_key"}

    def keys(self) -> list[str]:
        with self._lock:
            return list(self._index)

    def __len__(self) -> int:
        with self._lock:
            return len(self._index)

    def close(self) -> None:
        self._fh.close()
