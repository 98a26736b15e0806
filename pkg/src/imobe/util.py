"""Small shared helpers: clocks, canonical JSON, id generation."""

import itertools
import json
import threading
import time
import uuid


def canonical_json(obj) -> bytes:
    """Key-ordered, whitespace-free JSON encoding; equal values give equal bytes."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


class Clock:
    """Wall clock in milliseconds since the Unix epoch."""

    def now_ms(self) -> int:
        return int(time.time() * 1000)


class ManualClock(Clock):
    """Deterministic clock for tests; advanced explicitly."""

    def __init__(self, start_ms: int = 0):
        self._now = start_ms

    def now_ms(self) -> int:
        return self._now

    def advance(self, ms: int) -> None:
        self._now += ms


class IdSource:
    """Unique message/event ids. Sequential in deterministic mode, uuid otherwise."""

    def __init__(self, deterministic: bool = False, prefix: str = "m"):
        self._deterministic = deterministic
        self._prefix = prefix
        self._counter = itertools.count(1)
        self._lock = threading.Lock()

    def next_id(self) -> str:
        if self._deterministic:
            with self._lock:
                return f"{self._prefix}{next(self._counter):06d}"
        return uuid.uuid4().hex
