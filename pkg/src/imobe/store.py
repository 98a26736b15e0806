"""Append-log record store with two repositories and mandatory audit mirroring.

Records live in a single newline-delimited JSON log ({key, version, ts, doc});
an in-memory index of latest versions is rebuilt on open. Keys are
type-prefixed; "user/..." keys form the user-profile repository, everything
else is curriculum/marks data. Every successful write emits exactly one
StoreWrite audit event before the write is acknowledged.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
import threading
from typing import Callable, Optional

from . import domain
from .errors import (
    DigestMismatch,
    InvalidKeyPrefix,
    RouteForbidden,
    Unauthorized,
    ValidationFailure,
)
from .runtime import (
    KIND_ASSA,
    KIND_SAA,
    ROLE_ACADEMICIAN,
    ROLE_ADMINISTRATOR,
    ROLE_SYSTEM,
    AuthService,
    Credentials,
)
from .util import Clock

QUERYABLE_PREFIXES = ("score", "item", "outcome", "user")

_WRITE_ROLES = {
    "score": {ROLE_ACADEMICIAN, ROLE_SYSTEM},
    "item": {ROLE_ACADEMICIAN, ROLE_SYSTEM},
    "outcome": {ROLE_ACADEMICIAN, ROLE_SYSTEM},
    "user": {ROLE_ADMINISTRATOR, ROLE_SYSTEM},
}


class StoreQuery:
    """Exact-match selectors over whitelisted key prefixes."""

    def __init__(self, correlation_id: str, selectors: list):
        for prefix, _filters in selectors:
            if prefix not in QUERYABLE_PREFIXES:
                raise InvalidKeyPrefix(prefix)
        self.correlation_id = correlation_id
        self.selectors = selectors

    def to_dict(self) -> dict:
        return {
            "correlation_id": self.correlation_id,
            "selectors": [[p, dict(f)] for p, f in self.selectors],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StoreQuery":
        return cls(d["correlation_id"], [(p, f) for p, f in d["selectors"]])


def _prefix_of(key: str) -> str:
    prefix, _, rest = key.partition("/")
    if prefix not in QUERYABLE_PREFIXES or not rest:
        raise InvalidKeyPrefix(key)
    return prefix


class ObeStore:
    """Single-writer append-log store; concurrent readers are safe."""

    def __init__(self, path: str, clock: Clock, auth: Optional[AuthService] = None,
                 audit_cb: Optional[Callable] = None):
        self.path = path
        self.clock = clock
        self.auth = auth
        self.audit_cb = audit_cb  # (action, principal, subject, detail) -> None
        self._index: dict[str, dict] = {}  # key -> {"version", "ts", "doc"}
        self._lock = threading.Lock()
        self._open()

    def _open(self) -> None:
        os.makedirs(os.path.dirname(os.path.abspath(self.path)), exist_ok=True)
        if not os.path.exists(self.path):
            with open(self.path, "w", encoding="utf-8"):
                pass
            return
        with open(self.path, "r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                self._index[rec["key"]] = {
                    "version": rec["version"], "ts": rec["ts"], "doc": rec["doc"],
                }

    def _validate_doc(self, prefix: str, doc: dict) -> None:
        try:
            if prefix == "score":
                score = domain.Score.from_dict(doc)
                item_rec = self._index.get(f"item/{score.item_id}")
                if item_rec is None:
                    raise ValidationFailure(f"score references unknown item {score.item_id}")
                max_marks = float(item_rec["doc"]["max_marks"])
                if not 0 <= score.raw <= max_marks:
                    raise ValidationFailure(
                        f"raw {score.raw} outside [0, {max_marks}] for item {score.item_id}")
            elif prefix == "item":
                domain.AssessmentItem.from_dict(doc)
            elif prefix == "outcome":
                domain.OutcomeNode.from_dict(doc)
            elif prefix == "user":
                for f in ("principal", "roles", "secret"):
                    if f not in doc:
                        raise ValidationFailure(f"user profile missing {f}")
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationFailure(f"malformed {prefix} document: {e}") from None

    def put(self, key: str, doc: dict, credentials: Credentials) -> int:
        prefix = _prefix_of(key)
        principal = credentials.principal
        if self.auth is not None:
            try:
                privileges = self.auth.authenticate(credentials)
            except Exception:
                self._emit("AuthFailure", principal, key, {"op": "put"})
                raise
            if not privileges.roles & _WRITE_ROLES[prefix]:
                self._emit("AuthFailure", principal, key,
                           {"op": "put", "reason": "Unauthorized"})
                raise Unauthorized(f"{principal} may not write {prefix}/ keys")
        with self._lock:
            self._validate_doc(prefix, doc)
            prev = self._index.get(key)
            version = (prev["version"] + 1) if prev else 1
            ts = self.clock.now_ms()
            rec = {"key": key, "version": version, "ts": ts, "doc": doc}
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(rec, sort_keys=True) + "\n")
            self._index[key] = {"version": version, "ts": ts, "doc": doc}
        # audit happens-before the write acknowledgment, outside the store lock
        # so the mirror can deliver envelopes without lock nesting
        self._emit("StoreWrite", principal, key, {"version": version})
        return version

    def _emit(self, action: str, principal: str, subject: str, detail: dict) -> None:
        if self.audit_cb:
            self.audit_cb(action, principal, subject, detail)

    def query(self, q: StoreQuery, caller_kind: str) -> dict:
        """Latest-version matches per selector, ordered by key.

        Returns {prefix: [doc, ...]}; reads emit no StoreWrite audit.
        """
        if caller_kind not in (KIND_ASSA, KIND_SAA):
            raise RouteForbidden(f"{caller_kind} may not query the store")
        results: dict[str, list] = {}
        with self._lock:
            snapshot = dict(self._index)
        for prefix, filters in q.selectors:
            docs = []
            for key in sorted(snapshot):
                if not key.startswith(prefix + "/"):
                    continue
                doc = snapshot[key]["doc"]
                if all(doc.get(f) == v for f, v in filters.items()):
                    docs.append(doc)
            results.setdefault(prefix, []).extend(docs)
        return results

    def get(self, key: str) -> Optional[dict]:
        with self._lock:
            rec = self._index.get(key)
            return rec["doc"] if rec else None

    def version_of(self, key: str) -> int:
        with self._lock:
            rec = self._index.get(key)
            return rec["version"] if rec else 0

    # --- snapshot / restore ---

    def snapshot(self, dest_path: str) -> str:
        """Copy the log and write a digest trailer file; returns the digest hex."""
        with self._lock:
            shutil.copyfile(self.path, dest_path)
        with open(dest_path, "rb") as f:
            digest = hashlib.sha256(f.read()).hexdigest()
        with open(dest_path + ".digest", "w", encoding="utf-8") as f:
            f.write(digest + "\n")
        return digest

    def restore(self, src_path: str) -> None:
        with open(src_path, "rb") as f:
            data = f.read()
        with open(src_path + ".digest", "r", encoding="utf-8") as f:
            expected = f.read().strip()
        if hashlib.sha256(data).hexdigest() != expected:
            raise DigestMismatch(f"snapshot digest mismatch for {src_path}")
        with self._lock:
            shutil.copyfile(src_path, self.path)
            self._index = {}
            self._open()
