"""Reactive logic for the platform agents.

The academic and student agents turn authorized jobs into retrieval requests;
the assessment agent queries the store and computes attainment; the system
administrator agent keeps the audit trail, flags abusive principals, and
manages accounts. All handlers are pure apart from the audit log, which is an
explicit append-only object.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Optional

from . import domain
from .errors import (
    DuplicatePrincipal,
    ScopeForbidden,
    Unauthorized,
    UnknownPrincipal,
    UnsupportedScope,
    ValidationFailure,
)
from .protocol import MessageKind
from .runtime import (
    KIND_ASSA,
    ROLE_ACADEMICIAN,
    ROLE_ADMINISTRATOR,
    ROLE_STUDENT,
    ROLE_SYSTEM,
    Credentials,
    Outbound,
)
from .util import Clock

SCOPE_COURSE_REPORT = "CourseReport"
SCOPE_STUDENT_RESULT = "StudentResult"
SCOPE_ITEM_BREAKDOWN = "ItemBreakdown"

_SCOPES = {SCOPE_COURSE_REPORT, SCOPE_STUDENT_RESULT, SCOPE_ITEM_BREAKDOWN}

AUDIT_ACTIONS = {"StoreWrite", "AuthFailure", "RouteRejection", "AccountChange"}


@dataclass(frozen=True)
class AssessmentJob:
    correlation_id: str
    requested_by: str
    course_id: str
    scope: dict  # {"type": ..., "student_id"?: ..., "item_id"?: ...}
    threshold: float = 0.5

    def to_dict(self) -> dict:
        return {
            "correlation_id": self.correlation_id,
            "requested_by": self.requested_by,
            "course_id": self.course_id,
            "scope": dict(self.scope),
            "threshold": self.threshold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AssessmentJob":
        return cls(
            correlation_id=d["correlation_id"],
            requested_by=d["requested_by"],
            course_id=d["course_id"],
            scope=d["scope"],
            threshold=float(d.get("threshold", 0.5)),
        )


def authorize_scope(roles, principal: str, scope: dict) -> None:
    """Students see only their own results; staff see everything."""
    stype = scope.get("type")
    if stype not in _SCOPES:
        raise UnsupportedScope(str(stype))
    if ROLE_ACADEMICIAN in roles or ROLE_ADMINISTRATOR in roles or ROLE_SYSTEM in roles:
        return
    if ROLE_STUDENT in roles:
        if stype != SCOPE_STUDENT_RESULT:
            raise ScopeForbidden(f"students may not request {stype}")
        if scope.get("student_id") != principal:
            raise ScopeForbidden("students may only request their own results")
        return
    raise ScopeForbidden(f"no role of {principal} permits {stype}")


def _data_classes_for(scope: dict) -> list:
    stype = scope.get("type")
    if stype == SCOPE_COURSE_REPORT:
        return ["scores", "items", "hierarchy"]
    if stype == SCOPE_STUDENT_RESULT:
        return ["scores", "items"]
    if stype == SCOPE_ITEM_BREAKDOWN:
        return ["scores", "items"]
    raise UnsupportedScope(str(stype))


def aa_handle(job: AssessmentJob) -> list:
    """One retrieval request toward the assessment agent, scoped to the job."""
    return [Outbound(
        to=KIND_ASSA,
        kind=MessageKind.DATA_RETRIEVE_REQUEST,
        payload={"job": job.to_dict(), "data_classes": _data_classes_for(job.scope)},
        correlation_id=job.correlation_id,
    )]


def sa_handle(job: AssessmentJob) -> list:
    """Student path: own-results only, retrieval forwarded via the interface agent."""
    if job.scope.get("type") != SCOPE_STUDENT_RESULT:
        raise ScopeForbidden(f"students may not request {job.scope.get('type')}")
    if job.scope.get("student_id") != job.requested_by:
        raise ScopeForbidden("students may only request their own results")
    return [Outbound(
        to="UIA",
        kind=MessageKind.DATA_RETRIEVE_REQUEST,
        payload={
            "job": job.to_dict(),
            "data_classes": _data_classes_for(job.scope),
            "reply_to": "SA",
        },
        correlation_id=job.correlation_id,
    )]


def compute_assessment(job: AssessmentJob, records: dict) -> dict:
    """Turn retrieved store records into the job's result payload.

    records: {"score": [...], "item": [...], "outcome": [...]} as raw documents.
    """
    try:
        items = [domain.AssessmentItem.from_dict(d) for d in records.get("item", [])]
        scores = [domain.Score.from_dict(d) for d in records.get("score", [])]
        hierarchy = [domain.OutcomeNode.from_dict(d) for d in records.get("outcome", [])]
    except (KeyError, TypeError, ValueError) as e:
        raise ValidationFailure(f"malformed store record: {e}") from None
    stype = job.scope.get("type")
    if stype == SCOPE_COURSE_REPORT:
        report = domain.build_report(job.course_id, scores, items, hierarchy, job.threshold)
        return report.to_dict()
    if stype == SCOPE_STUDENT_RESULT:
        sid = job.scope["student_id"]
        course_items = [i for i in items if i.course_id == job.course_id]
        if not course_items:
            raise ValidationFailure(f"no assessment items for course {job.course_id}")
        item_ids = {i.id for i in course_items}
        mine = [s for s in scores if s.student_id == sid and s.item_id in item_ids]
        cos = sorted({co for i in course_items for co, w in i.co_weights.items() if w > 0})
        per_co = {co: domain.co_attainment(mine, course_items, co) for co in cos}
        return {
            "course_id": job.course_id,
            "threshold": job.threshold,
            "per_student": {sid: {c: per_co[c] for c in sorted(per_co)}},
        }
    if stype == SCOPE_ITEM_BREAKDOWN:
        item_id = job.scope["item_id"]
        matching = [i for i in items if i.id == item_id]
        if not matching:
            raise ValidationFailure(f"unknown item {item_id}")
        item = matching[0]
        fractions = {
            s.student_id: domain.item_attainment(s, item)
            for s in scores if s.item_id == item_id
        }
        return {
            "course_id": job.course_id,
            "item_id": item_id,
            "per_student": {s: fractions[s] for s in sorted(fractions)},
        }
    raise UnsupportedScope(str(stype))


@dataclass(frozen=True)
class AuditEvent:
    event_id: int
    ts: int
    principal: str
    action: str
    subject: str
    detail: dict

    def to_dict(self) -> dict:
        return {
            "event_id": self.event_id,
            "ts": self.ts,
            "principal": self.principal,
            "action": self.action,
            "subject": self.subject,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class AnomalyFlag:
    principal: str
    ts: int
    count: int
    window_s: int

    def to_dict(self) -> dict:
        return {
            "principal": self.principal,
            "ts": self.ts,
            "count": self.count,
            "window_s": self.window_s,
        }


class AnomalyDetector:
    """Flags a principal with more than `r` failures inside a `w_s` second window.

    The window resets after a flag so one burst yields one flag; flags are a
    pure function of the event sequence and the (r, w_s) parameters.
    """

    FAILURE_ACTIONS = {"AuthFailure", "RouteRejection"}

    def __init__(self, r: int = 5, w_s: int = 60):
        self.r = r
        self.w_s = w_s
        self._windows: dict[str, list] = {}

    def feed(self, event: AuditEvent) -> Optional[AnomalyFlag]:
        if event.action not in self.FAILURE_ACTIONS:
            return None
        window = self._windows.setdefault(event.principal, [])
        window.append(event.ts)
        cutoff = event.ts - self.w_s * 1000
        window[:] = [t for t in window if t > cutoff]
        if len(window) > self.r:
            self._windows[event.principal] = []
            return AnomalyFlag(
                principal=event.principal, ts=event.ts,
                count=len(window), window_s=self.w_s,
            )
        return None


class AuditLog:
    """Thread-safe append-only audit trail with strictly increasing event ids."""

    def __init__(self, clock: Clock, r: int = 5, w_s: int = 60):
        self._clock = clock
        self._events: list[AuditEvent] = []
        self._flags: list[AnomalyFlag] = []
        self._detector = AnomalyDetector(r=r, w_s=w_s)
        self._lock = threading.Lock()

    def record(self, action: str, principal: str, subject: str, detail: dict) -> AuditEvent:
        if action not in AUDIT_ACTIONS:
            raise ValidationFailure(f"unknown audit action {action}")
        with self._lock:
            event = AuditEvent(
                event_id=len(self._events) + 1,
                ts=self._clock.now_ms(),
                principal=principal,
                action=action,
                subject=subject,
                detail=detail,
            )
            self._events.append(event)
            flag = self._detector.feed(event)
            if flag:
                self._flags.append(flag)
            return event

    def events(self, action: Optional[str] = None) -> list:
        with self._lock:
            evs = list(self._events)
        if action is not None:
            evs = [e for e in evs if e.action == action]
        return evs

    def flags(self) -> list:
        with self._lock:
            return list(self._flags)

    def count(self, action: str) -> int:
        return len(self.events(action))


def saa_manage_account(store, audit: AuditLog, caller: Credentials, op: str,
                       principal: str, roles: Optional[list] = None,
                       secret: Optional[str] = None) -> dict:
    """Create/Disable/SetRoles on the user-profile repository; admin only."""
    privileges = store.auth.authenticate(caller)
    if ROLE_ADMINISTRATOR not in privileges.roles and ROLE_SYSTEM not in privileges.roles:
        audit.record("AuthFailure", caller.principal, principal, {"op": op})
        raise Unauthorized(f"{caller.principal} lacks Administrator role")
    key = f"user/{principal}"
    existing = store.get(key)
    if op == "Create":
        if existing is not None:
            raise DuplicatePrincipal(principal)
        profile = {
            "principal": principal,
            "roles": roles or [],
            "secret": secret or "",
            "enabled": True,
        }
    elif op in ("Disable", "SetRoles"):
        if existing is None:
            raise UnknownPrincipal(principal)
        profile = dict(existing)
        if op == "Disable":
            profile["enabled"] = False
        else:
            profile["roles"] = roles or []
    else:
        raise ValidationFailure(f"unknown account op {op}")
    store.put(key, profile, caller)
    audit.record("AccountChange", caller.principal, principal,
                 {"op": op, "profile": {k: v for k, v in profile.items() if k != "secret"}})
    return profile
