"""Wire-level envelope, message kinds, and the assessment workflow state machine.

One correlation id spans one assessment request end to end. The happy path is
the fixed eight-step trace returned by canonical_trace(); the workflow state
machine enforces it and fails fast on anything out of order or overdue.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

from .errors import DecodeError
from .util import canonical_json

WIRE_VERSION = 1


class MessageKind(str, Enum):
    LOGIN = "LOGIN"
    ASSESS_REQUEST = "ASSESS_REQUEST"
    JOB_DELEGATE = "JOB_DELEGATE"
    DATA_RETRIEVE_REQUEST = "DATA_RETRIEVE_REQUEST"
    STORE_QUERY = "STORE_QUERY"
    STORE_RESULT = "STORE_RESULT"
    ASSESS_RESULT = "ASSESS_RESULT"
    JOB_RESULT = "JOB_RESULT"
    PRESENT = "PRESENT"
    AUDIT_EVENT = "AUDIT_EVENT"
    ERROR = "ERROR"


class Phase(str, Enum):
    RECEIVED = "Received"
    DELEGATED = "Delegated"
    RETRIEVING = "Retrieving"
    QUERIED = "Queried"
    COMPUTED = "Computed"
    RETURNED = "Returned"
    PRESENTED = "Presented"
    FAILED = "Failed"


TERMINAL_PHASES = {Phase.PRESENTED, Phase.FAILED}


@dataclass(frozen=True)
class MessageEnvelope:
    v: int
    msg_id: str
    correlation_id: str
    ts: int
    sender: str       # wire field "from"
    to: str
    kind: MessageKind
    credentials: dict  # {principal, token, issued_at}
    payload: dict

    def to_dict(self) -> dict:
        return {
            "v": self.v,
            "msg_id": self.msg_id,
            "correlation_id": self.correlation_id,
            "ts": self.ts,
            "from": self.sender,
            "to": self.to,
            "kind": self.kind.value,
            "credentials": self.credentials,
            "payload": self.payload,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MessageEnvelope":
        required = ["v", "msg_id", "correlation_id", "ts", "from", "to", "kind", "credentials", "payload"]
        for f in required:
            if f not in d:
                raise DecodeError(f"{DecodeError.MISSING_FIELD}: {f}")
        if d["v"] != WIRE_VERSION:
            raise DecodeError(f"{DecodeError.BAD_VERSION}: {d['v']}")
        try:
            kind = MessageKind(d["kind"])
        except ValueError:
            raise DecodeError(f"{DecodeError.UNKNOWN_KIND}: {d['kind']}") from None
        return cls(
            v=d["v"],
            msg_id=d["msg_id"],
            correlation_id=d["correlation_id"],
            ts=d["ts"],
            sender=d["from"],
            to=d["to"],
            kind=kind,
            credentials=d["credentials"],
            payload=d["payload"],
        )


def encode(envelope: MessageEnvelope) -> bytes:
    """Canonical (key-ordered) JSON bytes; equal envelopes encode identically."""
    return canonical_json(envelope.to_dict())


def decode(data: bytes) -> MessageEnvelope:
    try:
        d = json.loads(data.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as e:
        raise DecodeError(f"not valid JSON: {e}") from None
    if not isinstance(d, dict):
        raise DecodeError("envelope must be a JSON object")
    return MessageEnvelope.from_dict(d)


@dataclass(frozen=True)
class WorkflowState:
    correlation_id: str
    phase: Phase = Phase.RECEIVED
    started_ts: int = 0
    last_ts: int = 0
    failure_reason: Optional[str] = None

    @property
    def terminal(self) -> bool:
        return self.phase in TERMINAL_PHASES


# agent role names used in trace steps; "client" and "store" are endpoints
CANONICAL_STEPS = [
    ("client", "UIA", MessageKind.ASSESS_REQUEST),
    ("UIA", "AA", MessageKind.JOB_DELEGATE),
    ("AA", "AssA", MessageKind.DATA_RETRIEVE_REQUEST),
    ("AssA", "store", MessageKind.STORE_QUERY),
    ("store", "AssA", MessageKind.STORE_RESULT),
    ("AssA", "AA", MessageKind.ASSESS_RESULT),
    ("AA", "UIA", MessageKind.JOB_RESULT),
    ("UIA", "client", MessageKind.PRESENT),
]


def canonical_trace(request=None) -> list[tuple[str, str, MessageKind]]:
    """The fixed eight-step happy-path trace; the end-to-end conformance oracle."""
    return list(CANONICAL_STEPS)


# phase -> (expected event kind, next phase, kinds to emit on transition)
_TRANSITIONS = {
    Phase.RECEIVED: (MessageKind.ASSESS_REQUEST, Phase.DELEGATED, [MessageKind.JOB_DELEGATE]),
    Phase.DELEGATED: (MessageKind.JOB_DELEGATE, Phase.RETRIEVING, [MessageKind.DATA_RETRIEVE_REQUEST]),
    Phase.RETRIEVING: (MessageKind.DATA_RETRIEVE_REQUEST, Phase.QUERIED, [MessageKind.STORE_QUERY]),
    Phase.QUERIED: (MessageKind.STORE_RESULT, Phase.COMPUTED, [MessageKind.ASSESS_RESULT]),
    Phase.COMPUTED: (MessageKind.ASSESS_RESULT, Phase.RETURNED, [MessageKind.JOB_RESULT]),
    Phase.RETURNED: (MessageKind.JOB_RESULT, Phase.PRESENTED, [MessageKind.PRESENT]),
}

# STORE_QUERY is emitted during Retrieving→Queried and observed as a trace step,
# not fed back as a state-machine event; the store's reply (STORE_RESULT) is.
_IGNORED_EVENTS = {MessageKind.STORE_QUERY, MessageKind.AUDIT_EVENT}


def fail(state: WorkflowState, reason: str, ts: int) -> WorkflowState:
    return replace(state, phase=Phase.FAILED, failure_reason=reason, last_ts=ts)


def advance(state: WorkflowState, event: MessageEnvelope):
    """Pure transition step: (state, event) -> (new state, kinds to emit).

    Out-of-order events fail the workflow with ProtocolViolation; events on a
    terminal workflow are rejected the same way.
    """
    if event.correlation_id != state.correlation_id:
        raise ValueError("event correlation_id does not match workflow")
    if event.kind in _IGNORED_EVENTS:
        return state, []
    if state.terminal:
        return fail(state, "ProtocolViolation: event after terminal phase", event.ts), []
    expected_kind, next_phase, emits = _TRANSITIONS[state.phase]
    if event.kind != expected_kind:
        return (
            fail(state, f"ProtocolViolation: {event.kind.value} in phase {state.phase.value}", event.ts),
            [],
        )
    started = state.started_ts or event.ts
    new = replace(state, phase=next_phase, started_ts=started, last_ts=event.ts)
    return new, list(emits)


def check_timeout(state: WorkflowState, now_ms: int, phase_timeout_ms: int, budget_ms: int) -> WorkflowState:
    """Fail a non-terminal workflow that is overdue in its phase or overall."""
    if state.terminal:
        return state
    if state.last_ts and now_ms - state.last_ts > phase_timeout_ms:
        return fail(state, "Timeout: phase deadline exceeded", now_ms)
    if state.started_ts and now_ms - state.started_ts > budget_ms:
        return fail(state, "Timeout: workflow budget exceeded", now_ms)
    return state
