"""Assembled platform: store + runtime + agents + workflow tracking + sessions.

One System owns one store file and one agent runtime with the five platform
agents plus the store endpoint hosted in the Main container. Client sessions
get their own Client container; assessment requests enter as envelopes to the
interface agent and the result comes back to the session's outbox.
"""

from __future__ import annotations

import csv
import io
import json
import secrets as _secrets
import time
from dataclasses import dataclass
from typing import Optional

from . import behaviors, domain, protocol
from .behaviors import AssessmentJob, AuditLog, authorize_scope, compute_assessment
from .config import Config
from .errors import (
    AccountDisabled,
    DomainError,
    ImobeError,
    InvalidCredentials,
    ScopeForbidden,
    UnknownPrincipal,
    ValidationFailure,
    WorkflowTimeout,
)
from .protocol import (
    MessageEnvelope,
    MessageKind,
    Phase,
    WorkflowState,
    advance,
    check_timeout,
    fail,
)
from .runtime import (
    KIND_AA,
    KIND_ASSA,
    KIND_CLIENT,
    KIND_SA,
    KIND_SAA,
    KIND_STORE,
    KIND_UIA,
    ROLE_STUDENT,
    AgentRuntime,
    AuthService,
    Credentials,
    Outbound,
    TokenService,
    make_descriptor,
)
from .store import ObeStore, StoreQuery
from .util import Clock, canonical_json

CSV_HEADER = ["course_id", "item_id", "student_id", "raw_score"]


@dataclass
class Session:
    session_id: str
    principal: str
    client_id: str
    container_id: str
    credentials: Credentials
    created_ts: int
    expires_ts: int


class System:
    """The platform wired together; deterministic mode fixes ids and stepping."""

    def __init__(self, config: Config, clock: Optional[Clock] = None,
                 deterministic: bool = False):
        self.config = config
        self.clock = clock or Clock()
        self.deterministic = deterministic

        self.audit = AuditLog(self.clock, r=config.anomaly_r, w_s=config.anomaly_w_s)
        self.tokens = TokenService(config.token_secret, config.token_ttl_s, self.clock)
        self.auth = AuthService(self.tokens, self._profile_lookup)
        self.store = ObeStore(config.store_path, self.clock, auth=self.auth,
                              audit_cb=self._on_store_audit)
        self.runtime = AgentRuntime(self.clock, self.auth, deterministic=deterministic,
                                    audit_hook=self.audit.record)

        self.workflows: dict[str, WorkflowState] = {}
        self._last_kind: dict[str, MessageKind] = {}
        self._observed_upto = 0
        self.sessions: dict[str, Session] = {}
        self._session_seq = 0

        self.auth.register_system_principal("system")
        self.auth.register_system_principal("store")
        self.system_credentials = self.tokens.issue("system")
        self._register_agents()

    # --- assembly ---

    def _profile_lookup(self, principal: str) -> Optional[dict]:
        return self.store.get(f"user/{principal}")

    def _register_agents(self) -> None:
        rt = self.runtime
        rt.register_behavior(KIND_UIA, self._uia_behavior)
        rt.register_behavior(KIND_AA, self._aa_behavior)
        rt.register_behavior(KIND_SA, self._sa_behavior)
        rt.register_behavior(KIND_ASSA, self._assa_behavior)
        rt.register_behavior(KIND_SAA, self._saa_behavior)
        rt.register_behavior(KIND_STORE, self._store_behavior)
        for kind in (KIND_UIA, KIND_AA, KIND_SA, KIND_ASSA, KIND_SAA, KIND_STORE):
            rt.dispatch(make_descriptor(kind, kind, rt.MAIN_CONTAINER),
                        rt.MAIN_CONTAINER, self.system_credentials)

    def _on_store_audit(self, action: str, principal: str, subject: str, detail: dict) -> None:
        event = self.audit.record(action, principal, subject, detail)
        if action == "StoreWrite":
            # mirror every write to the administrator agent on the wire
            store_agent = self.runtime.agents.get(KIND_STORE)
            if store_agent is not None:
                env = self.runtime.make_envelope(
                    sender=KIND_STORE,
                    out=Outbound(to=KIND_SAA, kind=MessageKind.AUDIT_EVENT,
                                 payload=event.to_dict(), correlation_id="audit"),
                    correlation_id="audit",
                    credentials=store_agent.credentials,
                )
                self.runtime.deliver(env)

    # --- agent behaviors (closures over store/audit via self) ---

    def _uia_behavior(self, state, env: MessageEnvelope, rt: AgentRuntime):
        jobs = state.setdefault("jobs", {})
        if env.kind is MessageKind.ASSESS_REQUEST:
            principal = env.credentials.get("principal", "?")
            roles = rt.auth.roles_of(principal)
            payload = env.payload
            job = AssessmentJob(
                correlation_id=env.correlation_id,
                requested_by=principal,
                course_id=payload["course_id"],
                scope=payload["scope"],
                threshold=float(payload.get("threshold", self.config.attainment_threshold)),
            )
            try:
                authorize_scope(roles, principal, job.scope)
            except ImobeError as e:
                self.audit.record("RouteRejection", principal, job.course_id,
                                  {"reason": e.code, "scope": job.scope})
                return [Outbound(to=env.sender, kind=MessageKind.ERROR,
                                 payload={"code": e.code, "reason": e.reason})]
            jobs[env.correlation_id] = {"client": env.sender}
            delegate = KIND_SA if roles == frozenset({ROLE_STUDENT}) else KIND_AA
            return [Outbound(to=delegate, kind=MessageKind.JOB_DELEGATE,
                             payload={"job": job.to_dict()})]
        if env.kind is MessageKind.DATA_RETRIEVE_REQUEST:
            # student-agent retrievals are forwarded to the assessment agent
            return [Outbound(to=KIND_ASSA, kind=MessageKind.DATA_RETRIEVE_REQUEST,
                             payload=env.payload)]
        if env.kind is MessageKind.JOB_RESULT:
            ctx = jobs.pop(env.correlation_id, None)
            if ctx is None:
                return []
            return [Outbound(to=ctx["client"], kind=MessageKind.PRESENT,
                             payload=env.payload)]
        if env.kind is MessageKind.ERROR:
            ctx = jobs.pop(env.correlation_id, None)
            if ctx is None:
                return []
            return [Outbound(to=ctx["client"], kind=MessageKind.ERROR,
                             payload=env.payload)]
        return []

    def _aa_behavior(self, state, env: MessageEnvelope, rt: AgentRuntime):
        if env.kind is MessageKind.JOB_DELEGATE:
            job = AssessmentJob.from_dict(env.payload["job"])
            try:
                return behaviors.aa_handle(job)
            except ImobeError as e:
                return [Outbound(to=KIND_UIA, kind=MessageKind.ERROR,
                                 payload={"code": e.code, "reason": e.reason})]
        if env.kind is MessageKind.ASSESS_RESULT:
            return [Outbound(to=KIND_UIA, kind=MessageKind.JOB_RESULT, payload=env.payload)]
        if env.kind is MessageKind.ERROR:
            return [Outbound(to=KIND_UIA, kind=MessageKind.ERROR, payload=env.payload)]
        return []

    def _sa_behavior(self, state, env: MessageEnvelope, rt: AgentRuntime):
        if env.kind is MessageKind.JOB_DELEGATE:
            job = AssessmentJob.from_dict(env.payload["job"])
            try:
                return behaviors.sa_handle(job)
            except ImobeError as e:
                return [Outbound(to=KIND_UIA, kind=MessageKind.ERROR,
                                 payload={"code": e.code, "reason": e.reason})]
        if env.kind is MessageKind.ASSESS_RESULT:
            return [Outbound(to=KIND_UIA, kind=MessageKind.JOB_RESULT, payload=env.payload)]
        if env.kind is MessageKind.ERROR:
            return [Outbound(to=KIND_UIA, kind=MessageKind.ERROR, payload=env.payload)]
        return []

    def _assa_behavior(self, state, env: MessageEnvelope, rt: AgentRuntime):
        pending = state.setdefault("pending", {})
        if env.kind is MessageKind.DATA_RETRIEVE_REQUEST:
            job = AssessmentJob.from_dict(env.payload["job"])
            reply_to = env.payload.get("reply_to") or env.sender
            data_classes = env.payload.get("data_classes", [])
            pending[env.correlation_id] = {"job": job.to_dict(), "reply_to": reply_to}
            selectors = []
            if "items" in data_classes:
                selectors.append(("item", {"course_id": job.course_id}))
            if "scores" in data_classes:
                selectors.append(("score", {}))
            if "hierarchy" in data_classes:
                selectors.append(("outcome", {}))
            q = StoreQuery(env.correlation_id, selectors)
            return [Outbound(to=KIND_STORE, kind=MessageKind.STORE_QUERY,
                             payload=q.to_dict())]
        if env.kind is MessageKind.STORE_RESULT:
            ctx = pending.pop(env.correlation_id, None)
            if ctx is None:
                return []
            job = AssessmentJob.from_dict(ctx["job"])
            try:
                result = compute_assessment(job, env.payload["results"])
            except (DomainError, ImobeError) as e:
                return [Outbound(to=ctx["reply_to"], kind=MessageKind.ERROR,
                                 payload={"code": e.code, "reason": e.reason})]
            return [Outbound(to=ctx["reply_to"], kind=MessageKind.ASSESS_RESULT,
                             payload=result)]
        if env.kind is MessageKind.ERROR:
            ctx = pending.pop(env.correlation_id, None)
            if ctx is not None:
                return [Outbound(to=ctx["reply_to"], kind=MessageKind.ERROR,
                                 payload=env.payload)]
            return []
        return []

    def _store_behavior(self, state, env: MessageEnvelope, rt: AgentRuntime):
        if env.kind is MessageKind.STORE_QUERY:
            try:
                q = StoreQuery.from_dict(env.payload)
                caller_kind = rt._kind_of(env.sender) or "?"
                results = self.store.query(q, caller_kind)
            except ImobeError as e:
                return [Outbound(to=env.sender, kind=MessageKind.ERROR,
                                 payload={"code": "StoreUnavailable", "reason": e.reason})]
            except OSError as e:
                return [Outbound(to=env.sender, kind=MessageKind.ERROR,
                                 payload={"code": "StoreUnavailable", "reason": str(e)})]
            return [Outbound(to=env.sender, kind=MessageKind.STORE_RESULT,
                             payload={"results": results})]
        return []

    def _saa_behavior(self, state, env: MessageEnvelope, rt: AgentRuntime):
        # audit events are recorded synchronously at the source; the envelope
        # is the wire mirror, nothing further to do
        return []

    # --- workflow tracking ---

    def _observe(self, env: MessageEnvelope) -> None:
        corr = env.correlation_id
        if corr == "audit" or env.kind is MessageKind.AUDIT_EVENT:
            return
        state = self.workflows.get(corr)
        if state is None:
            state = WorkflowState(correlation_id=corr)
            self.workflows[corr] = state
        if state.terminal:
            return
        if env.kind is MessageKind.ERROR:
            code = env.payload.get("code", "Error")
            self.workflows[corr] = fail(state, code, env.ts)
            return
        if env.kind is self._last_kind.get(corr):
            return  # forwarded duplicate (student retrieval path)
        new_state, _ = advance(state, env)
        if new_state.phase is not state.phase:
            self._last_kind[corr] = env.kind
        self.workflows[corr] = new_state

    def _pump(self) -> int:
        n = self.runtime.run_until_quiet()
        # feed accepted envelopes not yet observed into the workflow tracker
        observed = getattr(self, "_observed_upto", 0)
        for env in self.runtime.trace[observed:]:
            self._observe(env)
        self._observed_upto = len(self.runtime.trace)
        return n

    # --- sessions and client operations ---

    def login(self, principal: str, secret: str) -> Session:
        profile = self._profile_lookup(principal)
        if profile is None or profile.get("secret") != secret:
            self.audit.record("AuthFailure", principal, "login", {"reason": "InvalidCredentials"})
            raise InvalidCredentials(f"bad principal or secret for {principal}")
        if not profile.get("enabled", True):
            self.audit.record("AuthFailure", principal, "login", {"reason": "AccountDisabled"})
            raise AccountDisabled(principal)
        self._session_seq += 1
        session_id = (f"s{self._session_seq:04d}" if self.deterministic
                      else _secrets.token_hex(8))
        client_id = f"client/{session_id}"
        container_id = f"container-{session_id}"
        self.runtime.create_client_container(container_id)
        self.runtime.register_client(client_id)
        now = self.clock.now_ms()
        session = Session(
            session_id=session_id,
            principal=principal,
            client_id=client_id,
            container_id=container_id,
            credentials=self.tokens.issue(principal),
            created_ts=now,
            expires_ts=now + self.config.token_ttl_s * 1000,
        )
        self.sessions[session_id] = session
        return session

    def session_by_token(self, token: str) -> Optional[Session]:
        for session in self.sessions.values():
            if session.credentials.token == token:
                if self.clock.now_ms() >= session.expires_ts:
                    return None
                return session
        return None

    def close_session(self, session: Session) -> None:
        self.sessions.pop(session.session_id, None)
        if session.container_id in self.runtime.containers:
            self.runtime.remove_container(session.container_id)

    def course_exists(self, course_id: str) -> bool:
        q = StoreQuery("probe", [("item", {"course_id": course_id})])
        return bool(self.store.query(q, KIND_ASSA).get("item"))

    def submit_assessment(self, session: Session, course_id: str, scope: dict,
                          threshold: Optional[float] = None) -> tuple[str, dict]:
        """Drive one full workflow; returns (correlation_id, PRESENT payload).

        Raises the mapped platform error when the workflow fails or times out.
        """
        corr = self.runtime.ids.next_id() if self.deterministic else _secrets.token_hex(8)
        corr = f"wf-{corr}"
        request = self.runtime.make_envelope(
            sender=session.client_id,
            out=Outbound(to=KIND_UIA, kind=MessageKind.ASSESS_REQUEST, payload={
                "course_id": course_id,
                "scope": scope,
                "threshold": threshold if threshold is not None
                else self.config.attainment_threshold,
            }),
            correlation_id=corr,
            credentials=session.credentials,
        )
        status, reason = self.runtime.deliver(request)
        if status == "rejected":
            raise InvalidCredentials(reason) if reason in (
                "InvalidCredentials", "ExpiredCredentials", "UnknownPrincipal",
                "AccountDisabled") else ScopeForbidden(reason)

        deadline = time.monotonic() + self.config.workflow_budget_ms / 1000.0
        while True:
            self._pump()
            state = self.workflows.get(corr)
            if state is not None and state.terminal:
                break
            now = self.clock.now_ms()
            if state is not None:
                checked = check_timeout(state, now, self.config.phase_timeout_ms,
                                        self.config.workflow_budget_ms)
                if checked.terminal:
                    self.workflows[corr] = checked
                    self._error_to_client(session, corr, checked.failure_reason or "Timeout")
                    break
            if self.deterministic:
                # nothing moved and nothing will without external clock advance
                if self._pump() == 0:
                    st = self.workflows.get(corr) or WorkflowState(corr)
                    self.workflows[corr] = fail(st, "Timeout: no progress", self.clock.now_ms())
                    self._error_to_client(session, corr, "Timeout")
                    break
                continue
            if time.monotonic() > deadline:
                st = self.workflows.get(corr) or WorkflowState(corr)
                self.workflows[corr] = fail(st, "Timeout: workflow budget exceeded",
                                            self.clock.now_ms())
                self._error_to_client(session, corr, "Timeout")
                break
            time.sleep(0.005)

        for env in self.runtime.drain_client(session.client_id):
            if env.correlation_id != corr:
                continue
            if env.kind is MessageKind.PRESENT:
                return corr, env.payload
            if env.kind is MessageKind.ERROR:
                code = env.payload.get("code", "Error")
                raise self._map_error(code, env.payload.get("reason", ""), corr)
        state = self.workflows.get(corr)
        reason = (state.failure_reason if state else None) or "workflow produced no result"
        raise WorkflowTimeout(reason) if "Timeout" in reason else ValidationFailure(reason)

    def _error_to_client(self, session: Session, corr: str, reason: str) -> None:
        env = self.runtime.make_envelope(
            sender=KIND_UIA,
            out=Outbound(to=session.client_id, kind=MessageKind.ERROR,
                         payload={"code": "Timeout" if "Timeout" in reason else "Failed",
                                  "reason": reason}),
            correlation_id=corr,
            credentials=self.runtime.agents[KIND_UIA].credentials,
        )
        self.runtime.deliver(env)

    @staticmethod
    def _map_error(code: str, reason: str, corr: str):
        from . import errors
        cls = {
            "ScopeForbidden": errors.ScopeForbidden,
            "Timeout": errors.WorkflowTimeout,
            "EmptyCohort": errors.EmptyCohort,
            "ValidationFailure": errors.ValidationFailure,
            "UnsupportedScope": errors.UnsupportedScope,
            "StoreUnavailable": errors.StoreUnavailable,
        }.get(code, errors.ImobeError)
        err = cls(reason or code)
        err.correlation_id = corr
        return err

    def trace_of(self, correlation_id: str) -> list[MessageEnvelope]:
        return [e for e in self.runtime.trace
                if e.correlation_id == correlation_id
                and e.kind is not MessageKind.AUDIT_EVENT]

    def trace_steps(self, correlation_id: str) -> list[tuple[str, str, MessageKind]]:
        steps = []
        for env in self.trace_of(correlation_id):
            steps.append((self._endpoint_kind(env.sender),
                          self._endpoint_kind(env.to), env.kind))
        return steps

    def _endpoint_kind(self, endpoint_id: str) -> str:
        if endpoint_id.startswith("client/"):
            return KIND_CLIENT
        agent = self.runtime.agents.get(endpoint_id)
        return agent.descriptor.kind if agent else endpoint_id

    # --- seeding and ingestion ---

    def seed(self, fixture: dict) -> dict:
        """Load hierarchy + items + users; idempotent re-seed bumps versions."""
        counts = {"outcomes": 0, "items": 0, "users": 0}
        for node in fixture.get("hierarchy", []):
            domain.OutcomeNode.from_dict(node)  # validate before writing
            self.store.put(f"outcome/{node['id']}", node, self.system_credentials)
            counts["outcomes"] += 1
        for item in fixture.get("items", []):
            domain.AssessmentItem.from_dict(item)
            self.store.put(f"item/{item['id']}", item, self.system_credentials)
            counts["items"] += 1
        for user in fixture.get("users", []):
            self.store.put(f"user/{user['principal']}", user, self.system_credentials)
            counts["users"] += 1
        nodes = [domain.OutcomeNode.from_dict(n) for n in fixture.get("hierarchy", [])]
        report = domain.validate_hierarchy(nodes)
        if not report.valid:
            raise ValidationFailure("; ".join(report.violations))
        return counts

    def import_scores_csv(self, credentials: Credentials, text: str) -> dict:
        """CSV rows -> score puts; returns accepted count and per-line rejections."""
        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationFailure("empty CSV body") from None
        if [h.strip() for h in header] != CSV_HEADER:
            raise ValidationFailure(f"bad header, expected {','.join(CSV_HEADER)}")
        accepted = 0
        rejected = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                if len(row) != 4:
                    raise ValidationFailure(f"expected 4 fields, got {len(row)}")
                course_id, item_id, student_id, raw_s = [c.strip() for c in row]
                raw = float(raw_s)
                item = self.store.get(f"item/{item_id}")
                if item is None:
                    raise ValidationFailure(f"unknown item {item_id}")
                if item.get("course_id") != course_id:
                    raise ValidationFailure(
                        f"item {item_id} belongs to {item.get('course_id')}, not {course_id}")
                doc = {"student_id": student_id, "item_id": item_id, "raw": raw}
                self.store.put(f"score/{item_id}/{student_id}", doc, credentials)
                accepted += 1
            except (ImobeError, ValueError) as e:
                reason = getattr(e, "code", "ValidationFailure")
                rejected.append({"line": lineno, "reason": reason,
                                 "detail": getattr(e, "reason", str(e))})
        return {"accepted": accepted, "rejected": rejected}
