"""HTTP gateway: the interface agent's service surface.

JSON over HTTP under /api/v1/; bearer-token auth issued at login. Response
bodies for assessment requests are exactly the PRESENT envelope payload, no
reshaping. Every 4xx/5xx carries {code, reason, correlation_id?} and leaves an
audit event.
"""

from __future__ import annotations

from typing import Optional

from fastapi import Depends, FastAPI, Header, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .behaviors import saa_manage_account
from .errors import (
    AccountDisabled,
    DuplicatePrincipal,
    EmptyCohort,
    ImobeError,
    InvalidCredentials,
    ScopeForbidden,
    StoreUnavailable,
    Unauthorized,
    UnknownPrincipal,
    UnsupportedScope,
    ValidationFailure,
    WorkflowTimeout,
)
from .runtime import ROLE_ADMINISTRATOR, ROLE_SYSTEM
from .system import Session, System


class LoginRequest(BaseModel):
    principal: str
    secret: str


class LoginResponse(BaseModel):
    token: str
    session_id: str
    principal: str
    roles: list[str]


class ScopeModel(BaseModel):
    type: str
    student_id: Optional[str] = None
    item_id: Optional[str] = None

    def to_payload(self) -> dict:
        scope = {"type": self.type}
        if self.student_id is not None:
            scope["student_id"] = self.student_id
        if self.item_id is not None:
            scope["item_id"] = self.item_id
        return scope


class AssessRequest(BaseModel):
    course_id: str
    scope: ScopeModel
    threshold: Optional[float] = Field(default=None, gt=0, lt=1)


class AdminUserRequest(BaseModel):
    op: str  # Create | Disable | SetRoles
    principal: str
    roles: Optional[list[str]] = None
    secret: Optional[str] = None


class ApiError(Exception):
    def __init__(self, status: int, code: str, reason: str,
                 correlation_id: Optional[str] = None, audited: bool = False):
        self.status = status
        self.code = code
        self.reason = reason
        self.correlation_id = correlation_id
        self.audited = audited


# subclass entries must precede their parents: isinstance walks in order
_STATUS_OF = {
    AccountDisabled: 403,
    InvalidCredentials: 401,
    Unauthorized: 403,
    ScopeForbidden: 403,
    UnknownPrincipal: 404,
    DuplicatePrincipal: 409,
    UnsupportedScope: 400,
    ValidationFailure: 400,
    EmptyCohort: 502,
    StoreUnavailable: 502,
    WorkflowTimeout: 504,
}


def _to_api_error(e: ImobeError, audited: bool = False) -> ApiError:
    for cls, status in _STATUS_OF.items():
        if isinstance(e, cls):
            return ApiError(status, e.code, e.reason,
                            getattr(e, "correlation_id", None), audited=audited)
    return ApiError(502, e.code, e.reason, getattr(e, "correlation_id", None),
                    audited=audited)


def create_app(system: System) -> FastAPI:
    app = FastAPI(title="OBE agent platform gateway", version="1.0")

    def audit_http_failure(status: int, principal: str, subject: str, code: str):
        action = "AuthFailure" if status == 401 else "RouteRejection"
        system.audit.record(action, principal, subject, {"http_status": status, "code": code})

    @app.exception_handler(ApiError)
    async def api_error_handler(request: Request, exc: ApiError):
        if not exc.audited:
            audit_http_failure(exc.status, getattr(request.state, "principal", "anonymous"),
                               request.url.path, exc.code)
        body = {"code": exc.code, "reason": exc.reason}
        if exc.correlation_id:
            body["correlation_id"] = exc.correlation_id
        return JSONResponse(status_code=exc.status, content=body)

    def require_session(request: Request,
                        authorization: Optional[str] = Header(default=None)) -> Session:
        if not authorization or not authorization.startswith("Bearer "):
            raise ApiError(401, "InvalidCredentials", "missing bearer token")
        token = authorization.removeprefix("Bearer ").strip()
        session = system.session_by_token(token)
        if session is None:
            raise ApiError(401, "InvalidCredentials", "unknown or expired session token")
        try:
            system.auth.authenticate(session.credentials)
        except ImobeError as e:
            raise _to_api_error(e) from None
        request.state.principal = session.principal
        return session

    def require_admin(request: Request, session: Session = Depends(require_session)) -> Session:
        roles = system.auth.roles_of(session.principal)
        if ROLE_ADMINISTRATOR not in roles and ROLE_SYSTEM not in roles:
            raise ApiError(403, "Unauthorized", "Administrator role required")
        return session

    @app.post("/api/v1/login", response_model=LoginResponse)
    def login(body: LoginRequest, request: Request):
        request.state.principal = body.principal
        try:
            session = system.login(body.principal, body.secret)
        except ImobeError as e:
            # system.login already audited the failure
            raise _to_api_error(e, audited=True) from None
        roles = sorted(system.auth.roles_of(session.principal))
        return LoginResponse(token=session.credentials.token,
                             session_id=session.session_id,
                             principal=session.principal, roles=roles)

    def run_assessment(session: Session, course_id: str, scope: dict,
                       threshold: Optional[float]):
        if not system.course_exists(course_id):
            raise ApiError(404, "UnknownCourse", f"no items for course {course_id}")
        try:
            corr, payload = system.submit_assessment(session, course_id, scope, threshold)
        except ImobeError as e:
            raise _to_api_error(e) from None
        # body is the PRESENT payload verbatim; the correlation id travels in
        # a header so trace retrieval stays possible without reshaping
        return JSONResponse(content=payload, headers={"X-Correlation-Id": corr})

    @app.post("/api/v1/assess")
    def assess(body: AssessRequest, session: Session = Depends(require_session)):
        return run_assessment(session, body.course_id, body.scope.to_payload(),
                              body.threshold)

    @app.get("/api/v1/courses/{course_id}/attainment")
    def course_attainment(course_id: str, threshold: Optional[float] = None,
                          session: Session = Depends(require_session)):
        return run_assessment(session, course_id, {"type": "CourseReport"}, threshold)

    @app.get("/api/v1/students/{student_id}/results")
    def student_results(student_id: str, course_id: str,
                        session: Session = Depends(require_session)):
        scope = {"type": "StudentResult", "student_id": student_id}
        return run_assessment(session, course_id, scope, None)

    @app.post("/api/v1/scores")
    async def import_scores(request: Request, session: Session = Depends(require_session)):
        roles = system.auth.roles_of(session.principal)
        if "Academician" not in roles and ROLE_SYSTEM not in roles:
            raise ApiError(403, "Unauthorized", "Academician role required")
        text = (await request.body()).decode("utf-8")
        try:
            return system.import_scores_csv(session.credentials, text)
        except ImobeError as e:
            raise ApiError(400, e.code, e.reason) from None

    @app.get("/api/v1/traces/{correlation_id}")
    def get_trace(correlation_id: str, session: Session = Depends(require_session)):
        envelopes = system.trace_of(correlation_id)
        if not envelopes:
            raise ApiError(404, "UnknownCorrelation", f"no trace for {correlation_id}")
        return {"correlation_id": correlation_id,
                "envelopes": [e.to_dict() for e in envelopes]}

    @app.post("/api/v1/admin/users")
    def admin_users(body: AdminUserRequest, session: Session = Depends(require_admin)):
        try:
            profile = saa_manage_account(
                system.store, system.audit, session.credentials,
                body.op, body.principal, roles=body.roles, secret=body.secret)
        except ImobeError as e:
            raise _to_api_error(e) from None
        return {k: v for k, v in profile.items() if k != "secret"}

    @app.get("/api/v1/admin/audit")
    def admin_audit(action: Optional[str] = None,
                    session: Session = Depends(require_admin)):
        return {
            "events": [e.to_dict() for e in system.audit.events(action)],
            "flags": [f.to_dict() for f in system.audit.flags()],
        }

    return app
