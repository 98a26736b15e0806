"""Agent runtime: containers, lifecycle, credential-checked dispatch, routing,
per-agent FIFO mailboxes, and checkpoint/resume.

Each agent is a serial processing unit. The deterministic scheduler steps
agents in a fixed order (sorted id) so identical inputs always produce the
identical envelope trace; a coarse runtime lock makes delivery safe from
concurrent threads in service mode.
"""

from __future__ import annotations

import base64
import hashlib
import hmac
import json
import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional

from .errors import (
    AccountDisabled,
    AgentTerminated,
    AgentUnknown,
    DigestMismatch,
    DuplicateAgentId,
    ExpiredCredentials,
    IllegalTransition,
    InvalidCredentials,
    NoSuchContainer,
    RouteForbidden,
    Unauthorized,
    UnknownPrincipal,
    ValidationFailure,
)
from .protocol import MessageEnvelope, MessageKind, WIRE_VERSION
from .util import Clock, IdSource, canonical_json

# agent kinds plus the two routing endpoints
KIND_AA = "AA"
KIND_SA = "SA"
KIND_UIA = "UIA"
KIND_SAA = "SAA"
KIND_ASSA = "AssA"
KIND_STORE = "store"
KIND_CLIENT = "client"

AGENT_KINDS = {KIND_AA, KIND_SA, KIND_UIA, KIND_SAA, KIND_ASSA, KIND_STORE}

# Fixed route table: sender kind -> kinds it may address directly. Students
# reach the assessment path only through the interface agent, which forwards
# their retrieval requests; nothing client-originated reaches AssA or the
# store without passing through UIA.
ROUTES = {
    KIND_CLIENT: {KIND_UIA},
    KIND_UIA: {KIND_AA, KIND_SA, KIND_SAA, KIND_ASSA, KIND_CLIENT},
    KIND_AA: {KIND_ASSA, KIND_UIA},
    KIND_SA: {KIND_UIA},
    KIND_ASSA: {KIND_STORE, KIND_AA, KIND_SA},
    KIND_STORE: {KIND_ASSA, KIND_SAA},
    KIND_SAA: set(),
}

PRIVATE_KINDS = {KIND_ASSA}

ROLE_ACADEMICIAN = "Academician"
ROLE_STUDENT = "Student"
ROLE_ADMINISTRATOR = "Administrator"
ROLE_SYSTEM = "System"

ROLES = {ROLE_ACADEMICIAN, ROLE_STUDENT, ROLE_ADMINISTRATOR, ROLE_SYSTEM}

# which agent kinds a client principal may address directly, per role
_ROLE_REACHABLE = {
    ROLE_ACADEMICIAN: frozenset({KIND_UIA}),
    ROLE_STUDENT: frozenset({KIND_UIA}),
    ROLE_ADMINISTRATOR: frozenset({KIND_UIA, KIND_SAA}),
    ROLE_SYSTEM: frozenset(AGENT_KINDS),
}

# which agent kinds a role may dispatch into a container
_ROLE_DISPATCHABLE = {
    ROLE_ACADEMICIAN: frozenset({KIND_AA}),
    ROLE_STUDENT: frozenset({KIND_SA}),
    ROLE_ADMINISTRATOR: frozenset({KIND_AA, KIND_SA, KIND_UIA, KIND_SAA}),
    ROLE_SYSTEM: frozenset(AGENT_KINDS),
}

CHECKPOINT_MAGIC = b"IMOBE-CKPT\x00"
CHECKPOINT_VERSION = 0x01
DIGEST_LEN = 32


@dataclass(frozen=True)
class Credentials:
    principal: str
    token: str
    issued_at: int

    def to_dict(self) -> dict:
        return {"principal": self.principal, "token": self.token, "issued_at": self.issued_at}

    @classmethod
    def from_dict(cls, d: dict) -> "Credentials":
        try:
            return cls(principal=d["principal"], token=d["token"], issued_at=int(d["issued_at"]))
        except (KeyError, TypeError, ValueError):
            raise InvalidCredentials("malformed credentials") from None


@dataclass(frozen=True)
class PrivilegeSet:
    roles: frozenset
    reachable_kinds: frozenset

    def has(self, role: str) -> bool:
        return role in self.roles


def privileges_for_roles(roles) -> PrivilegeSet:
    reachable = frozenset().union(*(_ROLE_REACHABLE[r] for r in roles)) if roles else frozenset()
    return PrivilegeSet(roles=frozenset(roles), reachable_kinds=reachable)


class TokenService:
    """Shared-secret signed tokens with an expiry window."""

    def __init__(self, secret: str, ttl_s: int, clock: Clock):
        self._secret = secret.encode("utf-8")
        self.ttl_s = ttl_s
        self._clock = clock

    def _sign(self, principal: str, issued_at: int) -> str:
        msg = f"{principal}|{issued_at}".encode("utf-8")
        return hmac.new(self._secret, msg, hashlib.sha256).hexdigest()

    def issue(self, principal: str) -> Credentials:
        now = self._clock.now_ms()
        return Credentials(principal=principal, token=self._sign(principal, now), issued_at=now)

    def verify(self, credentials: Credentials) -> None:
        expected = self._sign(credentials.principal, credentials.issued_at)
        if not hmac.compare_digest(expected, credentials.token):
            raise InvalidCredentials(f"bad token signature for {credentials.principal}")
        age_ms = self._clock.now_ms() - credentials.issued_at
        if age_ms > self.ttl_s * 1000:
            raise ExpiredCredentials(f"token for {credentials.principal} aged {age_ms} ms")


class AuthService:
    """Resolves credentials to privileges from system and user registries."""

    def __init__(self, token_service: TokenService, profile_lookup: Callable[[str], Optional[dict]]):
        self.tokens = token_service
        self._profile_lookup = profile_lookup
        self._system_principals: set[str] = set()

    def register_system_principal(self, principal: str) -> None:
        self._system_principals.add(principal)

    def roles_of(self, principal: str) -> frozenset:
        if principal in self._system_principals:
            return frozenset({ROLE_SYSTEM})
        profile = self._profile_lookup(principal)
        if profile is None:
            raise UnknownPrincipal(principal)
        if not profile.get("enabled", True):
            raise AccountDisabled(principal)
        return frozenset(profile.get("roles", []))

    def authenticate(self, credentials: Credentials) -> PrivilegeSet:
        self.tokens.verify(credentials)
        return privileges_for_roles(self.roles_of(credentials.principal))


@dataclass(frozen=True)
class AgentDescriptor:
    agent_id: str
    kind: str
    accessibility: str  # "Public" | "Private"
    home_container: str

    def __post_init__(self):
        if self.kind not in AGENT_KINDS:
            raise ValidationFailure(f"unknown agent kind {self.kind}")
        expected = "Private" if self.kind in PRIVATE_KINDS else "Public"
        if self.accessibility != expected:
            raise ValidationFailure(f"{self.kind} must be {expected}")

    def to_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "kind": self.kind,
            "accessibility": self.accessibility,
            "home_container": self.home_container,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AgentDescriptor":
        return cls(d["agent_id"], d["kind"], d["accessibility"], d["home_container"])


def make_descriptor(agent_id: str, kind: str, home_container: str) -> AgentDescriptor:
    access = "Private" if kind in PRIVATE_KINDS else "Public"
    return AgentDescriptor(agent_id=agent_id, kind=kind, accessibility=access, home_container=home_container)


class Lifecycle(str, Enum):
    ACTIVE = "Active"
    SLEEPING = "Sleeping"
    TERMINATED = "Terminated"


@dataclass
class Outbound:
    """A message a behavior wants sent; the runtime fills in envelope plumbing."""

    to: str
    kind: MessageKind
    payload: dict
    correlation_id: Optional[str] = None


# behavior: (state dict, envelope, runtime) -> list[Outbound]; state mutations persist
Behavior = Callable[[dict, MessageEnvelope, "AgentRuntime"], list]


@dataclass
class AgentState:
    descriptor: AgentDescriptor
    lifecycle: Lifecycle = Lifecycle.ACTIVE
    mailbox: list = field(default_factory=list)
    internal: bytes = b"{}"
    behavior: Optional[Behavior] = None
    credentials: Optional[Credentials] = None


@dataclass
class Container:
    container_id: str
    kind: str  # "Main" | "Client"
    hosted: set = field(default_factory=set)


class AgentRuntime:
    """Registry of containers and agents plus the delivery/scheduling core."""

    MAIN_CONTAINER = "main"

    def __init__(self, clock: Clock, auth: AuthService, deterministic: bool = False,
                 audit_hook: Optional[Callable] = None):
        self.clock = clock
        self.auth = auth
        self.deterministic = deterministic
        self.ids = IdSource(deterministic=deterministic)
        self.audit_hook = audit_hook  # (action, principal, subject, detail) -> None
        self.containers: dict[str, Container] = {
            self.MAIN_CONTAINER: Container(self.MAIN_CONTAINER, "Main")
        }
        self.agents: dict[str, AgentState] = {}
        self.client_outboxes: dict[str, list] = {}
        self.trace: list[MessageEnvelope] = []
        self._behaviors: dict[str, Behavior] = {}
        self._lock = threading.RLock()

    # --- containers and client sessions ---

    def create_client_container(self, container_id: str) -> Container:
        with self._lock:
            if container_id in self.containers:
                raise ValidationFailure(f"container {container_id} exists")
            c = Container(container_id, "Client")
            self.containers[container_id] = c
            return c

    def remove_container(self, container_id: str) -> None:
        with self._lock:
            if container_id == self.MAIN_CONTAINER:
                raise ValidationFailure("cannot remove the Main container")
            c = self.containers.pop(container_id, None)
            if c:
                for aid in list(c.hosted):
                    self.agents.pop(aid, None)

    def register_client(self, client_id: str) -> None:
        with self._lock:
            self.client_outboxes.setdefault(client_id, [])

    def drain_client(self, client_id: str) -> list:
        with self._lock:
            out = self.client_outboxes.get(client_id, [])
            self.client_outboxes[client_id] = []
            return out

    # --- behaviors ---

    def register_behavior(self, kind: str, behavior: Behavior) -> None:
        self._behaviors[kind] = behavior

    # --- lifecycle operations ---

    def dispatch(self, descriptor: AgentDescriptor, container_id: str,
                 credentials: Credentials) -> str:
        privileges = self.auth.authenticate(credentials)
        allowed = frozenset().union(
            *(_ROLE_DISPATCHABLE[r] for r in privileges.roles)
        ) if privileges.roles else frozenset()
        if descriptor.kind not in allowed:
            self._audit("AuthFailure", credentials.principal, descriptor.agent_id,
                        {"op": "dispatch", "kind": descriptor.kind})
            raise Unauthorized(f"{credentials.principal} may not dispatch {descriptor.kind}")
        with self._lock:
            if descriptor.agent_id in self.agents:
                raise DuplicateAgentId(descriptor.agent_id)
            container = self.containers.get(container_id)
            if container is None:
                raise NoSuchContainer(container_id)
            agent = AgentState(
                descriptor=descriptor,
                lifecycle=Lifecycle.ACTIVE,
                behavior=self._behaviors.get(descriptor.kind),
                credentials=self.auth.tokens.issue(f"agent/{descriptor.agent_id}"),
            )
            self.auth.register_system_principal(f"agent/{descriptor.agent_id}")
            self.agents[descriptor.agent_id] = agent
            container.hosted.add(descriptor.agent_id)
            return descriptor.agent_id

    def _get_agent(self, agent_id: str) -> AgentState:
        agent = self.agents.get(agent_id)
        if agent is None:
            raise AgentUnknown(agent_id)
        return agent

    def terminate(self, agent_id: str) -> Lifecycle:
        with self._lock:
            agent = self._get_agent(agent_id)
            agent.lifecycle = Lifecycle.TERMINATED
            return agent.lifecycle

    def sleep(self, agent_id: str) -> Lifecycle:
        with self._lock:
            agent = self._get_agent(agent_id)
            if agent.lifecycle is not Lifecycle.ACTIVE:
                raise IllegalTransition(f"sleep from {agent.lifecycle.value}")
            agent.lifecycle = Lifecycle.SLEEPING
            return agent.lifecycle

    def wake(self, agent_id: str) -> Lifecycle:
        with self._lock:
            agent = self._get_agent(agent_id)
            if agent.lifecycle is not Lifecycle.SLEEPING:
                raise IllegalTransition(f"wake from {agent.lifecycle.value}")
            agent.lifecycle = Lifecycle.ACTIVE
            return agent.lifecycle

    # --- routing and delivery ---

    def _kind_of(self, endpoint_id: str) -> Optional[str]:
        if endpoint_id.startswith("client/"):
            return KIND_CLIENT
        agent = self.agents.get(endpoint_id)
        return agent.descriptor.kind if agent else None

    def make_envelope(self, sender: str, out: Outbound, correlation_id: str,
                      credentials: Credentials) -> MessageEnvelope:
        return MessageEnvelope(
            v=WIRE_VERSION,
            msg_id=self.ids.next_id(),
            correlation_id=out.correlation_id or correlation_id,
            ts=self.clock.now_ms(),
            sender=sender,
            to=out.to,
            kind=out.kind,
            credentials=credentials.to_dict(),
            payload=out.payload,
        )

    def deliver(self, envelope: MessageEnvelope):
        """Returns ("accepted", None) or ("rejected", reason)."""
        try:
            creds = Credentials.from_dict(envelope.credentials)
            self.auth.authenticate(creds)
        except (InvalidCredentials, ExpiredCredentials, UnknownPrincipal) as e:
            self._audit("AuthFailure", envelope.credentials.get("principal", "?"),
                        envelope.to, {"reason": e.code, "kind": envelope.kind.value})
            self._bounce(envelope, e.code)
            return "rejected", e.code

        # kind resolution and the role check stay outside the runtime lock:
        # profile lookups go through the store, which itself delivers audit
        # envelopes while holding its own lock.
        sender_kind = self._kind_of(envelope.sender)
        target_kind = self._kind_of(envelope.to)
        if target_kind is None:
            self._audit("RouteRejection", creds.principal, envelope.to,
                        {"reason": "AgentUnknown"})
            self._bounce(envelope, "AgentUnknown")
            return "rejected", "AgentUnknown"
        if sender_kind is None or target_kind not in ROUTES.get(sender_kind, set()):
            self._audit("RouteRejection", creds.principal, envelope.to,
                        {"reason": "RouteForbidden", "route": f"{sender_kind}->{target_kind}"})
            self._bounce(envelope, "RouteForbidden")
            return "rejected", "RouteForbidden"
        if sender_kind == KIND_CLIENT:
            privileges = privileges_for_roles(self.auth.roles_of(creds.principal))
            if target_kind not in privileges.reachable_kinds:
                self._audit("RouteRejection", creds.principal, envelope.to,
                            {"reason": "RouteForbidden", "route": f"role->{target_kind}"})
                self._bounce(envelope, "RouteForbidden")
                return "rejected", "RouteForbidden"

        with self._lock:
            if target_kind == KIND_CLIENT:
                self.client_outboxes.setdefault(envelope.to, []).append(envelope)
                self.trace.append(envelope)
                return "accepted", None

            target = self.agents[envelope.to]
            if target.lifecycle is Lifecycle.TERMINATED:
                self._audit("RouteRejection", creds.principal, envelope.to,
                            {"reason": "AgentTerminated"})
                self._bounce(envelope, "AgentTerminated")
                return "rejected", "AgentTerminated"
            target.mailbox.append(envelope)
            self.trace.append(envelope)
            return "accepted", None

    def _bounce(self, envelope: MessageEnvelope, reason: str) -> None:
        """Send an ERROR envelope back to a client sender; agents see it in trace."""
        if envelope.kind is MessageKind.ERROR:
            return  # never bounce a bounce
        if envelope.sender.startswith("client/"):
            err = MessageEnvelope(
                v=WIRE_VERSION,
                msg_id=self.ids.next_id(),
                correlation_id=envelope.correlation_id,
                ts=self.clock.now_ms(),
                sender="runtime",
                to=envelope.sender,
                kind=MessageKind.ERROR,
                credentials={},
                payload={"code": reason, "reason": f"delivery rejected: {reason}"},
            )
            with self._lock:
                self.client_outboxes.setdefault(envelope.sender, []).append(err)

    def _audit(self, action: str, principal: str, subject: str, detail: dict) -> None:
        if self.audit_hook:
            self.audit_hook(action, principal, subject, detail)

    # --- scheduling ---

    def step(self) -> int:
        """Process at most one envelope per Active agent, in sorted-id order."""
        processed = 0
        for agent_id in sorted(self.agents):
            with self._lock:
                agent = self.agents.get(agent_id)
                if agent is None or agent.lifecycle is not Lifecycle.ACTIVE or not agent.mailbox:
                    continue
                envelope = agent.mailbox.pop(0)
            processed += 1
            self._handle(agent, envelope)
        return processed

    def _handle(self, agent: AgentState, envelope: MessageEnvelope) -> None:
        if agent.behavior is None:
            return
        state = json.loads(agent.internal.decode("utf-8"))
        outs = agent.behavior(state, envelope, self) or []
        agent.internal = canonical_json(state)
        for out in outs:
            sent = self.make_envelope(
                sender=agent.descriptor.agent_id,
                out=out,
                correlation_id=envelope.correlation_id,
                credentials=agent.credentials,
            )
            self.deliver(sent)

    def run_until_quiet(self, max_steps: int = 10000) -> int:
        total = 0
        for _ in range(max_steps):
            n = self.step()
            if n == 0:
                return total
            total += n
        return total

    # --- checkpoint / resume ---

    def checkpoint(self, agent_id: str) -> bytes:
        with self._lock:
            agent = self._get_agent(agent_id)
            if agent.lifecycle is Lifecycle.TERMINATED:
                raise AgentTerminated(agent_id)
            payload = canonical_json({
                "descriptor": agent.descriptor.to_dict(),
                "lifecycle": Lifecycle.SLEEPING.value,
                "mailbox": [e.to_dict() for e in agent.mailbox],
                "internal": base64.b64encode(agent.internal).decode("ascii"),
            })
            agent.lifecycle = Lifecycle.SLEEPING
        digest = hashlib.sha256(payload).digest()
        return (CHECKPOINT_MAGIC + bytes([CHECKPOINT_VERSION])
                + len(payload).to_bytes(4, "big") + payload + digest)

    def resume(self, blob: bytes, container_id: str) -> str:
        if not blob.startswith(CHECKPOINT_MAGIC):
            raise DigestMismatch("bad checkpoint magic")
        offset = len(CHECKPOINT_MAGIC)
        if blob[offset] != CHECKPOINT_VERSION:
            raise DigestMismatch(f"unsupported checkpoint version {blob[offset]}")
        offset += 1
        length = int.from_bytes(blob[offset:offset + 4], "big")
        offset += 4
        payload = blob[offset:offset + length]
        digest = blob[offset + length:offset + length + DIGEST_LEN]
        if hashlib.sha256(payload).digest() != digest:
            raise DigestMismatch("checkpoint digest does not verify")
        doc = json.loads(payload.decode("utf-8"))
        descriptor = AgentDescriptor.from_dict(doc["descriptor"])
        with self._lock:
            if descriptor.agent_id in self.agents:
                raise DuplicateAgentId(descriptor.agent_id)
            container = self.containers.get(container_id)
            if container is None:
                raise NoSuchContainer(container_id)
            agent = AgentState(
                descriptor=replace(descriptor, home_container=container_id),
                lifecycle=Lifecycle.ACTIVE,
                mailbox=[MessageEnvelope.from_dict(d) for d in doc["mailbox"]],
                internal=base64.b64decode(doc["internal"]),
                behavior=self._behaviors.get(descriptor.kind),
                credentials=self.auth.tokens.issue(f"agent/{descriptor.agent_id}"),
            )
            self.auth.register_system_principal(f"agent/{descriptor.agent_id}")
            self.agents[descriptor.agent_id] = agent
            container.hosted.add(descriptor.agent_id)
            return descriptor.agent_id
