"""The 13-phase session approval protocol as per-role state machines.

A session is approved through thirteen strictly sequential phases. Each
phase is one request/response exchange between two of the seven roles;
the phase ends only when its final response has arrived back at the
requesting node, and the next phase is always initiated by the previous
phase's destination. Phase 1 starts with the application; phases 2..13
start when the previous phase ends. The driving loop (see simnet) is
responsible for observing phase completion and invoking begin_phase on
the next initiator, which is what keeps a suppressed response from ever
leaking activity into later phases.

State machines are pure: handle_message and begin_phase take a role
state and return a new one together with any outgoing messages, so a
single session must be driven by one logical event stream while distinct
sessions can proceed concurrently against a shared read-only vault.

Messages that do not fit the expected (phase, kind) for their session
are discarded and counted, never buffered. The session authority
additionally refuses to learn about any session whose approval request
did not arrive through the front-end.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping

from . import keys as keylib
from .errors import InvalidInput
from .keys import HierarchicalKey, KeyPart, SessionKeySet
from .vault import Vault


class Role(Enum):
    A = "A"
    F = "F"
    SAC = "SAC"
    SAC_DB = "SAC-DB"
    SAC_SH = "SAC-SH"
    CLOUD_A = "CloudA"
    CLOUD_B = "CloudB"


class MessageKind(Enum):
    REQUEST = "request"
    RESPONSE = "response"


class StartCondition(Enum):
    APPLICATION_START = "application-start"
    PREVIOUS_PHASE_ENDS = "previous-phase-ends"


@dataclass(frozen=True)
class TimeoutMode:
    """Timeout policy for a run: none, per-phase, or the localized watchdog at F."""

    kind: str  # "none" | "per-phase" | "localized-f"
    seconds: float | None = None

    @classmethod
    def none(cls) -> "TimeoutMode":
        return cls("none")

    @classmethod
    def per_phase(cls, seconds: float) -> "TimeoutMode":
        return cls("per-phase", float(seconds))

    @classmethod
    def localized_f(cls, seconds: float = 200.0) -> "TimeoutMode":
        return cls("localized-f", float(seconds))

    @classmethod
    def parse(cls, text: str) -> "TimeoutMode":
        """Parse the CLI/scenario syntax: none | per-phase:<s> | localized-f:<s>."""
        if text == "none":
            return cls.none()
        for prefix, ctor in (("per-phase:", cls.per_phase), ("localized-f:", cls.localized_f)):
            if text.startswith(prefix):
                try:
                    return ctor(float(text[len(prefix):]))
                except ValueError:
                    break
        raise InvalidInput(f"bad timeout mode {text!r}")

    def encode(self) -> str:
        if self.kind == "none":
            return "none"
        return f"{self.kind}:{self.seconds:g}"


@dataclass(frozen=True)
class PhaseSpec:
    """One row of the protocol task table."""

    index: int
    name: str
    source: Role
    destination: Role
    start_condition: StartCondition
    end_condition: str
    timeout_used: bool
    timeout_s: float | None
    request_bytes: int
    response_bytes: int


# Phase table: (index, name, source, destination, request bytes).
# A requesting exchange carries 1024 bytes; an exchange that delivers
# credentials, a session key, or an access grant carries 4096. Every
# phase-closing final response is a bare 1024-byte acknowledgment.
_R = Role
_TABLE = (
    (1, "Secure (Request, R1, R2)", _R.A, _R.F, 1024),
    (2, "Secure (Request, IDr, IDs)", _R.F, _R.A, 1024),
    (3, "Secure (Response, IDr, IDs)", _R.A, _R.F, 4096),
    (4, "Fetch (R1, R2): IF Valid (IDr, IDs)", _R.F, _R.SAC, 1024),
    (5, "Verify (IDr, IDs)", _R.SAC, _R.SAC_DB, 1024),
    (6, "Valid (IDr, IDs)", _R.SAC_DB, _R.SAC, 4096),
    (7, "Invoke (Key, IDsess): Fetch (R1, R2)", _R.SAC, _R.SAC_SH, 4096),
    (8, "Secure (Access, R1)", _R.SAC_SH, _R.CLOUD_A, 1024),
    (9, "Secure (Access, R1)", _R.CLOUD_A, _R.SAC_SH, 4096),
    (10, "Secure (Request, R2): IF Key (IDsess)", _R.SAC_SH, _R.CLOUD_B, 1024),
    (11, "Secure (Access, R2)", _R.CLOUD_B, _R.SAC_SH, 4096),
    (12, "Secure (Access, R1, R2): Key (IDsess)", _R.SAC_SH, _R.F, 4096),
    (13, "Secure (Access, R1, R2): Key (IDsess)", _R.F, _R.A, 4096),
)

PHASE_COUNT = len(_TABLE)
ACK_BYTES = 1024


def protocol_table(timeout_mode: TimeoutMode | None = None,
                   request_bytes: Mapping[int, int] | None = None,
                   response_bytes: Mapping[int, int] | None = None,
                   ) -> tuple[PhaseSpec, ...]:
    """The ordered 13-phase table under a timeout policy.

    Per-phase byte counts may be overridden (scenario files list the
    defaults explicitly so the assignment stays auditable).
    """
    mode = timeout_mode or TimeoutMode.none()
    per_phase = mode.kind == "per-phase"
    specs = []
    for index, name, source, destination, req_bytes in _TABLE:
        specs.append(PhaseSpec(
            index=index,
            name=name,
            source=source,
            destination=destination,
            start_condition=(StartCondition.APPLICATION_START if index == 1
                             else StartCondition.PREVIOUS_PHASE_ENDS),
            end_condition="final-response",
            timeout_used=per_phase,
            timeout_s=mode.seconds if per_phase else None,
            request_bytes=(request_bytes or {}).get(index, req_bytes),
            response_bytes=(response_bytes or {}).get(index, ACK_BYTES),
        ))
    return tuple(specs)


_DEFAULT_TABLE = protocol_table()


def phase_spec(index: int) -> PhaseSpec:
    return _DEFAULT_TABLE[index - 1]


@dataclass(frozen=True)
class ProtocolMessage:
    session_id: bytes
    phase_index: int
    kind: MessageKind
    source: Role
    destination: Role
    payload_fields: Mapping[str, object]
    payload_bytes: int


# -- session bookkeeping ------------------------------------------------------

class SessionStatus(Enum):
    IN_PROGRESS = "in-progress"
    COMPLETED = "completed"
    DROPPED = "dropped"


@dataclass(frozen=True)
class DropReason:
    code: str  # "phase-timeout" | "localized-timeout" | "invalid-credentials"
    phase_index: int | None = None

    def __str__(self) -> str:
        if self.phase_index is None:
            return self.code
        return f"{self.code}({self.phase_index})"


@dataclass(frozen=True)
class Requester:
    """The foreign-realm tenant a session is requested for."""

    tenant_id: str
    idr: KeyPart
    ids: KeyPart


@dataclass(frozen=True)
class SessionState:
    """Progress of one session through the phase sequence."""

    session_id: bytes
    requester: Requester
    principal: str
    resources: tuple[str, str]
    current_phase: int = 0
    status: SessionStatus = SessionStatus.IN_PROGRESS
    drop_reason: DropReason | None = None
    idsess: SessionKeySet | None = None
    started_at: float | None = None
    ended_at: float | None = None


def advance_phase(session: SessionState, final_response: ProtocolMessage) -> SessionState:
    """Complete one phase on arrival of its final response.

    A response for any phase other than current_phase + 1 is a phase
    skip: the session is returned unchanged and the caller records the
    violation.
    """
    if session.status is not SessionStatus.IN_PROGRESS:
        return session
    if final_response.phase_index != session.current_phase + 1:
        return session
    done = final_response.phase_index
    if done == PHASE_COUNT:
        return replace(session, current_phase=done, status=SessionStatus.COMPLETED)
    return replace(session, current_phase=done)


# Timers fire at start + limit; subtraction can round a hair under the
# limit, so expiry checks allow a nanosecond of slack.
_TIMER_SLACK_S = 1e-9


def on_timeout(session: SessionState, phase_index: int, elapsed: float,
               spec: PhaseSpec) -> SessionState:
    """Drop a session whose phase has outlived the per-phase limit."""
    if session.status is not SessionStatus.IN_PROGRESS:
        return session
    if not spec.timeout_used or spec.timeout_s is None:
        return session
    if elapsed < spec.timeout_s - _TIMER_SLACK_S:
        return session
    return replace(session, status=SessionStatus.DROPPED,
                   drop_reason=DropReason("phase-timeout", phase_index))


def localized_timeout_at_f(session: SessionState, waiting_since: float, now: float,
                           limit_s: float = 200.0) -> SessionState:
    """The front-end watchdog: drop if the cloud-side answer is overdue.

    Applies while the front-end has forwarded the approval request
    (phase 4 complete) and is still waiting for the grant delivery of
    phase 12.
    """
    if session.status is not SessionStatus.IN_PROGRESS:
        return session
    if now - waiting_since < limit_s - _TIMER_SLACK_S:
        return session
    return replace(session, status=SessionStatus.DROPPED,
                   drop_reason=DropReason("localized-timeout"))


# -- role state ---------------------------------------------------------------

@dataclass(frozen=True)
class SessionSlot:
    """What one role remembers about one session."""

    expect: tuple[int, MessageKind] | None = None
    requester: str | None = None
    principal: str | None = None
    resources: tuple[str, str] | None = None
    idr: KeyPart | None = None
    ids: KeyPart | None = None
    verdict: bool | None = None
    realm: tuple[str, str, str] | None = None  # (tenant, cloud, subdomain)
    keyset: SessionKeySet | None = None
    requester_key: HierarchicalKey | None = None
    grants: tuple[str, ...] = ()
    granted: bool | None = None
    got_final_grant: bool = False


@dataclass(frozen=True)
class RoleState:
    role: Role
    hosted_resources: frozenset[str] = frozenset()
    sessions: Mapping[bytes, SessionSlot] = field(default_factory=dict)
    violations: int = 0


def initial_role_states(resource_hosting: Mapping[str, Role] | None = None,
                        ) -> dict[Role, RoleState]:
    """Fresh state for all seven roles; R1 on CloudA, R2 on CloudB by default."""
    hosting = resource_hosting or {"R1": Role.CLOUD_A, "R2": Role.CLOUD_B}
    states = {}
    for role in Role:
        hosted = frozenset(r for r, owner in hosting.items() if owner is role)
        states[role] = RoleState(role=role, hosted_resources=hosted)
    return states


def _with_slot(state: RoleState, session_id: bytes, slot: SessionSlot) -> RoleState:
    sessions = dict(state.sessions)
    sessions[session_id] = slot
    return replace(state, sessions=sessions)


def _violation(state: RoleState) -> RoleState:
    return replace(state, violations=state.violations + 1)


def _next_expectation(role: Role, completed: int) -> tuple[int, MessageKind] | None:
    """What this role should see next after completing a phase as its source.

    The next time the role appears in the table it is always as a
    destination (the table never gives one role two consecutive turns as
    source), so the expectation is the request of that later phase.
    """
    for spec in _DEFAULT_TABLE[completed:]:
        if spec.destination is role:
            return (spec.index, MessageKind.REQUEST)
        if spec.source is role:
            return None  # will be re-armed by begin_phase
    return None


@dataclass(frozen=True)
class HandleResult:
    state: RoleState
    outgoing: tuple[ProtocolMessage, ...]
    outcome: str  # "ok", "phase-complete", "granted", ... or "discarded:<why>"

    @property
    def discarded(self) -> bool:
        return self.outcome.startswith("discarded:")


@dataclass(frozen=True)
class BeginResult:
    state: RoleState
    outgoing: tuple[ProtocolMessage, ...]
    drop_reason: DropReason | None = None
    minted: SessionKeySet | None = None


def grant_access(cloud_state: RoleState, presenter: Role, idsess_key: HierarchicalKey,
                 resource: str) -> bool:
    """Whether a cloud opens a resource to a presented session key.

    Access is granted only to the session handler, only for a resource
    hosted on this cloud, and only for a key belonging to the current
    generation of the session's approved key set.
    """
    if presenter is not Role.SAC_SH:
        return False
    if resource not in cloud_state.hosted_resources:
        return False
    try:
        session_id = idsess_key.session_field()
    except Exception:
        return False
    slot = cloud_state.sessions.get(session_id)
    if slot is None or slot.keyset is None:
        return False
    return keylib.verify_session_key(idsess_key, slot.keyset)


# Phase at which each role first hears of a session (as a destination).
_FIRST_CONTACT = {
    Role.F: 1,
    Role.SAC: 4,
    Role.SAC_DB: 5,
    Role.SAC_SH: 7,
    Role.CLOUD_A: 8,
    Role.CLOUD_B: 10,
}


def _discard(state: RoleState, why: str) -> HandleResult:
    return HandleResult(_violation(state), (), f"discarded:{why}")


def _respond(spec: PhaseSpec, msg: ProtocolMessage, fields: dict | None = None,
             ) -> ProtocolMessage:
    return ProtocolMessage(
        session_id=msg.session_id,
        phase_index=spec.index,
        kind=MessageKind.RESPONSE,
        source=spec.destination,
        destination=spec.source,
        payload_fields=fields or {"ack": True},
        payload_bytes=spec.response_bytes,
    )


def handle_message(state: RoleState, msg: ProtocolMessage, vault: Vault) -> HandleResult:
    """Process one message at one role; pure transition.

    Requests are answered with the phase's final response; responses
    arm the role's expectation for its next appearance in the phase
    sequence. Anything out of order is discarded and counted.
    """
    if msg.destination is not state.role:
        return _discard(state, "misaddressed")
    spec = phase_spec(msg.phase_index)
    if msg.kind is MessageKind.REQUEST:
        return _handle_request(state, spec, msg, vault)
    return _handle_response(state, spec, msg)


def _handle_response(state: RoleState, spec: PhaseSpec, msg: ProtocolMessage) -> HandleResult:
    slot = state.sessions.get(msg.session_id)
    if slot is None:
        return _discard(state, "unknown-session")
    if slot.expect != (spec.index, MessageKind.RESPONSE):
        return _discard(state, "out-of-order")
    slot = replace(slot, expect=_next_expectation(state.role, spec.index))
    return HandleResult(_with_slot(state, msg.session_id, slot), (), "phase-complete")


def _handle_request(state: RoleState, spec: PhaseSpec, msg: ProtocolMessage,
                    vault: Vault) -> HandleResult:
    if msg.source is not spec.source:
        # The authority only entertains approval traffic forwarded by the
        # front-end; elsewhere a wrong source is a plain routing violation.
        if state.role is Role.SAC:
            return _discard(state, "not-via-front-end")
        return _discard(state, "wrong-source")

    slot = state.sessions.get(msg.session_id)
    first_contact = _FIRST_CONTACT.get(state.role) == spec.index
    if slot is None:
        if not first_contact:
            return _discard(state, "unknown-session")
        slot = SessionSlot()
    else:
        if first_contact:
            return _discard(state, "duplicate-session")
        if slot.expect != (spec.index, MessageKind.REQUEST):
            return _discard(state, "out-of-order")

    fields = msg.payload_fields
    outcome = "ok"
    resp_fields = None

    if spec.index == 1:  # front-end learns the session exists
        slot = SessionSlot(requester=fields["requester"], principal=fields["principal"],
                           resources=tuple(fields["resources"]))
    elif spec.index == 2:  # principal asked for the requester's credentials
        pass
    elif spec.index == 3:  # front-end stores the submitted credentials
        slot = replace(slot, idr=fields["idr"], ids=fields["ids"])
    elif spec.index == 4:  # authority accepts the forwarded approval request
        slot = SessionSlot(requester=fields["requester"],
                           resources=tuple(fields["resources"]),
                           idr=fields["idr"], ids=fields["ids"])
    elif spec.index == 5:  # credential db verifies the pair
        idr, ids = fields["idr"], fields["ids"]
        valid = vault.verify_membership(idr, ids)
        member = vault.find_member(idr, ids) if valid else None
        realm = (member.tenant_id, member.cloud_id, member.subdomain_id) if member else None
        slot = replace(slot, verdict=valid, realm=realm)
        outcome = "valid" if valid else "invalid"
    elif spec.index == 6:  # authority records the verdict
        slot = replace(slot, verdict=fields["verdict"], realm=fields.get("realm"))
        outcome = "valid" if fields["verdict"] else "invalid"
    elif spec.index == 7:  # session handler receives the minted key set
        slot = replace(slot, keyset=fields["keyset"],
                       requester_key=fields["key"], resources=tuple(fields["resources"]))
    elif spec.index in (8, 10):  # a cloud decides on access
        slot = replace(slot, keyset=fields["keyset"])
        granted = grant_access(_with_slot(state, msg.session_id, slot),
                               msg.source, fields["key"], fields["resource"])
        slot = replace(slot, granted=granted,
                       grants=slot.grants + ((fields["resource"],) if granted else ()))
        outcome = "granted" if granted else "refused"
        resp_fields = {"ack": True, "granted": granted}
    elif spec.index in (9, 11):  # session handler collects a grant
        slot = replace(slot, grants=slot.grants + (fields["resource"],))
    elif spec.index == 12:  # front-end receives grants and the session key
        slot = replace(slot, grants=tuple(fields["grants"]), requester_key=fields["key"],
                       keyset=fields["keyset"], got_final_grant=True)
    elif spec.index == 13:  # principal holds the approved key and access
        slot = replace(slot, grants=tuple(fields["grants"]), requester_key=fields["key"])

    slot = replace(slot, expect=None)  # responder waits for its next begin_phase
    new_state = _with_slot(state, msg.session_id, slot)
    return HandleResult(new_state, (_respond(spec, msg, resp_fields),), outcome)


def begin_phase(state: RoleState, spec: PhaseSpec, session: SessionState,
                vault: Vault) -> BeginResult:
    """Start a phase at its initiating role, emitting the phase request.

    Called by the driving loop once the previous phase has ended (or at
    application start for phase 1). The authority aborts here with an
    invalid-credentials drop instead of invoking the session handler
    when the verdict was negative.
    """
    sid = session.session_id
    slot = state.sessions.get(sid)
    minted = None

    if spec.index == 1:
        slot = SessionSlot(requester=session.requester.tenant_id, principal=session.principal,
                           resources=session.resources,
                           idr=session.requester.idr, ids=session.requester.ids)
        fields = {"requester": session.requester.tenant_id, "principal": session.principal,
                  "resources": session.resources}
    elif spec.index == 2:
        fields = {"need": ("IDr", "IDs")}
    elif spec.index == 3:
        fields = {"idr": slot.idr, "ids": slot.ids}
    elif spec.index == 4:
        fields = {"requester": slot.requester, "resources": slot.resources,
                  "idr": slot.idr, "ids": slot.ids}
    elif spec.index == 5:
        fields = {"idr": slot.idr, "ids": slot.ids}
    elif spec.index == 6:
        fields = {"verdict": slot.verdict, "realm": slot.realm,
                  "idr": slot.idr, "ids": slot.ids}
    elif spec.index == 7:
        if not slot.verdict or slot.realm is None:
            return BeginResult(state, (), drop_reason=DropReason("invalid-credentials"))
        tenant_id, cloud_id, subdomain_id = slot.realm
        minted = keylib.mint_session_keys(sid, [(tenant_id, cloud_id, subdomain_id)], vault)
        slot = replace(slot, keyset=minted, requester_key=minted.keys[tenant_id])
        fields = {"keyset": minted, "key": minted.keys[tenant_id],
                  "resources": slot.resources}
    elif spec.index == 8:
        fields = {"resource": slot.resources[0], "key": slot.requester_key,
                  "keyset": slot.keyset}
    elif spec.index in (9, 11):
        if not slot.granted:
            return BeginResult(state, ())  # no grant to deliver; session stalls
        # a cloud reports the one resource it hosts
        fields = {"resource": next(iter(state.hosted_resources)), "grant": True}
    elif spec.index == 10:
        fields = {"resource": slot.resources[1], "key": slot.requester_key,
                  "keyset": slot.keyset}
    elif spec.index == 12:
        fields = {"grants": slot.grants, "key": slot.requester_key, "keyset": slot.keyset}
    elif spec.index == 13:
        fields = {"grants": slot.grants, "key": slot.requester_key}
    else:
        raise InvalidInput(f"no phase {spec.index}")

    request = ProtocolMessage(
        session_id=sid,
        phase_index=spec.index,
        kind=MessageKind.REQUEST,
        source=spec.source,
        destination=spec.destination,
        payload_fields=fields,
        payload_bytes=spec.request_bytes,
    )
    slot = replace(slot, expect=(spec.index, MessageKind.RESPONSE))
    return BeginResult(_with_slot(state, sid, slot), (request,), minted=minted)
