"""Request routing and the research-session state machine.

Requests are classified for research complexity via one structured gateway
call; routing is a pure threshold predicate. Sessions advance only along the
transition table below, every step appended to an event log whose replay
reproduces the terminal phase.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Any

from .errors import ClassificationError, TransitionError, ValidationError
from .gateway import ModelRequest, SchemaValidationError, complete_structured

logger = logging.getLogger(__name__)

FAST_RETRIEVAL = "FastRetrieval"
DEEP_RESEARCH = "DeepResearch"

_session_counter = itertools.count(1)


@dataclass
class ComplexitySignals:
    ambiguity: float
    expected_subquestions: int
    requires_traceability: bool
    expected_depth: str  # factoid | analytical


@dataclass
class RoutingPolicy:
    ambiguity_threshold: float = 0.5
    subq_threshold: int = 2


@dataclass
class SessionEvent:
    seq: int
    event: str
    from_phase: str
    to_phase: str
    payload: dict[str, Any] = field(default_factory=dict)
    at: str = ""


# Phases
CREATED = "Created"
CLARIFYING = "Clarifying"
PLANNING = "Planning"
AWAITING_PLAN_APPROVAL = "AwaitingPlanApproval"
EXECUTING = "Executing"
AWAITING_CONTINUE_DECISION = "AwaitingContinueDecision"
SYNTHESIZING = "Synthesizing"
DONE = "Done"
FAILED = "Failed"

TERMINAL_PHASES = frozenset({DONE, FAILED})

# (phase, event) -> next phase
TRANSITIONS: dict[tuple[str, str], str] = {
    (CREATED, "ClarificationsGenerated"): CLARIFYING,
    (CREATED, "FastAnswerReady"): DONE,
    (CLARIFYING, "BriefBuilt"): PLANNING,
    (PLANNING, "PlanDrafted"): AWAITING_PLAN_APPROVAL,
    (AWAITING_PLAN_APPROVAL, "PlanEdited"): AWAITING_PLAN_APPROVAL,
    (AWAITING_PLAN_APPROVAL, "PlanApproved"): EXECUTING,
    (EXECUTING, "IterationCompleted"): EXECUTING,
    (EXECUTING, "HumanGateRequested"): AWAITING_CONTINUE_DECISION,
    (EXECUTING, "StopCriterionMet"): SYNTHESIZING,
    (AWAITING_CONTINUE_DECISION, "ContinueDecision"): EXECUTING,
    (AWAITING_CONTINUE_DECISION, "StopDecision"): SYNTHESIZING,
    (SYNTHESIZING, "ReportCompleted"): DONE,
}

ERROR_EVENT = "ErrorRaised"


@dataclass
class ResearchSession:
    session_id: str
    user_request: str
    phase: str = CREATED
    route: str | None = None
    brief: Any = None
    plan: Any = None
    outline: Any = None
    iteration_count: int = 0
    event_log: list[SessionEvent] = field(default_factory=list)
    traces: list = field(default_factory=list)
    report: Any = None
    config: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def create(cls, user_request: str, **config: Any) -> "ResearchSession":
        if not user_request.strip():
            raise ValidationError("user_request must be non-empty")
        return cls(
            session_id=f"ses{next(_session_counter):06d}",
            user_request=user_request,
            config=config,
        )


def classify_complexity(request: str, gateway) -> ComplexitySignals:
    """One structured gateway call producing fully populated routing signals."""
    if not request.strip():
        raise ValidationError("request must be non-empty")
    try:
        parsed = complete_structured(
            gateway,
            ModelRequest(
                role_tag="classify",
                prompt=(
                    "Classify the research complexity of this request. Respond as "
                    'JSON {"ambiguity": 0..1, "expected_subquestions": int, '
                    '"requires_traceability": bool, "expected_depth": '
                    '"factoid"|"analytical"}.\n\nRequest: ' + request
                ),
                response_schema="complexity_signals",
            ),
        )
    except SchemaValidationError as exc:
        raise ClassificationError(f"unusable classification response: {exc}") from exc
    return ComplexitySignals(**parsed)


def route(signals: ComplexitySignals, policy: RoutingPolicy | None = None) -> str:
    """DeepResearch when any complexity predicate fires; thresholds inclusive."""
    policy = policy or RoutingPolicy()
    deep = (
        signals.ambiguity >= policy.ambiguity_threshold
        or signals.expected_subquestions >= policy.subq_threshold
        or signals.requires_traceability
        or signals.expected_depth == "analytical"
    )
    return DEEP_RESEARCH if deep else FAST_RETRIEVAL


def advance_session(
    session: ResearchSession, event: str, payload: dict[str, Any] | None = None
) -> ResearchSession:
    """Apply one event; illegal (phase, event) pairs leave the session unchanged."""
    payload = payload or {}
    if event == ERROR_EVENT:
        if session.phase in TERMINAL_PHASES:
            raise TransitionError(session.phase, event)
        next_phase = FAILED
    else:
        key = (session.phase, event)
        if key not in TRANSITIONS:
            raise TransitionError(session.phase, event)
        next_phase = TRANSITIONS[key]

    entry = SessionEvent(
        seq=len(session.event_log) + 1,
        event=event,
        from_phase=session.phase,
        to_phase=next_phase,
        payload=payload,
        at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )
    updated = replace(
        session,
        phase=next_phase,
        event_log=session.event_log + [entry],
        iteration_count=session.iteration_count
        + (1 if event == "IterationCompleted" else 0),
    )
    return updated


def replay_events(events: list[SessionEvent]) -> str:
    """Fold an event log from Created; returns the terminal phase reached."""
    phase = CREATED
    for event in events:
        if event.event == ERROR_EVENT:
            if phase in TERMINAL_PHASES:
                raise TransitionError(phase, event.event)
            phase = FAILED
            continue
        key = (phase, event.event)
        if key not in TRANSITIONS:
            raise TransitionError(phase, event.event)
        phase = TRANSITIONS[key]
    return phase


def event_log_records(session: ResearchSession) -> list[dict]:
    """Event log in the shared record-file shape (kind + monotonic seq)."""
    return [
        {
            "kind": "session_event",
            "seq": e.seq,
            "event": e.event,
            "from_phase": e.from_phase,
            "to_phase": e.to_phase,
            "payload": e.payload,
            "at": e.at,
        }
        for e in session.event_log
    ]
