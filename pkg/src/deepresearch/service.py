"""Local HTTP service for the steering UI: sessions, plan editing, event stream.

Single process, file-backed event logs, server-sent events for progress
telemetry. Every mutating endpoint applies to one session under that
session's lock; the event stream is read-only fan-out with sequence-based
resume.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .engine import ResearchEngine
from .errors import DeepResearchError, ExecutionError, TransitionError, ValidationError
from .memory_bank import MemoryBank
from .orchestrator import DEEP_RESEARCH, ResearchSession, advance_session
from .planning import PlanEdit
from .records import RecordLog, dump_record
from .synthesis import render_markdown, report_records

logger = logging.getLogger(__name__)

EVENT_KINDS = (
    "PhaseChanged",
    "ClarificationsReady",
    "PlanReady",
    "IterationTrace",
    "CoverageUpdated",
    "ReportReady",
    "Failed",
)


@dataclass
class SessionRuntime:
    session: ResearchSession
    bank: MemoryBank
    questions: list = field(default_factory=list)
    traces: list = field(default_factory=list)
    report: object = None
    answer: str | None = None
    events: list[dict] = field(default_factory=list)
    lock: threading.RLock = field(default_factory=threading.RLock)
    new_event: threading.Condition | None = None
    gate_decision: str | None = None
    gate_waiting: bool = False
    log: RecordLog | None = None

    def __post_init__(self) -> None:
        self.new_event = threading.Condition(self.lock)


class ResearchService:
    """Session registry and lifecycle driver behind the HTTP handler."""

    def __init__(self, engine: ResearchEngine, store_dir: str | Path) -> None:
        self.engine = engine
        self.store_dir = Path(store_dir)
        self.store_dir.mkdir(parents=True, exist_ok=True)
        self.sessions: dict[str, SessionRuntime] = {}
        self._registry_lock = threading.Lock()

    # -- events -----------------------------------------------------------

    def emit(self, runtime: SessionRuntime, kind: str, payload: dict) -> dict:
        assert kind in EVENT_KINDS, kind
        with runtime.lock:
            event = {
                "kind": kind,
                "seq": len(runtime.events) + 1,
                "session_id": runtime.session.session_id,
                "payload": payload,
            }
            runtime.events.append(event)
            if runtime.log is not None:
                runtime.log.append(kind, {k: v for k, v in event.items() if k != "kind"})
            runtime.new_event.notify_all()
        return event

    def _advance(self, runtime: SessionRuntime, event: str, payload=None) -> None:
        before = runtime.session.phase
        runtime.session = advance_session(runtime.session, event, payload)
        self.emit(
            runtime,
            "PhaseChanged",
            {"from": before, "to": runtime.session.phase, "event": event},
        )

    # -- lifecycle ----------------------------------------------------------

    def create_session(self, request_text: str) -> SessionRuntime:
        session = self.engine.start_session(request_text)
        runtime = SessionRuntime(session=session, bank=MemoryBank())
        runtime.log = RecordLog(self.store_dir / f"{session.session_id}.events.jsonl")
        with self._registry_lock:
            self.sessions[session.session_id] = runtime
        if session.route == DEEP_RESEARCH:
            threading.Thread(
                target=self._clarify, args=(runtime,), daemon=True
            ).start()
        else:
            threading.Thread(
                target=self._fast_answer, args=(runtime,), daemon=True
            ).start()
        return runtime

    def _fast_answer(self, runtime: SessionRuntime) -> None:
        try:
            with runtime.lock:
                before = runtime.session.phase
                runtime.session, runtime.answer = self.engine.run_fast_path(
                    runtime.session, runtime.bank
                )
            self.emit(
                runtime,
                "PhaseChanged",
                {"from": before, "to": "Done", "event": "FastAnswerReady"},
            )
            self.emit(runtime, "ReportReady", {"fast_path": True})
        except DeepResearchError as exc:
            self._fail(runtime, exc)

    def _clarify(self, runtime: SessionRuntime) -> None:
        try:
            with runtime.lock:
                session, questions = self.engine.begin_clarification(runtime.session)
                runtime.session = session
                runtime.questions = questions
            self.emit(
                runtime,
                "ClarificationsReady",
                {
                    "questions": [
                        {
                            "question_id": q.question_id,
                            "text": q.text,
                            "default_assumption": q.default_assumption,
                        }
                        for q in questions
                    ]
                },
            )
            self.emit(
                runtime,
                "PhaseChanged",
                {"from": "Created", "to": "Clarifying", "event": "ClarificationsGenerated"},
            )
        except DeepResearchError as exc:
            self._fail(runtime, exc)

    def submit_answers(self, runtime: SessionRuntime, answers: dict) -> None:
        with runtime.lock:
            runtime.session = self.engine.submit_answers(
                runtime.session, runtime.questions, answers
            )
        self.emit(runtime, "PlanReady", {"plan": self.plan_view(runtime)})
        self.emit(
            runtime,
            "PhaseChanged",
            {"from": "Clarifying", "to": runtime.session.phase, "event": "PlanDrafted"},
        )

    def apply_edits(self, runtime: SessionRuntime, edits: list[PlanEdit]) -> None:
        with runtime.lock:
            runtime.session = self.engine.apply_edits(runtime.session, edits)
        self.emit(runtime, "PlanReady", {"plan": self.plan_view(runtime)})

    def approve_plan(self, runtime: SessionRuntime) -> None:
        with runtime.lock:
            runtime.session = self.engine.approve_plan(runtime.session, runtime.bank)
        self.emit(
            runtime,
            "PhaseChanged",
            {"from": "AwaitingPlanApproval", "to": "Executing", "event": "PlanApproved"},
        )
        threading.Thread(target=self._execute, args=(runtime,), daemon=True).start()

    def _execute(self, runtime: SessionRuntime) -> None:
        def on_trace(session, trace, decision) -> None:
            with runtime.lock:
                runtime.session = session
                runtime.traces.append(trace)
            self.emit(
                runtime,
                "IterationTrace",
                {
                    "iteration": trace.iteration_index,
                    "queries_issued": trace.queries_issued,
                    "spans_added": trace.spans_added,
                    "coverage": {
                        sid: round(entry.coverage, 6)
                        for sid, entry in trace.coverage_after.per_section.items()
                    },
                    "decision": decision.kind,
                    "targets": decision.target_sections,
                },
            )
            self.emit(runtime, "CoverageUpdated", {"coverage": self.coverage_view(runtime)})

        gate = self._gate if self.engine.config.human_gate else None
        try:
            session, traces = self.engine.execute(
                runtime.session, runtime.bank, on_trace=on_trace, gate=gate
            )
            with runtime.lock:
                runtime.session = session
            self.emit(
                runtime,
                "PhaseChanged",
                {"from": "Executing", "to": "Synthesizing", "event": "StopCriterionMet"},
            )
            session, report = self.engine.synthesize_report(runtime.session, runtime.bank)
            with runtime.lock:
                runtime.session = session
                runtime.report = report
            self.emit(runtime, "ReportReady", {"sections": len(report.sections)})
            self.emit(
                runtime,
                "PhaseChanged",
                {"from": "Synthesizing", "to": "Done", "event": "ReportCompleted"},
            )
        except ExecutionError as exc:
            with runtime.lock:
                runtime.session = getattr(exc, "session", runtime.session)
                runtime.traces = exc.traces or runtime.traces
            self.emit(runtime, "Failed", {"reason": str(exc)})
        except DeepResearchError as exc:
            self._fail(runtime, exc)

    def _gate(self, session, trace, decision) -> str:
        runtime = self.sessions[session.session_id]
        with runtime.lock:
            runtime.session = session
            runtime.gate_waiting = True
            runtime.gate_decision = None
        self.emit(
            runtime,
            "PhaseChanged",
            {
                "from": "Executing",
                "to": "AwaitingContinueDecision",
                "event": "HumanGateRequested",
            },
        )
        with runtime.lock:
            while runtime.gate_decision is None:
                runtime.new_event.wait(timeout=0.1)
            choice = runtime.gate_decision
            runtime.gate_waiting = False
        self.emit(
            runtime,
            "PhaseChanged",
            {
                "from": "AwaitingContinueDecision",
                "to": "Executing" if choice == "continue" else "Synthesizing",
                "event": "ContinueDecision" if choice == "continue" else "StopDecision",
            },
        )
        return choice

    def post_decision(self, runtime: SessionRuntime, action: str) -> None:
        if action not in ("continue", "stop"):
            raise ValidationError(f"unknown decision {action!r}")
        with runtime.lock:
            if not runtime.gate_waiting:
                raise TransitionError(runtime.session.phase, f"decision:{action}")
            runtime.gate_decision = action
            runtime.new_event.notify_all()

    def _fail(self, runtime: SessionRuntime, exc: Exception) -> None:
        logger.exception("session %s failed", runtime.session.session_id)
        with runtime.lock:
            try:
                runtime.session = advance_session(
                    runtime.session, "ErrorRaised", {"reason": str(exc)}
                )
            except TransitionError:
                pass
        self.emit(runtime, "Failed", {"reason": str(exc)})

    # -- views --------------------------------------------------------------

    def session_view(self, runtime: SessionRuntime) -> dict:
        with runtime.lock:
            session = runtime.session
            return {
                "session_id": session.session_id,
                "request": session.user_request,
                "phase": session.phase,
                "route": session.route,
                "iteration_count": session.iteration_count,
                "events": len(runtime.events),
            }

    def plan_view(self, runtime: SessionRuntime) -> dict:
        plan = runtime.session.plan
        if plan is None:
            return {}
        return {
            "plan_version": plan.plan_version,
            "sections": [
                {
                    "section_id": s.section_id,
                    "title": s.title,
                    "priority": s.priority,
                    "success_criteria": s.success_criteria,
                    "coverage_requirement": {
                        "min_distinct_sources": s.coverage_requirement.min_distinct_sources,
                        "min_spans": s.coverage_requirement.min_spans,
                        "required_facets": [
                            list(f) for f in s.coverage_requirement.required_facets
                        ],
                    }
                    if s.coverage_requirement
                    else None,
                }
                for s in plan.sections
            ],
        }

    def coverage_view(self, runtime: SessionRuntime) -> dict:
        plan = runtime.session.plan
        if plan is None:
            return {}
        report = runtime.bank.audit_coverage(plan.requirements())
        return {
            "overall_satisfied": report.overall_satisfied,
            "per_section": {
                sid: {
                    "coverage": round(entry.coverage, 6),
                    "satisfied": entry.satisfied,
                    "distinct_sources": entry.distinct_sources,
                    "span_count": entry.span_count,
                    "missing_facets": [list(f) for f in entry.missing_facets],
                }
                for sid, entry in report.per_section.items()
            },
        }

    def report_view(self, runtime: SessionRuntime) -> dict:
        with runtime.lock:
            if runtime.answer is not None:
                return {"fast_answer": runtime.answer}
            if runtime.report is None:
                raise TransitionError(runtime.session.phase, "report")
            return {
                "records": report_records(runtime.report, runtime.bank),
                "markdown": render_markdown(runtime.report, runtime.bank),
            }

    def get(self, session_id: str) -> SessionRuntime:
        runtime = self.sessions.get(session_id)
        if runtime is None:
            raise KeyError(session_id)
        return runtime


# -- HTTP layer ---------------------------------------------------------------


class _Handler(BaseHTTPRequestHandler):
    service: ResearchService  # set by make_server
    protocol_version = "HTTP/1.1"

    # Endpoint -> phases in which it is legal.
    PHASE_GUARDS = {
        "answers": {"Clarifying"},
        "plan_patch": {"AwaitingPlanApproval"},
        "approval": {"AwaitingPlanApproval"},
        "decision": {"AwaitingContinueDecision"},
    }

    def log_message(self, fmt, *args):  # quiet the default stderr chatter
        logger.debug("http: " + fmt, *args)

    # -- helpers -----------------------------------------------------------

    def _read_body(self) -> bytes:
        # Always drain the body: leaving it unread corrupts keep-alive reuse.
        length = int(self.headers.get("Content-Length", 0))
        return self.rfile.read(length) if length else b""

    def _json_body(self) -> dict:
        if not self._raw_body:
            return {}
        try:
            return json.loads(self._raw_body.decode("utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"request body is not valid JSON: {exc.msg}") from exc

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _error(self, status: int, message: str, **extra) -> None:
        self._send_json(status, {"error": message, **extra})

    def _guard(self, runtime: SessionRuntime, endpoint: str) -> bool:
        allowed = self.PHASE_GUARDS[endpoint]
        phase = runtime.session.phase
        if phase not in allowed:
            self._error(409, "illegal phase for endpoint", phase=phase, endpoint=endpoint)
            return False
        return True

    def _route(self, method: str) -> None:
        parsed = urlparse(self.path)
        parts = [p for p in parsed.path.split("/") if p]
        query = parse_qs(parsed.query)
        self._raw_body = self._read_body()
        try:
            self._dispatch(method, parts, query)
        except KeyError as exc:
            self._error(404, f"unknown session {exc.args[0]!r}")
        except (ValidationError, json.JSONDecodeError) as exc:
            self._error(400, str(exc))
        except TransitionError as exc:
            self._error(409, str(exc), phase=exc.phase, endpoint=exc.event)
        except DeepResearchError as exc:
            self._error(500, str(exc))
        except (BrokenPipeError, ConnectionResetError):
            pass

    def _dispatch(self, method: str, parts: list[str], query: dict) -> None:
        service = self.service
        if method == "POST" and parts == ["sessions"]:
            body = self._json_body()
            text = body.get("request", "")
            if not str(text).strip():
                raise ValidationError("request text must be non-empty")
            runtime = service.create_session(str(text))
            self._send_json(
                201, {"session_id": runtime.session.session_id, "route": runtime.session.route}
            )
            return
        if len(parts) < 2 or parts[0] != "sessions":
            self._error(404, "unknown endpoint")
            return
        runtime = service.get(parts[1])
        tail = parts[2:]

        if method == "GET" and tail == []:
            self._send_json(200, service.session_view(runtime))
        elif method == "GET" and tail == ["clarifications"]:
            self._send_json(
                200,
                {
                    "questions": [
                        {
                            "question_id": q.question_id,
                            "text": q.text,
                            "default_assumption": q.default_assumption,
                        }
                        for q in runtime.questions
                    ]
                },
            )
        elif method == "POST" and tail == ["answers"]:
            if not self._guard(runtime, "answers"):
                return
            service.submit_answers(runtime, self._json_body().get("answers", {}))
            self._send_json(200, service.session_view(runtime))
        elif method == "GET" and tail == ["plan"]:
            self._send_json(200, service.plan_view(runtime))
        elif method == "PATCH" and tail == ["plan"]:
            if not self._guard(runtime, "plan_patch"):
                return
            edits = [
                PlanEdit(kind=e["kind"], payload=e.get("payload", {}))
                for e in self._json_body().get("edits", [])
            ]
            service.apply_edits(runtime, edits)
            self._send_json(200, service.plan_view(runtime))
        elif method == "POST" and tail == ["plan", "approval"]:
            if not self._guard(runtime, "approval"):
                return
            service.approve_plan(runtime)
            self._send_json(200, service.session_view(runtime))
        elif method == "POST" and tail == ["decision"]:
            if not self._guard(runtime, "decision"):
                return
            service.post_decision(runtime, self._json_body().get("action", ""))
            self._send_json(200, service.session_view(runtime))
        elif method == "GET" and tail == ["coverage"]:
            self._send_json(200, service.coverage_view(runtime))
        elif method == "GET" and tail == ["report"]:
            self._send_json(200, service.report_view(runtime))
        elif method == "GET" and tail == ["events"]:
            start = int(query.get("from", ["1"])[0])
            self._stream_events(runtime, start)
        else:
            self._error(404, "unknown endpoint")

    def _stream_events(self, runtime: SessionRuntime, start: int) -> None:
        # The stream has no length; the connection close marks its end.
        self.close_connection = True
        self.send_response(200)
        self.send_header("Content-Type", "text/event-stream")
        self.send_header("Cache-Control", "no-cache")
        self.send_header("Connection", "close")
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        cursor = max(1, start)
        idle_rounds = 0
        while True:
            with runtime.lock:
                pending = runtime.events[cursor - 1 :]
                if not pending:
                    runtime.new_event.wait(timeout=0.2)
                    pending = runtime.events[cursor - 1 :]
                terminal = runtime.session.phase in ("Done", "Failed")
            for event in pending:
                chunk = f"id: {event['seq']}\nevent: {event['kind']}\ndata: {dump_record(event)}\n\n"
                try:
                    self.wfile.write(chunk.encode("utf-8"))
                    self.wfile.flush()
                except (BrokenPipeError, ConnectionResetError):
                    return
                cursor = event["seq"] + 1
            if terminal and not pending:
                idle_rounds += 1
                if idle_rounds >= 2:
                    return
            else:
                idle_rounds = 0

    # -- verbs -------------------------------------------------------------

    def do_GET(self):
        self._route("GET")

    def do_POST(self):
        self._route("POST")

    def do_PATCH(self):
        self._route("PATCH")


def make_server(
    engine: ResearchEngine, store_dir: str | Path, port: int = 0
) -> tuple[ThreadingHTTPServer, ResearchService]:
    service = ResearchService(engine, store_dir)
    handler = type("BoundHandler", (_Handler,), {"service": service})
    server = ThreadingHTTPServer(("127.0.0.1", port), handler)
    server.daemon_threads = True
    return server, service
