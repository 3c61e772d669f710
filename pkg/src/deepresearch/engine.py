"""End-to-end pipeline: classify, route, ground, plan, execute, synthesize.

The engine exposes stepwise methods so the HTTP service can pause at the
human-facing gates (clarification answers, plan approval, continue/stop), and
a run_headless convenience that drives the same steps with defaults.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from .config import EngineConfig
from .errors import DeepResearchError
from .execution import (
    IterationTrace,
    draft_outline,
    run_to_convergence,
)
from .memory_bank import MemoryBank
from .orchestrator import (
    DEEP_RESEARCH,
    ERROR_EVENT,
    FAST_RETRIEVAL,
    ResearchSession,
    advance_session,
    classify_complexity,
    route,
)
from .planning import (
    ClarificationQuestion,
    PlanEdit,
    apply_plan_edit,
    build_brief,
    draft_plan,
    generate_clarifications,
)
from .retrieval import admit_hits
from .synthesis import (
    ReportDocument,
    assemble_report,
    synthesize_section,
)
from .packing import prepare_section_context

logger = logging.getLogger(__name__)


@dataclass
class RunResult:
    session: ResearchSession
    bank: MemoryBank
    report: ReportDocument | None = None
    answer: str | None = None
    traces: list[IterationTrace] = field(default_factory=list)
    questions: list[ClarificationQuestion] = field(default_factory=list)


class ResearchEngine:
    def __init__(self, gateway, retrieval, config: EngineConfig | None = None) -> None:
        self.gateway = gateway
        self.retrieval = retrieval
        self.config = config or EngineConfig()

    # -- routing ---------------------------------------------------------

    def start_session(self, request: str) -> ResearchSession:
        signals = classify_complexity(request, self.gateway)
        chosen = route(signals, self.config.routing)
        session = ResearchSession.create(request)
        return replace(session, route=chosen)

    # -- fast path ---------------------------------------------------------

    def run_fast_path(
        self, session: ResearchSession, bank: MemoryBank
    ) -> tuple[ResearchSession, str]:
        """Single retrieval pass; citations are still recorded in the bank."""
        hits = self.retrieval.search(session.user_request)[: self.config.top_k]
        span_ids = admit_hits(bank, hits, "answer")
        if not span_ids:
            answer = "No matching evidence was found."
        else:
            parts = []
            for span_id in span_ids:
                span = bank.get_span(span_id)
                parts.append(
                    f"{span.excerpt.strip()} [[{span.source_id}:{span.span_id}]]"
                )
            answer = "\n\n".join(parts)
        session = advance_session(
            session, "FastAnswerReady", {"spans": len(span_ids)}
        )
        return session, answer

    # -- deep path, stepwise ----------------------------------------------

    def begin_clarification(
        self, session: ResearchSession
    ) -> tuple[ResearchSession, list[ClarificationQuestion]]:
        questions = generate_clarifications(
            session.user_request, self.gateway, self.config.max_questions
        )
        session = advance_session(
            session,
            "ClarificationsGenerated",
            {"questions": [q.text for q in questions]},
        )
        return session, questions

    def submit_answers(
        self,
        session: ResearchSession,
        questions: list[ClarificationQuestion],
        answers: dict[str, str] | None,
    ) -> ResearchSession:
        brief = build_brief(session.user_request, questions, answers)
        session = advance_session(session, "BriefBuilt", {"answers": len(answers or {})})
        session = replace(session, brief=brief)
        plan = draft_plan(brief, self.gateway)
        session = advance_session(
            session, "PlanDrafted", {"sections": plan.section_ids()}
        )
        return replace(session, plan=plan)

    def apply_edits(
        self, session: ResearchSession, edits: list[PlanEdit]
    ) -> ResearchSession:
        plan = session.plan
        for edit in edits:
            plan = apply_plan_edit(plan, edit)
        session = advance_session(
            session, "PlanEdited", {"plan_version": plan.plan_version}
        )
        return replace(session, plan=plan)

    def approve_plan(
        self, session: ResearchSession, bank: MemoryBank
    ) -> ResearchSession:
        bank.set_requirements(session.plan.requirements())
        session = advance_session(
            session, "PlanApproved", {"plan_version": session.plan.plan_version}
        )
        outline = draft_outline(session.plan, self.gateway)
        return replace(session, outline=outline)

    def execute(
        self,
        session: ResearchSession,
        bank: MemoryBank,
        *,
        on_trace=None,
        gate=None,
    ) -> tuple[ResearchSession, list[IterationTrace]]:
        return run_to_convergence(
            session,
            bank,
            self.retrieval,
            self.gateway,
            self.config.stopping,
            on_trace=on_trace,
            gate=gate,
        )

    def synthesize_report(
        self, session: ResearchSession, bank: MemoryBank
    ) -> tuple[ResearchSession, ReportDocument]:
        try:
            sections = []
            for plan_section in session.plan.sections:
                packed = prepare_section_context(
                    plan_section.section_id,
                    bank,
                    self.config.budget,
                    self.config.packing,
                    self.gateway,
                )
                entry = next(
                    (
                        e
                        for e in (session.outline.entries if session.outline else [])
                        if e.section_id == plan_section.section_id
                    ),
                    None,
                )
                sections.append(
                    synthesize_section(
                        plan_section.section_id,
                        packed,
                        entry or plan_section,
                        self.gateway,
                        bank,
                    )
                )
            title = self.config.report_title or f"Research Report: {session.user_request}"
            report = assemble_report(session.plan, sections, bank, title=title)
        except DeepResearchError as exc:
            failed = advance_session(session, ERROR_EVENT, {"reason": str(exc)})
            exc.session = failed
            raise
        session = advance_session(
            session, "ReportCompleted", {"sections": len(report.sections)}
        )
        return replace(session, report=report), report

    # -- headless convenience ---------------------------------------------

    def run_headless(
        self, request: str, answers: dict[str, str] | None = None
    ) -> RunResult:
        """Full pipeline without human gates: defaults answer clarifications,
        the plan is auto-approved, and the loop runs to its stopping rule."""
        bank = MemoryBank()
        session = self.start_session(request)
        if session.route == FAST_RETRIEVAL:
            session, answer = self.run_fast_path(session, bank)
            return RunResult(session=session, bank=bank, answer=answer)

        assert session.route == DEEP_RESEARCH
        session, questions = self.begin_clarification(session)
        session = self.submit_answers(session, questions, answers)
        session = self.approve_plan(session, bank)
        session, traces = self.execute(session, bank)
        session, report = self.synthesize_report(session, bank)
        return RunResult(
            session=session,
            bank=bank,
            report=report,
            traces=traces,
            questions=questions,
        )
