"""The iterative retrieval-reflection loop and its evidence-driven stop rule.

Each iteration reflects on coverage gaps, evolves queries for the targeted
sections, admits retrieved spans, updates the outline, and asks should_stop.
Seed queries (section title + success criteria) give every section a
deterministic cold start before any model-driven evolution.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from .errors import ExecutionError, GatewayError, ValidationError
from .gateway import ModelRequest, complete_structured_optional
from .memory_bank import CoverageReport, Facet, MemoryBank
from .orchestrator import (
    ERROR_EVENT,
    EXECUTING,
    ResearchSession,
    advance_session,
)
from .planning import PlanSection, ResearchPlan
from .retrieval import admit_hits
from .textutil import collapse_whitespace

logger = logging.getLogger(__name__)


@dataclass
class OutlineEntry:
    section_id: str
    heading: str
    talking_points: list[str] = field(default_factory=list)


@dataclass
class Outline:
    outline_version: int
    entries: list[OutlineEntry]

    def section_ids(self) -> list[str]:
        return [e.section_id for e in self.entries]


@dataclass
class QueryCandidate:
    query_text: str
    target_section_id: str
    origin: str = "seed"  # seed | evolved
    parent_query: str | None = None

    def __post_init__(self) -> None:
        if not self.query_text.strip():
            raise ValidationError("query_text must be non-empty")
        if self.origin == "evolved" and not self.parent_query:
            raise ValidationError("evolved queries must carry a parent query")


@dataclass
class ReflectionFinding:
    section_id: str
    gap_description: str
    missing_facets: list[Facet] = field(default_factory=list)
    proposed_query_terms: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.missing_facets and not self.proposed_query_terms:
            raise ValidationError(
                "a finding needs missing facets or proposed query terms"
            )


@dataclass
class StoppingPolicy:
    coverage_threshold: float = 0.8
    require_citation_stability: bool = True
    max_iterations: int = 8

    def __post_init__(self) -> None:
        if not 0.0 < self.coverage_threshold <= 1.0:
            raise ValidationError("coverage_threshold must be in (0, 1]")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")


@dataclass
class StopDecision:
    kind: str  # Continue | Stop
    reason: str | None = None  # Converged | BudgetExhausted
    target_sections: list[str] = field(default_factory=list)


@dataclass
class IterationTrace:
    iteration_index: int
    queries_issued: list[str]
    spans_added: int
    coverage_before: CoverageReport
    coverage_after: CoverageReport
    citation_set_hash_before: str
    citation_set_hash_after: str


# -- outline -----------------------------------------------------------------


def seed_query_text(section: PlanSection) -> str:
    return collapse_whitespace(f"{section.title} {' '.join(section.success_criteria)}")


def draft_outline(plan: ResearchPlan, gateway) -> Outline:
    """One outline entry per plan section, plan order, version 1.

    Model entries for unknown sections are dropped; plan sections the model
    omitted are synthesized from their titles with empty talking points.
    """
    proposed: dict[str, dict] = {}
    try:
        parsed = complete_structured_optional(
            gateway,
            ModelRequest(
                role_tag="outline",
                prompt=(
                    'Draft an outline as JSON {"entries": [{"section_id", "heading", '
                    f'"talking_points"}}]}} for plan sections: '
                    + ", ".join(
                        f"{s.section_id} ({s.title})" for s in plan.sections
                    )
                ),
                response_schema="outline",
            ),
        )
    except GatewayError as exc:
        logger.warning("outline drafting fell back to plan titles: %s", exc)
        parsed = None
    if parsed:
        plan_ids = set(plan.section_ids())
        for entry in parsed["entries"]:
            if entry["section_id"] not in plan_ids:
                logger.warning(
                    "dropping outline entry for unknown section %r", entry["section_id"]
                )
                continue
            proposed[entry["section_id"]] = entry

    entries = []
    for section in plan.sections:
        raw = proposed.get(section.section_id)
        if raw is None:
            logger.info("synthesizing outline entry for %r", section.section_id)
            entries.append(
                OutlineEntry(section_id=section.section_id, heading=section.title)
            )
        else:
            entries.append(
                OutlineEntry(
                    section_id=section.section_id,
                    heading=raw["heading"] or section.title,
                    talking_points=list(raw["talking_points"]),
                )
            )
    return Outline(outline_version=1, entries=entries)


def update_outline(outline: Outline, bank: MemoryBank, gateway) -> Outline:
    """Revise headings/talking points from new evidence; id set never changes."""
    revised: dict[str, dict] = {}
    try:
        parsed = complete_structured_optional(
            gateway,
            ModelRequest(
                role_tag="outline",
                prompt=(
                    'Revise the outline as JSON {"entries": [...]} given the evidence '
                    f"now in the bank ({bank.stats()['spans']} spans). Current "
                    "sections: " + ", ".join(outline.section_ids())
                ),
                response_schema="outline",
            ),
        )
    except GatewayError as exc:
        logger.warning("outline update skipped: %s", exc)
        parsed = None
    if parsed:
        known = set(outline.section_ids())
        for entry in parsed["entries"]:
            if entry["section_id"] in known:
                revised[entry["section_id"]] = entry
            else:
                logger.warning(
                    "rejecting outline change for unknown section %r",
                    entry["section_id"],
                )

    entries = []
    for entry in outline.entries:
        raw = revised.get(entry.section_id)
        if raw is None:
            entries.append(entry)
        else:
            entries.append(
                OutlineEntry(
                    section_id=entry.section_id,
                    heading=raw["heading"] or entry.heading,
                    talking_points=list(raw["talking_points"]) or entry.talking_points,
                )
            )
    return Outline(outline_version=outline.outline_version + 1, entries=entries)


# -- reflection and query evolution -----------------------------------------


def reflect(
    bank: MemoryBank, plan: ResearchPlan, outline: Outline, gateway
) -> list[ReflectionFinding]:
    """One finding per unsatisfied section; the model may enrich but not add.

    Findings carry the coverage audit's missing facets verbatim; proposed
    query terms default to the section title plus missing facet keywords.
    """
    audit = bank.audit_coverage(plan.requirements())
    findings: dict[str, ReflectionFinding] = {}
    for section in plan.sections:
        entry = audit.per_section.get(section.section_id)
        if entry is None or entry.satisfied:
            continue
        req = section.coverage_requirement
        terms = [section.title] + [kw for facet in entry.missing_facets for kw in facet]
        description = (
            f"section {section.section_id!r} has {entry.distinct_sources}/"
            f"{req.min_distinct_sources} sources and {entry.span_count}/"
            f"{req.min_spans} spans"
        )
        if entry.missing_facets:
            description += "; missing facets: " + ", ".join(
                "|".join(f) for f in entry.missing_facets
            )
        findings[section.section_id] = ReflectionFinding(
            section_id=section.section_id,
            gap_description=description,
            missing_facets=list(entry.missing_facets),
            proposed_query_terms=terms,
        )

    if findings:
        try:
            parsed = complete_structured_optional(
                gateway,
                ModelRequest(
                    role_tag="reflect_enrich",
                    prompt=(
                        'Enrich these evidence-gap findings as JSON {"findings": '
                        '[{"section_id", "gap_description", "proposed_query_terms"}]}: '
                        + "; ".join(f.gap_description for f in findings.values())
                    ),
                    response_schema="enrichment",
                ),
            )
        except GatewayError as exc:
            logger.warning("reflection enrichment skipped: %s", exc)
            parsed = None
        if parsed:
            for raw in parsed["findings"]:
                finding = findings.get(raw["section_id"])
                if finding is None:
                    logger.warning(
                        "suppressing enrichment for satisfied section %r",
                        raw["section_id"],
                    )
                    continue
                if raw["gap_description"]:
                    finding.gap_description = raw["gap_description"]
                for term in raw["proposed_query_terms"]:
                    if term not in finding.proposed_query_terms:
                        finding.proposed_query_terms.append(term)
    return [findings[s.section_id] for s in plan.sections if s.section_id in findings]


def _normalize_query(text: str) -> str:
    return collapse_whitespace(text).casefold()


def evolve_queries(
    findings: list[ReflectionFinding],
    history,
    gateway,
    section_seeds: dict[str, str] | None = None,
) -> list[QueryCandidate]:
    """Model-proposed follow-up queries for the findings' sections.

    Candidates textually equal (case-folded, whitespace-collapsed) to any
    history entry are filtered out, as are candidates targeting sections
    without a finding. No findings means no queries and no model call.
    """
    if not findings:
        return []
    section_seeds = section_seeds or {}
    parsed = complete_structured_optional(
        gateway,
        ModelRequest(
            role_tag="evolve",
            prompt=(
                'Propose follow-up search queries as JSON {"queries": '
                '[{"query_text", "target_section_id", "parent_query"?}]} for these '
                "gaps:\n"
                + "\n".join(
                    f"- {f.section_id}: {f.gap_description} "
                    f"(terms: {', '.join(f.proposed_query_terms)})"
                    for f in findings
                )
            ),
            response_schema="queries",
        ),
    )
    if not parsed:
        return []
    by_section = {f.section_id: f for f in findings}
    seen = {_normalize_query(q) for q in history}
    candidates: list[QueryCandidate] = []
    for raw in parsed["queries"]:
        target = raw["target_section_id"]
        finding = by_section.get(target)
        if finding is None:
            logger.warning("dropping evolved query for untargeted section %r", target)
            continue
        normalized = _normalize_query(raw["query_text"])
        if normalized in seen:
            logger.info("filtered duplicate query %r", raw["query_text"])
            continue
        seen.add(normalized)
        parent = (
            raw.get("parent_query")
            or section_seeds.get(target)
            or " ".join(finding.proposed_query_terms)
        )
        candidates.append(
            QueryCandidate(
                query_text=raw["query_text"],
                target_section_id=target,
                origin="evolved",
                parent_query=parent,
            )
        )
    return candidates


# -- stopping ------------------------------------------------------------


def should_stop(trace: IterationTrace, policy: StoppingPolicy) -> StopDecision:
    """Converged beats budget exhaustion; otherwise Continue targets the gaps."""
    per_section = trace.coverage_after.per_section
    under = [
        sid
        for sid, entry in per_section.items()
        if entry.coverage < policy.coverage_threshold
    ]
    stable = (
        trace.citation_set_hash_after == trace.citation_set_hash_before
        if policy.require_citation_stability
        else True
    )
    if not under and stable:
        return StopDecision(kind="Stop", reason="Converged")
    if trace.iteration_index >= policy.max_iterations:
        return StopDecision(kind="Stop", reason="BudgetExhausted")
    return StopDecision(kind="Continue", target_sections=under)


# -- the loop ------------------------------------------------------------


def run_to_convergence(
    session: ResearchSession,
    bank: MemoryBank,
    retrieval,
    gateway,
    policy: StoppingPolicy | None = None,
    *,
    on_trace=None,
    gate=None,
) -> tuple[ResearchSession, list[IterationTrace]]:
    """Iterate reflect -> evolve -> retrieve -> admit -> update -> should_stop.

    ``retrieval`` needs a ``search(query_text) -> list[RankedHit]`` method.
    Continue decisions scope the next iteration's queries to the under-covered
    sections. When ``gate`` is supplied (human continue/stop gate), it is
    called after every Continue decision and may stop the run. Retrieval or
    gateway failures fail the session, preserving partial traces on the
    raised ExecutionError.
    """
    if session.phase != EXECUTING:
        raise ValidationError(f"session must be Executing, not {session.phase}")
    if session.plan is None:
        raise ValidationError("session has no approved plan")
    policy = policy or StoppingPolicy()
    plan: ResearchPlan = session.plan

    traces: list[IterationTrace] = []
    try:
        outline = session.outline or draft_outline(plan, gateway)
        seeds = {s.section_id: seed_query_text(s) for s in plan.sections}
        seeded: set[str] = set()
        history: list[str] = []
        targets: list[str] | None = None

        for index in range(1, policy.max_iterations + 1):
            coverage_before = bank.audit_coverage(plan.requirements())
            hash_before = bank.citation_set_hash()

            findings = reflect(bank, plan, outline, gateway)
            if targets is not None:
                findings = [f for f in findings if f.section_id in targets]
            queries = evolve_queries(findings, history, gateway, section_seeds=seeds)

            scope = plan.section_ids() if targets is None else targets
            for section_id in scope:
                if section_id not in seeded:
                    queries.append(
                        QueryCandidate(
                            query_text=seeds[section_id],
                            target_section_id=section_id,
                            origin="seed",
                        )
                    )
                    seeded.add(section_id)

            spans_before = bank.stats()["spans"]
            for query in queries:
                hits = retrieval.search(query.query_text)
                admit_hits(bank, hits, query.target_section_id)
            history.extend(q.query_text for q in queries)
            spans_added = bank.stats()["spans"] - spans_before

            outline = update_outline(outline, bank, gateway)

            trace = IterationTrace(
                iteration_index=index,
                queries_issued=[q.query_text for q in queries],
                spans_added=spans_added,
                coverage_before=coverage_before,
                coverage_after=bank.audit_coverage(plan.requirements()),
                citation_set_hash_before=hash_before,
                citation_set_hash_after=bank.citation_set_hash(),
            )
            traces.append(trace)
            decision = should_stop(trace, policy)
            session = advance_session(
                session,
                "IterationCompleted",
                _trace_payload(trace, decision),
            )
            session = _with_state(session, outline=outline, traces=traces)
            if on_trace is not None:
                on_trace(session, trace, decision)

            if decision.kind == "Stop":
                session = advance_session(
                    session, "StopCriterionMet", {"reason": decision.reason}
                )
                return session, traces

            targets = decision.target_sections
            if gate is not None:
                session = advance_session(session, "HumanGateRequested")
                choice = gate(session, trace, decision)
                if choice == "stop":
                    session = advance_session(
                        session, "StopDecision", {"reason": "HumanStop"}
                    )
                    return session, traces
                session = advance_session(session, "ContinueDecision")
    except (GatewayError, OSError, ValidationError) as exc:
        failed = advance_session(session, ERROR_EVENT, {"reason": str(exc)})
        failed = _with_state(failed, traces=traces)
        error = ExecutionError(f"research loop aborted: {exc}", traces=traces)
        error.session = failed
        raise error from exc
    raise AssertionError("loop must return via a Stop decision")


def _with_state(session: ResearchSession, **updates) -> ResearchSession:
    return replace(session, **updates)


def _trace_payload(trace: IterationTrace, decision: StopDecision) -> dict:
    return {
        "iteration": trace.iteration_index,
        "queries_issued": trace.queries_issued,
        "spans_added": trace.spans_added,
        "coverage": {
            sid: round(entry.coverage, 6)
            for sid, entry in trace.coverage_after.per_section.items()
        },
        "satisfied": trace.coverage_after.overall_satisfied,
        "decision": decision.kind,
        "reason": decision.reason,
        "targets": decision.target_sections,
    }
