"""Grounding and planning: clarification questions, brief building, plan
drafting, and user plan edits.

Section ids are lowercase title slugs with numeric collision suffixes and stay
stable across edits. Every accepted edit bumps plan_version by one, so folding
the edit sequence over version 1 reproduces the final plan.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Any

from .errors import PlanningError, ValidationError
from .gateway import ModelRequest, complete_structured
from .memory_bank import CoverageRequirement
from .records import write_records
from .textutil import slugify

logger = logging.getLogger(__name__)

DEFAULT_MAX_QUESTIONS = 3
DEFAULT_REQUIREMENT = {"min_distinct_sources": 2, "min_spans": 3, "required_facets": []}


@dataclass
class ClarificationQuestion:
    question_id: str
    text: str
    default_assumption: str


@dataclass
class ResearchBrief:
    objective: str
    scope_assumptions: list[str] = field(default_factory=list)
    success_criteria: list[str] = field(default_factory=list)
    answered: dict[str, str] = field(default_factory=dict)


@dataclass
class PlanSection:
    section_id: str
    title: str
    priority: int = 1
    success_criteria: list[str] = field(default_factory=list)
    coverage_requirement: CoverageRequirement | None = None

    def __post_init__(self) -> None:
        if self.priority < 1:
            raise ValidationError("priority must be >= 1")


@dataclass
class ResearchPlan:
    plan_version: int
    sections: list[PlanSection]

    def section_ids(self) -> list[str]:
        return [s.section_id for s in self.sections]

    def requirements(self) -> list[CoverageRequirement]:
        return [s.coverage_requirement for s in self.sections if s.coverage_requirement]

    def get_section(self, section_id: str) -> PlanSection:
        for section in self.sections:
            if section.section_id == section_id:
                return section
        raise ValidationError(f"unknown section {section_id!r}")


@dataclass
class PlanEdit:
    kind: str  # Reorder | Retitle | SetPriority | AddSection | RemoveSection | EditRequirement
    payload: dict[str, Any] = field(default_factory=dict)


def generate_clarifications(
    request: str, gateway, max_questions: int = DEFAULT_MAX_QUESTIONS
) -> list[ClarificationQuestion]:
    """Ask the gateway for up to max_questions questions, each with a default.

    Questions missing text or a default assumption are dropped with a warning;
    max_questions = 0 skips the model call entirely.
    """
    if not request.strip():
        raise ValidationError("request must be non-empty")
    if max_questions < 0:
        raise ValidationError("max_questions must be >= 0")
    if max_questions == 0:
        return []
    parsed = complete_structured(
        gateway,
        ModelRequest(
            role_tag="clarify",
            prompt=(
                f"Propose up to {max_questions} clarification questions for this "
                'research request, as JSON {"questions": [{"text": ..., '
                '"default_assumption": ...}]}.\n\nRequest: ' + request
            ),
            response_schema="clarifications",
        ),
    )
    questions: list[ClarificationQuestion] = []
    for raw in parsed["questions"]:
        if not raw["text"].strip() or not raw["default_assumption"].strip():
            logger.warning("dropping clarification without text or default: %r", raw)
            continue
        questions.append(
            ClarificationQuestion(
                question_id=f"q{len(questions) + 1}",
                text=raw["text"],
                default_assumption=raw["default_assumption"],
            )
        )
        if len(questions) == max_questions:
            break
    return questions


def build_brief(
    request: str,
    questions: list[ClarificationQuestion],
    answers: dict[str, str] | None = None,
) -> ResearchBrief:
    """Brief from answers; unanswered questions contribute their defaults."""
    answers = answers or {}
    known = {q.question_id for q in questions}
    unknown = set(answers) - known
    if unknown:
        raise ValidationError(f"answers reference unknown question ids: {sorted(unknown)}")
    assumptions = []
    answered: dict[str, str] = {}
    for question in questions:
        if question.question_id in answers:
            answered[question.question_id] = answers[question.question_id]
            assumptions.append(answers[question.question_id])
        else:
            assumptions.append(question.default_assumption)
    return ResearchBrief(
        objective=request,
        scope_assumptions=assumptions,
        answered=answered,
    )


def _assign_section_id(title: str, taken: set[str]) -> str:
    base = slugify(title)
    candidate = base
    suffix = 2
    while candidate in taken:
        candidate = f"{base}-{suffix}"
        suffix += 1
    taken.add(candidate)
    return candidate


def _requirement_from(payload: dict | None, section_id: str) -> CoverageRequirement:
    data = dict(DEFAULT_REQUIREMENT if payload is None else payload)
    return CoverageRequirement(
        section_id=section_id,
        min_distinct_sources=data.get("min_distinct_sources", 2),
        min_spans=data.get("min_spans", 3),
        required_facets=tuple(tuple(f) for f in data.get("required_facets", [])),
    )


def draft_plan(brief: ResearchBrief, gateway) -> ResearchPlan:
    """Structured plan from the brief; sections without requirements get defaults."""
    parsed = complete_structured(
        gateway,
        ModelRequest(
            role_tag="plan",
            prompt=(
                "Draft a sectioned research plan as JSON {\"sections\": [{\"title\", "
                "\"priority\", \"success_criteria\", \"coverage_requirement\"?}]} "
                f"for this objective: {brief.objective}\n"
                f"Scope assumptions: {brief.scope_assumptions}"
            ),
            response_schema="plan",
        ),
    )
    raw_sections = parsed["sections"]
    if not raw_sections:
        raise PlanningError("planner returned zero sections")
    taken: set[str] = set()
    sections = []
    for raw in raw_sections:
        section_id = _assign_section_id(raw["title"], taken)
        sections.append(
            PlanSection(
                section_id=section_id,
                title=raw["title"],
                priority=max(1, raw.get("priority", 1)),
                success_criteria=raw.get("success_criteria", []),
                coverage_requirement=_requirement_from(
                    raw.get("coverage_requirement"), section_id
                ),
            )
        )
    return ResearchPlan(plan_version=1, sections=sections)


def apply_plan_edit(plan: ResearchPlan, edit: PlanEdit) -> ResearchPlan:
    """Apply one edit, bumping plan_version. Rejected edits leave plan untouched."""
    sections = list(plan.sections)
    payload = edit.payload
    if edit.kind == "Reorder":
        order = payload["order"]
        if sorted(order) != sorted(plan.section_ids()):
            raise ValidationError("reorder must permute the existing section ids")
        by_id = {s.section_id: s for s in sections}
        sections = [by_id[sid] for sid in order]
    elif edit.kind == "Retitle":
        section = plan.get_section(payload["section_id"])
        sections[sections.index(section)] = replace(section, title=payload["title"])
    elif edit.kind == "SetPriority":
        section = plan.get_section(payload["section_id"])
        sections[sections.index(section)] = replace(
            section, priority=int(payload["priority"])
        )
    elif edit.kind == "AddSection":
        taken = set(plan.section_ids())
        section_id = _assign_section_id(payload["title"], taken)
        sections.append(
            PlanSection(
                section_id=section_id,
                title=payload["title"],
                priority=max(1, int(payload.get("priority", 1))),
                success_criteria=list(payload.get("success_criteria", [])),
                coverage_requirement=_requirement_from(
                    payload.get("coverage_requirement"), section_id
                ),
            )
        )
    elif edit.kind == "RemoveSection":
        section = plan.get_section(payload["section_id"])
        if len(sections) == 1:
            raise ValidationError("cannot remove the last remaining section")
        sections.remove(section)
    elif edit.kind == "EditRequirement":
        section = plan.get_section(payload["section_id"])
        sections[sections.index(section)] = replace(
            section,
            coverage_requirement=_requirement_from(
                payload["coverage_requirement"], section.section_id
            ),
        )
    else:
        raise ValidationError(f"unknown edit kind {edit.kind!r}")
    return ResearchPlan(plan_version=plan.plan_version + 1, sections=sections)


def plan_records(plan: ResearchPlan) -> list[dict]:
    """Plan as shared-format records (one header, one record per section)."""
    rows: list[dict] = [{"kind": "plan_header", "plan_version": plan.plan_version}]
    for section in plan.sections:
        req = section.coverage_requirement
        rows.append(
            {
                "kind": "plan_section",
                "section_id": section.section_id,
                "title": section.title,
                "priority": section.priority,
                "success_criteria": section.success_criteria,
                "coverage_requirement": {
                    "min_distinct_sources": req.min_distinct_sources,
                    "min_spans": req.min_spans,
                    "required_facets": [list(f) for f in req.required_facets],
                }
                if req
                else None,
            }
        )
    return rows


def export_plan(plan: ResearchPlan, path) -> int:
    return write_records(path, plan_records(plan))


def plan_from_records(rows: list[dict]) -> ResearchPlan:
    version = 1
    sections: list[PlanSection] = []
    for row in rows:
        if row["kind"] == "plan_header":
            version = row["plan_version"]
        elif row["kind"] == "plan_section":
            sections.append(
                PlanSection(
                    section_id=row["section_id"],
                    title=row["title"],
                    priority=row["priority"],
                    success_criteria=list(row["success_criteria"]),
                    coverage_requirement=_requirement_from(
                        row.get("coverage_requirement"), row["section_id"]
                    ),
                )
            )
    if not sections:
        raise PlanningError("plan file contains no sections")
    return ResearchPlan(plan_version=version, sections=sections)
