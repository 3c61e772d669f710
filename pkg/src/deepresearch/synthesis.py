"""Memory-locked report generation.

Each section is written from its packed admissible evidence only; marker-
bearing sentences become claims linked into the bank, and the assembled
document must pass the lock verifier before it is returned.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .errors import AssemblyError, SynthesisError, ValidationError
from .gateway import ModelRequest
from .memory_bank import MemoryBank
from .packing import ANCHOR_RE, PackedContext
from .planning import ResearchPlan
from .textutil import collapse_whitespace, split_sentences

logger = logging.getLogger(__name__)

INSUFFICIENT_EVIDENCE_NOTICE = (
    "Insufficient admissible evidence was collected for this section."
)


@dataclass
class ReportSection:
    section_id: str
    heading: str
    body: str
    claims: list[str] = field(default_factory=list)


@dataclass
class ReportDocument:
    title: str
    sections: list[ReportSection]
    bank_snapshot_id: str


@dataclass
class LockViolation:
    section_id: str
    kind: str  # foreign_span | unknown_marker | uncited_claim
    detail: str
    sentence_index: int | None = None


def _claim_sentences(body: str) -> list[str]:
    """Sentences subject to the citation rule: headings and the notice exempt."""
    lines = [
        line
        for line in body.split("\n")
        if line.strip() and not line.lstrip().startswith("#")
    ]
    sentences = split_sentences(" ".join(lines))
    return [s for s in sentences if s != INSUFFICIENT_EVIDENCE_NOTICE]


def synthesize_section(
    section_id: str,
    packed: PackedContext,
    outline_entry,
    gateway,
    bank: MemoryBank,
) -> ReportSection:
    """Write one section under the admissible-evidence lock.

    The model sees only the packed payload; an output citing anchors outside
    it is retried once with an explicit constraint reminder and then rejected.
    Marker-bearing sentences are linked into the bank as claims.
    """
    if packed.section_id != section_id:
        raise ValidationError(
            f"packed context is for {packed.section_id!r}, not {section_id!r}"
        )
    heading = getattr(outline_entry, "heading", section_id)
    if not packed.items:
        return ReportSection(
            section_id=section_id,
            heading=heading,
            body=INSUFFICIENT_EVIDENCE_NOTICE,
            claims=[],
        )

    talking_points = list(getattr(outline_entry, "talking_points", []))
    allowed = packed.anchors
    prompt = (
        f"Write the report section {heading!r}. Every sentence must cite at "
        "least one of the evidence markers below, verbatim. Do not cite "
        "anything else.\n"
        + (f"Talking points: {'; '.join(talking_points)}\n" if talking_points else "")
        + "\nEvidence:\n"
        + packed.payload()
    )
    body = ""
    for attempt in range(2):
        response = gateway.complete(
            ModelRequest(role_tag="synthesize", prompt=prompt)
        )
        body = response.text.strip()
        markers = {m.group(0) for m in ANCHOR_RE.finditer(body)}
        foreign = markers - allowed
        if body and not foreign:
            break
        if attempt == 0:
            detail = (
                f"markers outside the packed evidence: {sorted(foreign)}"
                if foreign
                else "empty section body"
            )
            logger.warning("rewriting section %r: %s", section_id, detail)
            prompt += (
                f"\n\nThe previous draft was rejected ({detail}). Cite only these "
                "markers: " + " ".join(sorted(allowed))
            )
    else:
        raise SynthesisError(
            f"section {section_id!r} kept citing outside its admissible evidence"
        )

    claims: list[str] = []
    span_by_anchor = {item.anchor: item.span_id for item in packed.items}
    for sentence in _claim_sentences(body):
        anchors = [m.group(0) for m in ANCHOR_RE.finditer(sentence)]
        if not anchors:
            continue
        statement = collapse_whitespace(ANCHOR_RE.sub("", sentence)) or sentence
        span_ids = [span_by_anchor[a] for a in anchors if a in span_by_anchor]
        claims.append(bank.link_claim(statement, section_id, span_ids))
    return ReportSection(
        section_id=section_id, heading=heading, body=body, claims=claims
    )


def verify_memory_lock(
    report: ReportDocument,
    bank: MemoryBank,
    *,
    allowlist: frozenset[str] = frozenset(),
) -> list[LockViolation]:
    """Check the lock: markers resolve, spans are admissible, sentences cite.

    Returns one violation per failure; an empty list certifies the lock.
    """
    violations: list[LockViolation] = []
    for section in report.sections:
        for match in ANCHOR_RE.finditer(section.body):
            source_id, span_id = match.group(1), match.group(2)
            if not bank.has_span(span_id):
                violations.append(
                    LockViolation(
                        section_id=section.section_id,
                        kind="unknown_marker",
                        detail=f"marker {match.group(0)} names no bank span",
                    )
                )
                continue
            span = bank.get_span(span_id)
            if span.source_id != source_id:
                violations.append(
                    LockViolation(
                        section_id=section.section_id,
                        kind="unknown_marker",
                        detail=f"marker {match.group(0)} names the wrong source "
                        f"for span {span_id}",
                    )
                )
                continue
            if section.section_id not in span.section_ids:
                violations.append(
                    LockViolation(
                        section_id=section.section_id,
                        kind="foreign_span",
                        detail=f"span {span_id} is not admissible for section "
                        f"{section.section_id!r}",
                    )
                )
        for index, sentence in enumerate(_claim_sentences(section.body)):
            if sentence in allowlist:
                continue
            if not ANCHOR_RE.search(sentence):
                violations.append(
                    LockViolation(
                        section_id=section.section_id,
                        kind="uncited_claim",
                        detail=f"uncited sentence: {sentence[:80]!r}",
                        sentence_index=index,
                    )
                )
    return violations


def assemble_report(
    plan: ResearchPlan,
    sections: list[ReportSection],
    bank: MemoryBank,
    *,
    title: str = "Research Report",
    allowlist: frozenset[str] = frozenset(),
) -> ReportDocument:
    """Order sections by plan, snapshot the bank, and enforce the lock."""
    by_id = {s.section_id: s for s in sections}
    missing = [sid for sid in plan.section_ids() if sid not in by_id]
    if missing:
        raise AssemblyError(f"missing sections: {missing}")
    extra = set(by_id) - set(plan.section_ids())
    if extra:
        raise AssemblyError(f"sections not in plan: {sorted(extra)}")
    ordered = [by_id[sid] for sid in plan.section_ids()]
    report = ReportDocument(
        title=title,
        sections=ordered,
        bank_snapshot_id=bank.snapshot_id(),
    )
    violations = verify_memory_lock(report, bank, allowlist=allowlist)
    if violations:
        raise AssemblyError(
            f"report violates the memory lock ({len(violations)} violations)",
            violations=violations,
        )
    return report


# -- rendering and export ------------------------------------------------


def _number_anchors(report: ReportDocument) -> dict[str, int]:
    numbers: dict[str, int] = {}
    for section in report.sections:
        for match in ANCHOR_RE.finditer(section.body):
            anchor = match.group(0)
            if anchor not in numbers:
                numbers[anchor] = len(numbers) + 1
    return numbers


def render_markdown(report: ReportDocument, bank: MemoryBank) -> str:
    """Readable export: numbered citations plus a references table."""
    numbers = _number_anchors(report)
    lines = [f"# {report.title}", "", f"Evidence snapshot: {report.bank_snapshot_id}", ""]
    for section in report.sections:
        lines.append(f"## {section.heading}")
        lines.append("")
        body = ANCHOR_RE.sub(lambda m: f"[{numbers[m.group(0)]}]", section.body)
        lines.append(body)
        lines.append("")
    if numbers:
        lines.append("## References")
        lines.append("")
        for anchor, number in sorted(numbers.items(), key=lambda kv: kv[1]):
            span_id = ANCHOR_RE.match(anchor).group(2)
            span = bank.get_span(span_id)
            source = bank.get_source(span.source_id)
            excerpt = collapse_whitespace(span.excerpt)
            if len(excerpt) > 160:
                excerpt = excerpt[:157] + "..."
            lines.append(f"[{number}] {source.title} ({source.uri}): \"{excerpt}\"")
    return "\n".join(lines).rstrip() + "\n"


def report_records(report: ReportDocument, bank: MemoryBank) -> list[dict]:
    """Structured export records: header, sections, and the reference table."""
    rows: list[dict] = [
        {
            "kind": "report_header",
            "title": report.title,
            "bank_snapshot_id": report.bank_snapshot_id,
        }
    ]
    for section in report.sections:
        rows.append(
            {
                "kind": "report_section",
                "section_id": section.section_id,
                "heading": section.heading,
                "body": section.body,
                "claims": list(section.claims),
            }
        )
    for anchor, number in sorted(_number_anchors(report).items(), key=lambda kv: kv[1]):
        span_id = ANCHOR_RE.match(anchor).group(2)
        span = bank.get_span(span_id)
        source = bank.get_source(span.source_id)
        rows.append(
            {
                "kind": "reference",
                "number": number,
                "anchor": anchor,
                "source_id": span.source_id,
                "span_id": span_id,
                "title": source.title,
                "uri": source.uri,
                "excerpt": span.excerpt,
            }
        )
    return rows


def report_from_records(rows: list[dict]) -> ReportDocument:
    title = "Research Report"
    snapshot = ""
    sections: list[ReportSection] = []
    for row in rows:
        if row["kind"] == "report_header":
            title = row["title"]
            snapshot = row["bank_snapshot_id"]
        elif row["kind"] == "report_section":
            sections.append(
                ReportSection(
                    section_id=row["section_id"],
                    heading=row["heading"],
                    body=row["body"],
                    claims=list(row["claims"]),
                )
            )
    return ReportDocument(title=title, sections=sections, bank_snapshot_id=snapshot)
