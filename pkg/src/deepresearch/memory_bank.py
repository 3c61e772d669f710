"""Claim-evidence graph: sources, evidence spans, claims, coverage, citation audits.

The bank is the single source of truth for what a report may cite. Spans are
admissible per section; claims must close over admissibility; coverage is
audited against per-section requirements. All mutations serialize through one
writer lock per bank instance.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Sequence

from .errors import AdmissibilityError, RecordError, ValidationError
from .records import Record, dump_record, read_records, write_records
from .textutil import content_hash, normalize_text, whole_word_match

ORIGINS = ("corpus", "web")

Facet = tuple[str, ...]


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class SourceRecord:
    source_id: str
    origin: str
    uri: str
    title: str
    full_text: str
    authority_score: float
    retrieved_at: str = field(default_factory=_now)


@dataclass
class EvidenceSpan:
    span_id: str
    source_id: str
    excerpt: str
    char_range: tuple[int, int]
    salience: float
    section_ids: tuple[str, ...]


@dataclass
class Claim:
    claim_id: str
    statement: str
    section_id: str
    supporting_span_ids: tuple[str, ...]


@dataclass
class CoverageRequirement:
    section_id: str
    min_distinct_sources: int = 2
    min_spans: int = 3
    required_facets: tuple[Facet, ...] = ()

    def __post_init__(self) -> None:
        if self.min_distinct_sources < 1:
            raise ValidationError("min_distinct_sources must be >= 1")
        if self.min_spans < 1:
            raise ValidationError("min_spans must be >= 1")
        facets = tuple(tuple(f) for f in self.required_facets)
        if any(not facet for facet in facets):
            raise ValidationError("facet keyword-sets must be non-empty")
        self.required_facets = facets


@dataclass
class SectionCoverage:
    coverage: float
    satisfied: bool
    missing_facets: list[Facet]
    distinct_sources: int
    span_count: int


@dataclass
class CoverageReport:
    per_section: dict[str, SectionCoverage]
    overall_satisfied: bool

    def coverage_of(self, section_id: str) -> float:
        entry = self.per_section.get(section_id)
        return entry.coverage if entry else 0.0


@dataclass
class CitationViolation:
    kind: str  # unknown_claim | inadmissible_span | verbatim_mismatch
    section_id: str
    claim_id: str = ""
    span_id: str = ""
    position: int | None = None
    detail: str = ""


class MemoryBank:
    """Persistent claim-evidence graph with section-scoped admissibility."""

    def __init__(self) -> None:
        self._lock = threading.RLock()
        self._sources: dict[str, SourceRecord] = {}
        self._spans: dict[str, EvidenceSpan] = {}
        self._claims: dict[str, Claim] = {}
        self._span_claims: dict[str, list[str]] = {}
        self._requirements: dict[str, CoverageRequirement] = {}
        self._span_seq = 0
        self._claim_seq = 0

    # -- sources ---------------------------------------------------------

    def register_source(
        self,
        *,
        origin: str,
        uri: str,
        title: str,
        full_text: str,
        authority_score: float = 1.0,
        retrieved_at: str | None = None,
    ) -> str:
        """Register a source; idempotent on identical (uri, full_text)."""
        if origin not in ORIGINS:
            raise ValidationError(f"unknown origin {origin!r}")
        text = normalize_text(full_text)
        if not text:
            raise ValidationError(f"source {uri!r} has empty full_text")
        if not 0.0 <= authority_score <= 1.0:
            raise ValidationError("authority_score must be in [0, 1]")
        source_id = "src" + content_hash(uri, text)[:12]
        with self._lock:
            if source_id not in self._sources:
                self._sources[source_id] = SourceRecord(
                    source_id=source_id,
                    origin=origin,
                    uri=uri,
                    title=title,
                    full_text=text,
                    authority_score=authority_score,
                    retrieved_at=retrieved_at or _now(),
                )
        return source_id

    def get_source(self, source_id: str) -> SourceRecord:
        try:
            return self._sources[source_id]
        except KeyError:
            raise ValidationError(f"unknown source {source_id!r}") from None

    # -- spans -----------------------------------------------------------

    def add_evidence_span(
        self,
        source_id: str,
        char_range: tuple[int, int],
        section_ids: Iterable[str],
        salience: float,
    ) -> str:
        """Store a span; its excerpt is the exact substring of the source."""
        source = self.get_source(source_id)
        start, end = char_range
        if not (0 <= start < end <= len(source.full_text)):
            raise ValidationError(
                f"range ({start}, {end}) out of bounds for source of "
                f"length {len(source.full_text)}"
            )
        sections = tuple(sorted(set(section_ids)))
        if not sections:
            raise ValidationError("section_ids must be non-empty")
        if not 0.0 <= salience <= 1.0:
            raise ValidationError("salience must be in [0, 1]")
        with self._lock:
            self._span_seq += 1
            span_id = f"sp{self._span_seq:06d}"
            self._spans[span_id] = EvidenceSpan(
                span_id=span_id,
                source_id=source_id,
                excerpt=source.full_text[start:end],
                char_range=(start, end),
                salience=salience,
                section_ids=sections,
            )
        return span_id

    def get_span(self, span_id: str) -> EvidenceSpan:
        try:
            return self._spans[span_id]
        except KeyError:
            raise ValidationError(f"unknown span {span_id!r}") from None

    def has_span(self, span_id: str) -> bool:
        return span_id in self._spans

    def find_span(
        self, source_id: str, char_range: tuple[int, int], section_id: str
    ) -> str | None:
        """Existing span over the same source range admissible for section, if any."""
        for span in self._spans.values():
            if (
                span.source_id == source_id
                and span.char_range == tuple(char_range)
                and section_id in span.section_ids
            ):
                return span.span_id
        return None

    # -- claims ----------------------------------------------------------

    def link_claim(
        self, statement: str, section_id: str, span_ids: Sequence[str]
    ) -> str:
        """Attach a claim to its supporting spans; admissibility must close."""
        if not statement.strip():
            raise ValidationError("claim statement must be non-empty")
        deduped = list(dict.fromkeys(span_ids))
        if not deduped:
            raise ValidationError("claim requires at least one supporting span")
        for span_id in deduped:
            span = self.get_span(span_id)
            if section_id not in span.section_ids:
                raise AdmissibilityError(span_id, section_id)
        with self._lock:
            self._claim_seq += 1
            claim_id = f"cl{self._claim_seq:06d}"
            self._claims[claim_id] = Claim(
                claim_id=claim_id,
                statement=statement,
                section_id=section_id,
                supporting_span_ids=tuple(deduped),
            )
            for span_id in deduped:
                self._span_claims.setdefault(span_id, []).append(claim_id)
        return claim_id

    def get_claim(self, claim_id: str) -> Claim:
        try:
            return self._claims[claim_id]
        except KeyError:
            raise ValidationError(f"unknown claim {claim_id!r}") from None

    def claims_for_span(self, span_id: str) -> list[str]:
        return list(self._span_claims.get(span_id, ()))

    # -- requirements ----------------------------------------------------

    def set_requirements(self, requirements: Sequence[CoverageRequirement]) -> None:
        seen: set[str] = set()
        for req in requirements:
            if req.section_id in seen:
                raise ValidationError(f"duplicate requirement for {req.section_id!r}")
            seen.add(req.section_id)
        with self._lock:
            self._requirements = {r.section_id: r for r in requirements}

    @property
    def requirements(self) -> list[CoverageRequirement]:
        return list(self._requirements.values())

    # -- queries ---------------------------------------------------------

    def admissible_evidence(self, section_id: str) -> list[EvidenceSpan]:
        """Spans admissible for a section, salience-descending, span_id tiebreak."""
        spans = [s for s in self._spans.values() if section_id in s.section_ids]
        spans.sort(key=lambda s: (-s.salience, s.span_id))
        return spans

    def citation_set_hash(self) -> str:
        """Hash of the sorted (section_id, claim_id, span_id) citation triples."""
        triples = sorted(
            (claim.section_id, claim.claim_id, span_id)
            for claim in self._claims.values()
            for span_id in claim.supporting_span_ids
        )
        return content_hash(*("|".join(t) for t in triples))

    def snapshot_id(self) -> str:
        rows = (dump_record(row) for row in self._canonical_rows())
        return "bank" + content_hash(*rows)[:12]

    # -- audits ----------------------------------------------------------

    def audit_coverage(
        self, requirements: Sequence[CoverageRequirement] | None = None
    ) -> CoverageReport:
        """Per-section coverage = mean of clamped source/span/facet sub-ratios."""
        if requirements is None:
            requirements = self.requirements
        seen: set[str] = set()
        for req in requirements:
            if req.section_id in seen:
                raise ValidationError(
                    f"duplicate section {req.section_id!r} in requirements"
                )
            seen.add(req.section_id)

        per_section: dict[str, SectionCoverage] = {}
        for req in requirements:
            spans = self.admissible_evidence(req.section_id)
            distinct_sources = len({s.source_id for s in spans})
            span_count = len(spans)
            missing: list[Facet] = []
            for facet in req.required_facets:
                hit = any(
                    whole_word_match(keyword, span.excerpt)
                    for span in spans
                    for keyword in facet
                )
                if not hit:
                    missing.append(facet)
            source_ratio = min(1.0, distinct_sources / req.min_distinct_sources)
            span_ratio = min(1.0, span_count / req.min_spans)
            total_facets = len(req.required_facets)
            facet_ratio = (
                1.0 if total_facets == 0 else (total_facets - len(missing)) / total_facets
            )
            satisfied = (
                distinct_sources >= req.min_distinct_sources
                and span_count >= req.min_spans
                and not missing
            )
            per_section[req.section_id] = SectionCoverage(
                coverage=(source_ratio + span_ratio + facet_ratio) / 3.0,
                satisfied=satisfied,
                missing_facets=missing,
                distinct_sources=distinct_sources,
                span_count=span_count,
            )
        overall = all(entry.satisfied for entry in per_section.values())
        return CoverageReport(per_section=per_section, overall_satisfied=overall)

    def audit_citations(self, report) -> list[CitationViolation]:
        """Re-resolve every cited claim of a report document against the bank.

        Violations: citation of an unknown claim, a supporting span not
        admissible for the citing section, or a stored excerpt that no longer
        matches its source text verbatim.
        """
        violations: list[CitationViolation] = []
        for section in report.sections:
            for claim_id in section.claims:
                claim = self._claims.get(claim_id)
                if claim is None:
                    violations.append(
                        CitationViolation(
                            kind="unknown_claim",
                            section_id=section.section_id,
                            claim_id=claim_id,
                            detail=f"claim {claim_id!r} not in bank",
                        )
                    )
                    continue
                for span_id in claim.supporting_span_ids:
                    span = self._spans.get(span_id)
                    if span is None or section.section_id not in span.section_ids:
                        violations.append(
                            CitationViolation(
                                kind="inadmissible_span",
                                section_id=section.section_id,
                                claim_id=claim_id,
                                span_id=span_id,
                                detail=f"span {span_id!r} not admissible for "
                                f"{section.section_id!r}",
                            )
                        )
                        continue
                    violations.extend(
                        self._verbatim_violations(span, section.section_id, claim_id)
                    )
        return violations

    def verify_excerpt_integrity(self) -> list[CitationViolation]:
        """Full-bank scan: every stored excerpt must equal its source substring."""
        violations: list[CitationViolation] = []
        for span in self._spans.values():
            violations.extend(self._verbatim_violations(span, "", ""))
        return violations

    def _verbatim_violations(
        self, span: EvidenceSpan, section_id: str, claim_id: str
    ) -> list[CitationViolation]:
        source = self._sources.get(span.source_id)
        if source is None:
            return [
                CitationViolation(
                    kind="inadmissible_span",
                    section_id=section_id,
                    claim_id=claim_id,
                    span_id=span.span_id,
                    detail=f"span {span.span_id!r} references unknown source",
                )
            ]
        start, end = span.char_range
        actual = source.full_text[start:end]
        if actual == span.excerpt:
            return []
        position = next(
            (i for i, (a, b) in enumerate(zip(span.excerpt, actual)) if a != b),
            min(len(span.excerpt), len(actual)),
        )
        return [
            CitationViolation(
                kind="verbatim_mismatch",
                section_id=section_id,
                claim_id=claim_id,
                span_id=span.span_id,
                position=position,
                detail=f"excerpt of span {span.span_id!r} diverges from source "
                f"at offset {position}",
            )
        ]

    # -- persistence -----------------------------------------------------

    def _canonical_rows(self) -> list[Record]:
        rows: list[Record] = []
        for source in sorted(self._sources.values(), key=lambda s: s.source_id):
            rows.append(
                {
                    "kind": "source",
                    "source_id": source.source_id,
                    "origin": source.origin,
                    "uri": source.uri,
                    "title": source.title,
                    "full_text": source.full_text,
                    "authority_score": source.authority_score,
                    "retrieved_at": source.retrieved_at,
                }
            )
        for span in sorted(self._spans.values(), key=lambda s: s.span_id):
            rows.append(
                {
                    "kind": "span",
                    "span_id": span.span_id,
                    "source_id": span.source_id,
                    "excerpt": span.excerpt,
                    "start": span.char_range[0],
                    "end": span.char_range[1],
                    "salience": span.salience,
                    "section_ids": list(span.section_ids),
                }
            )
        for claim in sorted(self._claims.values(), key=lambda c: c.claim_id):
            rows.append(
                {
                    "kind": "claim",
                    "claim_id": claim.claim_id,
                    "statement": claim.statement,
                    "section_id": claim.section_id,
                    "supporting_span_ids": list(claim.supporting_span_ids),
                }
            )
        for req in self._requirements.values():
            rows.append(
                {
                    "kind": "requirement",
                    "section_id": req.section_id,
                    "min_distinct_sources": req.min_distinct_sources,
                    "min_spans": req.min_spans,
                    "required_facets": [list(f) for f in req.required_facets],
                }
            )
        return rows

    def persist(self, path) -> int:
        with self._lock:
            return write_records(path, self._canonical_rows())

    @classmethod
    def load(cls, path) -> "MemoryBank":
        bank = cls()
        requirements: list[CoverageRequirement] = []
        for index, record in enumerate(read_records(path)):
            try:
                bank._apply_record(record, requirements)
            except (KeyError, TypeError, ValidationError) as exc:
                raise RecordError(
                    f"invalid {record.get('kind', '?')} record: {exc}",
                    index=index,
                    last_valid=index - 1,
                ) from exc
        bank._requirements = {r.section_id: r for r in requirements}
        return bank

    def _apply_record(
        self, record: Record, requirements: list[CoverageRequirement]
    ) -> None:
        kind = record["kind"]
        if kind == "source":
            source = SourceRecord(
                source_id=record["source_id"],
                origin=record["origin"],
                uri=record["uri"],
                title=record["title"],
                full_text=record["full_text"],
                authority_score=record["authority_score"],
                retrieved_at=record["retrieved_at"],
            )
            self._sources[source.source_id] = source
        elif kind == "span":
            span = EvidenceSpan(
                span_id=record["span_id"],
                source_id=record["source_id"],
                excerpt=record["excerpt"],
                char_range=(record["start"], record["end"]),
                salience=record["salience"],
                section_ids=tuple(record["section_ids"]),
            )
            self._spans[span.span_id] = span
            self._span_seq = max(self._span_seq, _id_number(span.span_id))
        elif kind == "claim":
            claim = Claim(
                claim_id=record["claim_id"],
                statement=record["statement"],
                section_id=record["section_id"],
                supporting_span_ids=tuple(record["supporting_span_ids"]),
            )
            self._claims[claim.claim_id] = claim
            for span_id in claim.supporting_span_ids:
                self._span_claims.setdefault(span_id, []).append(claim.claim_id)
            self._claim_seq = max(self._claim_seq, _id_number(claim.claim_id))
        elif kind == "requirement":
            requirements.append(
                CoverageRequirement(
                    section_id=record["section_id"],
                    min_distinct_sources=record["min_distinct_sources"],
                    min_spans=record["min_spans"],
                    required_facets=tuple(
                        tuple(f) for f in record["required_facets"]
                    ),
                )
            )
        else:
            raise ValidationError(f"unknown record kind {kind!r}")

    # -- equality / stats --------------------------------------------------

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MemoryBank):
            return NotImplemented
        return self._canonical_rows() == other._canonical_rows()

    def __hash__(self) -> int:  # banks are mutable; identity hashing
        return id(self)

    def stats(self) -> dict[str, int]:
        return {
            "sources": len(self._sources),
            "spans": len(self._spans),
            "claims": len(self._claims),
        }


def _id_number(identifier: str) -> int:
    digits = "".join(ch for ch in identifier if ch.isdigit())
    return int(digits) if digits else 0
