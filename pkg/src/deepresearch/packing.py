"""Section-scoped context packing: salience-greedy selection under a unit
budget, shingle-overlap redundancy pruning, and citation-preserving
compression with a deterministic truncation fallback.

Anchor syntax `[[source_id:span_id]]` is shared with the synthesis module.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .errors import CompressionError, ConfigError, ValidationError
from .gateway import ModelRequest
from .memory_bank import EvidenceSpan, MemoryBank
from .textutil import estimate_units, jaccard, word_shingles

logger = logging.getLogger(__name__)

ANCHOR_RE = re.compile(r"\[\[([^:\[\]\s]+):([^:\[\]\s]+)\]\]")

UnitEstimator = Callable[[str], int]


def anchor_for(source_id: str, span_id: str) -> str:
    return f"[[{source_id}:{span_id}]]"


def parse_anchors(text: str) -> list[str]:
    """All anchor markers in order of appearance (duplicates preserved)."""
    return [m.group(0) for m in ANCHOR_RE.finditer(text)]


def render_span(span: EvidenceSpan) -> str:
    return f"{span.excerpt} {anchor_for(span.source_id, span.span_id)}"


@dataclass
class PackingBudget:
    max_units: int
    reserve_fraction: float = 0.0

    def __post_init__(self) -> None:
        if self.max_units <= 0:
            raise ValidationError("max_units must be > 0")
        if not 0.0 <= self.reserve_fraction < 1.0:
            raise ValidationError("reserve_fraction must be in [0, 1)")

    @property
    def usable(self) -> int:
        return int(self.max_units * (1.0 - self.reserve_fraction))


@dataclass
class PackingPolicy:
    similarity_threshold: float = 0.5
    salience_floor: float = 0.0
    oversize_cap_fraction: float = 0.25
    unit_estimator: UnitEstimator = estimate_units

    def __post_init__(self) -> None:
        if not 0.0 < self.similarity_threshold <= 1.0:
            raise ValidationError("similarity_threshold must be in (0, 1]")


@dataclass
class PackItem:
    span_id: str
    size_units: int
    salience: float
    anchor: str
    text: str

    @classmethod
    def from_span(
        cls, span: EvidenceSpan, estimator: UnitEstimator = estimate_units
    ) -> "PackItem":
        rendered = render_span(span)
        return cls(
            span_id=span.span_id,
            size_units=estimator(rendered),
            salience=span.salience,
            anchor=anchor_for(span.source_id, span.span_id),
            text=rendered,
        )


@dataclass
class DroppedItem:
    span_id: str
    reason: str  # over_budget | pruned_redundant | low_salience_floor


@dataclass
class PackedContext:
    section_id: str
    items: list[PackItem]
    total_units: int
    dropped: list[DroppedItem] = field(default_factory=list)

    @property
    def anchors(self) -> set[str]:
        return {item.anchor for item in self.items}

    def payload(self) -> str:
        return "\n\n".join(item.text for item in self.items)


@dataclass
class CompressedSummary:
    original_span_ids: list[str]
    summary_text: str
    anchors_present: set[str]
    compression_ratio: float


# -- pruning -----------------------------------------------------------------


def prune_redundant(
    items: Sequence[PackItem],
    bank: MemoryBank,
    similarity_threshold: float = 0.5,
) -> list[PackItem]:
    """Drop near-duplicate items, keeping the highest-salience representative.

    Overlap is Jaccard similarity over 5-gram word shingles of the span
    excerpts; any retained pair stays strictly below the threshold.
    """
    if not 0.0 < similarity_threshold <= 1.0:
        raise ValidationError("similarity_threshold must be in (0, 1]")
    ordered = sorted(items, key=lambda i: (-i.salience, i.span_id))
    kept: list[PackItem] = []
    kept_shingles: list[frozenset] = []
    for item in ordered:
        shingles = word_shingles(bank.get_span(item.span_id).excerpt)
        if any(jaccard(shingles, other) >= similarity_threshold for other in kept_shingles):
            continue
        kept.append(item)
        kept_shingles.append(shingles)
    return kept


# -- packing -----------------------------------------------------------------


def pack_items(
    section_id: str,
    candidates: Sequence[PackItem],
    usable_budget: int,
    *,
    pre_dropped: Sequence[DroppedItem] = (),
) -> PackedContext:
    """Greedy selection in (-salience, span_id) order; skipped items keep reasons."""
    if usable_budget <= 0:
        raise ConfigError("usable packing budget must be > 0")
    ordered = sorted(candidates, key=lambda i: (-i.salience, i.span_id))
    packed: list[PackItem] = []
    dropped = list(pre_dropped)
    remaining = usable_budget
    for item in ordered:
        if item.size_units <= remaining:
            packed.append(item)
            remaining -= item.size_units
        else:
            dropped.append(DroppedItem(span_id=item.span_id, reason="over_budget"))
    return PackedContext(
        section_id=section_id,
        items=packed,
        total_units=usable_budget - remaining,
        dropped=dropped,
    )


def pack_section_context(
    section_id: str,
    bank: MemoryBank,
    budget: PackingBudget,
    policy: PackingPolicy | None = None,
) -> PackedContext:
    """Pack a section's admissible evidence: floor filter, prune, greedy fill."""
    policy = policy or PackingPolicy()
    usable = budget.usable
    if usable <= 0:
        raise ConfigError(
            f"budget {budget.max_units} with reserve {budget.reserve_fraction} "
            "leaves no usable units"
        )
    spans = bank.admissible_evidence(section_id)
    items = [PackItem.from_span(s, policy.unit_estimator) for s in spans]

    dropped: list[DroppedItem] = []
    eligible: list[PackItem] = []
    for item in items:
        if item.salience < policy.salience_floor:
            dropped.append(DroppedItem(item.span_id, "low_salience_floor"))
        else:
            eligible.append(item)

    surviving = prune_redundant(eligible, bank, policy.similarity_threshold)
    surviving_ids = {item.span_id for item in surviving}
    dropped.extend(
        DroppedItem(item.span_id, "pruned_redundant")
        for item in eligible
        if item.span_id not in surviving_ids
    )
    return pack_items(section_id, surviving, usable, pre_dropped=dropped)


# -- compression -------------------------------------------------------------


def compress_preserving_citations(
    spans: Sequence[EvidenceSpan],
    target_units: int,
    gateway,
    *,
    estimator: UnitEstimator = estimate_units,
) -> CompressedSummary:
    """Compress spans into a summary that keeps every citation anchor.

    A model output missing anchors is retried once with the anchors
    re-injected; a second miss raises CompressionError (callers fall back to
    anchor-preserving truncation).
    """
    if target_units <= 0:
        raise ValidationError("target_units must be > 0")
    if not spans:
        raise ValidationError("compression requires at least one span")
    anchors = [anchor_for(s.source_id, s.span_id) for s in spans]
    original = "\n".join(render_span(s) for s in spans)
    original_units = estimator(original)
    if original_units <= target_units:
        return CompressedSummary(
            original_span_ids=[s.span_id for s in spans],
            summary_text=original,
            anchors_present=set(anchors),
            compression_ratio=1.0,
        )

    anchor_only = " ".join(anchors)
    allowed_units = max(target_units, estimator(anchor_only))
    prompt = (
        f"Compress the following evidence into at most {target_units} units. "
        "Keep every citation marker verbatim.\n\n" + original
    )
    for attempt in range(2):
        response = gateway.complete(ModelRequest(role_tag="compress", prompt=prompt))
        text = response.text.strip()
        present = set(parse_anchors(text))
        missing = [a for a in anchors if a not in present]
        if text and not missing:
            if estimator(text) > allowed_units:
                text = _trim_keeping_anchors(text, anchors, allowed_units, estimator)
            summary_units = estimator(text)
            return CompressedSummary(
                original_span_ids=[s.span_id for s in spans],
                summary_text=text,
                anchors_present=set(parse_anchors(text)),
                compression_ratio=min(1.0, summary_units / original_units),
            )
        if attempt == 0:
            prompt += (
                "\n\nThe previous summary omitted required citation markers. "
                "Include each of these markers verbatim: " + " ".join(missing or anchors)
            )
    raise CompressionError(
        f"summary kept losing anchors after retry ({len(spans)} spans)"
    )


def truncate_preserving_anchors(
    spans: Sequence[EvidenceSpan],
    target_units: int,
    *,
    estimator: UnitEstimator = estimate_units,
) -> CompressedSummary:
    """Deterministic fallback: leading excerpt text per span, anchors always kept."""
    if not spans:
        raise ValidationError("truncation requires at least one span")
    anchors = [anchor_for(s.source_id, s.span_id) for s in spans]
    anchor_chars = sum(len(a) + 1 for a in anchors)
    # Reserve two chars per span for separators so the result stays in budget.
    char_budget = max(0, target_units * 4 - anchor_chars - 2 * len(spans))
    share = char_budget // len(spans)
    lines = []
    for span, anchor in zip(spans, anchors):
        prefix = span.excerpt[:share].strip()
        lines.append(f"{prefix} {anchor}".strip())
    text = "\n".join(lines)
    original = "\n".join(render_span(s) for s in spans)
    original_units = max(1, estimator(original))
    return CompressedSummary(
        original_span_ids=[s.span_id for s in spans],
        summary_text=text,
        anchors_present=set(anchors),
        compression_ratio=min(1.0, estimator(text) / original_units),
    )


def compress_or_truncate(
    spans: Sequence[EvidenceSpan],
    target_units: int,
    gateway,
    *,
    estimator: UnitEstimator = estimate_units,
) -> CompressedSummary:
    try:
        return compress_preserving_citations(
            spans, target_units, gateway, estimator=estimator
        )
    except CompressionError:
        logger.warning("compression failed; falling back to anchor-keeping truncation")
        return truncate_preserving_anchors(spans, target_units, estimator=estimator)


def _trim_keeping_anchors(
    text: str, anchors: Sequence[str], allowed_units: int, estimator: UnitEstimator
) -> str:
    """Trim an oversize summary from the end, re-appending any anchors lost."""
    body = text
    while body:
        lost = [a for a in anchors if a not in parse_anchors(body)]
        candidate = (body + " " + " ".join(lost)).strip() if lost else body
        if estimator(candidate) <= allowed_units:
            return candidate
        body = body[: len(body) - 8].rstrip()
    return " ".join(anchors)


def prepare_section_context(
    section_id: str,
    bank: MemoryBank,
    budget: PackingBudget,
    policy: PackingPolicy | None = None,
    gateway=None,
) -> PackedContext:
    """Pack a section, first compressing items that exceed the per-item cap.

    Items larger than oversize_cap_fraction of the usable budget are
    compressed (model-backed when a gateway is supplied, truncation
    otherwise) before greedy packing.
    """
    policy = policy or PackingPolicy()
    usable = budget.usable
    if usable <= 0:
        raise ConfigError("usable packing budget must be > 0")
    cap = max(1, int(usable * policy.oversize_cap_fraction))

    spans = bank.admissible_evidence(section_id)
    dropped: list[DroppedItem] = []
    eligible_spans: list[EvidenceSpan] = []
    for span in spans:
        if span.salience < policy.salience_floor:
            dropped.append(DroppedItem(span.span_id, "low_salience_floor"))
        else:
            eligible_spans.append(span)

    items = [PackItem.from_span(s, policy.unit_estimator) for s in eligible_spans]
    surviving = prune_redundant(items, bank, policy.similarity_threshold)
    surviving_ids = {item.span_id for item in surviving}
    dropped.extend(
        DroppedItem(item.span_id, "pruned_redundant")
        for item in items
        if item.span_id not in surviving_ids
    )

    prepared: list[PackItem] = []
    for item in surviving:
        if item.size_units <= cap:
            prepared.append(item)
            continue
        span = bank.get_span(item.span_id)
        if gateway is not None:
            summary = compress_or_truncate(
                [span], cap, gateway, estimator=policy.unit_estimator
            )
        else:
            summary = truncate_preserving_anchors(
                [span], cap, estimator=policy.unit_estimator
            )
        prepared.append(
            PackItem(
                span_id=item.span_id,
                size_units=policy.unit_estimator(summary.summary_text),
                salience=item.salience,
                anchor=item.anchor,
                text=summary.summary_text,
            )
        )
    return pack_items(section_id, prepared, usable, pre_dropped=dropped)
