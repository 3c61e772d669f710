"""Evidence acquisition: corpus ingestion, BM25 lexical search, web search.

The analyzer lowercases, splits on non-alphanumerics, and drops tokens shorter
than two characters. BM25 uses k1=1.2, b=0.75 with the non-negative idf
ln(1 + (N - df + 0.5) / (df + 0.5)). Ranking ties break by document id, so
identical corpus and query always yield a byte-identical hit list.
"""

from __future__ import annotations

import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol
from urllib.parse import urlparse

from .errors import TransportError, ValidationError
from .memory_bank import MemoryBank
from .records import read_records, write_records
from .textutil import normalize_text, tokenize

logger = logging.getLogger(__name__)

BM25_K1 = 1.2
BM25_B = 0.75
SNIPPET_WIDTH = 400

_TOKEN_RE = re.compile(r"[0-9A-Za-z]+")
_SENTENCE_BOUNDARY_RE = re.compile(r"(?<=[.!?])\s+")


@dataclass
class CorpusDocument:
    doc_id: str
    path: str
    title: str
    text: str
    term_stats: dict[str, int]
    authority_score: float = 1.0


@dataclass
class RankedHit:
    ref: str  # doc_id for corpus hits, uri for web hits
    origin: str
    title: str
    text: str
    score: float
    matched_terms: list[str]
    snippet_range: tuple[int, int]
    authority_score: float = 1.0


@dataclass
class AuthorityFilterPolicy:
    min_authority: float = 0.0
    allowed_domains: list[str] | None = None
    max_results: int = 10

    def __post_init__(self) -> None:
        if self.max_results < 1:
            raise ValidationError("max_results must be >= 1")


@dataclass
class IngestReport:
    added: int = 0
    unchanged: int = 0
    skipped: list[tuple[str, str]] = field(default_factory=list)


class CorpusIndex:
    """Inverted index over normalized corpus documents; immutable once built."""

    def __init__(self) -> None:
        self.documents: dict[str, CorpusDocument] = {}
        self._postings: dict[str, dict[str, int]] = {}
        self._doc_lengths: dict[str, int] = {}

    def __len__(self) -> int:
        return len(self.documents)

    def add_document(self, doc: CorpusDocument) -> None:
        if doc.doc_id in self.documents:
            self._remove_postings(doc.doc_id)
        self.documents[doc.doc_id] = doc
        self._doc_lengths[doc.doc_id] = sum(doc.term_stats.values())
        for term, freq in doc.term_stats.items():
            self._postings.setdefault(term, {})[doc.doc_id] = freq

    def _remove_postings(self, doc_id: str) -> None:
        for term in list(self._postings):
            self._postings[term].pop(doc_id, None)
            if not self._postings[term]:
                del self._postings[term]

    @property
    def average_length(self) -> float:
        if not self._doc_lengths:
            return 0.0
        return sum(self._doc_lengths.values()) / len(self._doc_lengths)

    def idf(self, term: str) -> float:
        df = len(self._postings.get(term, ()))
        if df == 0:
            return 0.0
        n = len(self.documents)
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))

    def search(self, query: str, top_k: int = 10) -> list[RankedHit]:
        """BM25-ranked hits with positive scores, ties broken by doc_id."""
        if top_k < 1:
            raise ValidationError("top_k must be >= 1")
        terms = sorted(set(tokenize(query)))
        if not terms or not self.documents:
            return []
        avgdl = self.average_length
        scores: dict[str, float] = {}
        matched: dict[str, list[str]] = {}
        for term in terms:
            idf = self.idf(term)
            for doc_id, tf in self._postings.get(term, {}).items():
                dl = self._doc_lengths[doc_id]
                norm = BM25_K1 * (1 - BM25_B + BM25_B * dl / avgdl)
                scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf * (BM25_K1 + 1) / (
                    tf + norm
                )
                matched.setdefault(doc_id, []).append(term)
        ranked = sorted(
            ((doc_id, score) for doc_id, score in scores.items() if score > 0),
            key=lambda pair: (-pair[1], pair[0]),
        )[:top_k]
        hits = []
        for doc_id, score in ranked:
            doc = self.documents[doc_id]
            hits.append(
                RankedHit(
                    ref=doc_id,
                    origin="corpus",
                    title=doc.title,
                    text=doc.text,
                    score=score,
                    matched_terms=matched[doc_id],
                    snippet_range=extract_snippet_range(doc.text, matched[doc_id]),
                    authority_score=doc.authority_score,
                )
            )
        return hits

    # -- persistence -----------------------------------------------------

    def save(self, path) -> int:
        rows = [
            {
                "kind": "doc",
                "doc_id": doc.doc_id,
                "path": doc.path,
                "title": doc.title,
                "text": doc.text,
                "authority_score": doc.authority_score,
            }
            for doc in sorted(self.documents.values(), key=lambda d: d.doc_id)
        ]
        return write_records(path, rows)

    @classmethod
    def load(cls, path) -> "CorpusIndex":
        index = cls()
        for record in read_records(path):
            text = record["text"]
            index.add_document(
                CorpusDocument(
                    doc_id=record["doc_id"],
                    path=record["path"],
                    title=record["title"],
                    text=text,
                    term_stats=dict(Counter(tokenize(text))),
                    authority_score=record.get("authority_score", 1.0),
                )
            )
        return index


def ingest_corpus(
    directory, manifest_path, index: CorpusIndex | None = None
) -> tuple[CorpusIndex, IngestReport]:
    """Index manifest-listed files under directory; unchanged files are no-ops."""
    directory = Path(directory)
    index = index or CorpusIndex()
    report = IngestReport()
    for entry in read_records(manifest_path, strict=False):
        rel_path = entry["path"]
        file_path = directory / rel_path
        try:
            raw = file_path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            logger.warning("skipping %s: %s", rel_path, exc)
            report.skipped.append((rel_path, str(exc)))
            continue
        text = normalize_text(raw)
        doc_id = rel_path
        existing = index.documents.get(doc_id)
        if existing is not None and existing.text == text:
            report.unchanged += 1
            continue
        index.add_document(
            CorpusDocument(
                doc_id=doc_id,
                path=str(file_path),
                title=entry.get("title", rel_path),
                text=text,
                term_stats=dict(Counter(tokenize(text))),
                authority_score=float(entry.get("authority", 1.0)),
            )
        )
        report.added += 1
    return index, report


def extract_snippet_range(text: str, matched_terms: Iterable[str]) -> tuple[int, int]:
    """Densest fixed-width window of matched terms, clipped to sentence bounds."""
    if not text:
        return (0, 0)
    wanted = {t.lower() for t in matched_terms}
    positions = [
        m.start()
        for m in _TOKEN_RE.finditer(text)
        if m.group().lower() in wanted
    ]
    if not positions:
        return (0, min(len(text), SNIPPET_WIDTH))
    best_start, best_count = positions[0], 0
    for pos in positions:
        count = sum(1 for p in positions if pos <= p < pos + SNIPPET_WIDTH)
        if count > best_count:
            best_start, best_count = pos, count
    sentence_starts = [0] + [m.end() for m in _SENTENCE_BOUNDARY_RE.finditer(text)]
    snip_start = max(s for s in sentence_starts if s <= best_start)
    limit = min(len(text), snip_start + SNIPPET_WIDTH)
    sentence_ends = [m.start() + 1 for m in re.finditer(r"[.!?]", text)] + [len(text)]
    in_window = [e for e in sentence_ends if best_start < e <= limit]
    snip_end = max(in_window) if in_window else limit
    return (snip_start, snip_end)


# -- web search --------------------------------------------------------------


class WebClient(Protocol):
    def search(self, query: str) -> list[dict]: ...


DEFAULT_DOMAIN_AUTHORITY = {
    "gov": 0.95,
    "edu": 0.9,
    "org": 0.7,
    "com": 0.5,
}


def domain_of(uri: str) -> str:
    return urlparse(uri).netloc.lower()


def default_authority(uri: str) -> float:
    """Static domain-reputation fallback keyed on the top-level domain."""
    tld = domain_of(uri).rsplit(".", 1)[-1]
    return DEFAULT_DOMAIN_AUTHORITY.get(tld, 0.3)


class FixtureWebClient:
    """Replays recorded web results from a record file, keyed by query text."""

    def __init__(self, results_by_query: dict[str, list[dict]]) -> None:
        self._results = results_by_query

    @classmethod
    def from_path(cls, path) -> "FixtureWebClient":
        results: dict[str, list[dict]] = {}
        for record in read_records(path, strict=False):
            results.setdefault(record["query"], []).append(record)
        return cls(results)

    def search(self, query: str) -> list[dict]:
        results = self._results.get(query, [])
        for result in results:
            if result.get("error") == "transport":
                raise TransportError(f"recorded transport failure for {query!r}")
        return results


def web_search(
    client: WebClient, query: str, policy: AuthorityFilterPolicy
) -> list[RankedHit]:
    """Search and discard low-authority or off-allowlist results pre-admission."""
    raw_results = client.search(query)
    hits: list[RankedHit] = []
    for raw in raw_results:
        uri = raw["uri"]
        authority = float(
            raw.get("authority_score", default_authority(uri))
        )
        if authority < policy.min_authority:
            continue
        if policy.allowed_domains is not None and domain_of(uri) not in [
            d.lower() for d in policy.allowed_domains
        ]:
            continue
        text = normalize_text(str(raw.get("text", "")))
        matched = [t for t in set(tokenize(query)) if t in set(tokenize(text))]
        hits.append(
            RankedHit(
                ref=uri,
                origin="web",
                title=str(raw.get("title", uri)),
                text=text,
                score=float(raw.get("score", authority)),
                matched_terms=sorted(matched),
                snippet_range=extract_snippet_range(text, matched),
                authority_score=authority,
            )
        )
    hits.sort(key=lambda h: (-h.score, h.ref))
    return hits[: policy.max_results]


# -- admission ---------------------------------------------------------------


def admit_hits(bank: MemoryBank, hits: list[RankedHit], section_id: str) -> list[str]:
    """Register hit sources and admit snippet spans for a section.

    Salience is the hit score normalized by the batch maximum. Hits whose
    snippet resolves to no content are skipped. Re-admitting an identical
    (source, range, section) span reuses the stored one.
    """
    span_ids: list[str] = []
    if not hits:
        return span_ids
    max_score = max(hit.score for hit in hits)
    for hit in hits:
        start, end = hit.snippet_range
        if not hit.text or start >= end:
            logger.warning("skipping hit %s: no resolvable snippet", hit.ref)
            continue
        source_id = bank.register_source(
            origin=hit.origin,
            uri=hit.ref,
            title=hit.title,
            full_text=hit.text,
            authority_score=hit.authority_score,
        )
        salience = hit.score / max_score if max_score > 0 else 1.0
        salience = min(1.0, max(0.0, salience))
        existing = bank.find_span(source_id, (start, end), section_id)
        if existing is not None:
            span_ids.append(existing)
            continue
        span_ids.append(
            bank.add_evidence_span(source_id, (start, end), {section_id}, salience)
        )
    return span_ids
