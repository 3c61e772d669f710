"""Text primitives shared by the bank, retrieval, packing, and synthesis."""

from __future__ import annotations

import hashlib
import re

_WORD_RE = re.compile(r"[0-9A-Za-z]+")
_SENTENCE_END_RE = re.compile(r"(?<=[.!?])\s+")
_SLUG_STRIP_RE = re.compile(r"[^a-z0-9]+")


def normalize_text(text: str) -> str:
    """Canonical form: no BOM, Unix newlines."""
    if text.startswith("﻿"):
        text = text[1:]
    return text.replace("\r\n", "\n").replace("\r", "\n")


def estimate_units(text: str) -> int:
    """Default size estimator: ceil(chars / 4). Empty text costs 0."""
    return (len(text) + 3) // 4


def tokenize(text: str) -> list[str]:
    """Analyzer: lowercase, split on non-alphanumerics, drop tokens shorter than 2."""
    return [t for t in _WORD_RE.findall(text.lower()) if len(t) >= 2]


def content_hash(*parts: str) -> str:
    digest = hashlib.sha256()
    for part in parts:
        digest.update(part.encode("utf-8"))
        digest.update(b"\x00")
    return digest.hexdigest()


def slugify(title: str) -> str:
    slug = _SLUG_STRIP_RE.sub("-", title.lower()).strip("-")
    return slug or "section"


def whole_word_match(keyword: str, text: str) -> bool:
    """Case-insensitive whole-word match; multi-word keywords match as phrases."""
    if not keyword:
        return False
    pattern = r"\b" + re.escape(keyword) + r"\b"
    return re.search(pattern, text, re.IGNORECASE) is not None


def split_sentences(text: str) -> list[str]:
    """Deterministic sentence split on terminal punctuation; newlines kept inside."""
    parts = [p.strip() for p in _SENTENCE_END_RE.split(text)]
    return [p for p in parts if p]


def word_shingles(text: str, n: int = 5) -> frozenset[tuple[str, ...]]:
    """Contiguous n-gram word shingles; short texts yield one whole-text shingle."""
    tokens = tokenize(text)
    if not tokens:
        return frozenset()
    if len(tokens) < n:
        return frozenset({tuple(tokens)})
    return frozenset(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def jaccard(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    return len(a & b) / len(a | b)


def collapse_whitespace(text: str) -> str:
    return " ".join(text.split())
