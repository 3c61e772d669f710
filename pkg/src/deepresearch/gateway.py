"""Uniform model-backend interface with a deterministic replay implementation.

Live mode talks to a chat-completion-style HTTP endpoint; replay mode serves
scripted transcript entries matched by (role_tag, optional prompt substring)
so every loop and test runs without network access.
"""

from __future__ import annotations

import json
import logging
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .errors import (
    GatewayError,
    SchemaValidationError,
    TranscriptExhaustedError,
    TransportError,
    ValidationError,
)
from .records import read_records
from .textutil import estimate_units

logger = logging.getLogger(__name__)

ROLE_TAGS = (
    "classify",
    "clarify",
    "plan",
    "outline",
    "evolve",
    "reflect_enrich",
    "compress",
    "synthesize",
    "judge",
)


@dataclass
class ModelRequest:
    role_tag: str
    prompt: str
    response_schema: str | None = None
    budget_units: int = 200_000

    def __post_init__(self) -> None:
        if self.role_tag not in ROLE_TAGS:
            raise ValidationError(f"unknown role_tag {self.role_tag!r}")
        if not self.prompt:
            raise ValidationError("prompt must be non-empty")


@dataclass
class ModelResponse:
    text: str
    usage_units: int


# -- structured-output schemas ---------------------------------------------


def _require(data: dict, name: str, kind, *, schema: str):
    if name not in data:
        raise SchemaValidationError(f"{schema}: missing field {name!r}", field=name)
    value = data[name]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise SchemaValidationError(
                f"{schema}: field {name!r} must be a number", field=name
            )
        return float(value)
    if kind is int and isinstance(value, bool):
        raise SchemaValidationError(f"{schema}: field {name!r} must be an int", field=name)
    if not isinstance(value, kind):
        raise SchemaValidationError(
            f"{schema}: field {name!r} must be {kind.__name__}", field=name
        )
    return value


def _validate_complexity(data: dict) -> dict:
    ambiguity = _require(data, "ambiguity", float, schema="complexity_signals")
    if not 0.0 <= ambiguity <= 1.0:
        raise SchemaValidationError("ambiguity out of [0, 1]", field="ambiguity")
    subq = _require(data, "expected_subquestions", int, schema="complexity_signals")
    if subq < 0:
        raise SchemaValidationError(
            "expected_subquestions must be >= 0", field="expected_subquestions"
        )
    trace = _require(data, "requires_traceability", bool, schema="complexity_signals")
    depth = _require(data, "expected_depth", str, schema="complexity_signals")
    if depth not in ("factoid", "analytical"):
        raise SchemaValidationError(
            f"expected_depth {depth!r} invalid", field="expected_depth"
        )
    return {
        "ambiguity": ambiguity,
        "expected_subquestions": subq,
        "requires_traceability": trace,
        "expected_depth": depth,
    }


def _validate_clarifications(data: dict) -> dict:
    questions = _require(data, "questions", list, schema="clarifications")
    cleaned = []
    for i, q in enumerate(questions):
        if not isinstance(q, dict):
            raise SchemaValidationError(
                f"questions[{i}] must be an object", field=f"questions[{i}]"
            )
        cleaned.append(
            {
                "text": str(q.get("text", "")),
                "default_assumption": str(q.get("default_assumption", "")),
            }
        )
    return {"questions": cleaned}


def _validate_plan(data: dict) -> dict:
    sections = _require(data, "sections", list, schema="plan")
    cleaned = []
    for i, section in enumerate(sections):
        if not isinstance(section, dict) or not section.get("title"):
            raise SchemaValidationError(
                f"sections[{i}] missing title", field=f"sections[{i}].title"
            )
        entry: dict[str, Any] = {
            "title": str(section["title"]),
            "priority": int(section.get("priority", 1)),
            "success_criteria": [str(c) for c in section.get("success_criteria", [])],
        }
        req = section.get("coverage_requirement")
        if req is not None:
            if not isinstance(req, dict):
                raise SchemaValidationError(
                    f"sections[{i}].coverage_requirement must be an object",
                    field=f"sections[{i}].coverage_requirement",
                )
            entry["coverage_requirement"] = {
                "min_distinct_sources": int(req.get("min_distinct_sources", 2)),
                "min_spans": int(req.get("min_spans", 3)),
                "required_facets": [
                    [str(k) for k in facet] for facet in req.get("required_facets", [])
                ],
            }
        cleaned.append(entry)
    return {"sections": cleaned}


def _validate_outline(data: dict) -> dict:
    entries = _require(data, "entries", list, schema="outline")
    cleaned = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise SchemaValidationError(
                f"entries[{i}] must be an object", field=f"entries[{i}]"
            )
        cleaned.append(
            {
                "section_id": str(entry.get("section_id", "")),
                "heading": str(entry.get("heading", "")),
                "talking_points": [str(p) for p in entry.get("talking_points", [])],
            }
        )
    return {"entries": cleaned}


def _validate_queries(data: dict) -> dict:
    queries = _require(data, "queries", list, schema="queries")
    cleaned = []
    for i, q in enumerate(queries):
        if not isinstance(q, dict) or not q.get("query_text"):
            raise SchemaValidationError(
                f"queries[{i}] missing query_text", field=f"queries[{i}].query_text"
            )
        cleaned.append(
            {
                "query_text": str(q["query_text"]),
                "target_section_id": str(q.get("target_section_id", "")),
                "parent_query": str(q["parent_query"]) if q.get("parent_query") else None,
            }
        )
    return {"queries": cleaned}


def _validate_enrichment(data: dict) -> dict:
    findings = _require(data, "findings", list, schema="enrichment")
    cleaned = []
    for i, f in enumerate(findings):
        if not isinstance(f, dict) or not f.get("section_id"):
            raise SchemaValidationError(
                f"findings[{i}] missing section_id", field=f"findings[{i}].section_id"
            )
        cleaned.append(
            {
                "section_id": str(f["section_id"]),
                "gap_description": str(f.get("gap_description", "")),
                "proposed_query_terms": [
                    str(t) for t in f.get("proposed_query_terms", [])
                ],
            }
        )
    return {"findings": cleaned}


def _validate_verdict(data: dict) -> dict:
    winner = str(_require(data, "winner", str, schema="verdict")).strip().lower()
    if winner not in ("a", "b", "tie"):
        raise SchemaValidationError(f"winner {winner!r} invalid", field="winner")
    return {"winner": winner, "rationale": str(data.get("rationale", ""))}


SCHEMAS: dict[str, Callable[[dict], dict]] = {
    "complexity_signals": _validate_complexity,
    "clarifications": _validate_clarifications,
    "plan": _validate_plan,
    "outline": _validate_outline,
    "queries": _validate_queries,
    "enrichment": _validate_enrichment,
    "verdict": _validate_verdict,
}


# -- replay ----------------------------------------------------------------


@dataclass
class TranscriptEntry:
    role_tag: str
    response: str
    match: str | None = None


class ScriptedTranscript:
    """Ordered transcript entries consumed per role_tag."""

    def __init__(self, entries: list[TranscriptEntry]) -> None:
        self._by_role: dict[str, list[TranscriptEntry]] = {}
        for entry in entries:
            self._by_role.setdefault(entry.role_tag, []).append(entry)
        self._cursor: dict[str, int] = {tag: 0 for tag in self._by_role}

    @classmethod
    def from_records(cls, records: list[dict]) -> "ScriptedTranscript":
        entries = []
        for record in records:
            response = record.get("response", "")
            if not isinstance(response, str):
                response = json.dumps(response, sort_keys=True)
            entries.append(
                TranscriptEntry(
                    role_tag=record["role_tag"],
                    response=response,
                    match=record.get("match"),
                )
            )
        return cls(entries)

    @classmethod
    def from_path(cls, path: str | Path) -> "ScriptedTranscript":
        """Load one transcript file, or every *.jsonl under a directory (sorted)."""
        path = Path(path)
        files = sorted(path.glob("*.jsonl")) if path.is_dir() else [path]
        records: list[dict] = []
        for file in files:
            records.extend(read_records(file, strict=False))
        return cls.from_records(records)

    def next_entry(self, role_tag: str, prompt: str, *, strict: bool) -> str | None:
        entries = self._by_role.get(role_tag, [])
        cursor = self._cursor.get(role_tag, 0)
        if cursor >= len(entries):
            if strict:
                raise TranscriptExhaustedError(role_tag)
            return None
        entry = entries[cursor]
        if entry.match is not None and entry.match not in prompt:
            if strict:
                raise TranscriptExhaustedError(role_tag)
            return None
        self._cursor[role_tag] = cursor + 1
        return entry.response

    def remaining(self) -> int:
        return sum(
            len(entries) - self._cursor.get(tag, 0)
            for tag, entries in self._by_role.items()
        )


class ReplayGateway:
    """Deterministic gateway serving scripted transcript entries.

    Strict mode errors on any request without a matching entry; lenient mode
    answers it with an empty response, which callers treat as "no model input".
    """

    mode = "replay"

    def __init__(self, transcript: ScriptedTranscript, *, strict: bool = True) -> None:
        self.transcript = transcript
        self.strict = strict
        self.audit_log: list[dict] = []
        self._lock = threading.Lock()

    def complete(self, request: ModelRequest) -> ModelResponse:
        with self._lock:
            text = self.transcript.next_entry(
                request.role_tag, request.prompt, strict=self.strict
            )
        if text is None:
            text = ""
        usage = estimate_units(request.prompt) + estimate_units(text)
        self.audit_log.append(
            {
                "mode": self.mode,
                "role_tag": request.role_tag,
                "prompt_units": estimate_units(request.prompt),
                "response_units": estimate_units(text),
            }
        )
        return ModelResponse(text=text, usage_units=usage)


# -- live ------------------------------------------------------------------


@dataclass
class LiveGatewayConfig:
    base_url: str
    api_key: str = ""
    model: str = "default"
    max_retries: int = 2
    backoff_seconds: float = 0.5
    timeout_seconds: float = 60.0
    max_concurrency: int = 4


class LiveGateway:
    """Chat-completion-style HTTP backend with bounded retries."""

    mode = "live"

    def __init__(
        self, config: LiveGatewayConfig, *, sleep: Callable[[float], None] = time.sleep
    ) -> None:
        self.config = config
        self.audit_log: list[dict] = []
        self._sleep = sleep
        self._slots = threading.Semaphore(config.max_concurrency)

    def complete(self, request: ModelRequest) -> ModelResponse:
        prompt_units = estimate_units(request.prompt)
        if prompt_units > request.budget_units:
            raise GatewayError(
                f"prompt of {prompt_units} units exceeds budget "
                f"{request.budget_units}; not dispatching"
            )
        payload = json.dumps(
            {
                "model": self.config.model,
                "messages": [{"role": "user", "content": request.prompt}],
            }
        ).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        url = self.config.base_url.rstrip("/") + "/chat/completions"

        last_error: Exception | None = None
        attempts = self.config.max_retries + 1
        with self._slots:
            for attempt in range(attempts):
                try:
                    req = urllib.request.Request(url, data=payload, headers=headers)
                    with urllib.request.urlopen(
                        req, timeout=self.config.timeout_seconds
                    ) as resp:
                        body = json.loads(resp.read().decode("utf-8"))
                    text = body["choices"][0]["message"]["content"]
                    self.audit_log.append(
                        {
                            "mode": self.mode,
                            "role_tag": request.role_tag,
                            "prompt_units": prompt_units,
                            "response_units": estimate_units(text),
                            "attempts": attempt + 1,
                        }
                    )
                    return ModelResponse(
                        text=text, usage_units=prompt_units + estimate_units(text)
                    )
                except (urllib.error.URLError, TimeoutError, KeyError, ValueError) as exc:
                    last_error = exc
                    logger.warning("live gateway attempt %d failed: %s", attempt + 1, exc)
                    if attempt < attempts - 1:
                        self._sleep(self.config.backoff_seconds * (2**attempt))
        raise TransportError(f"model backend unreachable after {attempts} attempts: {last_error}")


# -- structured completion ---------------------------------------------------


def complete_structured_optional(gateway, request: ModelRequest) -> dict | None:
    """Structured completion for optional steps: an empty response means
    "no model input" and returns None instead of failing validation."""
    if not request.response_schema:
        raise ValidationError("response_schema required")
    validator = SCHEMAS.get(request.response_schema)
    if validator is None:
        raise ValidationError(f"unknown response schema {request.response_schema!r}")
    response = gateway.complete(request)
    text = response.text.strip()
    if not text:
        return None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaValidationError(
            f"response is not valid JSON: {exc.msg}", field="$"
        ) from exc
    if not isinstance(data, dict):
        raise SchemaValidationError("response is not a JSON object", field="$")
    return validator(data)


def complete_structured(gateway, request: ModelRequest) -> dict:
    """Complete and validate against the named schema, with one repair retry."""
    if not request.response_schema:
        raise ValidationError("complete_structured requires response_schema")
    validator = SCHEMAS.get(request.response_schema)
    if validator is None:
        raise ValidationError(f"unknown response schema {request.response_schema!r}")

    last_error: SchemaValidationError | None = None
    prompt = request.prompt
    for _ in range(2):
        response = gateway.complete(
            ModelRequest(
                role_tag=request.role_tag,
                prompt=prompt,
                response_schema=request.response_schema,
                budget_units=request.budget_units,
            )
        )
        try:
            data = json.loads(response.text)
            if not isinstance(data, dict):
                raise SchemaValidationError("response is not a JSON object", field="$")
            return validator(data)
        except json.JSONDecodeError as exc:
            last_error = SchemaValidationError(
                f"response is not valid JSON: {exc.msg}", field="$"
            )
        except SchemaValidationError as exc:
            last_error = exc
        prompt = (
            request.prompt
            + f"\n\nThe previous response was invalid ({last_error}). "
            + "Respond with corrected JSON only."
        )
    assert last_error is not None
    raise last_error
