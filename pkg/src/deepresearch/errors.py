"""Exception types shared across the engine."""

from __future__ import annotations


class DeepResearchError(Exception):
    """Base class for all engine errors."""


class ValidationError(DeepResearchError):
    """Input violates a documented precondition."""


class ConfigError(DeepResearchError):
    """Configuration value is unusable (e.g. zero usable packing budget)."""


class RecordError(DeepResearchError):
    """A line-delimited record file is malformed.

    ``index`` is the 0-based index of the first malformed record;
    ``last_valid`` is the index of the last record that parsed cleanly
    (-1 when none did).
    """

    def __init__(self, message: str, *, index: int, last_valid: int) -> None:
        super().__init__(f"{message} (record {index}, last valid record {last_valid})")
        self.index = index
        self.last_valid = last_valid


class AdmissibilityError(ValidationError):
    """A span was used as support outside the sections it is admissible for."""

    def __init__(self, span_id: str, section_id: str) -> None:
        super().__init__(
            f"span {span_id!r} is not admissible for section {section_id!r}"
        )
        self.span_id = span_id
        self.section_id = section_id


class TransitionError(DeepResearchError):
    """An event is illegal for the session's current phase."""

    def __init__(self, phase: str, event: str) -> None:
        super().__init__(f"event {event!r} is illegal in phase {phase!r}")
        self.phase = phase
        self.event = event


class GatewayError(DeepResearchError):
    """Model gateway failure."""


class TranscriptExhaustedError(GatewayError):
    """Strict replay ran out of transcript entries for a role."""

    def __init__(self, role_tag: str) -> None:
        super().__init__(f"replay transcript has no matching entry for role {role_tag!r}")
        self.role_tag = role_tag


class SchemaValidationError(GatewayError):
    """Structured model output failed schema validation."""

    def __init__(self, message: str, *, field: str) -> None:
        super().__init__(message)
        self.field = field


class TransportError(GatewayError):
    """Transport-level failure talking to a live backend; retriable."""

    retriable = True


class ClassificationError(DeepResearchError):
    """Complexity classification could not produce usable signals."""


class PlanningError(DeepResearchError):
    """Plan drafting or editing failed."""


class CompressionError(DeepResearchError):
    """Citation-preserving compression could not keep all anchors."""


class SynthesisError(DeepResearchError):
    """Section generation violated the admissible-evidence constraint."""


class AssemblyError(DeepResearchError):
    """Report assembly failed; carries the lock violations found."""

    def __init__(self, message: str, violations: list | None = None) -> None:
        super().__init__(message)
        self.violations = violations or []


class ExecutionError(DeepResearchError):
    """The research loop aborted; partial iteration traces are preserved."""

    def __init__(self, message: str, traces: list | None = None) -> None:
        super().__init__(message)
        self.traces = traces or []
