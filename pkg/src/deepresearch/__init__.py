"""deepresearch: evidence-driven research engine with memory-locked synthesis."""

from .config import EngineConfig, gateway_from_args, load_config
from .engine import ResearchEngine, RunResult
from .evalkit import (
    PairwiseVerdict,
    RubricCriterion,
    WeightVector,
    aggregate_win_rates,
    dimension_score,
    pairwise_judge,
    weighted_score,
)
from .execution import (
    Outline,
    QueryCandidate,
    ReflectionFinding,
    StoppingPolicy,
    run_to_convergence,
    should_stop,
)
from .gateway import (
    LiveGateway,
    LiveGatewayConfig,
    ModelRequest,
    ModelResponse,
    ReplayGateway,
    ScriptedTranscript,
)
from .memory_bank import (
    Claim,
    CoverageReport,
    CoverageRequirement,
    EvidenceSpan,
    MemoryBank,
    SourceRecord,
)
from .orchestrator import (
    ComplexitySignals,
    ResearchSession,
    RoutingPolicy,
    advance_session,
    classify_complexity,
    route,
)
from .packing import (
    PackedContext,
    PackingBudget,
    PackingPolicy,
    compress_preserving_citations,
    pack_section_context,
    prune_redundant,
)
from .planning import (
    ClarificationQuestion,
    PlanEdit,
    ResearchBrief,
    ResearchPlan,
    apply_plan_edit,
    build_brief,
    draft_plan,
    generate_clarifications,
)
from .retrieval import (
    AuthorityFilterPolicy,
    CorpusIndex,
    RankedHit,
    admit_hits,
    ingest_corpus,
    web_search,
)
from .synthesis import (
    ReportDocument,
    ReportSection,
    assemble_report,
    render_markdown,
    synthesize_section,
    verify_memory_lock,
)

__version__ = "0.1.0"
