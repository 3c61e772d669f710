from __future__ import annotations

import pytest

from e2e_fixture import REQUEST, build_index, build_transcripts
from deepresearch.config import EngineConfig
from deepresearch.engine import ResearchEngine
from deepresearch.gateway import ReplayGateway, ScriptedTranscript
from deepresearch.orchestrator import replay_events
from deepresearch.planning import PlanEdit
from deepresearch.synthesis import render_markdown, verify_memory_lock


@pytest.fixture(scope="module")
def index(tmp_path_factory):
    return build_index(tmp_path_factory.mktemp("fixture"))


@pytest.fixture(scope="module")
def transcripts(index):
    return build_transcripts(index)


def make_engine(index, transcripts, config=None):
    gateway = ReplayGateway(ScriptedTranscript.from_records(transcripts), strict=False)
    return ResearchEngine(gateway, index, config or EngineConfig())


def test_headless_deep_session_reaches_done(index, transcripts):
    engine = make_engine(index, transcripts)
    result = engine.run_headless(REQUEST)
    assert result.session.phase == "Done"
    assert result.session.route == "DeepResearch"
    assert result.report is not None
    assert len(result.report.sections) == 3
    assert len(result.traces) == 1  # converges in one iteration
    assert result.traces[0].coverage_after.overall_satisfied


def test_headless_report_is_lock_clean_and_audit_clean(index, transcripts):
    engine = make_engine(index, transcripts)
    result = engine.run_headless(REQUEST)
    assert verify_memory_lock(result.report, result.bank) == []
    assert result.bank.audit_citations(result.report) == []
    assert result.report.bank_snapshot_id == result.bank.snapshot_id()


def test_headless_event_log_replays_to_done(index, transcripts):
    engine = make_engine(index, transcripts)
    result = engine.run_headless(REQUEST)
    assert replay_events(result.session.event_log) == "Done"
    events = [e.event for e in result.session.event_log]
    assert events[0] == "ClarificationsGenerated"
    assert events[-1] == "ReportCompleted"


def test_headless_render_has_references(index, transcripts):
    engine = make_engine(index, transcripts)
    result = engine.run_headless(REQUEST)
    rendered = render_markdown(result.report, result.bank)
    assert "## References" in rendered
    assert "[1]" in rendered


def test_fast_path_records_citations_in_bank(index, transcripts):
    records = [
        {
            "role_tag": "classify",
            "response": {
                "ambiguity": 0.1,
                "expected_subquestions": 0,
                "requires_traceability": False,
                "expected_depth": "factoid",
            },
        }
    ]
    engine = make_engine(index, records)
    result = engine.run_headless("vendor pricing per robot")
    assert result.session.route == "FastRetrieval"
    assert result.session.phase == "Done"
    assert result.answer and "[[" in result.answer
    assert result.bank.stats()["spans"] > 0


def test_stepwise_plan_edit_before_approval(index):
    # Seed order follows the edited plan, so the dry run must replay the edit.
    edits = [
        PlanEdit(
            "Reorder",
            {"order": ["adoption-risks", "market-overview", "vendor-landscape"]},
        )
    ]
    answers = {"q1": "Focus on Europe"}
    records = build_transcripts(index, edits=edits, answers=answers)
    engine = make_engine(index, records)
    from deepresearch.memory_bank import MemoryBank

    bank = MemoryBank()
    session = engine.start_session(REQUEST)
    session, questions = engine.begin_clarification(session)
    session = engine.submit_answers(session, questions, answers)
    assert session.phase == "AwaitingPlanApproval"
    assert session.brief.answered == {"q1": "Focus on Europe"}
    session = engine.apply_edits(session, edits)
    assert session.plan.plan_version == 2
    session = engine.approve_plan(session, bank)
    assert session.phase == "Executing"
    session, traces = engine.execute(session, bank)
    assert session.phase == "Synthesizing"
    session, report = engine.synthesize_report(session, bank)
    assert session.phase == "Done"
    # Report follows the edited plan order.
    assert [s.section_id for s in report.sections] == [
        "adoption-risks",
        "market-overview",
        "vendor-landscape",
    ]
