"""Acceptance suite: one test per release criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
output. Every tolerance is pinned here; nothing is deferred to calibration.
"""

from __future__ import annotations

import itertools
import json
import random
import time

import pytest

from e2e_fixture import REQUEST, build_index, build_transcripts
from deepresearch.config import EngineConfig
from deepresearch.engine import ResearchEngine
from deepresearch.errors import RecordError
from deepresearch.evalkit import (
    PairwiseVerdict,
    RubricCriterion,
    WeightVector,
    aggregate_win_rates,
    dimension_score,
    weighted_score,
)
from deepresearch.execution import (
    StoppingPolicy,
    run_to_convergence,
    seed_query_text,
    should_stop,
)
from deepresearch.gateway import ReplayGateway, ScriptedTranscript
from deepresearch.memory_bank import CoverageRequirement, MemoryBank
from deepresearch.orchestrator import (
    TRANSITIONS,
    ResearchSession,
    advance_session,
    event_log_records,
    replay_events,
)
from deepresearch.packing import (
    PackItem,
    anchor_for,
    compress_or_truncate,
    pack_items,
    truncate_preserving_anchors,
)
from deepresearch.planning import PlanSection, ResearchPlan
from deepresearch.retrieval import CorpusIndex, RankedHit, ingest_corpus
from deepresearch.synthesis import verify_memory_lock
from deepresearch.textutil import estimate_units


def _report(criterion: str) -> None:
    print(f"ACCEPTANCE PASS: {criterion}")


# -- 1. RACE arithmetic reconstruction ---------------------------------------


def test_race_arithmetic_reconstruction():
    weights = WeightVector(
        insight=0.3, comprehensiveness=0.35, instruction=0.2, readability=0.15
    )
    components = {
        "comprehensiveness": 52.22,
        "insight": 54.37,
        "instruction": 51.11,
        "readability": 52.18,
    }
    overall = weighted_score(components, weights)
    assert overall == pytest.approx(52.637, abs=1e-3)
    assert abs(overall - 52.65) < 0.05

    raw_weights = [10, 15, 15, 15, 10, 15, 15]  # published sub-criterion weights, sum 95
    scores = [80, 70, 60, 50, 90, 40, 75]
    criteria = [
        RubricCriterion(f"c{i}", w, s)
        for i, (w, s) in enumerate(zip(raw_weights, scores))
    ]
    assert dimension_score(criteria) == pytest.approx(6125 / 95)
    assert dimension_score([RubricCriterion("only", 1.0, 70.0)]) == 70.0
    _report("RACE arithmetic reconstruction (52.637 within 0.05 of 52.65)")


# -- 2. Rate closure -----------------------------------------------------


def test_rate_closure_on_published_row():
    verdicts = (
        [PairwiseVerdict("t", "Win")] * 7721
        + [PairwiseVerdict("t", "Tie")] * 1838
        + [PairwiseVerdict("t", "Lose")] * 441
    )
    assert len(verdicts) == 10_000
    rates = aggregate_win_rates(verdicts)
    assert rates == {"win": 77.21, "tie": 18.38, "lose": 4.41}
    assert rates["win"] + rates["tie"] + rates["lose"] == pytest.approx(100.00, abs=0.01)
    _report("rate closure reproduces {77.21, 18.38, 4.41} summing to 100.00")


# -- 3. End-to-end replay ----------------------------------------------------


def test_end_to_end_replay_headless(tmp_path):
    started = time.monotonic()
    index = build_index(tmp_path)
    assert len(index) == 20
    transcripts = build_transcripts(index)
    gateway = ReplayGateway(ScriptedTranscript.from_records(transcripts), strict=False)
    engine = ResearchEngine(gateway, index, EngineConfig())
    result = engine.run_headless(REQUEST)
    elapsed = time.monotonic() - started

    assert result.session.phase == "Done"
    assert len(result.report.sections) == 3
    assert verify_memory_lock(result.report, result.bank) == []
    assert result.bank.audit_citations(result.report) == []
    assert elapsed < 10.0, f"end-to-end replay took {elapsed:.2f}s"
    _report(
        f"end-to-end replay to Done with zero violations in {elapsed:.2f}s, no network"
    )


# -- 4. Stopping semantics -----------------------------------------------


class _StubRetrieval:
    def __init__(self, hits_by_query):
        self.hits_by_query = hits_by_query

    def search(self, query):
        return self.hits_by_query.get(query, [])


def _hit(ref, text):
    return RankedHit(
        ref=ref, origin="corpus", title=ref, text=text, score=1.0,
        matched_terms=[], snippet_range=(0, len(text)), authority_score=1.0,
    )


def _plan(specs):
    sections = []
    for title, sources, spans in specs:
        sid = title.lower()
        sections.append(
            PlanSection(
                section_id=sid,
                title=title,
                coverage_requirement=CoverageRequirement(sid, sources, spans),
            )
        )
    return ResearchPlan(plan_version=1, sections=sections)


def _executing(plan):
    session = ResearchSession.create("acceptance fixture")
    for event in ("ClarificationsGenerated", "BriefBuilt", "PlanDrafted", "PlanApproved"):
        session = advance_session(session, event)
    session.plan = plan
    return session


def _lenient():
    return ReplayGateway(ScriptedTranscript.from_records([]), strict=False)


def test_stopping_semantics_three_fixtures():
    # (a) Converged in one iteration.
    plan = _plan([("Alpha", 1, 1)])
    retrieval = _StubRetrieval(
        {seed_query_text(plan.sections[0]): [_hit("d://1", "alpha body text")]}
    )
    final, traces = run_to_convergence(
        _executing(plan), MemoryBank(), retrieval, _lenient(),
        StoppingPolicy(max_iterations=8),
    )
    assert len(traces) == 1
    assert final.event_log[-1].payload == {"reason": "Converged"}

    # (b) BudgetExhausted at max_iterations = 8.
    plan_b = _plan([("Alpha", 1, 1)])
    final_b, traces_b = run_to_convergence(
        _executing(plan_b), MemoryBank(), _StubRetrieval({}), _lenient(),
        StoppingPolicy(max_iterations=8),
    )
    assert len(traces_b) == 8
    assert traces_b[-1].iteration_index == 8
    assert final_b.event_log[-1].payload == {"reason": "BudgetExhausted"}

    # (c) Continue targets exactly the under-covered sections.
    plan_c = _plan([("Alpha", 1, 1), ("Beta", 2, 2)])
    alpha_seed = seed_query_text(plan_c.get_section("alpha"))
    beta_seed = seed_query_text(plan_c.get_section("beta"))
    retrieval_c = _StubRetrieval(
        {
            alpha_seed: [_hit("d://a", "alpha evidence")],
            beta_seed: [_hit("d://b1", "beta first")],
            "beta follow up": [_hit("d://b2", "beta second")],
        }
    )
    gateway_c = ReplayGateway(
        ScriptedTranscript.from_records(
            [
                {
                    "role_tag": "evolve",
                    "match": "'beta' has 1/2",
                    "response": {
                        "queries": [
                            {"query_text": "beta follow up", "target_section_id": "beta"}
                        ]
                    },
                }
            ]
        ),
        strict=False,
    )
    final_c, traces_c = run_to_convergence(
        _executing(plan_c), MemoryBank(), retrieval_c, gateway_c,
        StoppingPolicy(max_iterations=8),
    )
    assert len(traces_c) == 2
    assert traces_c[1].queries_issued == ["beta follow up"]
    # Trace inspection: every Continue's targets equal the under-threshold set.
    policy = StoppingPolicy(max_iterations=8)
    for trace in traces_c:
        decision = should_stop(trace, policy)
        expected = [
            sid
            for sid, entry in trace.coverage_after.per_section.items()
            if entry.coverage < policy.coverage_threshold
        ]
        if decision.kind == "Continue":
            assert decision.target_sections == expected
    _report("stopping semantics: Converged@1, BudgetExhausted@8, exact targeting")


# -- 5. Coverage monotonicity ----------------------------------------------


def test_coverage_monotonicity_randomized():
    rng = random.Random(2024)
    checks = 0
    while checks < 500:
        bank = MemoryBank()
        sections = [f"s{i}" for i in range(rng.randint(1, 3))]
        requirements = [
            CoverageRequirement(
                sid,
                min_distinct_sources=rng.randint(1, 4),
                min_spans=rng.randint(1, 6),
                required_facets=tuple(
                    (kw,) for kw in rng.sample(["alpha", "beta", "gamma"], rng.randint(0, 2))
                ),
            )
            for sid in sections
        ]
        sources = [
            bank.register_source(
                origin="corpus",
                uri=f"d://{i}",
                title=f"d{i}",
                full_text=" ".join(
                    rng.choice(["alpha", "beta", "gamma", "delta", "filler"])
                    for _ in range(30)
                ),
            )
            for i in range(rng.randint(1, 4))
        ]
        previous = {
            sid: bank.audit_coverage(requirements).per_section[sid].coverage
            for sid in sections
        }
        for _ in range(rng.randint(3, 10)):
            source_id = rng.choice(sources)
            text = bank.get_source(source_id).full_text
            start = rng.randrange(0, len(text) - 12)
            bank.add_evidence_span(
                source_id,
                (start, start + rng.randint(6, 12)),
                {rng.choice(sections)},
                rng.random(),
            )
            report = bank.audit_coverage(requirements)
            for sid in sections:
                current = report.per_section[sid].coverage
                assert current >= previous[sid] - 1e-12
                previous[sid] = current
            checks += 1
    _report(f"coverage monotonicity held across {checks} randomized span additions")


# -- 6. Packing safety and oracle proximity ----------------------------------


def _exhaustive_best(items, budget):
    best = 0.0
    for r in range(len(items) + 1):
        for combo in itertools.combinations(items, r):
            if sum(i.size_units for i in combo) <= budget:
                best = max(best, sum(i.salience for i in combo))
    return best


def test_packing_safety_and_oracle_proximity():
    rng = random.Random(77)
    for _ in range(500):
        n = rng.randint(0, 12)
        items = [
            PackItem(
                span_id=f"sp{i:02d}",
                size_units=rng.randint(1, 40),
                salience=round(rng.random(), 3),
                anchor=f"[[s:sp{i:02d}]]",
                text="t",
            )
            for i in range(n)
        ]
        budget = rng.randint(80, 150)
        packed = pack_items("s", items, budget)
        assert packed.total_units <= budget
        greedy = sum(i.salience for i in packed.items)
        assert greedy >= 0.5 * _exhaustive_best(items, budget) - 1e-9

    fixed = [
        PackItem("sp1", 60, 0.9, "[[s:sp1]]", "t"),
        PackItem("sp2", 50, 0.8, "[[s:sp2]]", "t"),
        PackItem("sp3", 40, 0.7, "[[s:sp3]]", "t"),
    ]
    packed = pack_items("s", fixed, 100)
    assert [i.span_id for i in packed.items] == ["sp1", "sp3"]
    assert sum(i.salience for i in packed.items) == pytest.approx(
        _exhaustive_best(fixed, 100)
    )
    _report("packing: budget safety, >=0.5x exhaustive optimum, fixed instance exact")


# -- 7. Anchor conservation ----------------------------------------------


def test_anchor_conservation_randomized_compression():
    rng = random.Random(55)
    for _ in range(120):
        bank = MemoryBank()
        spans = []
        for i in range(rng.randint(1, 4)):
            text = " ".join(
                rng.choice(["datum", "figure", "finding", "trend", "series"])
                for _ in range(rng.randint(40, 160))
            )
            sid = bank.register_source(
                origin="corpus", uri=f"d://{i}", title=f"d{i}", full_text=text
            )
            spans.append(
                bank.get_span(bank.add_evidence_span(sid, (0, len(text)), {"s"}, 0.5))
            )
        anchors = {anchor_for(s.source_id, s.span_id) for s in spans}
        target = rng.randint(5, 60)

        keep = rng.random() < 0.5
        response = (
            "Condensed summary. " + " ".join(sorted(anchors))
            if keep
            else "Summary that cites nothing."
        )
        gateway = ReplayGateway(
            ScriptedTranscript.from_records(
                [{"role_tag": "compress", "response": response}] * 2
            ),
            strict=False,
        )
        summary = compress_or_truncate(spans, target, gateway)
        assert summary.anchors_present >= anchors
        for anchor in anchors:
            assert anchor in summary.summary_text

        fallback = truncate_preserving_anchors(spans, target)
        assert fallback.anchors_present >= anchors
        anchor_only = " ".join(sorted(anchors))
        assert estimate_units(fallback.summary_text) <= max(
            target, estimate_units(anchor_only)
        )
    _report("anchor conservation on every non-failing path and fallback truncation")


# -- 8. BM25 oracle ------------------------------------------------------


def test_bm25_oracle_and_determinism(tmp_path):
    docs = {
        "a.txt": "portfolio tools compare pricing",
        "b.txt": "pricing models vary widely across vendor tiers today",
        "c.txt": "the market for robotics keeps growing while vendor pricing stays opaque overall",
    }
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    manifest = tmp_path / "manifest.jsonl"
    manifest.write_text(
        "\n".join(json.dumps({"path": n, "title": n}) for n in docs) + "\n",
        encoding="utf-8",
    )
    for name, text in docs.items():
        (corpus / name).write_text(text, encoding="utf-8")

    rankings = []
    for _ in range(3):
        index, _ = ingest_corpus(corpus, manifest, CorpusIndex())
        hits = index.search("vendor pricing", top_k=5)
        rankings.append(json.dumps([(h.ref, h.score) for h in hits]))
    # Hand-derived ranking for documents of 4, 8, and 12 analyzer terms.
    first = json.loads(rankings[0])
    assert [r[0] for r in first] == ["b.txt", "c.txt", "a.txt"]
    assert first[0][1] == pytest.approx(0.603535, abs=1e-6)
    assert first[1][1] == pytest.approx(0.501048, abs=1e-6)
    assert first[2][1] == pytest.approx(0.167868, abs=1e-6)
    assert rankings[0] == rankings[1] == rankings[2]
    _report("BM25 hand oracle ranking exact and byte-identical across runs")


# -- 9. Bank round-trip ----------------------------------------------------


def _random_bank(rng):
    bank = MemoryBank()
    sections = [f"s{i}" for i in range(rng.randint(1, 3))]
    span_pool = []
    for i in range(rng.randint(1, 5)):
        text = " ".join(
            rng.choice(["alpha", "beta", "gamma", "delta"]) for _ in range(20)
        )
        source_id = bank.register_source(
            origin=rng.choice(["corpus", "web"]),
            uri=f"u://{rng.randrange(10_000)}",
            title=f"t{i}",
            full_text=text,
            authority_score=round(rng.random(), 3),
            retrieved_at="2026-01-01T00:00:00+00:00",
        )
        for _ in range(rng.randint(0, 3)):
            start = rng.randrange(0, len(text) - 10)
            span_pool.append(
                (
                    bank.add_evidence_span(
                        source_id,
                        (start, start + rng.randint(4, 10)),
                        set(rng.sample(sections, rng.randint(1, len(sections)))),
                        round(rng.random(), 3),
                    )
                )
            )
    for _ in range(rng.randint(0, 3)):
        if not span_pool:
            break
        span_id = rng.choice(span_pool)
        span = bank.get_span(span_id)
        section = rng.choice(span.section_ids)
        bank.link_claim(f"claim {rng.randrange(1000)}", section, [span_id])
    bank.set_requirements(
        [CoverageRequirement(sid, rng.randint(1, 3), rng.randint(1, 4)) for sid in sections]
    )
    return bank


def test_bank_round_trip_randomized(tmp_path):
    rng = random.Random(31)
    for case in range(200):
        bank = _random_bank(rng)
        path = tmp_path / f"bank{case}.jsonl"
        bank.persist(path)
        loaded = MemoryBank.load(path)
        assert loaded == bank
        assert loaded.snapshot_id() == bank.snapshot_id()

    # Failure localization on a truncated file.
    bank = _random_bank(random.Random(99))
    path = tmp_path / "truncate-me.jsonl"
    bank.persist(path)
    lines = path.read_text(encoding="utf-8").strip("\n").split("\n")
    assert len(lines) >= 2
    cut = len(lines) - 1
    path.write_text(
        "\n".join(lines[:cut]) + "\n" + lines[cut][: max(1, len(lines[cut]) // 2)],
        encoding="utf-8",
    )
    with pytest.raises(RecordError) as exc:
        MemoryBank.load(path)
    assert exc.value.index == cut
    assert exc.value.last_valid == cut - 1
    _report("bank round-trip on 200 randomized banks; truncation localized")


# -- 10. State-machine determinism ------------------------------------------


def test_state_machine_replay_determinism(tmp_path):
    rng = random.Random(8)
    for case in range(100):
        session = ResearchSession.create("walk")
        for _ in range(rng.randint(0, 30)):
            if session.phase in ("Done", "Failed"):
                break
            options = [e for (p, e) in TRANSITIONS if p == session.phase]
            options.append("ErrorRaised")
            session = advance_session(session, rng.choice(options))

        records = event_log_records(session)
        serialized = "\n".join(json.dumps(r, sort_keys=True) for r in records)
        # Byte-for-byte: a file round trip re-serializes identically.
        path = tmp_path / f"events{case}.jsonl"
        path.write_text(serialized + "\n", encoding="utf-8")
        reread = [json.loads(line) for line in path.read_text(encoding="utf-8").strip().split("\n") if line]
        assert "\n".join(json.dumps(r, sort_keys=True) for r in reread) == serialized
        # Folding the log reproduces the terminal phase.
        assert replay_events(session.event_log) == session.phase
    _report("state-machine replay reproduces terminal phase and byte-identical logs")
