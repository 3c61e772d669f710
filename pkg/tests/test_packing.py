from __future__ import annotations

import itertools
import random

import pytest

from deepresearch.errors import CompressionError, ConfigError
from deepresearch.gateway import ReplayGateway, ScriptedTranscript
from deepresearch.memory_bank import MemoryBank
from deepresearch.packing import (
    PackItem,
    PackingBudget,
    PackingPolicy,
    anchor_for,
    compress_or_truncate,
    compress_preserving_citations,
    pack_items,
    pack_section_context,
    parse_anchors,
    prepare_section_context,
    prune_redundant,
    render_span,
    truncate_preserving_anchors,
)
from deepresearch.textutil import estimate_units, jaccard, word_shingles


def make_item(span_id, size, salience):
    return PackItem(
        span_id=span_id, size_units=size, salience=salience,
        anchor=f"[[src:{span_id}]]", text=f"text {span_id}",
    )


def bank_with_spans(texts, section="s", saliences=None):
    bank = MemoryBank()
    span_ids = []
    for i, text in enumerate(texts):
        sid = bank.register_source(
            origin="corpus", uri=f"doc://{i}", title=f"d{i}", full_text=text
        )
        salience = saliences[i] if saliences else 0.5
        span_ids.append(bank.add_evidence_span(sid, (0, len(text)), {section}, salience))
    return bank, span_ids


# -- estimate_units ---------------------------------------------------------


def test_estimate_units_empty():
    assert estimate_units("") == 0


def test_estimate_units_formula():
    # ceil(8 / 4) per the stated estimator.
    assert estimate_units("x" * 8) == 2
    assert estimate_units("x" * 9) == 3


def test_estimate_units_concat_subadditive_within_one():
    for a, b in [("ab", "cde"), ("x" * 7, "y" * 6), ("", "z")]:
        assert estimate_units(a + b) <= estimate_units(a) + estimate_units(b) + 1


def test_estimate_units_monotone_on_prefixes():
    text = "a realistic sentence for unit estimation purposes"
    costs = [estimate_units(text[:i]) for i in range(len(text) + 1)]
    assert costs == sorted(costs)


# -- budget -------------------------------------------------------------------


def test_budget_usable_accounts_for_reserve():
    assert PackingBudget(max_units=100, reserve_fraction=0.25).usable == 75
    assert PackingBudget(max_units=10).usable == 10


def test_zero_usable_budget_is_config_error():
    bank, _ = bank_with_spans(["hello there world"])
    with pytest.raises(ConfigError):
        pack_section_context("s", bank, PackingBudget(max_units=1, reserve_fraction=0.9))


# -- prune_redundant ----------------------------------------------------------


def test_prune_identical_excerpts_keeps_one():
    text = "the vendor pricing pressure keeps growing across segments"
    bank, ids = bank_with_spans([text, text], saliences=[0.4, 0.9])
    items = [PackItem.from_span(bank.get_span(i)) for i in ids]
    kept = prune_redundant(items, bank, 0.5)
    assert [k.span_id for k in kept] == [ids[1]]  # higher salience wins


def test_prune_disjoint_excerpts_keeps_both():
    bank, ids = bank_with_spans(
        ["alpha beta gamma delta epsilon zeta", "one two three four five six"]
    )
    items = [PackItem.from_span(bank.get_span(i)) for i in ids]
    assert len(prune_redundant(items, bank, 0.5)) == 2


def test_prune_overlap_oracle():
    # Hand-built shingle sets with Jaccard overlap above the 0.5 threshold.
    a = "alpha beta gamma delta epsilon zeta eta theta"
    b = "alpha beta gamma delta epsilon zeta eta iota"
    overlap = jaccard(word_shingles(a), word_shingles(b))
    assert 0.5 <= overlap < 1.0
    bank, ids = bank_with_spans([a, b], saliences=[0.9, 0.4])
    items = [PackItem.from_span(bank.get_span(i)) for i in ids]
    kept = prune_redundant(items, bank, 0.5)
    assert [k.span_id for k in kept] == [ids[0]]


def test_prune_idempotent():
    texts = [
        "alpha beta gamma delta epsilon zeta",
        "alpha beta gamma delta epsilon eta",
        "completely different words here now",
    ]
    bank, ids = bank_with_spans(texts, saliences=[0.9, 0.8, 0.7])
    items = [PackItem.from_span(bank.get_span(i)) for i in ids]
    once = prune_redundant(items, bank, 0.5)
    twice = prune_redundant(once, bank, 0.5)
    assert [i.span_id for i in once] == [i.span_id for i in twice]


# -- packing ------------------------------------------------------------------


def exhaustive_best_salience(items, budget):
    best = 0.0
    for r in range(len(items) + 1):
        for combo in itertools.combinations(items, r):
            if sum(i.size_units for i in combo) <= budget:
                best = max(best, sum(i.salience for i in combo))
    return best


def test_pack_all_fit():
    items = [make_item("sp1", 10, 0.9), make_item("sp2", 20, 0.5)]
    packed = pack_items("s", items, 100)
    assert len(packed.items) == 2
    assert packed.dropped == []
    assert packed.total_units == 30


def test_pack_fixed_instance_matches_exhaustive_oracle():
    items = [
        make_item("sp1", 60, 0.9),
        make_item("sp2", 50, 0.8),
        make_item("sp3", 40, 0.7),
    ]
    packed = pack_items("s", items, 100)
    assert [i.span_id for i in packed.items] == ["sp1", "sp3"]
    assert [(d.span_id, d.reason) for d in packed.dropped] == [("sp2", "over_budget")]
    greedy_salience = sum(i.salience for i in packed.items)
    assert greedy_salience == pytest.approx(exhaustive_best_salience(items, 100))


def test_pack_single_oversize_item():
    items = [make_item("sp1", 150, 0.9)]
    packed = pack_items("s", items, 100)
    assert packed.items == []
    assert [(d.span_id, d.reason) for d in packed.dropped] == [("sp1", "over_budget")]


def test_pack_properties_random_instances():
    # Budgets large enough to admit several snippet-sized items; salience-greedy
    # offers no constant-factor guarantee when a single item can eat the budget.
    rng = random.Random(42)
    for _ in range(500):
        n = rng.randint(0, 12)
        items = [
            make_item(f"sp{i:02d}", rng.randint(1, 40), round(rng.random(), 3))
            for i in range(n)
        ]
        budget = rng.randint(80, 150)
        packed = pack_items("s", items, budget)
        # Budget safety.
        assert packed.total_units <= budget
        assert packed.total_units == sum(i.size_units for i in packed.items)
        # Accounting completeness: packed and dropped partition the candidates.
        packed_ids = {i.span_id for i in packed.items}
        dropped_ids = {d.span_id for d in packed.dropped}
        assert packed_ids | dropped_ids == {i.span_id for i in items}
        assert packed_ids & dropped_ids == set()
        # Greedy stays within factor 2 of the exhaustive optimum.
        optimal = exhaustive_best_salience(items, budget)
        greedy = sum(i.salience for i in packed.items)
        assert greedy >= 0.5 * optimal - 1e-9


def test_pack_section_context_items_are_admissible():
    bank, ids = bank_with_spans(
        ["first section text body", "second chunk of words", "third unrelated words"],
        saliences=[0.9, 0.8, 0.7],
    )
    other_sid = bank.register_source(
        origin="corpus", uri="doc://other", title="other", full_text="elsewhere text"
    )
    bank.add_evidence_span(other_sid, (0, 9), {"t"}, 1.0)
    packed = pack_section_context("s", bank, PackingBudget(max_units=1000))
    assert {i.span_id for i in packed.items} <= set(ids)
    admissible = {s.span_id for s in bank.admissible_evidence("s")}
    assert {i.span_id for i in packed.items} <= admissible


# -- compression ----------------------------------------------------------


def replay(entries, strict=True):
    return ReplayGateway(ScriptedTranscript.from_records(entries), strict=strict)


def test_compress_identity_when_already_small():
    bank, ids = bank_with_spans(["short span text"])
    span = bank.get_span(ids[0])
    summary = compress_preserving_citations([span], 100, gateway=None)
    assert summary.compression_ratio == 1.0
    assert summary.summary_text == render_span(span)
    assert summary.anchors_present == {anchor_for(span.source_id, span.span_id)}


def test_compress_replay_transcript_keeps_anchors():
    bank, ids = bank_with_spans(
        ["long span one " * 30, "long span two " * 30]
    )
    spans = [bank.get_span(i) for i in ids]
    anchors = [anchor_for(s.source_id, s.span_id) for s in spans]
    gw = replay(
        [
            {
                "role_tag": "compress",
                "response": f"Both spans agree. {anchors[0]} {anchors[1]}",
            }
        ]
    )
    summary = compress_preserving_citations(spans, 20, gw)
    assert summary.anchors_present >= set(anchors)
    assert summary.compression_ratio < 1.0


def test_compress_anchor_dropped_twice_fails_then_fallback_keeps_anchors():
    bank, ids = bank_with_spans(["long span one " * 30, "long span two " * 30])
    spans = [bank.get_span(i) for i in ids]
    anchors = {anchor_for(s.source_id, s.span_id) for s in spans}
    bad_entries = [
        {"role_tag": "compress", "response": "Summary with no markers at all."},
        {"role_tag": "compress", "response": "Still refusing to cite."},
    ]
    with pytest.raises(CompressionError):
        compress_preserving_citations(spans, 20, replay(bad_entries))
    fallback = compress_or_truncate(spans, 20, replay(bad_entries))
    assert fallback.anchors_present >= anchors
    for anchor in anchors:
        assert anchor in fallback.summary_text


def test_truncation_fallback_respects_target():
    bank, ids = bank_with_spans(["x" * 2000, "y" * 2000])
    spans = [bank.get_span(i) for i in ids]
    target = 50
    summary = truncate_preserving_anchors(spans, target)
    anchor_only = " ".join(anchor_for(s.source_id, s.span_id) for s in spans)
    assert estimate_units(summary.summary_text) <= max(target, estimate_units(anchor_only))


def test_anchor_conservation_randomized():
    rng = random.Random(11)
    for _ in range(100):
        n = rng.randint(1, 4)
        texts = ["word " * rng.randint(5, 220) for _ in range(n)]
        bank, ids = bank_with_spans(texts)
        spans = [bank.get_span(i) for i in ids]
        anchors = {anchor_for(s.source_id, s.span_id) for s in spans}
        target = rng.randint(1, 60)
        summary = truncate_preserving_anchors(spans, target)
        assert summary.anchors_present >= anchors


def test_prepare_section_context_compresses_oversize_items():
    bank, ids = bank_with_spans(["tiny snippet", "gigantic span " * 400])
    budget = PackingBudget(max_units=200)
    packed = prepare_section_context("s", bank, budget)
    assert packed.total_units <= budget.usable
    big = next(i for i in packed.items if i.span_id == ids[1])
    assert big.size_units <= max(1, int(budget.usable * 0.25)) + 1
    assert big.anchor in big.text


def test_parse_anchors_roundtrip():
    text = "Claim one [[srcabc:sp000001]]. Claim two [[srcdef:sp000002]]."
    assert parse_anchors(text) == ["[[srcabc:sp000001]]", "[[srcdef:sp000002]]"]
