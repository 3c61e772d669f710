from __future__ import annotations

import json

import pytest

from e2e_fixture import REQUEST, build_fixture_dir
from deepresearch.cli import main
from deepresearch.memory_bank import MemoryBank
from deepresearch.records import read_records, write_records
from deepresearch.synthesis import report_from_records


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    return build_fixture_dir(tmp_path_factory.mktemp("cli-fixture"))


@pytest.fixture(scope="module")
def index_path(fixture_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli-index") / "index.jsonl"
    code = main(
        [
            "ingest",
            str(fixture_dir["corpus_dir"]),
            "--manifest",
            str(fixture_dir["manifest"]),
            "--out",
            str(out),
        ]
    )
    assert code == 0
    return out


def run_headless(fixture_dir, index_path, out_dir):
    return main(
        [
            "run",
            REQUEST,
            "--corpus",
            str(index_path),
            "--replay",
            str(fixture_dir["transcripts"]),
            "--headless",
            "--out",
            str(out_dir),
        ]
    )


def test_run_headless_end_to_end(fixture_dir, index_path, tmp_path, capsys):
    code = run_headless(fixture_dir, index_path, tmp_path / "out")
    captured = capsys.readouterr()
    assert code == 0, captured.err
    assert "Done" in captured.out
    out = tmp_path / "out"
    assert (out / "report.md").exists()
    assert (out / "bank.jsonl").exists()
    assert (out / "session.jsonl").exists()
    report = report_from_records(read_records(out / "report.jsonl"))
    assert len(report.sections) == 3


def test_audit_clean_report_exits_zero(fixture_dir, index_path, tmp_path, capsys):
    out = tmp_path / "out"
    assert run_headless(fixture_dir, index_path, out) == 0
    capsys.readouterr()
    code = main(["audit", str(out / "report.jsonl"), "--bank", str(out / "bank.jsonl")])
    captured = capsys.readouterr()
    assert code == 0
    assert "0 violations" in captured.out


def test_audit_detects_foreign_span(fixture_dir, index_path, tmp_path, capsys):
    out = tmp_path / "out"
    assert run_headless(fixture_dir, index_path, out) == 0
    bank = MemoryBank.load(out / "bank.jsonl")
    rows = read_records(out / "report.jsonl")
    # Graft a marker citing a span admissible only for another section.
    foreign_span = next(
        span
        for span in bank.admissible_evidence("adoption-risks")
        if "market-overview" not in span.section_ids
    )
    for row in rows:
        if row["kind"] == "report_section" and row["section_id"] == "market-overview":
            row["body"] += f" Smuggled cite [[{foreign_span.source_id}:{foreign_span.span_id}]]."
    tampered = tmp_path / "tampered.jsonl"
    write_records(tampered, [{k: v for k, v in r.items() if k != "seq"} for r in rows])
    capsys.readouterr()
    code = main(["audit", str(tampered), "--bank", str(out / "bank.jsonl")])
    captured = capsys.readouterr()
    assert code == 1
    assert "foreign_span" in captured.out


def test_eval_race_scoreboard(tmp_path, capsys):
    tasks = tmp_path / "tasks.jsonl"
    scores = tmp_path / "scores.jsonl"
    tasks.write_text(
        json.dumps(
            {
                "task_id": "t1",
                "prompt": "analyze",
                "weights": {
                    "insight": 0.3,
                    "comprehensiveness": 0.35,
                    "instruction": 0.2,
                    "readability": 0.15,
                },
            }
        )
        + "\n",
        encoding="utf-8",
    )
    scores.write_text(
        json.dumps(
            {
                "task_id": "t1",
                "components": {
                    "comprehensiveness": 52.22,
                    "insight": 54.37,
                    "instruction": 51.11,
                    "readability": 52.18,
                },
            }
        )
        + "\n",
        encoding="utf-8",
    )
    out = tmp_path / "board.jsonl"
    code = main(["eval", "race", str(tasks), str(scores), "--out", str(out)])
    captured = capsys.readouterr()
    assert code == 0
    assert "52.637" in captured.out
    rows = read_records(out)
    assert rows[0]["overall"] == pytest.approx(52.637, abs=5e-4)


def test_eval_pairwise_rates(tmp_path, capsys):
    tasks = tmp_path / "tasks.jsonl"
    tasks.write_text(
        json.dumps(
            {
                "task_id": "t1",
                "prompt": "compare",
                "weights": {
                    "insight": 0.25,
                    "comprehensiveness": 0.25,
                    "instruction": 0.25,
                    "readability": 0.25,
                },
            }
        )
        + "\n",
        encoding="utf-8",
    )
    (tmp_path / "a.jsonl").write_text(
        json.dumps({"task_id": "t1", "text": "report a body"}) + "\n", encoding="utf-8"
    )
    (tmp_path / "b.jsonl").write_text(
        json.dumps({"task_id": "t1", "text": "report b body"}) + "\n", encoding="utf-8"
    )
    transcript = tmp_path / "judge.jsonl"
    transcript.write_text(
        "\n".join(
            json.dumps(e)
            for e in [
                {"role_tag": "judge", "response": {"winner": "a", "rationale": "r"}},
                {"role_tag": "judge", "response": {"winner": "b", "rationale": "r"}},
            ]
        )
        + "\n",
        encoding="utf-8",
    )
    code = main(
        [
            "eval",
            "pairwise",
            str(tasks),
            str(tmp_path / "a.jsonl"),
            str(tmp_path / "b.jsonl"),
            "--replay",
            str(transcript),
        ]
    )
    captured = capsys.readouterr()
    assert code == 0
    assert "t1: Win" in captured.out
    assert "win 100.0%" in captured.out


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["run"])  # missing required --corpus
    assert exc.value.code == 2


def test_missing_corpus_is_runtime_failure(tmp_path, capsys):
    code = main(
        [
            "run",
            "question",
            "--corpus",
            str(tmp_path / "missing.jsonl"),
            "--replay",
            str(tmp_path / "missing-too.jsonl"),
            "--headless",
        ]
    )
    assert code == 3
