"""Headless command line: ingest, run, audit, eval, serve.

Exit codes: 0 success, 1 audit violations found, 2 usage error,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import EngineConfig, gateway_from_args, load_config
from .engine import ResearchEngine
from .errors import DeepResearchError
from .evalkit import (
    aggregate_win_rates,
    pairwise_judge,
    race_scoreboard,
    render_table,
    tasks_from_records,
)
from .memory_bank import MemoryBank
from .orchestrator import event_log_records
from .records import read_records, write_records
from .retrieval import CorpusIndex, ingest_corpus
from .service import make_server
from .synthesis import (
    render_markdown,
    report_from_records,
    report_records,
    verify_memory_lock,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deepresearch",
        description="Evidence-driven research engine with memory-locked synthesis",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="index a corpus directory")
    p_ingest.add_argument("directory")
    p_ingest.add_argument("--manifest", required=True)
    p_ingest.add_argument("--out", required=True, help="index record file to write")

    p_run = sub.add_parser("run", help="run one research request end to end")
    p_run.add_argument("request")
    p_run.add_argument("--corpus", required=True, help="index record file from ingest")
    p_run.add_argument("--policy", help="JSON config document")
    p_run.add_argument("--replay", help="transcript file or directory (offline mode)")
    p_run.add_argument("--headless", action="store_true",
                       help="answer clarifications with defaults and auto-approve")
    p_run.add_argument("--answers", help="JSON file of clarification answers")
    p_run.add_argument("--out", help="directory for report, bank, and session logs")

    p_audit = sub.add_parser("audit", help="verify a report against a bank snapshot")
    p_audit.add_argument("report", help="report record file")
    p_audit.add_argument("--bank", required=True, help="bank record file")

    p_eval = sub.add_parser("eval", help="evaluation kit")
    eval_sub = p_eval.add_subparsers(dest="eval_command", required=True)

    p_race = eval_sub.add_parser("race", help="rubric-weighted scoreboard")
    p_race.add_argument("tasks", help="task record file (weights, rubric)")
    p_race.add_argument("scores", help="component score record file")
    p_race.add_argument("--out", help="write scoreboard records here")

    p_pair = eval_sub.add_parser("pairwise", help="side-by-side win/tie/lose judging")
    p_pair.add_argument("tasks")
    p_pair.add_argument("reports_a")
    p_pair.add_argument("reports_b")
    p_pair.add_argument("--replay", help="judge transcript file or directory")
    p_pair.add_argument("--out", help="write verdict records here")

    p_serve = sub.add_parser("serve", help="start the local steering service")
    p_serve.add_argument("--port", type=int, default=8787)
    p_serve.add_argument("--corpus", required=True)
    p_serve.add_argument("--policy")
    p_serve.add_argument("--replay")
    p_serve.add_argument("--store", default=".deepresearch-store")

    return parser


# -- commands ------------------------------------------------------------


def cmd_ingest(args) -> int:
    index, report = ingest_corpus(args.directory, args.manifest)
    index.save(args.out)
    print(f"indexed {report.added} documents ({report.unchanged} unchanged) -> {args.out}")
    for path, reason in report.skipped:
        print(f"skipped {path}: {reason}", file=sys.stderr)
    return EXIT_OK


def _engine_from_args(args) -> ResearchEngine:
    config = load_config(args.policy) if args.policy else EngineConfig()
    gateway = gateway_from_args(args.replay)
    index = CorpusIndex.load(args.corpus)
    return ResearchEngine(gateway, index, config)


def cmd_run(args) -> int:
    engine = _engine_from_args(args)
    answers = None
    if args.answers:
        answers = json.loads(Path(args.answers).read_text(encoding="utf-8"))
    if not args.headless:
        print(
            "note: interactive steering lives in the service UI; running headless",
            file=sys.stderr,
        )
    result = engine.run_headless(args.request, answers)

    print(f"session {result.session.session_id}: {result.session.phase} "
          f"({result.session.route})")
    if result.answer is not None:
        print(result.answer)
    else:
        for trace in result.traces:
            coverage = {
                sid: round(e.coverage, 3)
                for sid, e in trace.coverage_after.per_section.items()
            }
            print(f"iteration {trace.iteration_index}: +{trace.spans_added} spans, "
                  f"coverage {coverage}")
        print(f"report sections: {len(result.report.sections)}; "
              f"bank {result.bank.stats()}")

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        result.bank.persist(out / "bank.jsonl")
        write_records(out / "session.jsonl", event_log_records(result.session))
        if result.report is not None:
            write_records(out / "report.jsonl", report_records(result.report, result.bank))
            (out / "report.md").write_text(
                render_markdown(result.report, result.bank), encoding="utf-8"
            )
        if result.answer is not None:
            (out / "answer.txt").write_text(result.answer + "\n", encoding="utf-8")
        print(f"artifacts written to {out}")
    return EXIT_OK


def cmd_audit(args) -> int:
    report = report_from_records(read_records(args.report))
    bank = MemoryBank.load(args.bank)
    violations = list(verify_memory_lock(report, bank))
    violations += bank.audit_citations(report)
    if not violations:
        print("audit clean: 0 violations")
        return EXIT_OK
    for violation in violations:
        print(
            f"{violation.kind} in section {violation.section_id!r}: "
            f"{violation.detail}"
        )
    print(f"{len(violations)} violations")
    return EXIT_VIOLATIONS


def cmd_eval_race(args) -> int:
    tasks = tasks_from_records(read_records(args.tasks, strict=False))
    components = {
        row["task_id"]: row["components"]
        for row in read_records(args.scores, strict=False)
    }
    rows = race_scoreboard(tasks, components)
    print(
        render_table(
            rows,
            ["task_id", "overall", "comprehensiveness", "insight", "instruction", "readability"],
        )
    )
    if args.out:
        write_records(args.out, rows)
    return EXIT_OK


def cmd_eval_pairwise(args) -> int:
    gateway = gateway_from_args(args.replay)
    tasks = {t.task_id: t for t in tasks_from_records(read_records(args.tasks, strict=False))}
    reports_a = {r["task_id"]: r["text"] for r in read_records(args.reports_a, strict=False)}
    reports_b = {r["task_id"]: r["text"] for r in read_records(args.reports_b, strict=False)}
    shared = sorted(set(tasks) & set(reports_a) & set(reports_b))
    if not shared:
        print("no tasks with reports on both sides", file=sys.stderr)
        return EXIT_USAGE
    verdicts = []
    for task_id in shared:
        verdict = pairwise_judge(
            reports_a[task_id], reports_b[task_id], tasks[task_id], gateway
        )
        verdicts.append(verdict)
        print(f"{task_id}: {verdict.verdict}")
    rates = aggregate_win_rates(verdicts)
    print(f"win {rates['win']}%  tie {rates['tie']}%  lose {rates['lose']}%")
    if args.out:
        write_records(
            args.out,
            [
                {
                    "kind": "verdict",
                    "task_id": v.task_id,
                    "verdict": v.verdict,
                    "rationale": v.judge_rationale,
                }
                for v in verdicts
            ]
            + [{"kind": "rates", **rates}],
        )
    return EXIT_OK


def cmd_serve(args) -> int:
    engine = _engine_from_args(args)
    server, _ = make_server(engine, args.store, port=args.port)
    print(f"serving on http://127.0.0.1:{server.server_address[1]} "
          f"(store: {args.store})", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "ingest":
            return cmd_ingest(args)
        if args.command == "run":
            return cmd_run(args)
        if args.command == "audit":
            return cmd_audit(args)
        if args.command == "eval":
            if args.eval_command == "race":
                return cmd_eval_race(args)
            return cmd_eval_pairwise(args)
        if args.command == "serve":
            return cmd_serve(args)
        parser.error(f"unknown command {args.command!r}")
    except DeepResearchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
