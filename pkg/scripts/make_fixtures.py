#!/usr/bin/env python3
"""Regenerate the committed replay fixtures under fixtures/e2e/.

The transcript embeds citation anchors discovered by a dry run, so it must be
regenerated whenever retrieval, packing, or id assignment changes.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "tests"))

from e2e_fixture import (  # noqa: E402
    REQUEST,
    UI_PLAN_RESPONSE,
    build_fixture_dir,
    build_transcripts,
)
from deepresearch.config import EngineConfig  # noqa: E402
from deepresearch.execution import StoppingPolicy  # noqa: E402
from deepresearch.planning import PlanEdit  # noqa: E402
from deepresearch.retrieval import CorpusIndex, ingest_corpus  # noqa: E402

# The steering-UI fixture applies these edits before approval; the dry run
# must replay them so the scripted anchors line up.
UI_EDITS = [
    PlanEdit(
        "Reorder",
        {"order": ["vendor-landscape", "market-overview", "adoption-risks"]},
    ),
    PlanEdit("RemoveSection", {"section_id": "adoption-risks"}),
]


def main() -> int:
    target = ROOT / "fixtures" / "e2e"
    target.mkdir(parents=True, exist_ok=True)
    paths = build_fixture_dir(target)
    (target / "request.txt").write_text(REQUEST + "\n", encoding="utf-8")

    index, _ = ingest_corpus(paths["corpus_dir"], paths["manifest"], CorpusIndex())
    index.save(target / "index.jsonl")

    ui_dir = ROOT / "fixtures" / "ui"
    ui_dir.mkdir(parents=True, exist_ok=True)
    ui_config = EngineConfig(stopping=StoppingPolicy(max_iterations=3))
    ui_records = build_transcripts(
        index, ui_config, edits=UI_EDITS, plan_response=UI_PLAN_RESPONSE
    )
    (ui_dir / "transcripts.jsonl").write_text(
        "\n".join(json.dumps(r) for r in ui_records) + "\n", encoding="utf-8"
    )
    (ui_dir / "config.json").write_text(
        json.dumps({"stopping": {"max_iterations": 3}}, indent=2) + "\n",
        encoding="utf-8",
    )

    eval_dir = ROOT / "fixtures" / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    (eval_dir / "tasks.jsonl").write_text(
        json.dumps(
            {
                "task_id": "spm-market",
                "prompt": "Comprehensive market analysis of portfolio tooling",
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
    (eval_dir / "scores.jsonl").write_text(
        json.dumps(
            {
                "task_id": "spm-market",
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
    for name, path in paths.items():
        print(f"{name}: {path.relative_to(ROOT) if hasattr(path, 'relative_to') else path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
