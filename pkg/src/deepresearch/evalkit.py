"""Rubric-weighted report scoring and side-by-side win/tie/lose judging.

Overall quality is the dot product of four dimension scores with a per-task
weight vector; dimension scores aggregate sub-criteria whose weights are
normalized by their actual sum. Pairwise judging runs twice with the report
order swapped and calls disagreement a tie.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .errors import ValidationError
from .gateway import ModelRequest, complete_structured

logger = logging.getLogger(__name__)

DIMENSIONS = ("comprehensiveness", "insight", "instruction", "readability")

WIN, TIE, LOSE = "Win", "Tie", "Lose"


@dataclass
class WeightVector:
    insight: float
    comprehensiveness: float
    instruction: float
    readability: float

    def __post_init__(self) -> None:
        values = (self.insight, self.comprehensiveness, self.instruction, self.readability)
        if any(not 0.0 <= v <= 1.0 for v in values):
            raise ValidationError("weights must lie in [0, 1]")
        if abs(sum(values) - 1.0) > 1e-9:
            raise ValidationError(f"weights must sum to 1, got {sum(values)}")

    def as_dict(self) -> dict[str, float]:
        return {
            "comprehensiveness": self.comprehensiveness,
            "insight": self.insight,
            "instruction": self.instruction,
            "readability": self.readability,
        }


@dataclass
class RubricCriterion:
    name: str
    weight: float
    score: float

    def __post_init__(self) -> None:
        if self.weight < 0:
            raise ValidationError("criterion weight must be >= 0")
        if not 0.0 <= self.score <= 100.0:
            raise ValidationError("criterion score must be in [0, 100]")


@dataclass
class RaceScore:
    components: dict[str, float]
    overall: float


@dataclass
class PairwiseVerdict:
    task_id: str
    verdict: str  # Win | Tie | Lose, from report A's perspective
    judge_rationale: str = ""


def weighted_score(components: dict[str, float], weights: WeightVector) -> float:
    """Overall = sum of component x weight over the four dimensions."""
    missing = [d for d in DIMENSIONS if d not in components]
    if missing:
        raise ValidationError(f"components missing dimensions: {missing}")
    weight_map = weights.as_dict()
    return sum(components[d] * weight_map[d] for d in DIMENSIONS)


def race_score(components: dict[str, float], weights: WeightVector) -> RaceScore:
    return RaceScore(
        components={d: components[d] for d in DIMENSIONS},
        overall=weighted_score(components, weights),
    )


def dimension_score(criteria: list[RubricCriterion]) -> float:
    """Criterion weights are normalized by their actual sum before aggregation."""
    if not criteria:
        raise ValidationError("criteria must be non-empty")
    total_weight = sum(c.weight for c in criteria)
    if total_weight <= 0:
        raise ValidationError("criterion weights sum to zero")
    return sum(c.weight * c.score for c in criteria) / total_weight


# -- pairwise judging -------------------------------------------------------


def _judge_once(
    report_first: str, report_second: str, task_prompt: str, gateway
) -> tuple[str, str]:
    parsed = complete_structured(
        gateway,
        ModelRequest(
            role_tag="judge",
            prompt=(
                "Compare two research reports for the task below and answer as "
                'JSON {"winner": "A"|"B"|"tie", "rationale": ...}.\n\n'
                f"Task: {task_prompt}\n\n=== Report A ===\n{report_first}\n\n"
                f"=== Report B ===\n{report_second}"
            ),
            response_schema="verdict",
        ),
    )
    return parsed["winner"], parsed["rationale"]


def pairwise_judge(
    report_a: str, report_b: str, task, gateway
) -> PairwiseVerdict:
    """Judge twice with positions swapped; disagreement resolves to Tie."""
    if not report_a.strip() or not report_b.strip():
        raise ValidationError("both reports must be non-empty")
    if isinstance(task, dict):
        task_id, prompt = task.get("task_id", ""), task.get("prompt", "")
    else:
        task_id, prompt = task.task_id, task.prompt

    first_winner, rationale = _judge_once(report_a, report_b, prompt, gateway)
    second_winner, _ = _judge_once(report_b, report_a, prompt, gateway)

    # Map both passes onto report A's perspective.
    forward = {"a": WIN, "b": LOSE, "tie": TIE}[first_winner]
    swapped = {"a": LOSE, "b": WIN, "tie": TIE}[second_winner]
    verdict = forward if forward == swapped else TIE
    if forward != swapped:
        logger.info(
            "position bias: forward=%s swapped=%s -> Tie", forward, swapped
        )
    return PairwiseVerdict(task_id=task_id, verdict=verdict, judge_rationale=rationale)


def aggregate_win_rates(verdicts: list[PairwiseVerdict]) -> dict[str, float]:
    """Win/tie/lose percentages over the verdict list, rounded to 2 decimals."""
    if not verdicts:
        raise ValidationError("verdict list must be non-empty")
    total = len(verdicts)
    counts = {WIN: 0, TIE: 0, LOSE: 0}
    for verdict in verdicts:
        if verdict.verdict not in counts:
            raise ValidationError(f"unknown verdict {verdict.verdict!r}")
        counts[verdict.verdict] += 1
    return {
        "win": round(100.0 * counts[WIN] / total, 2),
        "tie": round(100.0 * counts[TIE] / total, 2),
        "lose": round(100.0 * counts[LOSE] / total, 2),
    }


# -- task and scoreboard files -----------------------------------------------


@dataclass
class EvalTask:
    task_id: str
    prompt: str
    weights: WeightVector
    rubric: dict[str, list[RubricCriterion]] = field(default_factory=dict)


def tasks_from_records(rows: list[dict]) -> list[EvalTask]:
    tasks = []
    for row in rows:
        if row.get("kind") not in (None, "task"):
            continue
        weights = row["weights"]
        rubric = {
            dimension: [
                RubricCriterion(
                    name=c["name"], weight=c["weight"], score=c.get("score", 0.0)
                )
                for c in criteria
            ]
            for dimension, criteria in row.get("rubric", {}).items()
        }
        tasks.append(
            EvalTask(
                task_id=row["task_id"],
                prompt=row.get("prompt", ""),
                weights=WeightVector(
                    insight=weights["insight"],
                    comprehensiveness=weights["comprehensiveness"],
                    instruction=weights["instruction"],
                    readability=weights["readability"],
                ),
                rubric=rubric,
            )
        )
    return tasks


def race_scoreboard(
    tasks: list[EvalTask], components_by_task: dict[str, dict[str, float]]
) -> list[dict]:
    """One scoreboard row per task plus a mean row; missing tasks are skipped."""
    rows = []
    overalls = []
    for task in tasks:
        components = components_by_task.get(task.task_id)
        if components is None:
            logger.warning("no component scores for task %r", task.task_id)
            continue
        score = race_score(components, task.weights)
        overalls.append(score.overall)
        rows.append(
            {
                "kind": "race_score",
                "task_id": task.task_id,
                "overall": round(score.overall, 4),
                **{d: components[d] for d in DIMENSIONS},
            }
        )
    if overalls:
        rows.append(
            {
                "kind": "race_mean",
                "task_id": "(mean)",
                "overall": round(sum(overalls) / len(overalls), 4),
            }
        )
    return rows


def render_table(rows: list[dict], columns: list[str]) -> str:
    widths = {
        c: max(len(c), *(len(str(r.get(c, ""))) for r in rows)) if rows else len(c)
        for c in columns
    }
    header = "  ".join(c.ljust(widths[c]) for c in columns)
    divider = "  ".join("-" * widths[c] for c in columns)
    lines = [header, divider]
    for row in rows:
        lines.append("  ".join(str(row.get(c, "")).ljust(widths[c]) for c in columns))
    return "\n".join(lines)
