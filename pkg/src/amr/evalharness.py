"""GSM8K-format dataset loading, gold-difficulty derivation, run
evaluation and reporting, and the model-free policy simulation."""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Optional, Sequence

from . import aggregate
from .backends import SyntheticBackend, SyntheticExpertConfig, derive_seed
from .config import PipelineConfig, SimulationConfig
from .core import (
    AmrError,
    Difficulty,
    ExpertStyle,
    NormalizedAnswer,
    Problem,
    ProblemOutcome,
    RunReport,
    ScoredCandidate,
    SelectionResult,
    SplitRow,
    ValidationError,
)
from .experts import build_profiles
from .pipeline import ProblemFailure, RunResult, run_problems
from .router import FeatureBaselineEstimator
from .verifier import NoisyOracleVerifier

__all__ = [
    "DatasetError",
    "load_dataset",
    "gold_difficulty",
    "calibrate_gold_difficulty",
    "evaluate_run",
    "render_report",
    "report_from_dict",
    "simulate",
    "ComparisonReport",
    "BaselineRow",
]

logger = logging.getLogger(__name__)

_HASH_MARKER = "####"

PREDICTED_EASY_LABEL = "Easy (predicted)"
PREDICTED_HARD_LABEL = "Hard (predicted)"
GOLD_EASY_LABEL = "Easy (gold)"
GOLD_HARD_LABEL = "Hard (gold)"
OVERALL_LABEL = "Overall"


class DatasetError(AmrError):
    """A dataset file could not be parsed."""


def gold_difficulty(reference_solution: str, threshold: int = 3) -> Difficulty:
    """Label difficulty from the reference solution's reasoning-step
    count: non-empty lines before the final "####" line, Easy when the
    count stays at or under the threshold."""
    if not reference_solution.strip():
        raise ValidationError("reference solution must be non-empty")
    lines = reference_solution.splitlines()
    marker_index = max((i for i, line in enumerate(lines) if _HASH_MARKER in line), default=len(lines))
    steps = sum(1 for line in lines[:marker_index] if line.strip())
    return Difficulty.EASY if steps <= threshold else Difficulty.HARD


def load_dataset(
    path: str | Path,
    *,
    gold_difficulty_threshold: int = 3,
    limit: Optional[int] = None,
) -> list[Problem]:
    """Read a JSONL dataset with "question" and "answer" fields.

    The answer text becomes the reference solution; the gold answer is
    extracted from its "#### <n>" tail (with a warning and last-number
    fallback when the marker is missing).  Ids default to the 1-based
    line number.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    problems: list[Problem] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(row, dict) or "question" not in row or "answer" not in row:
                raise DatasetError(f"{path}: line {lineno}: expected an object with 'question' and 'answer'")
            answer_text = str(row["answer"])
            if _HASH_MARKER not in answer_text:
                logger.warning("%s: line %d: answer lacks '####'; using fallback extraction", path, lineno)
            gold = aggregate.extract_answer(answer_text)
            if gold is None:
                logger.warning("%s: line %d: no numeric answer found; gold_answer left empty", path, lineno)
            problems.append(
                Problem(
                    id=str(row.get("id", lineno)),
                    question=str(row["question"]),
                    reference_solution=answer_text,
                    gold_answer=gold,
                    gold_difficulty=gold_difficulty(answer_text, gold_difficulty_threshold),
                )
            )
            if limit is not None and len(problems) >= limit:
                break
    return problems


def calibrate_gold_difficulty(
    problems: Sequence[Problem],
    thresholds: Iterable[int] = range(1, 9),
) -> list[tuple[int, int, int]]:
    """Per threshold, the (threshold, easy, hard) split the step-count
    rule produces; used to document the threshold matching a known
    gold split."""
    rows = []
    solutions = [p.reference_solution for p in problems if p.reference_solution]
    for threshold in thresholds:
        easy = sum(1 for s in solutions if gold_difficulty(s, threshold) is Difficulty.EASY)
        rows.append((threshold, easy, len(solutions) - easy))
    return rows


def _outcome_for(problem: Problem, result: RunResult) -> ProblemOutcome:
    if isinstance(result, ProblemFailure):
        return ProblemOutcome(
            problem_id=problem.id,
            predicted_difficulty=result.predicted_difficulty,
            gold_difficulty=problem.gold_difficulty,
            final_answer=None,
            gold_answer=problem.gold_answer,
            correct=False if problem.gold_answer is not None else None,
            error=result.error,
        )
    final = result.final_answer
    correct: Optional[bool] = None
    if problem.gold_answer is not None:
        correct = final is not None and final == problem.gold_answer
    return ProblemOutcome(
        problem_id=problem.id,
        predicted_difficulty=result.predicted_difficulty,
        gold_difficulty=problem.gold_difficulty,
        final_answer=final,
        gold_answer=problem.gold_answer,
        correct=correct,
    )


def evaluate_run(problems: Sequence[Problem], results: Sequence[RunResult]) -> RunReport:
    """Score a run: per-problem rows plus accuracy splits by predicted
    and gold difficulty.  Unanswered or failed problems count as
    incorrect."""
    if len(problems) != len(results):
        raise ValidationError(f"got {len(problems)} problems but {len(results)} results")
    for problem, result in zip(problems, results):
        if problem.id != getattr(result, "problem_id", problem.id):
            raise ValidationError(f"problem/result id mismatch: {problem.id} vs {result.problem_id}")
    rows = tuple(_outcome_for(p, r) for p, r in zip(problems, results))

    def split(label: str, keep) -> SplitRow:
        slice_rows = [r for r in rows if keep(r)]
        return SplitRow.build(label, sum(1 for r in slice_rows if r.correct), len(slice_rows))

    splits = (
        split(PREDICTED_EASY_LABEL, lambda r: r.predicted_difficulty is Difficulty.EASY),
        split(PREDICTED_HARD_LABEL, lambda r: r.predicted_difficulty is Difficulty.HARD),
        split(GOLD_EASY_LABEL, lambda r: r.gold_difficulty is Difficulty.EASY),
        split(GOLD_HARD_LABEL, lambda r: r.gold_difficulty is Difficulty.HARD),
        split(OVERALL_LABEL, lambda r: True),
    )
    aligned = [
        r for r in rows if r.predicted_difficulty is not None and r.gold_difficulty is not None
    ]
    alignment = (
        sum(1 for r in aligned if r.predicted_difficulty is r.gold_difficulty) / len(aligned)
        if aligned
        else None
    )
    return RunReport(per_problem=rows, splits=splits, router_alignment=alignment)


def _accuracy_display(row: SplitRow) -> str:
    # band accuracies shown at one decimal, the overall row at two
    digits = 2 if row.label == OVERALL_LABEL else 1
    return f"{row.accuracy * 100:.{digits}f}%"


def render_report(report: RunReport, fmt: str = "table") -> str:
    """Render a run report as an aligned table or as stable JSON."""
    if fmt == "table":
        header = ("Difficulty", "Correct", "Total", "Accuracy")
        body = [
            (row.label, str(row.correct), str(row.total), _accuracy_display(row))
            for row in report.splits
        ]
        widths = [max(len(r[i]) for r in [header, *body]) for i in range(4)]
        lines = []
        for cells in [header, *body]:
            label = cells[0].ljust(widths[0])
            numbers = "  ".join(cells[i].rjust(widths[i]) for i in range(1, 4))
            lines.append(f"{label}  {numbers}")
        if report.router_alignment is not None:
            lines.append(f"Router alignment: {report.router_alignment * 100:.1f}%")
        return "\n".join(lines) + "\n"
    if fmt == "json":
        payload = {
            "per_problem": [
                {
                    "problem_id": r.problem_id,
                    "predicted_difficulty": r.predicted_difficulty.value if r.predicted_difficulty else None,
                    "gold_difficulty": r.gold_difficulty.value if r.gold_difficulty else None,
                    "final_answer": r.final_answer.canonical if r.final_answer else None,
                    "gold_answer": r.gold_answer.canonical if r.gold_answer else None,
                    "correct": r.correct,
                    "error": r.error,
                }
                for r in report.per_problem
            ],
            "splits": [
                {"label": s.label, "correct": s.correct, "total": s.total, "accuracy": s.accuracy}
                for s in report.splits
            ],
            "router_alignment": report.router_alignment,
        }
        return json.dumps(payload, indent=2) + "\n"
    raise ValidationError(f"unknown report format: {fmt!r}")


def report_from_dict(payload: dict) -> RunReport:
    """Inverse of the JSON rendering; round-trips exactly."""

    def difficulty(value: Optional[str]) -> Optional[Difficulty]:
        return Difficulty(value) if value else None

    def answer(value: Optional[str]) -> Optional[NormalizedAnswer]:
        return NormalizedAnswer(value) if value is not None else None

    rows = tuple(
        ProblemOutcome(
            problem_id=r["problem_id"],
            predicted_difficulty=difficulty(r.get("predicted_difficulty")),
            gold_difficulty=difficulty(r.get("gold_difficulty")),
            final_answer=answer(r.get("final_answer")),
            gold_answer=answer(r.get("gold_answer")),
            correct=r.get("correct"),
            error=r.get("error"),
        )
        for r in payload["per_problem"]
    )
    splits = tuple(
        SplitRow(label=s["label"], correct=s["correct"], total=s["total"], accuracy=s["accuracy"])
        for s in payload["splits"]
    )
    return RunReport(per_problem=rows, splits=splits, router_alignment=payload.get("router_alignment"))


# ---------------------------------------------------------------------------
# model-free policy simulation


@dataclass(frozen=True)
class BaselineRow:
    label: str
    correct: int
    total: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0


@dataclass(frozen=True)
class ComparisonReport:
    """Pipeline accuracy vs the plurality vote and each single expert,
    all measured on the same candidate pools."""

    config: SimulationConfig
    amr: BaselineRow
    plurality: BaselineRow
    per_expert: tuple[BaselineRow, ...]
    regime_counts: tuple[tuple[str, int], ...]

    def to_dict(self) -> dict:
        def row(r: BaselineRow) -> dict:
            return {"label": r.label, "correct": r.correct, "total": r.total, "accuracy": r.accuracy}

        return {
            "config": {
                "expert_accuracies": list(self.config.expert_accuracies),
                "verifier_flip_probability": self.config.verifier_flip_probability,
                "n_problems": self.config.n_problems,
                "seed": self.config.seed,
            },
            "amr": row(self.amr),
            "plurality_vote": row(self.plurality),
            "single_experts": [row(r) for r in self.per_expert],
            "regime_counts": {band: count for band, count in self.regime_counts},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


_FILLER_SENTENCES = (
    "The supervisor confirmed the tally against the ledger before anyone moved on.",
    "Nothing else about the order changed while the crates waited on the floor.",
    "Each shelf was walked twice so that no box could be missed in the count.",
    "The afternoon crew signed off on the same totals before the doors closed.",
    "Every carton stayed sealed from the dock to the racks during the move.",
    "A clerk read the numbers back aloud so the record matched the floor.",
)


def _synthetic_problem(index: int, seed: int) -> Problem:
    rng = random.Random(derive_seed("sim-problem", seed, index))
    pid = f"sim-{index}"
    a, b = rng.randint(4, 59), rng.randint(2, 19)
    shape = rng.choices(("short", "medium", "long"), weights=(3, 5, 2))[0]
    if shape == "short":
        question = f"[problem {pid}] What is {a} plus {b}?"
        value = a + b
    else:
        question = (
            f"[problem {pid}] A crate holds {a} boxes and each box holds {b} parts. "
            "Workers fill every box before lunch. How many parts fill the crate?"
        )
        value = a * b
        fillers = rng.sample(_FILLER_SENTENCES, 2 if shape == "medium" else 6)
        question = f"{question} " + " ".join(fillers)
    return Problem(id=pid, question=question, gold_answer=NormalizedAnswer(value))


_WRONG_OFFSETS = {
    ExpertStyle.ALGEBRAIC: Decimal(1),
    ExpertStyle.INTUITIVE: Decimal(2),
    ExpertStyle.STEP_BY_STEP: Decimal(3),
}


def _id_stage_and_index(candidate_id: str) -> tuple[str, int]:
    _, stage, _, _, index = candidate_id.rsplit(":", 4)
    return stage, int(index)


def _initial_pool(result: SelectionResult) -> list[ScoredCandidate]:
    members = []
    for cluster in result.clusters:
        for m in cluster.members:
            stage, index = _id_stage_and_index(m.candidate.id)
            if stage == "initial":
                members.append((index, m))
    members.sort(key=lambda pair: pair[0])
    return [m for _, m in members]


def _plurality_answer(pool: Sequence[ScoredCandidate]) -> Optional[NormalizedAnswer]:
    groups: list[list[ScoredCandidate]] = []
    for item in pool:
        for group in groups:
            if group[0].candidate.extracted == item.candidate.extracted:
                group.append(item)
                break
        else:
            groups.append([item])
    if not groups:
        return None
    # ties break toward the earliest-generated candidate's group
    best = max(groups, key=len)
    return best[0].candidate.extracted


def simulate(sim_config: SimulationConfig) -> ComparisonReport:
    """Run the full pipeline over synthetic experts with known accuracy
    and a (possibly noisy) oracle verifier, and compare the selected
    answers against plurality voting and each single expert on the same
    candidate pools.  Deterministic in the seed."""
    problems = [_synthetic_problem(i, sim_config.seed) for i in range(sim_config.n_problems)]
    catalog = {p.id: p for p in problems}
    backends = {
        style: SyntheticBackend(
            SyntheticExpertConfig(style=style, accuracy=accuracy, wrong_offset=_WRONG_OFFSETS[style]),
            catalog,
            base_seed=sim_config.seed,
        )
        for style, accuracy in zip(ExpertStyle, sim_config.expert_accuracies)
    }
    profiles = build_profiles(backends)
    verifier = NoisyOracleVerifier(sim_config.verifier_flip_probability, seed=sim_config.seed)
    config = PipelineConfig(backend_parallelism=1, problem_parallelism=1, seed=sim_config.seed)
    results = run_problems(
        problems,
        estimator=FeatureBaselineEstimator(),
        profiles=profiles,
        verifier=verifier,
        config=config,
    )

    amr_correct = 0
    plurality_correct = 0
    expert_correct = {style: 0 for style in ExpertStyle}
    regime_counts: dict[str, int] = {}
    for problem, result in zip(problems, results):
        if isinstance(result, ProblemFailure):  # mocks never fail transport
            continue
        band = result.regime.band.value
        regime_counts[band] = regime_counts.get(band, 0) + 1
        gold = problem.gold_answer
        if result.final_answer is not None and result.final_answer == gold:
            amr_correct += 1
        pool = _initial_pool(result)
        vote = _plurality_answer(pool)
        if vote is not None and vote == gold:
            plurality_correct += 1
        for style in ExpertStyle:
            own = [m for m in pool if m.candidate.expert is style]
            if own and own[0].candidate.extracted == gold:
                expert_correct[style] += 1

    n = sim_config.n_problems
    return ComparisonReport(
        config=sim_config,
        amr=BaselineRow("amr", amr_correct, n),
        plurality=BaselineRow("plurality_vote", plurality_correct, n),
        per_expert=tuple(
            BaselineRow(f"expert_{style.value}", expert_correct[style], n) for style in ExpertStyle
        ),
        regime_counts=tuple(sorted(regime_counts.items())),
    )
