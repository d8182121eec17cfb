"""Per-problem orchestration: route, generate, filter, score, correct,
finalize, rescore, cluster, select."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional, Sequence, Union

from . import aggregate, experts, router
from .backends import run_bounded
from .config import PipelineConfig
from .core import (
    AmrError,
    Candidate,
    Difficulty,
    ExpertStyle,
    Problem,
    ScoredCandidate,
    SelectionResult,
    TraceLog,
)
from .experts import ExpertProfile, GenerationError
from .router import DifficultyEstimator
from .verifier import Verifier, VerifierError, score_candidate

__all__ = ["solve", "run_problems", "ProblemFailure"]


@dataclass(frozen=True)
class ProblemFailure:
    """A problem the pipeline could not answer at all (total backend
    outage); kept in run results so one dead problem never aborts a run."""

    problem_id: str
    error: str
    predicted_difficulty: Optional[Difficulty] = None


def _score_pool(
    candidates: Sequence[Candidate],
    problem: Problem,
    verifier: Verifier,
    config: PipelineConfig,
    trace: TraceLog,
    stage: str,
) -> list[ScoredCandidate]:
    scored = []
    for candidate in candidates:
        try:
            s_verifier = score_candidate(verifier, problem, candidate)
        except VerifierError as exc:
            s_verifier = config.verifier_fallback_score
            trace.record(stage, message=f"fallback verifier score for {candidate.id}", error=str(exc))
        scored.append(aggregate.composite_score(candidate, s_verifier, config.scoring))
    return scored


def solve(
    problem: Problem,
    *,
    estimator: DifficultyEstimator,
    profiles: dict[ExpertStyle, ExpertProfile],
    verifier: Verifier,
    config: Optional[PipelineConfig] = None,
) -> SelectionResult:
    """Run the full pipeline for one problem.

    Raises GenerationError only on total backend outage (after the
    fallback generation also failed); the error carries the predicted
    difficulty so run reports stay complete.
    """
    config = config or PipelineConfig()
    trace = TraceLog()
    started = time.perf_counter()

    def mark(stage: str, message: str = "") -> None:
        trace.record(stage, message=message, elapsed_ms=(time.perf_counter() - started) * 1000.0)

    # stage 1: route
    dist = router.estimate_difficulty(estimator, problem)
    uncertainty = router.hybrid_uncertainty(dist)
    regime = router.select_regime(uncertainty, config.router)
    predicted = Difficulty.HARD if dist.p_hard >= 0.5 else Difficulty.EASY
    plan = router.build_generation_plan(regime)
    mark("route", f"p_hard={dist.p_hard:.4f} U={uncertainty.value:.4f} regime={regime.band.value}")

    stepbystep = profiles[ExpertStyle.STEP_BY_STEP]
    pool: list[ScoredCandidate] = []

    # stage 2: initial generation + filtering
    try:
        initial = experts.generate_initial(
            profiles,
            plan,
            problem,
            generation=config.generation,
            parallelism=config.backend_parallelism,
            master_seed=config.seed,
            trace=trace,
        )
    except GenerationError as exc:
        trace.record("generate_initial", error=str(exc))
        initial = []
    survivors = experts.filter_candidates(initial)
    mark("generate_initial", f"{len(initial)} generated, {len(survivors)} survive filtering")

    if survivors:
        # stage 3: preliminary scoring
        pool = _score_pool(survivors, problem, verifier, config, trace, "score_initial")
        mark("score_initial", f"{len(pool)} candidates scored")

        # stage 4: correction pass on the current best
        top = sorted(pool, key=aggregate.candidate_sort_key)[: config.generation.correction_top_k]
        corrections = experts.correction_pass(
            top,
            stepbystep,
            problem,
            generation=config.generation,
            parallelism=config.backend_parallelism,
            master_seed=config.seed,
            trace=trace,
        )
        kept_corrections = experts.filter_candidates(corrections)
        pool += _score_pool(kept_corrections, problem, verifier, config, trace, "score_corrections")
        mark("correction", f"{len(corrections)} corrections, {len(kept_corrections)} kept")

        # stage 5: finalizer conditioned on the overall best so far
        best = min(pool, key=aggregate.candidate_sort_key)
        finalized = experts.finalizer_pass(
            best,
            stepbystep,
            problem,
            generation=config.generation,
            master_seed=config.seed,
            trace=trace,
        )
        kept_final = experts.filter_candidates([finalized] if finalized else [])
        pool += _score_pool(kept_final, problem, verifier, config, trace, "score_finalizer")
        mark("finalizer", "kept" if kept_final else "absent")

    if not pool:
        # fallback: one deterministic step-by-step attempt with an
        # explicit answer-format reminder
        retry = experts.fallback_generation(
            stepbystep, problem, generation=config.generation, master_seed=config.seed, trace=trace
        )
        kept = experts.filter_candidates([retry] if retry else [])
        pool = _score_pool(kept, problem, verifier, config, trace, "score_fallback")
        mark("fallback", "recovered" if pool else "empty")

    if not pool:
        if not initial and all(e.error for e in trace.events if e.stage in ("generate_initial", "fallback")):
            raise GenerationError(
                f"no backend produced any candidate for problem {problem.id}",
                predicted_difficulty=predicted,
            )
        mark("select", "unanswered")
        return SelectionResult(
            problem_id=problem.id,
            chosen=None,
            chosen_cluster_answer=None,
            clusters=(),
            regime=regime,
            uncertainty=uncertainty,
            predicted_difficulty=predicted,
            trace=trace.events,
        )

    # stages 6-7: cluster and select
    clusters = aggregate.cluster_candidates(pool, config.scoring)
    mark("cluster", f"{len(clusters)} clusters over {len(pool)} candidates")
    chosen = aggregate.select_final(clusters)
    mark("select", f"answer={clusters[0].answer.canonical}")

    return SelectionResult(
        problem_id=problem.id,
        chosen=chosen,
        chosen_cluster_answer=clusters[0].answer,
        clusters=tuple(clusters),
        regime=regime,
        uncertainty=uncertainty,
        predicted_difficulty=predicted,
        trace=trace.events,
    )


RunResult = Union[SelectionResult, ProblemFailure]


def run_problems(
    problems: Sequence[Problem],
    *,
    estimator: DifficultyEstimator,
    profiles: dict[ExpertStyle, ExpertProfile],
    verifier: Verifier,
    config: Optional[PipelineConfig] = None,
) -> list[RunResult]:
    """Solve a batch with bounded problem parallelism; per-problem
    failures become ProblemFailure rows instead of aborting the run."""
    config = config or PipelineConfig()

    def solve_one(problem: Problem) -> RunResult:
        return solve(problem, estimator=estimator, profiles=profiles, verifier=verifier, config=config)

    calls = [lambda p=problem: solve_one(p) for problem in problems]
    outcomes = run_bounded(calls, config.problem_parallelism)
    results: list[RunResult] = []
    for problem, outcome in zip(problems, outcomes):
        if isinstance(outcome, AmrError):
            results.append(
                ProblemFailure(
                    problem_id=problem.id,
                    error=str(outcome),
                    predicted_difficulty=getattr(outcome, "predicted_difficulty", None),
                )
            )
        elif isinstance(outcome, Exception):
            raise outcome
        else:
            results.append(outcome)
    return results
