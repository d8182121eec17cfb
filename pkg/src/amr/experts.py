"""Style-specific prompt rendering, initial generation, the correction
and finalizer passes, and candidate filtering."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from . import aggregate
from .backends import BackendError, CompletionBackend, CompletionRequest, derive_seed, run_bounded
from .config import GenerationConfig
from .core import (
    AmrError,
    Candidate,
    ExpertStyle,
    GenerationPass,
    Problem,
    ScoredCandidate,
    TraceLog,
    ValidationError,
)

__all__ = [
    "GenerationError",
    "ExpertProfile",
    "SYSTEM_PROMPTS",
    "ANSWER_FORMAT_INSTRUCTION",
    "build_profiles",
    "render_prompt",
    "generate_initial",
    "filter_candidates",
    "correction_pass",
    "finalizer_pass",
    "has_answer_indicator",
]


class GenerationError(AmrError):
    """Every generation request for a problem failed."""

    def __init__(self, message: str, predicted_difficulty=None):
        super().__init__(message)
        self.predicted_difficulty = predicted_difficulty


SYSTEM_PROMPTS: dict[ExpertStyle, str] = {
    ExpertStyle.ALGEBRAIC: (
        "You are a math tutor who solves word problems with algebra. "
        "Introduce variables for the unknowns, set up the equations the problem "
        "describes, and solve them symbolically before computing the number."
    ),
    ExpertStyle.INTUITIVE: (
        "You are a math tutor who solves word problems with quick mental math. "
        "Reason in plain natural language, estimating and combining quantities "
        "directly without formal equations."
    ),
    ExpertStyle.STEP_BY_STEP: (
        "You are a math tutor who solves word problems with careful structured "
        "derivations. Number every step and compute exactly one quantity per line."
    ),
}

ANSWER_FORMAT_INSTRUCTION = 'End your solution with a final line of the form "#### <answer>".'

_CORRECTION_INSTRUCTION = (
    "The solution above may contain a mistake. Locate the first erroneous step, "
    "fix it, and re-derive the rest of the solution from that point. "
    + ANSWER_FORMAT_INSTRUCTION
)

_FINALIZER_INSTRUCTION = (
    "Rewrite the solution above as a short, clean, high-quality solution that keeps "
    "only the essential steps. " + ANSWER_FORMAT_INSTRUCTION
)

_FALLBACK_REMINDER = (
    "Your previous attempts did not state a numeric answer. Solve the problem and make "
    'absolutely sure the last line is "#### <number>".'
)


@dataclass(frozen=True)
class ExpertProfile:
    style: ExpertStyle
    system_prompt: str
    backend: CompletionBackend


def build_profiles(backends: dict[ExpertStyle, CompletionBackend]) -> dict[ExpertStyle, ExpertProfile]:
    """One profile per style, each with its canonical system prompt."""
    missing = [s for s in ExpertStyle if s not in backends]
    if missing:
        raise ValidationError(f"missing backends for styles: {[s.value for s in missing]}")
    return {
        style: ExpertProfile(style=style, system_prompt=SYSTEM_PROMPTS[style], backend=backends[style])
        for style in ExpertStyle
    }


@dataclass(frozen=True)
class PromptBundle:
    """A rendered prompt pair; the caller adds temperature and limits."""

    system_prompt: str
    user_prompt: str


def render_prompt(profile: ExpertProfile, problem: Problem) -> PromptBundle:
    user = f"{problem.question}\n\n{ANSWER_FORMAT_INSTRUCTION}"
    return PromptBundle(system_prompt=profile.system_prompt, user_prompt=user)


def has_answer_indicator(text: str) -> bool:
    return "####" in text or "final answer" in text.lower()


def filter_candidates(candidates: Sequence[Candidate]) -> list[Candidate]:
    """Keep candidates that both extracted an answer and state an
    explicit answer indicator; order preserved, idempotent."""
    return [c for c in candidates if c.extracted is not None and has_answer_indicator(c.text)]


def _request_seed(master_seed: int, problem_id: str, stage: str, style: ExpertStyle, temperature: float, index: int) -> int:
    return derive_seed(master_seed, problem_id, stage, style.value, f"{temperature:.2f}", index)


def _candidate_id(problem_id: str, stage: str, style: ExpertStyle, temperature: float, index: int) -> str:
    return f"{problem_id}:{stage}:{style.value}:{temperature:.2f}:{index}"


def _make_candidate(
    text: str,
    problem: Problem,
    stage: str,
    gen_pass: GenerationPass,
    style: ExpertStyle,
    lineage: ExpertStyle,
    temperature: float,
    index: int,
) -> Candidate:
    return Candidate(
        id=_candidate_id(problem.id, stage, style, temperature, index),
        problem_id=problem.id,
        text=text,
        expert=style,
        lineage_expert=lineage,
        gen_pass=gen_pass,
        temperature=temperature,
        extracted=aggregate.extract_answer(text),
    )


def generate_initial(
    profiles: dict[ExpertStyle, ExpertProfile],
    plan: Sequence[tuple[ExpertStyle, float]],
    problem: Problem,
    *,
    generation: Optional[GenerationConfig] = None,
    parallelism: int = 1,
    master_seed: int = 0,
    trace: Optional[TraceLog] = None,
) -> list[Candidate]:
    """Run the generation plan; individual backend failures drop that
    candidate with a trace entry, and only a total wipeout raises."""
    if not plan:
        raise ValidationError("generation plan must be non-empty")
    generation = generation or GenerationConfig()
    requests = []
    for index, (style, temperature) in enumerate(plan):
        profile = profiles[style]
        bundle = render_prompt(profile, problem)
        requests.append(
            (
                style,
                temperature,
                index,
                CompletionRequest(
                    system_prompt=bundle.system_prompt,
                    user_prompt=bundle.user_prompt,
                    temperature=temperature,
                    max_tokens=generation.max_tokens_initial,
                    seed=_request_seed(master_seed, problem.id, "initial", style, temperature, index),
                ),
            )
        )
    calls = [lambda p=profiles[s], r=req: p.backend.complete(r) for (s, _, _, req) in requests]
    outcomes = run_bounded(calls, parallelism)
    candidates: list[Candidate] = []
    for (style, temperature, index, _), outcome in zip(requests, outcomes):
        if isinstance(outcome, BackendError):
            if trace:
                trace.record(
                    "generate_initial",
                    message=f"request {style.value}@{temperature:.2f} dropped",
                    error=str(outcome),
                )
            continue
        if isinstance(outcome, Exception):
            raise outcome
        candidates.append(
            _make_candidate(outcome, problem, "initial", GenerationPass.INITIAL, style, style, temperature, index)
        )
    if not candidates:
        raise GenerationError(f"all {len(plan)} generation requests failed for problem {problem.id}")
    return candidates


def correction_pass(
    top: Sequence[ScoredCandidate],
    stepbystep: ExpertProfile,
    problem: Problem,
    *,
    generation: Optional[GenerationConfig] = None,
    parallelism: int = 1,
    master_seed: int = 0,
    trace: Optional[TraceLog] = None,
) -> list[Candidate]:
    """Ask the step-by-step expert to fix the first mistake in each of
    the current best candidates; outputs inherit their input's lineage."""
    if not top:
        raise ValidationError("correction pass requires at least one input candidate")
    generation = generation or GenerationConfig()
    requests = []
    for index, item in enumerate(top):
        user = (
            f"Problem:\n{problem.question}\n\n"
            f"Proposed solution:\n{item.candidate.text}\n\n"
            f"{_CORRECTION_INSTRUCTION}"
        )
        requests.append(
            (
                item,
                index,
                CompletionRequest(
                    system_prompt=stepbystep.system_prompt,
                    user_prompt=user,
                    temperature=0.0,
                    max_tokens=generation.max_tokens_correction,
                    seed=_request_seed(master_seed, problem.id, "correction", ExpertStyle.STEP_BY_STEP, 0.0, index),
                ),
            )
        )
    calls = [lambda r=req: stepbystep.backend.complete(r) for (_, _, req) in requests]
    outcomes = run_bounded(calls, parallelism)
    corrections: list[Candidate] = []
    for (item, index, _), outcome in zip(requests, outcomes):
        if isinstance(outcome, BackendError):
            if trace:
                trace.record("correction", message=f"correction {index} dropped", error=str(outcome))
            continue
        if isinstance(outcome, Exception):
            raise outcome
        corrections.append(
            _make_candidate(
                outcome,
                problem,
                "correction",
                GenerationPass.CORRECTION,
                ExpertStyle.STEP_BY_STEP,
                item.candidate.lineage_expert,
                0.0,
                index,
            )
        )
    return corrections


def finalizer_pass(
    best: ScoredCandidate,
    stepbystep: ExpertProfile,
    problem: Problem,
    *,
    generation: Optional[GenerationConfig] = None,
    master_seed: int = 0,
    trace: Optional[TraceLog] = None,
) -> Optional[Candidate]:
    """Rewrite the overall best candidate as a concise clean solution;
    returns None when the backend fails (pipeline continues without it)."""
    generation = generation or GenerationConfig()
    user = (
        f"Problem:\n{problem.question}\n\n"
        f"Solution:\n{best.candidate.text}\n\n"
        f"{_FINALIZER_INSTRUCTION}"
    )
    request = CompletionRequest(
        system_prompt=stepbystep.system_prompt,
        user_prompt=user,
        temperature=0.0,
        max_tokens=generation.max_tokens_finalizer,
        seed=_request_seed(master_seed, problem.id, "finalizer", ExpertStyle.STEP_BY_STEP, 0.0, 0),
    )
    try:
        text = stepbystep.backend.complete(request)
    except BackendError as exc:
        if trace:
            trace.record("finalizer", message="finalizer dropped", error=str(exc))
        return None
    return _make_candidate(
        text,
        problem,
        "finalizer",
        GenerationPass.FINALIZER,
        ExpertStyle.STEP_BY_STEP,
        best.candidate.lineage_expert,
        0.0,
        0,
    )


def fallback_generation(
    stepbystep: ExpertProfile,
    problem: Problem,
    *,
    generation: Optional[GenerationConfig] = None,
    master_seed: int = 0,
    trace: Optional[TraceLog] = None,
) -> Optional[Candidate]:
    """Last-resort single deterministic generation with an explicit
    answer-format reminder."""
    generation = generation or GenerationConfig()
    bundle = render_prompt(stepbystep, problem)
    request = CompletionRequest(
        system_prompt=bundle.system_prompt,
        user_prompt=f"{bundle.user_prompt}\n\n{_FALLBACK_REMINDER}",
        temperature=0.0,
        max_tokens=generation.max_tokens_initial,
        seed=_request_seed(master_seed, problem.id, "fallback", ExpertStyle.STEP_BY_STEP, 0.0, 0),
    )
    try:
        text = stepbystep.backend.complete(request)
    except BackendError as exc:
        if trace:
            trace.record("fallback", message="fallback generation failed", error=str(exc))
        return None
    return _make_candidate(
        text,
        problem,
        "fallback",
        GenerationPass.INITIAL,
        ExpertStyle.STEP_BY_STEP,
        ExpertStyle.STEP_BY_STEP,
        0.0,
        0,
    )
