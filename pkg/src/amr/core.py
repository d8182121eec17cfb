"""Domain types shared by every stage of the pipeline.

Everything here is immutable after construction; constructors validate
their invariants and raise :class:`ValidationError` on violation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, InitVar
from decimal import Decimal, InvalidOperation
from enum import Enum
from typing import Iterable, Optional, Sequence

__all__ = [
    "AmrError",
    "ValidationError",
    "Difficulty",
    "ExpertStyle",
    "GenerationPass",
    "RegimeBand",
    "Problem",
    "DifficultyDistribution",
    "UncertaintyScore",
    "SamplingRegime",
    "NormalizedAnswer",
    "Candidate",
    "ScoringConstants",
    "DEFAULT_SCORING",
    "ScoredCandidate",
    "Cluster",
    "TraceEvent",
    "TraceLog",
    "SelectionResult",
    "ProblemOutcome",
    "SplitRow",
    "RunReport",
    "ANSWER_TOLERANCE",
]


class AmrError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(AmrError, ValueError):
    """A domain type was constructed with invalid field values."""


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ValidationError(message)


class Difficulty(Enum):
    EASY = "easy"
    HARD = "hard"


class ExpertStyle(Enum):
    ALGEBRAIC = "algebraic"
    INTUITIVE = "intuitive"
    STEP_BY_STEP = "stepbystep"


class GenerationPass(Enum):
    INITIAL = "initial"
    CORRECTION = "correction"
    FINALIZER = "finalizer"


class RegimeBand(Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


# Two answers are the same answer when their numeric values differ by at
# most this much; absorbs float round-trips without merging distinct
# GSM8K-style answers.
ANSWER_TOLERANCE = Decimal("0.000001")

_PROB_TOLERANCE = 1e-9
_SCORE_TOLERANCE = 1e-12


def _as_decimal(value: Decimal | int | float | str) -> Decimal:
    if isinstance(value, Decimal):
        return value
    if isinstance(value, int):
        return Decimal(value)
    if isinstance(value, float):
        # Round-trip through str so 72.0 stays 72, not 72.000000000000...
        return Decimal(str(value))
    try:
        return Decimal(value)
    except InvalidOperation as exc:
        raise ValidationError(f"not a numeric value: {value!r}") from exc


def _canonical_render(numeric: Decimal) -> str:
    if numeric == 0:
        numeric = Decimal(0)  # collapse -0
    numeric = numeric.normalize()
    if numeric == numeric.to_integral_value():
        numeric = numeric.quantize(Decimal(1))
    return format(numeric, "f")


class NormalizedAnswer:
    """A numeric answer with its canonical decimal rendering.

    Equality is tolerant: two answers compare equal when their numeric
    values differ by at most ``ANSWER_TOLERANCE``.  That makes instances
    unhashable on purpose; group by ``canonical`` when an exact key is
    needed.
    """

    __slots__ = ("canonical", "numeric")

    def __init__(self, value: Decimal | int | float | str):
        numeric = _as_decimal(value)
        if not numeric.is_finite():
            raise ValidationError(f"answer must be finite, got {value!r}")
        object.__setattr__(self, "numeric", numeric)
        object.__setattr__(self, "canonical", _canonical_render(numeric))

    def __setattr__(self, name: str, value: object) -> None:
        raise AttributeError("NormalizedAnswer is immutable")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NormalizedAnswer):
            return NotImplemented
        return abs(self.numeric - other.numeric) <= ANSWER_TOLERANCE

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"NormalizedAnswer({self.canonical})"


@dataclass(frozen=True)
class Problem:
    """A math word problem plus optional evaluation-side labels."""

    id: str
    question: str
    reference_solution: Optional[str] = None
    gold_answer: Optional[NormalizedAnswer] = None
    gold_difficulty: Optional[Difficulty] = None

    def __post_init__(self) -> None:
        _require(bool(self.id), "problem id must be non-empty")
        _require(bool(self.question.strip()), "problem question must be non-empty")


@dataclass(frozen=True)
class DifficultyDistribution:
    """Router output: probabilities for the two difficulty classes."""

    p_easy: float
    p_hard: float

    def __post_init__(self) -> None:
        for name, p in (("p_easy", self.p_easy), ("p_hard", self.p_hard)):
            _require(0.0 <= p <= 1.0, f"{name} must be in [0,1], got {p}")
        _require(
            abs(self.p_easy + self.p_hard - 1.0) <= _PROB_TOLERANCE,
            f"p_easy + p_hard must sum to 1, got {self.p_easy + self.p_hard}",
        )

    @classmethod
    def from_p_hard(cls, p_hard: float) -> "DifficultyDistribution":
        return cls(p_easy=1.0 - p_hard, p_hard=p_hard)


@dataclass(frozen=True)
class UncertaintyScore:
    value: float

    def __post_init__(self) -> None:
        _require(0.0 <= self.value <= 1.0, f"uncertainty must be in [0,1], got {self.value}")


# Fixed nonzero temperature pair used by the high-uncertainty regime.
HIGH_REGIME_TEMPERATURES = (0.0, 0.15)


@dataclass(frozen=True)
class SamplingRegime:
    """How many candidates to request per expert, and at what temperatures."""

    band: RegimeBand
    per_expert_count: int
    temperatures: tuple[float, ...]

    def __post_init__(self) -> None:
        temps = tuple(self.temperatures)
        object.__setattr__(self, "temperatures", temps)
        _require(all(t >= 0.0 for t in temps), "temperatures must be >= 0")
        if self.band is RegimeBand.LOW:
            _require(temps == (0.0,), f"low regime requires temperatures (0.0,), got {temps}")
            _require(self.per_expert_count == 1, "low regime generates one candidate per expert")
        elif self.band is RegimeBand.MEDIUM:
            _require(len(temps) == 1, f"medium regime requires one temperature, got {temps}")
            _require(self.per_expert_count == 1, "medium regime generates one candidate per expert")
        else:
            _require(
                temps == HIGH_REGIME_TEMPERATURES,
                f"high regime requires temperatures {HIGH_REGIME_TEMPERATURES}, got {temps}",
            )
            _require(self.per_expert_count == 2, "high regime generates two candidates per expert")


@dataclass(frozen=True)
class Candidate:
    """One generated solution with its lineage.

    ``lineage_expert`` tracks the expert whose reasoning a refined
    candidate originated from; correction and finalizer outputs inherit
    it from their input so that cluster expert support measures
    independent agreement rather than refinement fan-out.
    """

    id: str
    problem_id: str
    text: str
    expert: ExpertStyle
    lineage_expert: ExpertStyle
    gen_pass: GenerationPass
    temperature: float
    extracted: Optional[NormalizedAnswer] = None

    def __post_init__(self) -> None:
        _require(bool(self.id), "candidate id must be non-empty")
        _require(bool(self.problem_id), "candidate problem_id must be non-empty")
        _require(self.temperature >= 0.0, f"temperature must be >= 0, got {self.temperature}")
        if self.gen_pass is GenerationPass.INITIAL:
            _require(
                self.lineage_expert is self.expert,
                "initial candidates must have lineage_expert == expert",
            )
        else:
            _require(
                self.expert is ExpertStyle.STEP_BY_STEP,
                f"{self.gen_pass.value} candidates are generated by the step-by-step expert",
            )


@dataclass(frozen=True)
class ScoringConstants:
    """Every constant of the candidate and cluster scoring formulas.

    Defaults are the tuned values the pipeline ships with; all of them
    are overridable through the run configuration.
    """

    # candidate composite weights
    w_verifier: float = 0.50
    w_completion: float = 0.18
    w_quality: float = 0.16
    w_source: float = 0.16
    # completion bonus
    hash_marker_bonus: float = 0.30
    final_answer_bonus: float = 0.10
    completion_cap: float = 0.40
    code_fence_penalty: float = 0.15
    # quality score
    quality_length_norm: int = 200
    code_keyword_penalty: float = 0.12
    code_keywords: tuple[str, ...] = ("```", "def ", "import ", "print(", "return ")
    # source bonus per generation pass
    source_bonus_correction: float = 0.14
    source_bonus_finalizer: float = 0.22
    # cluster score weights and normalizers (kept exactly as tuned; the
    # four weights deliberately sum to 0.78, no renormalization)
    cluster_w_max: float = 0.42
    cluster_w_mean: float = 0.16
    cluster_w_support: float = 0.10
    cluster_w_size: float = 0.10
    cluster_support_norm: int = 3
    cluster_size_norm: int = 4

    @property
    def completion_min(self) -> float:
        return -self.code_fence_penalty

    @property
    def completion_max(self) -> float:
        return self.completion_cap

    @property
    def quality_min(self) -> float:
        return -self.code_keyword_penalty

    @property
    def quality_max(self) -> float:
        return 1.0

    @property
    def source_bonuses(self) -> tuple[float, ...]:
        return (0.0, self.source_bonus_correction, self.source_bonus_finalizer)

    def source_bonus(self, gen_pass: GenerationPass) -> float:
        if gen_pass is GenerationPass.FINALIZER:
            return self.source_bonus_finalizer
        if gen_pass is GenerationPass.CORRECTION:
            return self.source_bonus_correction
        return 0.0

    def composite(self, s_verifier: float, c_completion: float, q_quality: float, b_source: float) -> float:
        return (
            self.w_verifier * s_verifier
            + self.w_completion * c_completion
            + self.w_quality * q_quality
            + self.w_source * b_source
        )

    @property
    def composite_min(self) -> float:
        return self.composite(0.0, self.completion_min, self.quality_min, min(self.source_bonuses))

    @property
    def composite_max(self) -> float:
        return self.composite(1.0, self.completion_max, self.quality_max, max(self.source_bonuses))

    def cluster_score(self, composites: Sequence[float], expert_support: int) -> float:
        """Score one answer cluster from its member composites."""
        if not composites:
            raise ValidationError("cluster score requires at least one member composite")
        return (
            self.cluster_w_max * max(composites)
            + self.cluster_w_mean * (sum(composites) / len(composites))
            + self.cluster_w_support * min(expert_support / self.cluster_support_norm, 1.0)
            + self.cluster_w_size * min(len(composites) / self.cluster_size_norm, 1.0)
        )


DEFAULT_SCORING = ScoringConstants()


@dataclass(frozen=True)
class ScoredCandidate:
    """A candidate plus its component and composite scores.

    Pass ``constants`` when scoring ran with non-default weights so the
    consistency checks validate against the weights actually used.
    """

    candidate: Candidate
    s_verifier: float
    c_completion: float
    q_quality: float
    b_source: float
    composite: float
    constants: InitVar[Optional[ScoringConstants]] = None

    def __post_init__(self, constants: Optional[ScoringConstants]) -> None:
        k = constants or DEFAULT_SCORING
        eps = _SCORE_TOLERANCE
        _require(0.0 <= self.s_verifier <= 1.0, f"s_verifier must be in [0,1], got {self.s_verifier}")
        _require(
            k.completion_min - eps <= self.c_completion <= k.completion_max + eps,
            f"c_completion must be in [{k.completion_min}, {k.completion_max}], got {self.c_completion}",
        )
        _require(
            k.quality_min - eps <= self.q_quality <= k.quality_max + eps,
            f"q_quality must be in [{k.quality_min}, {k.quality_max}], got {self.q_quality}",
        )
        _require(
            any(abs(self.b_source - b) <= eps for b in k.source_bonuses),
            f"b_source must be one of {k.source_bonuses}, got {self.b_source}",
        )
        expected = k.composite(self.s_verifier, self.c_completion, self.q_quality, self.b_source)
        _require(
            abs(self.composite - expected) <= eps,
            f"composite {self.composite} does not match its components (expected {expected})",
        )
        _require(
            k.composite_min - eps <= self.composite <= k.composite_max + eps,
            f"composite {self.composite} outside [{k.composite_min}, {k.composite_max}]",
        )


@dataclass(frozen=True)
class Cluster:
    """All scored candidates sharing one extracted answer."""

    answer: NormalizedAnswer
    members: tuple[ScoredCandidate, ...]
    expert_support: int
    score: float
    constants: InitVar[Optional[ScoringConstants]] = None

    def __post_init__(self, constants: Optional[ScoringConstants]) -> None:
        k = constants or DEFAULT_SCORING
        members = tuple(self.members)
        object.__setattr__(self, "members", members)
        _require(len(members) >= 1, "cluster must have at least one member")
        for m in members:
            _require(m.candidate.extracted is not None, "cluster members must carry an extracted answer")
            _require(
                m.candidate.extracted == self.answer,
                f"member answer {m.candidate.extracted} does not match cluster answer {self.answer}",
            )
        support = len({m.candidate.lineage_expert for m in members})
        _require(
            self.expert_support == support,
            f"expert_support {self.expert_support} does not match distinct lineages ({support})",
        )
        _require(1 <= self.expert_support <= 3, "expert_support must be in 1..3")
        expected = k.cluster_score([m.composite for m in members], self.expert_support)
        _require(
            abs(self.score - expected) <= _SCORE_TOLERANCE,
            f"cluster score {self.score} does not match recomputation {expected}",
        )

    @classmethod
    def build(
        cls,
        answer: NormalizedAnswer,
        members: Iterable[ScoredCandidate],
        constants: Optional[ScoringConstants] = None,
    ) -> "Cluster":
        k = constants or DEFAULT_SCORING
        members = tuple(members)
        support = len({m.candidate.lineage_expert for m in members})
        score = k.cluster_score([m.composite for m in members], support)
        return cls(answer=answer, members=members, expert_support=support, score=score, constants=k)


@dataclass(frozen=True)
class TraceEvent:
    """One pipeline event; ``error`` is set when a stage hit a failure."""

    stage: str
    message: str = ""
    error: Optional[str] = None
    elapsed_ms: Optional[float] = None

    def to_dict(self, include_timing: bool = False) -> dict:
        out: dict = {"stage": self.stage, "message": self.message, "error": self.error}
        if include_timing:
            out["elapsed_ms"] = self.elapsed_ms
        return out


class TraceLog:
    """Mutable event collector used while a solve is in flight."""

    def __init__(self) -> None:
        self._events: list[TraceEvent] = []

    def record(
        self,
        stage: str,
        message: str = "",
        error: Optional[str] = None,
        elapsed_ms: Optional[float] = None,
    ) -> None:
        self._events.append(TraceEvent(stage=stage, message=message, error=error, elapsed_ms=elapsed_ms))

    @property
    def events(self) -> tuple[TraceEvent, ...]:
        return tuple(self._events)


@dataclass(frozen=True)
class SelectionResult:
    """Final output of one solve, with the full decision record.

    ``chosen`` is ``None`` only for unanswered problems (every
    generation attempt failed filtering).
    """

    problem_id: str
    chosen: Optional[ScoredCandidate]
    chosen_cluster_answer: Optional[NormalizedAnswer]
    clusters: tuple[Cluster, ...]
    regime: SamplingRegime
    uncertainty: UncertaintyScore
    predicted_difficulty: Difficulty
    trace: tuple[TraceEvent, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        clusters = tuple(self.clusters)
        trace = tuple(self.trace)
        object.__setattr__(self, "clusters", clusters)
        object.__setattr__(self, "trace", trace)
        scores = [c.score for c in clusters]
        _require(
            all(a >= b for a, b in zip(scores, scores[1:])),
            "clusters must be sorted by descending score",
        )
        if self.chosen is None:
            _require(self.chosen_cluster_answer is None, "unanswered result cannot carry an answer")
        else:
            _require(len(clusters) >= 1, "an answered result must carry clusters")
            top = clusters[0]
            _require(self.chosen in top.members, "chosen candidate must belong to the top cluster")
            _require(
                self.chosen.composite == max(m.composite for m in top.members),
                "chosen candidate must have the maximum composite in the top cluster",
            )
            _require(
                self.chosen_cluster_answer == top.answer,
                "chosen_cluster_answer must be the top cluster's answer",
            )

    @property
    def answered(self) -> bool:
        return self.chosen is not None

    @property
    def final_answer(self) -> Optional[NormalizedAnswer]:
        return self.chosen_cluster_answer

    def to_dict(self, include_timing: bool = False) -> dict:
        """Stable serialization; timing is opt-in so that identical runs
        serialize byte-identically."""

        def cand(c: Candidate) -> dict:
            return {
                "id": c.id,
                "problem_id": c.problem_id,
                "text": c.text,
                "expert": c.expert.value,
                "lineage_expert": c.lineage_expert.value,
                "gen_pass": c.gen_pass.value,
                "temperature": c.temperature,
                "extracted": c.extracted.canonical if c.extracted else None,
            }

        def scored(s: ScoredCandidate) -> dict:
            return {
                "candidate": cand(s.candidate),
                "s_verifier": s.s_verifier,
                "c_completion": s.c_completion,
                "q_quality": s.q_quality,
                "b_source": s.b_source,
                "composite": s.composite,
            }

        return {
            "problem_id": self.problem_id,
            "answered": self.answered,
            "final_answer": self.final_answer.canonical if self.final_answer else None,
            "predicted_difficulty": self.predicted_difficulty.value,
            "uncertainty": self.uncertainty.value,
            "regime": {
                "band": self.regime.band.value,
                "per_expert_count": self.regime.per_expert_count,
                "temperatures": list(self.regime.temperatures),
            },
            "chosen": scored(self.chosen) if self.chosen else None,
            "clusters": [
                {
                    "answer": c.answer.canonical,
                    "score": c.score,
                    "expert_support": c.expert_support,
                    "members": [scored(m) for m in c.members],
                }
                for c in self.clusters
            ],
            "trace": [e.to_dict(include_timing) for e in self.trace],
        }


@dataclass(frozen=True)
class ProblemOutcome:
    """One row of a run report."""

    problem_id: str
    predicted_difficulty: Optional[Difficulty]
    gold_difficulty: Optional[Difficulty]
    final_answer: Optional[NormalizedAnswer]
    gold_answer: Optional[NormalizedAnswer]
    correct: Optional[bool]
    error: Optional[str] = None


@dataclass(frozen=True)
class SplitRow:
    """Accuracy over one slice of the run; ``accuracy`` is the raw
    unrounded ratio (rendering applies the display rounding)."""

    label: str
    correct: int
    total: int
    accuracy: float

    def __post_init__(self) -> None:
        _require(0 <= self.correct <= self.total, f"need 0 <= correct <= total, got {self.correct}/{self.total}")
        expected = (self.correct / self.total) if self.total else 0.0
        _require(
            abs(self.accuracy - expected) <= _SCORE_TOLERANCE,
            f"accuracy {self.accuracy} does not match {self.correct}/{self.total}",
        )

    @classmethod
    def build(cls, label: str, correct: int, total: int) -> "SplitRow":
        return cls(label=label, correct=correct, total=total, accuracy=(correct / total) if total else 0.0)


@dataclass(frozen=True)
class RunReport:
    per_problem: tuple[ProblemOutcome, ...]
    splits: tuple[SplitRow, ...]
    router_alignment: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "per_problem", tuple(self.per_problem))
        object.__setattr__(self, "splits", tuple(self.splits))
        if self.router_alignment is not None:
            _require(0.0 <= self.router_alignment <= 1.0, "router_alignment must be in [0,1]")
