"""Difficulty prediction from problem text, the hybrid uncertainty
score, and the mapping from uncertainty to a sampling regime."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Any, Callable, Optional, Protocol

from .config import RetryPolicy, RouterConfig
from .core import (
    AmrError,
    DifficultyDistribution,
    ExpertStyle,
    HIGH_REGIME_TEMPERATURES,
    Problem,
    RegimeBand,
    SamplingRegime,
    UncertaintyScore,
)
from .backends import BackendError, post_json_with_retry

__all__ = [
    "RoutingError",
    "DifficultyEstimator",
    "FeatureCoefficients",
    "FeatureBaselineEstimator",
    "RemoteDifficultyEstimator",
    "estimate_difficulty",
    "binary_entropy",
    "hybrid_uncertainty",
    "select_regime",
    "build_generation_plan",
]


class RoutingError(AmrError):
    """Difficulty estimation failed; carries the backend status when known."""

    def __init__(self, message: str, status: Optional[int] = None):
        super().__init__(message)
        self.status = status


class DifficultyEstimator(Protocol):
    def estimate(self, question: str) -> DifficultyDistribution: ...


_NUMERIC_LITERAL_RE = re.compile(r"\d+(?:\.\d+)?")
_SENTENCE_SPLIT_RE = re.compile(r"[.!?]+")


def _question_features(question: str) -> tuple[int, int, int]:
    tokens = len(question.split())
    numbers = len(_NUMERIC_LITERAL_RE.findall(question))
    sentences = sum(1 for part in _SENTENCE_SPLIT_RE.split(question) if part.strip())
    return tokens, numbers, max(sentences, 1)


@dataclass(frozen=True)
class FeatureCoefficients:
    """Logistic-regression coefficients over three shallow text features:
    whitespace-token count, numeric-literal count, sentence count."""

    bias: float = -2.4
    per_token: float = 0.035
    per_number: float = 0.15
    per_sentence: float = 0.25


class FeatureBaselineEstimator:
    """Dependency-free difficulty stand-in: a fixed logistic model over
    shallow question features.  Exists so the pipeline runs end to end
    without any external service; a trained classifier plugs in through
    :class:`RemoteDifficultyEstimator`.
    """

    def __init__(self, coefficients: Optional[FeatureCoefficients] = None):
        self.coefficients = coefficients or FeatureCoefficients()

    def estimate(self, question: str) -> DifficultyDistribution:
        tokens, numbers, sentences = _question_features(question)
        c = self.coefficients
        z = c.bias + c.per_token * tokens + c.per_number * numbers + c.per_sentence * sentences
        p_hard = 1.0 / (1.0 + math.exp(-z))
        return DifficultyDistribution.from_p_hard(p_hard)


class RemoteDifficultyEstimator:
    """Client for an external classifier: POST {"question": ...} and read
    back {"p_hard": ...}."""

    def __init__(
        self,
        url: str,
        *,
        retry: Optional[RetryPolicy] = None,
        session: Optional[Any] = None,
        sleep: Optional[Callable[[float], None]] = None,
    ):
        self.url = url
        self.retry = retry or RetryPolicy()
        self._session = session
        self._sleep = sleep

    def estimate(self, question: str) -> DifficultyDistribution:
        kwargs: dict[str, Any] = {"retry": self.retry, "session": self._session}
        if self._sleep is not None:
            kwargs["sleep"] = self._sleep
        try:
            body = post_json_with_retry(self.url, {"question": question}, **kwargs)
        except BackendError as exc:
            status = getattr(exc, "status", None)
            raise RoutingError(f"difficulty estimator failed: {exc}", status=status) from exc
        p_hard = body.get("p_hard")
        if not isinstance(p_hard, (int, float)) or not (0.0 <= p_hard <= 1.0):
            raise RoutingError(f"difficulty estimator returned invalid p_hard: {p_hard!r}")
        return DifficultyDistribution.from_p_hard(float(p_hard))


def estimate_difficulty(estimator: DifficultyEstimator, problem: Problem) -> DifficultyDistribution:
    """Predict the difficulty distribution from the question text alone.

    Estimators only ever see ``problem.question``; the reference
    solution and gold labels stay invisible to routing by construction.
    """
    return estimator.estimate(problem.question)


def binary_entropy(p: float) -> float:
    """Shannon entropy of a Bernoulli(p) in bits, so the result spans [0,1]."""
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"probability must be in [0,1], got {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def hybrid_uncertainty(dist: DifficultyDistribution) -> UncertaintyScore:
    """Average of the entropy term and the margin term 1 - 2|p_hard - 0.5|;
    both peak at p_hard = 0.5, so the score spans exactly [0,1]."""
    p = dist.p_hard
    value = 0.5 * binary_entropy(p) + 0.5 * (1.0 - 2.0 * abs(p - 0.5))
    return UncertaintyScore(min(max(value, 0.0), 1.0))


def select_regime(u: UncertaintyScore, config: Optional[RouterConfig] = None) -> SamplingRegime:
    """Map an uncertainty score to a sampling regime.

    Boundaries are half-open exactly as configured: U < low is Low,
    low <= U < high is Medium, U >= high is High.
    """
    config = config or RouterConfig()
    if u.value < config.low_threshold:
        return SamplingRegime(band=RegimeBand.LOW, per_expert_count=1, temperatures=(0.0,))
    if u.value < config.high_threshold:
        return SamplingRegime(
            band=RegimeBand.MEDIUM, per_expert_count=1, temperatures=(config.medium_temperature,)
        )
    return SamplingRegime(band=RegimeBand.HIGH, per_expert_count=2, temperatures=HIGH_REGIME_TEMPERATURES)


def build_generation_plan(regime: SamplingRegime) -> list[tuple[ExpertStyle, float]]:
    """Expand a regime into (expert, temperature) requests, experts in
    enum order and temperatures ascending within each expert."""
    temps = sorted(regime.temperatures)
    return [(style, temp) for style in ExpertStyle for temp in temps]
