"""Pluggable correctness scorers: a remote classifier client plus
deterministic mocks for tests and simulation.  Scores always land in
[0, 1]; clamping is enforced at this boundary."""

from __future__ import annotations

from typing import Any, Callable, Optional, Protocol

from .backends import BackendError, hash_uniform, post_json_with_retry
from .config import RetryPolicy
from .core import AmrError, Candidate, Problem

__all__ = [
    "VerifierError",
    "Verifier",
    "OracleVerifier",
    "NoisyOracleVerifier",
    "ConstantVerifier",
    "RemoteVerifier",
    "score_candidate",
]


class VerifierError(AmrError):
    """Scoring failed; the pipeline substitutes its fallback score."""


class Verifier(Protocol):
    def score(self, problem: Problem, candidate: Candidate) -> float: ...


def _clamp(value: float) -> float:
    return min(max(value, 0.0), 1.0)


class OracleVerifier:
    """Scores 1.0 when the extracted answer matches gold, else 0.0 —
    exactly the numerical-answer-matching rule a trained verifier is
    labeled with."""

    def score(self, problem: Problem, candidate: Candidate) -> float:
        if problem.gold_answer is None:
            raise VerifierError(f"oracle verifier needs a gold answer for problem {problem.id}")
        if candidate.extracted is None:
            return 0.0
        return 1.0 if candidate.extracted == problem.gold_answer else 0.0


class NoisyOracleVerifier:
    """Oracle score flipped with a fixed probability, deterministic in
    (problem.id, candidate.id, seed)."""

    def __init__(self, flip_probability: float, seed: int = 0):
        if not (0.0 <= flip_probability <= 1.0):
            raise VerifierError(f"flip probability must be in [0,1], got {flip_probability}")
        self.flip_probability = flip_probability
        self.seed = seed
        self._oracle = OracleVerifier()

    def score(self, problem: Problem, candidate: Candidate) -> float:
        truth = self._oracle.score(problem, candidate)
        if hash_uniform("verifier-flip", problem.id, candidate.id, self.seed) < self.flip_probability:
            return 1.0 - truth
        return truth


class ConstantVerifier:
    def __init__(self, value: float):
        self.value = _clamp(value)

    def score(self, problem: Problem, candidate: Candidate) -> float:
        return self.value


class RemoteVerifier:
    """Client for an external scorer: POST {base_url}/score with the
    question and full solution text, read back {"score": ...}."""

    def __init__(
        self,
        base_url: str,
        *,
        retry: Optional[RetryPolicy] = None,
        session: Optional[Any] = None,
        sleep: Optional[Callable[[float], None]] = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.retry = retry or RetryPolicy()
        self._session = session
        self._sleep = sleep

    def score(self, problem: Problem, candidate: Candidate) -> float:
        payload = {"question": problem.question, "solution": candidate.text}
        kwargs: dict[str, Any] = {"retry": self.retry, "session": self._session}
        if self._sleep is not None:
            kwargs["sleep"] = self._sleep
        try:
            body = post_json_with_retry(f"{self.base_url}/score", payload, **kwargs)
        except BackendError as exc:
            raise VerifierError(f"verifier request failed: {exc}") from exc
        score = body.get("score")
        if not isinstance(score, (int, float)):
            raise VerifierError(f"verifier returned a non-numeric score: {score!r}")
        return _clamp(float(score))


def score_candidate(verifier: Verifier, problem: Problem, candidate: Candidate) -> float:
    """Score one candidate, clamping whatever the backend returns."""
    if not candidate.text:
        raise VerifierError(f"candidate {candidate.id} has empty text")
    return _clamp(verifier.score(problem, candidate))
