"""Answer extraction and normalization, candidate composite scoring,
answer clustering, cluster scoring, and final selection.

Everything here is pure and deterministic; shuffling candidate order
never changes the selected answer.
"""

from __future__ import annotations

import re
from decimal import Decimal, InvalidOperation
from typing import Optional, Sequence

from .core import (
    AmrError,
    Candidate,
    Cluster,
    DEFAULT_SCORING,
    GenerationPass,
    NormalizedAnswer,
    ScoredCandidate,
    ScoringConstants,
    ValidationError,
)

__all__ = [
    "SelectionError",
    "extract_answer",
    "completion_bonus",
    "quality_score",
    "source_bonus",
    "composite_score",
    "cluster_candidates",
    "score_cluster",
    "select_final",
    "candidate_sort_key",
    "PASS_PRIORITY",
]


class SelectionError(AmrError):
    """select_final was asked to choose from nothing."""


# optional sign, optional $, digits with optional thousands commas,
# optional decimal fraction
_NUMBER_TOKEN_RE = re.compile(r"[-+]?\$?\d[\d,]*(?:\.\d+)?")
_HASH_MARKER = "####"
_FINAL_ANSWER_MARKER = "final answer"


def _first_number_after(text: str, start: int) -> Optional[NormalizedAnswer]:
    match = _NUMBER_TOKEN_RE.search(text, start)
    if not match:
        return None
    return _normalize_token(match.group(0))


def _normalize_token(token: str) -> Optional[NormalizedAnswer]:
    cleaned = token.replace("$", "").replace(",", "").rstrip(".")
    try:
        return NormalizedAnswer(Decimal(cleaned))
    except (InvalidOperation, ValidationError):
        return None


def extract_answer(text: str) -> Optional[NormalizedAnswer]:
    """Pull the stated numeric answer out of a solution text.

    Rules, first match wins: the last "####" marker, then the last
    case-insensitive "final answer", then the last numeric token in the
    whole text.  Returns None when no numeric token exists anywhere.
    """
    marker = text.rfind(_HASH_MARKER)
    if marker != -1:
        answer = _first_number_after(text, marker + len(_HASH_MARKER))
        if answer is not None:
            return answer
    lowered = text.lower()
    marker = lowered.rfind(_FINAL_ANSWER_MARKER)
    if marker != -1:
        answer = _first_number_after(text, marker + len(_FINAL_ANSWER_MARKER))
        if answer is not None:
            return answer
    matches = _NUMBER_TOKEN_RE.findall(text)
    for token in reversed(matches):
        answer = _normalize_token(token)
        if answer is not None:
            return answer
    return None


def completion_bonus(text: str, constants: ScoringConstants = DEFAULT_SCORING) -> float:
    """Structure bonus: rewards explicit answer markers, penalizes code fences."""
    bonus = 0.0
    if _HASH_MARKER in text:
        bonus += constants.hash_marker_bonus
    if _FINAL_ANSWER_MARKER in text.lower():
        bonus += constants.final_answer_bonus
    bonus = min(bonus, constants.completion_cap)
    if "```" in text:
        bonus -= constants.code_fence_penalty
    return bonus


def quality_score(text: str, constants: ScoringConstants = DEFAULT_SCORING) -> float:
    """Length-normalized coherence proxy, penalized when code leaks in."""
    q = min(max(len(text) / constants.quality_length_norm, 0.0), 1.0)
    if any(keyword in text for keyword in constants.code_keywords):
        q -= constants.code_keyword_penalty
    return q


def source_bonus(gen_pass: GenerationPass, constants: ScoringConstants = DEFAULT_SCORING) -> float:
    return constants.source_bonus(gen_pass)


def composite_score(
    candidate: Candidate,
    s_verifier: float,
    constants: ScoringConstants = DEFAULT_SCORING,
) -> ScoredCandidate:
    """Combine the verifier score with the heuristic components into the
    weighted composite."""
    if not (0.0 <= s_verifier <= 1.0):
        raise ValidationError(f"s_verifier must be in [0,1], got {s_verifier}")
    c = completion_bonus(candidate.text, constants)
    q = quality_score(candidate.text, constants)
    b = source_bonus(candidate.gen_pass, constants)
    return ScoredCandidate(
        candidate=candidate,
        s_verifier=s_verifier,
        c_completion=c,
        q_quality=q,
        b_source=b,
        composite=constants.composite(s_verifier, c, q, b),
        constants=constants,
    )


def score_cluster(
    composites: Sequence[float],
    expert_support: int,
    constants: ScoringConstants = DEFAULT_SCORING,
) -> float:
    """Cluster score: best member, mean, expert support and size, with
    the support and size terms capped at their normalizers."""
    return constants.cluster_score(composites, expert_support)


def cluster_candidates(
    scored: Sequence[ScoredCandidate],
    constants: ScoringConstants = DEFAULT_SCORING,
) -> list[Cluster]:
    """Partition scored candidates by extracted answer and score each
    cluster, sorted best-first.

    Grouping compares each candidate against the first member of every
    existing cluster under the answer tolerance.  Ties in cluster score
    break by higher best-member composite, then larger size, then
    smaller numeric answer.
    """
    groups: list[list[ScoredCandidate]] = []
    for item in scored:
        if item.candidate.extracted is None:
            raise ValidationError(f"candidate {item.candidate.id} has no extracted answer")
        for group in groups:
            if group[0].candidate.extracted == item.candidate.extracted:
                group.append(item)
                break
        else:
            groups.append([item])
    clusters = [
        Cluster.build(answer=group[0].candidate.extracted, members=group, constants=constants)
        for group in groups
    ]
    clusters.sort(
        key=lambda c: (
            -c.score,
            -max(m.composite for m in c.members),
            -len(c.members),
            c.answer.numeric,
        )
    )
    return clusters


PASS_PRIORITY = {
    GenerationPass.FINALIZER: 2,
    GenerationPass.CORRECTION: 1,
    GenerationPass.INITIAL: 0,
}


def candidate_sort_key(item: ScoredCandidate) -> tuple:
    """Best-first total order on scored candidates: composite, then pass
    priority (finalizer > correction > initial), then id ascending."""
    return (-item.composite, -PASS_PRIORITY[item.candidate.gen_pass], item.candidate.id)


def select_final(clusters: Sequence[Cluster]) -> ScoredCandidate:
    """Best candidate in the best cluster."""
    if not clusters:
        raise SelectionError("no clusters to select from")
    top = clusters[0]
    return min(top.members, key=candidate_sort_key)
