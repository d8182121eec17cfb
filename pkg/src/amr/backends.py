"""Text-completion backends: one remote OpenAI-compatible client and two
deterministic mocks, all behind the same ``complete(request)`` surface.

Mock backends are pure functions of (request, seed), so full-pipeline
runs over mocks reproduce byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Protocol, Sequence

import requests

from .config import RetryPolicy
from .core import AmrError, ExpertStyle, NormalizedAnswer, Problem, ValidationError

__all__ = [
    "BackendError",
    "TransportError",
    "ProtocolError",
    "RejectionError",
    "CompletionRequest",
    "CompletionBackend",
    "RemoteOpenAIBackend",
    "ScriptedBackend",
    "SyntheticExpertConfig",
    "SyntheticBackend",
    "synthetic_expert_output",
    "derive_seed",
    "hash_uniform",
    "post_json_with_retry",
    "run_bounded",
    "API_KEY_ENV",
]

API_KEY_ENV = "AMR_API_KEY"

_RETRYABLE_STATUS = {429}


class BackendError(AmrError):
    """Base class for completion/transport failures."""


class TransportError(BackendError):
    """Network-level failure (connection, timeout, exhausted retries)."""

    def __init__(self, message: str, status: Optional[int] = None):
        super().__init__(message)
        self.status = status


class ProtocolError(BackendError):
    """The endpoint answered, but not in the expected shape."""


class RejectionError(BackendError):
    """The endpoint rejected the request (4xx other than 429)."""

    def __init__(self, message: str, status: int):
        super().__init__(message)
        self.status = status


@dataclass(frozen=True)
class CompletionRequest:
    system_prompt: str
    user_prompt: str
    temperature: float
    max_tokens: int
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.temperature < 0.0:
            raise ValidationError(f"temperature must be >= 0, got {self.temperature}")
        if self.max_tokens < 1:
            raise ValidationError(f"max_tokens must be >= 1, got {self.max_tokens}")

    @property
    def full_prompt(self) -> str:
        return f"{self.system_prompt}\n{self.user_prompt}"


class CompletionBackend(Protocol):
    def complete(self, request: CompletionRequest) -> str: ...


def derive_seed(*parts: object) -> int:
    """Stable 63-bit seed from arbitrary identifying parts."""
    tag = "|".join(str(p) for p in parts)
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def hash_uniform(*parts: object) -> float:
    """Deterministic uniform draw in [0, 1) keyed on the parts."""
    return derive_seed(*parts) / float(1 << 63)


def post_json_with_retry(
    url: str,
    payload: dict,
    *,
    headers: Optional[Mapping[str, str]] = None,
    retry: Optional[RetryPolicy] = None,
    session: Optional[Any] = None,
    sleep: Callable[[float], None] = time.sleep,
) -> dict:
    """POST JSON with retries on transient failures (timeouts, 429, 5xx).

    Raises TransportError / ProtocolError / RejectionError; the three are
    kept distinct so callers can carry them to the trace.
    """
    retry = retry or RetryPolicy()
    session = session or requests
    last_error: Optional[str] = None
    last_status: Optional[int] = None
    for attempt in range(retry.max_attempts):
        if attempt:
            sleep(retry.backoff_for(attempt - 1))
        try:
            response = session.post(url, json=payload, headers=dict(headers or {}), timeout=retry.timeout_seconds)
        except requests.exceptions.RequestException as exc:
            last_error = f"{type(exc).__name__}: {exc}"
            continue
        status = response.status_code
        if status in _RETRYABLE_STATUS or 500 <= status < 600:
            last_error, last_status = f"HTTP {status}", status
            continue
        if 400 <= status < 500:
            raise RejectionError(f"request to {url} rejected with HTTP {status}", status=status)
        try:
            body = response.json()
        except ValueError as exc:
            raise ProtocolError(f"non-JSON response from {url}: {exc}") from exc
        if not isinstance(body, dict):
            raise ProtocolError(f"expected a JSON object from {url}, got {type(body).__name__}")
        return body
    raise TransportError(
        f"request to {url} failed after {retry.max_attempts} attempts ({last_error})",
        status=last_status,
    )


class RemoteOpenAIBackend:
    """Chat-completions client for any OpenAI-compatible server.

    Bearer token comes from the AMR_API_KEY environment variable unless
    given explicitly.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        *,
        api_key: Optional[str] = None,
        retry: Optional[RetryPolicy] = None,
        session: Optional[Any] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.retry = retry or RetryPolicy()
        self._session = session
        self._sleep = sleep

    def complete(self, request: CompletionRequest) -> str:
        payload: dict[str, Any] = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.seed is not None:
            payload["seed"] = request.seed
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = post_json_with_retry(
            f"{self.base_url}/v1/chat/completions",
            payload,
            headers=headers,
            retry=self.retry,
            session=self._session,
            sleep=self._sleep,
        )
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed chat-completions response: {body!r}") from exc
        if not isinstance(text, str) or not text:
            raise ProtocolError("chat-completions response carried empty content")
        return text


@dataclass(frozen=True)
class ScriptedEntry:
    prompt_contains: str
    temperature: float
    response: str


class ScriptedBackend:
    """Fixture-driven mock: first entry whose ``prompt_contains`` appears
    in the combined prompt at the matching temperature wins."""

    def __init__(self, entries: Sequence[ScriptedEntry]):
        self.entries = tuple(entries)

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(raw, list):
            raise ValidationError(f"scripted fixture {path} must be a JSON list")
        entries = []
        for i, item in enumerate(raw):
            try:
                entries.append(
                    ScriptedEntry(
                        prompt_contains=item["prompt_contains"],
                        temperature=float(item["temperature"]),
                        response=item["response"],
                    )
                )
            except (KeyError, TypeError) as exc:
                raise ValidationError(f"scripted fixture {path} entry {i} is malformed") from exc
        return cls(entries)

    def complete(self, request: CompletionRequest) -> str:
        prompt = request.full_prompt
        for entry in self.entries:
            if entry.prompt_contains in prompt and abs(entry.temperature - request.temperature) <= 1e-12:
                return entry.response
        raise ProtocolError(
            f"no scripted entry matches temperature {request.temperature} for prompt: {prompt[:120]!r}..."
        )


@dataclass(frozen=True)
class SyntheticExpertConfig:
    """Behaviour of one simulated expert.

    ``accuracy`` is the per-draw probability of emitting the gold
    answer; misses emit gold + ``wrong_offset`` so that different
    experts disagree on distinct wrong answers.  Refinement requests
    (prompts embedding a prior solution) preserve the embedded answer
    by default, which models a faithful rewrite; set
    ``preserve_refinements=False`` to redraw instead.
    """

    style: ExpertStyle
    accuracy: float
    wrong_offset: Decimal = Decimal(1)
    preserve_refinements: bool = True

    def __post_init__(self) -> None:
        if not (0.0 <= self.accuracy <= 1.0):
            raise ValidationError(f"accuracy must be in [0,1], got {self.accuracy}")
        if self.wrong_offset == 0:
            raise ValidationError("wrong_offset must be nonzero")


_SOLUTION_TEMPLATE = (
    "Reading the problem again, the quantities combine in one way. "
    "Working through the arithmetic keeps every intermediate value explicit, "
    "and checking the result against the question confirms it.\n#### {answer}"
)

_REFINED_TEMPLATE = (
    "Re-deriving the solution line by line and keeping the conclusion explicit:\n#### {answer}"
)


def synthetic_expert_output(config: SyntheticExpertConfig, problem: Problem, rng_seed: int) -> str:
    """Deterministic templated solution; correct with probability
    ``config.accuracy``, keyed entirely on (config, problem.id, rng_seed)."""
    if problem.gold_answer is None:
        raise ValidationError(f"synthetic expert needs a gold answer for problem {problem.id}")
    draw = hash_uniform(config.style.value, config.accuracy, config.wrong_offset, problem.id, rng_seed)
    if draw < config.accuracy:
        answer = problem.gold_answer.canonical
    else:
        answer = NormalizedAnswer(problem.gold_answer.numeric + config.wrong_offset).canonical
    return _SOLUTION_TEMPLATE.format(answer=answer)


_PROBLEM_ID_RE = re.compile(r"\[problem ([^\]]+)\]")
_EMBEDDED_ANSWER_RE = re.compile(r"####\s*(-?[\d,]+(?:\.\d+)?)")


class SyntheticBackend:
    """Simulation mock wrapping ``synthetic_expert_output``.

    Problems are looked up by the ``[problem <id>]`` tag the simulator
    embeds in its question texts, so the backend stays a pure function
    of the request.
    """

    def __init__(self, config: SyntheticExpertConfig, problems: Mapping[str, Problem], base_seed: int = 0):
        self.config = config
        self.problems = dict(problems)
        self.base_seed = base_seed

    def _problem_for(self, request: CompletionRequest) -> Problem:
        match = _PROBLEM_ID_RE.search(request.user_prompt)
        if not match or match.group(1) not in self.problems:
            raise ProtocolError("synthetic backend could not identify the problem in the prompt")
        return self.problems[match.group(1)]

    def complete(self, request: CompletionRequest) -> str:
        problem = self._problem_for(request)
        embedded = _EMBEDDED_ANSWER_RE.findall(request.user_prompt)
        if embedded and self.config.preserve_refinements:
            # refinement request: faithfully rewrite, keeping the answer
            kept = embedded[-1].replace(",", "")
            return _REFINED_TEMPLATE.format(answer=NormalizedAnswer(kept).canonical)
        seed = request.seed if request.seed is not None else self.base_seed
        return synthetic_expert_output(self.config, problem, seed)


def run_bounded(calls: Sequence[Callable[[], Any]], parallelism: int) -> list[Any]:
    """Run callables with bounded concurrency, returning results (or the
    raised exception) in submission order."""
    results: list[Any] = [None] * len(calls)
    if parallelism <= 1 or len(calls) <= 1:
        for i, call in enumerate(calls):
            try:
                results[i] = call()
            except Exception as exc:  # collected, caller decides
                results[i] = exc
        return results
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=min(parallelism, len(calls))) as pool:
        futures = [pool.submit(call) for call in calls]
        for i, future in enumerate(futures):
            exc = future.exception()
            results[i] = exc if exc is not None else future.result()
    return results
