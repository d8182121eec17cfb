"""Run configuration dataclasses and the JSON config-file loader.

Every tuned constant of the pipeline is a named key here with its
shipped default; a config file only needs the keys it overrides.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .core import DEFAULT_SCORING, ScoringConstants, ValidationError

__all__ = [
    "RouterConfig",
    "RetryPolicy",
    "GenerationConfig",
    "PipelineConfig",
    "SimulationConfig",
    "load_config_file",
]


@dataclass(frozen=True)
class RouterConfig:
    """Uncertainty band thresholds and the medium-regime temperature."""

    low_threshold: float = 0.35
    high_threshold: float = 0.55
    medium_temperature: float = 0.15

    def __post_init__(self) -> None:
        if not (0.0 < self.low_threshold < self.high_threshold < 1.0):
            raise ValidationError(
                f"thresholds must satisfy 0 < low < high < 1, got {self.low_threshold}, {self.high_threshold}"
            )
        if self.medium_temperature < 0.0:
            raise ValidationError("medium_temperature must be >= 0")


@dataclass(frozen=True)
class RetryPolicy:
    """Transport retry behaviour shared by all remote backends."""

    max_attempts: int = 3
    backoff_seconds: tuple[float, ...] = (0.5, 1.0, 2.0)
    timeout_seconds: float = 30.0

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValidationError("max_attempts must be >= 1")
        if any(b < 0 for b in self.backoff_seconds):
            raise ValidationError("backoff_seconds must be non-negative")

    def backoff_for(self, retry_index: int) -> float:
        if not self.backoff_seconds:
            return 0.0
        return self.backoff_seconds[min(retry_index, len(self.backoff_seconds) - 1)]


@dataclass(frozen=True)
class GenerationConfig:
    correction_top_k: int = 2
    max_tokens_initial: int = 512
    max_tokens_correction: int = 512
    max_tokens_finalizer: int = 256

    def __post_init__(self) -> None:
        if self.correction_top_k < 1:
            raise ValidationError("correction_top_k must be >= 1")
        for name in ("max_tokens_initial", "max_tokens_correction", "max_tokens_finalizer"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")


@dataclass(frozen=True)
class PipelineConfig:
    router: RouterConfig = field(default_factory=RouterConfig)
    scoring: ScoringConstants = field(default_factory=lambda: DEFAULT_SCORING)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    verifier_fallback_score: float = 0.5
    backend_parallelism: int = 6
    problem_parallelism: int = 4
    gold_difficulty_threshold: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 <= self.verifier_fallback_score <= 1.0):
            raise ValidationError("verifier_fallback_score must be in [0,1]")
        if self.backend_parallelism < 1 or self.problem_parallelism < 1:
            raise ValidationError("parallelism limits must be >= 1")
        if self.gold_difficulty_threshold < 1:
            raise ValidationError("gold_difficulty_threshold must be >= 1")


@dataclass(frozen=True)
class SimulationConfig:
    """Parameters of the model-free policy simulation."""

    expert_accuracies: tuple[float, float, float] = (0.6, 0.55, 0.65)
    verifier_flip_probability: float = 0.0
    n_problems: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.expert_accuracies) != 3:
            raise ValidationError("expert_accuracies needs one value per expert style")
        if any(not (0.0 <= a <= 1.0) for a in self.expert_accuracies):
            raise ValidationError("expert accuracies must be in [0,1]")
        if not (0.0 <= self.verifier_flip_probability <= 1.0):
            raise ValidationError("verifier_flip_probability must be in [0,1]")
        if self.n_problems < 1:
            raise ValidationError("n_problems must be >= 1")


def _build(cls: type, data: dict[str, Any], path: str) -> Any:
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ValidationError(f"unknown config key(s) under {path}: {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    for name, value in data.items():
        if isinstance(value, list):
            value = tuple(value)
        kwargs[name] = value
    return cls(**kwargs)


def pipeline_config_from_dict(data: dict[str, Any]) -> PipelineConfig:
    """Build a PipelineConfig from a parsed config document.

    The ``backends`` section (expert/verifier/estimator wiring) is not
    consumed here; the CLI interprets it when it constructs backends.
    """

    data = dict(data)
    data.pop("backends", None)
    data.pop("simulation", None)
    sections = {
        "router": RouterConfig,
        "scoring": ScoringConstants,
        "generation": GenerationConfig,
        "retry": RetryPolicy,
    }
    kwargs: dict[str, Any] = {}
    for key, cls in sections.items():
        if key in data:
            kwargs[key] = _build(cls, data.pop(key), key)
    top = _build(PipelineConfig, data, "<root>")
    return dataclasses.replace(top, **kwargs) if kwargs else top


def simulation_config_from_dict(data: dict[str, Any], default_seed: int = 0) -> SimulationConfig:
    data = dict(data)
    data.setdefault("seed", default_seed)
    accuracies = data.get("expert_accuracies")
    if isinstance(accuracies, dict):
        order = ("algebraic", "intuitive", "stepbystep")
        missing = [k for k in order if k not in accuracies]
        if missing:
            raise ValidationError(f"expert_accuracies missing styles: {missing}")
        data["expert_accuracies"] = tuple(accuracies[k] for k in order)
    return _build(SimulationConfig, data, "simulation")


def load_config_file(path: str | Path) -> dict[str, Any]:
    """Read a JSON config document; returns the raw dict."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"config file {path} must contain a JSON object")
    return data
