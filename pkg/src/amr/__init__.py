"""Adaptive multi-expert reasoning pipeline: difficulty-aware routing,
stylistically specialized generation with correction and finalization
passes, and verifier-weighted clustering aggregation."""

from .core import (
    AmrError,
    Candidate,
    Cluster,
    Difficulty,
    DifficultyDistribution,
    ExpertStyle,
    GenerationPass,
    NormalizedAnswer,
    Problem,
    RegimeBand,
    RunReport,
    SamplingRegime,
    ScoredCandidate,
    ScoringConstants,
    SelectionResult,
    UncertaintyScore,
    ValidationError,
)
from .config import PipelineConfig, RouterConfig, SimulationConfig
from .pipeline import solve, run_problems

__version__ = "0.1.0"

__all__ = [
    "AmrError",
    "Candidate",
    "Cluster",
    "Difficulty",
    "DifficultyDistribution",
    "ExpertStyle",
    "GenerationPass",
    "NormalizedAnswer",
    "PipelineConfig",
    "Problem",
    "RegimeBand",
    "RouterConfig",
    "RunReport",
    "SamplingRegime",
    "ScoredCandidate",
    "ScoringConstants",
    "SelectionResult",
    "SimulationConfig",
    "UncertaintyScore",
    "ValidationError",
    "run_problems",
    "solve",
]
