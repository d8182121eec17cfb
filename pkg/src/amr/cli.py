"""Command-line entry point: solve a single question, evaluate a JSONL
dataset, run the policy simulation, or sweep gold-difficulty thresholds.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Optional

from . import evalharness, pipeline
from .backends import RemoteOpenAIBackend, ScriptedBackend, SyntheticBackend, SyntheticExpertConfig
from .config import (
    PipelineConfig,
    load_config_file,
    pipeline_config_from_dict,
    simulation_config_from_dict,
)
from .core import AmrError, ExpertStyle, NormalizedAnswer, Problem, ValidationError
from .experts import build_profiles
from .router import FeatureBaselineEstimator, FeatureCoefficients, RemoteDifficultyEstimator
from .verifier import ConstantVerifier, NoisyOracleVerifier, OracleVerifier, RemoteVerifier

__all__ = ["main", "entrypoint"]

USAGE_ERROR = 1
RUNTIME_ERROR = 2


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems with exit code 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_help(sys.stderr)
        self.exit(USAGE_ERROR, f"\nerror: {message}\n")


def _build_expert_backend(spec: dict[str, Any], config: PipelineConfig, catalog: dict[str, Problem], style: ExpertStyle):
    kind = spec.get("kind", "openai")
    if kind == "openai":
        return RemoteOpenAIBackend(
            base_url=spec.get("base_url", "http://localhost:8000"),
            model=spec.get("model", "local-expert"),
            api_key=spec.get("api_key"),
            retry=config.retry,
        )
    if kind == "scripted":
        return ScriptedBackend.from_file(spec["fixture"])
    if kind == "synthetic":
        accuracies = spec.get("accuracies", {})
        return SyntheticBackend(
            SyntheticExpertConfig(style=style, accuracy=float(accuracies.get(style.value, 1.0))),
            catalog,
            base_seed=config.seed,
        )
    raise ValidationError(f"unknown expert backend kind: {kind!r}")


def _build_verifier(spec: dict[str, Any], config: PipelineConfig):
    kind = spec.get("kind", "constant")
    if kind == "constant":
        return ConstantVerifier(float(spec.get("value", 0.5)))
    if kind == "oracle":
        return OracleVerifier()
    if kind == "noisy_oracle":
        return NoisyOracleVerifier(float(spec.get("flip_probability", 0.0)), seed=config.seed)
    if kind == "remote":
        return RemoteVerifier(spec["base_url"], retry=config.retry)
    raise ValidationError(f"unknown verifier kind: {kind!r}")


def _build_estimator(spec: dict[str, Any], config: PipelineConfig):
    kind = spec.get("kind", "feature_baseline")
    if kind == "feature_baseline":
        coeffs = spec.get("coefficients")
        return FeatureBaselineEstimator(FeatureCoefficients(**coeffs) if coeffs else None)
    if kind == "remote":
        return RemoteDifficultyEstimator(spec["url"], retry=config.retry)
    raise ValidationError(f"unknown estimator kind: {kind!r}")


def _wire(raw_config: dict[str, Any], seed: Optional[int], problems: list[Problem]):
    """Build (config, estimator, profiles, verifier) from a parsed config
    document; ``seed`` overrides the config's seed when given."""
    config = pipeline_config_from_dict(raw_config)
    if seed is not None:
        import dataclasses

        config = dataclasses.replace(config, seed=seed)
    backends_spec = raw_config.get("backends", {})
    catalog = {p.id: p for p in problems}
    expert_spec = backends_spec.get("experts", {})
    expert_backends = {
        style: _build_expert_backend(expert_spec, config, catalog, style) for style in ExpertStyle
    }
    profiles = build_profiles(expert_backends)
    verifier = _build_verifier(backends_spec.get("verifier", {}), config)
    estimator = _build_estimator(backends_spec.get("estimator", {}), config)
    return config, estimator, profiles, verifier


def _load_raw_config(path: Optional[str]) -> dict[str, Any]:
    return load_config_file(path) if path else {}


def _cmd_solve(args: argparse.Namespace) -> int:
    raw = _load_raw_config(args.config)
    problem = Problem(id="cli", question=args.question)
    config, estimator, profiles, verifier = _wire(raw, args.seed, [problem])
    result = pipeline.solve(
        problem, estimator=estimator, profiles=profiles, verifier=verifier, config=config
    )
    print(json.dumps(result.to_dict(), indent=2))
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    raw = _load_raw_config(args.config)
    config = pipeline_config_from_dict(raw)
    problems = evalharness.load_dataset(
        args.dataset,
        gold_difficulty_threshold=config.gold_difficulty_threshold,
        limit=args.limit,
    )
    config, estimator, profiles, verifier = _wire(raw, args.seed, problems)
    results = pipeline.run_problems(
        problems, estimator=estimator, profiles=profiles, verifier=verifier, config=config
    )
    report = evalharness.evaluate_run(problems, results)
    Path(args.out).write_text(evalharness.render_report(report, "json"), encoding="utf-8")
    print(evalharness.render_report(report, "table"), end="")
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    raw = _load_raw_config(args.config)
    sim_config = simulation_config_from_dict(raw.get("simulation", {}), default_seed=args.seed or 0)
    report = evalharness.simulate(sim_config)
    Path(args.out).write_text(report.to_json(), encoding="utf-8")
    rows = [report.amr, report.plurality, *report.per_expert]
    width = max(len(r.label) for r in rows)
    for row in rows:
        print(f"{row.label.ljust(width)}  {row.correct:>6} / {row.total}  ({row.accuracy * 100:.2f}%)")
    return 0


def _cmd_calibrate(args: argparse.Namespace) -> int:
    problems = evalharness.load_dataset(args.dataset)
    print("threshold  easy  hard")
    for threshold, easy, hard in evalharness.calibrate_gold_difficulty(problems):
        print(f"{threshold:>9}  {easy:>4}  {hard:>4}")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="amr", description="Difficulty-routed multi-expert math solving pipeline")
    parser.add_argument("--seed", type=int, default=0, help="master seed for all randomness (default 0)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve a single question and print the selection JSON")
    p_solve.add_argument("--question", required=True)
    p_solve.add_argument("--config", default=None, help="path to a JSON config file")
    p_solve.set_defaults(func=_cmd_solve)

    p_eval = sub.add_parser("eval", help="evaluate a JSONL dataset and write a report")
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--out", required=True, help="path for the JSON report")
    p_eval.add_argument("--limit", type=int, default=None)
    p_eval.add_argument("--config", default=None)
    p_eval.set_defaults(func=_cmd_eval)

    p_sim = sub.add_parser("simulate", help="run the model-free policy simulation")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=_cmd_simulate)

    p_cal = sub.add_parser("calibrate-difficulty", help="sweep gold-difficulty thresholds over a dataset")
    p_cal.add_argument("--dataset", required=True)
    p_cal.set_defaults(func=_cmd_calibrate)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except AmrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
