import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import pydantic

from common.config_manager import ConfigManager
from common.errors import EXIT_VALIDATION, AnalysisError
from common.log_utils import log_error, setup_logging
from commands import (
    RunManifest,
    cmd_compare,
    cmd_effect_sizes,
    cmd_evaluate,
    cmd_optimize,
    cmd_rmit_plan,
)
from mbopt.optimizer import Strategy
from mbopt.stability import Estimator, StabilityMetric

# Setup paths
SCRIPT_DIR = os.path.dirname(os.path.abspath(__file__))
PROJECT_ROOT = os.path.dirname(os.path.dirname(SCRIPT_DIR))

# Manifest fields that may come from config.json when no flag is given
CONFIG_FIELDS = ("metric", "threshold", "seed", "resamples", "confidence", "min_repetitions", "relevance", "workers", "output_dir")


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Path to config file (default: config.json in the project root)")
    common.add_argument("--schema", type=Path, help="Schema sidecar JSON describing the levels")
    common.add_argument("--metric", choices=[m.value for m in StabilityMetric],
                        help="Stability metric (default from config: rmad)")
    common.add_argument("--threshold", type=float, help="Stability threshold ts (default 0.01)")
    common.add_argument("--seed", type=int, help="Global seed (fallback: UOPTIME_SEED, then config)")
    common.add_argument("--resamples", type=int, help="Bootstrap resamples (default 10000)")
    common.add_argument("--confidence", type=float, help="Confidence level of bootstrap intervals (default 0.99)")
    common.add_argument("--estimator", choices=[e.value for e in Estimator],
                        help="Score estimator (default: the metric's own; median for compare)")
    common.add_argument("--warmup-level", help="Level whose first repetitions form a static warmup phase")
    common.add_argument("--warmup-count", type=int, default=0, help="Warmup repetitions to discard (default 0)")
    common.add_argument("--relevance", type=float, help="Minimum relative change that counts as relevant (default 0.03)")
    common.add_argument("--min-repetitions", type=int, help="Fewest data points a candidate may have (default 3)")
    common.add_argument("--workers", type=int, help="Threads for per-benchmark work (default 1)")
    common.add_argument("--output-dir", help="Directory for result files")
    common.add_argument("--error-json", action="store_true", help="Print failures as JSON on stdout")
    common.add_argument("--quiet", action="store_true", help="Suppress progress bars")
    common.add_argument("--verbose", action="store_true", help="Debug logging")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(
        description="Find the shortest stable execution configuration per microbenchmark, "
                    "evaluate its accuracy and detect performance changes between versions."
    )
    commands = parser.add_subparsers(dest="command", required=True)

    optimize = commands.add_parser("optimize", parents=[common], help="Choose a configuration per benchmark")
    optimize.add_argument("dataset", type=Path, help="Measurement CSV of the full configuration")
    optimize.add_argument("--strategy", choices=[s.value for s in Strategy], default=Strategy.UOPTIME.value,
                          help="uoptime (stability search), minimum or random baseline")

    evaluate = commands.add_parser("evaluate", parents=[common], help="Change rates and savings of a result file")
    evaluate.add_argument("dataset", type=Path, help="Measurement CSV of the full configuration")
    evaluate.add_argument("result", type=Path, help="optimization.csv written by optimize")

    compare = commands.add_parser("compare", parents=[common], help="Detect changes between versions")
    compare.add_argument("versions", type=Path, nargs="+", help="Measurement CSVs of successive versions")
    compare.add_argument("--configs", type=Path, help="optimization.csv whose configurations are compared")
    compare.add_argument("--ground-truth", action="store_true",
                         help="Also compare full configurations and score the reduced ones against them")

    plan = commands.add_parser("rmit-plan", parents=[common], help="Write a seeded RMIT schedule")
    plan.add_argument("--benchmarks", nargs="+", default=[], help="Benchmark names")
    plan.add_argument("--iterations", type=int, required=True, help="Iterations per suite run")
    plan.add_argument("--suite-runs", type=int, required=True, help="Number of suite runs")

    effect = commands.add_parser("effect-sizes", parents=[common], help="Cliff's delta between result files")
    effect.add_argument("dataset", type=Path, help="Measurement CSV of the full configuration")
    effect.add_argument("results", type=Path, nargs="+", help="Result CSVs to compare pairwise")
    return parser


def build_manifest(args: argparse.Namespace, config: Dict[str, Any]) -> RunManifest:
    """Flags win over config.json (which already carries the UOPTIME_SEED override)."""
    analysis = config["analysis"]
    values = {name: analysis[name] for name in CONFIG_FIELDS if name in analysis}
    for name in CONFIG_FIELDS:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    dataset_paths = getattr(args, "versions", None) or ([args.dataset] if getattr(args, "dataset", None) else [])
    return RunManifest(
        schema_path=args.schema,
        dataset_paths=dataset_paths,
        estimator=args.estimator,
        warmup_level=args.warmup_level,
        warmup_count=args.warmup_count,
        strategy=getattr(args, "strategy", Strategy.UOPTIME.value),
        error_json=args.error_json,
        show_progress=not args.quiet,
        **values,
    )


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(verbose=args.verbose)

    try:
        config = ConfigManager(PROJECT_ROOT, args.config).get_config()
        manifest = build_manifest(args, config)
    except AnalysisError as e:
        payload = e.to_dict()
    except pydantic.ValidationError as e:
        payload = {"error": "validation", "type": "ValidationError", "message": str(e), "exit_code": EXIT_VALIDATION}
    else:
        payload = None
    if payload is not None:
        log_error(f"Invalid settings: {payload['message']}")
        if args.error_json:
            print(json.dumps(payload, sort_keys=True))
        return payload["exit_code"]

    if args.command == "optimize":
        return cmd_optimize(manifest)
    if args.command == "evaluate":
        return cmd_evaluate(manifest, args.result)
    if args.command == "compare":
        return cmd_compare(manifest, args.versions, args.configs, args.ground_truth)
    if args.command == "rmit-plan":
        return cmd_rmit_plan(manifest, args.benchmarks, args.iterations, args.suite_runs)
    return cmd_effect_sizes(manifest, args.results)


if __name__ == "__main__":
    sys.exit(main())
