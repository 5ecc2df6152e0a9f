"""
Command implementations behind ``app.py``.

Each ``cmd_*`` function takes a validated RunManifest, writes its artifacts
to the manifest's output directory and returns a process exit code. Failures
are logged and mapped to exit codes instead of being raised.
"""
import functools
import json
import os
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pydantic
from pydantic import BaseModel, ConfigDict, Field

from common.errors import EXIT_IO, EXIT_OK, EXIT_VALIDATION, AnalysisError, InputFileError
from common.log_utils import TqdmProgressHandler, log_error, log_info, log_step, log_success, log_warn
from mbopt.dataset import MeasurementDataset, load_dataset, load_schema, rmit_schedule
from mbopt.evaluation import discard_warmup, evaluate, pairwise_effect_sizes
from mbopt.optimizer import (
    OptimizationResult,
    OptimizationSettings,
    Strategy,
    minimum_baseline,
    optimize,
    random_baseline,
)
from mbopt.regression import (
    DEFAULT_RELEVANCE,
    detect_changes_across_versions,
    score_against_full,
    summarize_confusions,
)
from mbopt.reporting import (
    read_optimization_result,
    read_result_configs,
    write_change_rate_csv,
    write_comparison_csv,
    write_effect_size_csv,
    write_json,
    write_result_csv,
    write_schedule_jsonl,
)
from mbopt.stability import BootstrapSettings, Estimator, StabilityMetric


class RunManifest(BaseModel):
    """Everything one command invocation needs, after merging config file, environment and flags."""

    model_config = ConfigDict(frozen=True)

    schema_path: Optional[Path] = None
    dataset_paths: List[Path] = []
    metric: StabilityMetric = StabilityMetric.RMAD
    threshold: float = Field(default=0.01, gt=0, lt=1)
    seed: int = 0
    resamples: int = Field(default=10000, ge=1)
    confidence: float = Field(default=0.99, gt=0, lt=1)
    estimator: Optional[Estimator] = None
    warmup_level: Optional[str] = None
    warmup_count: int = Field(default=0, ge=0)
    relevance: float = Field(default=DEFAULT_RELEVANCE, ge=0)
    min_repetitions: int = Field(default=3, ge=2)
    workers: int = Field(default=1, ge=1)
    strategy: Strategy = Strategy.UOPTIME
    output_dir: Path = Path("results")
    error_json: bool = False
    show_progress: bool = True

    def bootstrap_settings(self) -> BootstrapSettings:
        return BootstrapSettings(confidence_level=self.confidence, resamples=self.resamples, seed=self.seed)

    def optimization_settings(self) -> OptimizationSettings:
        return OptimizationSettings(
            metric=self.metric,
            threshold=self.threshold,
            bootstrap=self.bootstrap_settings(),
            min_repetitions=self.min_repetitions,
            workers=self.workers,
        )

    def output_path(self, name: str) -> str:
        return str(self.output_dir / name)


def guarded(command):
    """Turn analyzer failures into exit codes, optionally echoing them as JSON on stdout."""

    @functools.wraps(command)
    def wrapper(manifest: RunManifest, *args, **kwargs) -> int:
        try:
            return command(manifest, *args, **kwargs)
        except AnalysisError as e:
            payload = e.to_dict()
        except pydantic.ValidationError as e:
            payload = {"error": "validation", "type": "ValidationError", "message": str(e), "exit_code": EXIT_VALIDATION}
        except OSError as e:
            payload = {"error": "io", "type": type(e).__name__, "message": str(e), "exit_code": EXIT_IO}
        log_error(f"{command.__name__} failed: {payload['message']}")
        if manifest.error_json:
            print(json.dumps(payload, sort_keys=True))
        return payload["exit_code"]

    return wrapper


def load_manifest_dataset(manifest: RunManifest, path: Path, label: Optional[str] = None) -> MeasurementDataset:
    """Load one dataset with the manifest's schema, discarding the static warmup if configured."""
    if manifest.schema_path is None:
        raise InputFileError("a schema file is required (--schema)")
    if not os.path.exists(path):
        raise InputFileError(f"dataset file not found: {path}")
    document = load_schema(str(manifest.schema_path))
    dataset = load_dataset(
        str(path), document.level_schema(), document.unit, document.value_semantics, label=label
    )
    if manifest.warmup_level is not None:
        dataset = discard_warmup(dataset, manifest.warmup_level, manifest.warmup_count)
        log_info(f"Discarded {manifest.warmup_count} warmup repetitions of '{manifest.warmup_level}'")
    elif manifest.warmup_count:
        log_warn("--warmup-count given without --warmup-level, nothing discarded")
    return dataset


def _version_labels(paths: Sequence[Path]) -> List[str]:
    stems = [p.stem for p in paths]
    if len(set(stems)) == len(stems):
        return stems
    return [str(p) for p in paths]


def read_result_for(manifest: RunManifest, path: Path, dataset: MeasurementDataset) -> OptimizationResult:
    """Read a result file, keeping the metric it was optimized with over the manifest's."""
    result = read_optimization_result(str(path), dataset, manifest.optimization_settings())
    if result.settings.metric is not manifest.metric:
        log_warn(
            f"{path} was optimized with {result.settings.metric.value}, not {manifest.metric.value}; "
            f"scoring with the {result.settings.metric.value} estimator"
        )
    return result


@guarded
def cmd_optimize(manifest: RunManifest) -> int:
    """Choose a configuration per benchmark and write ``optimization.csv`` plus its JSON summary."""
    if len(manifest.dataset_paths) != 1:
        raise InputFileError("optimize needs exactly one dataset file")
    settings = manifest.optimization_settings()

    log_step("1/3", f"Loading {manifest.dataset_paths[0]}")
    dataset = load_manifest_dataset(manifest, manifest.dataset_paths[0])

    log_step("2/3", f"Selecting configurations ({manifest.strategy.value}, {settings.metric.value} <= {settings.threshold})")
    progress = TqdmProgressHandler("Optimizing benchmarks", enabled=manifest.show_progress)
    if manifest.strategy is Strategy.MINIMUM:
        result = minimum_baseline(dataset, settings, progress)
    elif manifest.strategy is Strategy.RANDOM:
        result = random_baseline(dataset, settings, manifest.seed, progress)
    else:
        result = optimize(dataset, settings, progress)
    for benchmark in result.not_reduced:
        log_warn(f"{benchmark} is not stable below the threshold, keeping {result.e_max}")

    log_step("3/3", "Writing results")
    write_result_csv(result, manifest.output_path("optimization.csv"))
    write_json({**result.summary(), "dataset": dataset.label}, manifest.output_path("optimization_summary.json"))
    log_success(
        f"{len(result.benchmarks)} benchmarks: {result.total_full_s:g} s -> {result.total_min_s:g} s "
        f"({result.savings_fraction:.2%} saved)"
    )
    return EXIT_OK


@guarded
def cmd_evaluate(manifest: RunManifest, result_path: Path) -> int:
    """Change rates and savings of a result file against the full configuration."""
    if len(manifest.dataset_paths) != 1:
        raise InputFileError("evaluate needs exactly one dataset file")
    dataset = load_manifest_dataset(manifest, manifest.dataset_paths[0])
    result = read_result_for(manifest, result_path, dataset)
    report = evaluate(dataset, result, manifest.estimator)

    write_change_rate_csv(report, manifest.output_path("change_rates.csv"))
    write_json({**report.summary(), "result": str(result_path)}, manifest.output_path("evaluation_summary.json"))
    fractions = ", ".join(f"<{t:.0%}: {f:.1%}" for t, f in report.fractions.items())
    log_success(f"Change rates {fractions}; {report.savings_fraction:.2%} of measurement time saved")
    return EXIT_OK


@guarded
def cmd_compare(
    manifest: RunManifest, version_paths: Sequence[Path], configs_path: Optional[Path] = None, ground_truth: bool = False
) -> int:
    """Detect changes between successive versions, optionally scoring reduced configurations against full ones."""
    if len(version_paths) < 2:
        raise InputFileError("compare needs at least two version files")
    labels = _version_labels(version_paths)
    versions = [load_manifest_dataset(manifest, path, label) for path, label in zip(version_paths, labels)]
    configs = read_result_configs(str(configs_path)) if configs_path is not None else None
    if ground_truth and configs is None:
        log_warn("--ground-truth without --configs compares the full configuration with itself")
    settings = manifest.bootstrap_settings()
    estimator = manifest.estimator or Estimator.MEDIAN

    reports = detect_changes_across_versions(versions, configs, estimator, settings, manifest.relevance)
    full_reports = (
        detect_changes_across_versions(versions, None, estimator, settings, manifest.relevance) if ground_truth else []
    )

    pairs: List[Dict[str, object]] = []
    confusions = []
    for index, report in enumerate(reports):
        write_comparison_csv(report, manifest.output_path(f"comparison_{report.label_v1}_vs_{report.label_v2}.csv"))
        pair = {
            "v1": report.label_v1,
            "v2": report.label_v2,
            "compared": len(report),
            "changed": len(report.changed),
            "relevant": len(report.relevant),
            "skipped": list(report.skipped),
        }
        if ground_truth:
            confusion = score_against_full(full_reports[index], report)
            confusions.append(confusion)
            pair["confusion"] = confusion.to_dict()
        pairs.append(pair)
        log_info(f"{report.label_v1} -> {report.label_v2}: {len(report.relevant)} relevant changes")

    summary: Dict[str, object] = {
        "estimator": Estimator(estimator).value,
        "relevance": manifest.relevance,
        "configs": str(configs_path) if configs_path is not None else None,
        "pairs": pairs,
    }
    write_json(summary, manifest.output_path("comparison_summary.json"))
    if ground_truth:
        write_json(
            {"pairs": [c.to_dict() for c in confusions], "aggregate": summarize_confusions(confusions)},
            manifest.output_path("confusion_summary.json"),
        )
    log_success(f"Compared {len(versions)} versions")
    return EXIT_OK


@guarded
def cmd_rmit_plan(manifest: RunManifest, benchmarks: Sequence[str], iterations: int, suite_runs: int) -> int:
    """Write a seeded RMIT schedule as JSON lines, one suite run per line."""
    schedule = rmit_schedule(list(benchmarks), iterations, suite_runs, manifest.seed)
    write_schedule_jsonl(schedule, manifest.output_path("rmit_plan.jsonl"))
    log_success(f"Planned {suite_runs} suite runs of {len(benchmarks) * iterations} slots")
    return EXIT_OK


@guarded
def cmd_effect_sizes(manifest: RunManifest, result_paths: Sequence[Path]) -> int:
    """Pairwise Cliff's delta between the change-rate distributions of several results."""
    if len(manifest.dataset_paths) != 1:
        raise InputFileError("effect-sizes needs exactly one dataset file")
    if len(result_paths) < 2:
        raise InputFileError("effect-sizes needs at least two result files")
    dataset = load_manifest_dataset(manifest, manifest.dataset_paths[0])
    reports = {}
    for label, path in zip(_version_labels(result_paths), result_paths):
        result = read_result_for(manifest, path, dataset)
        reports[label] = evaluate(dataset, result, manifest.estimator)
    effect_sizes = pairwise_effect_sizes(reports)
    write_effect_size_csv(effect_sizes, manifest.output_path("effect_sizes.csv"))
    for (left, right), size in effect_sizes.items():
        log_info(f"{left} vs {right}: delta={size.delta:+.3f} ({size.category.value})")
    return EXIT_OK
