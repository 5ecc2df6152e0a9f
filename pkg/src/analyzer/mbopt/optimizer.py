"""
Search for the shortest stable execution configuration of every benchmark.

For each benchmark all configurations up to the full one are simulated from
the full campaign's data. Configurations below the repetition floor are
skipped; of the rest, those whose stability metric is within the threshold
compete on duration, then on stability, then lexicographically. The minimum
and random strategies serve as baselines that ignore stability.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from types import MappingProxyType
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from common.errors import DataValidationError
from .dataset import (
    ExecutionConfiguration,
    MeasurementDataset,
    execution_duration,
    find_all_smaller_configurations,
    get_measurements,
    warmup_duration,
)
from .stability import (
    BootstrapSettings,
    ConfidenceInterval,
    MIN_BOOTSTRAP_VALUES,
    StabilityMetric,
    derive_seed,
    point_estimate,
    score_interval,
    stability,
)

logger = logging.getLogger(__name__)


class Strategy(str, Enum):
    UOPTIME = "uoptime"
    MINIMUM = "minimum"
    RANDOM = "random"


class SelectionFlag(str, Enum):
    STABLE = "stable"
    NOT_REDUCED = "not_reduced"
    BASELINE = "baseline"


class OptimizationSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    metric: StabilityMetric = StabilityMetric.RMAD
    threshold: float = Field(default=0.01, gt=0, lt=1)
    bootstrap: BootstrapSettings = BootstrapSettings()
    min_repetitions: int = Field(default=3, ge=2)
    workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check_floor(self) -> "OptimizationSettings":
        if self.min_repetitions < self.metric.min_values:
            raise ValueError(
                f"{self.metric.value} needs at least {self.metric.min_values} repetitions per candidate"
            )
        return self


@dataclass(frozen=True, eq=False)
class CandidateEvaluation:
    """One simulated configuration of one benchmark."""

    benchmark: str
    configuration: ExecutionConfiguration
    measurements: np.ndarray
    duration_s: float
    stability: float

    @property
    def sort_key(self) -> Tuple[float, float, Tuple[int, ...]]:
        return (self.duration_s, self.stability, self.configuration.counts)


@dataclass(frozen=True)
class BenchmarkOptimum:
    benchmark: str
    configuration: ExecutionConfiguration
    stability: Optional[float]
    score: float
    ci: Optional[ConfidenceInterval]
    duration_s: float
    full_duration_s: float
    flag: SelectionFlag
    warmup_s: float = 0.0
    full_warmup_s: float = 0.0

    @property
    def saved_s(self) -> float:
        return self.full_duration_s - self.duration_s


@dataclass(frozen=True, eq=False)
class OptimizationResult:
    """Chosen configuration per benchmark, plus suite totals."""

    strategy: Strategy
    settings: OptimizationSettings
    e_max: ExecutionConfiguration
    optima: Mapping[str, BenchmarkOptimum]

    def __post_init__(self):
        object.__setattr__(self, "optima", MappingProxyType(dict(sorted(self.optima.items()))))

    @property
    def benchmarks(self) -> Tuple[str, ...]:
        return tuple(self.optima)

    def __getitem__(self, benchmark: str) -> BenchmarkOptimum:
        return self.optima[benchmark]

    def configurations(self) -> Dict[str, ExecutionConfiguration]:
        return {b: optimum.configuration for b, optimum in self.optima.items()}

    @property
    def not_reduced(self) -> List[str]:
        return [b for b, o in self.optima.items() if o.flag is SelectionFlag.NOT_REDUCED]

    @property
    def total_full_s(self) -> float:
        return sum(o.full_duration_s for o in self.optima.values())

    @property
    def total_min_s(self) -> float:
        return sum(o.duration_s for o in self.optima.values())

    @property
    def total_saved_s(self) -> float:
        return self.total_full_s - self.total_min_s

    @property
    def savings_fraction(self) -> float:
        return self.total_saved_s / self.total_full_s if self.total_full_s else 0.0

    @property
    def total_warmup_full_s(self) -> float:
        return sum(o.full_warmup_s for o in self.optima.values())

    @property
    def total_warmup_min_s(self) -> float:
        return sum(o.warmup_s for o in self.optima.values())

    @property
    def overall_savings_fraction(self) -> float:
        """Savings over warmup and measurement phase together."""
        full = self.total_full_s + self.total_warmup_full_s
        chosen = self.total_min_s + self.total_warmup_min_s
        return (full - chosen) / full if full else 0.0

    def summary(self) -> Dict[str, object]:
        return {
            "strategy": self.strategy.value,
            "settings": self.settings.model_dump(mode="json"),
            "e_max": str(self.e_max),
            "benchmarks": len(self.optima),
            "not_reduced": len(self.not_reduced),
            "total_full_s": self.total_full_s,
            "total_min_s": self.total_min_s,
            "total_saved_s": self.total_saved_s,
            "savings_fraction": self.savings_fraction,
            "total_warmup_full_s": self.total_warmup_full_s,
            "total_warmup_min_s": self.total_warmup_min_s,
            "overall_savings_fraction": self.overall_savings_fraction,
        }


def valid_configurations(dataset: MeasurementDataset, settings: OptimizationSettings) -> List[ExecutionConfiguration]:
    """Candidate configurations meeting the repetition floor, shortest first."""
    configurations = [
        e for e in find_all_smaller_configurations(dataset.e_max, dataset.schema)
        if e.repetitions >= settings.min_repetitions
    ]
    if not configurations:
        raise DataValidationError(
            f"full configuration {dataset.e_max} has fewer than {settings.min_repetitions} repetitions"
        )
    return configurations


def evaluate_candidates(
    dataset: MeasurementDataset,
    benchmark: str,
    settings: OptimizationSettings,
    configurations: Optional[Sequence[ExecutionConfiguration]] = None,
) -> List[CandidateEvaluation]:
    if configurations is None:
        configurations = valid_configurations(dataset, settings)
    candidates = []
    for e in configurations:
        measurements = get_measurements(e, dataset, benchmark)
        candidates.append(CandidateEvaluation(
            benchmark=benchmark,
            configuration=e,
            measurements=measurements,
            duration_s=execution_duration(e, dataset.schema),
            stability=stability(measurements, settings.metric, settings.bootstrap.derive(benchmark, e)),
        ))
    return candidates


def select_configuration(candidates: Sequence[CandidateEvaluation], threshold: float) -> Optional[CandidateEvaluation]:
    """Shortest stable candidate; ties go to lower stability, then the smaller tuple."""
    stable = [c for c in candidates if c.stability <= threshold]
    if not stable:
        return None
    return min(stable, key=lambda c: c.sort_key)


def draw_configuration(configurations: Sequence[ExecutionConfiguration], rng: np.random.Generator) -> ExecutionConfiguration:
    return configurations[int(rng.integers(len(configurations)))]


def _build_optimum(
    dataset: MeasurementDataset,
    benchmark: str,
    configuration: ExecutionConfiguration,
    stability_value: Optional[float],
    flag: SelectionFlag,
    settings: OptimizationSettings,
) -> BenchmarkOptimum:
    values = get_measurements(configuration, dataset, benchmark)
    ci = None
    if values.size >= MIN_BOOTSTRAP_VALUES:
        ci = score_interval(values, settings.metric, settings.bootstrap.derive(benchmark, configuration, "score"))
    return BenchmarkOptimum(
        benchmark=benchmark,
        configuration=configuration,
        stability=stability_value,
        score=point_estimate(values, settings.metric.estimator),
        ci=ci,
        duration_s=execution_duration(configuration, dataset.schema),
        full_duration_s=execution_duration(dataset.e_max, dataset.schema),
        flag=flag,
        warmup_s=warmup_duration(configuration, dataset),
        full_warmup_s=warmup_duration(dataset.e_max, dataset),
    )


def _baseline_optimum(
    dataset: MeasurementDataset, benchmark: str, configuration: ExecutionConfiguration, settings: OptimizationSettings
) -> BenchmarkOptimum:
    values = get_measurements(configuration, dataset, benchmark)
    stability_value = None
    if values.size >= settings.metric.min_values:
        stability_value = stability(values, settings.metric, settings.bootstrap.derive(benchmark, configuration))
    return _build_optimum(dataset, benchmark, configuration, stability_value, SelectionFlag.BASELINE, settings)


def _require_benchmarks(dataset: MeasurementDataset) -> Tuple[str, ...]:
    if not dataset.benchmarks:
        raise DataValidationError(f"dataset {dataset.label} has no benchmarks")
    return dataset.benchmarks


def _map_benchmarks(
    benchmarks: Sequence[str],
    task: Callable[[str], BenchmarkOptimum],
    workers: int,
    progress_handler=None,
) -> Dict[str, BenchmarkOptimum]:
    """Run task per benchmark; results come back in benchmark order whatever the worker count."""

    def run(update) -> Dict[str, BenchmarkOptimum]:
        results: Dict[str, BenchmarkOptimum] = {}
        if workers == 1:
            for benchmark in benchmarks:
                results[benchmark] = task(benchmark)
                update(1)
            return results
        with ThreadPoolExecutor(max_workers=workers) as executor:
            for benchmark, optimum in zip(benchmarks, executor.map(task, benchmarks)):
                results[benchmark] = optimum
                update(1)
        return results

    if progress_handler:
        with progress_handler as progress:
            progress.set_total(len(benchmarks))
            return run(progress.update)
    return run(lambda n: None)


def optimize(dataset: MeasurementDataset, settings: OptimizationSettings, progress_handler=None) -> OptimizationResult:
    """
    Find the shortest stable configuration for every benchmark.

    Benchmarks without any stable configuration keep the full configuration
    and are flagged ``not_reduced``.

    Args:
        dataset: Complete measurements of the full configuration
        settings: Metric, threshold, bootstrap and repetition floor
        progress_handler: Optional handler for progress reporting

    Returns:
        One optimum per benchmark
    """
    benchmarks = _require_benchmarks(dataset)
    configurations = valid_configurations(dataset, settings)
    start_time = time.time()

    def optimize_benchmark(benchmark: str) -> BenchmarkOptimum:
        candidates = evaluate_candidates(dataset, benchmark, settings, configurations)
        chosen = select_configuration(candidates, settings.threshold)
        if chosen is None:
            full = next(c for c in candidates if c.configuration == dataset.e_max)
            logger.debug(f"{benchmark}: no configuration within {settings.threshold}, keeping {dataset.e_max}")
            return _build_optimum(dataset, benchmark, dataset.e_max, full.stability, SelectionFlag.NOT_REDUCED, settings)
        logger.debug(f"{benchmark}: {chosen.configuration} ({chosen.duration_s:g} s, {settings.metric.value}={chosen.stability:.5f})")
        return _build_optimum(dataset, benchmark, chosen.configuration, chosen.stability, SelectionFlag.STABLE, settings)

    optima = _map_benchmarks(benchmarks, optimize_benchmark, settings.workers, progress_handler)
    result = OptimizationResult(Strategy.UOPTIME, settings, dataset.e_max, optima)
    logger.info(
        f"Evaluated {len(configurations)} configurations for {len(benchmarks)} benchmarks "
        f"in {time.time() - start_time:.2f} seconds, {len(result.not_reduced)} not reduced"
    )
    return result


def minimum_baseline(dataset: MeasurementDataset, settings: OptimizationSettings, progress_handler=None) -> OptimizationResult:
    """Always the shortest configuration meeting the repetition floor."""
    benchmarks = _require_benchmarks(dataset)
    shortest = valid_configurations(dataset, settings)[0]
    optima = _map_benchmarks(
        benchmarks, lambda b: _baseline_optimum(dataset, b, shortest, settings), settings.workers, progress_handler
    )
    return OptimizationResult(Strategy.MINIMUM, settings, dataset.e_max, optima)


def random_baseline(
    dataset: MeasurementDataset, settings: OptimizationSettings, seed: int, progress_handler=None
) -> OptimizationResult:
    """A uniformly drawn configuration per benchmark, from the shortest valid one up to the full one."""
    benchmarks = _require_benchmarks(dataset)
    configurations = valid_configurations(dataset, settings)

    def pick(benchmark: str) -> BenchmarkOptimum:
        rng = np.random.default_rng(derive_seed(seed, "random", benchmark))
        return _baseline_optimum(dataset, benchmark, draw_configuration(configurations, rng), settings)

    optima = _map_benchmarks(benchmarks, pick, settings.workers, progress_handler)
    return OptimizationResult(Strategy.RANDOM, settings, dataset.e_max, optima)
