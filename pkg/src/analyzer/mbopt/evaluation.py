"""
Accuracy and time-savings of reduced configurations, static warmup handling,
and Cliff's delta effect sizes.
"""
import itertools
import logging
from bisect import bisect_right
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from common.errors import DataValidationError
from .dataset import (
    MeasurementDataset,
    WarmupPhase,
    execution_duration,
    get_measurements,
    warmup_duration,
)
from .optimizer import OptimizationResult
from .stability import Estimator, point_estimate

logger = logging.getLogger(__name__)

CHANGE_RATE_THRESHOLDS = (0.01, 0.03, 0.05)

# Hess and Kromrey thresholds on |delta|
EFFECT_SIZE_LEVELS = (0.147, 0.33, 0.474)


class EffectSizeCategory(str, Enum):
    NEGLIGIBLE = "negligible"
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"


_CATEGORIES = list(EffectSizeCategory)


@dataclass(frozen=True)
class EffectSize:
    delta: float
    category: EffectSizeCategory


@dataclass(frozen=True)
class ChangeRateRow:
    benchmark: str
    r_full: float
    r_min: float
    change_rate: float

    def below(self, threshold: float) -> bool:
        return self.change_rate < threshold


@dataclass(frozen=True)
class ChangeRateReport:
    estimator: Estimator
    rows: Tuple[ChangeRateRow, ...]
    total_full_s: float
    total_min_s: float
    total_warmup_full_s: float = 0.0
    total_warmup_min_s: float = 0.0

    def fraction_below(self, threshold: float) -> float:
        if not self.rows:
            return 0.0
        return sum(row.below(threshold) for row in self.rows) / len(self.rows)

    @property
    def fractions(self) -> Dict[float, float]:
        return {t: self.fraction_below(t) for t in CHANGE_RATE_THRESHOLDS}

    @property
    def change_rates(self) -> np.ndarray:
        return np.array([row.change_rate for row in self.rows], dtype=float)

    @property
    def median_change_rate(self) -> float:
        return float(np.median(self.change_rates)) if self.rows else 0.0

    @property
    def savings_fraction(self) -> float:
        return (self.total_full_s - self.total_min_s) / self.total_full_s if self.total_full_s else 0.0

    @property
    def overall_savings_fraction(self) -> float:
        full = self.total_full_s + self.total_warmup_full_s
        chosen = self.total_min_s + self.total_warmup_min_s
        return (full - chosen) / full if full else 0.0

    def summary(self) -> Dict[str, object]:
        return {
            "estimator": self.estimator.value,
            "benchmarks": len(self.rows),
            "fraction_below": {f"{t:g}": f for t, f in self.fractions.items()},
            "median_change_rate": self.median_change_rate,
            "total_full_s": self.total_full_s,
            "total_min_s": self.total_min_s,
            "savings_fraction": self.savings_fraction,
            "total_warmup_full_s": self.total_warmup_full_s,
            "total_warmup_min_s": self.total_warmup_min_s,
            "overall_savings_fraction": self.overall_savings_fraction,
        }


def change_rate(r_min: float, r_full: float) -> float:
    """Relative deviation of a reduced result from the full result."""
    if r_full <= 0:
        raise DataValidationError(f"full-configuration result must be positive, got {r_full}")
    return abs(r_min - r_full) / r_full


def evaluate(
    dataset: MeasurementDataset, result: OptimizationResult, estimator: Optional[Union[Estimator, str]] = None
) -> ChangeRateReport:
    """
    Compare each benchmark's score under its chosen configuration with the full one.

    Args:
        dataset: The campaign the result was computed from
        result: Chosen configurations
        estimator: Score estimator, defaults to the one paired with the result's metric

    Returns:
        Change rates per benchmark and suite-level savings
    """
    paired = result.settings.metric.estimator
    estimator = Estimator(estimator) if estimator is not None else paired
    if estimator is not paired:
        logger.warning(
            f"scoring with the {estimator.value} although {result.settings.metric.value} is based on the {paired.value}"
        )

    rows = []
    total_full = total_min = warmup_full = warmup_min = 0.0
    for benchmark, optimum in result.optima.items():
        configuration = optimum.configuration
        configuration.validate_against(dataset.schema)
        r_full = point_estimate(get_measurements(dataset.e_max, dataset, benchmark), estimator)
        r_min = point_estimate(get_measurements(configuration, dataset, benchmark), estimator)
        rows.append(ChangeRateRow(benchmark, r_full, r_min, change_rate(r_min, r_full)))
        total_full += execution_duration(dataset.e_max, dataset.schema)
        total_min += execution_duration(configuration, dataset.schema)
        warmup_full += warmup_duration(dataset.e_max, dataset)
        warmup_min += warmup_duration(configuration, dataset)

    return ChangeRateReport(estimator, tuple(rows), total_full, total_min, warmup_full, warmup_min)


def discard_warmup(dataset: MeasurementDataset, level_name: str, warmup_count: int) -> MeasurementDataset:
    """
    Drop the first ``warmup_count`` repetitions of one level (a static warmup phase).

    Remaining indices shift down; the discarded count is kept on the dataset
    so durations can report warmup time separately.
    """
    index = dataset.schema.level_index(level_name)
    count = dataset.schema.levels[index].count
    if warmup_count < 0 or warmup_count >= count:
        raise DataValidationError(
            f"warmup count must be in 0..{count - 1} for level '{level_name}', got {warmup_count}"
        )
    if warmup_count == 0:
        return dataset

    previous = 0
    if dataset.warmup is not None:
        if dataset.warmup.level_name != level_name:
            raise DataValidationError(f"warmup already discarded on level '{dataset.warmup.level_name}'")
        previous = dataset.warmup.count

    window = (slice(None),) * index + (slice(warmup_count, None),)
    return replace(
        dataset,
        schema=dataset.schema.with_count(level_name, count - warmup_count),
        grids={b: grid[window] for b, grid in dataset.grids.items()},
        warmup=WarmupPhase(level_name, previous + warmup_count),
    )


def categorize_effect_size(delta: float) -> EffectSizeCategory:
    return _CATEGORIES[bisect_right(EFFECT_SIZE_LEVELS, abs(delta))]


def cliffs_delta(x: Sequence[float], y: Sequence[float]) -> EffectSize:
    """Cliff's delta: P(x > y) - P(x < y) over all pairs."""
    a = np.asarray(x, dtype=float).ravel()
    b = np.asarray(y, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise DataValidationError("Cliff's delta needs two non-empty samples")
    delta = float(np.sign(a[:, None] - b[None, :]).sum() / (a.size * b.size))
    return EffectSize(delta, categorize_effect_size(delta))


def pairwise_effect_sizes(reports: Mapping[str, ChangeRateReport]) -> Dict[Tuple[str, str], EffectSize]:
    """Cliff's delta between the change-rate distributions of every pair of reports."""
    return {
        (left, right): cliffs_delta(reports[left].change_rates, reports[right].change_rates)
        for left, right in itertools.combinations(reports, 2)
    }
