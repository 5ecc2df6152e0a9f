"""
Stability metrics and the bootstrap intervals they are built on.

All metrics are relative measures of spread (dimensionless), lower is more
stable. Bootstrap functions draw from a generator seeded per call, so equal
inputs and seeds always give equal intervals.
"""
import logging
import math
import zlib
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from common.errors import DataValidationError, InsufficientDataError

logger = logging.getLogger(__name__)

# Resample rows are drawn in chunks of at most this many cells
_MAX_DRAW_CELLS = 2_000_000

MIN_BOOTSTRAP_VALUES = 3

Values = Union[Sequence[float], np.ndarray]


class Estimator(str, Enum):
    MEAN = "mean"
    MEDIAN = "median"


class IntervalMethod(str, Enum):
    PERCENTILE = "percentile"
    T_INTERVAL = "t_interval"


class StabilityMetric(str, Enum):
    CV = "cv"
    RMAD = "rmad"
    RCIW1 = "rciw1"
    RCIW2 = "rciw2"
    RCIW3 = "rciw3"

    @property
    def estimator(self) -> Estimator:
        """The average the metric normalizes by, also used to score results."""
        if self in (StabilityMetric.RMAD, StabilityMetric.RCIW3):
            return Estimator.MEDIAN
        return Estimator.MEAN

    @property
    def uses_bootstrap(self) -> bool:
        return self in (StabilityMetric.RCIW1, StabilityMetric.RCIW2, StabilityMetric.RCIW3)

    @property
    def min_values(self) -> int:
        if self.uses_bootstrap:
            return MIN_BOOTSTRAP_VALUES
        return 2 if self is StabilityMetric.CV else 1


class BootstrapSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    confidence_level: float = Field(default=0.99, gt=0, lt=1)
    resamples: int = Field(default=10000, ge=1)
    seed: int = 0

    @property
    def alpha(self) -> float:
        return 1.0 - self.confidence_level

    def derive(self, *parts) -> "BootstrapSettings":
        """Same settings with a seed specific to ``parts`` (benchmark, configuration, ...)."""
        return self.model_copy(update={"seed": derive_seed(self.seed, *parts)})


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    estimator: Estimator
    method: IntervalMethod

    def __post_init__(self):
        if self.lower > self.upper:
            raise DataValidationError(f"interval bounds out of order: [{self.lower}, {self.upper}]")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def overlaps(self, other: "ConfidenceInterval") -> bool:
        return not (self.upper < other.lower or other.upper < self.lower)


def seed_sequence(seed: int, *words: int) -> np.random.SeedSequence:
    """Entropy for any integer seed; negative seeds are told apart from their absolute value by the spawn key."""
    seed = int(seed)
    spawn_key = (1,) if seed < 0 else ()
    return np.random.SeedSequence([abs(seed), *words], spawn_key=spawn_key)


def derive_seed(seed: int, *parts) -> int:
    """Stable 32-bit seed from a base seed and any printable parts."""
    words = [zlib.crc32(str(part).encode("utf-8")) for part in parts]
    return int(seed_sequence(seed, *words).generate_state(1)[0])


def _as_sample(values: Values, minimum: int) -> np.ndarray:
    sample = np.asarray(values, dtype=float).ravel()
    if sample.size < minimum:
        raise InsufficientDataError(f"need at least {minimum} values, got {sample.size}")
    return sample


def _is_constant(sample: np.ndarray) -> bool:
    return bool(sample.min() == sample.max())


def point_estimate(values: Values, estimator: Union[Estimator, str]) -> float:
    sample = _as_sample(values, 1)
    if Estimator(estimator) is Estimator.MEDIAN:
        return float(np.median(sample))
    return float(np.mean(sample))


def cv(values: Values) -> float:
    """Coefficient of variation: sample standard deviation (n-1) over the mean."""
    sample = _as_sample(values, 2)
    if _is_constant(sample):
        return 0.0
    return float(np.std(sample, ddof=1) / np.mean(sample))


def rmad(values: Values) -> float:
    """Median absolute deviation from the median, divided by the median. Unscaled."""
    sample = _as_sample(values, 1)
    median = np.median(sample)
    return float(np.median(np.abs(sample - median)) / median)


def _bootstrap_draws(sample: np.ndarray, resamples: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """Yield (rows, n) blocks of resamples with replacement, resamples rows in total."""
    n = sample.size
    batch = max(1, _MAX_DRAW_CELLS // n)
    for start in range(0, resamples, batch):
        rows = min(batch, resamples - start)
        yield sample[rng.integers(0, n, size=(rows, n))]


def bootstrap_percentile_ci(
    values: Values, estimator: Union[Estimator, str], settings: BootstrapSettings
) -> ConfidenceInterval:
    """Percentile bootstrap interval of the mean or median."""
    estimator = Estimator(estimator)
    sample = _as_sample(values, MIN_BOOTSTRAP_VALUES)
    rng = np.random.default_rng(seed_sequence(settings.seed))
    statistic = np.median if estimator is Estimator.MEDIAN else np.mean
    estimates = np.concatenate(
        [statistic(block, axis=1) for block in _bootstrap_draws(sample, settings.resamples, rng)]
    )
    lower, upper = np.quantile(estimates, [settings.alpha / 2, 1 - settings.alpha / 2])
    return ConfidenceInterval(float(lower), float(upper), estimator, IntervalMethod.PERCENTILE)


def bootstrap_t_ci(values: Values, settings: BootstrapSettings) -> ConfidenceInterval:
    """
    Bootstrap t-interval of the mean.

    Every resample is standardized with its own standard error; resamples
    without spread contribute t = 0.
    """
    sample = _as_sample(values, MIN_BOOTSTRAP_VALUES)
    n = sample.size
    mean = float(np.mean(sample))
    if _is_constant(sample):
        return ConfidenceInterval(mean, mean, Estimator.MEAN, IntervalMethod.T_INTERVAL)
    se = float(np.std(sample, ddof=1)) / math.sqrt(n)

    rng = np.random.default_rng(seed_sequence(settings.seed))
    t_blocks = []
    for block in _bootstrap_draws(sample, settings.resamples, rng):
        means = block.mean(axis=1)
        spread = np.ptp(block, axis=1) > 0
        t = np.zeros_like(means)
        se_star = block[spread].std(axis=1, ddof=1) / math.sqrt(n)
        t[spread] = (means[spread] - mean) / se_star
        t_blocks.append(t)
    q_low, q_high = np.quantile(np.concatenate(t_blocks), [settings.alpha / 2, 1 - settings.alpha / 2])
    return ConfidenceInterval(
        float(mean - q_high * se), float(mean - q_low * se), Estimator.MEAN, IntervalMethod.T_INTERVAL
    )


def score_interval(
    values: Values, metric: Union[StabilityMetric, str], settings: BootstrapSettings
) -> ConfidenceInterval:
    """Confidence interval reported next to a benchmark score."""
    metric = StabilityMetric(metric)
    if metric is StabilityMetric.RCIW2:
        return bootstrap_t_ci(values, settings)
    return bootstrap_percentile_ci(values, metric.estimator, settings)


def stability(values: Values, metric: Union[StabilityMetric, str], settings: BootstrapSettings) -> float:
    """Value of the chosen stability metric for a sample; 0 means no variability."""
    metric = StabilityMetric(metric)
    sample = _as_sample(values, metric.min_values)
    if metric is StabilityMetric.CV:
        return cv(sample)
    if metric is StabilityMetric.RMAD:
        return rmad(sample)
    if _is_constant(sample):
        return 0.0

    if metric is StabilityMetric.RCIW1:
        interval = bootstrap_percentile_ci(sample, Estimator.MEAN, settings)
    elif metric is StabilityMetric.RCIW2:
        interval = bootstrap_t_ci(sample, settings)
    else:
        interval = bootstrap_percentile_ci(sample, Estimator.MEDIAN, settings)
    return interval.width / point_estimate(sample, metric.estimator)
