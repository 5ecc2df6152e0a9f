"""
Performance change detection between suite versions.

A benchmark changed when the bootstrap confidence intervals of both versions
do not overlap; the change is relevant when the scores also differ by at
least the relevance threshold. Reduced configurations are scored against the
full configuration's relevant changes as ground truth.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from common.errors import DataValidationError
from .dataset import ExecutionConfiguration, MeasurementDataset, ValueSemantics, get_measurements
from .stability import BootstrapSettings, ConfidenceInterval, Estimator, bootstrap_percentile_ci, point_estimate

logger = logging.getLogger(__name__)

DEFAULT_RELEVANCE = 0.03


class ChangeDirection(str, Enum):
    REGRESSION = "regression"
    IMPROVEMENT = "improvement"
    UNCHANGED = "unchanged"


@dataclass(frozen=True)
class VersionComparison:
    benchmark: str
    score_v1: float
    score_v2: float
    ci_v1: ConfidenceInterval
    ci_v2: ConfidenceInterval
    changed: bool
    relevant: bool
    magnitude: float
    direction: ChangeDirection


@dataclass(frozen=True)
class ComparisonReport:
    label_v1: str
    label_v2: str
    comparisons: Tuple[VersionComparison, ...]
    skipped: Tuple[str, ...] = ()

    def __iter__(self):
        return iter(self.comparisons)

    def __len__(self) -> int:
        return len(self.comparisons)

    @property
    def benchmarks(self) -> Tuple[str, ...]:
        return tuple(c.benchmark for c in self.comparisons)

    @property
    def changed(self) -> List[str]:
        return [c.benchmark for c in self.comparisons if c.changed]

    @property
    def relevant(self) -> List[str]:
        return [c.benchmark for c in self.comparisons if c.relevant]


@dataclass(frozen=True)
class ConfusionSummary:
    label: str
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def fpr(self) -> Optional[float]:
        negatives = self.fp + self.tn
        return self.fp / negatives if negatives else None

    @property
    def fnr(self) -> Optional[float]:
        positives = self.fn + self.tp
        return self.fn / positives if positives else None

    def to_dict(self) -> Dict[str, object]:
        return {
            "label": self.label,
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "fpr": self.fpr,
            "fnr": self.fnr,
        }


def _direction(score_v1: float, score_v2: float, changed: bool, semantics: ValueSemantics) -> ChangeDirection:
    if not changed:
        return ChangeDirection.UNCHANGED
    slower = score_v2 > score_v1 if semantics is ValueSemantics.LOWER_IS_BETTER else score_v2 < score_v1
    return ChangeDirection.REGRESSION if slower else ChangeDirection.IMPROVEMENT


def detect_changes(
    v1: MeasurementDataset,
    v2: MeasurementDataset,
    configs: Optional[Mapping[str, ExecutionConfiguration]] = None,
    estimator: Union[Estimator, str] = Estimator.MEDIAN,
    settings: BootstrapSettings = BootstrapSettings(),
    relevance: float = DEFAULT_RELEVANCE,
) -> ComparisonReport:
    """
    Flag benchmarks whose confidence intervals in the two versions do not overlap.

    Only benchmarks present in both versions are compared; the rest are
    listed as skipped. Benchmarks without an entry in ``configs`` use the full
    configuration. Seeds derive from each version's label, so swapping the
    versions flags the same benchmarks.
    """
    estimator = Estimator(estimator)
    if relevance < 0:
        raise DataValidationError(f"relevance threshold must be non-negative, got {relevance}")
    shared = sorted(set(v1.benchmarks) & set(v2.benchmarks))
    if not shared:
        raise DataValidationError(f"versions {v1.label} and {v2.label} share no benchmarks")
    skipped = tuple(sorted(set(v1.benchmarks) ^ set(v2.benchmarks)))
    if skipped:
        logger.warning(f"Skipping {len(skipped)} benchmarks not present in both {v1.label} and {v2.label}")

    comparisons = []
    for benchmark in shared:
        configuration = configs.get(benchmark) if configs is not None else None
        if configs is not None and configuration is None:
            logger.warning(f"No configuration for {benchmark}, using the full configuration")

        def measure(version: MeasurementDataset) -> Tuple[float, ConfidenceInterval]:
            values = get_measurements(configuration or version.e_max, version, benchmark)
            ci = bootstrap_percentile_ci(values, estimator, settings.derive(version.label, benchmark))
            return point_estimate(values, estimator), ci

        score_v1, ci_v1 = measure(v1)
        score_v2, ci_v2 = measure(v2)
        changed = not ci_v1.overlaps(ci_v2)
        magnitude = abs(score_v2 - score_v1) / score_v1
        comparisons.append(VersionComparison(
            benchmark=benchmark,
            score_v1=score_v1,
            score_v2=score_v2,
            ci_v1=ci_v1,
            ci_v2=ci_v2,
            changed=changed,
            relevant=changed and magnitude >= relevance,
            magnitude=magnitude,
            direction=_direction(score_v1, score_v2, changed, v2.value_semantics),
        ))

    report = ComparisonReport(v1.label, v2.label, tuple(comparisons), skipped)
    logger.info(f"{v1.label} -> {v2.label}: {len(report.changed)} changed, {len(report.relevant)} relevant of {len(report)}")
    return report


def detect_changes_across_versions(
    versions: Sequence[MeasurementDataset],
    configs: Optional[Mapping[str, ExecutionConfiguration]] = None,
    estimator: Union[Estimator, str] = Estimator.MEDIAN,
    settings: BootstrapSettings = BootstrapSettings(),
    relevance: float = DEFAULT_RELEVANCE,
) -> List[ComparisonReport]:
    """Compare successive versions: v1 -> v2, v2 -> v3, ..."""
    if len(versions) < 2:
        raise DataValidationError("at least two versions are needed for a comparison")
    return [
        detect_changes(older, newer, configs, estimator, settings, relevance)
        for older, newer in zip(versions, versions[1:])
    ]


def score_against_full(full: ComparisonReport, reduced: ComparisonReport) -> ConfusionSummary:
    """Confusion counts of the reduced configuration's relevant changes against the full ones."""
    if set(full.benchmarks) != set(reduced.benchmarks):
        raise DataValidationError("full and reduced comparisons cover different benchmarks")
    truth = {c.benchmark: c.relevant for c in full}
    tp = fp = tn = fn = 0
    for comparison in reduced:
        expected = truth[comparison.benchmark]
        if expected and comparison.relevant:
            tp += 1
        elif expected:
            fn += 1
        elif comparison.relevant:
            fp += 1
        else:
            tn += 1
    return ConfusionSummary(f"{reduced.label_v1}->{reduced.label_v2}", tp, fp, tn, fn)


def summarize_confusions(summaries: Sequence[ConfusionSummary]) -> Dict[str, object]:
    """Totals over version pairs plus range and median of the defined rates."""

    def spread(rates: List[float]) -> Optional[Dict[str, float]]:
        if not rates:
            return None
        return {"min": min(rates), "max": max(rates), "median": float(np.median(rates))}

    return {
        "pairs": len(summaries),
        "tp": sum(s.tp for s in summaries),
        "fp": sum(s.fp for s in summaries),
        "tn": sum(s.tn for s in summaries),
        "fn": sum(s.fn for s in summaries),
        "fpr": spread([s.fpr for s in summaries if s.fpr is not None]),
        "fnr": spread([s.fnr for s in summaries if s.fnr is not None]),
    }
