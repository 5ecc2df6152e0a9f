"""CSV and JSON artifacts written and read by the command line."""
import json
import logging
import math
import os
from datetime import datetime, timezone
from typing import Any, Dict, Iterable, List, Mapping, Optional

import pandas as pd

from common.errors import InputFileError, ParseError
from .dataset import ExecutionConfiguration, MeasurementDataset, execution_duration, warmup_duration
from .evaluation import CHANGE_RATE_THRESHOLDS, ChangeRateReport, EffectSize
from .optimizer import BenchmarkOptimum, OptimizationResult, OptimizationSettings, SelectionFlag, Strategy
from .regression import ComparisonReport
from .stability import ConfidenceInterval, IntervalMethod, StabilityMetric

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ["benchmark", "config", "stability", "score", "ci_lower", "ci_upper", "duration_s", "saved_s", "flag", "metric"]
CHANGE_RATE_COLUMNS = ["benchmark", "r_full", "r_min", "change_rate", "below_1pct", "below_3pct", "below_5pct"]
COMPARISON_COLUMNS = [
    "benchmark", "score_v1", "score_v2", "ci1_lo", "ci1_hi", "ci2_lo", "ci2_hi", "changed", "relevant", "magnitude", "direction",
]
EFFECT_SIZE_COLUMNS = ["left", "right", "delta", "category"]

FLOAT_FORMAT = "%.10g"


def _write_csv(rows: List[Dict[str, Any]], columns: List[str], path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    try:
        pd.DataFrame(rows, columns=columns).to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    except OSError as e:
        raise InputFileError(f"cannot write {path}: {e}") from e
    logger.debug(f"Wrote {len(rows)} rows to {path}")


def write_json(payload: Mapping[str, Any], path: str, stamp: bool = True) -> None:
    """Write a JSON summary; the generation timestamp only ever lives in ``metadata``."""
    document = dict(payload)
    if stamp:
        document["metadata"] = {"generated_at": datetime.now(timezone.utc).isoformat(timespec="seconds")}
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(document, f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise InputFileError(f"cannot write {path}: {e}") from e


def write_result_csv(result: OptimizationResult, path: str) -> None:
    rows = []
    for optimum in result.optima.values():
        rows.append({
            "benchmark": optimum.benchmark,
            "config": str(optimum.configuration),
            "stability": optimum.stability,
            "score": optimum.score,
            "ci_lower": optimum.ci.lower if optimum.ci else None,
            "ci_upper": optimum.ci.upper if optimum.ci else None,
            "duration_s": optimum.duration_s,
            "saved_s": optimum.saved_s,
            "flag": optimum.flag.value,
            "metric": result.settings.metric.value,
        })
    _write_csv(rows, RESULT_COLUMNS, path)


def _read_csv(path: str, columns: List[str]) -> pd.DataFrame:
    if not os.path.exists(path):
        raise InputFileError(f"file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ParseError(f"cannot parse {path}: {e}") from e
    except UnicodeDecodeError as e:
        raise ParseError(f"{path} is not UTF-8 text: {e.reason}") from None
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ParseError(f"{path} lacks columns {missing}", line=1)
    return frame


def _optional_float(text: str) -> Optional[float]:
    text = text.strip()
    if not text:
        return None
    value = float(text)
    return None if math.isnan(value) else value


def read_result_configs(path: str) -> Dict[str, ExecutionConfiguration]:
    """Benchmark -> configuration, as written by ``write_result_csv``."""
    frame = _read_csv(path, ["benchmark", "config"])
    configs = {}
    for line, (benchmark, config) in enumerate(zip(frame["benchmark"], frame["config"]), start=2):
        try:
            configs[benchmark] = ExecutionConfiguration.parse(config)
        except ParseError as e:
            raise ParseError(f"{path}: {e}", line=line) from None
    return configs


def result_metric(frame: pd.DataFrame, path: str) -> Optional[StabilityMetric]:
    """The single metric a result file was optimized with, or None for files without a ``metric`` column."""
    if "metric" not in frame.columns or frame.empty:
        return None
    values = sorted({value.strip() for value in frame["metric"]})
    if len(values) != 1:
        raise ParseError(f"{path} mixes metrics {values}")
    try:
        return StabilityMetric(values[0])
    except ValueError:
        raise ParseError(f"{path}: unknown metric '{values[0]}'") from None


def read_optimization_result(
    path: str, dataset: MeasurementDataset, settings: OptimizationSettings, strategy: Strategy = Strategy.UOPTIME
) -> OptimizationResult:
    """Rebuild a result from its CSV; durations are recomputed from the dataset's schema.

    The metric recorded in the file's ``metric`` column replaces ``settings.metric``;
    files without that column keep the metric of ``settings``.
    """
    frame = _read_csv(path, RESULT_COLUMNS[:-1])
    recorded = result_metric(frame, path)
    if recorded is not None and recorded is not settings.metric:
        settings = settings.model_copy(update={"metric": recorded})
    method = IntervalMethod.T_INTERVAL if settings.metric is StabilityMetric.RCIW2 else IntervalMethod.PERCENTILE
    optima = {}
    for line, row in enumerate(frame.to_dict("records"), start=2):
        try:
            configuration = ExecutionConfiguration.parse(row["config"])
            configuration.validate_against(dataset.schema)
            lower, upper = _optional_float(row["ci_lower"]), _optional_float(row["ci_upper"])
            optima[row["benchmark"]] = BenchmarkOptimum(
                benchmark=row["benchmark"],
                configuration=configuration,
                stability=_optional_float(row["stability"]),
                score=float(row["score"]),
                ci=ConfidenceInterval(lower, upper, settings.metric.estimator, method) if lower is not None else None,
                duration_s=execution_duration(configuration, dataset.schema),
                full_duration_s=execution_duration(dataset.e_max, dataset.schema),
                flag=SelectionFlag(row["flag"]),
                warmup_s=warmup_duration(configuration, dataset),
                full_warmup_s=warmup_duration(dataset.e_max, dataset),
            )
        except ValueError as e:
            raise ParseError(f"{path}: {e}", line=line) from None
    return OptimizationResult(strategy, settings, dataset.e_max, optima)


def write_change_rate_csv(report: ChangeRateReport, path: str) -> None:
    rows = []
    for row in report.rows:
        entry = {"benchmark": row.benchmark, "r_full": row.r_full, "r_min": row.r_min, "change_rate": row.change_rate}
        for threshold, column in zip(CHANGE_RATE_THRESHOLDS, CHANGE_RATE_COLUMNS[4:]):
            entry[column] = row.below(threshold)
        rows.append(entry)
    _write_csv(rows, CHANGE_RATE_COLUMNS, path)


def write_comparison_csv(report: ComparisonReport, path: str) -> None:
    rows = [{
        "benchmark": c.benchmark,
        "score_v1": c.score_v1,
        "score_v2": c.score_v2,
        "ci1_lo": c.ci_v1.lower,
        "ci1_hi": c.ci_v1.upper,
        "ci2_lo": c.ci_v2.lower,
        "ci2_hi": c.ci_v2.upper,
        "changed": c.changed,
        "relevant": c.relevant,
        "magnitude": c.magnitude,
        "direction": c.direction.value,
    } for c in report]
    _write_csv(rows, COMPARISON_COLUMNS, path)


def write_effect_size_csv(effect_sizes: Mapping[tuple, EffectSize], path: str) -> None:
    rows = [
        {"left": left, "right": right, "delta": size.delta, "category": size.category.value}
        for (left, right), size in effect_sizes.items()
    ]
    _write_csv(rows, EFFECT_SIZE_COLUMNS, path)


def write_schedule_jsonl(schedule: Iterable[List[str]], path: str) -> None:
    """One suite run per line, as a JSON array of benchmark names."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    try:
        with open(path, "w", encoding="utf-8") as f:
            for suite_run in schedule:
                f.write(json.dumps(suite_run) + "\n")
    except OSError as e:
        raise InputFileError(f"cannot write {path}: {e}") from e
