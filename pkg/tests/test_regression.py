import numpy as np
import pytest

from common.errors import DataValidationError
from mbopt.dataset import ExecutionConfiguration, ValueSemantics
from mbopt.regression import (
    ChangeDirection,
    ComparisonReport,
    ConfusionSummary,
    VersionComparison,
    detect_changes,
    detect_changes_across_versions,
    score_against_full,
    summarize_confusions,
)
from mbopt.stability import BootstrapSettings, ConfidenceInterval, Estimator, IntervalMethod

from conftest import make_dataset, noisy_grid

SETTINGS = BootstrapSettings(resamples=1000, seed=4)


def _versions(rng, factor, benchmarks=1, shape=(3, 5, 5), noise=0.01, shifted=None, semantics=ValueSemantics.LOWER_IS_BETTER):
    base = {f"b{i:02d}": noisy_grid(rng, shape, noise=noise) for i in range(benchmarks)}
    shifted = set(base) if shifted is None else set(shifted)
    newer = {
        b: noisy_grid(rng, shape, base=100.0 * (factor if b in shifted else 1.0), noise=noise) for b in base
    }
    return (
        make_dataset(base, label="v1", semantics=semantics),
        make_dataset(newer, label="v2", semantics=semantics),
    )


def test_identical_versions_show_no_change(rng):
    grids = {f"b{i}": noisy_grid(rng, (3, 5, 5)) for i in range(5)}
    report = detect_changes(make_dataset(grids, label="v"), make_dataset(grids, label="v"), settings=SETTINGS)
    assert report.changed == []
    assert len(report) == 5


def test_ten_percent_shift_is_relevant(rng):
    v1, v2 = _versions(rng, 1.10, benchmarks=3)
    report = detect_changes(v1, v2, settings=SETTINGS)
    assert report.relevant == list(v1.benchmarks)
    for comparison in report:
        assert comparison.magnitude == pytest.approx(0.10, abs=0.01)
        assert comparison.direction is ChangeDirection.REGRESSION


def test_higher_is_better_flips_direction(rng):
    v1, v2 = _versions(rng, 1.10, semantics=ValueSemantics.HIGHER_IS_BETTER)
    report = detect_changes(v1, v2, settings=SETTINGS)
    assert report.comparisons[0].direction is ChangeDirection.IMPROVEMENT


def test_small_shift_is_changed_but_not_relevant():
    rng = np.random.default_rng(8)
    grid = noisy_grid(rng, (3, 5, 5), noise=0.002)
    v1 = make_dataset({"b": grid}, label="v1")
    v2 = make_dataset({"b": grid * 1.02}, label="v2")
    comparison = detect_changes(v1, v2, settings=SETTINGS).comparisons[0]
    assert comparison.changed
    assert not comparison.relevant
    relaxed = detect_changes(v1, v2, settings=SETTINGS, relevance=0.0).comparisons[0]
    assert relaxed.relevant


def test_swapping_versions_flags_the_same_benchmarks(rng):
    v1, v2 = _versions(rng, 1.05, benchmarks=10, shifted=["b01", "b04", "b07"], noise=0.02)
    forward = detect_changes(v1, v2, settings=SETTINGS)
    backward = detect_changes(v2, v1, settings=SETTINGS)
    assert forward.changed == backward.changed


def test_relevance_zero_equals_changed(rng):
    v1, v2 = _versions(rng, 1.01, benchmarks=8, noise=0.01)
    report = detect_changes(v1, v2, settings=SETTINGS, relevance=0.0)
    assert report.relevant == report.changed
    with pytest.raises(DataValidationError):
        detect_changes(v1, v2, settings=SETTINGS, relevance=-0.1)


def test_benchmarks_missing_in_one_version_are_skipped(rng):
    v1 = make_dataset({"a": noisy_grid(rng, (2, 5)), "b": noisy_grid(rng, (2, 5))}, label="v1")
    v2 = make_dataset({"b": noisy_grid(rng, (2, 5)), "c": noisy_grid(rng, (2, 5))}, label="v2")
    report = detect_changes(v1, v2, settings=SETTINGS)
    assert report.benchmarks == ("b",)
    assert report.skipped == ("a", "c")


def test_disjoint_versions_are_rejected(rng):
    v1 = make_dataset({"a": noisy_grid(rng, (2, 5))}, label="v1")
    v2 = make_dataset({"c": noisy_grid(rng, (2, 5))}, label="v2")
    with pytest.raises(DataValidationError):
        detect_changes(v1, v2, settings=SETTINGS)


def test_reduced_configuration_against_ground_truth():
    rng = np.random.default_rng(2024)
    names = [f"b{i:02d}" for i in range(50)]
    v1, v2 = _versions(rng, 1.10, benchmarks=50, shifted=names[:25])
    full = detect_changes(v1, v2, settings=SETTINGS)
    reduced_configs = {b: ExecutionConfiguration((1, 5, 5)) for b in names}
    reduced = detect_changes(v1, v2, reduced_configs, settings=SETTINGS)
    assert set(full.relevant) == set(names[:25])

    confusion = score_against_full(full, reduced)
    assert confusion.total == 50
    assert confusion.fnr == 0
    assert confusion.fpr <= 0.05
    assert confusion.label == "v1->v2"


def test_identical_reports_score_perfectly(rng):
    v1, v2 = _versions(rng, 1.10, benchmarks=4, shifted=["b00"])
    full = detect_changes(v1, v2, settings=SETTINGS)
    confusion = score_against_full(full, full)
    assert confusion.fpr == 0
    assert confusion.fnr == 0


def _report(relevant_flags):
    interval = ConfidenceInterval(1.0, 2.0, Estimator.MEDIAN, IntervalMethod.PERCENTILE)
    comparisons = tuple(
        VersionComparison(
            benchmark=f"b{i:02d}",
            score_v1=1.0,
            score_v2=1.0,
            ci_v1=interval,
            ci_v2=interval,
            changed=flag,
            relevant=flag,
            magnitude=0.1 if flag else 0.0,
            direction=ChangeDirection.REGRESSION if flag else ChangeDirection.UNCHANGED,
        )
        for i, flag in enumerate(relevant_flags)
    )
    return ComparisonReport("v1", "v2", comparisons)


def test_missing_the_only_change_gives_full_false_negative_rate():
    full = _report([True] + [False] * 19)
    reduced = _report([False] * 20)
    confusion = score_against_full(full, reduced)
    assert confusion.fnr == 1.0
    assert confusion.fpr == 0.0


def test_no_true_changes_leaves_false_negative_rate_undefined():
    full = _report([False] * 20)
    reduced = _report([True, True] + [False] * 18)
    confusion = score_against_full(full, reduced)
    assert confusion.fpr == pytest.approx(0.10)
    assert confusion.fnr is None
    assert confusion.to_dict()["fnr"] is None


def test_universe_mismatch_is_rejected():
    with pytest.raises(DataValidationError):
        score_against_full(_report([False] * 3), _report([False] * 4))


def test_confusions_are_summarized():
    summaries = [
        ConfusionSummary("v1->v2", tp=1, fp=0, tn=9, fn=1),
        ConfusionSummary("v2->v3", tp=0, fp=2, tn=8, fn=0),
        ConfusionSummary("v3->v4", tp=2, fp=1, tn=7, fn=0),
    ]
    summary = summarize_confusions(summaries)
    assert summary["pairs"] == 3
    assert (summary["tp"], summary["fp"], summary["tn"], summary["fn"]) == (3, 3, 24, 1)
    assert summary["fpr"] == {"min": 0.0, "max": 0.2, "median": 0.125}
    assert summary["fnr"] == {"min": 0.0, "max": 0.5, "median": 0.25}
    assert summarize_confusions([])["fnr"] is None


def test_successive_versions_are_compared_pairwise(rng):
    grids = [{"b": noisy_grid(rng, (2, 5)) * factor} for factor in (1.0, 1.0, 1.2)]
    versions = [make_dataset(g, label=f"v{i}") for i, g in enumerate(grids, start=1)]
    reports = detect_changes_across_versions(versions, settings=SETTINGS)
    assert [(r.label_v1, r.label_v2) for r in reports] == [("v1", "v2"), ("v2", "v3")]
    assert reports[1].relevant == ["b"]
    with pytest.raises(DataValidationError):
        detect_changes_across_versions(versions[:1])
