import logging

import numpy as np
import pytest

from common.errors import DataValidationError
from mbopt.dataset import ExecutionConfiguration, WarmupPhase
from mbopt.evaluation import (
    EffectSizeCategory,
    categorize_effect_size,
    change_rate,
    cliffs_delta,
    discard_warmup,
    evaluate,
    pairwise_effect_sizes,
)
from mbopt.optimizer import OptimizationSettings, SelectionFlag, minimum_baseline, optimize
from mbopt.stability import BootstrapSettings, Estimator, StabilityMetric

from conftest import make_dataset

SETTINGS = OptimizationSettings(bootstrap=BootstrapSettings(resamples=200, seed=1))
CV_SETTINGS = OptimizationSettings(metric=StabilityMetric.CV, bootstrap=BootstrapSettings(resamples=200, seed=1))


def test_change_rate_values():
    assert change_rate(100, 100) == 0
    assert change_rate(103, 100) == pytest.approx(0.03)
    assert change_rate(97, 100) == pytest.approx(0.03)
    assert change_rate(3 * 103, 3 * 100) == pytest.approx(change_rate(103, 100))
    with pytest.raises(DataValidationError):
        change_rate(1, 0)


def test_full_configuration_result_has_no_change(rng):
    dataset = make_dataset({"a": rng.uniform(1, 2, (2, 3, 4)), "b": rng.uniform(1, 2, (2, 3, 4))})
    result = optimize(dataset, CV_SETTINGS.model_copy(update={"threshold": 0.0001}))
    report = evaluate(dataset, result)
    assert all(row.change_rate == 0 for row in report.rows)
    assert report.savings_fraction == 0
    assert report.fractions == {0.01: 1.0, 0.03: 1.0, 0.05: 1.0}


def test_constant_benchmark_has_no_change():
    dataset = make_dataset({"b": np.full((3, 4), 7.0)})
    report = evaluate(dataset, minimum_baseline(dataset, SETTINGS))
    assert report.rows[0].change_rate == 0
    assert report.total_full_s == 12
    assert report.total_min_s == 3
    assert report.savings_fraction == pytest.approx(0.75)


def test_drift_across_suite_runs():
    # values rise 1% per suite run
    grid = np.array([[100.0 * 1.01 ** s] * 4 for s in range(3)])
    dataset = make_dataset({"b": grid}, names=["suite_run", "iteration"])
    result = minimum_baseline(dataset, CV_SETTINGS)
    assert result["b"].configuration == ExecutionConfiguration((1, 3))
    report = evaluate(dataset, result)
    full_mean = 100.0 * (1 + 1.01 + 1.0201) / 3
    assert report.estimator is Estimator.MEAN
    assert report.rows[0].change_rate == pytest.approx((full_mean - 100.0) / full_mean)
    assert report.rows[0].below(0.03)
    assert not report.rows[0].below(0.003)


def test_threshold_fractions_are_monotone(rng):
    grids = {f"b{i}": 100 * (1 + 0.05 * rng.standard_normal((2, 3, 3))) for i in range(20)}
    dataset = make_dataset(grids)
    report = evaluate(dataset, minimum_baseline(dataset, SETTINGS))
    fractions = [report.fraction_below(t) for t in (0.01, 0.03, 0.05)]
    assert fractions == sorted(fractions)
    assert report.median_change_rate == pytest.approx(float(np.median(report.change_rates)))


def test_estimator_mismatch_only_warns(caplog):
    grid = np.array([[10.0, 10.0, 10.0, 20.0]])
    dataset = make_dataset({"b": grid})
    result = minimum_baseline(dataset, SETTINGS)
    assert evaluate(dataset, result).rows[0].change_rate == 0
    with caplog.at_level(logging.WARNING):
        report = evaluate(dataset, result, "mean")
    assert report.rows[0].change_rate == pytest.approx(0.2)
    assert "mean" in caplog.text


def test_discard_nothing_is_identity(rng):
    dataset = make_dataset({"b": rng.uniform(1, 2, (1, 5, 10, 1))}, names=["instance", "fork", "iteration", "second"])
    assert discard_warmup(dataset, "iteration", 0) is dataset


def test_discard_warmup_shifts_indices(rng):
    dataset = make_dataset({"b": rng.uniform(1, 2, (1, 5, 100, 1))}, names=["instance", "fork", "iteration", "second"])
    trimmed = discard_warmup(dataset, "iteration", 50)
    assert trimmed.schema.counts == (1, 5, 50, 1)
    assert trimmed.warmup == WarmupPhase("iteration", 50)
    np.testing.assert_array_equal(trimmed.grid("b"), dataset.grid("b")[:, :, 50:, :])
    again = discard_warmup(trimmed, "iteration", 10)
    assert again.warmup.count == 60
    assert again.schema.counts == (1, 5, 40, 1)


def test_discard_everything_is_rejected(rng):
    dataset = make_dataset({"b": rng.uniform(1, 2, (2, 100))}, names=["fork", "iteration"])
    with pytest.raises(DataValidationError):
        discard_warmup(dataset, "iteration", 100)
    with pytest.raises(DataValidationError):
        discard_warmup(dataset, "missing", 1)


def test_warmup_discarding_enables_reduction():
    names = ["instance", "fork", "iteration", "second"]
    grid = np.full((1, 3, 100, 1), 100.0)
    for fork, amplitude in enumerate((0.5, 0.8, 0.3)):
        for i in range(50):
            grid[0, fork, i, 0] = 100.0 * (1 + amplitude * np.exp(-i / 10))
    dataset = make_dataset({"ramp": grid}, names=names, parallel=["instance"])
    settings = OptimizationSettings(metric=StabilityMetric.CV, threshold=0.01)

    untouched = optimize(dataset, settings)["ramp"]
    assert untouched.flag is SelectionFlag.NOT_REDUCED
    assert untouched.duration_s == 300

    measured = discard_warmup(dataset, "iteration", 50)
    result = optimize(measured, settings)
    optimum = result["ramp"]
    assert optimum.configuration == ExecutionConfiguration((1, 1, 3, 1))
    assert optimum.duration_s == 3
    assert optimum.warmup_s == 50
    assert optimum.full_warmup_s == 150
    assert result.overall_savings_fraction == pytest.approx(1 - 53 / 300)

    report = evaluate(measured, result)
    assert report.total_warmup_full_s == 150
    assert report.total_warmup_min_s == 50


def test_cliffs_delta_known_values():
    same = cliffs_delta([1, 2, 3], [1, 2, 3])
    assert same.delta == 0
    assert same.category is EffectSizeCategory.NEGLIGIBLE
    assert cliffs_delta([4, 5, 6], [1, 2, 3]).delta == 1
    assert cliffs_delta([4, 5, 6], [1, 2, 3]).category is EffectSizeCategory.LARGE
    mixed = cliffs_delta([1, 2], [2, 3])
    assert mixed.delta == -0.75
    assert mixed.category is EffectSizeCategory.LARGE


def test_cliffs_delta_is_antisymmetric(rng):
    x, y = rng.normal(0, 1, 30), rng.normal(0.3, 1, 25)
    assert cliffs_delta(x, y).delta == pytest.approx(-cliffs_delta(y, x).delta)
    assert abs(cliffs_delta(x, y).delta) <= 1
    with pytest.raises(DataValidationError):
        cliffs_delta([], [1.0])


@pytest.mark.parametrize(
    "delta, category",
    [
        (0.0, EffectSizeCategory.NEGLIGIBLE),
        (0.146, EffectSizeCategory.NEGLIGIBLE),
        (0.147, EffectSizeCategory.SMALL),
        (-0.2, EffectSizeCategory.SMALL),
        (0.33, EffectSizeCategory.MEDIUM),
        (0.474, EffectSizeCategory.LARGE),
        (-1.0, EffectSizeCategory.LARGE),
    ],
)
def test_effect_size_boundaries(delta, category):
    assert categorize_effect_size(delta) is category


def test_pairwise_effect_sizes(rng):
    grids = {f"b{i}": 100 * (1 + 0.05 * rng.standard_normal((2, 3, 3))) for i in range(10)}
    dataset = make_dataset(grids)
    reports = {
        "minimum": evaluate(dataset, minimum_baseline(dataset, SETTINGS)),
        "full": evaluate(dataset, optimize(dataset, CV_SETTINGS.model_copy(update={"threshold": 0.0001}))),
    }
    sizes = pairwise_effect_sizes(reports)
    assert list(sizes) == [("minimum", "full")]
    # full change rates are all zero, so every positive reduced rate dominates
    expected = np.mean(reports["minimum"].change_rates > 0)
    assert sizes[("minimum", "full")].delta == pytest.approx(expected)
