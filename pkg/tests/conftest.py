import json
import os

import numpy as np
import pytest

from mbopt.dataset import Level, LevelSchema, MeasurementDataset, ValueSemantics
from mbopt.stability import BootstrapSettings


def make_schema(counts, names=None, leaf=1.0, parallel=()):
    names = names or [f"level{k + 1}" for k in range(len(counts))]
    return LevelSchema(
        levels=tuple(Level(name=n, count=c) for n, c in zip(names, counts)),
        leaf_duration_s=leaf,
        parallel_levels=frozenset(parallel),
    )


def make_dataset(grids, names=None, leaf=1.0, parallel=(), label="v1", semantics=ValueSemantics.LOWER_IS_BETTER):
    """Dataset from {benchmark: array}; all arrays share one shape."""
    shape = np.shape(next(iter(grids.values())))
    return MeasurementDataset(
        schema=make_schema(shape, names, leaf, parallel),
        unit="ns/op",
        value_semantics=semantics,
        grids={b: np.asarray(g, dtype=float) for b, g in grids.items()},
        label=label,
    )


def noisy_grid(rng, shape, base=100.0, noise=0.01):
    return base * (1.0 + noise * rng.standard_normal(shape))


def write_dataset_csv(dataset, path):
    lines = [",".join(["benchmark", *dataset.schema.names, "value"])]
    for record in dataset.records:
        lines.append(",".join([record.benchmark_id, *map(str, record.indices), repr(record.value)]))
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    return path


def write_schema_json(schema, path, unit="ns/op", semantics="lower_is_better"):
    document = {
        "levels": [{"name": level.name, "count": level.count} for level in schema.levels],
        "leaf_duration_s": schema.leaf_duration_s,
        "parallel_levels": sorted(schema.parallel_levels),
        "unit": unit,
        "value_semantics": semantics,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f)
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def fast_bootstrap():
    return BootstrapSettings(confidence_level=0.99, resamples=500, seed=7)


@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch):
    monkeypatch.delenv("UOPTIME_SEED", raising=False)
