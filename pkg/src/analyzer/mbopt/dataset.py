"""
Measurement data model for one benchmark suite campaign.

A campaign repeats every benchmark over nested repetition levels (for example
instances, suite runs, iterations and seconds), outermost level first. Each
benchmark's values are kept as a dense numpy grid shaped like the level counts,
so a shorter run is simulated by slicing a prefix of every axis.
"""
import itertools
import json
import logging
import math
import os
from dataclasses import dataclass
from enum import Enum
from types import MappingProxyType
from typing import Dict, FrozenSet, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from common.errors import (
    DataValidationError,
    InputFileError,
    IntegrityError,
    ParseError,
    UnknownBenchmarkError,
)
from .stability import seed_sequence

logger = logging.getLogger(__name__)

BENCHMARK_COLUMN = "benchmark"
VALUE_COLUMN = "value"


class ValueSemantics(str, Enum):
    LOWER_IS_BETTER = "lower_is_better"
    HIGHER_IS_BETTER = "higher_is_better"


class Level(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = Field(min_length=1)
    count: int = Field(ge=1)


class LevelSchema(BaseModel):
    """Repetition levels of a campaign, outermost first."""

    model_config = ConfigDict(frozen=True)

    levels: Tuple[Level, ...]
    leaf_duration_s: float = Field(gt=0)
    parallel_levels: FrozenSet[str] = frozenset()

    @model_validator(mode="after")
    def _check_levels(self) -> "LevelSchema":
        if not self.levels:
            raise ValueError("a schema needs at least one level")
        names = [level.name for level in self.levels]
        if len(set(names)) != len(names):
            raise ValueError(f"level names must be unique, got {names}")
        reserved = {BENCHMARK_COLUMN, VALUE_COLUMN} & set(names)
        if reserved:
            raise ValueError(f"level names clash with CSV columns: {sorted(reserved)}")
        unknown = set(self.parallel_levels) - set(names)
        if unknown:
            raise ValueError(f"parallel levels {sorted(unknown)} are not declared levels")
        return self

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(level.name for level in self.levels)

    @property
    def counts(self) -> Tuple[int, ...]:
        return tuple(level.count for level in self.levels)

    @property
    def e_max(self) -> "ExecutionConfiguration":
        return ExecutionConfiguration(self.counts)

    def level_index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataValidationError(f"unknown level '{name}', schema has {list(self.names)}") from None

    def with_count(self, name: str, count: int) -> "LevelSchema":
        index = self.level_index(name)
        levels = list(self.levels)
        levels[index] = Level(name=name, count=count)
        return LevelSchema(
            levels=tuple(levels),
            leaf_duration_s=self.leaf_duration_s,
            parallel_levels=self.parallel_levels,
        )


class SchemaDocument(LevelSchema):
    """The JSON sidecar describing a measurement CSV."""

    unit: str = "ns/op"
    value_semantics: ValueSemantics = ValueSemantics.LOWER_IS_BETTER

    def level_schema(self) -> LevelSchema:
        return LevelSchema(
            levels=self.levels,
            leaf_duration_s=self.leaf_duration_s,
            parallel_levels=self.parallel_levels,
        )


@dataclass(frozen=True, order=True)
class ExecutionConfiguration:
    """Per-level repetition counts, outermost level first."""

    counts: Tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if not counts or any(c < 1 for c in counts):
            raise DataValidationError(f"configuration counts must be positive, got {self.counts}")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def parse(cls, text: str) -> "ExecutionConfiguration":
        """Parse the ``1x2x5`` form used in result files."""
        try:
            return cls(tuple(int(part) for part in str(text).strip().split("x")))
        except ValueError:
            raise ParseError(f"invalid configuration '{text}', expected counts joined by 'x'") from None

    @property
    def repetitions(self) -> int:
        return math.prod(self.counts)

    def fits(self, schema: LevelSchema) -> bool:
        return len(self.counts) == len(schema.levels) and all(
            n <= level.count for n, level in zip(self.counts, schema.levels)
        )

    def validate_against(self, schema: LevelSchema) -> None:
        if len(self.counts) != len(schema.levels):
            raise DataValidationError(
                f"configuration {self} has {len(self.counts)} levels, schema has {len(schema.levels)}"
            )
        if not self.fits(schema):
            raise DataValidationError(f"configuration {self} exceeds schema counts {ExecutionConfiguration(schema.counts)}")

    def __iter__(self) -> Iterator[int]:
        return iter(self.counts)

    def __len__(self) -> int:
        return len(self.counts)

    def __getitem__(self, index: int) -> int:
        return self.counts[index]

    def __str__(self) -> str:
        return "x".join(str(c) for c in self.counts)


@dataclass(frozen=True)
class MeasurementRecord:
    benchmark_id: str
    indices: Tuple[int, ...]
    value: float


@dataclass(frozen=True)
class WarmupPhase:
    """Iterations discarded at the start of every repetition of the outer levels."""

    level_name: str
    count: int


@dataclass(frozen=True, eq=False)
class MeasurementDataset:
    """All values of one campaign: one complete, read-only grid per benchmark."""

    schema: LevelSchema
    unit: str
    value_semantics: ValueSemantics
    grids: Mapping[str, np.ndarray]
    label: str = "dataset"
    warmup: Optional[WarmupPhase] = None

    def __post_init__(self):
        frozen: Dict[str, np.ndarray] = {}
        for benchmark in sorted(self.grids):
            grid = np.array(self.grids[benchmark], dtype=float)
            if grid.shape != self.schema.counts:
                raise IntegrityError(
                    f"grid of {benchmark} has shape {grid.shape}, schema expects {self.schema.counts}"
                )
            grid.setflags(write=False)
            frozen[benchmark] = grid
        object.__setattr__(self, "grids", MappingProxyType(frozen))

    @property
    def benchmarks(self) -> Tuple[str, ...]:
        return tuple(self.grids)

    @property
    def e_max(self) -> ExecutionConfiguration:
        return self.schema.e_max

    def __contains__(self, benchmark: str) -> bool:
        return benchmark in self.grids

    def grid(self, benchmark: str) -> np.ndarray:
        try:
            return self.grids[benchmark]
        except KeyError:
            raise UnknownBenchmarkError(f"unknown benchmark '{benchmark}' in {self.label}") from None

    @property
    def records(self) -> Iterator[MeasurementRecord]:
        for benchmark, grid in self.grids.items():
            for position in np.ndindex(grid.shape):
                yield MeasurementRecord(benchmark, tuple(i + 1 for i in position), float(grid[position]))


def _format_indices(indices: Sequence[int]) -> str:
    return "(" + ",".join(str(i) for i in indices) + ")"


def load_schema(path: str) -> SchemaDocument:
    """Read the JSON sidecar that declares levels, leaf duration and units."""
    if not os.path.exists(path):
        raise InputFileError(f"schema file not found: {path}")
    try:
        with open(path, encoding="utf-8") as f:
            document = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON in schema {path}: {e.msg}", line=e.lineno) from e
    except OSError as e:
        raise InputFileError(f"cannot read schema {path}: {e}") from e
    try:
        return SchemaDocument.model_validate(document)
    except ValidationError as e:
        raise DataValidationError(f"invalid schema {path}: {e}") from e


def load_dataset(
    path: str,
    schema: LevelSchema,
    unit: str,
    value_semantics: ValueSemantics = ValueSemantics.LOWER_IS_BETTER,
    label: Optional[str] = None,
) -> MeasurementDataset:
    """
    Load and validate a measurement CSV.

    The header must be ``benchmark,<level names...>,value``. Every benchmark
    must cover the full index grid of the schema exactly once.

    Args:
        path: CSV file, UTF-8
        schema: Level schema the indices refer to
        unit: Measurement unit, e.g. ``ns/op``
        value_semantics: Whether lower or higher values are better
        label: Version label, defaults to the file name without extension

    Returns:
        The validated dataset
    """
    if not os.path.exists(path):
        raise InputFileError(f"dataset file not found: {path}")
    try:
        frame = pd.read_csv(
            path, dtype=str, keep_default_na=False, encoding="utf-8", skipinitialspace=True, skip_blank_lines=False
        )
    except pd.errors.ParserError as e:
        raise ParseError(str(e).strip()) from e
    except pd.errors.EmptyDataError as e:
        raise ParseError("file is empty, a header is required", line=1) from e
    except UnicodeDecodeError as e:
        raise ParseError(f"file is not valid UTF-8: {e}") from e
    except OSError as e:
        raise InputFileError(f"cannot read dataset {path}: {e}") from e

    expected = [BENCHMARK_COLUMN, *schema.names, VALUE_COLUMN]
    if [str(c).strip() for c in frame.columns] != expected:
        raise ParseError(f"header must be {','.join(expected)}, got {','.join(map(str, frame.columns))}", line=1)

    # blank lines and missing fields read as NaN
    rows = [
        tuple("" if pd.isna(cell) else str(cell).strip() for cell in row)
        for row in frame.itertuples(index=False, name=None)
    ]
    # trailing blank lines are tolerated, blank lines between rows are not
    while rows and not any(rows[-1]):
        rows.pop()

    counts = schema.counts
    grids: Dict[str, np.ndarray] = {}
    filled: Dict[str, np.ndarray] = {}
    # Line 1 is the header
    for line, cells in enumerate(rows, start=2):
        benchmark, *raw_indices, raw_value = cells
        if not any(cells):
            raise ParseError("empty row", line=line)
        if not benchmark:
            raise ParseError("empty benchmark id", line=line)
        try:
            indices = tuple(int(raw) for raw in raw_indices)
        except ValueError:
            raise ParseError(f"level indices must be integers, got {raw_indices}", line=line) from None
        try:
            value = float(raw_value)
        except ValueError:
            raise ParseError(f"value must be a decimal number, got '{raw_value}'", line=line) from None
        if not np.isfinite(value):
            raise ParseError(f"value must be finite, got '{raw_value}'", line=line)
        if value <= 0:
            raise DataValidationError(f"line {line}: value must be positive, got {value} for {benchmark}")
        for index, name, count in zip(indices, schema.names, counts):
            if not 1 <= index <= count:
                raise IntegrityError(
                    f"index {index} of level '{name}' outside 1..{count} for {benchmark} (line {line})"
                )

        if benchmark not in grids:
            grids[benchmark] = np.full(counts, np.nan)
            filled[benchmark] = np.zeros(counts, dtype=bool)
        position = tuple(i - 1 for i in indices)
        if filled[benchmark][position]:
            raise IntegrityError(f"duplicate index {_format_indices(indices)} for {benchmark} (line {line})")
        grids[benchmark][position] = value
        filled[benchmark][position] = True

    if not grids:
        raise DataValidationError(f"dataset {path} contains no measurements")
    for benchmark, mask in filled.items():
        if not mask.all():
            missing = tuple(int(i) + 1 for i in np.argwhere(~mask)[0])
            raise IntegrityError(f"missing index {_format_indices(missing)} for {benchmark}")

    if label is None:
        label = os.path.splitext(os.path.basename(path))[0]
    dataset = MeasurementDataset(
        schema=schema, unit=unit, value_semantics=ValueSemantics(value_semantics), grids=grids, label=label
    )
    logger.info(f"Loaded {len(grids)} benchmarks x {schema.e_max.repetitions} values from {path}")
    return dataset


def execution_duration(e: ExecutionConfiguration, schema: LevelSchema) -> float:
    """Wall-clock seconds of configuration e, without overhead.

    Levels listed as parallel run concurrently and do not add time.
    """
    e.validate_against(schema)
    sequential = math.prod(
        n for n, level in zip(e.counts, schema.levels) if level.name not in schema.parallel_levels
    )
    return sequential * schema.leaf_duration_s


def warmup_duration(e: ExecutionConfiguration, dataset: MeasurementDataset) -> float:
    """Seconds spent in the discarded warmup phase when running configuration e."""
    if dataset.warmup is None:
        return 0.0
    index = dataset.schema.level_index(dataset.warmup.level_name)
    e.validate_against(dataset.schema)
    warmup_counts = list(e.counts)
    warmup_counts[index] = dataset.warmup.count
    sequential = math.prod(
        n for n, level in zip(warmup_counts, dataset.schema.levels)
        if level.name not in dataset.schema.parallel_levels
    )
    return sequential * dataset.schema.leaf_duration_s


def find_all_smaller_configurations(
    e_max: ExecutionConfiguration, schema: Optional[LevelSchema] = None
) -> List[ExecutionConfiguration]:
    """
    Every configuration entry-wise between (1, ..., 1) and e_max, e_max included.

    Ordered by duration (by repetitions when no schema is given), then
    lexicographically with the outermost level first.
    """
    candidates = [
        ExecutionConfiguration(counts)
        for counts in itertools.product(*(range(1, n + 1) for n in e_max.counts))
    ]
    if schema is None:
        return sorted(candidates, key=lambda e: (e.repetitions, e.counts))
    return sorted(candidates, key=lambda e: (execution_duration(e, schema), e.counts))


def get_measurements(e: ExecutionConfiguration, dataset: MeasurementDataset, benchmark: str) -> np.ndarray:
    """Values a run with configuration e would have collected, outermost index slowest."""
    grid = dataset.grid(benchmark)
    e.validate_against(dataset.schema)
    return grid[tuple(slice(0, n) for n in e.counts)].ravel()


def rmit_schedule(
    benchmarks: Sequence[str], iterations_per_suite_run: int, suite_runs: int, seed: int
) -> List[List[str]]:
    """Randomized multiple interleaved trials: one shuffled ordering per suite run."""
    if not benchmarks:
        raise DataValidationError("an RMIT schedule needs at least one benchmark")
    if iterations_per_suite_run < 1 or suite_runs < 1:
        raise DataValidationError("iterations per suite run and suite runs must be positive")
    rng = np.random.default_rng(seed_sequence(seed))
    slots = np.repeat(np.array(list(benchmarks), dtype=object), iterations_per_suite_run)
    return [[str(b) for b in rng.permutation(slots)] for _ in range(suite_runs)]
