"""Tabular data container, CSV ingestion, splits and sensitive-cell mutation.

A :class:`Table` holds an already-encoded numeric dataset: every cell is a
real number, the label is binary (1 = positive outcome) and each sensitive
attribute is binary (1 = privileged group). The model-visible feature
matrix carries one trailing column per sensitive attribute, in schema
order, so classifiers consume the protected attributes; the same values
are kept in the ``sensitive`` map for metric computation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParameterError, SchemaError, StratificationError
from .rng import rng_from

SPLIT_FRACTIONS = (0.5, 0.2, 0.3)  # train, validation, test
MUTATION_FRACTIONS = tuple(round(0.1 * k, 1) for k in range(1, 11))


@dataclass(frozen=True)
class DatasetSchema:
    """Column roles: label name, its positive raw value, and the ordered
    map of sensitive column name -> privileged raw value."""

    label: str
    positive: float
    sensitive: dict[str, float]

    def __post_init__(self):
        if not self.sensitive:
            raise SchemaError("schema needs at least one sensitive column")
        if self.label in self.sensitive:
            raise SchemaError(f"label column {self.label!r} cannot be sensitive")


@dataclass(frozen=True)
class Table:
    """Immutable encoded dataset.

    ``features`` has ``len(feature_names) + len(sensitive)`` columns: the
    named regular features followed by one duplicated column per sensitive
    attribute (schema order). Arrays are frozen after construction so a
    Table can be shared across threads and processes.
    """

    feature_names: tuple[str, ...]
    features: np.ndarray
    labels: np.ndarray
    sensitive: dict[str, np.ndarray] = field(repr=False)

    def __post_init__(self):
        n = self.labels.shape[0]
        if n < 1:
            raise DataError("table must contain at least one row")
        expected_cols = len(self.feature_names) + len(self.sensitive)
        if self.features.shape != (n, expected_cols):
            raise SchemaError(
                f"feature matrix is {self.features.shape}, expected ({n}, {expected_cols})"
            )
        if set(self.feature_names) & set(self.sensitive):
            raise SchemaError("sensitive column names must not appear in feature_names")
        if not np.isin(self.labels, (0, 1)).all():
            raise DataError("labels must be exactly 0 or 1")
        for j, (name, vec) in enumerate(self.sensitive.items()):
            if vec.shape != (n,):
                raise SchemaError(f"sensitive column {name!r} has length {vec.shape}")
            if not np.isin(vec, (0, 1)).all():
                raise DataError(f"sensitive column {name!r} must be exactly 0 or 1")
            col = len(self.feature_names) + j
            if not np.array_equal(self.features[:, col], vec.astype(np.float64)):
                raise SchemaError(
                    f"trailing feature column {col} must duplicate sensitive column {name!r}"
                )
        for arr in (self.features, self.labels, *self.sensitive.values()):
            arr.flags.writeable = False

    @property
    def n_rows(self) -> int:
        return self.labels.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def sensitive_names(self) -> tuple[str, ...]:
        return tuple(self.sensitive)

    def sensitive_column_index(self, name: str) -> int:
        """Column of ``features`` that duplicates the named sensitive attribute."""
        names = self.sensitive_names
        if name not in names:
            raise SchemaError(f"unknown sensitive column {name!r}")
        return len(self.feature_names) + names.index(name)


@dataclass(frozen=True)
class SplitIndices:
    """Disjoint train/validation/test row indices covering a table."""

    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        stacked = np.concatenate([self.train, self.validation, self.test])
        if np.unique(stacked).size != stacked.size:
            raise ParameterError("split partitions overlap")
        for arr in (self.train, self.validation, self.test):
            arr.flags.writeable = False

    @property
    def n_rows(self) -> int:
        return self.train.size + self.validation.size + self.test.size


def load_csv(path, schema: DatasetSchema) -> Table:
    """Read an encoded CSV (header row, numeric cells) into a Table.

    The label column is binarized against ``schema.positive``; each
    sensitive column must hold at most two distinct raw values and is
    binarized against its privileged value. Row order is preserved.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)
    if not rows:
        raise DataError(f"{path}: no data rows")

    if schema.label not in header:
        raise SchemaError(f"label column {schema.label!r} not found in {path}")
    for name in schema.sensitive:
        if name not in header:
            raise SchemaError(f"sensitive column {name!r} not found in {path}")

    n_cols = len(header)
    raw = np.empty((len(rows), n_cols), dtype=np.float64)
    for i, row in enumerate(rows):
        if len(row) != n_cols:
            raise DataError(f"{path}: row {i} has {len(row)} cells, header has {n_cols}")
        for j, cell in enumerate(row):
            try:
                raw[i, j] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: row {i}, column {header[j]!r}: non-numeric cell {cell!r}"
                ) from None

    label_idx = header.index(schema.label)
    labels = (raw[:, label_idx] == schema.positive).astype(np.int8)

    sensitive: dict[str, np.ndarray] = {}
    for name, privileged in schema.sensitive.items():
        col = raw[:, header.index(name)]
        other = None
        for i, v in enumerate(col):
            if v == privileged:
                continue
            if other is None:
                other = v
            elif v != other:
                raise DataError(
                    f"{path}: row {i}, sensitive column {name!r}: "
                    f"third distinct value {v!r} (column is not binary)"
                )
        sensitive[name] = (col == privileged).astype(np.int8)

    excluded = {label_idx} | {header.index(name) for name in schema.sensitive}
    feature_cols = [j for j in range(n_cols) if j not in excluded]
    feature_names = tuple(header[j] for j in feature_cols)
    sens_block = np.column_stack([sensitive[n].astype(np.float64) for n in schema.sensitive])
    features = np.ascontiguousarray(np.hstack([raw[:, feature_cols], sens_block]))
    return Table(feature_names, features, labels, sensitive)


def table_from_arrays(x, y, sensitive: dict) -> Table:
    """Build a Table from plain arrays: a regular feature matrix (columns
    named f0, f1, ...), binary labels, and a dict of binary sensitive
    vectors that get appended as the duplicated trailing columns."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise SchemaError(f"feature matrix must be 2-D, got shape {x.shape}")
    y = np.asarray(y, dtype=np.int8)
    sens = {name: np.asarray(vec, dtype=np.int8) for name, vec in sensitive.items()}
    block = np.column_stack([sens[n].astype(np.float64) for n in sens])
    features = np.ascontiguousarray(np.hstack([x, block]))
    names = tuple(f"f{j}" for j in range(x.shape[1]))
    return Table(names, features, y, sens)


def _allocate(count: int, fractions=SPLIT_FRACTIONS) -> list[int]:
    # largest-remainder apportionment; ties go to the earlier partition
    exact = [count * f for f in fractions]
    base = [math.floor(e) for e in exact]
    order = sorted(range(len(fractions)), key=lambda i: (base[i] - exact[i], i))
    for i in order[: count - sum(base)]:
        base[i] += 1
    return base


def split(table: Table, seed: int) -> SplitIndices:
    """Seeded label-stratified 50/20/30 split of the table's rows."""
    if table.n_rows < 10:
        raise ParameterError(f"need at least 10 rows to split, got {table.n_rows}")
    rng = rng_from(seed, "split")
    parts: list[list[np.ndarray]] = [[], [], []]
    for cls in (0, 1):
        members = np.flatnonzero(table.labels == cls)
        if members.size == 0:
            continue
        if members.size < len(SPLIT_FRACTIONS):
            raise StratificationError(
                f"label class {cls} has {members.size} rows, fewer than "
                f"{len(SPLIT_FRACTIONS)} partitions"
            )
        members = rng.permutation(members)
        counts = _allocate(members.size)
        offset = 0
        for k, c in enumerate(counts):
            parts[k].append(members[offset : offset + c])
            offset += c
    train, validation, test = (np.sort(np.concatenate(p)) for p in parts)
    return SplitIndices(train, validation, test)


def _flip_count(fraction: float, n_rows: int) -> int:
    # round half up; the epsilon absorbs float jitter in fraction * n
    return int(math.floor(fraction * n_rows + 0.5 + 1e-9))


def mutate_sensitive(table: Table, rows, fraction: float, seed: int) -> Table:
    """Copy of ``table`` with a seeded bit-flip x -> 1-x applied to a
    ``fraction`` of the given rows' sensitive cells, per column
    independently (both in the sensitive map and in the duplicated
    feature column)."""
    if not any(abs(fraction - f) < 1e-9 for f in MUTATION_FRACTIONS):
        raise ParameterError(
            f"mutation fraction {fraction!r} not in {{0.1, 0.2, ..., 1.0}}"
        )
    rows = np.unique(np.asarray(rows, dtype=np.int64))
    if rows.size and (rows[0] < 0 or rows[-1] >= table.n_rows):
        raise ParameterError("row indices out of range")
    count = _flip_count(fraction, rows.size)

    features = table.features.copy()
    sensitive: dict[str, np.ndarray] = {}
    for j, (name, vec) in enumerate(table.sensitive.items()):
        new_vec = vec.copy()
        if count:
            chosen = rng_from(seed, "flip", name).choice(rows, size=count, replace=False)
            new_vec[chosen] = 1 - new_vec[chosen]
            col = len(table.feature_names) + j
            features[chosen, col] = 1.0 - features[chosen, col]
        sensitive[name] = new_vec
    return Table(table.feature_names, features, table.labels.copy(), sensitive)


def subgroup_of(table: Table, row: int) -> tuple[int, ...]:
    """The row's sensitive values as a tuple in schema order."""
    if not 0 <= row < table.n_rows:
        raise ParameterError(f"row {row} out of range for {table.n_rows} rows")
    return tuple(int(vec[row]) for vec in table.sensitive.values())


def subgroup_matrix(table: Table, rows=None) -> np.ndarray:
    """Per-row subgroup keys as an (n, n_sensitive) int array."""
    cols = [vec for vec in table.sensitive.values()]
    mat = np.column_stack(cols)
    return mat if rows is None else mat[np.asarray(rows, dtype=np.int64)]
