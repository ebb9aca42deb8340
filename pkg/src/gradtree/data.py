"""CSV ingestion, one-hot encoding, and immutable row views over tabular data."""

import csv
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class Task(str, Enum):
    CLASSIFICATION = "classification"
    REGRESSION = "regression"


class DataError(ValueError):
    """Any ingestion failure: missing file, unparsable cell, bad labels."""


_MISSING = {"", "nan", "na", "null", "none"}


@dataclass(frozen=True)
class Dataset:
    """Dense numeric table: features (n, m), labels (n,), one name per column.

    Immutable after construction (arrays are flagged read-only), so views of it
    can be shared freely across threads.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple
    task: Task
    name: str = "dataset"

    def __post_init__(self):
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] < 1 or features.shape[1] < 1:
            raise DataError("features must be a nonempty 2-D matrix")
        if labels.shape != (features.shape[0],):
            raise DataError("labels must hold one value per feature row")
        if not np.isfinite(features).all():
            raise DataError("features contain NaN or infinite entries")
        if not np.isfinite(labels).all():
            raise DataError("labels contain NaN or infinite entries")
        names = tuple(str(c) for c in self.feature_names)
        if len(names) != features.shape[1]:
            raise DataError(
                f"{len(names)} feature names for {features.shape[1]} columns"
            )
        if len(set(names)) != len(names):
            raise DataError("feature names must be pairwise distinct")
        task = Task(self.task)
        if task is Task.CLASSIFICATION and not np.isin(labels, (0.0, 1.0)).all():
            raise DataError("classification labels must all be 0 or 1")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "task", task)

    @property
    def n_rows(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]


@dataclass(frozen=True)
class RowIndexSet:
    """Strictly increasing row positions into one Dataset."""

    indices: np.ndarray

    def __post_init__(self):
        idx = np.ascontiguousarray(self.indices, dtype=np.int64)
        if idx.ndim != 1 or idx.size == 0:
            raise DataError("row index set must be a nonempty 1-D sequence")
        if idx[0] < 0:
            raise DataError("row indices must be nonnegative")
        if idx.size > 1 and not (np.diff(idx) > 0).all():
            raise DataError("row indices must be strictly increasing (no duplicates)")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @classmethod
    def full(cls, n):
        return cls(np.arange(n, dtype=np.int64))

    def __len__(self):
        return int(self.indices.size)


def one_hot_encode(values):
    """Turn a string column into 0/1 indicator columns.

    One column per distinct value, ordered by first occurrence; each row has
    exactly one 1. Returns (categories, matrix).
    """
    values = [str(v) for v in values]
    if not values:
        raise DataError("cannot one-hot encode an empty column")
    categories = list(dict.fromkeys(values))
    lookup = {c: j for j, c in enumerate(categories)}
    matrix = np.zeros((len(values), len(categories)), dtype=np.float64)
    for i, v in enumerate(values):
        matrix[i, lookup[v]] = 1.0
    return categories, matrix


def _cell_error(path, row, column, text, why):
    return DataError(
        f"{path}: cannot ingest value {text!r} at data row {row}, column {column!r} ({why})"
    )


def _parse_numeric_column(path, column, cells):
    try:
        values = np.asarray(cells, dtype=np.float64)
    except ValueError:
        values = None
    if values is None or not np.isfinite(values).all():
        # Slow path only to locate and report the offending cell.
        for i, text in enumerate(cells):
            try:
                v = float(text)
            except ValueError:
                why = "missing value" if text.strip().lower() in _MISSING else "not a number"
                raise _cell_error(path, i + 1, column, text, why) from None
            if not math.isfinite(v):
                raise _cell_error(path, i + 1, column, text, "not finite")
        raise DataError(f"{path}: column {column!r} could not be parsed")  # pragma: no cover
    return values


def _parse_labels(path, column, cells, task):
    if task is Task.REGRESSION:
        return _parse_numeric_column(path, column, cells)
    # Classification: accept 0/1 numerics, or exactly two distinct strings
    # mapped to 0/1 in lexicographic order.
    try:
        values = np.asarray(cells, dtype=np.float64)
        numeric = True
    except ValueError:
        numeric = False
    if numeric:
        bad = ~np.isin(values, (0.0, 1.0))
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            why = ("missing label" if not math.isfinite(values[i])
                   else "classification labels must be 0 or 1")
            raise _cell_error(path, i + 1, column, cells[i], why)
        return values
    for i, text in enumerate(cells):
        if text.strip().lower() in _MISSING:
            raise _cell_error(path, i + 1, column, text, "missing label")
    distinct = sorted(set(cells))
    if len(distinct) != 2:
        raise DataError(
            f"{path}: classification label column {column!r} has "
            f"{len(distinct)} distinct values, expected exactly 2: {distinct[:5]}"
        )
    positive = distinct[1]
    return np.asarray([1.0 if c == positive else 0.0 for c in cells], dtype=np.float64)


def load_csv(path, label_column, task, categorical_columns=(), name=None):
    """Load a CSV file into a Dataset.

    Header row required; comma separated; '.' decimal point. Columns listed in
    `categorical_columns` are one-hot encoded in place with indicator names
    '<column>=<value>'; every other non-label column must parse as a finite
    number. Missing values are a hard error.
    """
    task = Task(task)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise DataError(f"{path}: file is empty") from None
            rows = list(reader)
    except FileNotFoundError:
        raise DataError(f"{path}: file not found") from None
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from None

    if len(set(header)) != len(header):
        dupes = sorted({h for h in header if header.count(h) > 1})
        raise DataError(f"{path}: duplicate header columns {dupes}")
    if label_column not in header:
        raise DataError(f"{path}: label column {label_column!r} not in header {header}")
    categorical = [c.strip() for c in categorical_columns or ()]
    for col in categorical:
        if col not in header:
            raise DataError(f"{path}: categorical column {col!r} not in header")
        if col == label_column:
            raise DataError(f"{path}: label column {label_column!r} cannot be categorical")
    if not rows:
        raise DataError(f"{path}: no data rows after the header")
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(
                f"{path}: data row {i + 1} has {len(row)} fields, header has {len(header)}"
            )

    columns = {h: [rows[i][j].strip() for i in range(len(rows))] for j, h in enumerate(header)}
    labels = _parse_labels(path, label_column, columns[label_column], task)

    feature_blocks = []
    feature_names = []
    for col in header:
        if col == label_column:
            continue
        cells = columns[col]
        if col in categorical:
            for i, text in enumerate(cells):
                if text.lower() in _MISSING:
                    raise _cell_error(path, i + 1, col, text, "missing value")
            categories, matrix = one_hot_encode(cells)
            feature_blocks.append(matrix)
            feature_names.extend(f"{col}={c}" for c in categories)
        else:
            feature_blocks.append(_parse_numeric_column(path, col, cells)[:, None])
            feature_names.append(col)

    features = np.hstack(feature_blocks)
    if name is None:
        name = str(path).rsplit("/", 1)[-1]
        name = name[:-4] if name.endswith(".csv") else name
    return Dataset(features, labels, tuple(feature_names), task, name=name)
