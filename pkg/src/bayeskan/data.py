"""Loading, imputation, standardization and stratified splitting of tabular data."""

from __future__ import annotations

import csv
import hashlib
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

PIMA_FEATURES = (
    "pregnancies",
    "glucose",
    "blood_pressure",
    "skin_thickness",
    "insulin",
    "bmi",
    "diabetes_pedigree",
    "age",
)
# a zero in these columns is physiologically impossible and marks a missing reading
PIMA_ZERO_IS_MISSING = ("glucose", "blood_pressure", "skin_thickness", "insulin", "bmi")
PIMA_ROWS = 768

HEART_FEATURES = (
    "age",
    "sex",
    "cp",
    "trestbps",
    "chol",
    "fbs",
    "restecg",
    "thalach",
    "exang",
    "oldpeak",
    "slope",
    "ca",
    "thal",
)
HEART_ROWS = 303
MISSING_TOKEN = "?"


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Standardization:
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardization":
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["std"], dtype=float))


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]
    standardization: Standardization | None = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels)
        if X.ndim != 2:
            raise DataError(f"features must be a 2-D matrix, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DataError(f"{X.shape[0]} feature rows but {y.shape} labels")
        if X.shape[1] != len(self.feature_names):
            raise DataError(f"{X.shape[1]} feature columns but {len(self.feature_names)} names")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain non-finite values")
        if not np.all(np.isin(y, (0, 1))):
            raise DataError("labels must be binary (0/1)")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y.astype(int))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        return replace(self, features=self.features[idx], labels=self.labels[idx])


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.2
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")


def file_checksum(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_table(path, n_columns: int | None = None, allow_missing: bool = False) -> tuple[list[str] | None, np.ndarray]:
    """Read a comma-separated numeric table; returns (header or None, matrix).

    A first row containing any non-numeric cell (other than the missing token)
    is taken as a header. Missing cells become NaN when ``allow_missing``.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    with path.open(newline="") as fh:
        rows = [[c.strip() for c in row] for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if not rows:
        raise DataError(f"{path} is empty")

    header = None
    if any(not _is_number(c) and c != MISSING_TOKEN for c in rows[0]):
        header, rows = rows[0], rows[1:]
    width = n_columns if n_columns is not None else len(rows[0]) if rows else len(header or [])
    values = np.empty((len(rows), width))
    for r, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: line {r + 1 + (header is not None)} has {len(row)} columns, expected {width}")
        for c, cell in enumerate(row):
            if cell == MISSING_TOKEN and allow_missing:
                values[r, c] = np.nan
            elif _is_number(cell):
                values[r, c] = float(cell)
            else:
                raise DataError(f"{path}: non-numeric cell {cell!r} at line {r + 1 + (header is not None)}, column {c + 1}")
    if header is not None and len(header) != width:
        raise DataError(f"{path}: header has {len(header)} columns, expected {width}")
    return header, values


def _impute_median(X: np.ndarray, columns) -> np.ndarray:
    X = X.copy()
    for c in columns:
        col = X[:, c]
        missing = np.isnan(col)
        if missing.all():
            raise DataError(f"column {c} has no observed values to impute from")
        col[missing] = np.median(col[~missing])
    return X


def load_pima(path) -> Dataset:
    """Pima Indians Diabetes: 8 features + outcome, zeros in physiological columns imputed."""
    _, values = read_table(path, n_columns=9)
    if len(values) != PIMA_ROWS:
        warnings.warn(f"expected {PIMA_ROWS} Pima rows, found {len(values)}", stacklevel=2)
    X, y = values[:, :8].copy(), values[:, 8]
    cols = [PIMA_FEATURES.index(name) for name in PIMA_ZERO_IS_MISSING]
    for c in cols:
        X[X[:, c] == 0, c] = np.nan
    return Dataset(_impute_median(X, cols), y, PIMA_FEATURES)


def load_heart(path) -> Dataset:
    """Cleveland heart disease: 13 features + ``num``; ``num > 0`` is the positive class."""
    _, values = read_table(path, n_columns=14, allow_missing=True)
    if len(values) != HEART_ROWS:
        warnings.warn(f"expected {HEART_ROWS} Cleveland rows, found {len(values)}", stacklevel=2)
    if np.isnan(values[:, 13]).any():
        raise DataError("the target column may not contain missing values")
    X = _impute_median(values[:, :13], range(13))
    return Dataset(X, (values[:, 13] > 0).astype(int), HEART_FEATURES)


def load_csv(path) -> Dataset:
    """Generic numeric CSV: every column but the last is a feature, the last a 0/1 label."""
    header, values = read_table(path, allow_missing=True)
    if values.shape[1] < 2:
        raise DataError("a CSV dataset needs at least one feature column and a label column")
    if np.isnan(values[:, -1]).any():
        raise DataError("the label column may not contain missing values")
    names = tuple(header[:-1]) if header else tuple(f"x{i}" for i in range(values.shape[1] - 1))
    X = _impute_median(values[:, :-1], [c for c in range(values.shape[1] - 1) if np.isnan(values[:, c]).any()])
    return Dataset(X, values[:, -1], names)


LOADERS = {"pima": load_pima, "heart": load_heart, "csv": load_csv}


def load_dataset(kind: str, path) -> Dataset:
    try:
        loader = LOADERS[kind]
    except KeyError:
        raise DataError(f"unknown dataset kind {kind!r}; choose from {sorted(LOADERS)}") from None
    return loader(path)


def standardize_fit(train: Dataset) -> Standardization:
    """Per-column mean and population standard deviation (divide by N)."""
    if len(train) == 0:
        raise DataError("cannot fit standardization on an empty dataset")
    return Standardization(train.features.mean(axis=0), train.features.std(axis=0))


def standardize_apply(stats: Standardization, ds: Dataset) -> Dataset:
    """Centre and scale; columns whose training std is below 1e-9 map to zero."""
    if len(ds) == 0:
        raise DataError("cannot standardize an empty dataset")
    return replace(ds, features=standardize_matrix(stats, ds.features), standardization=stats)


def standardize_matrix(stats: Standardization, X: np.ndarray) -> np.ndarray:
    degenerate = stats.std < 1e-9
    scale = np.where(degenerate, 1.0, stats.std)
    return np.where(degenerate, 0.0, (X - stats.mean) / scale)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split_indices(labels, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Seeded (train, test) index arrays with per-class rounding of the test share."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(spec.seed)
    if not spec.stratified:
        order = rng.permutation(len(labels))
        n_test = _round_half_up(len(labels) * spec.test_fraction)
        return np.sort(order[n_test:]), np.sort(order[:n_test])
    classes = np.unique(labels)
    if len(classes) < 2:
        raise DataError("stratified splitting needs both classes present")
    train, test = [], []
    for c in classes:
        members = np.flatnonzero(labels == c)
        members = members[rng.permutation(len(members))]
        n_test = _round_half_up(len(members) * spec.test_fraction)
        test.append(members[:n_test])
        train.append(members[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def stratified_split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    train_idx, test_idx = stratified_split_indices(ds.labels, spec)
    return ds.subset(train_idx), ds.subset(test_idx)
