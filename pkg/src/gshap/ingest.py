"""Dataset loading, splitting, standardization and background construction."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .core import DataError, FeatureMatrix, label_str

__all__ = [
    "LoadError",
    "SplitError",
    "Schema",
    "Dataset",
    "Standardizer",
    "load_csv",
    "write_csv",
    "train_test_split",
    "shuffle_background",
    "standardize",
]


class LoadError(DataError):
    pass


class SplitError(DataError):
    pass


@dataclass(frozen=True)
class Schema:
    """Column roles by name.

    ``features=None`` means every column that is not the target (and not the
    group column, unless ``group_is_feature``).
    """

    features: tuple[str, ...] | None = None
    target: str | None = None
    group: str | None = None
    group_is_feature: bool = False

    @classmethod
    def parse(cls, text: str | None) -> "Schema":
        """Build a schema from a JSON file path or a JSON literal."""
        if not text:
            return cls()
        if os.path.exists(text):
            with open(text, encoding="utf-8") as fh:
                raw = json.load(fh)
        else:
            try:
                raw = json.loads(text)
            except json.JSONDecodeError as exc:
                raise LoadError(f"schema is neither a file nor valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise LoadError("schema must be a JSON object")
        unknown = set(raw) - {"features", "target", "group", "group_is_feature"}
        if unknown:
            raise LoadError(f"unknown schema keys: {sorted(unknown)}")
        feats = raw.get("features")
        return cls(
            features=None if feats is None else tuple(feats),
            target=raw.get("target"),
            group=raw.get("group"),
            group_is_feature=bool(raw.get("group_is_feature", False)),
        )

    def resolve(self, header: Sequence[str]) -> tuple[str, ...]:
        """Validate roles against ``header`` and return the feature columns."""
        header = list(header)
        for role, col in (("target", self.target), ("group", self.group)):
            if col is not None and col not in header:
                raise LoadError(f"{role} column {col!r} not in header")
        if self.target is not None and self.target == self.group:
            raise LoadError("target and group roles overlap")
        if self.features is None:
            excluded = {self.target}
            if not self.group_is_feature:
                excluded.add(self.group)
            feats = tuple(c for c in header if c not in excluded)
        else:
            feats = tuple(self.features)
            missing = [c for c in feats if c not in header]
            if missing:
                raise LoadError(f"feature columns missing from header: {missing}")
            if self.target in feats:
                raise LoadError(f"target column {self.target!r} also declared as a feature")
            if self.group in feats and not self.group_is_feature:
                raise LoadError(f"group column {self.group!r} also declared as a feature")
        if not feats:
            raise LoadError("no feature columns")
        return feats


@dataclass(frozen=True, eq=False)
class Dataset:
    features: FeatureMatrix
    target: np.ndarray | None = None
    group: np.ndarray | None = None
    schema: Schema = field(default_factory=Schema)

    def __post_init__(self) -> None:
        n = self.features.n
        for role in ("target", "group"):
            col = getattr(self, role)
            if col is None:
                continue
            col = np.array(col, copy=True)
            if col.ndim != 1 or len(col) != n:
                raise DataError(f"{role} column has shape {col.shape}, expected ({n},)")
            col.setflags(write=False)
            object.__setattr__(self, role, col)

    @property
    def n(self) -> int:
        return self.features.n

    def take(self, rows: np.ndarray | Sequence[int]) -> "Dataset":
        idx = np.asarray(rows, dtype=np.intp)
        return Dataset(
            self.features.take(idx),
            None if self.target is None else self.target[idx],
            None if self.group is None else self.group[idx],
            self.schema,
        )

    def target_as_float(self) -> np.ndarray:
        if self.target is None:
            raise DataError("dataset has no target column")
        try:
            y = self.target.astype(np.float64)
        except ValueError:
            raise DataError("target column is not numeric") from None
        if not np.all(np.isfinite(y)):
            raise DataError("target column has non-finite values")
        return y

    def target_as_labels(self) -> np.ndarray:
        if self.target is None:
            raise DataError("dataset has no target column")
        return np.array([label_str(v) for v in self.target], dtype=object)


def load_csv(path: str | os.PathLike[str], schema: Schema | None = None) -> Dataset:
    """Read a headed, comma-separated file into a ``Dataset``.

    Feature cells must parse as finite floats; target and group cells are
    kept as strings unless every cell in the column is numeric.
    """
    schema = schema or Schema()
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise LoadError(f"cannot read {path}: {exc}") from None
    if not rows or not rows[0]:
        raise LoadError(f"{path}: missing header row")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise LoadError(f"{path}: duplicate column names in header")
    body = [r for r in rows[1:] if r and any(cell.strip() for cell in r)]
    if not body:
        raise LoadError(f"{path}: no data rows")
    for i, r in enumerate(body, start=1):
        if len(r) != len(header):
            raise LoadError(f"{path}: row {i} has {len(r)} fields, header has {len(header)}")
    feats = schema.resolve(header)
    col_index = {name: k for k, name in enumerate(header)}

    values = np.empty((len(body), len(feats)), dtype=np.float64)
    for j, name in enumerate(feats):
        k = col_index[name]
        for i, r in enumerate(body):
            try:
                v = float(r[k])
            except ValueError:
                raise LoadError(f"{path}: row {i + 1}, column {name!r}: cannot parse {r[k]!r}") from None
            if not np.isfinite(v):
                raise LoadError(f"{path}: row {i + 1}, column {name!r}: non-finite value {r[k]!r}")
            values[i, j] = v

    def role_column(name: str | None) -> np.ndarray | None:
        if name is None:
            return None
        raw = [r[col_index[name]].strip() for r in body]
        try:
            nums = np.array([float(v) for v in raw])
        except ValueError:
            return np.array(raw, dtype=object)
        if not np.all(np.isfinite(nums)):
            bad = int(np.argmin(np.isfinite(nums)))
            raise LoadError(f"{path}: row {bad + 1}, column {name!r}: non-finite value")
        return nums

    return Dataset(FeatureMatrix(values, feats), role_column(schema.target), role_column(schema.group), schema)


def write_csv(ds: Dataset, path: str | os.PathLike[str]) -> None:
    """Write ``ds`` so that ``load_csv(path, ds.schema)`` reproduces it."""
    names = list(ds.features.feature_names)
    extra: list[tuple[str, np.ndarray]] = []
    if ds.target is not None:
        extra.append((ds.schema.target or "target", ds.target))
    if ds.group is not None and (ds.schema.group or "group") not in names:
        extra.append((ds.schema.group or "group", ds.group))

    def fmt(v: Any) -> str:
        return repr(float(v)) if isinstance(v, (float, np.floating, int, np.integer)) else str(v)

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + [name for name, _ in extra])
        for i in range(ds.n):
            w.writerow([fmt(v) for v in ds.features.values[i]] + [fmt(col[i]) for _, col in extra])


def train_test_split(ds: Dataset, test_fraction: float, seed: int, shuffle: bool = True) -> tuple[Dataset, Dataset]:
    """Split into (train, test) with ``round(n * test_fraction)`` test rows.

    With ``shuffle=False`` the last rows form the test set, which is what a
    forecasting setup wants. Each side keeps its original row order.
    """
    if not 0.0 < test_fraction < 1.0:
        raise SplitError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = ds.n
    n_test = int(round(n * test_fraction))
    if n_test < 1 or n_test > n - 1:
        raise SplitError(f"test_fraction={test_fraction} on {n} rows leaves an empty side")
    if shuffle:
        order = np.random.default_rng(seed).permutation(n)
        test_idx, train_idx = np.sort(order[:n_test]), np.sort(order[n_test:])
    else:
        train_idx, test_idx = np.arange(n - n_test), np.arange(n - n_test, n)
    return ds.take(train_idx), ds.take(test_idx)


def shuffle_background(data: Dataset | FeatureMatrix, seed: int, per_column: bool = True) -> FeatureMatrix:
    """Permute the rows of each column independently.

    Every column keeps its exact multiset of values while the association
    between columns is destroyed. ``per_column=False`` shuffles whole rows
    instead.
    """
    fm = data.features if isinstance(data, Dataset) else data
    if fm.n < 2:
        return fm
    rng = np.random.default_rng(seed)
    if not per_column:
        return fm.take(rng.permutation(fm.n))
    out = np.empty_like(fm.values)
    for j in range(fm.p):
        out[:, j] = fm.values[rng.permutation(fm.n), j]
    return fm.with_values(out)


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, values: np.ndarray) -> "Standardizer":
        values = np.asarray(values, dtype=np.float64)
        mean = values.mean(axis=0)
        std = values.std(axis=0)
        # zero-variance columns are centered only
        scale = np.where(std > 0, std, 1.0)
        return cls(mean, scale)

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.scale

    def inverse_transform(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.scale + self.mean


def standardize(train: FeatureMatrix, *apply_to: FeatureMatrix) -> tuple[FeatureMatrix, list[FeatureMatrix], Standardizer]:
    """Z-score ``train`` and apply the same parameters to ``apply_to``."""
    params = Standardizer.fit(train.values)
    others = [m.with_values(params.transform(m.values)) for m in apply_to]
    return train.with_values(params.transform(train.values)), others, params
