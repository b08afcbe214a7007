"""Domain types, coalition arithmetic and hybrid-row composition.

Everything here is immutable after construction. Arrays held by the types
are copied on the way in and flagged read-only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Sequence

import numpy as np

__all__ = [
    "GShapError",
    "ConfigurationError",
    "DataError",
    "ComputeError",
    "DomainError",
    "CompositionError",
    "DegenerateError",
    "FeatureCountError",
    "NormalizationError",
    "FeatureMatrix",
    "Coalition",
    "Explanation",
    "coalition_weight",
    "hybrid_compose",
    "check_probability_rows",
    "label_str",
]

# Above this feature count the rational path gets slow; log-space takes over.
EXACT_RATIONAL_MAX_P = 20


class GShapError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(GShapError):
    """Inconsistent or missing configuration."""


class DataError(GShapError):
    """Input data that cannot be used as given."""


class ComputeError(GShapError):
    """A numerical computation could not be carried out."""


class DomainError(ComputeError, ValueError):
    pass


class CompositionError(DataError):
    pass


class DegenerateError(ComputeError):
    """A generalized function is undefined for the given model outputs."""


class FeatureCountError(ConfigurationError):
    pass


class NormalizationError(ComputeError):
    pass


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """An n x p table of finite floats with named columns."""

    values: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim == 1:
            values = values.reshape(1, -1)
        if values.ndim != 2:
            raise DataError(f"feature matrix must be 2-D, got shape {values.shape}")
        n, p = values.shape
        if n < 1 or p < 1:
            raise DataError(f"feature matrix must be non-empty, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            row, col = np.argwhere(~np.isfinite(values))[0]
            raise DataError(f"non-finite value at row {row}, column {col}")
        names = tuple(str(name) for name in self.feature_names)
        if len(names) != p:
            raise DataError(f"{len(names)} feature names for {p} columns")
        if len(set(names)) != p:
            raise DataError(f"feature names are not unique: {names}")
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "feature_names", names)

    @classmethod
    def from_array(cls, values: Any, feature_names: Sequence[str] | None = None) -> "FeatureMatrix":
        arr = np.atleast_2d(np.asarray(values, dtype=np.float64))
        if feature_names is None:
            feature_names = [f"x{j}" for j in range(arr.shape[1])]
        return cls(arr, tuple(feature_names))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def take(self, rows: Iterable[int] | np.ndarray) -> "FeatureMatrix":
        idx = np.asarray(list(rows) if not isinstance(rows, np.ndarray) else rows, dtype=np.intp)
        return FeatureMatrix(self.values[idx], self.feature_names)

    def with_values(self, values: np.ndarray) -> "FeatureMatrix":
        return FeatureMatrix(values, self.feature_names)

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return self.feature_names == other.feature_names and np.array_equal(self.values, other.values)

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class Coalition:
    """A subset of feature indices out of ``p`` features."""

    members: frozenset[int]
    p: int

    def __post_init__(self) -> None:
        if self.p < 1:
            raise DomainError(f"p must be positive, got {self.p}")
        members = frozenset(int(j) for j in self.members)
        bad = [j for j in members if not 0 <= j < self.p]
        if bad:
            raise DomainError(f"coalition members {sorted(bad)} outside 0..{self.p - 1}")
        object.__setattr__(self, "members", members)

    @classmethod
    def full(cls, p: int) -> "Coalition":
        return cls(frozenset(range(p)), p)

    @classmethod
    def empty(cls, p: int) -> "Coalition":
        return cls(frozenset(), p)

    @classmethod
    def from_mask(cls, mask: int, p: int) -> "Coalition":
        return cls(frozenset(j for j in range(p) if mask >> j & 1), p)

    @property
    def mask(self) -> int:
        return sum(1 << j for j in self.members)

    def complement(self) -> "Coalition":
        return Coalition(frozenset(range(self.p)) - self.members, self.p)

    def indicator(self) -> np.ndarray:
        out = np.zeros(self.p, dtype=bool)
        out[list(self.members)] = True
        return out

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, j: object) -> bool:
        return j in self.members

    def __str__(self) -> str:
        return "{" + ",".join(str(j) for j in sorted(self.members)) + "}"


@dataclass(frozen=True, eq=False)
class Explanation:
    """Per-feature attributions of ``g_full - g_empty``.

    ``stderr`` is ``None`` for exact results and for sampled results built
    from a single permutation.
    """

    phi: np.ndarray
    g_full: float
    g_empty: float
    method: str
    feature_names: tuple[str, ...]
    stderr: np.ndarray | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        phi = _readonly(np.array(self.phi, dtype=np.float64))
        if phi.ndim != 1 or len(phi) != len(self.feature_names):
            raise DomainError(f"phi has shape {phi.shape} for {len(self.feature_names)} features")
        if self.method not in ("exact", "sampled"):
            raise DomainError(f"unknown method {self.method!r}")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if self.stderr is not None:
            object.__setattr__(self, "stderr", _readonly(np.array(self.stderr, dtype=np.float64)))

    @property
    def p(self) -> int:
        return len(self.phi)

    @property
    def difference(self) -> float:
        return self.g_full - self.g_empty

    def efficiency_gap(self) -> float:
        return abs(float(math.fsum(self.phi)) - self.difference)

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "g_full": self.g_full,
            "g_empty": self.g_empty,
            "features": list(self.feature_names),
            "phi": [float(v) for v in self.phi],
            "stderr": None if self.stderr is None else [float(v) for v in self.stderr],
            "meta": dict(self.meta),
        }


def coalition_weight(s_size: int, p: int) -> float:
    """Shapley weight ``|S|! (p-|S|-1)! / p!`` of a coalition of size ``s_size``.

    Exact rational arithmetic for ``p <= 20``, log-factorials above that.
    """
    if isinstance(s_size, bool) or isinstance(p, bool):
        raise DomainError("coalition_weight takes integers")
    s_size, p = int(s_size), int(p)
    if p < 1 or s_size < 0 or s_size > p - 1:
        raise DomainError(f"need 0 <= s_size <= p-1 and p >= 1, got s_size={s_size}, p={p}")
    if p <= EXACT_RATIONAL_MAX_P:
        return float(Fraction(math.factorial(s_size) * math.factorial(p - s_size - 1), math.factorial(p)))
    log_w = math.lgamma(s_size + 1) + math.lgamma(p - s_size) - math.lgamma(p + 1)
    return math.exp(log_w)


def hybrid_compose(sample: FeatureMatrix, background_rows: FeatureMatrix, coalition: Coalition) -> FeatureMatrix:
    """Take coalition columns from ``sample`` and the rest from ``background_rows``.

    Rows are paired by position, so both matrices must have the same shape.
    """
    if sample.feature_names != background_rows.feature_names:
        raise CompositionError("sample and background have different feature names")
    if sample.shape != background_rows.shape:
        raise CompositionError(f"sample shape {sample.shape} != background shape {background_rows.shape}")
    if coalition.p != sample.p:
        raise CompositionError(f"coalition over {coalition.p} features, matrix has {sample.p}")
    mixed = np.where(coalition.indicator()[None, :], sample.values, background_rows.values)
    return FeatureMatrix(mixed, sample.feature_names)


def label_str(v: Any) -> str:
    """Canonical string form of a class label; integral floats lose their ``.0``."""
    if isinstance(v, (float, np.floating)) and float(v).is_integer():
        return str(int(v))
    return str(v)


def check_probability_rows(probs: np.ndarray, atol: float = 1e-9) -> None:
    """Raise ``DomainError`` unless every row is a probability vector."""
    probs = np.asarray(probs)
    if probs.ndim != 2:
        raise DomainError(f"probability output must be 2-D, got shape {probs.shape}")
    if not np.all(np.isfinite(probs)) or np.any(probs < 0):
        raise DomainError("probability rows must be finite and nonnegative")
    sums = probs.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > atol):
        worst = int(np.argmax(np.abs(sums - 1.0)))
        raise DomainError(f"probability row {worst} sums to {sums[worst]!r}")
