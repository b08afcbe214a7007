"""Scalar set-functions g(f, X, omega) of a model's outputs over a whole sample.

Each function works on a batch of model outputs at once: ``reduce`` takes an
array of shape ``(B, n)`` (scalar models) or ``(B, n, C)`` (classifiers) and
returns ``B`` values. Calling the function on ``(model, X)`` is the B=1 case.

All variants are oriented so that larger values mean more of the explained
phenomenon; the squared-error loss is therefore negated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Sequence, Union

import numpy as np

from .core import ConfigurationError, DegenerateError, FeatureMatrix, label_str

__all__ = [
    "ClassPartition",
    "GroupAssignment",
    "LabelSet",
    "GeneralizedFunction",
    "OutputG",
    "ClassificationG",
    "IntergroupG",
    "LossG",
    "output_g",
    "classification_g",
    "intergroup_g",
    "loss_g",
]

DifferenceMeasure = Union[str, Callable[[np.ndarray, np.ndarray], np.ndarray]]


def _class_index(class_labels: Sequence[str] | None, label: Any) -> int:
    if class_labels is None:
        raise ConfigurationError("model has scalar output; a class label makes no sense here")
    labels = [str(c) for c in class_labels]
    key = label_str(label)
    if key not in labels:
        raise ConfigurationError(f"class {label!r} not among model classes {labels}")
    return labels.index(key)


@dataclass(frozen=True)
class ClassPartition:
    positive_classes: frozenset[str]
    negative_classes: frozenset[str]

    def __init__(self, positive_classes: Sequence[Any], negative_classes: Sequence[Any]):
        pos = frozenset(label_str(c) for c in positive_classes)
        neg = frozenset(label_str(c) for c in negative_classes)
        if not pos or not neg:
            raise ConfigurationError("positive and negative class sets must be nonempty")
        if pos & neg:
            raise ConfigurationError(f"classes {sorted(pos & neg)} are both positive and negative")
        object.__setattr__(self, "positive_classes", pos)
        object.__setattr__(self, "negative_classes", neg)

    def swapped(self) -> "ClassPartition":
        return ClassPartition(sorted(self.negative_classes), sorted(self.positive_classes))


@dataclass(frozen=True, eq=False)
class GroupAssignment:
    """Row membership in X0 (label 0) or X1 (label 1) plus the difference measure.

    ``difference_measure`` is ``"relative_mean"``, ``"absolute_mean"`` or a
    vectorized callable ``(mean0, mean1) -> d``.
    """

    group_of: np.ndarray
    difference_measure: DifferenceMeasure = "relative_mean"

    def __post_init__(self) -> None:
        g = np.asarray(self.group_of)
        if g.ndim != 1:
            raise ConfigurationError("group labels must be one-dimensional")
        if not np.all((g == 0) | (g == 1)):
            raise ConfigurationError("group labels must be 0 or 1")
        g = g.astype(np.intp)
        if not (np.any(g == 0) and np.any(g == 1)):
            raise ConfigurationError("both groups must be nonempty")
        g.setflags(write=False)
        object.__setattr__(self, "group_of", g)
        m = self.difference_measure
        if not callable(m) and m not in ("relative_mean", "absolute_mean"):
            raise ConfigurationError(f"unknown difference measure {m!r}")

    def swapped(self) -> "GroupAssignment":
        return GroupAssignment(1 - self.group_of, self.difference_measure)


@dataclass(frozen=True, eq=False)
class LabelSet:
    y: np.ndarray
    loss: str = "r_squared"

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=np.float64)
        if y.ndim != 1 or not np.all(np.isfinite(y)):
            raise ConfigurationError("labels must be a 1-D array of finite floats")
        if self.loss not in ("r_squared", "mean_squared_error"):
            raise ConfigurationError(f"unknown loss {self.loss!r}")
        if self.loss == "r_squared":
            if len(y) < 2:
                raise DegenerateError("r_squared needs at least two observations")
            if np.all(y == y[0]):
                raise DegenerateError("r_squared is undefined for constant labels")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)


class GeneralizedFunction:
    """Base class: subclasses implement ``reduce``."""

    name = "g"

    def reduce(self, outputs: np.ndarray, class_labels: Sequence[str] | None) -> np.ndarray:
        raise NotImplementedError

    def check(self, model: Any, n_rows: int) -> None:
        """Fail fast on configuration problems before any evaluation."""

    def __call__(self, model: Any, X: FeatureMatrix) -> float:
        out = np.asarray(model.predict(X))
        return float(self.reduce(out[None, ...], model.class_labels)[0])

    def describe(self) -> dict[str, Any]:
        return {"name": self.name}


def _require_rows(name: str, expected: int, n_rows: int) -> None:
    if expected != n_rows:
        raise ConfigurationError(f"{name} is bound to {expected} rows but the sample has {n_rows}")


class OutputG(GeneralizedFunction):
    """Mean model output over the sample; for classifiers, mean probability of one class."""

    name = "output"

    def __init__(self, class_label: Any = None):
        self.class_label = None if class_label is None else label_str(class_label)

    def check(self, model: Any, n_rows: int) -> None:
        if model.class_labels is not None:
            if self.class_label is None:
                raise ConfigurationError("classifier output needs a designated class")
            _class_index(model.class_labels, self.class_label)

    def reduce(self, outputs: np.ndarray, class_labels: Sequence[str] | None) -> np.ndarray:
        if class_labels is not None:
            if self.class_label is None:
                raise ConfigurationError("classifier output needs a designated class")
            outputs = outputs[..., _class_index(class_labels, self.class_label)]
        return outputs.mean(axis=1)

    def describe(self) -> dict[str, Any]:
        return {"name": self.name, "class": self.class_label}


class ClassificationG(GeneralizedFunction):
    """Probability that every row is positive, given all rows are positive or all negative.

    Computed from log-products of the per-row class masses, so it stays finite
    for large samples where the plain products underflow.
    """

    name = "classification"

    def __init__(self, partition: ClassPartition):
        self.partition = partition

    def _indices(self, class_labels: Sequence[str] | None) -> tuple[list[int], list[int]]:
        if class_labels is None:
            raise ConfigurationError("classification g needs a model with class probabilities")
        pos = [_class_index(class_labels, c) for c in sorted(self.partition.positive_classes)]
        neg = [_class_index(class_labels, c) for c in sorted(self.partition.negative_classes)]
        return pos, neg

    def check(self, model: Any, n_rows: int) -> None:
        self._indices(model.class_labels)

    def reduce(self, outputs: np.ndarray, class_labels: Sequence[str] | None) -> np.ndarray:
        pos, neg = self._indices(class_labels)
        pos_mass = outputs[..., pos].sum(axis=-1)
        neg_mass = outputs[..., neg].sum(axis=-1)
        both_zero = (pos_mass <= 0) & (neg_mass <= 0)
        if np.any(both_zero):
            _, i = np.argwhere(both_zero)[0]
            raise DegenerateError(f"row {i} puts zero probability on both the positive and negative classes")
        with np.errstate(divide="ignore"):
            log_pos = np.log(pos_mass).sum(axis=1)
            log_neg = np.log(neg_mass).sum(axis=1)
        if np.any(np.isneginf(log_pos) & np.isneginf(log_neg)):
            raise DegenerateError("sample has zero probability of being all positive and of being all negative")
        return np.exp(log_pos - np.logaddexp(log_pos, log_neg))

    def describe(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "positive_classes": sorted(self.partition.positive_classes),
            "negative_classes": sorted(self.partition.negative_classes),
        }


class IntergroupG(GeneralizedFunction):
    """Difference measure between the mean decision of group 1 and group 0.

    For classifiers the per-row decision is either the hard indicator
    ``argmax == positive_class`` or, with ``decision="probability"``, the
    positive-class probability. Scalar outputs are used as they are.
    """

    name = "intergroup"

    def __init__(self, groups: GroupAssignment, positive_class: Any = None, decision: str = "hard"):
        if decision not in ("hard", "probability"):
            raise ConfigurationError(f"unknown decision rule {decision!r}")
        self.groups = groups
        self.positive_class = None if positive_class is None else label_str(positive_class)
        self.decision = decision

    def check(self, model: Any, n_rows: int) -> None:
        _require_rows("group assignment", len(self.groups.group_of), n_rows)
        if model.class_labels is not None:
            if self.positive_class is None:
                raise ConfigurationError("intergroup g on a classifier needs a positive class")
            _class_index(model.class_labels, self.positive_class)

    def decisions(self, outputs: np.ndarray, class_labels: Sequence[str] | None) -> np.ndarray:
        if class_labels is None:
            return outputs
        if self.positive_class is None:
            raise ConfigurationError("intergroup g on a classifier needs a positive class")
        c = _class_index(class_labels, self.positive_class)
        if self.decision == "probability":
            return outputs[..., c]
        return (np.argmax(outputs, axis=-1) == c).astype(np.float64)

    def reduce(self, outputs: np.ndarray, class_labels: Sequence[str] | None) -> np.ndarray:
        dec = self.decisions(outputs, class_labels)
        g = self.groups.group_of
        if dec.shape[1] != len(g):
            raise ConfigurationError(f"group assignment covers {len(g)} rows, outputs have {dec.shape[1]}")
        mean0 = dec[:, g == 0].mean(axis=1)
        mean1 = dec[:, g == 1].mean(axis=1)
        measure = self.groups.difference_measure
        if measure == "absolute_mean":
            return mean1 - mean0
        if measure == "relative_mean":
            if np.any(mean0 == 0):
                raise DegenerateError("relative mean difference is undefined: group 0 mean is zero")
            return mean1 / mean0 - 1.0
        return np.asarray(measure(mean0, mean1), dtype=np.float64)

    def describe(self) -> dict[str, Any]:
        m = self.groups.difference_measure
        return {
            "name": self.name,
            "measure": m if isinstance(m, str) else getattr(m, "__name__", "custom"),
            "positive_class": self.positive_class,
            "decision": self.decision,
        }


class LossG(GeneralizedFunction):
    """Goodness of fit against fixed labels: R^2, or the negated mean squared error."""

    name = "loss"

    def __init__(self, labels: LabelSet, class_label: Any = None):
        self.labels = labels
        self.class_label = None if class_label is None else label_str(class_label)

    def check(self, model: Any, n_rows: int) -> None:
        _require_rows("labels", len(self.labels.y), n_rows)
        if model.class_labels is not None:
            if self.class_label is None:
                raise ConfigurationError("loss g on a classifier needs a designated class column")
            _class_index(model.class_labels, self.class_label)

    def reduce(self, outputs: np.ndarray, class_labels: Sequence[str] | None) -> np.ndarray:
        if class_labels is not None:
            if self.class_label is None:
                raise ConfigurationError("loss g on a classifier needs a designated class column")
            outputs = outputs[..., _class_index(class_labels, self.class_label)]
        y = self.labels.y
        if outputs.shape[1] != len(y):
            raise ConfigurationError(f"labels cover {len(y)} rows, outputs have {outputs.shape[1]}")
        rss = ((y - outputs) ** 2).sum(axis=1)
        if self.labels.loss == "mean_squared_error":
            return -rss / len(y)
        tss = ((y - y.mean()) ** 2).sum()
        return 1.0 - rss / tss

    def describe(self) -> dict[str, Any]:
        return {"name": self.name, "loss": self.labels.loss, "class": self.class_label}


def output_g(model: Any, X: FeatureMatrix, class_label: Any = None) -> float:
    return OutputG(class_label)(model, X)


def classification_g(model: Any, X: FeatureMatrix, partition: ClassPartition) -> float:
    return ClassificationG(partition)(model, X)


def intergroup_g(model: Any, X: FeatureMatrix, groups: GroupAssignment, positive_class: Any = None, decision: str = "hard") -> float:
    return IntergroupG(groups, positive_class, decision)(model, X)


def loss_g(model: Any, X: FeatureMatrix, labels: LabelSet, class_label: Any = None) -> float:
    return LossG(labels, class_label)(model, X)

