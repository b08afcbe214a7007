"""Built-in black-box models and an adapter for models living in a child process.

Every model exposes ``predict(values) -> ndarray``. Classifiers return an
``(N, C)`` array of class probabilities ordered as ``class_labels``;
regressors return an ``(N,)`` array and have ``class_labels = None``.
"""

from __future__ import annotations

import io
import logging
import queue
import shlex
import subprocess
import tempfile
import threading
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import expit, log_expit

from .core import FeatureMatrix, GShapError, label_str
from .ingest import Standardizer

__all__ = [
    "FitError",
    "AdapterError",
    "KNNClassifier",
    "KNNRegressor",
    "LogisticClassifier",
    "PCAKNNRegressor",
    "FunctionModel",
    "ExternalModel",
    "fit_knn_classifier",
    "fit_knn_regressor",
    "fit_logistic_classifier",
    "fit_pca_knn_regressor",
    "external_model",
    "logistic_loss_and_grad",
]

logger = logging.getLogger(__name__)

# query rows per distance block; bounds the N x T distance matrix
_QUERY_BLOCK = 4096


class FitError(GShapError):
    pass


class AdapterError(GShapError):
    pass


def _as_values(X: FeatureMatrix | np.ndarray) -> np.ndarray:
    if isinstance(X, FeatureMatrix):
        return X.values
    return np.atleast_2d(np.asarray(X, dtype=np.float64))


def _canonical_order(train: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Row order by (label, feature vector); makes kNN ties independent of input order."""
    keys = [train[:, j] for j in range(train.shape[1] - 1, -1, -1)]
    label_codes = np.unique(labels, return_inverse=True)[1]
    return np.lexsort(keys + [label_codes])


def _neighbors(train: np.ndarray, query: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest training rows; ties go to the lower row index."""
    out = np.empty((len(query), k), dtype=np.intp)
    for start in range(0, len(query), _QUERY_BLOCK):
        block = query[start:start + _QUERY_BLOCK]
        d = cdist(block, train, "sqeuclidean")
        out[start:start + len(block)] = np.argsort(d, axis=1, kind="stable")[:, :k]
    return out


@dataclass(frozen=True, eq=False)
class KNNClassifier:
    """Vote-fraction kNN on standardized features.

    ``smoothing`` adds a pseudo-count per class, keeping every probability
    strictly positive (the plain vote fractions are recovered with 0).
    """

    train: np.ndarray
    codes: np.ndarray
    class_labels: tuple[str, ...]
    k: int
    scaler: Standardizer
    smoothing: float = 0.0
    concurrent_safe: bool = True
    kind: str = "knn_classifier"

    def predict(self, X: FeatureMatrix | np.ndarray) -> np.ndarray:
        query = self.scaler.transform(_as_values(X))
        nbrs = _neighbors(self.train, query, self.k)
        n_classes = len(self.class_labels)
        votes = np.zeros((len(query), n_classes))
        for c in range(n_classes):
            votes[:, c] = np.count_nonzero(self.codes[nbrs] == c, axis=1)
        return (votes + self.smoothing) / (self.k + self.smoothing * n_classes)

    def predict_label(self, X: FeatureMatrix | np.ndarray) -> np.ndarray:
        probs = self.predict(X)
        return np.asarray(self.class_labels, dtype=object)[np.argmax(probs, axis=1)]


@dataclass(frozen=True, eq=False)
class KNNRegressor:
    train: np.ndarray
    targets: np.ndarray
    k: int
    scaler: Standardizer | None
    concurrent_safe: bool = True
    kind: str = "knn_regressor"
    class_labels: None = None

    def predict(self, X: FeatureMatrix | np.ndarray) -> np.ndarray:
        query = _as_values(X)
        if self.scaler is not None:
            query = self.scaler.transform(query)
        return self.targets[_neighbors(self.train, query, self.k)].mean(axis=1)


def _encode_labels(labels: Sequence[Any]) -> tuple[np.ndarray, tuple[str, ...]]:
    as_str = np.array([label_str(v) for v in labels], dtype=object)
    classes, codes = np.unique(as_str, return_inverse=True)
    return codes, tuple(str(c) for c in classes)


def fit_knn_classifier(train: FeatureMatrix, labels: Sequence[Any], k: int, smoothing: float = 0.0) -> KNNClassifier:
    values = _as_values(train)
    if len(labels) != len(values):
        raise FitError(f"{len(labels)} labels for {len(values)} training rows")
    if not 1 <= k <= len(values):
        raise FitError(f"k={k} must be between 1 and the {len(values)} training rows")
    if smoothing < 0:
        raise FitError("smoothing must be nonnegative")
    codes, classes = _encode_labels(labels)
    if len(classes) < 2:
        raise FitError("need at least two classes")
    order = _canonical_order(values, codes)
    values, codes = values[order], codes[order]
    scaler = Standardizer.fit(values)
    return KNNClassifier(scaler.transform(values), codes, classes, int(k), scaler, float(smoothing))


def fit_knn_regressor(train: FeatureMatrix, targets: Sequence[float], k: int) -> KNNRegressor:
    values = _as_values(train)
    y = np.asarray(targets, dtype=np.float64)
    if len(y) != len(values):
        raise FitError(f"{len(y)} targets for {len(values)} training rows")
    if not 1 <= k <= len(values):
        raise FitError(f"k={k} must be between 1 and the {len(values)} training rows")
    order = _canonical_order(values, y)
    values, y = values[order], y[order]
    scaler = Standardizer.fit(values)
    return KNNRegressor(scaler.transform(values), y, int(k), scaler)


def logistic_loss_and_grad(weights: np.ndarray, bias: float, X: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray, float]:
    """Mean log-loss of a logistic model and its gradient in (weights, bias)."""
    z = X @ weights + bias
    loss = -np.mean(y * log_expit(z) + (1 - y) * log_expit(-z))
    resid = expit(z) - y
    return float(loss), X.T @ resid / len(y), float(resid.mean())


@dataclass(frozen=True, eq=False)
class LogisticClassifier:
    weights: np.ndarray
    bias: float
    class_labels: tuple[str, str]
    scaler: Standardizer
    loss_history: tuple[float, ...] = ()
    concurrent_safe: bool = True
    kind: str = "logistic_classifier"

    def predict(self, X: FeatureMatrix | np.ndarray) -> np.ndarray:
        z = self.scaler.transform(_as_values(X)) @ self.weights + self.bias
        p1 = expit(z)
        return np.column_stack([1.0 - p1, p1])


def fit_logistic_classifier(
    train: FeatureMatrix,
    labels: Sequence[Any],
    epochs: int = 500,
    learning_rate: float = 0.5,
) -> LogisticClassifier:
    """Full-batch gradient descent on the mean log-loss, starting from zero weights.

    Features are standardized with training statistics. The second entry of
    ``class_labels`` is the class modelled by the logistic link.
    """
    values = _as_values(train)
    codes, classes = _encode_labels(labels)
    if len(codes) != len(values):
        raise FitError(f"{len(codes)} labels for {len(values)} training rows")
    if len(classes) != 2:
        raise FitError(f"logistic classifier needs exactly two classes, got {len(classes)}")
    if epochs < 0 or learning_rate <= 0:
        raise FitError("epochs must be >= 0 and learning_rate > 0")
    scaler = Standardizer.fit(values)
    Xs = scaler.transform(values)
    y = codes.astype(np.float64)
    w, b = np.zeros(Xs.shape[1]), 0.0
    history = []
    for _ in range(epochs):
        loss, gw, gb = logistic_loss_and_grad(w, b, Xs, y)
        history.append(loss)
        w = w - learning_rate * gw
        b = b - learning_rate * gb
    history.append(logistic_loss_and_grad(w, b, Xs, y)[0])
    return LogisticClassifier(w, b, (classes[0], classes[1]), scaler, tuple(history))


@dataclass(frozen=True, eq=False)
class PCAKNNRegressor:
    """Standardize, project onto principal components, then kNN-regress."""

    scaler: Standardizer
    components: np.ndarray  # p x m loadings
    explained_variance: np.ndarray
    knn: KNNRegressor
    concurrent_safe: bool = True
    kind: str = "pca_knn_pipeline"
    class_labels: None = None

    def project(self, X: FeatureMatrix | np.ndarray) -> np.ndarray:
        return self.scaler.transform(_as_values(X)) @ self.components

    def predict(self, X: FeatureMatrix | np.ndarray) -> np.ndarray:
        return self.knn.predict(self.project(X))


def fit_pca_knn_regressor(train: FeatureMatrix, targets: Sequence[float], components: int, k: int) -> PCAKNNRegressor:
    values = _as_values(train)
    y = np.asarray(targets, dtype=np.float64)
    n, p = values.shape
    if len(y) != n:
        raise FitError(f"{len(y)} targets for {n} training rows")
    if not 1 <= components <= min(n - 1, p):
        raise FitError(f"components={components} must be between 1 and min(n-1, p)={min(n - 1, p)}")
    if not 1 <= k <= n:
        raise FitError(f"k={k} must be between 1 and the {n} training rows")
    scaler = Standardizer.fit(values)
    Xs = scaler.transform(values)
    cov = Xs.T @ Xs / (n - 1)
    eigval, eigvec = np.linalg.eigh(cov)
    order = np.argsort(eigval, kind="stable")[::-1]
    eigval, eigvec = eigval[order], eigvec[:, order]
    rank = int(np.count_nonzero(eigval > max(eigval[0], 0.0) * p * np.finfo(float).eps))
    if components > rank:
        raise FitError(f"components={components} exceeds covariance rank {rank}")
    eigval, eigvec = eigval[:components], eigvec[:, :components].copy()
    for c in range(components):
        if eigvec[np.argmax(np.abs(eigvec[:, c])), c] < 0:
            eigvec[:, c] = -eigvec[:, c]
    projected = Xs @ eigvec
    order = _canonical_order(projected, y)
    knn = KNNRegressor(projected[order], y[order], int(k), None)
    return PCAKNNRegressor(scaler, eigvec, eigval, knn)


@dataclass(frozen=True, eq=False)
class FunctionModel:
    """Wrap a vectorized callable ``values -> outputs`` as a model."""

    fn: Callable[[np.ndarray], np.ndarray]
    class_labels: tuple[str, ...] | None = None
    concurrent_safe: bool = True
    kind: str = "function"

    def predict(self, X: FeatureMatrix | np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(_as_values(X)), dtype=np.float64)


class _Child:
    """One child process speaking the CSV line protocol."""

    def __init__(self, argv: list[str], timeout: float):
        self.argv = argv
        self.timeout = timeout
        self.stderr = tempfile.TemporaryFile()
        try:
            self.proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=self.stderr,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise AdapterError(f"cannot start {argv!r}: {exc}") from None
        # a reader thread lets a silent child surface as a timeout instead of a hang
        self.lines: queue.Queue[str | None] = queue.Queue()
        threading.Thread(target=self._pump, daemon=True).start()

    def _pump(self) -> None:
        for line in self.proc.stdout:
            self.lines.put(line)
        self.lines.put(None)

    def diagnostics(self) -> str:
        self.stderr.seek(0)
        tail = self.stderr.read()[-2000:].decode("utf-8", "replace").strip()
        code = self.proc.poll()
        return f"exit status {code}; stderr: {tail or '<empty>'}"

    def request(self, header: str, values: np.ndarray, classifier: bool | None) -> tuple[tuple[str, ...] | None, np.ndarray]:
        buf = io.StringIO()
        buf.write(header + "\n")
        for row in values:
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        buf.write("\n")
        try:
            self.proc.stdin.write(buf.getvalue())
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError):
            raise AdapterError(f"child {self.argv!r} closed its input; {self.diagnostics()}") from None

        def read_line() -> str:
            try:
                line = self.lines.get(timeout=self.timeout)
            except queue.Empty:
                raise AdapterError(
                    f"child {self.argv!r} sent no response line within {self.timeout}s "
                    f"(row-count mismatch?); {self.diagnostics()}"
                ) from None
            if line is None:
                self.proc.wait()
                raise AdapterError(f"child {self.argv!r} ended output early; {self.diagnostics()}")
            return line.strip()

        first = read_line()
        labels = None
        fields = first.split(",")
        if classifier or (classifier is None and _label_line(fields)):
            labels = tuple(f.strip() for f in fields)
            first = read_line()
        lines = [first] + [read_line() for _ in range(len(values) - 1)]
        rows = []
        for i, line in enumerate(lines):
            try:
                rows.append([float(f) for f in line.split(",")])
            except ValueError:
                raise AdapterError(f"child {self.argv!r}: malformed response line {i + 1}: {line!r}") from None
        widths = {len(r) for r in rows}
        if len(widths) != 1:
            raise AdapterError(f"child {self.argv!r}: response rows have differing field counts {sorted(widths)}")
        out = np.array(rows)
        if labels is not None and out.shape[1] != len(labels):
            raise AdapterError(f"child {self.argv!r}: {out.shape[1]} probabilities for {len(labels)} labels")
        if labels is None:
            if out.shape[1] != 1:
                raise AdapterError(f"child {self.argv!r}: regression rows must hold one value")
            out = out[:, 0]
        return labels, out

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
                self.proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self.proc.kill()
                self.proc.wait()
        else:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
        self.stderr.close()


def _label_line(fields: list[str]) -> bool:
    """A class-label line names at least two distinct classes and is not all numbers."""
    names = [f.strip() for f in fields]
    if len(names) < 2 or len(set(names)) != len(names) or not all(names):
        return False
    try:
        [float(f) for f in names]
    except ValueError:
        return True
    return False


class ExternalModel:
    """A model answered by child processes over stdin/stdout.

    Without ``concurrent_safe`` one child is used under a lock; with it, a
    pool of ``pool_size`` children serves concurrent callers.
    """

    kind = "external"

    def __init__(
        self,
        command: str | Sequence[str],
        concurrent_safe: bool = False,
        feature_names: Sequence[str] | None = None,
        batch_size: int = 4096,
        pool_size: int = 2,
        classifier: bool | None = None,
        timeout: float = 120.0,
    ):
        self.argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.argv:
            raise AdapterError("empty external model command")
        self.concurrent_safe = bool(concurrent_safe)
        self.feature_names = None if feature_names is None else tuple(feature_names)
        self.batch_size = int(batch_size)
        self.classifier = classifier
        self.timeout = float(timeout)
        self._pool: queue.Queue[_Child] = queue.Queue()
        self._children: list[_Child] = []
        self._lock = threading.Lock()
        self._n_children = pool_size if self.concurrent_safe else 1
        self.class_labels: tuple[str, ...] | None = None
        # first call discovers the output kind and the class labels
        self._probe()

    def _spawn(self) -> _Child:
        child = _Child(self.argv, self.timeout)
        self._children.append(child)
        return child

    def _probe(self) -> None:
        child = self._spawn()
        p = len(self.feature_names) if self.feature_names else 1
        labels, _ = child.request(self._header(p), np.zeros((1, p)), self.classifier)
        self.class_labels = labels
        self._pool.put(child)
        for _ in range(self._n_children - 1):
            self._pool.put(self._spawn())

    def _header(self, p: int) -> str:
        names = self.feature_names if self.feature_names and len(self.feature_names) == p else [f"x{j}" for j in range(p)]
        return ",".join(names)

    def predict(self, X: FeatureMatrix | np.ndarray) -> np.ndarray:
        values = _as_values(X)
        header = ",".join(X.feature_names) if isinstance(X, FeatureMatrix) else self._header(values.shape[1])
        child = self._pool.get()
        try:
            parts = []
            for start in range(0, len(values), self.batch_size):
                labels, out = child.request(header, values[start:start + self.batch_size], self.classifier)
                if labels != self.class_labels:
                    raise AdapterError(f"child changed its class labels from {self.class_labels} to {labels}")
                if len(out) != len(values[start:start + self.batch_size]):
                    raise AdapterError("row-count mismatch in child response")
                parts.append(out)
        except AdapterError:
            # the child's stream position is unknown now; replace it
            child.close()
            self._children.remove(child)
            child = self._spawn()
            raise
        finally:
            self._pool.put(child)
        return np.concatenate(parts, axis=0)

    def close(self) -> None:
        with self._lock:
            for child in self._children:
                child.close()
            self._children.clear()

    def __enter__(self) -> "ExternalModel":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def __del__(self) -> None:
        try:
            self.close()
        except Exception:
            pass


def external_model(command: str | Sequence[str], concurrent_safe: bool = False, **kwargs: Any) -> ExternalModel:
    return ExternalModel(command, concurrent_safe=concurrent_safe, **kwargs)
