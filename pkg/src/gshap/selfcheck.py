"""Axiom suite run by ``gshap selfcheck``.

Each check returns a ``CheckResult`` with the worst observed value and the
tolerance it was held to. ``weight_fn`` lets a caller swap the Shapley weight
table, which is how the suite demonstrates that it catches a broken engine.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import Coalition, FeatureMatrix, coalition_weight, hybrid_compose
from .engine import EngineConfig, exact_gshap, sampled_gshap
from .genfns import ClassificationG, ClassPartition, GroupAssignment, IntergroupG, LabelSet, LossG, OutputG
from .models import FunctionModel, fit_knn_classifier, fit_knn_regressor, fit_logistic_classifier, fit_pca_knn_regressor

__all__ = ["CheckResult", "run_selfcheck", "direct_shapley", "format_results"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    observed: float
    tolerance: float
    detail: str = ""


def direct_shapley(value: Callable[[frozenset[int]], float], p: int) -> np.ndarray:
    """Shapley values by the subset-sum definition, one subset at a time."""
    phi = np.zeros(p)
    for j in range(p):
        others = [k for k in range(p) if k != j]
        for size in range(p):
            w = math.factorial(size) * math.factorial(p - size - 1) / math.factorial(p)
            for S in itertools.combinations(others, size):
                phi[j] += w * (value(frozenset(S) | {j}) - value(frozenset(S)))
    return phi


def _instances(rng: np.random.Generator, count: int):
    """Random (g, model, X, Z) tuples spanning every g variant and built-in model."""
    for t in range(count):
        p = int(rng.integers(2, 6))
        n_train, n, nz = 30, int(rng.integers(2, 6)), int(rng.integers(1, 8))
        names = tuple(f"f{j}" for j in range(p))
        train = rng.normal(size=(n_train, p))
        X = FeatureMatrix(rng.normal(size=(n, p)), names)
        Z = FeatureMatrix(rng.normal(size=(nz, p)), names)
        kind = t % 4
        if kind == 0:
            labels = np.where(train[:, 0] + 0.5 * train[:, 1] > 0, "b", "a")
            labels[:2] = ["a", "b"]
            model = fit_logistic_classifier(FeatureMatrix(train, names), labels, epochs=50)
            g = ClassificationG(ClassPartition(["b"], ["a"]))
        elif kind == 1:
            labels = np.array(["a", "b", "c"])[np.arange(n_train) % 3]
            model = fit_knn_classifier(FeatureMatrix(train, names), labels, k=5, smoothing=0.5)
            groups = np.arange(n) % 2
            g = IntergroupG(GroupAssignment(groups, "absolute_mean"), positive_class="b", decision="probability")
        elif kind == 2:
            y = train @ rng.normal(size=p)
            model = fit_knn_regressor(FeatureMatrix(train, names), y, k=3)
            g = OutputG()
        else:
            y = train @ rng.normal(size=p)
            model = fit_pca_knn_regressor(FeatureMatrix(train, names), y, components=min(2, p), k=3)
            g = LossG(LabelSet(rng.normal(size=n)))
        yield g, model, X, Z


def _check_efficiency(seed: int, weight_fn: Callable[[int, int], float]) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for g, model, X, Z in _instances(rng, 24):
        e = exact_gshap(g, model, X, Z, EngineConfig(seed=seed), weight_fn=weight_fn)
        worst = max(worst, e.efficiency_gap() / max(1.0, abs(e.difference)))
    return CheckResult("efficiency (exact)", worst <= 1e-9, worst, 1e-9, "relative |sum(phi) - (g_full - g_empty)|")


def _check_symmetry(seed: int, weight_fn: Callable[[int, int], float]) -> CheckResult:
    rng = np.random.default_rng(seed + 1)
    worst = 0.0
    for _ in range(10):
        base = rng.normal(size=(3, 2))
        X = FeatureMatrix(np.column_stack([base[:, 0], base[:, 0], base[:, 1]]), ("a", "b", "c"))
        zb = rng.normal(size=(4, 2))
        Z = FeatureMatrix(np.column_stack([zb[:, 0], zb[:, 0], zb[:, 1]]), ("a", "b", "c"))
        model = FunctionModel(lambda v: np.sin(0.5 * (v[:, 0] + v[:, 1])) * v[:, 2] + v[:, 2] ** 2)
        e = exact_gshap(OutputG(), model, X, Z, EngineConfig(seed=seed), weight_fn=weight_fn)
        worst = max(worst, abs(e.phi[0] - e.phi[1]))
    return CheckResult("symmetry (duplicated feature)", worst <= 1e-9, worst, 1e-9)


def _check_dummy(seed: int, weight_fn: Callable[[int, int], float]) -> list[CheckResult]:
    rng = np.random.default_rng(seed + 2)
    model = FunctionModel(lambda v: v[:, 0] * v[:, 1] + np.exp(0.3 * v[:, 2]))
    X = FeatureMatrix(rng.normal(size=(3, 4)), ("a", "b", "c", "ignored"))
    Z = FeatureMatrix(rng.normal(size=(6, 4)), ("a", "b", "c", "ignored"))
    exact = exact_gshap(OutputG(), model, X, Z, EngineConfig(seed=seed), weight_fn=weight_fn)
    sampled = sampled_gshap(OutputG(), model, X, Z, EngineConfig(mode="sampled", permutations=256, background_draws=4, seed=seed))
    bound = 3 * sampled.stderr[3]
    return [
        CheckResult("dummy (exact)", exact.phi[3] == 0.0, abs(exact.phi[3]), 0.0),
        CheckResult("dummy (sampled)", abs(sampled.phi[3]) <= bound, abs(sampled.phi[3]), bound, "|phi| <= 3 stderr"),
    ]


def _check_classic(seed: int, weight_fn: Callable[[int, int], float]) -> CheckResult:
    rng = np.random.default_rng(seed + 3)
    worst = 0.0
    for _ in range(10):
        p = int(rng.integers(2, 6))
        coef = rng.normal(size=(p, p))
        model = FunctionModel(lambda v, c=coef: np.tanh(v @ c).sum(axis=1))
        X = FeatureMatrix.from_array(rng.normal(size=(1, p)))
        Z = FeatureMatrix.from_array(rng.normal(size=(1, p)))

        def value(S: frozenset[int]) -> float:
            hybrid = hybrid_compose(X, Z, Coalition(S, p))
            return float(model.predict(hybrid)[0])

        e = exact_gshap(OutputG(), model, X, Z, EngineConfig(seed=seed), weight_fn=weight_fn)
        worst = max(worst, float(np.max(np.abs(e.phi - direct_shapley(value, p)))))
    return CheckResult("classic SHAP reduction", worst <= 1e-9, worst, 1e-9, "|X| = 1 against subset-sum definition")


def _check_consistency(seed: int) -> CheckResult:
    rng = np.random.default_rng(seed + 4)
    trials, hits = 20, 0
    for t in range(trials):
        p = int(rng.integers(2, 6))
        coef = rng.normal(size=(p, p))
        model = FunctionModel(lambda v, c=coef: np.tanh(v @ c).sum(axis=1))
        X = FeatureMatrix.from_array(rng.normal(size=(2, p)))
        Z = FeatureMatrix.from_array(rng.normal(size=(3, p)))
        exact = exact_gshap(OutputG(), model, X, Z, EngineConfig(seed=t))
        est = sampled_gshap(OutputG(), model, X, Z, EngineConfig(mode="sampled", permutations=1024, background_draws=2, seed=t))
        hits += bool(np.all(np.abs(est.phi - exact.phi) <= 4 * est.stderr + 1e-12))
    frac = hits / trials
    return CheckResult("estimator consistency", frac >= 0.9, frac, 0.9, "share of trials with every |phi - exact| <= 4 stderr")


def _check_weights(weight_fn: Callable[[int, int], float]) -> CheckResult:
    worst = 0.0
    for p in range(1, 17):
        total = math.fsum(math.comb(p - 1, s) * weight_fn(s, p) for s in range(p))
        worst = max(worst, abs(total - 1.0))
    return CheckResult("weight normalization", worst <= 1e-12, worst, 1e-12, "p = 1..16")


def _check_determinism(seed: int) -> CheckResult:
    rng = np.random.default_rng(seed + 5)
    model = FunctionModel(lambda v: v[:, 0] * v[:, 1] - v[:, 2])
    X = FeatureMatrix.from_array(rng.normal(size=(2, 3)))
    Z = FeatureMatrix.from_array(rng.normal(size=(5, 3)))
    cfg = EngineConfig(mode="sampled", permutations=128, background_draws=3, seed=seed)
    a, b = sampled_gshap(OutputG(), model, X, Z, cfg), sampled_gshap(OutputG(), model, X, Z, cfg)
    same = a.phi.tobytes() == b.phi.tobytes() and a.stderr.tobytes() == b.stderr.tobytes()
    return CheckResult("determinism (sampled)", same, 0.0 if same else 1.0, 0.0, "bitwise-identical reruns")


def run_selfcheck(seed: int = 0, weight_fn: Callable[[int, int], float] = coalition_weight) -> list[CheckResult]:
    results = [_check_weights(weight_fn), _check_efficiency(seed, weight_fn), _check_symmetry(seed, weight_fn)]
    results += _check_dummy(seed, weight_fn)
    results += [_check_classic(seed, weight_fn), _check_consistency(seed), _check_determinism(seed)]
    return results


def format_results(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  status  observed      tolerance"]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{r.name:<{width}}  {status:<6}  {r.observed:<12.4g}  {r.tolerance:<10.4g}  {r.detail}".rstrip())
    passed = sum(r.passed for r in results)
    lines.append(f"{passed}/{len(results)} checks passed")
    return "\n".join(lines)
