"""Exact and permutation-sampled G-SHAP values for any generalized function.

A coalition S is valued by imputing the features outside S from background
rows: sample row i is paired with background row ``(i + offset) % |Z|`` and
the value is the mean of g over a set of offsets. Exact mode sweeps every
offset of a (possibly subsampled) background, so the induced set function is
deterministic and the Shapley axioms hold to rounding error. Sampled mode
draws offsets at random and shares them along each permutation's chain.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Any, Callable

import numpy as np

from .core import (
    Coalition,
    CompositionError,
    ComputeError,
    ConfigurationError,
    Explanation,
    FeatureCountError,
    FeatureMatrix,
    NormalizationError,
    coalition_weight,
)
from .genfns import GeneralizedFunction

__all__ = [
    "EngineConfig",
    "evaluate_coalition",
    "exact_gshap",
    "sampled_gshap",
    "explain",
    "normalize",
    "comparison_report",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EngineConfig:
    mode: str = "exact"
    max_exact_features: int = 16
    permutations: int = 2048
    background_draws: int = 16
    # exact mode sweeps at most this many background rows (seeded subsample)
    background_cap: int = 64
    seed: int = 0
    workers: int = 1
    # upper bound on hybrid rows handed to one predict call
    max_batch_rows: int = 262_144

    def __post_init__(self) -> None:
        if self.mode not in ("exact", "sampled"):
            raise ConfigurationError(f"engine mode must be 'exact' or 'sampled', got {self.mode!r}")
        if self.permutations < 1:
            raise ConfigurationError("permutations must be >= 1")
        if self.background_draws < 1:
            raise ConfigurationError("background_draws must be >= 1")
        if self.background_cap < 1 or self.max_exact_features < 1 or self.max_batch_rows < 1:
            raise ConfigurationError("background_cap, max_exact_features and max_batch_rows must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")


def _exact_background(Z: FeatureMatrix, cfg: EngineConfig) -> np.ndarray:
    if Z.n <= cfg.background_cap:
        return Z.values
    rows = np.sort(np.random.default_rng(cfg.seed).choice(Z.n, cfg.background_cap, replace=False))
    return Z.values[rows]


class _Game:
    """Batched evaluation of coalition values for one (g, model, X, Z)."""

    def __init__(
        self,
        g: GeneralizedFunction,
        model: Any,
        X: FeatureMatrix,
        background: np.ndarray,
        cfg: EngineConfig,
        one_per_call: bool = False,
    ):
        self.g = g
        # one coalition per predict call keeps every coalition's rows at the same
        # batch positions, so models whose rounding depends on position (BLAS
        # kernels) still give bitwise-equal outputs for equal rows
        self.one_per_call = one_per_call
        self.model = model
        self.X = X.values
        self.names = X.feature_names
        self.Z = background
        self.cfg = cfg
        self.n, self.p = X.shape
        self.evaluations = 0

    def full_value(self) -> float:
        return self.g(self.model, FeatureMatrix(self.X, self.names))

    def _chunk(self, members: np.ndarray, offsets: np.ndarray) -> np.ndarray:
        M, D = offsets.shape
        idx = (np.arange(self.n)[None, None, :] + offsets[:, :, None]) % len(self.Z)
        hybrid = np.where(members[:, None, None, :], self.X[None, None, :, :], self.Z[idx])
        out = np.asarray(self.model.predict(hybrid.reshape(-1, self.p)))
        out = out.reshape((M * D, self.n) + out.shape[1:])
        try:
            vals = self.g.reduce(out, self.model.class_labels)
        except ComputeError as exc:
            raise self._annotate(exc, members, out, D) from None
        vals = np.asarray(vals, dtype=np.float64).reshape(M, D)
        # shifted mean: D identical values average to exactly that value
        return vals[:, 0] + (vals - vals[:, :1]).mean(axis=1)

    def _annotate(self, exc: ComputeError, members: np.ndarray, out: np.ndarray, D: int) -> ComputeError:
        for b in range(len(out)):
            try:
                self.g.reduce(out[b:b + 1], self.model.class_labels)
            except ComputeError:
                S = Coalition(frozenset(np.flatnonzero(members[b // D]).tolist()), self.p)
                return type(exc)(f"coalition {S}: {exc}")
        return exc

    def values(self, members: np.ndarray, offsets: np.ndarray) -> np.ndarray:
        """Mean g over each row's offsets for each coalition in ``members`` (M x p bool)."""
        M, D = offsets.shape
        per_chunk = 1 if self.one_per_call else max(1, self.cfg.max_batch_rows // max(1, D * self.n))
        bounds = [(s, min(M, s + per_chunk)) for s in range(0, M, per_chunk)]
        self.evaluations += M
        if self.cfg.workers > 1 and getattr(self.model, "concurrent_safe", False) and len(bounds) > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
                parts = list(pool.map(lambda b: self._chunk(members[b[0]:b[1]], offsets[b[0]:b[1]]), bounds))
        else:
            parts = [self._chunk(members[a:b], offsets[a:b]) for a, b in bounds]
        return np.concatenate(parts)


def _prepare(g: GeneralizedFunction, model: Any, X: FeatureMatrix, Z: FeatureMatrix) -> None:
    if X.feature_names != Z.feature_names:
        raise CompositionError("sample and background have different feature names")
    g.check(model, X.n)


def evaluate_coalition(g: GeneralizedFunction, model: Any, X: FeatureMatrix, Z: FeatureMatrix, S: Coalition, cfg: EngineConfig | None = None) -> float:
    """Value of coalition ``S``: mean of g over background-imputed copies of X."""
    cfg = cfg or EngineConfig()
    _prepare(g, model, X, Z)
    if S.p != X.p:
        raise CompositionError(f"coalition over {S.p} features, sample has {X.p}")
    if cfg.mode == "exact":
        background = _exact_background(Z, cfg)
        offsets = np.arange(len(background))[None, :]
    else:
        background = Z.values
        offsets = np.random.default_rng(cfg.seed).integers(0, Z.n, size=(1, cfg.background_draws))
    game = _Game(g, model, X, background, cfg)
    if len(S) == X.p:
        return game.full_value()
    return float(game.values(S.indicator()[None, :], offsets)[0])


def _mask_members(p: int) -> np.ndarray:
    masks = np.arange(1 << p)
    return (masks[:, None] >> np.arange(p)[None, :]) & 1 == 1


def exact_gshap(
    g: GeneralizedFunction,
    model: Any,
    X: FeatureMatrix,
    Z: FeatureMatrix,
    cfg: EngineConfig | None = None,
    weight_fn: Callable[[int, int], float] = coalition_weight,
) -> Explanation:
    """Shapley values of the induced set function by full enumeration.

    Every one of the 2^p coalitions is valued once, each in its own predict
    call; attributions are then the weighted sums of marginal contributions
    over those cached values. ``g_full`` is the swept value of the full
    coalition, equal to g on X up to rounding.
    """
    cfg = cfg or EngineConfig()
    p = X.p
    if p > cfg.max_exact_features:
        raise FeatureCountError(
            f"{p} features exceeds max_exact_features={cfg.max_exact_features}; use sampled mode"
        )
    _prepare(g, model, X, Z)
    background = _exact_background(Z, cfg)
    game = _Game(g, model, X, background, cfg, one_per_call=True)

    full = (1 << p) - 1
    members = _mask_members(p)
    # the full coalition goes through the same sweep, so a feature the model
    # ignores has exactly zero marginal contribution against it as well
    offsets = np.broadcast_to(np.arange(len(background)), (1 << p, len(background)))
    vals = game.values(members, offsets)

    sizes = members.sum(axis=1)
    weights = np.array([weight_fn(s, p) for s in range(p)])
    masks = np.arange(1 << p)
    phi = np.empty(p)
    for j in range(p):
        without = masks[~members[:, j]]
        marginal = vals[without | (1 << j)] - vals[without]
        phi[j] = math.fsum(weights[sizes[without]] * marginal)

    meta = {
        "seed": cfg.seed,
        "permutations": None,
        "background_rows": int(len(background)),
        "background_draws": int(len(background)),
        "coalition_evaluations": game.evaluations,
    }
    return Explanation(phi, float(vals[full]), float(vals[0]), "exact", X.feature_names, None, meta)


def sampled_gshap(g: GeneralizedFunction, model: Any, X: FeatureMatrix, Z: FeatureMatrix, cfg: EngineConfig | None = None) -> Explanation:
    """Permutation-sampling estimate with per-feature standard errors.

    Each permutation draws ``background_draws`` offsets and uses them for the
    whole chain of p+1 nested coalitions, so its contributions telescope to
    exactly g_full minus that permutation's empty-coalition value.
    """
    cfg = cfg or EngineConfig(mode="sampled")
    _prepare(g, model, X, Z)
    p, m, D = X.p, cfg.permutations, cfg.background_draws
    rng = np.random.default_rng(cfg.seed)
    perms = np.empty((m, p), dtype=np.intp)
    draws = np.empty((m, D), dtype=np.intp)
    for t in range(m):
        perms[t] = rng.permutation(p)
        draws[t] = rng.integers(0, Z.n, size=D)

    # chain[t, k] holds the first k features of permutation t
    ranks = np.argsort(perms, axis=1)
    chain = ranks[:, None, :] < np.arange(p)[None, :, None]  # (m, p, p): prefixes of length 0..p-1
    game = _Game(g, model, X, Z.values, cfg)
    prefix_vals = game.values(chain.reshape(m * p, p), np.repeat(draws, p, axis=0)).reshape(m, p)
    g_full = game.full_value()
    game.evaluations += 1
    chain_vals = np.concatenate([prefix_vals, np.full((m, 1), g_full)], axis=1)

    contrib = np.empty((m, p))
    rows = np.arange(m)[:, None]
    contrib[rows, perms] = np.diff(chain_vals, axis=1)
    phi = contrib.mean(axis=0)
    stderr = contrib.std(axis=0, ddof=1) / math.sqrt(m) if m > 1 else None
    meta = {
        "seed": cfg.seed,
        "permutations": m,
        "background_rows": Z.n,
        "background_draws": D,
        "coalition_evaluations": game.evaluations,
    }
    return Explanation(phi, g_full, float(prefix_vals[:, 0].mean()), "sampled", X.feature_names, stderr, meta)


def explain(g: GeneralizedFunction, model: Any, X: FeatureMatrix, Z: FeatureMatrix, cfg: EngineConfig | None = None) -> Explanation:
    cfg = cfg or EngineConfig()
    if cfg.mode == "exact":
        return exact_gshap(g, model, X, Z, cfg)
    return sampled_gshap(g, model, X, Z, cfg)


def normalize(expl: Explanation) -> np.ndarray:
    """Attributions rescaled to sum to one.

    Signs are kept, so with mixed signs some entries fall outside [0, 1].
    """
    total = math.fsum(expl.phi)
    if total == 0 or not math.isfinite(total):
        raise NormalizationError(f"cannot normalize attributions summing to {total!r}")
    return expl.phi / total


def comparison_report(g: GeneralizedFunction, model: Any, X: FeatureMatrix, Z: FeatureMatrix, expl: Explanation) -> tuple[float, float, float]:
    """``(g on X, g on the imputed background, their difference)``."""
    g_x = g(model, X)
    g_z = expl.g_empty
    return g_x, g_z, g_x - g_z


def config_dict(cfg: EngineConfig) -> dict[str, Any]:
    return asdict(cfg)
