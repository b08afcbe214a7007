"""Command-line interface.

    gshap explain --mode {output,classification,group-diff,failure} --data FILE ...
    gshap selfcheck
    gshap fixtures --out DIR

Exit status: 0 success, 1 configuration error, 2 data error, 3 compute error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from . import __version__, fixtures
from .core import ConfigurationError, DataError, FeatureMatrix, GShapError, NormalizationError, coalition_weight, label_str
from .engine import EngineConfig, comparison_report, config_dict, explain, normalize
from .genfns import ClassificationG, ClassPartition, GeneralizedFunction, GroupAssignment, IntergroupG, LabelSet, LossG, OutputG
from .ingest import Dataset, Schema, load_csv, shuffle_background, train_test_split, write_csv
from .models import (
    external_model,
    fit_knn_classifier,
    fit_knn_regressor,
    fit_logistic_classifier,
    fit_pca_knn_regressor,
)
from .selfcheck import format_results, run_selfcheck

logger = logging.getLogger("gshap")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_COMPUTE = 0, 1, 2, 3
MODES = ("output", "classification", "group-diff", "failure")


class StageError(Exception):
    def __init__(self, stage: str, error: Exception):
        super().__init__(f"[{stage}] {error}")
        self.stage = stage
        self.error = error

    @property
    def exit_code(self) -> int:
        err = self.error
        if isinstance(err, ConfigurationError):
            return EXIT_CONFIG
        if isinstance(err, DataError):
            return EXIT_DATA
        return EXIT_COMPUTE


class _Stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self) -> None:
        logger.debug("stage %s", self.name)

    def __exit__(self, exc_type, exc, tb) -> bool:
        if exc is not None and isinstance(exc, (GShapError, ValueError, OSError)) and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def _parse_kv(text: str) -> dict[str, str]:
    out = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        if "=" not in item:
            raise ConfigurationError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    params: dict[str, str]
    command: str | None = None

    @classmethod
    def parse(cls, text: str) -> "ModelSpec":
        kind, _, rest = text.partition(":")
        kind = kind.strip()
        if kind == "external":
            if not rest.strip():
                raise ConfigurationError("external model needs a command: external:<command>")
            return cls(kind, {}, rest.strip())
        aliases = {"knn": "knn_classifier", "logistic": "logistic_classifier", "pca_knn": "pca_knn_pipeline"}
        kind = aliases.get(kind, kind)
        if kind not in ("knn_classifier", "knn_regressor", "logistic_classifier", "pca_knn_pipeline"):
            raise ConfigurationError(f"unknown model kind {kind!r}")
        return cls(kind, _parse_kv(rest))

    def _int(self, key: str, default: int) -> int:
        try:
            return int(self.params.get(key, default))
        except ValueError:
            raise ConfigurationError(f"model parameter {key} must be an integer") from None

    def _float(self, key: str, default: float) -> float:
        try:
            return float(self.params.get(key, default))
        except ValueError:
            raise ConfigurationError(f"model parameter {key} must be a number") from None

    def fit(self, train: Dataset, concurrent_safe: bool) -> Any:
        if self.kind == "external":
            return external_model(self.command, concurrent_safe=concurrent_safe, feature_names=train.features.feature_names)
        if train.target is None:
            raise ConfigurationError("built-in models need a target column in the schema")
        if self.kind == "knn_classifier":
            return fit_knn_classifier(train.features, train.target_as_labels(), self._int("k", 5), self._float("smoothing", 0.0))
        if self.kind == "logistic_classifier":
            return fit_logistic_classifier(
                train.features,
                train.target_as_labels(),
                self._int("epochs", 500),
                self._float("learning_rate", self._float("lr", 0.5)),
            )
        y = train.target_as_float()
        if self.kind == "knn_regressor":
            return fit_knn_regressor(train.features, y, self._int("k", 4))
        default_components = min(5, train.features.p, train.n - 1)
        return fit_pca_knn_regressor(train.features, y, self._int("components", default_components), self._int("k", 4))


def _sub_seeds(seed: int) -> dict[str, int]:
    children = np.random.SeedSequence(seed).spawn(3)
    return {name: int(c.generate_state(1, np.uint64)[0]) for name, c in zip(("split", "background", "sample"), children)}


def _group_codes(values: np.ndarray) -> np.ndarray:
    distinct = sorted({label_str(v) for v in values})
    if distinct == ["0", "1"] or len(distinct) == 1 and distinct[0] in ("0", "1"):
        return np.array([int(label_str(v)) for v in values])
    if len(distinct) != 2:
        raise DataError(f"group column must hold exactly two values, found {distinct[:5]}")
    return np.array([distinct.index(label_str(v)) for v in values])


def _predicted_labels(model: Any, X: FeatureMatrix) -> np.ndarray:
    if model.class_labels is None:
        raise ConfigurationError("'predicted:' sample selection needs a classifier")
    probs = np.asarray(model.predict(X))
    return np.asarray(model.class_labels, dtype=object)[np.argmax(probs, axis=1)]


def select_rows(spec: str, pool: Dataset, model: Any, seed: int) -> np.ndarray:
    """Row indices into ``pool`` chosen by a selector string.

    ``all`` | ``random:SIZE`` | ``predicted:CLASS[:SIZE]`` | ``range:START:STOP`` | ``rows:I,J,...``
    """
    kind, _, rest = spec.partition(":")
    rng = np.random.default_rng(seed)

    def subsample(idx: np.ndarray, size: str | None) -> np.ndarray:
        if not size:
            return idx
        try:
            k = int(size)
        except ValueError:
            raise ConfigurationError(f"bad sample size {size!r}") from None
        if not 1 <= k <= len(idx):
            raise DataError(f"sample size {k} not available: only {len(idx)} candidate rows")
        return np.sort(rng.choice(idx, k, replace=False))

    n = pool.n
    if kind == "all":
        idx = np.arange(n)
    elif kind == "random":
        idx = subsample(np.arange(n), rest)
    elif kind == "predicted":
        cls, _, size = rest.partition(":")
        if not cls:
            raise ConfigurationError("predicted selector needs a class: predicted:CLASS[:SIZE]")
        pred = _predicted_labels(model, pool.features)
        idx = subsample(np.flatnonzero(pred == label_str(cls)), size)
    elif kind == "range":
        try:
            start, stop = (int(v) for v in rest.split(":"))
        except ValueError:
            raise ConfigurationError(f"bad range selector {spec!r}; use range:START:STOP") from None
        idx = np.arange(max(0, start), min(n, stop))
    elif kind == "rows":
        try:
            idx = np.array([int(v) for v in rest.split(",") if v.strip()], dtype=np.intp)
        except ValueError:
            raise ConfigurationError(f"bad rows selector {spec!r}") from None
        if np.any((idx < 0) | (idx >= n)):
            raise DataError(f"row indices out of range 0..{n - 1}")
    else:
        raise ConfigurationError(f"unknown sample selector {spec!r}")
    if len(idx) == 0:
        raise DataError(f"sample selector {spec!r} matched no rows")
    return idx


def _split_classes(text: str | None) -> list[str]:
    return [c.strip() for c in (text or "").split(",") if c.strip()]


def build_g(args: argparse.Namespace, model: Any, sample: Dataset) -> GeneralizedFunction:
    pos = _split_classes(args.positive_classes)
    neg = _split_classes(args.negative_classes)
    if args.mode == "output":
        return OutputG(pos[0] if pos else None)
    if args.mode == "classification":
        if not pos or not neg:
            raise ConfigurationError("classification mode needs --positive-classes and --negative-classes")
        return ClassificationG(ClassPartition(pos, neg))
    if args.mode == "group-diff":
        if sample.group is None:
            raise ConfigurationError("group-diff mode needs a group column (--group-col or schema 'group')")
        positive = pos[0] if pos else None
        if positive is None and model.class_labels is not None:
            positive = model.class_labels[-1]
        groups = GroupAssignment(_group_codes(sample.group), args.group_measure)
        return IntergroupG(groups, positive, args.decision)
    if sample.target is None:
        raise ConfigurationError("failure mode needs a label column (--label-col or schema 'target')")
    return LossG(LabelSet(sample.target_as_float(), args.loss), pos[0] if pos else None)


def _clean(v: Any) -> Any:
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, (np.floating,)):
        return _clean(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


def _comparison(name: str, g: GeneralizedFunction, model: Any, X: FeatureMatrix, Z: FeatureMatrix, cfg: EngineConfig) -> dict[str, Any]:
    expl = explain(g, model, X, Z, cfg)
    g_x, g_z, diff = comparison_report(g, model, X, Z, expl)
    try:
        norm = [float(v) for v in normalize(expl)]
        norm_error = None
    except NormalizationError as exc:
        norm, norm_error = [None] * expl.p, str(exc)
    stderr = [None] * expl.p if expl.stderr is None else [float(v) for v in expl.stderr]
    return {
        "name": name,
        "n_rows": X.n,
        "g_X": g_x,
        "g_Z": g_z,
        "difference": diff,
        "sum_phi": math.fsum(expl.phi),
        "method": expl.method,
        "features": [
            {"feature": f, "phi": float(phi), "stderr": se, "normalized_phi": nv}
            for f, phi, se, nv in zip(expl.feature_names, expl.phi, stderr, norm)
        ],
        "normalization_error": norm_error,
        "engine_meta": expl.meta,
    }


def run_explain(args: argparse.Namespace) -> dict[str, Any]:
    """Load, split, fit, build the background, select X, explain, write reports."""
    if args.mode not in MODES:
        raise StageError("config", ConfigurationError(f"unknown mode {args.mode!r}"))
    seeds = _sub_seeds(args.seed)

    with _Stage("config"):
        schema = Schema.parse(args.schema)
        if args.label_col:
            schema = Schema(schema.features, args.label_col, schema.group, schema.group_is_feature)
        if args.group_col:
            as_feature = schema.group_is_feature or schema.group is None
            schema = Schema(schema.features, schema.target, args.group_col, as_feature)
        model_spec = ModelSpec.parse(args.model)
        cfg = EngineConfig(
            mode=args.engine,
            max_exact_features=args.max_exact_features,
            permutations=args.permutations,
            background_draws=args.background_draws,
            background_cap=args.background_cap,
            seed=args.seed,
            workers=args.workers,
        )
    with _Stage("load"):
        ds = load_csv(args.data, schema)
    with _Stage("split"):
        train, test = train_test_split(ds, args.test_fraction, seeds["split"], shuffle=args.split == "random")
    with _Stage("fit"):
        model = model_spec.fit(train, args.external_concurrent)
    try:
        with _Stage("background"):
            if args.background_shuffle == "none":
                Z = train.features
            else:
                Z = shuffle_background(train, seeds["background"], per_column=args.background_shuffle == "column")

        comparisons = []
        if args.mode == "failure":
            with _Stage("select"):
                test_rows = select_rows(args.sample_select, test, model, seeds["sample"])
            parts = [("train", train), ("test", test.take(test_rows))]
        else:
            if args.sample_from == "background":
                # shuffled rows keep the group label and target of the training row they replace
                pool = Dataset(Z, train.target, train.group, train.schema)
            else:
                pool = {"test": test, "train": train, "all": ds}[args.sample_from]
            with _Stage("select"):
                rows = select_rows(args.sample_select, pool, model, seeds["sample"])
            parts = [("sample", pool.take(rows))]
        for name, part in parts:
            with _Stage("explain"):
                g = build_g(args, model, part)
                comparisons.append(_comparison(name, g, model, part.features, Z, cfg))
    finally:
        close = getattr(model, "close", None)
        if close is not None:
            close()

    report = {
        "gshap_version": __version__,
        "mode": args.mode,
        "data": args.data,
        "n_rows": ds.n,
        "n_train": train.n,
        "n_test": test.n,
        "features": list(ds.features.feature_names),
        "model": {"spec": args.model, "kind": model_spec.kind, "class_labels": getattr(model, "class_labels", None)},
        "g": g.describe(),
        "engine": config_dict(cfg),
        "seed": args.seed,
        "split": {"mode": args.split, "test_fraction": args.test_fraction},
        "background": {"shuffle": args.background_shuffle, "rows": Z.n},
        "sample_select": args.sample_select,
        "comparisons": comparisons,
    }
    report = _clean(report)
    with _Stage("write"):
        if args.out_report:
            _write_text(args.out_report, json.dumps(report, indent=2, allow_nan=False) + "\n")
        if args.out_figure_data:
            write_figure_data(report, args.out_figure_data)
    return report


def _write_text(path: str, text: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_figure_data(report: dict[str, Any], path: str) -> None:
    """One row per (comparison, feature): the data behind an attribution bar chart."""
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["comparison", "feature", "phi", "stderr", "normalized_phi"])
        for comp in report["comparisons"]:
            for f in comp["features"]:
                w.writerow([comp["name"], f["feature"], repr(f["phi"]), _cell(f["stderr"]), _cell(f["normalized_phi"])])


def _cell(v: float | None) -> str:
    return "" if v is None else repr(v)


def _summary(report: dict[str, Any]) -> str:
    lines = [f"mode={report['mode']} g={report['g']['name']} engine={report['engine']['mode']} seed={report['seed']}"]
    for comp in report["comparisons"]:
        lines.append(
            f"[{comp['name']}] g(X)={comp['g_X']:.6g} g(Z)={comp['g_Z']:.6g} "
            f"difference={comp['difference']:.6g} sum(phi)={comp['sum_phi']:.6g}"
        )
        width = max(len(f["feature"]) for f in comp["features"])
        for f in comp["features"]:
            se = "" if f["stderr"] is None else f" +/- {f['stderr']:.3g}"
            nv = "" if f["normalized_phi"] is None else f"  normalized {f['normalized_phi']:.4f}"
            lines.append(f"  {f['feature']:<{width}}  {f['phi']: .6g}{se}{nv}")
    return "\n".join(lines)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error [config]: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gshap", description="Shapley attributions for functions of a model's output over a sample.")
    parser.add_argument("--version", action="version", version=f"gshap {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ex = sub.add_parser("explain", help="compute an explanation and write reports")
    ex.add_argument("--mode", required=True, choices=MODES)
    ex.add_argument("--data", required=True, help="CSV file with a header row")
    ex.add_argument("--schema", help="column roles as a JSON file or literal, e.g. '{\"target\": \"y\"}'")
    ex.add_argument("--model", required=True, help="knn:k=5[,smoothing=0.5] | knn_regressor:k=4 | logistic:epochs=500,lr=0.5 | pca_knn:components=5,k=4 | external:COMMAND")
    ex.add_argument("--external-concurrent", action="store_true", help="external model may serve concurrent requests")
    ex.add_argument("--positive-classes", help="comma-separated; also names the designated class in output/group-diff modes")
    ex.add_argument("--negative-classes")
    ex.add_argument("--group-col")
    ex.add_argument("--group-measure", default="relative_mean", choices=("relative_mean", "absolute_mean"))
    ex.add_argument("--decision", default="hard", choices=("hard", "probability"), help="per-row decision for group-diff on classifiers")
    ex.add_argument("--label-col")
    ex.add_argument("--loss", default="r_squared", choices=("r_squared", "mean_squared_error"))
    ex.add_argument("--engine", default="exact", choices=("exact", "sampled"))
    ex.add_argument("--permutations", type=int, default=2048)
    ex.add_argument("--background-draws", type=int, default=16)
    ex.add_argument("--background-cap", type=int, default=64)
    ex.add_argument("--max-exact-features", type=int, default=16)
    ex.add_argument("--workers", type=int, default=1)
    ex.add_argument("--seed", type=int, default=0)
    ex.add_argument("--test-fraction", type=float, default=0.25)
    ex.add_argument("--split", default="random", choices=("random", "ordered"), help="ordered puts the last rows in the test set")
    ex.add_argument("--background-shuffle", default="column", choices=("column", "row", "none"))
    ex.add_argument("--sample-from", default="test", choices=("test", "train", "all", "background"), help="background: the shuffled training rows with their original group and target")
    ex.add_argument("--sample-select", default="all", help="all | random:SIZE | predicted:CLASS[:SIZE] | range:START:STOP | rows:I,J,...")
    ex.add_argument("--out-report", help="JSON report path")
    ex.add_argument("--out-figure-data", help="CSV of per-feature attributions")

    sc = sub.add_parser("selfcheck", help="run the axiom suite on built-in fixtures")
    sc.add_argument("--seed", type=int, default=0)
    sc.add_argument("--inject-fault", choices=("weights",), help="perturb the weight table to show the suite catches it")

    fx = sub.add_parser("fixtures", help="write the bundled synthetic datasets as CSV")
    fx.add_argument("--out", required=True)
    fx.add_argument("--seed", type=int, default=0)
    return parser


def _faulty_weight(s_size: int, p: int) -> float:
    w = coalition_weight(s_size, p)
    return w * 1.01 if s_size == 0 else w


def write_fixtures(out_dir: str, seed: int = 0) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, make in fixtures.ALL.items():
        ds = make(seed=seed)
        path = os.path.join(out_dir, f"{name}.csv")
        write_csv(ds, path)
        schema = {"target": ds.schema.target}
        if ds.schema.group:
            schema.update(group=ds.schema.group, group_is_feature=ds.schema.group_is_feature)
        _write_text(os.path.join(out_dir, f"{name}.schema.json"), json.dumps(schema, indent=2) + "\n")
        written.append(path)
    return written


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "selfcheck":
        weight_fn = _faulty_weight if args.inject_fault == "weights" else None
        results = run_selfcheck(args.seed, weight_fn) if weight_fn else run_selfcheck(args.seed)
        print(format_results(results))
        return EXIT_OK if all(r.passed for r in results) else EXIT_COMPUTE
    if args.command == "fixtures":
        for path in write_fixtures(args.out, args.seed):
            print(path)
        return EXIT_OK
    try:
        report = run_explain(args)
    except StageError as exc:
        print(f"gshap: error [{exc.stage}]: {exc.error}", file=sys.stderr)
        return exc.exit_code
    print(_summary(report))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
