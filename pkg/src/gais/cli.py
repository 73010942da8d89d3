"""Command-line entry point: ``gais {generate,select,evaluate,benchmark,tune}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import baselines, hpo
from .classifiers import ClassifierKind, fit
from .dataset import GENERATORS, Dataset, load_csv, preprocess, split, write_dataset_csv, write_raw_rows
from .errors import DataError, GaisError, UsageError
from .gat import GatHyperParams
from .metrics import MetricsReport
from .trainer import SelectionResult, gais_select

logger = logging.getLogger("gais")

METHODS = ("gais", "cnn", "enn", "ldis", "rmhc", "random", "full")
DEFAULT_BENCHMARK_METHODS = "gais,cnn,enn,ldis,rmhc"
HP_FIELDS = {f.name for f in fields(GatHyperParams)}
CONFIG_ALIASES = {"lr": "learning_rate"}

BENCHMARK_COLUMNS = (
    "dataset", "method", "seed", "status", "TR_A", "n_selected",
    "AC_reduced", "PR_reduced", "RE_reduced", "F1_reduced",
    "AC_original", "PR_original", "RE_original", "F1_original",
    "R", "E",
)

DEFAULTS = {
    "target": "class",
    "method": "gais",
    "classifier": "knn",
    "seed": 0,
    "n": 2000,
    "ratio": 0.1,
    "k": 3,
    "iterations": 1000,
    "budget": 25,
    "acquisition": "ei",
    "kappa": hpo.DEFAULT_KAPPA,
    "workers": 1,
    "tolerance": None,
    "n_original": None,
    "methods": DEFAULT_BENCHMARK_METHODS,
    "seeds": None,
    "data_seed": 0,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _add_data_flags(p):
    p.add_argument("--input", help="CSV path, or a generator name (twonorm, ringnorm)")
    p.add_argument("--target", help="target column name (default: class)")
    p.add_argument("--n", type=int, help="rows to generate when --input names a generator")
    p.add_argument("--data-seed", type=int, dest="data_seed", help="seed of the synthetic generator (default 0)")


def _add_hp_flags(p):
    p.add_argument("--window", type=int)
    p.add_argument("--overlap", type=int)
    p.add_argument("--theta-s", type=float, dest="theta_s")
    p.add_argument("--theta-r", type=float, dest="theta_r")
    p.add_argument("--theta-c", type=float, dest="theta_c")
    p.add_argument("--hidden", type=int)
    p.add_argument("--heads-in", type=int, dest="heads_in")
    p.add_argument("--heads-out", type=int, dest="heads_out")
    p.add_argument("--dropout", type=float)
    p.add_argument("--metric", choices=("manhattan", "euclidean", "cosine"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float, dest="learning_rate")
    p.add_argument("--weight-decay", type=float, dest="weight_decay")


def _add_baseline_flags(p):
    p.add_argument("--ratio", type=float, help="subset fraction for random and rmhc (default 0.1)")
    p.add_argument("--k", type=int, help="neighbourhood size for enn and ldis (default 3)")
    p.add_argument("--iterations", type=int, help="rmhc mutations (default 1000)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gais", description="Graph attention based instance selection.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON file supplying any flag; explicit flags win")
        return p

    p = command("generate", "write a synthetic dataset as CSV")
    p.add_argument("--name", choices=tuple(GENERATORS))
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = command("select", "run one selection method on the training split")
    _add_data_flags(p)
    _add_hp_flags(p)
    _add_baseline_flags(p)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--classifier")
    p.add_argument("--seed", type=int)
    p.add_argument("--tolerance", type=float, help="allowed accuracy loss against the full training set")
    p.add_argument("--out", help="CSV of the selected training rows")
    p.add_argument("--report", help="JSON report")

    p = command("evaluate", "fit a classifier on one CSV and score it on another")
    p.add_argument("--input", help="training CSV")
    p.add_argument("--test", help="test CSV")
    p.add_argument("--target")
    p.add_argument("--classifier")
    p.add_argument("--n-original", type=int, dest="n_original",
                   help="size of the unreduced training set; adds R and E to the report")
    p.add_argument("--tolerance", type=float)
    p.add_argument("--out", help="JSON report (default: stdout)")

    p = command("benchmark", "compare selection methods over several seeds")
    _add_data_flags(p)
    _add_hp_flags(p)
    _add_baseline_flags(p)
    p.add_argument("--method", dest="methods", help=f"comma-separated methods (default {DEFAULT_BENCHMARK_METHODS})")
    p.add_argument("--seed", dest="seeds", help="comma-separated seeds (default 0)")
    p.add_argument("--classifier")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="results CSV")
    p.add_argument("--report", help="JSON with per-run timings")

    p = command("tune", "Bayesian search of the attention-model hyperparameters")
    _add_data_flags(p)
    _add_hp_flags(p)
    p.add_argument("--budget", type=int)
    p.add_argument("--acquisition", choices=("ei", "ucb"))
    p.add_argument("--kappa", type=float)
    p.add_argument("--space", help="JSON file overriding search ranges, e.g. {\"theta_s\": [0.6, 0.95]}")
    p.add_argument("--classifier")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="JSON with best hyperparameters and trial history")
    return parser


def resolve_options(args: argparse.Namespace) -> dict:
    """Merge defaults, the optional JSON config and explicit flags, in that order."""
    opts = dict(DEFAULTS)
    given = vars(args)
    if given.get("config"):
        config = json.loads(Path(given["config"]).read_text(encoding="utf-8"))
        if not isinstance(config, dict):
            raise UsageError("config file must hold a JSON object")
        # a tune report can be fed back in directly
        config = {**config.get("best_hyperparams", {}), **{k: v for k, v in config.items() if k != "best_hyperparams"}}
        for key, value in config.items():
            key = key.replace("-", "_")
            opts[CONFIG_ALIASES.get(key, key)] = value
    opts.update({k: v for k, v in given.items() if k != "config"})
    return opts


def hyperparams_from(opts: dict) -> GatHyperParams:
    chosen = {k: v for k, v in opts.items() if k in HP_FIELDS}
    try:
        return GatHyperParams(**chosen)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid hyperparameters: {exc}") from exc


def _classifier(opts) -> ClassifierKind:
    try:
        return ClassifierKind.parse(str(opts["classifier"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


@dataclass
class Prepared:
    name: str
    data: Dataset
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    raw: object = None

    @property
    def train(self) -> Dataset:
        return self.data.subset(self.train_idx)

    @property
    def val(self) -> Dataset:
        return self.data.subset(self.val_idx)

    @property
    def test(self) -> Dataset:
        return self.data.subset(self.test_idx)


def prepare(opts: dict, seed: int) -> Prepared:
    """Load or generate the dataset and split it 80/10/10 with ``seed``.

    CSV inputs are encoded with statistics of the training split only.
    """
    source = opts.get("input")
    if not source:
        raise UsageError("--input is required")
    if source in GENERATORS:
        data = GENERATORS[source](int(opts["n"]), int(opts["data_seed"]))
        parts = split(len(data), seed)
        return Prepared(source, data, parts.train_idx, parts.val_idx, parts.test_idx)
    path = Path(source)
    if not path.is_file():
        raise DataError(f"no such file or generator: {source}")
    raw = load_csv(path, opts["target"])
    parts = split(len(raw), seed)
    data = preprocess(raw, parts.train_idx)
    return Prepared(path.stem, data, parts.train_idx, parts.val_idx, parts.test_idx, raw)


def run_method(method: str, train: Dataset, opts: dict, seed: int) -> SelectionResult:
    if method == "gais":
        hp = replace(hyperparams_from(opts), seed=seed)
        result, _, _ = gais_select(train, hp)
        result.extras["hyperparams"] = hp.to_dict()
        return result
    if method == "cnn":
        return baselines.cnn_select(train, seed)
    if method == "enn":
        return baselines.enn_select(train, int(opts["k"]))
    if method == "ldis":
        return baselines.ldis_select(train, int(opts["k"]))
    if method == "rmhc":
        return baselines.rmhc_select(train, float(opts["ratio"]), int(opts["iterations"]), seed)
    if method == "random":
        return baselines.random_select(train, float(opts["ratio"]), seed)
    if method == "full":
        return baselines.full_select(train)
    raise UsageError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


def score_subset(kind: ClassifierKind, train: Dataset, idx, test: Dataset) -> np.ndarray:
    model = fit(kind, train.features[idx], train.labels[idx], train.class_count)
    return model.predict(test.features)


def evaluate_selection(kind: ClassifierKind, train: Dataset, test: Dataset, result: SelectionResult,
                       tolerance=None) -> tuple[MetricsReport, MetricsReport, str | None]:
    """Score the classifier trained on the full and on the reduced training set.

    A selection the classifier cannot be fitted on (empty, a single class for
    the probabilistic models, fewer than k rows for knn) scores zero on every
    classification metric; the third element then names the reason.
    """
    full_pred = score_subset(kind, train, np.arange(len(train)), test)
    full = MetricsReport.build(test.labels, full_pred, train.class_count)
    try:
        pred = score_subset(kind, train, result.selected_idx, test)
    except DataError as exc:
        reduced = MetricsReport(0.0, 0.0, 0.0, 0.0, full.averaging, result.reduction_rate, 0.0,
                                result.t_is_seconds, tolerance, full.accuracy)
        return full, reduced, f"{type(exc).__name__}: {exc}"
    reduced = MetricsReport.build(test.labels, pred, train.class_count, result.n_selected, result.n_original,
                                  result.t_is_seconds, tolerance, full.accuracy)
    return full, reduced, None


def _finite(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _write_json(path, payload) -> None:
    text = json.dumps(payload, indent=2, sort_keys=False, allow_nan=False) + "\n"
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_generate(opts: dict) -> int:
    name = opts.get("name")
    if name not in GENERATORS:
        raise UsageError(f"--name must be one of {', '.join(GENERATORS)}")
    if not opts.get("out"):
        raise UsageError("--out is required")
    data = GENERATORS[name](int(opts["n"]), int(opts["seed"]))
    write_dataset_csv(data, opts["out"])
    return 0


def cmd_select(opts: dict) -> int:
    seed = int(opts["seed"])
    method = opts["method"]
    kind = _classifier(opts)
    prep = prepare(opts, seed)
    train, test = prep.train, prep.test
    result = run_method(method, train, opts, seed)

    if opts.get("out"):
        if prep.raw is not None:
            write_raw_rows(prep.raw, opts["out"], prep.train_idx[result.selected_idx])
        else:
            write_dataset_csv(train, opts["out"], result.selected_idx)

    full_report, report, evaluation_error = evaluate_selection(kind, train, test, result, opts.get("tolerance"))

    hyperparams = result.extras.get("hyperparams")
    if method != "gais":
        hyperparams = {"k": int(opts["k"]), "subset_fraction": float(opts["ratio"]),
                       "iterations": int(opts["iterations"]), "seed": seed}
    payload = {
        "method": method,
        "dataset": prep.name,
        "seed": seed,
        "classifier": kind.name if kind.name != "knn" else f"knn:{kind.k}",
        "hyperparams": hyperparams,
        "n_original": result.n_original,
        "n_selected": result.n_selected,
        "reduction_rate": result.reduction_rate,
        "t_is_seconds": result.t_is_seconds,
        "accuracy": report.accuracy,
        "effectiveness": report.effectiveness,
        "metrics": {k: _finite(v) for k, v in report.to_dict().items()},
        "full_data_metrics": {k: _finite(v) for k, v in full_report.to_dict().items()},
        "per_chunk_losses": [[float(x) for x in losses] for losses in result.extras.get("chunk_losses", [])],
    }
    if evaluation_error:
        payload["evaluation_error"] = evaluation_error
    if "fitness" in result.extras:
        payload["fitness_trajectory"] = result.extras["fitness"]
    if opts.get("report"):
        _write_json(opts["report"], payload)
    else:
        logger.info("%s kept %d of %d (R=%.4f, AC=%.4f)", method, result.n_selected, result.n_original,
                    result.reduction_rate, report.accuracy)
    return 0


def cmd_evaluate(opts: dict) -> int:
    if not opts.get("input") or not opts.get("test"):
        raise UsageError("--input and --test are required")
    kind = _classifier(opts)
    train_raw = load_csv(opts["input"], opts["target"])
    test_raw = load_csv(opts["test"], opts["target"])
    if train_raw.columns != test_raw.columns:
        raise DataError("train and test files have different columns")
    # encode both with the training file's statistics
    combined = replace(train_raw, rows=train_raw.rows + test_raw.rows)
    n_train = len(train_raw)
    data = preprocess(combined, np.arange(n_train))
    train = data.subset(np.arange(n_train))
    test = data.subset(np.arange(n_train, len(combined)))
    pred = score_subset(kind, train, np.arange(n_train), test)
    n_original = opts.get("n_original")
    report = MetricsReport.build(test.labels, pred, data.class_count,
                                 n_selected=n_train if n_original is not None else None,
                                 n_original=n_original, tolerance=opts.get("tolerance"))
    payload = {"classifier": kind.name, "n_train": n_train, "n_test": len(test), **report.to_dict()}
    _write_json(opts.get("out"), {k: _finite(v) for k, v in payload.items()})
    return 0


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def _parse_list(text, convert=str):
    items = [t.strip() for t in str(text).split(",") if t.strip()]
    if not items:
        raise UsageError("expected a non-empty comma-separated list")
    try:
        return [convert(t) for t in items]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def benchmark_cell(method: str, seed: int, opts: dict, kind: ClassifierKind) -> tuple[dict, float]:
    """One (method, seed) row of the benchmark table plus its selection time."""
    row = {"method": method, "seed": seed}
    try:
        prep = prepare(opts, seed)
        train, test = prep.train, prep.test
        row["dataset"] = prep.name
        result = run_method(method, train, opts, seed)
        full, reduced, degenerate = evaluate_selection(kind, train, test, result)
    except GaisError as exc:
        row["status"] = f"failed:{type(exc).__name__}"
        return row, 0.0
    row.update({
        "status": "ok" if degenerate is None else "degenerate:" + degenerate.split(":")[0], "TR_A": result.n_original, "n_selected": result.n_selected,
        "AC_reduced": reduced.accuracy, "PR_reduced": reduced.precision,
        "RE_reduced": reduced.recall, "F1_reduced": reduced.f1,
        "AC_original": full.accuracy, "PR_original": full.precision,
        "RE_original": full.recall, "F1_original": full.f1,
        "R": reduced.reduction_rate, "E": reduced.effectiveness,
    })
    return row, result.t_is_seconds


def mean_row(method: str, rows: list[dict], dataset: str) -> dict:
    ok = [r for r in rows if "R" in r]
    out = {"dataset": dataset, "method": method, "seed": "mean", "status": f"scored={len(ok)}/{len(rows)}"}
    for col in BENCHMARK_COLUMNS[4:]:
        if ok:
            out[col] = float(np.mean([r[col] for r in ok]))
    return out


def cmd_benchmark(opts: dict) -> int:
    methods = _parse_list(opts["methods"])
    for m in methods:
        if m not in METHODS:
            raise UsageError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    seeds = _parse_list(opts["seeds"] if opts.get("seeds") is not None else opts.get("seed", 0), int)
    kind = _classifier(opts)
    workers = int(opts["workers"])
    if workers < 1:
        raise UsageError("--workers must be >= 1")
    if not opts.get("input"):
        raise UsageError("--input is required")
    hyperparams_from(opts)

    cells = [(m, s) for m in methods for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        outcomes = list(pool.map(lambda cell: benchmark_cell(cell[0], cell[1], opts, kind), cells))

    name = next((row["dataset"] for row, _ in outcomes if "dataset" in row), Path(str(opts["input"])).stem)
    rows = []
    for row, _ in outcomes:
        row.setdefault("dataset", name)
        rows.append(row)
    for m in methods:
        rows.append(mean_row(m, [r for r in rows if r["method"] == m and r["seed"] != "mean"], name))

    if opts.get("out"):
        with Path(opts["out"]).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(BENCHMARK_COLUMNS)
            for row in rows:
                writer.writerow([_fmt(row.get(col)) for col in BENCHMARK_COLUMNS])
    if opts.get("report"):
        _write_json(opts["report"], {
            "runs": [{"method": m, "seed": s, "status": row["status"], "t_is_seconds": t}
                     for (m, s), (row, t) in zip(cells, outcomes)],
        })
    if all(row["status"].startswith("failed") for row, _ in outcomes):
        logger.error("every benchmark run failed")
        return 2
    return 0


def space_from(opts: dict) -> hpo.SearchSpace:
    if not opts.get("space"):
        return hpo.DEFAULT_SPACE
    ranges = json.loads(Path(opts["space"]).read_text(encoding="utf-8"))
    if "metric" in ranges:
        ranges["metrics"] = ranges.pop("metric")
    try:
        return hpo.gais_space(**{k: tuple(v) for k, v in ranges.items()})
    except TypeError as exc:
        raise UsageError(f"bad search space: {exc}") from exc


def cmd_tune(opts: dict) -> int:
    seed = int(opts["seed"])
    budget = int(opts["budget"])
    if budget < 1:
        raise UsageError("--budget must be >= 1")
    kind = _classifier(opts)
    space = space_from(opts)
    base = replace(hyperparams_from(opts), seed=seed)
    prep = prepare(opts, seed)
    t0 = time.perf_counter()
    best, trials = hpo.tune(prep.train, prep.val, space, budget, opts["acquisition"], seed, base, kind,
                            float(opts["kappa"]))
    best_trial = max(trials, key=lambda tr: tr.objective)
    _write_json(opts.get("out"), {
        "dataset": prep.name,
        "seed": seed,
        "budget": budget,
        "acquisition": opts["acquisition"],
        "best_hyperparams": best.to_dict(),
        "best_objective": best_trial.objective,
        "seconds": time.perf_counter() - t0,
        "trials": [tr.to_dict() for tr in trials],
    })
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "select": cmd_select,
    "evaluate": cmd_evaluate,
    "benchmark": cmd_benchmark,
    "tune": cmd_tune,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_help(sys.stderr)
            return 1
        verbose = args.verbose
        del args.verbose
        logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), format="%(levelname)s %(message)s")
        command = args.command
        del args.command
        return COMMANDS[command](resolve_options(args))
    except GaisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
