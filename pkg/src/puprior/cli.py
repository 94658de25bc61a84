"""Command-line interface.

Exit codes: 0 success, 2 bad input or configuration, 3 numerical
non-convergence.  JSON goes to ``--out`` (or stdout for single results);
curves and histograms are written as CSV next to it.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .core import DEFAULT_MAX_CENTERS, DEFAULT_SIGMA_MULTIPLIERS, Dataset
from .data_io import (
    LabeledTable,
    SyntheticSpec,
    generate_synthetic,
    load_csv,
    pca_reduce,
    write_csv,
)
from .errors import ConvergenceError, PUPriorError
from .estimators import search_prior, theta_grid
from .experiments import (
    HIST_BINS,
    ITERATIVE_CV_STRIDE,
    EstimationSettings,
    run_benchmark,
    run_converge,
    run_deviation,
    run_method,
    run_synth,
)
from .model_selection import DEFAULT_LAMBDA_GRID, CVConfig, Method
from .ratio_classifier import classify, fit_ratio_cv

EXIT_OK, EXIT_INPUT, EXIT_CONVERGENCE = 0, 2, 3
EXIT_VERIFY = 1  # --verify found a record that did not reproduce


class UsageError(PUPriorError):
    pass


# -- argument parsing helpers ----------------------------------------------------------


def _floats(text: str) -> tuple:
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _ints(text: str) -> tuple:
    values = _floats(text)
    if any(v != int(v) for v in values):
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}")
    return tuple(int(v) for v in values)


def _grid(text: str) -> tuple:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected lo:hi:step, got {text!r}")
    try:
        lo, hi, step = (float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi:step, got {text!r}") from None
    return lo, hi, step


def _methods(text: str) -> tuple:
    try:
        return tuple(Method.parse(m.strip()).value for m in text.split(",") if m.strip())
    except PUPriorError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _prior_or_estimate(text: str):
    if text == "estimate":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'estimate', got {text!r}") from None


def _theta_or_search(text: str):
    if text == "search":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'search', got {text!r}") from None


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None, help="output file or directory")
    p.add_argument("--no-timing", action="store_true", help="omit wall-clock fields from reports")


def _add_estimation(p: argparse.ArgumentParser) -> None:
    p.add_argument("--theta-grid", type=_grid, default=(0.0, 1.0, 0.01), metavar="LO:HI:STEP")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--sigma-grid", type=_floats, default=DEFAULT_SIGMA_MULTIPLIERS,
                   help="kernel widths as multiples of the median pairwise distance")
    p.add_argument("--lambda-grid", type=_floats, default=DEFAULT_LAMBDA_GRID)
    p.add_argument("--max-centers", type=int, default=DEFAULT_MAX_CENTERS)
    p.add_argument("--global-cv", action="store_true", help="one (sigma, lambda) for all theta")
    p.add_argument("--cv-stride", type=int, default=None,
                   help="cross-validate every k-th theta only (default 1, and 5 for l1, pen-kl, pen-pe)")
    p.add_argument("--c", type=float, default=1.0, help="slope above one for the l1 method")
    p.add_argument("--fit-window", type=float, default=0.1, help="ROC tail fraction for sb")


def _settings(args) -> EstimationSettings:
    cv = CVConfig(
        folds=args.folds, sigma_grid=tuple(args.sigma_grid), lambda_grid=tuple(args.lambda_grid),
        seed=args.seed, global_cv=args.global_cv, cv_stride=args.cv_stride or 1,
    )
    grid = theta_grid(*args.theta_grid)
    return EstimationSettings(
        grid=tuple(grid.tolist()), cv=cv, c=args.c, max_centers=args.max_centers,
        fit_window=args.fit_window,
        iterative_cv_stride=args.cv_stride or ITERATIVE_CV_STRIDE,
    )


def _features(path) -> np.ndarray:
    loaded = load_csv(path)
    return loaded.features if isinstance(loaded, LabeledTable) else loaded


def _load_dataset(args) -> Dataset:
    return Dataset(_features(args.positive), _features(args.unlabeled))


def _dump_json(payload, path: Path | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")


def _out_dir(args, default: str) -> Path:
    out = args.out if args.out is not None else Path(default)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- subcommands ----------------------------------------------------------------------


def estimate_payload(est, data: Dataset, wall_ms) -> dict:
    sigma, lam = est.hyperparams
    return {
        "method": est.method,
        "theta_hat": est.theta_hat,
        "curve": [{"theta": t, "value": v} for t, v in est.curve],
        "hyperparams": {"sigma": sigma, "lambda": lam},
        "n": data.n,
        "n_prime": data.n_prime,
        "b": est.b,
        "seed": est.seed,
        "wall_ms": wall_ms,
        "warnings": list(est.warnings),
    }


def cmd_estimate(args) -> int:
    data = _load_dataset(args)
    settings = _settings(args)
    start = time.perf_counter()
    est = run_method(args.method, data, settings, args.seed)
    wall = None if args.no_timing else round((time.perf_counter() - start) * 1e3, 3)
    _dump_json(estimate_payload(est, data, wall), args.out)
    return EXIT_OK


def _record_bytes(record) -> str:
    return json.dumps({k: v for k, v in asdict(record).items() if k != "wall_ms"}, sort_keys=True)


def write_histogram(path: Path, reports: dict, bins: int = HIST_BINS) -> None:
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts = {m: r.histogram(bins)[0] for m, r in reports.items()}
    with path.open("w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["bin_lo", "bin_hi", *counts])
        for i in range(bins):
            out.writerow([f"{edges[i]:.4f}", f"{edges[i + 1]:.4f}", *(int(c[i]) for c in counts.values())])


def write_estimates(path: Path, reports: dict) -> None:
    methods = list(reports)
    seeds = [t.seed for t in reports[methods[0]].trials]
    with path.open("w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["seed", *methods])
        for i, seed in enumerate(seeds):
            row = [reports[m].trials[i].theta_hat for m in methods]
            out.writerow([seed, *("" if v is None else repr(v) for v in row)])


def cmd_synth(args) -> int:
    settings = _settings(args)
    reports = run_synth(
        args.gamma, args.prior, args.n, args.n_prime, args.trials, args.methods, args.seed,
        settings, args.exact_counts, timing=not args.no_timing,
    )
    out = _out_dir(args, "synth_out")
    for m, rep in reports.items():
        _dump_json(rep.to_dict(), out / f"report_{m}.json")
    write_histogram(out / "histogram.csv", reports)
    write_estimates(out / "estimates.csv", reports)
    summary = {m: rep.aggregates for m, rep in reports.items()}
    if args.verify:
        again = run_synth(args.gamma, args.prior, args.n, args.n_prime, 1, args.methods, args.seed,
                          settings, args.exact_counts, timing=False)
        summary["verify"] = all(
            _record_bytes(again[m].trials[0]) == _record_bytes(reports[m].trials[0]) for m in reports
        )
    _dump_json(summary, None)
    return EXIT_OK if summary.get("verify", True) else EXIT_VERIFY


def _bench_table(args) -> LabeledTable:
    table = load_csv(args.data, has_label=True, positive_class=args.positive_class)
    if len(set(table.labels.tolist())) < 2:
        raise UsageError("the labeled table needs both classes")
    if args.pca_dims:
        table = pca_reduce(table, args.pca_dims)
    return table


def bench_rows(reports: dict) -> list:
    rows = []
    for (prior, m), rep in sorted(reports.items()):
        ok = rep.successful()
        sq = [(t.theta_hat - prior) ** 2 for t in ok]
        err = [t.error_rate for t in ok if t.error_rate is not None]
        err_true = [t.error_rate_true_prior for t in ok if t.error_rate_true_prior is not None]
        rows.append({
            "prior": prior,
            "method": m,
            "n_ok": len(ok),
            "median_squared_error": float(np.median(sq)) if sq else None,
            "mean_squared_error": float(np.mean(sq)) if sq else None,
            "mean_error_rate": float(np.mean(err)) if err else None,
            "mean_error_rate_true_prior": float(np.mean(err_true)) if err_true else None,
        })
    return rows


def cmd_bench(args) -> int:
    table = _bench_table(args)
    settings = _settings(args)
    reports = run_benchmark(
        table, args.priors, args.trials, args.methods, args.n_positive, args.n_unlabeled,
        args.seed, settings, timing=not args.no_timing,
    )
    out = _out_dir(args, "bench_out")
    payload = {
        "data": str(args.data), "pca_dims": args.pca_dims, "positive_class": args.positive_class,
        "reports": [{"prior": p, **rep.to_dict()} for (p, _), rep in sorted(reports.items())],
    }
    _dump_json(payload, out / "report.json")
    rows = bench_rows(reports)
    with (out / "summary.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    summary = {"summary": rows}
    if args.verify:
        again = run_benchmark(table, args.priors[:1], 1, args.methods, args.n_positive,
                              args.n_unlabeled, args.seed, settings, timing=False)
        summary["verify"] = all(
            _record_bytes(rep.trials[0]) == _record_bytes(reports[key].trials[0])
            for key, rep in again.items()
        )
    _dump_json(summary, None)
    return EXIT_OK if summary.get("verify", True) else EXIT_VERIFY


def cmd_converge(args) -> int:
    rep = run_converge(
        args.gamma, args.prior, args.sizes, args.trials, args.theta, args.seed,
        args.sigma_mult, args.lam, args.oracle_size, args.max_centers,
    )
    payload = {
        "log_log_slope": rep.fit.log_log_slope,
        "intercept": rep.fit.intercept,
        "sample_sizes": list(rep.fit.sample_sizes),
        "errors": list(rep.fit.errors),
        "mode": rep.mode,
        "oracle": rep.oracle,
        "config": rep.config,
        "per_size": rep.per_size,
    }
    _dump_json(payload, args.out)
    return EXIT_OK


def cmd_deviation(args) -> int:
    rep = run_deviation(
        args.theta, args.n, args.n_prime, args.resamples, args.delta, args.lam,
        args.sigma_mult, args.gamma, args.prior, args.seed, args.max_centers,
    )
    payload = asdict(rep)
    _dump_json(payload, args.out)
    return EXIT_OK


def cmd_classify(args) -> int:
    points = _features(args.points)
    out = args.out
    data = _load_dataset(args)
    if points.size and points.shape[1] != data.d:
        raise UsageError(f"points have {points.shape[1]} columns, training data {data.d}")
    settings = _settings(args)
    if args.prior == "estimate":
        prior = search_prior(Method.PEN_L1, data, settings.grid, settings.cv, args.seed,
                             max_centers=settings.max_centers).theta_hat
    else:
        prior = args.prior
    if points.size == 0:
        labels = np.empty(0, dtype=np.int64)
    else:
        model = fit_ratio_cv(data, settings.cv, settings.max_centers, args.seed)
        labels = classify(model, prior, points)
    lines = "y\n" + "".join(f"{int(v)}\n" for v in labels)
    if out is None:
        sys.stdout.write(lines)
    else:
        out.write_text(lines, encoding="utf-8")
    print(f"prior={prior:g} labels={labels.size}", file=sys.stderr)
    return EXIT_OK


def cmd_gen(args) -> int:
    spec = SyntheticSpec(args.gamma, args.prior, args.n, args.n_prime, args.seed, args.exact_counts)
    sample = generate_synthetic(spec)
    out = _out_dir(args, "gen_out")
    write_csv(out / "positives.csv", sample.data.positives)
    write_csv(out / "unlabeled.csv", sample.data.unlabeled)
    write_csv(out / "unlabeled_truth.csv", sample.data.unlabeled, sample.unlabeled_labels)
    if args.test_size:
        test = generate_synthetic(SyntheticSpec(args.gamma, args.prior, 1, args.test_size, args.seed + 1))
        write_csv(out / "test.csv", test.data.unlabeled, test.unlabeled_labels)
    return EXIT_OK


# -- parser -------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="puprior", description="Class-prior estimation from PU data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate the class prior from two CSV files")
    p.add_argument("--positive", type=Path, required=True)
    p.add_argument("--unlabeled", type=Path, required=True)
    p.add_argument("--method", type=lambda s: Method.parse(s).value, default="pen-l1",
                   help="pen-l1, l1, pen-kl, pen-pe, pe, en or sb")
    _add_common(p)
    _add_estimation(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("synth", help="histogram experiment on uniform synthetic data")
    p.add_argument("--gamma", type=float, default=0.25)
    p.add_argument("--prior", type=float, default=0.7)
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--n-prime", type=int, default=400)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--methods", type=_methods, default=("pe", "l1", "pen-l1"))
    p.add_argument("--exact-counts", action="store_true")
    p.add_argument("--verify", action="store_true", help="rerun the first trial and compare records")
    _add_common(p)
    _add_estimation(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="prior estimation and classification on a labeled CSV")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--positive-class", default=None, help="label value treated as positive")
    p.add_argument("--pca-dims", type=int, default=4, help="0 keeps all features")
    p.add_argument("--priors", type=_floats, default=(0.2, 0.5, 0.8))
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--methods", type=_methods, default=("en", "pe", "pen-l1"))
    p.add_argument("--n-positive", type=int, default=100)
    p.add_argument("--n-unlabeled", type=int, default=400)
    p.add_argument("--verify", action="store_true")
    _add_common(p)
    _add_estimation(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("converge", help="log-log error slope against sample size")
    p.add_argument("--gamma", type=float, default=0.25)
    p.add_argument("--prior", type=float, default=0.3)
    p.add_argument("--sizes", type=_ints, default=(100, 200, 400, 800, 1600))
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--theta", type=_theta_or_search, default=0.5)
    p.add_argument("--lambda", dest="lam", type=float, default=0.1)
    p.add_argument("--sigma-mult", type=float, default=1.0)
    p.add_argument("--oracle-size", type=int, default=100_000)
    p.add_argument("--max-centers", type=int, default=DEFAULT_MAX_CENTERS)
    _add_common(p)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("deviation", help="resampling check of the deviation bound")
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--n-prime", type=int, default=400)
    p.add_argument("--resamples", type=int, default=200)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--lambda", dest="lam", type=float, default=0.1)
    p.add_argument("--sigma-mult", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.25)
    p.add_argument("--prior", type=float, default=0.3)
    p.add_argument("--max-centers", type=int, default=DEFAULT_MAX_CENTERS)
    _add_common(p)
    p.set_defaults(func=cmd_deviation)

    p = sub.add_parser("classify", help="label points with the plug-in PU classifier")
    p.add_argument("--positive", type=Path, required=True)
    p.add_argument("--unlabeled", type=Path, required=True)
    p.add_argument("--points", type=Path, required=True)
    p.add_argument("--prior", type=_prior_or_estimate, default="estimate")
    _add_common(p)
    _add_estimation(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("gen", help="write a synthetic PU sample as CSV files")
    p.add_argument("--gamma", type=float, default=0.25)
    p.add_argument("--prior", type=float, default=0.7)
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--n-prime", type=int, default=400)
    p.add_argument("--test-size", type=int, default=0, help="also write a labeled test.csv")
    p.add_argument("--exact-counts", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors and 0 for --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConvergenceError as exc:
        print(f"error: solver did not converge: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (PUPriorError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
