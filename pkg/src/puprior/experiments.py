"""Seeded experiment drivers: synthetic histograms, benchmark sweeps and
the statistical checks on rate and deviation.

Trial ``i`` of an experiment always uses seed ``seed + i``.  Trials run
serially unless ``PUPRIOR_THREADS`` asks for more workers; results are
sorted by seed before aggregation either way, so reports do not depend on
scheduling.  A failed trial is recorded with its error message and
excluded from the aggregates.
"""

from __future__ import annotations

import functools
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .baselines import en_prior, pe_prior, sb_prior
from .core import DEFAULT_MAX_CENTERS, BasisSpec, Dataset, build_basis, median_distance
from .data_io import LabeledTable, SyntheticSpec, generate_synthetic, make_pu_split
from .dual import SolverConfig
from .errors import InvalidParameterError, PUPriorError
from .estimators import DEFAULT_THETA_GRID, PriorEstimate, check_grid, pen_l1_value, search_prior
from .model_selection import CVConfig, Method
from .ratio_classifier import classify, fit_ratio_cv, misclassification_rate

THREADS_ENV = "PUPRIOR_THREADS"
ORACLE_SIZE = 100_000
HIST_BINS = 20
# methods solved iteratively pay one solve per (theta, sigma, lambda, fold)
ITERATIVE_CV_STRIDE = 5
ITERATIVE_METHODS = (Method.L1, Method.PEN_KL, Method.PEN_PE)


@dataclass(frozen=True)
class EstimationSettings:
    grid: tuple = tuple(DEFAULT_THETA_GRID.tolist())
    cv: CVConfig = CVConfig()
    c: float = 1.0
    max_centers: int = DEFAULT_MAX_CENTERS
    fit_window: float = 0.1
    iterative_cv_stride: int = ITERATIVE_CV_STRIDE
    solver: SolverConfig = SolverConfig()

    def describe(self) -> dict:
        cv = asdict(self.cv)
        return {
            "theta_grid": [self.grid[0], self.grid[-1], len(self.grid)],
            "cv": {k: list(v) if isinstance(v, tuple) else v for k, v in cv.items()},
            "c": self.c,
            "max_centers": self.max_centers,
            "fit_window": self.fit_window,
            "iterative_cv_stride": self.iterative_cv_stride,
        }


def run_method(method, data: Dataset, settings: EstimationSettings = EstimationSettings(), seed: int = 0) -> PriorEstimate:
    """Dispatch any of the seven estimators by name."""
    method = Method.parse(method)
    s = settings
    if method is Method.EN:
        return en_prior(data, s.cv, seed, s.max_centers)
    if method is Method.SB:
        return sb_prior(data, s.cv, s.fit_window, seed, s.max_centers)
    if method is Method.PE:
        return pe_prior(data, s.grid, s.cv, seed, s.max_centers)
    cv = s.cv
    if method in ITERATIVE_METHODS and cv.cv_stride == 1 and s.iterative_cv_stride > 1:
        cv = CVConfig(**{**asdict(cv), "cv_stride": s.iterative_cv_stride})
    return search_prior(method, data, s.grid, cv, seed, s.c, s.max_centers, s.solver)


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InvalidParameterError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def map_trials(fn, seeds) -> list:
    seeds = list(seeds)
    workers = min(worker_count(), len(seeds))
    if workers <= 1:
        return [fn(s) for s in seeds]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, seeds))


# -- reports -----------------------------------------------------------------------


@dataclass
class TrialRecord:
    seed: int
    status: str = "ok"
    theta_hat: float | None = None
    hyperparams: list | None = None
    error_rate: float | None = None
    error_rate_true_prior: float | None = None
    wall_ms: float | None = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _stats(values) -> dict:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return {"mean": None, "std": None, "median": None}
    return {
        "mean": float(values.mean()),
        "std": float(values.std()),
        "median": float(np.median(values)),
    }


@dataclass
class ExperimentReport:
    method: str
    config: dict
    trials: list = field(default_factory=list)
    true_prior: float | None = None

    def successful(self) -> list:
        return [t for t in self.trials if t.ok]

    def theta_hats(self) -> np.ndarray:
        return np.array([t.theta_hat for t in self.successful()], dtype=np.float64)

    @property
    def aggregates(self) -> dict:
        ok = self.successful()
        th = self.theta_hats()
        agg = {"n_trials": len(self.trials), "n_ok": len(ok), "n_failed": len(self.trials) - len(ok)}
        agg["theta_hat"] = _stats(th)
        if self.true_prior is not None and th.size:
            sq = (th - self.true_prior) ** 2
            agg["squared_error"] = _stats(sq)
        rates = [t.error_rate for t in ok if t.error_rate is not None]
        if rates:
            agg["error_rate"] = _stats(rates)
            agg["error_rate_true_prior"] = _stats([t.error_rate_true_prior for t in ok])
        return agg

    def histogram(self, bins: int = HIST_BINS) -> tuple[np.ndarray, np.ndarray]:
        return np.histogram(self.theta_hats(), bins=bins, range=(0.0, 1.0))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "true_prior": self.true_prior,
            "config": self.config,
            "trials": [asdict(t) for t in self.trials],
            "aggregates": self.aggregates,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ExperimentReport":
        """Rebuild a report; stored aggregates must match a recomputation."""
        report = cls(
            payload["method"],
            payload["config"],
            [TrialRecord(**t) for t in payload["trials"]],
            payload.get("true_prior"),
        )
        stored = payload.get("aggregates")
        if stored is not None and not _close(stored, report.aggregates):
            raise PUPriorError("stored aggregates do not match the trial records")
        return report


def _close(a, b) -> bool:
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(_close(a[k], b[k]) for k in a)
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-12)
    return a == b


def _timed(fn):
    start = time.perf_counter()
    out = fn()
    return out, (time.perf_counter() - start) * 1e3


def estimate_record(method, data, settings, seed, timing=True) -> tuple[TrialRecord, PriorEstimate | None]:
    try:
        est, ms = _timed(lambda: run_method(method, data, settings, seed))
    except (PUPriorError, ValueError, RuntimeError) as exc:
        return TrialRecord(seed, status="failed", message=f"{type(exc).__name__}: {exc}"), None
    rec = TrialRecord(
        seed,
        theta_hat=est.theta_hat,
        hyperparams=[float(v) for v in est.hyperparams],
        wall_ms=round(ms, 3) if timing else None,
    )
    return rec, est


# -- synthetic histograms -----------------------------------------------------------------


def _synth_trial(seed, gamma, prior, n, n_prime, methods, settings, exact_counts, timing):
    sample = generate_synthetic(SyntheticSpec(gamma, prior, n, n_prime, seed, exact_counts))
    return {m: estimate_record(m, sample.data, settings, seed, timing)[0] for m in methods}


def run_synth(
    gamma: float,
    prior: float,
    n: int,
    n_prime: int,
    trials: int,
    methods=("pe", "l1", "pen-l1"),
    seed: int = 0,
    settings: EstimationSettings = EstimationSettings(),
    exact_counts: bool = False,
    timing: bool = True,
) -> dict:
    if trials < 1:
        raise InvalidParameterError("trials must be >= 1")
    methods = [Method.parse(m).value for m in methods]
    SyntheticSpec(gamma, prior, n, n_prime, seed, exact_counts)  # validate before fanning out
    fn = functools.partial(
        _synth_trial, gamma=gamma, prior=prior, n=n, n_prime=n_prime, methods=methods,
        settings=settings, exact_counts=exact_counts, timing=timing,
    )
    rows = sorted(zip(range(seed, seed + trials), map_trials(fn, range(seed, seed + trials))))
    config = {
        "experiment": "synth", "gamma": gamma, "prior": prior, "n": n, "n_prime": n_prime,
        "trials": trials, "seed": seed, "exact_counts": exact_counts, **settings.describe(),
    }
    return {
        m: ExperimentReport(m, config, [row[m] for _, row in rows], true_prior=prior)
        for m in methods
    }


# -- benchmark ------------------------------------------------------------------------


def _bench_trial(seed, table, prior, methods, n_positive, n_unlabeled, settings, timing):
    sample = make_pu_split(table, n_positive, n_unlabeled, prior, seed)
    out = {}
    try:
        model = fit_ratio_cv(sample.data, settings.cv, settings.max_centers, seed)
        true_rate = misclassification_rate(classify(model, prior, sample.test.features), sample.test.labels)
    except (PUPriorError, ValueError, RuntimeError):
        model, true_rate = None, None
    for m in methods:
        rec, est = estimate_record(m, sample.data, settings, seed, timing)
        if est is not None and model is not None:
            pred = classify(model, est.theta_hat, sample.test.features)
            rec.error_rate = misclassification_rate(pred, sample.test.labels)
            rec.error_rate_true_prior = true_rate
        out[m] = rec
    return out


def run_benchmark(
    table: LabeledTable,
    priors=(0.2, 0.5, 0.8),
    trials: int = 50,
    methods=("en", "pe", "pen-l1"),
    n_positive: int = 100,
    n_unlabeled: int = 400,
    seed: int = 0,
    settings: EstimationSettings = EstimationSettings(),
    timing: bool = True,
) -> dict:
    """Reports keyed by ``(prior, method)``."""
    if trials < 1:
        raise InvalidParameterError("trials must be >= 1")
    methods = [Method.parse(m).value for m in methods]
    out = {}
    for prior in priors:
        # fail fast on impossible splits instead of recording every trial as failed
        make_pu_split(table, n_positive, n_unlabeled, prior, seed)
        fn = functools.partial(
            _bench_trial, table=table, prior=prior, methods=methods, n_positive=n_positive,
            n_unlabeled=n_unlabeled, settings=settings, timing=timing,
        )
        rows = sorted(zip(range(seed, seed + trials), map_trials(fn, range(seed, seed + trials))))
        config = {
            "experiment": "bench", "prior": prior, "trials": trials, "seed": seed,
            "n_positive": n_positive, "n_unlabeled": n_unlabeled, **settings.describe(),
        }
        for m in methods:
            out[(prior, m)] = ExperimentReport(m, config, [row[m] for _, row in rows], true_prior=prior)
    return out


# -- rate and deviation ---------------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    sample_sizes: tuple
    errors: tuple
    log_log_slope: float
    intercept: float


def fit_rate(sample_sizes, errors) -> RateFit:
    """Least-squares line through ``(log n, log error)``."""
    sizes = np.asarray(sample_sizes, dtype=np.float64)
    errs = np.asarray(errors, dtype=np.float64)
    if sizes.size < 2 or sizes.shape != errs.shape:
        raise InvalidParameterError("a rate fit needs at least 2 (size, error) pairs")
    if np.any(np.diff(sizes) <= 0):
        raise InvalidParameterError("sample sizes must be strictly ascending")
    if np.any(errs <= 0) or np.any(sizes <= 0):
        raise InvalidParameterError("sizes and errors must be positive")
    slope, intercept = np.polyfit(np.log(sizes), np.log(errs), 1)
    return RateFit(tuple(sizes.tolist()), tuple(errs.tolist()), float(slope), float(intercept))


@dataclass(frozen=True, eq=False)
class FrozenModel:
    """Basis and regularization held fixed across resamples."""

    basis: BasisSpec
    lam: float


def freeze_model(gamma, prior, n, n_prime, seed, sigma_mult, lam, max_centers) -> FrozenModel:
    pilot = generate_synthetic(SyntheticSpec(gamma, prior, n, n_prime, seed)).data
    basis = build_basis(pilot, 1.0, max_centers=max_centers, seed=seed)
    sigma = sigma_mult * median_distance(pilot, basis.standardizer, seed=seed)
    return FrozenModel(basis.with_sigma(sigma), float(lam))


def _chunked_mean(basis: BasisSpec, x: np.ndarray, chunk: int = 10_000) -> np.ndarray:
    total = np.zeros(basis.b)
    for start in range(0, x.shape[0], chunk):
        total += basis.design(x[start:start + chunk]).sum(axis=0)
    return total / x.shape[0]


def basis_means(model: FrozenModel, data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    return _chunked_mean(model.basis, data.positives), _chunked_mean(model.basis, data.unlabeled)


def frozen_curve(model: FrozenModel, data: Dataset, grid) -> np.ndarray:
    a, v = basis_means(model, data)
    return np.array([pen_l1_value(t * a - v, t, model.lam) for t in grid])


@dataclass
class ConvergeReport:
    fit: RateFit
    mode: str
    theta: float | None
    oracle: float
    per_size: list
    config: dict


def run_converge(
    gamma: float = 0.25,
    prior: float = 0.3,
    sizes=(100, 200, 400, 800, 1600),
    trials: int = 50,
    theta: float | str = 0.5,
    seed: int = 0,
    sigma_mult: float = 1.0,
    lam: float = 0.1,
    oracle_size: int = ORACLE_SIZE,
    max_centers: int = DEFAULT_MAX_CENTERS,
    grid=DEFAULT_THETA_GRID,
) -> ConvergeReport:
    """Error of the penalized-L1 estimate against a large-sample plug-in, per size.

    ``theta`` fixed: error ``|penL(theta) - penL*(theta)|``.  ``theta =
    "search"``: error ``|theta_hat - theta*|`` with both argmins taken
    over ``grid``.  Basis, width and lambda are frozen from a pilot sample
    so only sampling error varies.
    """
    sizes = [int(s) for s in sizes]
    if len(sizes) < 4:
        raise InvalidParameterError(f"need at least 4 sample sizes, got {len(sizes)}")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise InvalidParameterError("sizes must be strictly ascending")
    if trials < 1:
        raise InvalidParameterError("trials must be >= 1")
    search = isinstance(theta, str)
    if search and theta != "search":
        raise InvalidParameterError(f"theta must be a number or 'search', got {theta!r}")
    grid = check_grid(grid)
    model = freeze_model(gamma, prior, sizes[-1], sizes[-1], seed, sigma_mult, lam, max_centers)
    oracle_data = generate_synthetic(SyntheticSpec(gamma, prior, oracle_size, oracle_size, seed + 10**6)).data
    if search:
        oracle_curve = frozen_curve(model, oracle_data, grid)
        oracle = float(grid[int(np.argmin(oracle_curve))])
    else:
        a, v = basis_means(model, oracle_data)
        oracle = pen_l1_value(theta * a - v, theta, lam)
    per_size = []
    for size in sizes:
        errs = []
        for i in range(trials):
            data = generate_synthetic(SyntheticSpec(gamma, prior, size, size, seed + i)).data
            if search:
                est = float(grid[int(np.argmin(frozen_curve(model, data, grid)))])
            else:
                a, v = basis_means(model, data)
                est = pen_l1_value(theta * a - v, theta, lam)
            errs.append(abs(est - oracle))
        per_size.append({"size": size, "mean_error": float(np.mean(errs)), "errors": errs})
    fit = fit_rate(sizes, [p["mean_error"] for p in per_size])
    config = {
        "experiment": "converge", "gamma": gamma, "prior": prior, "sizes": sizes, "trials": trials,
        "theta": theta, "seed": seed, "sigma": model.basis.sigma, "lambda": lam,
        "b": model.basis.b, "oracle_size": oracle_size,
    }
    return ConvergeReport(fit, "search" if search else "fixed", None if search else float(theta), oracle, per_size, config)


def deviation_bound(b: int, lam: float, n: int, n_prime: int, delta: float) -> float:
    """``(3b/lam) sqrt(ln(2/delta)/2 (1/n + 1/n'))``."""
    return 3.0 * b / lam * math.sqrt(math.log(2.0 / delta) / 2.0 * (1.0 / n + 1.0 / n_prime))


@dataclass
class DeviationReport:
    theta: float
    delta: float
    quantile: float
    bound: float
    violated: bool
    mean: float
    b: int
    lam: float
    values: list
    config: dict


def run_deviation(
    theta: float = 0.5,
    n: int = 400,
    n_prime: int = 400,
    resamples: int = 200,
    delta: float = 0.05,
    lam: float = 0.1,
    sigma_mult: float = 1.0,
    gamma: float = 0.25,
    prior: float = 0.3,
    seed: int = 0,
    max_centers: int = DEFAULT_MAX_CENTERS,
) -> DeviationReport:
    if resamples < 50:
        raise InvalidParameterError(f"need at least 50 resamples, got {resamples}")
    if not 0.0 < delta < 1.0:
        raise InvalidParameterError(f"delta must lie in (0, 1), got {delta}")
    if not lam > 0:
        raise InvalidParameterError(f"lambda must be positive, got {lam}")
    model = freeze_model(gamma, prior, n, n_prime, seed, sigma_mult, lam, max_centers)
    values = []
    for i in range(resamples):
        data = generate_synthetic(SyntheticSpec(gamma, prior, n, n_prime, seed + i)).data
        a, v = basis_means(model, data)
        values.append(pen_l1_value(theta * a - v, theta, lam))
    vals = np.asarray(values)
    mean = float(vals.mean())
    quantile = float(np.quantile(np.abs(vals - mean), 1.0 - delta))
    bound = deviation_bound(model.basis.b, lam, n, n_prime, delta)
    config = {
        "experiment": "deviation", "theta": theta, "n": n, "n_prime": n_prime,
        "resamples": resamples, "delta": delta, "lambda": lam, "sigma": model.basis.sigma,
        "gamma": gamma, "prior": prior, "seed": seed,
    }
    return DeviationReport(theta, delta, quantile, bound, quantile > bound, mean, model.basis.b, lam, values, config)
