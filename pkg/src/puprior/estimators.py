"""Class-prior estimators based on penalized divergence matching.

The model ``theta * p(x | y = 1)`` is matched to the unlabeled density
``p(x)`` by estimating a divergence between them through its Fenchel
lower bound, and the prior estimate is the theta that minimizes the
estimated divergence over a grid.

Three solvers share one interface, each returning a :class:`DualSolution`:

``pen_l1_alpha`` / ``pen_l1_estimate``
    Penalized L1 (``c = inf``): closed form ``alpha = max(0, beta) / lam``.
``l1_qp_estimate``
    L1 with finite slope ``c`` above one: a small quadratic program.
``dual_estimate``
    Penalized KL and Pearson: bound-constrained ascent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import DEFAULT_MAX_CENTERS, BasisSpec, BetaVector, Dataset, compute_beta
from .divergences import Divergence, DivergenceSpec
from .dual import SolverConfig, check_smooth_spec, maximize_dual
from .errors import InvalidParameterError
from .model_selection import (
    DUAL_METHODS,
    CVConfig,
    KernelCache,
    Method,
    Selection,
    select_over_grid,
)
from .qp import KKT_TOL, MAX_SWEEPS, solve_l1_qp

PRIOR_METHODS = (Method.PEN_L1, Method.L1, Method.PEN_KL, Method.PEN_PE)
_METHOD_SPECS = {
    Method.PEN_KL: DivergenceSpec(Divergence.KL, True),
    Method.PEN_PE: DivergenceSpec(Divergence.PEARSON, True),
}


def theta_grid(lo: float = 0.0, hi: float = 1.0, step: float = 0.01) -> np.ndarray:
    """Inclusive ascending grid ``lo, lo + step, ..., hi`` (rounded to 12 digits)."""
    if not step > 0:
        raise InvalidParameterError(f"grid step must be positive, got {step}")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return check_grid(np.round(lo + step * np.arange(count), 12))


def check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=np.float64).ravel()
    if grid.size < 2:
        raise InvalidParameterError(f"theta grid needs at least 2 points, got {grid.size}")
    if grid[0] < 0 or grid[-1] > 1 or np.any(np.diff(grid) <= 0):
        raise InvalidParameterError("theta grid must be strictly ascending within [0, 1]")
    return grid


DEFAULT_THETA_GRID = theta_grid()


@dataclass(frozen=True, eq=False)
class DualSolution:
    """Fitted coefficients at one theta.

    ``objective`` is the minimized regularized objective: ``(lam/2)||alpha||^2
    - alpha . beta`` for the L1 family, the negated dual bound for the
    iterative solver.  ``estimate`` is the divergence estimate.
    """

    alpha: np.ndarray
    beta: BetaVector
    objective: float
    estimate: float
    lam: float
    c: float
    feasible: bool
    kkt: dict = field(default_factory=dict)

    @property
    def theta(self) -> float:
        return self.beta.theta


@dataclass(frozen=True, eq=False)
class PriorEstimate:
    theta_hat: float
    curve: tuple
    method: str
    hyperparams: tuple
    seed: int
    per_theta: tuple = ()
    warnings: tuple = ()
    b: int = 0

    @property
    def thetas(self) -> np.ndarray:
        return np.array([t for t, _ in self.curve])

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.curve])


def _check_lambda(lam: float) -> float:
    if not (np.isfinite(lam) and lam > 0):
        raise InvalidParameterError(f"lambda must be positive, got {lam}")
    return float(lam)


def _l1_objective(alpha, beta, lam) -> float:
    return float(0.5 * lam * (alpha @ alpha) - alpha @ beta)


def pen_l1_alpha(beta: BetaVector, lam: float) -> DualSolution:
    lam = _check_lambda(lam)
    values = np.asarray(beta.values, dtype=np.float64)
    alpha = np.maximum(values, 0.0) / lam
    estimate = float(alpha @ values) - beta.theta + 1.0
    return DualSolution(alpha, beta, _l1_objective(alpha, values, lam), estimate, lam, math.inf, True)


def pen_l1_value(beta: np.ndarray, theta: float, lam: float) -> float:
    """Closed form ``(1/lam) sum max(0, beta) beta - theta + 1``."""
    return float(np.sum(np.maximum(beta, 0.0) * beta) / lam - theta + 1.0)


def pen_l1_estimate(theta: float, data: Dataset, basis: BasisSpec, lam: float) -> DualSolution:
    return pen_l1_alpha(compute_beta(theta, data, basis), lam)


def l1_qp_estimate(
    theta: float,
    data: Dataset,
    basis: BasisSpec,
    lam: float,
    c: float,
    max_sweeps: int = MAX_SWEEPS,
    warm_rows=None,
) -> DualSolution:
    """Finite-c L1 fit; ``ConvergenceError`` if the QP solver runs out of iterations."""
    lam = _check_lambda(lam)
    beta = compute_beta(theta, data, basis)
    phi = basis.design(data.unlabeled)
    res = solve_l1_qp(beta.values, phi, lam, c, warm_rows=warm_rows, max_sweeps=max_sweeps)
    return _qp_solution(res, beta, lam, c)


def _qp_solution(res, beta: BetaVector, lam, c) -> DualSolution:
    feasible = res.kkt["primal"] <= KKT_TOL * (1.0 + c)
    estimate = float(res.alpha @ beta.values) - beta.theta + 1.0
    return DualSolution(
        res.alpha, beta, _l1_objective(res.alpha, beta.values, lam), estimate, lam, float(c),
        bool(feasible), res.kkt | {"active_rows": np.flatnonzero(res.mu > 0)},
    )


def dual_estimate(
    spec: DivergenceSpec,
    theta: float,
    data: Dataset,
    basis: BasisSpec,
    lam: float,
    solver: SolverConfig = SolverConfig(),
    alpha0=None,
) -> DualSolution:
    """Maximize the regularized lower bound for a penalized KL or Pearson divergence.

    Penalized L1 is answered by :func:`pen_l1_estimate`.
    """
    if spec.penalized and spec.name is Divergence.L1:
        return pen_l1_estimate(theta, data, basis, lam)
    check_smooth_spec(spec)
    lam = _check_lambda(lam)
    beta = compute_beta(theta, data, basis)
    h = basis.design(data.positives).mean(axis=0)
    res = maximize_dual(spec, theta, h, basis.design(data.unlabeled), lam, solver, alpha0)
    return DualSolution(
        res.alpha, beta, -res.value, res.value, lam, math.inf, True,
        {"gradient_norm": res.gradient_norm, "iterations": res.iterations},
    )


# -- prior search ----------------------------------------------------------------


def _criterion_curve(cache: KernelCache, method, thetas, lambdas, sel: Selection, c, solver):
    values = np.empty(thetas.size)
    warm = None
    alpha0 = None
    for ti, theta in enumerate(thetas):
        s, lam = int(sel.sigma_index[ti]), float(lambdas[sel.lambda_index[ti]])
        pos, unl = cache.design(s)
        a, v = pos.mean(axis=0), unl.mean(axis=0)
        beta = theta * a - v
        if method is Method.PEN_L1:
            values[ti] = pen_l1_value(beta, theta, lam)
        elif method is Method.L1:
            res = solve_l1_qp(beta, unl, lam, c, warm_rows=warm)
            warm = np.flatnonzero(res.mu > 0)
            values[ti] = res.alpha @ beta - theta + 1.0
        elif method is Method.PE:
            gram = unl.T @ unl / unl.shape[0]
            w = np.linalg.solve(gram + lam * np.eye(gram.shape[0]), a)
            values[ti] = 0.5 * theta**2 * (a @ w) - theta + 0.5
        else:
            res = maximize_dual(_METHOD_SPECS[method], theta, a, unl, lam, solver, alpha0)
            alpha0 = res.alpha
            values[ti] = res.value
    return values


def search_prior(
    method,
    data: Dataset,
    grid=DEFAULT_THETA_GRID,
    model_selection: CVConfig = CVConfig(),
    seed: int = 0,
    c: float = 1.0,
    max_centers: int = DEFAULT_MAX_CENTERS,
    solver: SolverConfig = SolverConfig(),
) -> PriorEstimate:
    """Grid search over theta for any divergence-matching method (including PE)."""
    method = Method.parse(method)
    if method not in DUAL_METHODS:
        raise InvalidParameterError(f"{method.value} is not a divergence-matching method")
    if method is Method.L1 and not c > 0:
        raise InvalidParameterError(f"c must be positive, got {c}")
    thetas = check_grid(grid)
    cache = KernelCache.build(data, model_selection, max_centers, seed)
    lambdas = np.asarray(model_selection.lambda_grid)
    sel = select_over_grid(cache, method, thetas, model_selection, c, solver)
    values = _criterion_curve(cache, method, thetas, lambdas, sel, c, solver)
    best = int(np.argmin(values))
    per_theta = tuple(
        (float(cache.sigmas[s]), float(lambdas[li])) for s, li in zip(sel.sigma_index, sel.lambda_index)
    )
    warnings = []
    if best in (0, thetas.size - 1):
        warnings.append(f"minimum at grid boundary theta={thetas[best]:g}")
    return PriorEstimate(
        theta_hat=float(thetas[best]),
        curve=tuple(zip(thetas.tolist(), values.tolist())),
        method=method.value,
        hyperparams=per_theta[best],
        seed=int(seed),
        per_theta=per_theta,
        warnings=tuple(warnings),
        b=cache.basis.b,
    )


def estimate_prior(
    method,
    data: Dataset,
    grid=DEFAULT_THETA_GRID,
    model_selection: CVConfig = CVConfig(),
    seed: int = 0,
    c: float = 1.0,
    max_centers: int = DEFAULT_MAX_CENTERS,
    solver: SolverConfig = SolverConfig(),
) -> PriorEstimate:
    """Estimate the class prior as the minimizer of a penalized divergence over ``grid``.

    ``method`` is one of ``pen-l1``, ``l1`` (finite ``c``), ``pen-kl`` or
    ``pen-pe``.  Hyperparameters are cross-validated per theta unless
    ``model_selection.global_cv`` is set.
    """
    method = Method.parse(method)
    if method not in PRIOR_METHODS:
        names = ", ".join(m.value for m in PRIOR_METHODS)
        raise InvalidParameterError(f"estimate_prior supports {names}; got {method.value}")
    return search_prior(method, data, grid, model_selection, seed, c, max_centers, solver)
