"""Bound-constrained ascent on the regularized Fenchel lower bound.

For the linear model ``r(x) = phi(x) . alpha - 1`` with ``alpha >= 0`` the
quantity maximized is

    F(alpha) = theta * (h . alpha - 1) - mean_j f*(phi'_j . alpha - 1) - lam/2 ||alpha||^2

where ``h`` is the mean basis vector of the positives and ``phi'`` the
design matrix of the unlabeled sample.  Only these two ingredients enter,
so the same routine serves full-data fits and cross-validation folds.

The penalized KL and Pearson conjugates are continuously differentiable,
so ``-F`` is a smooth, ``lam``-strongly convex function on the orthant.
Their linear pieces leave long flat-curvature directions where first-order
methods crawl; L-BFGS-B copes with them in a few dozen iterations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .divergences import Divergence, DivergenceSpec
from .errors import ConvergenceError, InvalidParameterError

ACCEPT_TOL = 1e-7
RESTARTS = 20


@dataclass(frozen=True)
class SolverConfig:
    """Iteration budget and projected-gradient tolerance for the dual ascent."""

    max_iter: int = 5000
    tol: float = 1e-10

    def __post_init__(self):
        if self.max_iter < 1:
            raise InvalidParameterError("max_iter must be >= 1")
        if not self.tol > 0:
            raise InvalidParameterError("tol must be positive")


@dataclass
class AscentResult:
    alpha: np.ndarray
    value: float
    iterations: int
    gradient_norm: float


def check_smooth_spec(spec: DivergenceSpec) -> None:
    if not spec.penalized or spec.name is Divergence.L1:
        raise InvalidParameterError(
            f"the iterative dual solver handles penalized kl and pearson, got {spec}"
        )


def dual_value(spec, theta, h, phi_unl, lam, alpha) -> float:
    """``F(alpha)``; ``lam = 0`` gives the unregularized bound."""
    r_unl = phi_unl @ alpha - 1.0
    return float(
        theta * (h @ alpha - 1.0) - np.mean(spec.conjugate(r_unl)) - 0.5 * lam * (alpha @ alpha)
    )


def projected_gradient_norm(alpha, grad_min) -> float:
    """Optimality residual of ``min g`` over ``alpha >= 0`` given ``grad g``."""
    pg = np.where(alpha > 0, grad_min, np.minimum(grad_min, 0.0))
    return float(np.max(np.abs(pg), initial=0.0))


def maximize_dual(
    spec: DivergenceSpec,
    theta: float,
    h: np.ndarray,
    phi_unl: np.ndarray,
    lam: float,
    config: SolverConfig = SolverConfig(),
    alpha0: np.ndarray | None = None,
) -> AscentResult:
    """Maximize ``F`` over ``alpha >= 0``, optionally warm-started at ``alpha0``."""
    check_smooth_spec(spec)
    if not lam > 0:
        raise InvalidParameterError(f"lambda must be positive, got {lam}")
    m, b = phi_unl.shape

    def neg_f(a):
        z = phi_unl @ a - 1.0
        val = theta * (h @ a - 1.0) - np.mean(spec.conjugate(z)) - 0.5 * lam * (a @ a)
        grad = theta * h - phi_unl.T @ spec.gradient(z) / m - lam * a
        return -val, -grad

    x = np.zeros(b) if alpha0 is None else np.maximum(np.asarray(alpha0, dtype=float), 0.0)
    iterations = 0
    for _ in range(RESTARTS + 1):
        res = minimize(
            neg_f,
            x,
            jac=True,
            method="L-BFGS-B",
            bounds=[(0.0, None)] * b,
            options={
                "maxiter": config.max_iter - iterations,
                "ftol": 1e-15,
                "gtol": config.tol,
                "maxcor": 20,
            },
        )
        iterations += int(res.nit)
        alpha = np.maximum(res.x, 0.0)
        _, g = neg_f(alpha)
        gnorm = projected_gradient_norm(alpha, g)
        # the line search may stop a hair short of gtol at an already optimal point
        if gnorm <= max(config.tol, ACCEPT_TOL) or iterations >= config.max_iter:
            break
        # a fresh curvature history gets past kinks of the piecewise conjugates
        x = alpha
    if gnorm > max(config.tol, ACCEPT_TOL):
        raise ConvergenceError(
            f"dual ascent did not converge in {iterations} iterations: {res.message}",
            last_iterate=alpha,
            residual=gnorm,
        )
    return AscentResult(alpha, dual_value(spec, theta, h, phi_unl, lam, alpha), iterations, gnorm)
