"""Solver for the finite-c L1 quadratic program.

Problem (``phi`` holds the basis values of the unlabeled rows)::

    minimize    (lam / 2) ||alpha||^2 - alpha . beta
    subject to  alpha >= 0,   phi @ alpha <= 1 + c

With ``u = lam * alpha`` and ``kappa = lam * (1 + c)`` this is the Euclidean
projection of ``beta`` onto ``{u >= 0, phi u <= kappa}``; the row
multipliers ``mu`` are shared by both scalings.

Two exact reductions keep the problem small.  Because ``phi > 0`` every
coordinate with ``beta_l <= 0`` is zero at the optimum, and a row can only
bind if it is violated by ``max(0, beta)``.  Rows enter a working set only
while violated (constraint generation).  Each reduced dual

    D(mu) = 1/2 ||max(0, beta - rows' mu)||^2 + kappa * sum(mu),   mu >= 0

is first attacked by a Newton-type iteration on the sign pattern of
``u``: each step is a small NNLS problem on a QR factor, followed by an
exact line search.  Kernel rows are strongly correlated, which makes plain
coordinate descent stall.  When the rows are rank deficient this iteration
can stall too; its result is checked against the reduced KKT conditions
and, failing them, the reduced problem goes to the Goldfarb-Idnani dual
active-set method, which is exact but several times slower.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import quadprog
from scipy.optimize import nnls

from .errors import ConvergenceError, InvalidParameterError

MAX_SWEEPS = 10_000
KKT_TOL = 1e-8
_ROWS_PER_ROUND = 8


@dataclass
class QPResult:
    alpha: np.ndarray
    mu: np.ndarray
    sweeps: int
    kkt: dict


def kkt_residuals(alpha, mu, beta, phi, lam, c) -> dict:
    """Stationarity, feasibility and complementary-slackness residuals."""
    slack = phi @ alpha - (1.0 + c)
    grad = lam * alpha - beta + phi.T @ mu
    free = alpha > 0
    stat = max(
        float(np.max(np.abs(grad[free]), initial=0.0)),
        float(np.max(-grad[~free], initial=0.0)),
    )
    return {
        "stationarity": stat,
        "primal": float(max(np.max(slack, initial=0.0), np.max(-alpha, initial=0.0))),
        "dual": float(np.max(-mu, initial=0.0)),
        "complementarity": float(np.max(np.abs(mu * slack), initial=0.0)),
    }


def _nnls_refined(r, rhs):
    """NNLS followed by exact least squares on the passive set.

    The NNLS stopping tolerance is loose relative to the conditioning of
    kernel rows; re-solving on the identified passive set (and dropping
    any coordinate that turns negative) restores full precision.
    """
    k = r.shape[1]
    sol = nnls(r, rhs, maxiter=50 * k + 50)[0]
    passive = sol > 0
    for _ in range(k):
        if not passive.any():
            return np.zeros(k)
        ref = np.zeros(k)
        ref[passive] = np.linalg.lstsq(r[:, passive], rhs, rcond=None)[0]
        if np.all(ref[passive] > 0):
            return ref
        passive &= ref > 0
    return sol


def _box_qp(a, y, kappa):
    """argmin over m >= 0 of 1/2 ||a'm - y||^2 + kappa * sum(m).

    Solved as an NNLS problem on the triangular factor of a QR
    decomposition of ``a'``, which avoids squaring the condition number of
    the (highly correlated) kernel rows.  Rank-deficient cases fall back to
    a lightly ridged Cholesky factor of ``a a'``.
    """
    k = a.shape[0]
    if a.shape[1] >= k:
        q, r = np.linalg.qr(a.T)
        diag = np.abs(np.diag(r))
        if diag.min() > 1e-12 * diag.max():
            rhs = q.T @ y - np.linalg.solve(r.T, np.full(k, kappa))
            return _nnls_refined(r, rhs)
    h = a @ a.T
    chol = np.linalg.cholesky(h + 1e-13 * (np.trace(h) / k + 1.0) * np.eye(k))
    rhs = np.linalg.solve(chol, a @ y - kappa)
    return _nnls_refined(chol.T, rhs)


def _line_search(bp, rows, kappa, mu, direction):
    """Exact minimizer over t in [0, 1] of D(mu + t * direction).

    The derivative in ``t`` is continuous, non-decreasing and linear between
    the breakpoints where a component of ``bp - rows' mu`` changes sign, so
    its root is found by evaluating it at the breakpoints and interpolating
    on the bracketing segment.
    """
    proj = rows.T @ direction
    lin = kappa * direction.sum()
    w0 = bp - rows.T @ mu

    def slope(t):
        z = w0[None, :] - np.asarray(t)[:, None] * proj[None, :]
        return lin - (np.maximum(z, 0.0) * proj).sum(axis=1)

    nz = proj != 0
    brk = w0[nz] / proj[nz]
    ts = np.unique(np.concatenate([[0.0, 1.0], brk[(brk > 0) & (brk < 1)]]))
    d = slope(ts)
    if d[0] >= 0:
        return 0.0
    if d[-1] <= 0:
        return 1.0
    k = int(np.argmax(d > 0))
    t0, t1, d0, d1 = ts[k - 1], ts[k], d[k - 1], d[k]
    return float(t0 - d0 * (t1 - t0) / (d1 - d0))


def _solve_reduced(bp, rows, kappa, mu, max_iter):
    """Dual over the working-set rows with the sign pattern of u iterated to a fixed point."""
    for it in range(1, max_iter + 1):
        w = bp - rows.T @ mu
        free = w > 0
        a = rows[:, free]
        cand = _box_qp(a, bp[free], kappa)
        new_free = (bp - rows.T @ cand) > 0
        if np.array_equal(new_free, free):
            return cand, it
        t = _line_search(bp, rows, kappa, mu, cand - mu)
        step = t * (cand - mu)
        mu = np.maximum(mu + step, 0.0)
        if np.max(np.abs(step), initial=0.0) < 1e-15:
            return mu, it
    return mu, max_iter


def _exact_projection(y, rows, kappa):
    k, b = rows.shape
    # quadprog form: min 1/2 u'u - y'u  s.t.  C' u >= h
    cmat = np.hstack([-rows.T, np.eye(b)])
    h = np.concatenate([np.full(k, -kappa), np.zeros(b)])
    _, _, _, iters, lagr, _ = quadprog.solve_qp(np.eye(b), y, cmat, h, 0)
    return np.maximum(lagr[:k], 0.0), int(iters[0])


def _reduced_optimal(y, rows, kappa, mu, tol) -> bool:
    """KKT of the reduced dual: rows feasible, complementary slackness."""
    u = np.maximum(y - rows.T @ mu, 0.0)
    slack = rows @ u - kappa
    return bool(np.all(slack <= tol) and np.all(np.abs(mu * slack) <= tol * (1.0 + mu)))


def project(y, rows, kappa, mu0=None, max_iter=MAX_SWEEPS, tol=0.0):
    """Projection of ``y`` onto ``{u >= 0, rows @ u <= kappa}``.

    Returns ``(u, mu, iterations)`` with ``mu >= 0`` the row multipliers.
    The fast active-set iteration is tried first; when it stalls on
    rank-deficient rows, the Goldfarb-Idnani solver takes over.
    """
    k = rows.shape[0]
    mu0 = np.zeros(k) if mu0 is None else mu0
    mu, iters = _solve_reduced(y, rows, kappa, mu0, max_iter)
    if not _reduced_optimal(y, rows, kappa, mu, tol):
        mu, extra = _exact_projection(y, rows, kappa)
        iters += extra
    # rebuilding u from mu gives exact zeros where the bound is active
    return np.maximum(y - rows.T @ mu, 0.0), mu, iters


def solve_l1_qp(
    beta: np.ndarray,
    phi: np.ndarray,
    lam: float,
    c: float,
    warm_rows: np.ndarray | None = None,
    max_sweeps: int = MAX_SWEEPS,
) -> QPResult:
    """Minimize ``(lam/2)||a||^2 - a.beta`` s.t. ``a >= 0``, ``phi @ a <= 1 + c``.

    ``warm_rows`` seeds the working set with row indices that were active
    for a neighbouring problem.  ``max_sweeps`` caps the total number of
    active-set iterations; exhausting it raises :class:`ConvergenceError`
    carrying the last iterate and its KKT residuals.
    """
    if lam <= 0:
        raise InvalidParameterError(f"lambda must be positive, got {lam}")
    if c <= 0:
        raise InvalidParameterError(f"c must be positive, got {c}")
    beta = np.asarray(beta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    m, b = phi.shape
    kappa = lam * (1.0 + c)
    feas_tol = 0.1 * KKT_TOL * lam
    mu_full = np.zeros(m)

    def finish(u, sweeps):
        alpha = u / lam
        return QPResult(alpha, mu_full, sweeps, kkt_residuals(alpha, mu_full, beta, phi, lam, c))

    pos = np.flatnonzero(beta > 0)
    u = np.zeros(b)
    if pos.size == 0:
        return finish(u, 0)
    bp = beta[pos]
    phi_p = phi[:, pos]
    slack = phi_p @ bp - kappa
    candidates = np.flatnonzero(slack > feas_tol)
    if candidates.size == 0:
        u[pos] = bp
        return finish(u, 0)

    work = np.array([], dtype=int)
    if warm_rows is not None and len(warm_rows):
        work = np.intersect1d(np.asarray(warm_rows, dtype=int), candidates)
    if work.size == 0:
        work = candidates[np.argsort(-slack[candidates])[:_ROWS_PER_ROUND]]
    used = 0
    mu = np.zeros(work.size)
    while True:
        up, mu, iters = project(bp, phi_p[work], kappa, mu, max(max_sweeps - used, 1), feas_tol)
        used += iters
        slack = phi_p @ up - kappa
        # working rows hold up to rounding; never add them twice
        violated = np.setdiff1d(np.flatnonzero(slack > feas_tol), work)
        if violated.size == 0 or used >= max_sweeps:
            break
        add = violated[np.argsort(-slack[violated])[:_ROWS_PER_ROUND]]
        work = np.concatenate([work, add])
        mu = np.concatenate([mu, np.zeros(add.size)])
    u[pos] = up
    mu_full[work] = mu
    res = finish(u, used)
    if violated.size:
        raise ConvergenceError(
            f"L1 QP did not converge in {max_sweeps} iterations",
            last_iterate=res.alpha,
            residual=res.kkt,
        )
    return res
