"""Cross-validated choice of the kernel width and the regularization strength.

Positives and unlabeled points are split into folds independently (same
seed, separate permutations), so every fold holds both sample types.  A
candidate ``(sigma, lambda)`` is fitted on the training folds and scored
on the held-out fold; scores are averaged over folds.

Held-out scores by objective:

* ``dual_objective``: the unregularized Fenchel lower bound
  ``theta * mean r(x) - mean f*(r(x'))`` evaluated on held-out points with
  the training-fold coefficients.  Higher is better.  For the L1 family
  ``r >= -1`` always holds, so the bound reduces to ``alpha . beta_te -
  theta + 1``; held-out points are not bound by the finite-c constraint.
* ``ratio_objective``: least-squares density-ratio loss
  ``1/2 a' G_te a - h_te . a``.  Lower is better.
* ``classifier_objective``: mean squared error of a kernel ridge
  regression of the labeled/unlabeled indicator.  Lower is better.

Among candidates within ``TIE_RTOL`` of the best score the one with the
largest lambda wins, then the largest sigma.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .core import (
    DEFAULT_MAX_CENTERS,
    DEFAULT_SIGMA_MULTIPLIERS,
    BasisSpec,
    Dataset,
    build_basis,
    check_theta,
    median_distance,
)
from .divergences import DivergenceSpec
from .dual import SolverConfig, dual_value, maximize_dual
from .errors import ConvergenceError, InvalidParameterError
from .qp import solve_l1_qp

DEFAULT_LAMBDA_GRID = (1e-3, 1e-2, 1e-1, 1.0, 10.0)
TIE_RTOL = 1e-12


class Method(str, enum.Enum):
    PEN_L1 = "pen-l1"
    L1 = "l1"
    PEN_KL = "pen-kl"
    PEN_PE = "pen-pe"
    PE = "pe"
    EN = "en"
    SB = "sb"

    @classmethod
    def parse(cls, value) -> "Method":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("_", "-")
        aliases = {"penl1": "pen-l1", "l1c": "l1", "penkl": "pen-kl", "penpe": "pen-pe"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise InvalidParameterError(f"unknown method {value!r}; expected one of {names}") from None


DUAL_METHODS = (Method.PEN_L1, Method.L1, Method.PEN_KL, Method.PEN_PE, Method.PE)
_SMOOTH_SPECS = {
    Method.PEN_KL: DivergenceSpec.parse("kl", penalized=True),
    Method.PEN_PE: DivergenceSpec.parse("pearson", penalized=True),
}


class Objective(str, enum.Enum):
    DUAL = "dual_objective"
    RATIO = "ratio_objective"
    CLASSIFIER = "classifier_objective"

    @property
    def higher_is_better(self) -> bool:
        return self is Objective.DUAL


def _check_grid(values, name) -> tuple:
    grid = tuple(float(v) for v in values)
    if not grid:
        raise InvalidParameterError(f"{name} must not be empty")
    if not all(np.isfinite(v) and v > 0 for v in grid):
        raise InvalidParameterError(f"{name} must hold positive finite values")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise InvalidParameterError(f"{name} must be ascending")
    return grid


@dataclass(frozen=True)
class CVConfig:
    """Candidate grids and fold layout.

    ``sigma_grid`` holds multiples of the median pairwise distance of the
    standardized pooled sample unless ``sigma_relative`` is False, in which
    case the values are used as widths directly.  ``cv_stride = k`` runs the
    search only at every k-th theta of the grid (and at its last point);
    the other thetas reuse the choice of the nearest searched theta.
    """

    folds: int = 5
    sigma_grid: tuple = DEFAULT_SIGMA_MULTIPLIERS
    lambda_grid: tuple = DEFAULT_LAMBDA_GRID
    seed: int = 0
    sigma_relative: bool = True
    global_cv: bool = False
    cv_stride: int = 1

    def __post_init__(self):
        if int(self.folds) < 2:
            raise InvalidParameterError(f"folds must be >= 2, got {self.folds}")
        if int(self.cv_stride) < 1:
            raise InvalidParameterError("cv_stride must be >= 1")
        object.__setattr__(self, "sigma_grid", _check_grid(self.sigma_grid, "sigma_grid"))
        object.__setattr__(self, "lambda_grid", _check_grid(self.lambda_grid, "lambda_grid"))


def fold_assignment(count: int, folds: int, seed: int) -> np.ndarray:
    """Fold id per row: a seeded permutation dealt round-robin."""
    perm = np.random.default_rng(seed).permutation(count)
    ids = np.empty(count, dtype=np.int64)
    ids[perm] = np.arange(count) % folds
    return ids


@dataclass(eq=False)
class KernelCache:
    """Design matrices and fold statistics for every candidate sigma.

    Centers and standardization are fixed once from the full pooled
    sample; only the width changes across candidates and folds.
    """

    data: Dataset
    basis: BasisSpec
    sigmas: np.ndarray
    folds: int
    pos_folds: np.ndarray
    unl_folds: np.ndarray
    _designs: dict = field(default_factory=dict, repr=False)
    _means: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(
        cls,
        data: Dataset,
        config: CVConfig,
        max_centers: int = DEFAULT_MAX_CENTERS,
        seed: int = 0,
    ) -> "KernelCache":
        k = int(config.folds)
        if data.n < k or data.n_prime < k:
            raise InvalidParameterError(
                f"{k}-fold cross-validation needs at least {k} positives and {k} unlabeled "
                f"points, got n={data.n}, n'={data.n_prime}"
            )
        basis = build_basis(data, 1.0, max_centers=max_centers, seed=seed)
        sig = np.asarray(config.sigma_grid, dtype=np.float64)
        if config.sigma_relative:
            sig = sig * median_distance(data, basis.standardizer, seed=seed)
        return cls(
            data,
            basis,
            sig,
            k,
            fold_assignment(data.n, k, config.seed),
            fold_assignment(data.n_prime, k, config.seed),
        )

    def basis_at(self, s: int) -> BasisSpec:
        return self.basis.with_sigma(float(self.sigmas[s]))

    def design(self, s: int) -> tuple[np.ndarray, np.ndarray]:
        if s not in self._designs:
            basis = self.basis_at(s)
            self._designs[s] = (basis.design(self.data.positives), basis.design(self.data.unlabeled))
        return self._designs[s]

    def fold_means(self, s: int):
        """Training and held-out mean basis vectors, each of shape (folds, b)."""
        if s not in self._means:
            pos, unl = self.design(s)
            a_tr, a_te, v_tr, v_te = [], [], [], []
            for k in range(self.folds):
                a_tr.append(pos[self.pos_folds != k].mean(axis=0))
                a_te.append(pos[self.pos_folds == k].mean(axis=0))
                v_tr.append(unl[self.unl_folds != k].mean(axis=0))
                v_te.append(unl[self.unl_folds == k].mean(axis=0))
            self._means[s] = tuple(np.array(x) for x in (a_tr, a_te, v_tr, v_te))
        return self._means[s]

    def unlabeled_split(self, s: int, k: int) -> tuple[np.ndarray, np.ndarray]:
        unl = self.design(s)[1]
        return unl[self.unl_folds != k], unl[self.unl_folds == k]


# -- held-out score tables ---------------------------------------------------


def _pen_l1_table(cache, thetas, lambdas):
    out = np.zeros((thetas.size, cache.sigmas.size, lambdas.size))
    for s in range(cache.sigmas.size):
        a_tr, a_te, v_tr, v_te = cache.fold_means(s)
        beta_tr = thetas[:, None, None] * a_tr[None] - v_tr[None]
        beta_te = thetas[:, None, None] * a_te[None] - v_te[None]
        m = np.einsum("tkb,tkb->t", np.maximum(beta_tr, 0.0), beta_te) / cache.folds
        out[:, s, :] = m[:, None] / lambdas[None, :] - thetas[:, None] + 1.0
    return out


def _l1_qp_table(cache, thetas, lambdas, c):
    out = np.zeros((thetas.size, cache.sigmas.size, lambdas.size))
    for s in range(cache.sigmas.size):
        a_tr, a_te, v_tr, v_te = cache.fold_means(s)
        for k in range(cache.folds):
            unl_tr, _ = cache.unlabeled_split(s, k)
            for li, lam in enumerate(lambdas):
                warm = None
                for ti, theta in enumerate(thetas):
                    try:
                        res = solve_l1_qp(theta * a_tr[k] - v_tr[k], unl_tr, lam, c, warm_rows=warm)
                    except ConvergenceError:
                        out[ti, s, li] = -np.inf
                        continue
                    warm = np.flatnonzero(res.mu > 0)
                    out[ti, s, li] += (res.alpha @ (theta * a_te[k] - v_te[k]) - theta + 1.0) / cache.folds
    return out


def _smooth_dual_table(cache, thetas, lambdas, spec, solver):
    out = np.zeros((thetas.size, cache.sigmas.size, lambdas.size))
    for s in range(cache.sigmas.size):
        a_tr, a_te, _, _ = cache.fold_means(s)
        for k in range(cache.folds):
            unl_tr, unl_te = cache.unlabeled_split(s, k)
            for li, lam in enumerate(lambdas):
                alpha = None
                for ti, theta in enumerate(thetas):
                    try:
                        res = maximize_dual(spec, theta, a_tr[k], unl_tr, lam, solver, alpha0=alpha)
                    except ConvergenceError:
                        out[ti, s, li] = -np.inf
                        continue
                    alpha = res.alpha
                    held = dual_value(spec, theta, a_te[k], unl_te, 0.0, alpha)
                    out[ti, s, li] += held / cache.folds
    return out


def _gram_parts(cache, s, k):
    unl_tr, unl_te = cache.unlabeled_split(s, k)
    return unl_tr.T @ unl_tr / unl_tr.shape[0], unl_te.T @ unl_te / unl_te.shape[0]


def ratio_fold_terms(cache, s, lambdas):
    """Per (fold, lambda): held-out ``h_te . w`` and ``w' G_te w`` for ``w = (G_tr + lam I)^-1 h_tr``."""
    a_tr, a_te, _, _ = cache.fold_means(s)
    b = a_tr.shape[1]
    lin = np.zeros((cache.folds, lambdas.size))
    quad = np.zeros((cache.folds, lambdas.size))
    for k in range(cache.folds):
        g_tr, g_te = _gram_parts(cache, s, k)
        for li, lam in enumerate(lambdas):
            w = cho_solve(cho_factor(g_tr + lam * np.eye(b)), a_tr[k])
            lin[k, li] = a_te[k] @ w
            quad[k, li] = w @ g_te @ w
    return lin, quad


def _pe_table(cache, thetas, lambdas):
    out = np.zeros((thetas.size, cache.sigmas.size, lambdas.size))
    for s in range(cache.sigmas.size):
        lin, quad = ratio_fold_terms(cache, s, lambdas)
        core = (lin - 0.5 * quad).mean(axis=0)
        # alpha = theta * w, so the held-out bound is quadratic in theta
        out[:, s, :] = thetas[:, None] ** 2 * core[None, :] - thetas[:, None] + 0.5
    return out


def _ratio_table(cache, lambdas):
    out = np.zeros((cache.sigmas.size, lambdas.size))
    for s in range(cache.sigmas.size):
        lin, quad = ratio_fold_terms(cache, s, lambdas)
        out[s] = (0.5 * quad - lin).mean(axis=0)
    return out


def _classifier_table(cache, lambdas):
    out = np.zeros((cache.sigmas.size, lambdas.size))
    for s in range(cache.sigmas.size):
        pos, unl = cache.design(s)
        for k in range(cache.folds):
            tr_p, te_p = pos[cache.pos_folds != k], pos[cache.pos_folds == k]
            tr_u, te_u = unl[cache.unl_folds != k], unl[cache.unl_folds == k]
            x_tr = np.vstack([tr_p, tr_u])
            y_tr = np.concatenate([np.ones(len(tr_p)), np.zeros(len(tr_u))])
            x_te = np.vstack([te_p, te_u])
            y_te = np.concatenate([np.ones(len(te_p)), np.zeros(len(te_u))])
            gram = x_tr.T @ x_tr / len(y_tr)
            rhs = x_tr.T @ y_tr / len(y_tr)
            for li, lam in enumerate(lambdas):
                w = cho_solve(cho_factor(gram + lam * np.eye(gram.shape[0])), rhs)
                out[s, li] += np.mean((x_te @ w - y_te) ** 2) / cache.folds
    return out


def dual_score_table(cache, method, thetas, lambdas, c=1.0, solver=SolverConfig()):
    """Mean held-out dual bound, shape (thetas, sigmas, lambdas)."""
    method = Method.parse(method)
    thetas = np.asarray(thetas, dtype=np.float64)
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if method is Method.PEN_L1:
        return _pen_l1_table(cache, thetas, lambdas)
    if method is Method.L1:
        return _l1_qp_table(cache, thetas, lambdas, c)
    if method is Method.PE:
        return _pe_table(cache, thetas, lambdas)
    if method in _SMOOTH_SPECS:
        return _smooth_dual_table(cache, thetas, lambdas, _SMOOTH_SPECS[method], solver)
    raise InvalidParameterError(f"{method.value} has no dual objective")


# -- selection ------------------------------------------------------------------


def pick_best(scores: np.ndarray, higher_is_better: bool = True) -> tuple[int, int]:
    """Index ``(sigma, lambda)`` of the best entry of a (sigmas, lambdas) table.

    Near-ties go to the largest lambda, then the largest sigma.
    """
    util = np.where(np.isfinite(scores), scores if higher_is_better else -scores, -np.inf)
    best = util.max()
    if not np.isfinite(best):
        raise ConvergenceError("every hyperparameter candidate failed")
    threshold = best - TIE_RTOL * max(1.0, abs(best))
    n_sig, n_lam = util.shape
    for li in range(n_lam - 1, -1, -1):
        for si in range(n_sig - 1, -1, -1):
            if util[si, li] >= threshold:
                return si, li
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class Selection:
    """Per-theta hyperparameter choice (indices into the cache grids)."""

    sigma_index: np.ndarray
    lambda_index: np.ndarray
    cv_score: np.ndarray


def searched_positions(count: int, stride: int) -> np.ndarray:
    pos = np.arange(0, count, stride)
    return pos if pos[-1] == count - 1 else np.append(pos, count - 1)


def select_over_grid(cache, method, thetas, config: CVConfig, c=1.0, solver=SolverConfig()) -> Selection:
    thetas = np.asarray(thetas, dtype=np.float64)
    lambdas = np.asarray(config.lambda_grid)
    where = searched_positions(thetas.size, int(config.cv_stride))
    table = dual_score_table(cache, method, thetas[where], lambdas, c, solver)
    if config.global_cv:
        si, li = pick_best(table.mean(axis=0))
        picks = [(si, li)] * where.size
    else:
        picks = [pick_best(t) for t in table]
    sig = np.array([p[0] for p in picks])
    lam = np.array([p[1] for p in picks])
    score = np.array([table[i, p[0], p[1]] for i, p in enumerate(picks)])
    # every theta takes the choice of the nearest searched theta
    near = np.abs(np.arange(thetas.size)[:, None] - where[None, :]).argmin(axis=1)
    return Selection(sig[near], lam[near], score[near])


def select_hyperparams(
    theta: float,
    data: Dataset,
    config: CVConfig,
    objective: Objective | str = Objective.DUAL,
    method: Method | str = Method.PEN_L1,
    c: float = 1.0,
    max_centers: int = DEFAULT_MAX_CENTERS,
    seed: int = 0,
    solver: SolverConfig = SolverConfig(),
    cache: KernelCache | None = None,
) -> tuple[float, float, float]:
    """Return ``(sigma, lambda, cv_score)`` for one theta.

    ``cv_score`` is the fold-averaged held-out score of the chosen pair in
    the objective's own orientation (a bound for ``dual_objective``, a loss
    otherwise).  ``theta`` is ignored by the ratio and classifier
    objectives.
    """
    objective = Objective(objective)
    cache = cache or KernelCache.build(data, config, max_centers, seed)
    lambdas = np.asarray(config.lambda_grid)
    if objective is Objective.DUAL:
        check_theta(theta)
        table = dual_score_table(cache, method, [theta], lambdas, c, solver)[0]
    elif objective is Objective.RATIO:
        table = _ratio_table(cache, lambdas)
    else:
        table = _classifier_table(cache, lambdas)
    si, li = pick_best(table, objective.higher_is_better)
    return float(cache.sigmas[si]), float(lambdas[li]), float(table[si, li])
