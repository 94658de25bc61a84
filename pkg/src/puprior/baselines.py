"""Reference class-prior estimators.

EN
    A probabilistic classifier ``g(x) ~ P(labeled | x)`` is trained on
    positives (target 1) against unlabeled points (target 0) and the prior
    is read off as ``mean_U g / mean_P g``.
PE
    Unpenalized Pearson matching, whose dual has a closed form.
SB
    Slope of the ROC curve of a density-ratio scorer at its right end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .core import DEFAULT_MAX_CENTERS, Dataset
from .errors import DegenerateClassifierError, InvalidParameterError, WindowError
from .estimators import DEFAULT_THETA_GRID, PriorEstimate, search_prior
from .model_selection import CVConfig, KernelCache, Method, Objective, select_hyperparams
from .ratio_classifier import fit_ratio

EN_CLIP = 1e-3
DEFAULT_FIT_WINDOW = 0.1


def _clamped(value: float, label: str) -> tuple[float, list]:
    if 0.0 <= value <= 1.0:
        return float(value), []
    clipped = float(min(max(value, 0.0), 1.0))
    return clipped, [f"{label} estimate {value:.6g} clamped to {clipped:g}"]


# -- EN ------------------------------------------------------------------------


def en_prior(
    data: Dataset,
    classifier_config: CVConfig = CVConfig(),
    seed: int = 0,
    max_centers: int = DEFAULT_MAX_CENTERS,
) -> PriorEstimate:
    if data.n < 10 or data.n_prime < 10:
        raise InvalidParameterError("EN needs at least 10 positive and 10 unlabeled points")
    cache = KernelCache.build(data, classifier_config, max_centers, seed)
    sigma, lam, _ = select_hyperparams(
        0.0, data, classifier_config, Objective.CLASSIFIER, cache=cache
    )
    basis = cache.basis.with_sigma(sigma)
    pos, unl = basis.design(data.positives), basis.design(data.unlabeled)
    x = np.vstack([pos, unl])
    y = np.concatenate([np.ones(data.n), np.zeros(data.n_prime)])
    w = cho_solve(cho_factor(x.T @ x / y.size + lam * np.eye(basis.b)), x.T @ y / y.size)
    g_pos, g_unl = pos @ w, unl @ w
    if g_pos.mean() < EN_CLIP:
        raise DegenerateClassifierError(
            f"mean classifier output on positives is {g_pos.mean():.3g} < {EN_CLIP}"
        )
    g_pos = np.clip(g_pos, EN_CLIP, 1 - EN_CLIP)
    g_unl = np.clip(g_unl, EN_CLIP, 1 - EN_CLIP)
    theta, warnings = _clamped(g_unl.mean() / g_pos.mean(), "EN")
    return PriorEstimate(
        theta_hat=theta, curve=(), method=Method.EN.value, hyperparams=(sigma, lam),
        seed=int(seed), warnings=tuple(warnings), b=basis.b,
    )


# -- PE ------------------------------------------------------------------------


def pe_alpha(theta: float, h: np.ndarray, gram: np.ndarray, lam: float) -> np.ndarray:
    """Maximizer ``theta (G + lam I)^-1 h`` of ``theta h.a - a'Ga/2 - lam/2 ||a||^2``."""
    if not lam > 0:
        raise InvalidParameterError(f"lambda must be positive, got {lam}")
    return theta * cho_solve(cho_factor(gram + lam * np.eye(h.size)), h)


def pe_value(theta: float, h: np.ndarray, gram: np.ndarray, lam: float) -> float:
    """Closed-form Pearson estimate ``theta^2/2 h'(G + lam I)^-1 h - theta + 1/2``."""
    alpha = pe_alpha(theta, h, gram, lam)
    return float(0.5 * theta * (h @ alpha) - theta + 0.5)


def pe_prior(
    data: Dataset,
    grid=DEFAULT_THETA_GRID,
    model_selection: CVConfig = CVConfig(),
    seed: int = 0,
    max_centers: int = DEFAULT_MAX_CENTERS,
) -> PriorEstimate:
    return search_prior(Method.PE, data, grid, model_selection, seed, max_centers=max_centers)


# -- SB ------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RocCurve:
    """Points ``(x, y)`` with ``x`` the fraction of positives and ``y`` the
    fraction of unlabeled points scoring below the threshold.

    The curve runs from ``(0, r0)`` to ``(1, 1)``.  Near ``x = 1`` only the
    highest-scoring points remain, where the unlabeled sample is a
    ``prior``-scaled copy of the positive one, so the slope there is the
    prior.
    """

    points: np.ndarray
    thresholds: np.ndarray

    @property
    def x(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.points[:, 1]


def roc_curve(scores_pos, scores_unl, seed: int = 0) -> RocCurve:
    """Sweep the threshold one sample at a time; ties are ordered at random (seeded)."""
    scores_pos = np.asarray(scores_pos, dtype=np.float64).ravel()
    scores_unl = np.asarray(scores_unl, dtype=np.float64).ravel()
    if scores_pos.size == 0 or scores_unl.size == 0:
        raise InvalidParameterError("both score samples must be non-empty")
    scores = np.concatenate([scores_pos, scores_unl])
    is_pos = np.concatenate([np.ones(scores_pos.size, bool), np.zeros(scores_unl.size, bool)])
    jitter = np.random.default_rng(seed).random(scores.size)
    order = np.lexsort((jitter, scores))
    # integer counts keep the coordinates exact, so x reaches 1 exactly
    x = np.concatenate([[0], np.cumsum(is_pos[order])]) / scores_pos.size
    y = np.concatenate([[0], np.cumsum(~is_pos[order])]) / scores_unl.size
    thresholds = np.concatenate([[-np.inf], scores[order]])
    return RocCurve(np.column_stack([x, y]), thresholds)


def right_endpoint_slope(curve: RocCurve, fit_window: float = DEFAULT_FIT_WINDOW) -> float:
    """Least-squares slope over the last ``fit_window`` fraction of the ROC points.

    A vertical window (all positives already passed) has slope ``inf``.
    """
    if not 0.0 < fit_window < 1.0:
        raise InvalidParameterError(f"fit_window must lie in (0, 1), got {fit_window}")
    total = curve.points.shape[0]
    for window in (fit_window, min(1.0, 2.0 * fit_window)):
        tail = curve.points[total - int(np.ceil(window * total)):]
        if tail.shape[0] < 3:
            continue
        if np.ptp(tail[:, 0]) > 0:
            return float(np.polyfit(tail[:, 0], tail[:, 1], 1)[0])
        if np.ptp(tail[:, 1]) > 0:
            return float("inf")
    raise WindowError(f"fewer than 3 usable ROC points in the right-end window ({total} points)")


def cross_fitted_scores(data: Dataset, cache: KernelCache, sigma: float, lam: float):
    """Ratio scores where every point is scored by a model fitted without its fold.

    In-sample scores favour the positives the model was fitted on, which
    flattens the right end of the ROC curve.
    """
    basis = cache.basis.with_sigma(sigma)
    s_pos, s_unl = np.empty(data.n), np.empty(data.n_prime)
    for k in range(cache.folds):
        test_p, test_u = cache.pos_folds == k, cache.unl_folds == k
        model = fit_ratio(data.subset(~test_p, ~test_u), basis, lam)
        s_pos[test_p] = model.raw(data.positives[test_p])
        s_unl[test_u] = model.raw(data.unlabeled[test_u])
    return s_pos, s_unl


def sb_prior(
    data: Dataset,
    ratio_config: CVConfig = CVConfig(),
    fit_window: float = DEFAULT_FIT_WINDOW,
    seed: int = 0,
    max_centers: int = DEFAULT_MAX_CENTERS,
) -> PriorEstimate:
    cache = KernelCache.build(data, ratio_config, max_centers, seed)
    sigma, lam, _ = select_hyperparams(0.0, data, ratio_config, Objective.RATIO, cache=cache)
    curve = roc_curve(*cross_fitted_scores(data, cache, sigma, lam), seed)
    theta, warnings = _clamped(right_endpoint_slope(curve, fit_window), "SB")
    return PriorEstimate(
        theta_hat=theta, curve=(), method=Method.SB.value,
        hyperparams=(sigma, lam), seed=int(seed),
        warnings=tuple(warnings), b=cache.basis.b,
    )
