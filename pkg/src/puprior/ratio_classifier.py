"""Least-squares density-ratio fitting and the plug-in PU classifier.

The ratio ``r(x) = p(x | y = 1) / p(x)`` is modelled as ``phi(x) . alpha``
and fitted by minimizing the squared error against the true ratio under
``p``, which up to a constant is

    1/2 alpha' G alpha - h . alpha + lam/2 ||alpha||^2,

with ``G`` the unlabeled second-moment matrix of the basis and ``h`` the
positive mean.  Since ``p(y = 1 | x) = prior * r(x)``, a point is labeled
positive when ``prior * max(0, r(x)) >= 1/2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .core import DEFAULT_MAX_CENTERS, BasisSpec, Dataset
from .errors import InvalidParameterError, ShapeError
from .model_selection import CVConfig, KernelCache, Objective, select_hyperparams


@dataclass(frozen=True, eq=False)
class RatioModel:
    alpha: np.ndarray
    basis: BasisSpec
    lam: float

    @property
    def standardizer(self):
        return self.basis.standardizer

    def raw(self, points) -> np.ndarray:
        """Unclipped model values ``phi(x) . alpha``."""
        return self.basis.design(points) @ self.alpha

    def predict(self, points) -> np.ndarray:
        return np.maximum(self.raw(points), 0.0)


def ratio_system(data: Dataset, basis: BasisSpec) -> tuple[np.ndarray, np.ndarray]:
    """``(G, h)``: unlabeled second moments and positive means of the basis."""
    unl = basis.design(data.unlabeled)
    return unl.T @ unl / data.n_prime, basis.design(data.positives).mean(axis=0)


def ratio_loss(alpha, gram, h, lam=0.0) -> float:
    return float(0.5 * alpha @ gram @ alpha - h @ alpha + 0.5 * lam * alpha @ alpha)


def fit_ratio(data: Dataset, basis: BasisSpec, lam: float) -> RatioModel:
    if not (np.isfinite(lam) and lam > 0):
        raise InvalidParameterError(f"lambda must be positive, got {lam}")
    gram, h = ratio_system(data, basis)
    alpha = cho_solve(cho_factor(gram + lam * np.eye(basis.b)), h)
    return RatioModel(alpha, basis, float(lam))


def fit_ratio_cv(
    data: Dataset,
    config: CVConfig = CVConfig(),
    max_centers: int = DEFAULT_MAX_CENTERS,
    seed: int = 0,
    cache: KernelCache | None = None,
) -> RatioModel:
    """Fit with ``(sigma, lambda)`` chosen by held-out ratio loss."""
    cache = cache or KernelCache.build(data, config, max_centers, seed)
    sigma, lam, _ = select_hyperparams(0.0, data, config, Objective.RATIO, cache=cache)
    return fit_ratio(data, cache.basis.with_sigma(sigma), lam)


def predict(model: RatioModel, points) -> np.ndarray:
    return model.predict(points)


def classify(model: RatioModel, prior: float, points) -> np.ndarray:
    """Labels in {+1, -1}: +1 exactly when ``prior * max(0, r(x)) >= 1/2``."""
    if not 0.0 <= prior <= 1.0:
        raise InvalidParameterError(f"prior must lie in [0, 1], got {prior}")
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        return np.empty(0, dtype=np.int64)
    return np.where(prior * model.predict(points) >= 0.5, 1, -1)


def misclassification_rate(predicted, truth) -> float:
    predicted = np.asarray(predicted).ravel()
    truth = np.asarray(truth).ravel()
    if predicted.shape != truth.shape:
        raise ShapeError(f"length mismatch: {predicted.size} predictions, {truth.size} labels")
    if predicted.size == 0:
        raise ShapeError("need at least one label")
    return float(np.mean(predicted != truth))
