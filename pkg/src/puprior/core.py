"""Data containers, Gaussian basis construction and the beta vector.

All matrices follow the row = sample, column = feature layout.  Every
estimator in the package consumes the same two ingredients produced here:
the design matrices of a Gaussian basis evaluated on the positive and the
unlabeled sample, and the per-basis difference

    beta_l(theta) = theta * mean_i phi_l(x_i) - mean_j phi_l(x'_j).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import DataError, InvalidParameterError, ShapeError

DEFAULT_MAX_CENTERS = 200
DEFAULT_SIGMA_MULTIPLIERS = (0.25, 0.5, 1.0, 2.0, 4.0)


def _as_matrix(x, name: str) -> np.ndarray:
    arr = np.array(x, dtype=np.float64, copy=True)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be a 2-d matrix, got ndim={arr.ndim}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """A positive sample ``X`` (n x d) and an unlabeled sample ``X'`` (n' x d).

    1-d inputs are read as a single feature column.
    """

    positives: np.ndarray
    unlabeled: np.ndarray

    def __post_init__(self):
        pos = _as_matrix(self.positives, "positives")
        unl = _as_matrix(self.unlabeled, "unlabeled")
        if pos.shape[0] < 1 or unl.shape[0] < 1:
            raise DataError("both samples need at least one row")
        if pos.shape[1] != unl.shape[1] or pos.shape[1] < 1:
            raise ShapeError(
                f"column mismatch: positives have {pos.shape[1]}, unlabeled have {unl.shape[1]}"
            )
        for name, arr in (("positives", pos), ("unlabeled", unl)):
            bad = ~np.isfinite(arr).all(axis=1)
            if bad.any():
                raise DataError(f"{name} row {int(np.argmax(bad))} contains NaN or inf")
        object.__setattr__(self, "positives", pos)
        object.__setattr__(self, "unlabeled", unl)

    @property
    def n(self) -> int:
        return self.positives.shape[0]

    @property
    def n_prime(self) -> int:
        return self.unlabeled.shape[0]

    @property
    def d(self) -> int:
        return self.positives.shape[1]

    def pooled(self) -> np.ndarray:
        return np.vstack([self.positives, self.unlabeled])

    def subset(self, pos_idx, unl_idx) -> "Dataset":
        return Dataset(self.positives[pos_idx], self.unlabeled[unl_idx])


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-column affine map ``(x - shift) / scale``."""

    shift: np.ndarray
    scale: np.ndarray

    @classmethod
    def identity(cls, d: int) -> "Standardizer":
        return cls(np.zeros(d), np.ones(d))

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        x = np.asarray(x, dtype=np.float64)
        shift = x.mean(axis=0)
        scale = x.std(axis=0)
        # zero-variance columns are left unscaled
        scale = np.where(scale > 0, scale, 1.0)
        return cls(shift, scale)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.shift) / self.scale


@dataclass(frozen=True, eq=False)
class BasisSpec:
    """Gaussian kernels ``exp(-||z - c_l||^2 / (2 sigma^2))``.

    ``centers`` are stored in raw input coordinates; ``z`` and ``c_l`` are
    compared after applying ``standardizer`` (identity by default), so sigma
    is measured in standardized units whenever a standardizer is attached.
    """

    centers: np.ndarray
    sigma: float
    standardizer: Standardizer | None = field(default=None)

    def __post_init__(self):
        centers = _as_matrix(self.centers, "centers")
        if centers.shape[0] < 1:
            raise InvalidParameterError("a basis needs at least one center")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise InvalidParameterError(f"sigma must be positive, got {self.sigma}")
        std = self.standardizer or Standardizer.identity(centers.shape[1])
        if std.shift.shape != (centers.shape[1],):
            raise ShapeError("standardizer dimension does not match centers")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "standardizer", std)
        z = std.transform(centers)
        z.flags.writeable = False
        object.__setattr__(self, "_z_centers", z)

    @property
    def b(self) -> int:
        return self.centers.shape[0]

    @property
    def d(self) -> int:
        return self.centers.shape[1]

    def with_sigma(self, sigma: float) -> "BasisSpec":
        return BasisSpec(self.centers, sigma, self.standardizer)

    def design(self, x: np.ndarray) -> np.ndarray:
        """Evaluate every basis function on every row of ``x`` -> (rows, b)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if self.d == 1 else x.reshape(1, -1)
        if x.shape[1] != self.d:
            raise ShapeError(f"points have {x.shape[1]} columns, basis expects {self.d}")
        if x.shape[0] == 0:
            return np.empty((0, self.b))
        sq = cdist(self.standardizer.transform(x), self._z_centers, "sqeuclidean")
        return np.exp(-sq / (2.0 * self.sigma**2))


@dataclass(frozen=True, eq=False)
class BetaVector:
    values: np.ndarray
    theta: float


def build_basis(
    data: Dataset,
    sigma: float,
    max_centers: int = DEFAULT_MAX_CENTERS,
    seed: int = 0,
    standardize: bool = True,
) -> BasisSpec:
    """Gaussian basis centered on the pooled sample ``(x_1..x_n, x'_1..x'_n')``.

    When ``n + n'`` exceeds ``max_centers`` a seeded uniform subsample of
    the pooled rows is used (kept in original order).
    """
    if not (np.isfinite(sigma) and sigma > 0):
        raise InvalidParameterError(f"sigma must be positive, got {sigma}")
    if int(max_centers) < 1:
        raise InvalidParameterError("max_centers must be >= 1")
    pooled = data.pooled()
    total = pooled.shape[0]
    if total > max_centers:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(total, size=int(max_centers), replace=False))
        centers = pooled[idx]
    else:
        centers = pooled
    std = Standardizer.fit(pooled) if standardize else Standardizer.identity(data.d)
    return BasisSpec(centers, sigma, std)


def eval_basis(basis: BasisSpec, x) -> np.ndarray:
    """Basis values at a single point ``x`` (length d) -> length-b vector in (0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != basis.d:
        raise ShapeError(f"expected a point of dimension {basis.d}, got shape {x.shape}")
    return basis.design(x.reshape(1, -1))[0]


def basis_means(data: Dataset, basis: BasisSpec) -> tuple[np.ndarray, np.ndarray]:
    """Mean basis vectors over positives and over unlabeled points."""
    return basis.design(data.positives).mean(axis=0), basis.design(data.unlabeled).mean(axis=0)


def compute_beta(theta: float, data: Dataset, basis: BasisSpec) -> BetaVector:
    check_theta(theta)
    a, v = basis_means(data, basis)
    return BetaVector(theta * a - v, float(theta))


def check_theta(theta: float) -> None:
    if not (0.0 <= theta <= 1.0):
        raise InvalidParameterError(f"theta must lie in [0, 1], got {theta}")


def median_distance(
    data: Dataset, standardizer: Standardizer | None = None, max_points: int = 500, seed: int = 0
) -> float:
    """Median pairwise distance of a pooled subsample (standardized coordinates)."""
    pooled = data.pooled()
    if pooled.shape[0] > max_points:
        rng = np.random.default_rng(seed)
        pooled = pooled[np.sort(rng.choice(pooled.shape[0], size=max_points, replace=False))]
    std = standardizer or Standardizer.fit(data.pooled())
    dists = pdist(std.transform(pooled))
    dists = dists[dists > 0]
    return float(np.median(dists)) if dists.size else 1.0


def sigma_candidates(
    data: Dataset, multipliers=DEFAULT_SIGMA_MULTIPLIERS, seed: int = 0
) -> np.ndarray:
    return median_distance(data, seed=seed) * np.asarray(multipliers, dtype=np.float64)
