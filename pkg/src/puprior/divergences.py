"""f-divergences as scalar convex conjugates.

Each :class:`DivergenceSpec` carries the generator ``f``, its conjugate
``f*(z) = sup_t (t z - f(t))`` and, for the penalized variant, the conjugate
of ``f~(t) = f(t)`` on ``[0, 1]`` (``+inf`` elsewhere).  Restricting ``t`` to
``[0, 1]`` is what removes the systematic over-estimation of the class
prior under partial matching.

Summary of the closed forms::

    name     f(t)          f*(z)                      f~*(z)
    KL       -log t        -1 - log(-z), z < 0        -1 - log(-z) if z <= -1 else z
    Pearson  (t-1)^2 / 2   z^2/2 + z                  -1/2 if z < -1; z^2/2 + z if z <= 0; else z
    L1       |t - 1|       z on [-1, 1], else inf     max(z, -1)

Infeasible points return ``INFEASIBLE`` (``math.inf``), never an overflow.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidParameterError

INFEASIBLE = math.inf


class Divergence(str, enum.Enum):
    KL = "kl"
    PEARSON = "pearson"
    L1 = "l1"


@dataclass(frozen=True)
class DivergenceSpec:
    name: Divergence
    penalized: bool = True

    @classmethod
    def parse(cls, name: str, penalized: bool = True) -> "DivergenceSpec":
        try:
            return cls(Divergence(name.lower()), penalized)
        except ValueError:
            raise InvalidParameterError(
                f"unknown divergence {name!r}; expected one of kl, pearson, l1"
            ) from None

    @property
    def domain_lower(self) -> float:
        if self.name is Divergence.L1 and not self.penalized:
            return -1.0
        return -math.inf

    @property
    def domain_upper(self) -> float:
        """Supremum of the points where the conjugate is finite."""
        if self.penalized or self.name is Divergence.PEARSON:
            return math.inf
        return 0.0 if self.name is Divergence.KL else 1.0

    def f(self, t: float) -> float:
        if self.penalized and not (0.0 <= t <= 1.0):
            return INFEASIBLE
        if self.name is Divergence.KL:
            return -math.log(t) if t > 0 else INFEASIBLE
        if self.name is Divergence.PEARSON:
            return 0.5 * (t - 1.0) ** 2
        return abs(t - 1.0)

    def conjugate(self, z):
        """Vectorized ``f*`` / ``f~*``; infinite outside the domain."""
        z = np.asarray(z, dtype=np.float64)
        if self.name is Divergence.KL:
            if self.penalized:
                with np.errstate(divide="ignore", invalid="ignore"):
                    out = np.where(z <= -1.0, -1.0 - np.log(np.maximum(-z, 1.0)), z)
            else:
                with np.errstate(divide="ignore", invalid="ignore"):
                    out = np.where(z < 0.0, -1.0 - np.log(np.where(z < 0, -z, 1.0)), INFEASIBLE)
        elif self.name is Divergence.PEARSON:
            quad = 0.5 * z * z + z
            if self.penalized:
                out = np.where(z < -1.0, -0.5, np.where(z <= 0.0, quad, z))
            else:
                out = quad
        else:
            if self.penalized:
                out = np.maximum(z, -1.0)
            else:
                out = np.where((z >= -1.0) & (z <= 1.0), z, INFEASIBLE)
        return out if out.ndim else float(out)

    def gradient(self, z) -> np.ndarray:
        """One element of the subdifferential per point (the value solvers use).

        For the penalized KL and Pearson conjugates the function is
        continuously differentiable, so this is the derivative.  At a kink
        the element closest to zero is taken.
        """
        z = np.asarray(z, dtype=np.float64)
        lo, hi = self._subgradient_bounds(z)
        return np.clip(0.0, lo, hi)

    def _subgradient_bounds(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self.name is Divergence.KL:
            with np.errstate(divide="ignore"):
                inner = -1.0 / np.where(z != 0, z, -1.0)
            if self.penalized:
                g = np.where(z <= -1.0, inner, 1.0)
            else:
                g = inner
            return g, g
        if self.name is Divergence.PEARSON:
            g = z + 1.0
            if self.penalized:
                g = np.clip(g, 0.0, 1.0)
            return g, g
        if self.penalized:
            lo = np.where(z > -1.0, 1.0, 0.0)
            hi = np.where(z >= -1.0, 1.0, 0.0)
            return lo, hi
        one = np.ones_like(z)
        return one, one


def conjugate_value(spec: DivergenceSpec, z: float) -> float:
    return float(spec.conjugate(z))


def conjugate_subgradient(spec: DivergenceSpec, z: float) -> tuple[float, float]:
    """Closed interval ``[lo, hi]`` of slopes of the conjugate at ``z``."""
    z = float(z)
    if not (spec.domain_lower < z < spec.domain_upper):
        raise DomainError(
            f"z={z} is not strictly inside ({spec.domain_lower}, {spec.domain_upper})"
        )
    lo, hi = spec._subgradient_bounds(np.asarray(z))
    return float(lo), float(hi)


ALL_SPECS = tuple(
    DivergenceSpec(name, penalized) for name in Divergence for penalized in (False, True)
)
