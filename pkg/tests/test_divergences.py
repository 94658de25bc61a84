import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from puprior.divergences import (
    ALL_SPECS,
    INFEASIBLE,
    Divergence,
    DivergenceSpec,
    conjugate_subgradient,
    conjugate_value,
)
from puprior.errors import DomainError, InvalidParameterError

PEN_KL = DivergenceSpec(Divergence.KL, True)
PEN_PE = DivergenceSpec(Divergence.PEARSON, True)
PEN_L1 = DivergenceSpec(Divergence.L1, True)
PENALIZED = [s for s in ALL_SPECS if s.penalized]
Z_GRID = np.linspace(-6, 6, 1201)
T_GRID = np.linspace(0.0, 1.0, 200_001)


def in_domain(spec, z):
    return spec.domain_lower < z < spec.domain_upper


class TestTableValues:
    @pytest.mark.parametrize(
        "spec, z, expected",
        [
            (PEN_KL, -1.0, -1.0),
            (PEN_KL, -math.e, -2.0),
            (PEN_KL, 0.5, 0.5),
            (PEN_PE, -2.0, -0.5),
            (PEN_PE, -0.5, -0.375),
            (PEN_PE, 2.0, 2.0),
            (PEN_L1, 0.0, 0.0),
            (PEN_L1, -3.0, -1.0),
            (PEN_L1, 7.0, 7.0),
            (DivergenceSpec(Divergence.KL, False), -1.0, -1.0),
            (DivergenceSpec(Divergence.PEARSON, False), 2.0, 4.0),
            (DivergenceSpec(Divergence.L1, False), 0.5, 0.5),
        ],
    )
    def test_values(self, spec, z, expected):
        assert conjugate_value(spec, z) == pytest.approx(expected, abs=1e-14)

    @pytest.mark.parametrize(
        "spec, z",
        [
            (DivergenceSpec(Divergence.KL, False), 0.0),
            (DivergenceSpec(Divergence.KL, False), 3.0),
            (DivergenceSpec(Divergence.L1, False), 1.5),
            (DivergenceSpec(Divergence.L1, False), -1.5),
        ],
    )
    def test_infeasible_sentinel(self, spec, z):
        assert conjugate_value(spec, z) == INFEASIBLE

    def test_penalized_domains(self):
        assert all(s.domain_upper == math.inf for s in PENALIZED)

    def test_parse(self):
        assert DivergenceSpec.parse("KL") == PEN_KL
        assert DivergenceSpec.parse("pearson", penalized=False).penalized is False
        with pytest.raises(InvalidParameterError):
            DivergenceSpec.parse("hellinger")


class TestSubgradient:
    @pytest.mark.parametrize(
        "spec, z, expected",
        [
            (PEN_L1, 2.0, (1.0, 1.0)),
            (PEN_L1, -1.0, (0.0, 1.0)),
            (PEN_L1, -2.0, (0.0, 0.0)),
            (PEN_PE, -0.5, (0.5, 0.5)),
            (PEN_KL, -2.0, (0.5, 0.5)),
            (PEN_KL, 3.0, (1.0, 1.0)),
        ],
    )
    def test_values(self, spec, z, expected):
        assert conjugate_subgradient(spec, z) == pytest.approx(expected)

    @pytest.mark.parametrize(
        "spec, z",
        [(DivergenceSpec(Divergence.KL, False), 0.0), (DivergenceSpec(Divergence.L1, False), 1.0)],
    )
    def test_outside_domain(self, spec, z):
        with pytest.raises(DomainError):
            conjugate_subgradient(spec, z)

    @pytest.mark.parametrize("spec", ALL_SPECS, ids=str)
    def test_monotone(self, spec):
        zs = [z for z in Z_GRID if in_domain(spec, z)]
        bounds = [conjugate_subgradient(spec, z) for z in zs]
        for (lo1, hi1), (lo2, hi2) in zip(bounds, bounds[1:]):
            assert lo1 <= hi1 and lo1 <= hi2

    @pytest.mark.parametrize("spec", ALL_SPECS, ids=str)
    def test_matches_finite_difference(self, spec):
        eps = 1e-6
        for z in Z_GRID[::37]:
            if not (in_domain(spec, z - eps) and in_domain(spec, z + eps)):
                continue
            lo, hi = conjugate_subgradient(spec, z)
            slope = (conjugate_value(spec, z + eps) - conjugate_value(spec, z - eps)) / (2 * eps)
            assert lo - 1e-5 <= slope <= hi + 1e-5


class TestConvexity:
    @pytest.mark.parametrize("spec", ALL_SPECS, ids=str)
    def test_chord_on_grid(self, spec):
        z = np.array([v for v in Z_GRID if in_domain(spec, v)])
        f = spec.conjugate(z)
        # equally spaced grid: second differences are non-negative
        assert np.all(f[:-2] - 2 * f[1:-1] + f[2:] >= -1e-12)

    @given(
        st.sampled_from(ALL_SPECS),
        st.floats(-20, 20), st.floats(-20, 20), st.floats(0.0, 1.0),
    )
    def test_chord_random(self, spec, z1, z2, w):
        if not (in_domain(spec, z1) and in_domain(spec, z2)):
            return
        mid = w * z1 + (1 - w) * z2
        lhs = conjugate_value(spec, mid)
        rhs = w * conjugate_value(spec, z1) + (1 - w) * conjugate_value(spec, z2)
        assert lhs <= rhs + 1e-10 * (1 + abs(rhs))


class TestConjugacy:
    @pytest.mark.parametrize("spec", PENALIZED, ids=str)
    def test_numerical_sup(self, spec):
        with np.errstate(divide="ignore"):
            f_t = np.array([spec.f(t) for t in T_GRID])
        for z in np.linspace(-4, 3, 29):
            numeric = np.max(z * T_GRID - f_t)
            assert conjugate_value(spec, z) == pytest.approx(numeric, abs=1e-6)

    @given(st.sampled_from(PENALIZED), st.floats(-30, 30), st.floats(0.0, 1.0))
    def test_fenchel_inequality(self, spec, z, t):
        assert conjugate_value(spec, z) >= z * t - spec.f(t) - 1e-12

    @pytest.mark.parametrize("name", list(Divergence))
    def test_penalized_is_dominated(self, name):
        pen, plain = DivergenceSpec(name, True), DivergenceSpec(name, False)
        for z in Z_GRID:
            a, b = conjugate_value(pen, z), conjugate_value(plain, z)
            if math.isfinite(a) and math.isfinite(b):
                assert a <= b + 1e-12

    def test_penalized_f_is_infinite_above_one(self):
        assert all(s.f(1.5) == INFEASIBLE for s in PENALIZED)
        assert all(s.f(1.0) == 0.0 for s in ALL_SPECS)
