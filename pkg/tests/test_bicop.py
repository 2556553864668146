import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import qmc

from vinequant import bicop
from vinequant.bicop import (
    FAMILIES,
    INDEPENDENCE,
    PairCopula,
    cdf,
    density,
    fit_pair,
    h_function,
    h_given_u,
    inv_h,
    inv_h_given_u,
    kendall_tau,
    sample_pair,
    select_family,
)
from vinequant.errors import DegenerateDataError, InvalidInputError

# five parameter values per family, spanning weak to strong dependence
PARAM_GRID = {
    "gaussian": [-0.9, -0.5, 0.1, 0.5, 0.9],
    "clayton": [0.5, 1.0, 2.0, 4.0, 8.0],
    "gumbel": [1.2, 1.5, 2.0, 3.0, 5.0],
    "frank": [-15.0, -5.0, 0.5, 5.0, 15.0],
}
# for inversion roundtrips the strongest parameters are capped: beyond these,
# conditional CDFs at the grid corners land within one float64 ulp of 1 and
# no inverse can recover the argument
ROUNDTRIP_GRID = {
    "gaussian": [-0.8, -0.5, 0.1, 0.5, 0.8],
    "clayton": [0.5, 1.0, 2.0, 3.0, 5.0],
    "gumbel": [1.2, 1.5, 2.0, 3.0, 4.0],
    "frank": [-15.0, -5.0, 0.5, 5.0, 15.0],
}


def family_cases(grid):
    cases = []
    for fam in FAMILIES:
        if fam == "independence":
            continue
        base = fam.rstrip("0123456789")
        for th in grid[base]:
            cases.append((fam, th))
    return cases


CASES = family_cases(PARAM_GRID)
ROUNDTRIP_CASES = family_cases(ROUNDTRIP_GRID)
_SOBOL_POINTS = qmc.Sobol(d=2, scramble=True, seed=99).random(2**20)


class TestDensity:
    def test_independence_is_one(self):
        for u, v in [(0.1, 0.9), (0.5, 0.5), (0.99, 0.01)]:
            assert density(INDEPENDENCE, u, v) == 1.0

    def test_gumbel_theta_one_degenerates(self):
        assert density(PairCopula("gumbel", (1.0,)), 0.3, 0.7) == pytest.approx(1.0)

    def test_clayton_matches_cdf_cross_derivative(self):
        c = PairCopula("clayton", (1.0,))
        h = 1e-4
        u = v = 0.5
        num = (
            cdf(c, u + h, v + h)
            - cdf(c, u + h, v - h)
            - cdf(c, u - h, v + h)
            + cdf(c, u - h, v - h)
        ) / (4 * h * h)
        assert density(c, u, v) == pytest.approx(num, abs=1e-5)

    def test_domain_error(self):
        with pytest.raises(InvalidInputError):
            density(PairCopula("gaussian", (0.5,)), 0.0, 0.5)
        with pytest.raises(InvalidInputError):
            h_function(PairCopula("clayton", (1.0,)), 0.5, 1.0)

    @pytest.mark.parametrize("fam,theta", CASES)
    def test_integrates_to_one(self, fam, theta):
        # quasi-random quadrature; the smoothstep substitution u = 3s^2-2s^3
        # keeps the integrand bounded at tail-dependent corners
        cop = PairCopula(fam, (theta,))
        pts = _SOBOL_POINTS
        s, t = pts[:, 0], pts[:, 1]
        u = np.clip(s * s * (3 - 2 * s), 1e-12, 1 - 1e-12)
        v = np.clip(t * t * (3 - 2 * t), 1e-12, 1 - 1e-12)
        jac = 36.0 * s * (1 - s) * t * (1 - t)
        est = (density(cop, u, v) * jac).mean()
        assert est == pytest.approx(1.0, abs=1e-3)

    @pytest.mark.parametrize("fam,theta", CASES)
    def test_density_is_dh_du(self, fam, theta):
        cop = PairCopula(fam, (theta,))
        g = np.linspace(0.15, 0.85, 6)
        uu, vv = np.meshgrid(g, g)
        uu, vv = uu.ravel(), vv.ravel()
        step = 1e-5
        num = (h_function(cop, uu + step, vv) - h_function(cop, uu - step, vv)) / (
            2 * step
        )
        assert_allclose(num, density(cop, uu, vv), rtol=1e-4)

    def test_rotation_180_consistency(self):
        for fam in ("clayton", "gumbel"):
            base = PairCopula(fam, (2.0,))
            rot = PairCopula(fam + "180", (2.0,))
            u, v = 0.3, 0.8
            assert density(rot, u, v) == pytest.approx(density(base, 1 - u, 1 - v))


class TestCdf:
    def test_gumbel_diagonal(self):
        c = PairCopula("gumbel", (2.0,))
        for t in (0.2, 0.5, 0.8):
            assert cdf(c, t, t) == pytest.approx(t ** math.sqrt(2))

    def test_clayton_center(self):
        assert cdf(PairCopula("clayton", (1.0,)), 0.5, 0.5) == pytest.approx(1 / 3)

    @pytest.mark.parametrize("fam,theta", CASES)
    def test_uniform_margins(self, fam, theta):
        c = PairCopula(fam, (theta,))
        for t in (0.2, 0.7):
            assert cdf(c, t, 1.0) == pytest.approx(t, abs=1e-9)
            assert cdf(c, 1.0, t) == pytest.approx(t, abs=1e-9)
        assert cdf(c, 0.0, 0.5) == 0.0

    def test_domain_error(self):
        with pytest.raises(InvalidInputError):
            cdf(PairCopula("frank", (2.0,)), 1.2, 0.5)


class TestHFunction:
    def test_independence(self):
        for v in (0.1, 0.5, 0.9):
            assert h_function(INDEPENDENCE, 0.37, v) == pytest.approx(0.37)

    def test_clayton_closed_form(self):
        assert h_function(PairCopula("clayton", (1.0,)), 0.5, 0.5) == pytest.approx(4 / 9)

    def test_gumbel_matches_finite_difference(self):
        c = PairCopula("gumbel", (2.0,))
        step = 1e-6
        num = (cdf(c, 0.5, 0.5 + step) - cdf(c, 0.5, 0.5 - step)) / (2 * step)
        assert h_function(c, 0.5, 0.5) == pytest.approx(num, abs=1e-5)

    @pytest.mark.parametrize("fam,theta", CASES)
    def test_onto_unit_interval(self, fam, theta):
        c = PairCopula(fam, (theta,))
        eps = 1e-6
        for v in (0.2, 0.5, 0.8):
            assert h_function(c, eps, v) < 1e-4
            assert h_function(c, 1 - eps, v) > 1 - 1e-4
            u = np.linspace(0.05, 0.95, 30)
            assert np.all(np.diff(h_function(c, u, v)) > 0)


class TestInverseH:
    def test_independence(self):
        assert inv_h(INDEPENDENCE, 0.42, 0.9) == pytest.approx(0.42)

    @pytest.mark.parametrize("fam,theta", ROUNDTRIP_CASES)
    def test_roundtrip_on_grid(self, fam, theta):
        c = PairCopula(fam, (theta,))
        g = np.linspace(0.03, 0.97, 20)
        uu, vv = [a.ravel() for a in np.meshgrid(g, g)]
        w = h_function(c, uu, vv)
        assert np.max(np.abs(inv_h(c, w, vv) - uu)) < 1e-8
        w2 = h_given_u(c, vv, uu)
        assert np.max(np.abs(inv_h_given_u(c, w2, uu) - vv)) < 1e-8

    def test_clayton_self_verifying_root(self):
        c = PairCopula("clayton", (2.0,))
        u = inv_h(c, 0.25, 0.6)
        assert h_function(c, u, 0.6) == pytest.approx(0.25, abs=1e-10)


class TestFit:
    def test_gaussian_consistency(self):
        rng = np.random.default_rng(10)
        uv = sample_pair(PairCopula("gaussian", (0.6,)), 10_000, rng)
        fit = fit_pair(uv[:, 0], uv[:, 1], "gaussian")
        assert 0.55 < fit.copula.theta[0] < 0.65
        assert not fit.boundary

    def test_clayton_consistency(self):
        rng = np.random.default_rng(11)
        uv = sample_pair(PairCopula("clayton", (2.0,)), 10_000, rng)
        fit = fit_pair(uv[:, 0], uv[:, 1], "clayton")
        assert 1.8 < fit.copula.theta[0] < 2.2

    def test_frank_on_independent_data(self):
        rng = np.random.default_rng(12)
        u, v = rng.uniform(size=10_000), rng.uniform(size=10_000)
        fit = fit_pair(u, v, "frank")
        assert abs(fit.copula.theta[0]) < 0.25
        assert -1e-6 <= fit.loglik < 8.0

    def test_loglik_at_fit_beats_truth(self):
        rng = np.random.default_rng(13)
        for fam, th in (("gaussian", 0.5), ("clayton", 1.5), ("gumbel", 2.0), ("frank", 4.0)):
            true = PairCopula(fam, (th,))
            uv = sample_pair(true, 2000, rng)
            fit = fit_pair(uv[:, 0], uv[:, 1], fam)
            ll_true = np.sum(bicop.log_density(true, uv[:, 0], uv[:, 1]))
            assert fit.loglik >= ll_true - 1e-6

    def test_boundary_flag(self):
        # strong negative dependence forces an unrotated gumbel to theta ~ 1
        rng = np.random.default_rng(14)
        uv = sample_pair(PairCopula("gaussian", (-0.8,)), 2000, rng)
        fit = fit_pair(uv[:, 0], uv[:, 1], "gumbel")
        assert fit.boundary
        assert fit.copula.theta[0] == pytest.approx(bicop.GUMBEL_MIN, rel=1e-3)

    def test_errors(self):
        with pytest.raises(DegenerateDataError):
            fit_pair(np.full(50, 0.4), np.full(50, 0.7), "gaussian")
        with pytest.raises(InvalidInputError):
            fit_pair(np.full(5, 0.4), np.full(5, 0.7), "gaussian")
        with pytest.raises(InvalidInputError):
            fit_pair(np.linspace(0, 1, 50), np.linspace(0.1, 0.9, 50), "clayton")


class TestSelectFamily:
    def test_gaussian_selected_mostly(self):
        hits = 0
        for trial in range(50):
            rng = np.random.default_rng(100 + trial)
            uv = sample_pair(PairCopula("gaussian", (0.7,)), 10_000, rng)
            pick = select_family(uv[:, 0], uv[:, 1])
            hits += pick.copula.family == "gaussian"
        assert hits > 45

    def test_independence_selected_majority(self):
        hits = 0
        for trial in range(50):
            rng = np.random.default_rng(200 + trial)
            u, v = rng.uniform(size=2000), rng.uniform(size=2000)
            pick = select_family(u, v)
            hits += pick.copula.family == "independence"
        assert hits > 25

    def test_single_candidate(self):
        rng = np.random.default_rng(15)
        uv = sample_pair(PairCopula("clayton", (1.0,)), 500, rng)
        pick = select_family(uv[:, 0], uv[:, 1], candidates=("frank",))
        assert pick.copula.family == "frank"

    def test_empty_candidates(self):
        with pytest.raises(InvalidInputError):
            select_family(np.full(50, 0.4), np.linspace(0.1, 0.9, 50), candidates=())


class TestKendallTau:
    def test_closed_forms(self):
        assert kendall_tau(PairCopula("clayton", (2.0,))) == pytest.approx(0.5)
        assert kendall_tau(PairCopula("gumbel", (2.0,))) == pytest.approx(0.5)
        assert kendall_tau(PairCopula("gaussian", (0.5,))) == pytest.approx(
            2 / math.pi * math.asin(0.5)
        )
        assert kendall_tau(PairCopula("clayton90", (2.0,))) == pytest.approx(-0.5)
        assert kendall_tau(INDEPENDENCE) == 0.0

    def test_frank_tau_matches_simulation(self):
        cop = PairCopula("frank", (5.0,))
        rng = np.random.default_rng(16)
        uv = sample_pair(cop, 50_000, rng)
        from scipy.stats import kendalltau

        emp = kendalltau(uv[:, 0], uv[:, 1]).statistic
        assert kendall_tau(cop) == pytest.approx(emp, abs=0.01)


class TestPairCopulaValidation:
    def test_admissible_domains(self):
        with pytest.raises(InvalidInputError):
            PairCopula("gaussian", (1.0,))
        with pytest.raises(InvalidInputError):
            PairCopula("clayton", (0.0,))
        with pytest.raises(InvalidInputError):
            PairCopula("gumbel", (0.9,))
        with pytest.raises(InvalidInputError):
            PairCopula("frank", (0.0,))
        with pytest.raises(InvalidInputError):
            PairCopula("independence", (1.0,))
        with pytest.raises(InvalidInputError):
            PairCopula("nosuch", (1.0,))
