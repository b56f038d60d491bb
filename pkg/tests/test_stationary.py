"""Stationary profiles, the drift potential, and moment dynamics."""

import math

import numpy as np
import pytest
from scipy.integrate import quad, solve_ivp
from scipy.special import beta

from opinionflow.analysis import moment, variance
from opinionflow.engine import IntegratorConfig, run
from opinionflow.errors import DomainError, NonIntegrableProfileError
from opinionflow.model import (CompromiseKernel, DiffusionNonlinearity,
                               Mobility, ModelSpec, SpeciesSpec)
from opinionflow.scenarios import preset
from opinionflow.stationary import (StationaryParams, as_piecewise_constant,
                                    drift_potential, mean_opinion_decay_rate,
                                    moment_hierarchy_rhs, stationary_linear,
                                    stationary_porous)


class TestDriftPotential:
    def test_zero_at_origin(self):
        for alpha in (1.0, 1.5, 2.0):
            p = StationaryParams(alpha=alpha, lambda_sq=0.06, sigma=0.6,
                                 m1_inf=0.1)
            assert drift_potential(0.0, p) == 0.0

    def test_hand_value_alpha1(self):
        p = StationaryParams(alpha=1.0, lambda_sq=0.06, sigma=0.6)
        expected = 0.3 * math.log(0.75)   # (sigma/2) log(1 - w^2) at w = 1/2
        assert drift_potential(0.5, p) == pytest.approx(expected, rel=1e-14)

    def test_generic_alpha_quadrature_matches_closed_form(self):
        # evaluating alpha=1 through the generic quadrature branch
        p1 = StationaryParams(alpha=1.0, lambda_sq=0.06, sigma=0.6,
                              m1_inf=0.2)
        grid = np.linspace(-0.95, 0.95, 21)
        closed = drift_potential(grid, p1)
        for w, want in zip(grid, closed):
            got, _ = quad(lambda x: (0.2 - 0.6 * x) / (1 - x * x),
                          0.0, w, epsabs=1e-13, limit=200)
            assert got == pytest.approx(want, abs=1e-9)

    def test_alpha2_closed_form_matches_quadrature(self):
        p = StationaryParams(alpha=2.0, lambda_sq=0.06, sigma=0.6,
                             m1_inf=0.15)
        for w in (-0.9, -0.4, 0.3, 0.8):
            got, _ = quad(lambda x: (0.15 - 0.6 * x) / (1 - x * x) ** 2,
                          0.0, w, epsabs=1e-13, limit=200)
            assert drift_potential(w, p) == pytest.approx(got, abs=1e-10)

    def test_boundary_is_flagged_not_raised(self):
        p = StationaryParams(alpha=1.0, lambda_sq=0.06, sigma=0.6)
        assert drift_potential(1.0, p) == -math.inf
        assert drift_potential(-1.0, p) == -math.inf

    def test_outside_domain_raises(self):
        p = StationaryParams(alpha=1.0, lambda_sq=0.06, sigma=0.6)
        with pytest.raises(DomainError):
            drift_potential(1.1, p)


class TestLinearProfile:
    def test_symmetric_profile_even_with_zero_mean(self):
        p = StationaryParams(alpha=1.0, lambda_sq=0.06, sigma=0.6)
        prof = stationary_linear(p)
        w = np.linspace(-0.99, 0.99, 101)
        np.testing.assert_allclose(prof.pdf(w), prof.pdf(-w), rtol=1e-12)
        rho = as_piecewise_constant(prof)
        assert moment(rho, 1) == pytest.approx(0.0, abs=1e-12)

    def test_normalization_against_beta_function(self):
        # with exponent a = sigma/lambda^2 = 10 the mass integral is the
        # beta function: int (1-w^2)^a dw = 2^(2a+1) B(a+1, a+1)
        p = StationaryParams(alpha=1.0, lambda_sq=0.06, sigma=0.6)
        prof = stationary_linear(p)
        a = 10.0
        z = 2.0 ** (2 * a + 1) * beta(a + 1, a + 1)
        assert prof.normalization == pytest.approx(0.6 / z, rel=1e-10)

    def test_mass_is_sigma(self):
        for m1 in (0.0, 0.2):
            p = StationaryParams(alpha=1.0, lambda_sq=0.06, sigma=0.6,
                                 m1_inf=m1)
            prof = stationary_linear(p)
            mass, _ = quad(lambda w: float(prof.pdf(w)), -1, 1,
                           epsabs=1e-12, limit=300)
            assert mass == pytest.approx(0.6, rel=1e-9)

    def test_smaller_diffusion_concentrates(self):
        wide = stationary_linear(
            StationaryParams(alpha=1.0, lambda_sq=0.5, sigma=0.6))
        narrow = stationary_linear(
            StationaryParams(alpha=1.0, lambda_sq=0.03, sigma=0.6))
        assert (variance(as_piecewise_constant(narrow))
                < variance(as_piecewise_constant(wide)))

    def test_stationary_flux_vanishes_pointwise(self):
        # (lambda^2/2)(1-w^2) u' + sigma w u = 0 for the alpha=1 profile
        p = StationaryParams(alpha=1.0, lambda_sq=0.06, sigma=0.6)
        prof = stationary_linear(p)
        w = np.linspace(-0.9, 0.9, 181)
        h = 1e-6
        du = (prof.pdf(w + h) - prof.pdf(w - h)) / (2 * h)
        flux = 0.03 * (1 - w * w) * du + 0.6 * w * prof.pdf(w)
        scale = np.max(np.abs(prof.pdf(w)))
        assert np.max(np.abs(flux)) / scale < 1e-6

    def test_alpha2_profile_normalizes_when_symmetric(self):
        p = StationaryParams(alpha=2.0, lambda_sq=0.06, sigma=0.6)
        prof = stationary_linear(p)
        mass, _ = quad(lambda w: float(prof.pdf(w)), -1, 1, epsabs=1e-12,
                       limit=300)
        assert mass == pytest.approx(0.6, rel=1e-8)

    def test_alpha2_divergent_profile_reports_failure(self):
        # mean beyond the mass makes the boundary factor non-integrable
        p = StationaryParams(alpha=2.0, lambda_sq=0.06, sigma=0.6,
                             m1_inf=0.7)
        with pytest.raises(NonIntegrableProfileError):
            stationary_linear(p)

    def test_alpha1_illposed_exponents_rejected(self):
        p = StationaryParams(alpha=1.0, lambda_sq=0.06, sigma=0.6,
                             m1_inf=-0.7)
        with pytest.raises(NonIntegrableProfileError):
            stationary_linear(p)


class TestPorousProfile:
    def test_support_formula_gamma2(self):
        # support endpoint solves C + (sigma/2) log(1 - w^2) = 0
        p = StationaryParams(alpha=1.0, lambda_sq=0.06, sigma=0.6, gamma=2.0)
        prof = stationary_porous(p)
        c = prof.normalization
        w_star = math.sqrt(1.0 - math.exp(-2.0 * c / 0.6))
        assert prof.support[1] == pytest.approx(w_star, abs=1e-8)
        assert prof.support[0] == pytest.approx(-w_star, abs=1e-8)

    def test_support_endpoints_zero_the_argument(self):
        p = StationaryParams(alpha=1.0, lambda_sq=0.06, sigma=0.6, gamma=2.0)
        prof = stationary_porous(p)
        for w in prof.support:
            val = prof.normalization + float(drift_potential(w, p))
            assert abs(val) < 1e-8

    def test_mass_and_symmetry(self):
        p = StationaryParams(alpha=1.0, lambda_sq=0.06, sigma=0.6, gamma=2.0)
        prof = stationary_porous(p)
        lo, hi = prof.support
        mass, _ = quad(lambda w: float(prof.pdf(w)), lo, hi, epsabs=1e-12,
                       limit=300)
        assert mass == pytest.approx(0.6, rel=1e-9)
        rho = as_piecewise_constant(prof)
        assert moment(rho, 1) == pytest.approx(0.0, abs=1e-12)

    def test_vanishes_outside_support(self):
        p = StationaryParams(alpha=1.0, lambda_sq=0.06, sigma=0.6, gamma=2.0)
        prof = stationary_porous(p)
        assert prof.pdf(prof.support[1] + 0.05) == 0.0
        assert prof.pdf(-1.0) == 0.0

    def test_gamma_must_exceed_one(self):
        p = StationaryParams(alpha=1.0, lambda_sq=0.06, sigma=0.6, gamma=1.0)
        with pytest.raises(ValueError):
            stationary_porous(p)


class TestMeanOpinionRate:
    def test_normalized_value(self):
        # flux coefficient lambda^2/2 = 1 gives the classical rate 2
        assert mean_opinion_decay_rate(2.0) == 2.0

    def test_zero_diffusion(self):
        assert mean_opinion_decay_rate(0.0) == 0.0

    def test_preset_value(self):
        assert mean_opinion_decay_rate(0.06) == 0.06

    def test_integration_by_parts_oracle(self):
        # -int (lambda^2/2)(1-w^2) u' dw must equal -lambda^2 m1[u] for any
        # smooth density vanishing fast enough at the boundary
        lam2 = 0.06
        density = preset("single-ini2").model.species[0].initial_density

        def u(w):
            return density.pdf(w, 0.6)

        h = 1e-6
        lhs, _ = quad(lambda w: -0.5 * lam2 * (1 - w * w)
                      * (u(w + h) - u(w - h)) / (2 * h),
                      -1 + h, 1 - h, points=(-0.75, 0.5), limit=400)
        m1, _ = quad(lambda w: w * u(w), -1, 1, points=(-0.75, 0.5),
                     limit=400)
        assert lhs == pytest.approx(-lam2 * m1, rel=1e-5)


class TestMomentHierarchy:
    def test_rest_state(self):
        # the zero measure: every moment (including the mass) vanishes
        out = moment_hierarchy_rhs(np.zeros(5), sigma=0.0, lambda_sq=0.06)
        np.testing.assert_array_equal(out, np.zeros(5))

    def test_mass_alone_feeds_the_second_moment(self):
        # a point mass at the origin spreads: dm2/dt = lambda^2 sigma
        out = moment_hierarchy_rhs(np.zeros(5), sigma=0.6, lambda_sq=0.06)
        assert out[1] == pytest.approx(0.06 * 0.6, rel=1e-14)
        assert out[0] == 0.0

    def test_mean_equation(self):
        m = np.zeros(3)
        m[0] = 1.0   # m1 = 1, m3 = 0
        out = moment_hierarchy_rhs(m, sigma=0.6, lambda_sq=1.0)
        assert out[0] == pytest.approx(-2.0, rel=1e-14)

    def test_third_moment_feeds_mean(self):
        m = np.array([0.5, 0.0, 0.2])
        out = moment_hierarchy_rhs(m, sigma=0.6, lambda_sq=1.0)
        assert out[0] == pytest.approx(-2 * 0.5 + 2 * 0.2, rel=1e-14)

    def test_requires_three_moments(self):
        with pytest.raises(ValueError):
            moment_hierarchy_rhs(np.zeros(2), sigma=0.6, lambda_sq=0.06)

    def test_truncated_system_tracks_particle_simulation(self):
        # quadratic mobility, single spike: the K=12 closure must follow the
        # measured first two moments within 5% over one time unit
        sigma, lam2 = 0.6, 0.06
        species = SpeciesSpec(
            "f", sigma, lam2 / 2.0, mobility=Mobility(2.0),
            nonlinearity=DiffusionNonlinearity.linear(),
            initial_density=preset("single-ini1").model.species[0]
            .initial_density)
        spec = ModelSpec((species,),
                         {("f", "f"): CompromiseKernel("constant")})
        times = np.linspace(0.0, 1.0, 11)
        traj = run(spec, 800, IntegratorConfig(t_final=1.0),
                   snapshot_times=times)
        measured = np.array(
            [[moment(traj.density_at(k, "f"), j) for j in range(1, 13)]
             for k in range(len(traj))])

        sol = solve_ivp(
            lambda _t, m: moment_hierarchy_rhs(m, sigma, lam2),
            (0.0, 1.0), measured[0], t_eval=times, rtol=1e-10, atol=1e-12)
        assert sol.success
        m1_ode, m2_ode = sol.y[0], sol.y[1]
        m1_sim, m2_sim = measured[:, 0], measured[:, 1]
        # symmetric data: both means stay at zero
        assert np.max(np.abs(m1_ode)) < 1e-3
        assert np.max(np.abs(m1_sim)) < 1e-3
        rel = np.abs(m2_ode - m2_sim) / np.abs(m2_sim)
        assert np.max(rel) < 0.05
