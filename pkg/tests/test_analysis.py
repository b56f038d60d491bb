"""Density reconstruction, pseudo-inverses, Wasserstein distance, TV, moments."""

import numpy as np
import pytest

from opinionflow.analysis import (PiecewiseConstantDensity, moment,
                                  pseudo_inverse, reconstruct,
                                  total_variation, variance, wasserstein1)
from opinionflow.engine import ParticleState, atomize, initialize
from opinionflow.errors import MassMismatchError
from opinionflow.scenarios import preset


def uniform_density(mass, lo, hi):
    return PiecewiseConstantDensity.from_cells([lo, hi], [mass / (hi - lo)])


def random_density(rng, mass=0.7, allow_zero_cells=True):
    m = rng.integers(2, 30)
    bp = np.sort(rng.uniform(-1, 1, m + 1))
    while np.any(np.diff(bp) < 1e-6):
        bp = np.sort(rng.uniform(-1, 1, m + 1))
    vals = rng.uniform(0.1, 3.0, m)
    if allow_zero_cells and m > 3 and rng.random() < 0.5:
        vals[rng.integers(1, m - 1)] = 0.0
    rho = PiecewiseConstantDensity.from_cells(bp, vals)
    return PiecewiseConstantDensity(rho.breakpoints, rho.values * mass / rho.mass,
                                    mass)


def cdf_difference_integral(r1, r2):
    """Independent oracle: exact integral of |F1 - F2| over the line.

    Both CDFs are piecewise linear with kinks only at breakpoints, so on the
    merged grid each difference segment is linear and integrates exactly.
    """
    grid = np.union1d(r1.breakpoints, r2.breakpoints)
    d = r1.cdf(grid) - r2.cdf(grid)
    total = 0.0
    for a, b, da, db in zip(grid[:-1], grid[1:], d[:-1], d[1:]):
        if da * db >= 0:
            total += 0.5 * (abs(da) + abs(db)) * (b - a)
        else:
            total += 0.5 * (b - a) * (da * da + db * db) / (abs(da) + abs(db))
    return total


class TestReconstruct:
    def test_equally_spaced_is_constant(self):
        state = ParticleState(("f",), [np.linspace(-1, 1, 11)],
                              np.array([0.06]))
        rho = reconstruct(state)
        np.testing.assert_allclose(rho.values, 0.3, rtol=1e-14)
        assert rho.mass == pytest.approx(0.6, rel=1e-14)

    def test_initial_cells_within_density_bounds(self):
        sc = preset("single-ini1")
        state = initialize(sc.model, 100)
        rho = reconstruct(state, "f")
        species = sc.model.species[0]
        lo, hi = species.initial_density.bounds(species.sigma)
        assert np.all(rho.values >= lo - 1e-9)
        assert np.all(rho.values <= hi + 1e-9)

    def test_mass_is_exact(self):
        rng = np.random.default_rng(3)
        w = np.concatenate(([-1.0], np.sort(rng.uniform(-0.99, 0.99, 49)),
                            [1.0]))
        state = ParticleState(("f",), [w], np.array([0.6 / 50]))
        rho = reconstruct(state)
        assert abs(rho.mass - 0.6) <= 1e-12 * 0.6


class TestPseudoInverse:
    def test_uniform_inverse_is_linear(self):
        rho = uniform_density(0.6, -1.0, 1.0)
        x = pseudo_inverse(rho)
        z = np.linspace(0, 0.6, 33)
        np.testing.assert_allclose(x(z), -1 + 2 * z / 0.6, atol=1e-14)

    def test_particle_quantiles_are_exact(self):
        # equal-mass cells mean X(sigma * i / N) = W_i, exact up to the
        # rounding accumulated in the cell-mass ladder (a few ulp of sigma)
        sc = preset("single-ini1")
        state = initialize(sc.model, 50)
        rho = reconstruct(state, "f")
        x = pseudo_inverse(rho)
        w = state.positions[0]
        z = 0.6 * np.arange(51) / 50
        np.testing.assert_allclose(x(z), w, atol=1e-13, rtol=0)

    def test_zero_cell_becomes_jump(self):
        rho = PiecewiseConstantDensity.from_cells(
            [-0.8, -0.3, 0.2, 0.7], [1.0, 0.0, 1.0])
        x = pseudo_inverse(rho)
        assert x(0.25) == pytest.approx(-0.55, abs=1e-14)
        assert x(0.75) == pytest.approx(0.45, abs=1e-14)
        # approaching the flat mass level from both sides brackets the jump
        assert x(0.4999999) == pytest.approx(-0.3, abs=1e-5)
        assert x(0.5000001) == pytest.approx(0.2, abs=1e-5)

    def test_trims_empty_boundary_cells(self):
        rho = PiecewiseConstantDensity.from_cells(
            [-1.0, -0.5, 0.5, 1.0], [0.0, 1.0, 0.0])
        x = pseudo_inverse(rho)
        assert x(0.0) == -0.5
        assert x(rho.mass) == 0.5


class TestWasserstein:
    def test_self_distance_zero(self):
        rng = np.random.default_rng(5)
        rho = random_density(rng)
        assert wasserstein1(rho, rho) == 0.0

    def test_shifted_uniform_blocks(self):
        # equal masses on [0, 0.5] and [0.25, 0.75]: transport distance 0.25
        sigma = 0.6
        r1 = uniform_density(sigma, 0.0, 0.5)
        r2 = uniform_density(sigma, 0.25, 0.75)
        assert wasserstein1(r1, r2) == pytest.approx(0.25 * sigma, rel=1e-13)

    def test_symmetry(self):
        rng = np.random.default_rng(6)
        r1, r2 = random_density(rng), random_density(rng)
        assert wasserstein1(r1, r2) == pytest.approx(wasserstein1(r2, r1),
                                                     rel=1e-13)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(8)
        for _ in range(25):
            r1, r2, r3 = (random_density(rng) for _ in range(3))
            d13 = wasserstein1(r1, r3)
            d12 = wasserstein1(r1, r2)
            d23 = wasserstein1(r2, r3)
            assert d13 <= d12 + d23 + 1e-12

    def test_matches_cdf_difference_oracle(self):
        rng = np.random.default_rng(9)
        for _ in range(25):
            r1, r2 = random_density(rng), random_density(rng)
            assert wasserstein1(r1, r2) == pytest.approx(
                cdf_difference_integral(r1, r2), abs=1e-10)

    def test_mass_mismatch_rejected(self):
        r1 = uniform_density(0.6, -1.0, 1.0)
        r2 = uniform_density(0.7, -1.0, 1.0)
        with pytest.raises(MassMismatchError):
            wasserstein1(r1, r2)


class TestTotalVariation:
    def test_constant_density(self):
        rho = uniform_density(0.6, -1.0, 1.0)   # value 0.3
        assert total_variation(rho) == pytest.approx(0.6, abs=1e-15)

    def test_staircase(self):
        rho = PiecewiseConstantDensity.from_cells(
            [-1.0, -0.5, 0.0, 0.5], [1.0, 2.0, 3.0])
        assert total_variation(rho) == pytest.approx(6.0, abs=1e-14)

    def test_atomized_tv_close_to_continuum(self):
        # unimodal spike: TV of the underlying density is twice its maximum
        sc = preset("single-ini1")
        species = sc.model.species[0]
        state = initialize(sc.model, 400)
        tv = total_variation(reconstruct(state, "f"))
        _, peak = species.initial_density.bounds(species.sigma)
        assert tv <= 2 * peak + 1e-9
        assert tv >= 2 * peak * 0.95


class TestMoments:
    def test_mass_is_zeroth_moment(self):
        rng = np.random.default_rng(10)
        rho = random_density(rng)
        assert moment(rho, 0) == pytest.approx(rho.mass, rel=1e-13)

    def test_odd_moment_of_symmetric_density(self):
        rho = PiecewiseConstantDensity.from_cells(
            [-0.6, -0.2, 0.2, 0.6], [1.0, 2.0, 1.0])
        assert moment(rho, 1) == pytest.approx(0.0, abs=1e-15)
        assert moment(rho, 3) == pytest.approx(0.0, abs=1e-15)

    def test_uniform_second_moment(self):
        rho = uniform_density(0.6, -1.0, 1.0)
        assert moment(rho, 2) == pytest.approx(0.2, rel=1e-14)  # sigma/3

    def test_variance_of_uniform(self):
        rho = uniform_density(0.6, -1.0, 1.0)
        assert variance(rho) == pytest.approx(1.0 / 3.0, rel=1e-13)

    def test_variance_of_point_like_cell(self):
        rho = PiecewiseConstantDensity.from_cells([0.39999, 0.40001],
                                                  [0.6 / 2e-5])
        assert variance(rho) == pytest.approx(0.0, abs=1e-9)

    def test_variance_in_unit_interval_for_presets(self):
        for name in ("single-ini1", "single-ini2", "single-ini3"):
            state = initialize(preset(name).model, 100)
            var = variance(reconstruct(state, "f"))
            assert 0.0 <= var <= 1.0
