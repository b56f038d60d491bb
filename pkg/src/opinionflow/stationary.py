"""Closed-form stationary states of the single-species model with constant
compromise kernel, plus the truncated moment dynamics.

With P = 1 the nonlocal drift reduces to m1 - sigma*w, and the steady state
balances it against the mobility-weighted diffusion.  The drift potential
(the antiderivative of (m1 - sigma*w)/D^2, normalized to vanish at 0) gives
the linear-diffusion profile C * exp(2/lambda^2 * potential) and, for
porous-medium nonlinearity, the compactly supported profile
[2(gamma-1)/lambda^2 * (C + potential)]_+^(1/(gamma-1)).
"""

from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .analysis import PiecewiseConstantDensity
from .errors import DomainError, NonIntegrableProfileError

__all__ = [
    "StationaryParams", "StationaryProfile", "drift_potential",
    "stationary_linear", "stationary_porous", "mean_opinion_decay_rate",
    "moment_hierarchy_rhs", "as_piecewise_constant",
]


@dataclass(frozen=True)
class StationaryParams:
    """Parameters of the steady-state problem.

    ``lambda_sq`` is lambda^2, i.e. twice the flux coefficient carried by
    ``SpeciesSpec.half_lambda_sq``.  ``m1_inf`` is the asymptotic mean
    opinion, an input here (0 in every symmetric-decay case).
    """

    alpha: float
    lambda_sq: float
    sigma: float
    m1_inf: float = 0.0
    gamma: float | None = None

    def __post_init__(self):
        if self.alpha <= 0 or self.lambda_sq <= 0 or self.sigma <= 0:
            raise ValueError("alpha, lambda_sq and sigma must be positive")


def _xlog1p(coeff: float, x) -> np.ndarray:
    """coeff * log1p(x) with the convention 0 * (-inf) = 0."""
    if coeff == 0.0:
        return np.zeros_like(np.asarray(x, dtype=float))
    with np.errstate(divide="ignore"):
        return coeff * np.log1p(x)


def drift_potential(w, p: StationaryParams):
    """Antiderivative of (m1_inf - sigma*s)/D^2(s), normalized to 0 at s=0.

    Closed forms for alpha = 1 and alpha = 2; adaptive quadrature otherwise.
    At w = +-1 the value diverges; the signed infinity is returned rather
    than raising.
    """
    warr = np.asarray(w, dtype=float)
    if np.any(np.abs(warr) > 1.0):
        raise DomainError("opinion outside [-1, 1]")
    m, s = p.m1_inf, p.sigma
    if p.alpha == 1.0:
        out = 0.5 * (_xlog1p(m + s, warr) + _xlog1p(s - m, -warr))
    elif p.alpha == 2.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(np.abs(warr) < 1.0,
                            (m * warr - s) / (2.0 * (1.0 - warr * warr)),
                            -np.inf)
        out = (0.25 * m * (np.log1p(warr) - np.log1p(-warr))
               + frac + 0.5 * s)
        if m != 0.0:
            # the log term is subordinate to the 1/(1-w^2) divergence
            out = np.where(warr == 1.0, np.inf if m > s else -np.inf, out)
            out = np.where(warr == -1.0, np.inf if -m > s else -np.inf, out)
    else:
        out = np.empty_like(warr)
        flat = warr.ravel()
        res = out.ravel()
        for i, wi in enumerate(flat):
            if abs(wi) == 1.0:
                drive = (m - s) if wi > 0 else (m + s) * -1.0
                res[i] = math.inf if drive > 0 else -math.inf
                continue
            val, _ = quad(
                lambda x: (m - s * x) / (1.0 - x * x) ** p.alpha,
                0.0, wi, epsabs=1e-12, epsrel=1e-12, limit=200)
            res[i] = val
    return out if np.ndim(w) else float(out)


@dataclass
class StationaryProfile:
    """An explicit steady-state density of mass sigma.

    ``normalization`` is the multiplicative constant for ``kind="linear"``
    and the additive constant inside the positive part for
    ``kind="porous"``.  ``support`` is the closed interval where the density
    can be positive.
    """

    kind: str
    params: StationaryParams
    normalization: float
    support: tuple[float, float]

    @property
    def mass(self) -> float:
        return self.params.sigma

    def pdf(self, w):
        warr = np.asarray(w, dtype=float)
        pot = np.asarray(drift_potential(warr, self.params))
        if self.kind == "linear":
            with np.errstate(over="ignore"):
                out = self.normalization * np.exp(
                    2.0 / self.params.lambda_sq * pot)
        else:
            g = self.params.gamma
            # -inf potential at the extremes clamps to zero on its own
            arg = np.maximum(self.normalization + pot, 0.0)
            out = (2.0 * (g - 1.0) / self.params.lambda_sq * arg) \
                ** (1.0 / (g - 1.0))
        return out if np.ndim(w) else float(out)


def stationary_linear(p: StationaryParams) -> StationaryProfile:
    """Steady state for linear diffusion: C * exp(2/lambda^2 * potential).

    The constant is fixed by adaptive quadrature so the mass is sigma to
    1e-9 relative.  A divergent normalization integral (possible for
    alpha = 2 when |m1_inf| >= sigma) raises ``NonIntegrableProfileError``.
    """
    lam2 = p.lambda_sq
    if p.alpha == 1.0:
        a = (p.m1_inf + p.sigma) / lam2
        b = (p.sigma - p.m1_inf) / lam2
        if a <= -1.0 or b <= -1.0:
            raise NonIntegrableProfileError(
                f"endpoint exponents ({a}, {b}) are not integrable")
        z, _ = quad(lambda x: 1.0, -1.0, 1.0, weight="alg", wvar=(a, b),
                    epsabs=1e-13, epsrel=1e-12, limit=200)
    else:
        probe = 1.0 - 1e-9
        for wp in (-probe, probe):
            if 2.0 / lam2 * float(drift_potential(wp, p)) > 200.0:
                raise NonIntegrableProfileError(
                    "normalization integral diverges at the boundary")
        z, _ = quad(
            lambda x: math.exp(2.0 / lam2 * float(drift_potential(x, p))),
            -1.0, 1.0, epsabs=1e-13, epsrel=1e-12, limit=400,
            points=(-probe, 0.0, probe))
    if not (math.isfinite(z) and z > 0):
        raise NonIntegrableProfileError(f"normalization integral = {z!r}")
    return StationaryProfile("linear", p, p.sigma / z, (-1.0, 1.0))


def _porous_support(p: StationaryParams, c: float) -> tuple[float, float]:
    """Roots of c + potential around its maximum; clipped to the interval."""
    w_peak = p.m1_inf / p.sigma
    edge = 1.0 - 1e-12

    def f(w):
        return c + float(drift_potential(w, p))

    lo = -edge if f(-edge) >= 0 else brentq(f, -edge, w_peak, xtol=1e-14)
    hi = edge if f(edge) >= 0 else brentq(f, w_peak, edge, xtol=1e-14)
    return lo, hi


def stationary_porous(p: StationaryParams) -> StationaryProfile:
    """Compactly supported steady state for porous-medium nonlinearity.

    The additive constant is found by monotone root bracketing so the mass
    over the support equals sigma to 1e-9 relative.
    """
    g = p.gamma
    if g is None or g <= 1.0:
        raise ValueError("porous profile needs gamma > 1")
    if abs(p.m1_inf) >= p.sigma:
        raise ValueError("|m1_inf| must be below sigma for an interior peak")
    w_peak = p.m1_inf / p.sigma
    d_max = float(drift_potential(w_peak, p))
    coef = 2.0 * (g - 1.0) / p.lambda_sq
    expo = 1.0 / (g - 1.0)

    def mass(c: float) -> float:
        lo, hi = _porous_support(p, c)
        val, _ = quad(
            lambda x: (coef * max(c + float(drift_potential(x, p)), 0.0))
            ** expo,
            lo, hi, epsabs=1e-13, epsrel=1e-12, limit=400)
        return val

    c_lo = -d_max + 1e-12 * max(1.0, abs(d_max))
    step = 0.25
    c_hi = c_lo + step
    while mass(c_hi) < p.sigma:
        step *= 2.0
        c_hi = c_lo + step
        if step > 1e6:
            raise NonIntegrableProfileError("mass bracket for the additive"
                                            " constant did not close")
    c_star = brentq(lambda c: mass(c) - p.sigma, c_lo, c_hi, xtol=1e-13,
                    rtol=8.9e-16)
    if abs(mass(c_star) - p.sigma) > 1e-9 * p.sigma:
        raise NonIntegrableProfileError("normalization did not reach the"
                                        " requested mass tolerance")
    return StationaryProfile("porous", p, c_star, _porous_support(p, c_star))


def as_piecewise_constant(profile: StationaryProfile,
                          n_cells: int = 2000) -> PiecewiseConstantDensity:
    """Midpoint discretization of a profile, rescaled to its exact mass.

    Useful as the target of Wasserstein comparisons with reconstructed
    particle densities.
    """
    lo, hi = profile.support
    bp = np.linspace(lo, hi, n_cells + 1)
    mids = 0.5 * (bp[:-1] + bp[1:])
    vals = np.asarray(profile.pdf(mids))
    raw = PiecewiseConstantDensity.from_cells(bp, vals)
    scale = profile.mass / raw.mass
    return PiecewiseConstantDensity(bp, vals * scale, profile.mass)


def mean_opinion_decay_rate(lambda_sq: float) -> float:
    """Exact decay rate of the mean opinion for alpha=1, linear diffusion,
    constant kernel.

    Integrating the flux by parts, d/dt m1 = -lambda^2 * m1: the nonlocal
    part conserves m1 and the mobility-weighted Fick term contributes
    -(lambda^2/2) * int (1 - w^2) du = -lambda^2 * m1.  Under the
    normalization lambda^2/2 = 1 this is the familiar rate 2.
    """
    if lambda_sq < 0:
        raise ValueError("lambda_sq must be nonnegative")
    return float(lambda_sq)


def moment_hierarchy_rhs(moments, sigma: float, lambda_sq: float) -> np.ndarray:
    """Time derivatives of the first K moments for alpha = 2, linear
    diffusion, constant kernel, closing the hierarchy with
    m_{K+1} = m_{K+2} = 0.

    For k >= 1 (with m_0 = sigma):

        dm_k/dt = lambda^2/2 k(k-1) m_{k-2} + k m_1 m_{k-1}
                  - k [lambda^2 (k+1) + sigma] m_k
                  + lambda^2/2 k(k+3) m_{k+2}

    obtained by testing the equation with w^k; at k=1 it reduces to
    dm_1/dt = -2 lambda^2 m_1 + 2 lambda^2 m_3.
    """
    m = np.asarray(moments, dtype=float)
    k_max = m.size
    if k_max < 3:
        raise ValueError("need at least three moments (K >= 3)")

    def get(j: int) -> float:
        if j == 0:
            return sigma
        if 1 <= j <= k_max:
            return m[j - 1]
        return 0.0

    out = np.empty(k_max)
    m1 = m[0]
    for k in range(1, k_max + 1):
        out[k - 1] = (0.5 * lambda_sq * k * (k - 1) * get(k - 2)
                      + k * m1 * get(k - 1)
                      - k * (lambda_sq * (k + 1) + sigma) * get(k)
                      + 0.5 * lambda_sq * k * (k + 3) * get(k + 2))
    return out
