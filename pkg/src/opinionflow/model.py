"""Model vocabulary: mobilities, diffusion nonlinearities, compromise kernels,
species and their coupling.

Opinions live on the fixed interval [-1, 1]; the endpoints are the extreme
opinions.  A model is a list of species (followers ``f``, left/right leaders
``l``/``r``, trolls ``q``, or any custom tags) together with a matrix of
compromise kernels saying how strongly species ``u`` is attracted by species
``h``.  Everything here is a plain value object; ``validate`` checks a spec
against the structural assumptions the simulation relies on and returns a
report instead of raising.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import math

import numpy as np
from scipy.special import ndtr

from .errors import DomainError

__all__ = [
    "OpinionInterval", "OPINIONS", "Mobility", "DiffusionNonlinearity",
    "CompromiseKernel", "KernelConstants", "InitialDensity", "SpeciesSpec",
    "ModelSpec", "Violation", "eval_mobility_sq", "eval_nonlinearity",
    "nonlinearity_derivative", "eval_kernel", "compromise_rate_bound",
    "validate",
]


@dataclass(frozen=True)
class OpinionInterval:
    """The opinion domain.  Fixed to [-1, 1] for every species."""

    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("opinion interval must satisfy lo < hi")


OPINIONS = OpinionInterval()


def _check_opinion(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if np.any(np.abs(w) > 1.0):
        raise DomainError("opinion outside [-1, 1]")
    return w


# --------------------------------------------------------------------------
# mobility D^2(w) = (1 - w^2)^alpha
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Mobility:
    """Opinion-dependent diffusivity squared, D^2(w) = (1 - w^2)^alpha.

    alpha > 0 keeps D(+-1) = 0; alpha >= 1 additionally makes d/dw D^2
    bounded, which ``validate`` checks as assumption D2.
    """

    alpha: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("mobility exponent must be positive")


def eval_mobility_sq(w, mob: Mobility):
    """D^2(w) = (1 - w^2)^alpha, for w in [-1, 1]."""
    w = _check_opinion(w)
    base = 1.0 - w * w
    if mob.alpha == 1.0:
        out = base
    elif mob.alpha == 2.0:
        out = base * base
    else:
        out = base ** mob.alpha
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# diffusion nonlinearity phi(u)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DiffusionNonlinearity:
    """Nondecreasing nonlinearity applied to the local density.

    ``linear`` is phi(u) = u; ``powerlaw`` is the porous-medium form
    phi(u) = u^gamma / gamma with gamma > 1.  On any bounded density range
    [0, U] the power law is Lipschitz with constant U^(gamma-1).
    """

    kind: str = "linear"
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "powerlaw"):
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}")
        if self.kind == "powerlaw" and self.gamma is None:
            raise ValueError("powerlaw nonlinearity requires gamma")

    @classmethod
    def linear(cls) -> "DiffusionNonlinearity":
        return cls("linear")

    @classmethod
    def power_law(cls, gamma: float) -> "DiffusionNonlinearity":
        return cls("powerlaw", float(gamma))


def eval_nonlinearity(u, nl: DiffusionNonlinearity):
    """phi(u) for u >= 0; phi(0) = 0 and phi is nondecreasing."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise DomainError("density value must be nonnegative")
    if nl.kind == "linear":
        out = u.copy()
    else:
        out = u ** nl.gamma / nl.gamma
    return out if out.ndim else float(out)


def nonlinearity_derivative(u, nl: DiffusionNonlinearity):
    """phi'(u); used by the adaptive time-step policy."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise DomainError("density value must be nonnegative")
    if nl.kind == "linear":
        out = np.ones_like(u)
    else:
        out = u ** (nl.gamma - 1.0)
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# compromise kernels P(w, v)
# --------------------------------------------------------------------------

KERNEL_KINDS = (
    "zero",
    "constant",
    "one_minus_abs_w",
    "one_minus_abs_diff",
    "one_minus_w_sq",
    "scaled_one_minus_w_sq",
    "quad_dist",
)

# integer codes shared with the compiled engine core
KERNEL_CODES = {name: i for i, name in enumerate(KERNEL_KINDS)}


class KernelConstants(NamedTuple):
    """Certified constants of a kernel on [-1,1]^2.

    ``lip`` bounds |P(w1,v)-P(w2,v)| + |P(v,w1)-P(v,w2)| by lip*|w1-w2|;
    ``lip_d1`` does the same for the first-argument derivative.  Kernels with
    a kink (the absolute-value kinds) have lip_d1 = inf.
    """

    sup: float
    lip: float
    sup_d1: float
    lip_d1: float


@dataclass(frozen=True)
class CompromiseKernel:
    """One entry of the interaction matrix.

    Kinds (c is the scale of ``scaled_one_minus_w_sq``, ignored otherwise):

    ==========================  =======================================
    zero                        0
    constant                    1
    one_minus_abs_w             1 - |w|
    one_minus_abs_diff          max(0, 1 - |w - v|)
    one_minus_w_sq              1 - w^2
    scaled_one_minus_w_sq       c (1 - w^2)
    quad_dist                   1 - (w - v)^2 / 4
    ==========================  =======================================

    ``one_minus_abs_diff`` is clamped at zero so the kernel stays nonnegative
    on the whole square (the raw form goes negative for |w - v| > 1).
    """

    kind: str
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.c < 0:
            raise ValueError("kernel scale must be nonnegative")

    @property
    def constants(self) -> KernelConstants:
        c = self.c
        table = {
            "zero": KernelConstants(0.0, 0.0, 0.0, 0.0),
            "constant": KernelConstants(1.0, 0.0, 0.0, 0.0),
            "one_minus_abs_w": KernelConstants(1.0, 1.0, 1.0, math.inf),
            "one_minus_abs_diff": KernelConstants(1.0, 2.0, 1.0, math.inf),
            "one_minus_w_sq": KernelConstants(1.0, 2.0, 2.0, 2.0),
            "scaled_one_minus_w_sq": KernelConstants(c, 2 * c, 2 * c, 2 * c),
            "quad_dist": KernelConstants(1.0, 2.0, 1.0, 1.0),
        }
        return table[self.kind]

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or (self.kind == "scaled_one_minus_w_sq"
                                       and self.c == 0.0)


ZERO_KERNEL = CompromiseKernel("zero")


def eval_kernel(k: CompromiseKernel, w, v):
    """P(w, v) on [-1,1]^2; nonnegative, bounded by ``k.constants.sup``."""
    w = _check_opinion(w)
    v = _check_opinion(v)
    if k.kind == "zero":
        out = np.zeros(np.broadcast(w, v).shape)
    elif k.kind == "constant":
        out = np.ones(np.broadcast(w, v).shape)
    elif k.kind == "one_minus_abs_w":
        out = np.broadcast_to(1.0 - np.abs(w), np.broadcast(w, v).shape).copy()
    elif k.kind == "one_minus_abs_diff":
        out = np.maximum(0.0, 1.0 - np.abs(w - v))
    elif k.kind == "one_minus_w_sq":
        out = np.broadcast_to(1.0 - w * w, np.broadcast(w, v).shape).copy()
    elif k.kind == "scaled_one_minus_w_sq":
        out = np.broadcast_to(k.c * (1.0 - w * w),
                              np.broadcast(w, v).shape).copy()
    else:  # quad_dist
        d = w - v
        out = 1.0 - 0.25 * d * d
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# initial densities
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class InitialDensity:
    """Shape of an initial opinion density on [-1, 1].

    The shape is always renormalized so that, together with the additive
    ``floor``, the total mass on the interval equals the species mass sigma
    passed to the evaluation methods.  Gaussian mixture components are
    truncated to the interval and renormalized per component, so stated
    component weights are exact masses (up to the floor rescaling).

    kinds
        ``uniform``    constant density sigma/2
        ``mixture``    Gaussian mixture, ``components`` = ((weight, center, std), ...)
        ``tabulated``  piecewise-linear interpolation of ``node_values`` at ``nodes``
    """

    kind: str
    components: tuple[tuple[float, float, float], ...] = ()
    nodes: tuple[float, ...] = ()
    node_values: tuple[float, ...] = ()
    floor: float = 0.0

    def __post_init__(self):
        if self.kind not in ("uniform", "mixture", "tabulated"):
            raise ValueError(f"unknown initial density kind {self.kind!r}")
        if self.floor < 0:
            raise ValueError("density floor must be nonnegative")
        if self.kind == "mixture":
            if not self.components:
                raise ValueError("mixture needs at least one component")
            for wgt, _, std in self.components:
                if wgt <= 0 or std <= 0:
                    raise ValueError("mixture weights and widths must be positive")
        if self.kind == "tabulated":
            xs = np.asarray(self.nodes)
            us = np.asarray(self.node_values)
            if xs.size < 2 or xs.size != us.size:
                raise ValueError("tabulated density needs matching nodes/values, >= 2")
            if xs[0] != -1.0 or xs[-1] != 1.0 or np.any(np.diff(xs) <= 0):
                raise ValueError("tabulated nodes must increase from -1 to 1")
            if np.any(us < 0):
                raise ValueError("tabulated values must be nonnegative")

    @classmethod
    def uniform(cls, floor: float = 0.0) -> "InitialDensity":
        return cls("uniform", floor=floor)

    @classmethod
    def mixture(cls, components, floor: float = 0.0) -> "InitialDensity":
        comps = tuple((float(w), float(c), float(s)) for w, c, s in components)
        return cls("mixture", components=comps, floor=floor)

    @classmethod
    def tabulated(cls, nodes, values, floor: float = 0.0) -> "InitialDensity":
        return cls("tabulated", nodes=tuple(float(x) for x in nodes),
                   node_values=tuple(float(u) for u in values), floor=floor)

    # -- evaluation --------------------------------------------------------

    def _shape_scale(self, sigma: float) -> float:
        """Mass assigned to the shape part after reserving the floor."""
        rest = sigma - 2.0 * self.floor
        if rest <= 0:
            raise ValueError("floor too large: 2*floor must stay below sigma")
        return rest

    def pdf(self, w, sigma: float):
        """Density value(s) at w for a species of total mass sigma."""
        w = _check_opinion(w)
        rest = self._shape_scale(sigma)
        if self.kind == "uniform":
            out = np.full_like(w, self.floor + rest / 2.0)
        elif self.kind == "mixture":
            total_w = sum(c[0] for c in self.components)
            out = np.full_like(w, self.floor)
            for wgt, ctr, std in self.components:
                mass = rest * wgt / total_w
                z = ndtr((1.0 - ctr) / std) - ndtr((-1.0 - ctr) / std)
                out = out + mass * np.exp(-0.5 * ((w - ctr) / std) ** 2) \
                    / (std * math.sqrt(2.0 * math.pi) * z)
        else:
            xs = np.asarray(self.nodes)
            us = np.asarray(self.node_values)
            raw_mass = np.trapezoid(us, xs)
            if raw_mass <= 0:
                raise ValueError("tabulated density has zero mass")
            out = self.floor + rest * np.interp(w, xs, us) / raw_mass
        return out if out.ndim else float(out)

    def cdf(self, w, sigma: float):
        """Mass on [-1, w] for a species of total mass sigma."""
        w = _check_opinion(w)
        rest = self._shape_scale(sigma)
        out = self.floor * (w + 1.0)
        if self.kind == "uniform":
            out = out + rest * (w + 1.0) / 2.0
        elif self.kind == "mixture":
            total_w = sum(c[0] for c in self.components)
            for wgt, ctr, std in self.components:
                mass = rest * wgt / total_w
                z0 = ndtr((-1.0 - ctr) / std)
                z = ndtr((1.0 - ctr) / std) - z0
                out = out + mass * (ndtr((w - ctr) / std) - z0) / z
        else:
            xs = np.asarray(self.nodes)
            us = np.asarray(self.node_values)
            raw_mass = np.trapezoid(us, xs)
            seg = np.concatenate(([0.0], np.cumsum(
                0.5 * (us[1:] + us[:-1]) * np.diff(xs))))
            idx = np.clip(np.searchsorted(xs, w, side="right") - 1,
                          0, xs.size - 2)
            x0 = xs[idx]
            dx = w - x0
            slope = (us[idx + 1] - us[idx]) / (xs[idx + 1] - xs[idx])
            part = us[idx] * dx + 0.5 * slope * dx * dx
            out = out + rest * (seg[idx] + part) / raw_mass
        return out if out.ndim else float(out)

    def bounds(self, sigma: float, grid_size: int = 8193) -> tuple[float, float]:
        """(inf, sup) of the density on [-1, 1].

        Exact for uniform and tabulated shapes; for mixtures evaluated on a
        dense grid augmented with the component centers.
        """
        if self.kind == "uniform":
            val = self.floor + self._shape_scale(sigma) / 2.0
            return val, val
        if self.kind == "tabulated":
            vals = self.pdf(np.asarray(self.nodes), sigma)
            return float(np.min(vals)), float(np.max(vals))
        grid = np.linspace(-1.0, 1.0, grid_size)
        grid = np.union1d(grid, np.clip([c[1] for c in self.components], -1, 1))
        vals = self.pdf(grid, sigma)
        return float(np.min(vals)), float(np.max(vals))


# --------------------------------------------------------------------------
# species and coupled models
# --------------------------------------------------------------------------

TROLL_TAG = "q"


@dataclass(frozen=True)
class SpeciesSpec:
    """One population: mass, diffusion coefficient, mobility, nonlinearity,
    initial density.

    ``half_lambda_sq`` is the diffusion coefficient exactly as it multiplies
    the flux, i.e. lambda^2 / 2.  Trolls (tag ``q``) must have it zero;
    ``validate`` reports a violation otherwise.
    """

    tag: str
    sigma: float
    half_lambda_sq: float
    mobility: Mobility = field(default_factory=Mobility)
    nonlinearity: DiffusionNonlinearity = field(
        default_factory=DiffusionNonlinearity.linear)
    initial_density: InitialDensity = field(
        default_factory=InitialDensity.uniform)

    def __post_init__(self):
        if not self.tag or not self.tag.isidentifier():
            raise ValueError("species tag must be a nonempty identifier")
        if self.sigma <= 0:
            raise ValueError("species mass must be positive")
        if self.half_lambda_sq < 0:
            raise ValueError("diffusion coefficient must be nonnegative")

    @property
    def is_troll(self) -> bool:
        return self.tag == TROLL_TAG


@dataclass(frozen=True)
class ModelSpec:
    """A set of species plus the matrix of compromise kernels.

    ``kernels`` maps ordered tag pairs (u, h) to the kernel with which
    species u weighs opinions of species h.  Missing pairs mean no
    interaction (zero kernel).
    """

    species: tuple[SpeciesSpec, ...]
    kernels: dict[tuple[str, str], CompromiseKernel] = field(default_factory=dict)

    def __post_init__(self):
        tags = [s.tag for s in self.species]
        if len(set(tags)) != len(tags):
            raise ValueError("duplicate species tags")
        for (u, h) in self.kernels:
            if u not in tags or h not in tags:
                raise ValueError(f"kernel entry ({u},{h}) names unknown species")

    @property
    def tags(self) -> tuple[str, ...]:
        return tuple(s.tag for s in self.species)

    def species_by_tag(self, tag: str) -> SpeciesSpec:
        for s in self.species:
            if s.tag == tag:
                return s
        raise KeyError(tag)

    def kernel(self, u: str, h: str) -> CompromiseKernel:
        return self.kernels.get((u, h), ZERO_KERNEL)


def compromise_rate_bound(spec: ModelSpec, tag: str) -> float:
    """Certified bound on the spacing contraction/expansion rate that the
    compromise terms can impose on species ``tag``.

    Sum over all interaction partners of Lip[P] + sup|P| + Lip[d1 P].  The
    spacing monitor requires its rate constant to exceed this bound; kernels
    with a kink make it infinite.
    """
    total = 0.0
    for other in spec.tags:
        k = spec.kernel(tag, other).constants
        total += k.lip + k.sup + k.lip_d1
    return total


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    """One failed assumption, named, with the offending subject."""

    assumption: str
    subject: str
    detail: str

    def __str__(self):
        return f"[{self.assumption}] {self.subject}: {self.detail}"


def validate(spec: ModelSpec) -> list[Violation]:
    """Check a model against the structural assumptions of the scheme.

    Returns a (possibly empty) list of violations; never raises.  Checked:
    positive bounded initial data (In1, In2), mobility regularity (D1, D2),
    nonlinearity admissibility (Dif), kernel smoothness (P), troll
    non-diffusion, and the leader/troll interaction topology.
    """
    out: list[Violation] = []
    tags = spec.tags

    for s in spec.species:
        # In1/In2: positive mass, density bounded away from 0 and infinity
        try:
            m_lo, m_hi = s.initial_density.bounds(s.sigma)
        except ValueError as exc:
            out.append(Violation("In1", s.tag, str(exc)))
            continue
        if m_lo <= 0.0:
            out.append(Violation("In2", s.tag,
                                 "initial density is not bounded away from zero"
                                 " (add a positive floor)"))
        if not math.isfinite(m_hi):
            out.append(Violation("In2", s.tag, "initial density is unbounded"))

        if s.mobility.alpha < 1.0:
            out.append(Violation("D2", s.tag,
                                 f"mobility exponent {s.mobility.alpha} < 1 makes"
                                 " d/dw D^2 unbounded"))
        nl = s.nonlinearity
        if nl.kind == "powerlaw" and nl.gamma <= 1.0:
            out.append(Violation("Dif", s.tag,
                                 f"power-law exponent {nl.gamma} must exceed 1"))
        if s.is_troll and s.half_lambda_sq != 0.0:
            out.append(Violation("troll-diffusion", s.tag,
                                 "trolls cannot diffuse their opinion"
                                 " (half_lambda_sq must be 0)"))

    for (u, h), k in spec.kernels.items():
        if not math.isfinite(k.constants.lip_d1) and not k.is_zero:
            out.append(Violation("P", f"{u},{h}",
                                 f"kernel {k.kind!r} has a non-Lipschitz first"
                                 " derivative; spacing-rate bound is infinite"))

    # strong leaders: followers do not act back on leaders
    if "f" in tags:
        for leader in ("l", "r"):
            if leader in tags and not spec.kernel(leader, "f").is_zero:
                out.append(Violation("strong-leaders", f"{leader},f",
                                     "followers must not affect leader opinions"))

    if TROLL_TAG in tags:
        # trolls follow their reference leader group only
        for other in tags:
            if other != "r" and not spec.kernel(TROLL_TAG, other).is_zero:
                out.append(Violation("troll-topology", f"q,{other}",
                                     "trolls interact only with their reference"
                                     " leader group"))
        for leader in ("l", "r"):
            if leader in tags and not spec.kernel(leader, TROLL_TAG).is_zero:
                out.append(Violation("troll-topology", f"{leader},q",
                                     "trolls must not affect leader opinions"))
        if "f" in tags and spec.kernel("f", TROLL_TAG) != spec.kernel("f", "f"):
            out.append(Violation("troll-topology", "f,q",
                                 "trolls are indistinguishable from followers:"
                                 " the f,q kernel must equal the f,f kernel"))

    return out
