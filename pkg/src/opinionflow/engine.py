"""Particle engine: atomization of initial densities and time integration of
the coupled opinion ODE system.

Each species of mass sigma is split into N+1 ordered particles delimiting N
cells of mass sigma/N.  Interior particles move with the sum of a diffusive
(osmotic) velocity, driven by the difference of the nonlinearity of the two
adjacent local densities and weighted by the mobility, and a compromise
velocity, a kernel-weighted attraction toward every particle of every
interacting species.  Diffusing species keep their extreme particles pinned
at -1 and +1; trolls are pure transport and are not pinned.

The inner right-hand side and the stepping loop are compiled with numba;
``rhs``/``step``/``run`` share the same compiled kernels, so a single ``step``
reproduces one iteration of ``run`` bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import math

import numpy as np
from numba import njit, types
from numba.typed import List as NumbaList
from scipy.optimize import brentq

from .errors import (AtomizationError, IntegrationError, MassMismatchError,
                     SpacingUnderflowError)
from .model import (InitialDensity, ModelSpec, SpeciesSpec, KERNEL_CODES,
                    compromise_rate_bound, eval_kernel, eval_mobility_sq,
                    eval_nonlinearity, validate)

__all__ = [
    "ParticleState", "FixedDt", "AdaptiveSpacing", "IntegratorConfig",
    "SpacingMonitor", "Trajectory", "atomize", "local_densities",
    "initialize", "diffusive_velocity", "compromise_velocity", "rhs",
    "step", "run", "MAX_HALVINGS",
]

MAX_HALVINGS = 40


# --------------------------------------------------------------------------
# state and configuration
# --------------------------------------------------------------------------

@dataclass
class ParticleState:
    """Ordered particle positions for every species at a common time."""

    tags: tuple[str, ...]
    positions: list[np.ndarray]
    sigma_n: np.ndarray
    t: float = 0.0

    def index(self, tag: str | None = None) -> int:
        if tag is None:
            if len(self.tags) != 1:
                raise ValueError("tag required for multi-species states")
            return 0
        return self.tags.index(tag)

    def copy(self) -> "ParticleState":
        return ParticleState(self.tags, [w.copy() for w in self.positions],
                             self.sigma_n.copy(), self.t)

    def flat(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Concatenated positions plus per-species offsets and lengths."""
        npart = np.array([w.size for w in self.positions], dtype=np.int64)
        off = np.concatenate(([0], np.cumsum(npart)[:-1])).astype(np.int64)
        return np.concatenate(self.positions), off, npart


@dataclass(frozen=True)
class FixedDt:
    dt: float

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("fixed time step must be positive")


@dataclass(frozen=True)
class AdaptiveSpacing:
    """dt = c_cfl * (min spacing)^2 / (max diffusive coefficient), recomputed
    every step; a kernel-derived compromise rate keeps dt finite for species
    without diffusion."""

    c_cfl: float = 0.2

    def __post_init__(self):
        if self.c_cfl <= 0:
            raise ValueError("CFL constant must be positive")


@dataclass(frozen=True)
class IntegratorConfig:
    scheme: str = "rk4"
    dt_policy: FixedDt | AdaptiveSpacing = field(default_factory=AdaptiveSpacing)
    t_final: float = 2.0
    snapshot_stride: int = 200

    def __post_init__(self):
        if self.scheme not in ("euler", "rk4"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.t_final <= 0:
            raise ValueError("t_final must be positive")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot stride must be >= 1")


@dataclass
class SpacingMonitor:
    """Runtime check of the two-sided spacing bounds.

    For each species with rate constant c exceeding its compromise rate
    bound, spacings must stay within
    [sigma_n/M * exp(-c T), sigma_n/m * exp(+c T)] over the whole run,
    where (m, M) bound the initial density.  Violations are logged as
    (t, tag, cell index, side).
    """

    rate: dict[str, float]
    density_bounds: dict[str, tuple[float, float]]
    violations: list[tuple[float, str, int, str]] = field(default_factory=list)

    @classmethod
    def for_model(cls, spec: ModelSpec, margin: float = 0.01) -> "SpacingMonitor":
        rate = {}
        bounds = {}
        for s in spec.species:
            rate[s.tag] = compromise_rate_bound(spec, s.tag) + margin
            bounds[s.tag] = s.initial_density.bounds(s.sigma)
        return cls(rate, bounds)


@dataclass
class Trajectory:
    """Timestamped snapshots of a run plus integration diagnostics."""

    tags: tuple[str, ...]
    sigma_n: np.ndarray
    offsets: np.ndarray
    counts: np.ndarray
    times: np.ndarray
    snapshots: list[np.ndarray]     # flat position arrays, one per time
    n_steps: int
    n_rejected: int
    violations: list[tuple[float, str, int, str]]
    violation_count: int
    t_final: float

    def __len__(self) -> int:
        return self.times.size

    def state_at(self, k: int) -> ParticleState:
        w = self.snapshots[k]
        parts = [w[o:o + n].copy()
                 for o, n in zip(self.offsets, self.counts)]
        return ParticleState(self.tags, parts, self.sigma_n.copy(),
                             float(self.times[k]))

    def density_at(self, k: int, tag: str | None = None):
        from .analysis import reconstruct
        return reconstruct(self.state_at(k), tag)


# --------------------------------------------------------------------------
# atomization
# --------------------------------------------------------------------------

def atomize(density: InitialDensity, n_cells: int, sigma: float) -> np.ndarray:
    """Split a density of mass sigma into n_cells equal-mass cells.

    Returns the n_cells+1 ordered cell boundaries, with the extremes exactly
    at -1 and +1.  Interior boundaries are the quantiles of the density,
    found by bracketed root finding on its CDF.
    """
    if n_cells < 2:
        raise AtomizationError("need at least two cells")
    total = float(density.cdf(1.0, sigma))
    if abs(total - sigma) > 1e-9 * sigma:
        raise MassMismatchError(
            f"density mass {total!r} differs from sigma {sigma!r}")
    w = np.empty(n_cells + 1)
    w[0], w[-1] = -1.0, 1.0
    for i in range(1, n_cells):
        level = sigma * i / n_cells
        w[i] = brentq(lambda x: density.cdf(x, sigma) - level,
                      -1.0, 1.0, xtol=1e-14, rtol=8.9e-16, maxiter=200)
        if density.pdf(w[i], sigma) <= 0.0:
            raise AtomizationError(
                f"cell boundary {i} falls where the density vanishes;"
                " quantiles are not well defined there")
    if np.any(np.diff(w) <= 0):
        raise AtomizationError(
            "cell boundaries are not strictly increasing; the density"
            " vanishes on an interior interval")
    return w


def local_densities(w: np.ndarray, sigma_n: float) -> np.ndarray:
    """Cell densities sigma_n / gap for strictly increasing positions."""
    gaps = np.diff(w)
    if np.any(gaps <= np.finfo(float).eps * 4.0):
        raise SpacingUnderflowError("particle spacing underflow")
    return sigma_n / gaps


def initialize(spec: ModelSpec, n_cells) -> ParticleState:
    """Atomize every species; ``n_cells`` is an int or a per-tag mapping."""
    counts = ({t: int(n_cells) for t in spec.tags}
              if np.isscalar(n_cells) else dict(n_cells))
    positions = []
    sigma_n = []
    for s in spec.species:
        n = counts[s.tag]
        positions.append(atomize(s.initial_density, n, s.sigma))
        sigma_n.append(s.sigma / n)
    return ParticleState(spec.tags, positions, np.array(sigma_n), 0.0)


# --------------------------------------------------------------------------
# compiled core
# --------------------------------------------------------------------------

_F8 = types.float64
_F8_1D = types.float64[::1]


@njit(cache=True, nogil=True, inline="always")
def _mob_sq_nb(w, alpha):
    b = 1.0 - w * w
    if alpha == 1.0:
        return b
    if alpha == 2.0:
        return b * b
    return b ** alpha


@njit(cache=True, nogil=True, inline="always")
def _phi_nb(u, kind, gamma):
    if kind == 0:
        return u
    if gamma == 2.0:
        return 0.5 * u * u
    return u ** gamma / gamma


@njit(cache=True, nogil=True, inline="always")
def _kernel_w_nb(kind, par, w):
    # kinds whose value depends on the first argument only
    if kind == 1:
        return 1.0
    if kind == 2:
        return 1.0 - abs(w)
    if kind == 4:
        return 1.0 - w * w
    return par * (1.0 - w * w)


@njit(cache=True, nogil=True)
def _rhs_nb(W, out, scratch, off, npart, sig_n, half_lam, alpha, phi_kind,
            gamma, pinned, kkind, kpar):
    nsp = off.size
    for s in range(nsp):
        o = off[s]
        n = npart[s]
        for i in range(n):
            out[o + i] = 0.0
        if half_lam[s] > 0.0:
            coef = half_lam[s] / sig_n[s]
            # phi of each cell density, cached once per cell
            for i in range(n - 1):
                scratch[o + i] = _phi_nb(sig_n[s] / (W[o + i + 1] - W[o + i]),
                                         phi_kind[s], gamma[s])
            for i in range(1, n - 1):
                d2 = _mob_sq_nb(W[o + i], alpha[s])
                out[o + i] = coef * d2 * (scratch[o + i - 1] - scratch[o + i])
        lo = 1 if pinned[s] == 1 else 0
        hi = n - 1 if pinned[s] == 1 else n
        for h in range(nsp):
            kk = kkind[s, h]
            if kk == 0:
                continue
            oh = off[h]
            nh = npart[h]
            sn = sig_n[h]
            if kk == 1 or kk == 2 or kk == 4 or kk == 5:
                s1 = 0.0
                for j in range(nh):
                    s1 += W[oh + j]
                for i in range(lo, hi):
                    wi = W[o + i]
                    out[o + i] -= sn * _kernel_w_nb(kk, kpar[s, h], wi) \
                        * (nh * wi - s1)
            elif kk == 6:
                # 1 - (w-v)^2/4 expands into moments of the partner positions
                s1 = 0.0
                s2 = 0.0
                s3 = 0.0
                for j in range(nh):
                    hj = W[oh + j]
                    s1 += hj
                    s2 += hj * hj
                    s3 += hj * hj * hj
                for i in range(lo, hi):
                    wi = W[o + i]
                    lin = nh * wi - s1
                    cub = (nh * wi * wi * wi - 3.0 * wi * wi * s1
                           + 3.0 * wi * s2 - s3)
                    out[o + i] -= sn * (lin - 0.25 * cub)
            else:
                for i in range(lo, hi):
                    wi = W[o + i]
                    acc = 0.0
                    for j in range(nh):
                        hj = W[oh + j]
                        p = 1.0 - abs(wi - hj)
                        if p < 0.0:
                            p = 0.0
                        acc += p * (wi - hj)
                    out[o + i] -= sn * acc


@njit(cache=True, nogil=True)
def _ordered_inside_nb(W, off, npart):
    for s in range(off.size):
        o = off[s]
        n = npart[s]
        if W[o] < -1.0 or W[o + n - 1] > 1.0:
            return False
        for i in range(n - 1):
            if not (W[o + i] < W[o + i + 1]):
                return False
    return True


@njit(cache=True, nogil=True)
def _first_bad_nb(W, off, npart):
    """Locate the first non-finite entry or ordering violation."""
    for s in range(off.size):
        o = off[s]
        n = npart[s]
        for i in range(n):
            if not np.isfinite(W[o + i]):
                return s, i
        if W[o] < -1.0:
            return s, 0
        if W[o + n - 1] > 1.0:
            return s, n - 1
        for i in range(n - 1):
            if not (W[o + i] < W[o + i + 1]):
                return s, i
    return -1, -1


@njit(cache=True, nogil=True)
def _try_step_nb(W, dt, scheme, k1, k2, k3, k4, wtmp, wout, scratch,
                 off, npart, sig_n, half_lam, alpha, phi_kind, gamma,
                 pinned, kkind, kpar):
    """One explicit step into ``wout``; 0 ok, 1 ordering broken, 2 non-finite."""
    n = W.size
    _rhs_nb(W, k1, scratch, off, npart, sig_n, half_lam, alpha, phi_kind,
            gamma, pinned, kkind, kpar)
    if scheme == 0:
        for i in range(n):
            wout[i] = W[i] + dt * k1[i]
    else:
        half = 0.5 * dt
        for i in range(n):
            wtmp[i] = W[i] + half * k1[i]
        _rhs_nb(wtmp, k2, scratch, off, npart, sig_n, half_lam,
                alpha, phi_kind, gamma, pinned, kkind, kpar)
        for i in range(n):
            wtmp[i] = W[i] + half * k2[i]
        _rhs_nb(wtmp, k3, scratch, off, npart, sig_n, half_lam,
                alpha, phi_kind, gamma, pinned, kkind, kpar)
        for i in range(n):
            wtmp[i] = W[i] + dt * k3[i]
        _rhs_nb(wtmp, k4, scratch, off, npart, sig_n, half_lam,
                alpha, phi_kind, gamma, pinned, kkind, kpar)
        sixth = dt / 6.0
        for i in range(n):
            wout[i] = W[i] + sixth * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i])
    for i in range(n):
        if not np.isfinite(wout[i]):
            return 2
    if not _ordered_inside_nb(wout, off, npart):
        return 1
    return 0


@njit(cache=True, nogil=True)
def _stiffness_rate_nb(W, off, npart, sig_n, half_lam, alpha, phi_kind,
                       gamma, comp_rate):
    rate = 1e-300
    for s in range(off.size):
        o = off[s]
        n = npart[s]
        r = comp_rate[s]
        if half_lam[s] > 0.0:
            gmin = 1e300
            numax = 0.0
            uprev = sig_n[s] / (W[o + 1] - W[o])
            for i in range(n - 1):
                gap = W[o + i + 1] - W[o + i]
                if gap < gmin:
                    gmin = gap
                u = sig_n[s] / gap
                if i > 0:
                    um = uprev if uprev > u else u
                    pp = 1.0 if phi_kind[s] == 0 else um ** (gamma[s] - 1.0)
                    val = _mob_sq_nb(W[o + i], alpha[s]) * pp
                    if val > numax:
                        numax = val
                uprev = u
            r = r + half_lam[s] * numax / (gmin * gmin)
        if r > rate:
            rate = r
    return rate


@njit(cache=True, nogil=True)
def _monitor_check_nb(W, off, npart, gap_lb, gap_ub, t, viol_buf, n_viol):
    cap = viol_buf.shape[0]
    for s in range(off.size):
        o = off[s]
        for i in range(npart[s] - 1):
            gap = W[o + i + 1] - W[o + i]
            code = -1
            if gap < gap_lb[s] * (1.0 - 1e-9):
                code = 0
            elif gap > gap_ub[s] * (1.0 + 1e-9):
                code = 1
            if code >= 0:
                if n_viol < cap:
                    viol_buf[n_viol, 0] = t
                    viol_buf[n_viol, 1] = s
                    viol_buf[n_viol, 2] = i
                    viol_buf[n_viol, 3] = code
                n_viol += 1
    return n_viol


@njit(cache=True, nogil=True)
def _run_loop_nb(W0, off, npart, sig_n, half_lam, alpha, phi_kind, gamma,
                 pinned, kkind, kpar, comp_rate, scheme, fixed_dt, c_cfl,
                 t_final, snap_stride, snap_times, gap_lb, gap_ub, monitor_on,
                 viol_buf):
    n = W0.size
    W = W0.copy()
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    wtmp = np.empty(n)
    wout = np.empty(n)
    scratch = np.empty(n)
    snaps_t = NumbaList.empty_list(_F8)
    snaps_w = NumbaList.empty_list(_F8_1D)

    t = 0.0
    n_steps = 0
    n_rejects = 0
    n_viol = 0
    status = 0
    fail_sp = -1
    fail_idx = -1

    snaps_t.append(t)
    snaps_w.append(W.copy())
    if monitor_on == 1:
        n_viol = _monitor_check_nb(W, off, npart, gap_lb, gap_ub, t,
                                   viol_buf, n_viol)

    time_mode = snap_times.size > 0
    si = 0
    steps_since_snap = 0
    t_eps = 1e-14 * (t_final if t_final > 1.0 else 1.0)

    while t < t_final - t_eps:
        if fixed_dt > 0.0:
            dt = fixed_dt
        else:
            rate = _stiffness_rate_nb(W, off, npart, sig_n, half_lam, alpha,
                                      phi_kind, gamma, comp_rate)
            dt = c_cfl / rate
        hit_snap = False
        if time_mode and si < snap_times.size:
            remaining = snap_times[si] - t
            if dt >= remaining - t_eps:
                dt = remaining
                hit_snap = True
        if t + dt > t_final:
            dt = t_final - t
        ok = False
        code = 0
        for _ in range(MAX_HALVINGS + 1):
            code = _try_step_nb(W, dt, scheme, k1, k2, k3, k4, wtmp,
                                wout, scratch, off, npart, sig_n,
                                half_lam, alpha, phi_kind, gamma,
                                pinned, kkind, kpar)
            if code == 0:
                ok = True
                break
            n_rejects += 1
            dt *= 0.5
            hit_snap = False
        if not ok:
            status = code
            fail_sp, fail_idx = _first_bad_nb(wout, off, npart)
            break
        for i in range(n):
            W[i] = wout[i]
        if hit_snap:
            t = snap_times[si]
        else:
            t = t + dt
        n_steps += 1
        if monitor_on == 1:
            n_viol = _monitor_check_nb(W, off, npart, gap_lb, gap_ub, t,
                                       viol_buf, n_viol)
        if time_mode:
            if hit_snap:
                snaps_t.append(t)
                snaps_w.append(W.copy())
                si += 1
        else:
            steps_since_snap += 1
            if steps_since_snap >= snap_stride:
                snaps_t.append(t)
                snaps_w.append(W.copy())
                steps_since_snap = 0

    if status == 0 and not time_mode and steps_since_snap > 0:
        snaps_t.append(t)
        snaps_w.append(W.copy())

    return (status, t, fail_sp, fail_idx, n_steps, n_rejects, n_viol,
            snaps_t, snaps_w)


# --------------------------------------------------------------------------
# python-level views of the compiled core
# --------------------------------------------------------------------------

@dataclass
class _Compiled:
    off: np.ndarray
    npart: np.ndarray
    sig_n: np.ndarray
    half_lam: np.ndarray
    alpha: np.ndarray
    phi_kind: np.ndarray
    gamma: np.ndarray
    pinned: np.ndarray
    kkind: np.ndarray
    kpar: np.ndarray
    comp_rate: np.ndarray


def _compile(spec: ModelSpec, state: ParticleState) -> _Compiled:
    nsp = len(spec.species)
    _, off, npart = state.flat()
    half_lam = np.array([s.half_lambda_sq for s in spec.species])
    alpha = np.array([s.mobility.alpha for s in spec.species])
    phi_kind = np.array(
        [0 if s.nonlinearity.kind == "linear" else 1 for s in spec.species],
        dtype=np.int64)
    gamma = np.array([s.nonlinearity.gamma or 1.0 for s in spec.species])
    pinned = np.array([0 if s.is_troll else 1 for s in spec.species],
                      dtype=np.int64)
    kkind = np.zeros((nsp, nsp), dtype=np.int64)
    kpar = np.zeros((nsp, nsp))
    for a, u in enumerate(spec.tags):
        for b, h in enumerate(spec.tags):
            k = spec.kernel(u, h)
            kkind[a, b] = 0 if k.is_zero else KERNEL_CODES[k.kind]
            kpar[a, b] = k.c
    comp_rate = np.zeros(nsp)
    for a, u in enumerate(spec.tags):
        for b, h in enumerate(spec.tags):
            kc = spec.kernel(u, h).constants
            comp_rate[a] += state.sigma_n[b] * npart[b] * (kc.sup + 2.0 * kc.lip)
    return _Compiled(off, npart, state.sigma_n.copy(), half_lam, alpha,
                     phi_kind, gamma, pinned, kkind, kpar, comp_rate)


def diffusive_velocity(i: int, state: ParticleState,
                       species: SpeciesSpec) -> float:
    """Osmotic velocity of interior particle i of one species."""
    s = state.index(species.tag)
    w = state.positions[s]
    if not 1 <= i <= w.size - 2:
        raise IndexError("boundary particles are pinned; need 1 <= i <= N-1")
    u = local_densities(w, float(state.sigma_n[s]))
    nl = species.nonlinearity
    d2 = eval_mobility_sq(w[i], species.mobility)
    return (species.half_lambda_sq / state.sigma_n[s] * d2
            * (eval_nonlinearity(u[i - 1], nl) - eval_nonlinearity(u[i], nl)))


def compromise_velocity(i: int, state: ParticleState, spec: ModelSpec,
                        tag: str) -> float:
    """Kernel-weighted attraction of particle i of species ``tag`` toward all
    particles of all interacting species."""
    s = state.index(tag)
    wi = state.positions[s][i]
    total = 0.0
    for h, other in enumerate(state.tags):
        k = spec.kernel(tag, other)
        if k.is_zero:
            continue
        hpos = state.positions[h]
        total -= state.sigma_n[h] * float(
            np.sum(eval_kernel(k, wi, hpos) * (wi - hpos)))
    return total


def rhs(state: ParticleState, spec: ModelSpec) -> list[np.ndarray]:
    """Velocities of all particles of all species (pinned endpoints get 0)."""
    comp = _compile(spec, state)
    w, off, npart = state.flat()
    out = np.empty_like(w)
    _rhs_nb(w, out, np.empty_like(w), comp.off, comp.npart, comp.sig_n,
            comp.half_lam, comp.alpha, comp.phi_kind, comp.gamma,
            comp.pinned, comp.kkind, comp.kpar)
    return [out[o:o + n].copy() for o, n in zip(off, npart)]


def step(state: ParticleState, dt: float, cfg: IntegratorConfig,
         spec: ModelSpec) -> ParticleState:
    """Advance one accepted step of at most ``dt``.

    If the step breaks the particle ordering it is rejected and dt halved,
    up to ``MAX_HALVINGS`` times; exhausting the retries raises
    ``IntegrationError``.  The returned state carries the advanced time.
    """
    comp = _compile(spec, state)
    w, off, npart = state.flat()
    n = w.size
    bufs = [np.empty(n) for _ in range(7)]
    scheme = 0 if cfg.scheme == "euler" else 1
    dt_eff = dt
    for _ in range(MAX_HALVINGS + 1):
        code = _try_step_nb(w, dt_eff, scheme, bufs[0], bufs[1], bufs[2],
                            bufs[3], bufs[4], bufs[5], bufs[6], comp.off,
                            comp.npart, comp.sig_n, comp.half_lam,
                            comp.alpha, comp.phi_kind, comp.gamma,
                            comp.pinned, comp.kkind, comp.kpar)
        if code == 0:
            wout = bufs[5]
            parts = [wout[o:o + m].copy() for o, m in zip(off, npart)]
            return ParticleState(state.tags, parts, state.sigma_n.copy(),
                                 state.t + dt_eff)
        dt_eff *= 0.5
    sp, idx = _first_bad_nb(bufs[5], comp.off, comp.npart)
    reason = "non-finite velocity" if code == 2 else "ordering violation"
    raise IntegrationError(
        f"{reason} persisted after {MAX_HALVINGS} halvings",
        t=state.t, species=state.tags[sp] if sp >= 0 else None,
        index=idx if idx >= 0 else None)


def run(spec: ModelSpec, n_cells, cfg: IntegratorConfig,
        monitor: SpacingMonitor | None = None,
        snapshot_times=None, check: bool = True) -> Trajectory:
    """Atomize, integrate to ``cfg.t_final`` and record snapshots.

    Snapshots are taken every ``cfg.snapshot_stride`` accepted steps, or at
    the exact times in ``snapshot_times`` when given (the step size is
    clipped to land on them).  A ``SpacingMonitor`` logs every spacing-bound
    violation; the run continues regardless.
    """
    if check:
        report = validate(spec)
        if report:
            msg = "; ".join(str(v) for v in report)
            raise ValueError(f"model fails validation: {msg}")
    state = initialize(spec, n_cells)
    comp = _compile(spec, state)
    w0, off, npart = state.flat()

    nsp = len(spec.species)
    gap_lb = np.zeros(nsp)
    gap_ub = np.full(nsp, np.inf)
    monitor_on = 0
    if monitor is not None:
        for a, s in enumerate(spec.species):
            c = monitor.rate[s.tag]
            bound = compromise_rate_bound(spec, s.tag)
            if not c > bound:
                raise ValueError(
                    f"monitor rate {c} for {s.tag!r} must exceed the"
                    f" compromise rate bound {bound}")
            m_lo, m_hi = monitor.density_bounds[s.tag]
            gap_lb[a] = state.sigma_n[a] / m_hi * math.exp(-c * cfg.t_final)
            with np.errstate(over="ignore", divide="ignore"):
                gap_ub[a] = state.sigma_n[a] / m_lo * math.exp(c * cfg.t_final)
        monitor_on = 1
    viol_buf = np.zeros((1024, 4))

    if snapshot_times is not None:
        st = np.asarray(snapshot_times, dtype=float)
        st = np.unique(st[(st > 0) & (st <= cfg.t_final)])
        if st.size == 0 or st[-1] < cfg.t_final - 1e-12 * cfg.t_final:
            st = np.append(st, cfg.t_final)
    else:
        st = np.empty(0)

    if isinstance(cfg.dt_policy, FixedDt):
        fixed_dt, c_cfl = cfg.dt_policy.dt, 0.0
    else:
        fixed_dt, c_cfl = 0.0, cfg.dt_policy.c_cfl

    (status, t_end, fail_sp, fail_idx, n_steps, n_rejects, n_viol, snaps_t,
     snaps_w) = _run_loop_nb(
        w0, comp.off, comp.npart, comp.sig_n, comp.half_lam, comp.alpha,
        comp.phi_kind, comp.gamma, comp.pinned, comp.kkind, comp.kpar,
        comp.comp_rate, 0 if cfg.scheme == "euler" else 1, fixed_dt, c_cfl,
        cfg.t_final, cfg.snapshot_stride, st, gap_lb, gap_ub, monitor_on,
        viol_buf)

    if status != 0:
        reason = ("non-finite velocity" if status == 2
                  else "ordering violation")
        raise IntegrationError(
            f"{reason} persisted after {MAX_HALVINGS} halvings at t={t_end}",
            t=t_end, species=spec.tags[fail_sp] if fail_sp >= 0 else None,
            index=fail_idx if fail_idx >= 0 else None)

    side = {0.0: "lower", 1.0: "upper"}
    logged = [(float(r[0]), spec.tags[int(r[1])], int(r[2]), side[r[3]])
              for r in viol_buf[:min(n_viol, viol_buf.shape[0])]]
    if monitor is not None:
        monitor.violations.extend(logged)

    return Trajectory(
        tags=spec.tags, sigma_n=state.sigma_n.copy(), offsets=off,
        counts=npart, times=np.array([t for t in snaps_t]),
        snapshots=[np.asarray(s) for s in snaps_w],
        n_steps=n_steps, n_rejected=n_rejects, violations=logged,
        violation_count=n_viol, t_final=cfg.t_final)
