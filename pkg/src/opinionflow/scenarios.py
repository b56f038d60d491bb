"""Scenario presets, a declarative configuration format, and run output.

Presets cover the standard experiments: three single-species initial data
(one, two and four Gaussian spikes, mass 0.6), a porous-medium variant,
follower/leader systems with equally strong or asymmetric leader groups,
and the same systems with a troll species attached to the right leaders.

The configuration format is flat INI-style text with ``[scenario]``,
``[species.<tag>]``, ``[kernels]`` and ``[integrator]`` sections; values use
``=`` only.  Unknown sections or keys are hard errors; omitted kernel pairs
default to the zero kernel with a warning.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis
from .engine import (AdaptiveSpacing, FixedDt, IntegratorConfig, Trajectory)
from .errors import ConfigError
from .model import (CompromiseKernel, DiffusionNonlinearity, InitialDensity,
                    Mobility, ModelSpec, SpeciesSpec, validate)

__all__ = [
    "Scenario", "RunRecord", "PRESET_NAMES", "preset", "load_config",
    "save_config", "serialize_config", "config_hash", "write_run",
]

DEFAULT_OUTPUTS = ("trajectories", "densities", "diagnostics")


@dataclass(frozen=True)
class Scenario:
    """A named, fully specified experiment."""

    name: str
    model: ModelSpec
    n_particles: int
    integrator: IntegratorConfig
    outputs: tuple[str, ...] = DEFAULT_OUTPUTS

    @property
    def t_final(self) -> float:
        return self.integrator.t_final


# --------------------------------------------------------------------------
# presets
# --------------------------------------------------------------------------

_STD = 0.05
_HALF_LAMBDA_SQ = 0.03   # lambda^2/2 for every preset species

INI1 = ((0.6, 0.0, _STD),)
INI2 = ((0.4, -0.75, _STD), (0.2, 0.5, _STD))
INI3 = ((0.2, -0.75, _STD), (0.1, -0.2, _STD), (0.1, 0.2, _STD),
        (0.2, 0.75, _STD))


def _single_species(components, nonlinearity) -> ModelSpec:
    f = SpeciesSpec(
        tag="f", sigma=0.6, half_lambda_sq=_HALF_LAMBDA_SQ,
        mobility=Mobility(1.0), nonlinearity=nonlinearity,
        initial_density=InitialDensity.mixture(components))
    return ModelSpec((f,), {("f", "f"): CompromiseKernel("constant")})


def _leader_system(sigma_r: float, with_trolls: bool) -> ModelSpec:
    linear = DiffusionNonlinearity.linear()
    species = [
        SpeciesSpec("f", 1.0, _HALF_LAMBDA_SQ, Mobility(1.0), linear,
                    InitialDensity.mixture(((1.0, 0.0, 0.3),))),
        SpeciesSpec("l", 0.6, _HALF_LAMBDA_SQ, Mobility(1.0), linear,
                    InitialDensity.mixture(((0.6, -0.5, _STD),))),
        SpeciesSpec("r", sigma_r, _HALF_LAMBDA_SQ, Mobility(1.0), linear,
                    InitialDensity.mixture(((sigma_r, 0.5, _STD),))),
    ]
    kernels = {
        ("f", "f"): CompromiseKernel("constant"),
        ("l", "l"): CompromiseKernel("constant"),
        ("r", "r"): CompromiseKernel("constant"),
        ("f", "l"): CompromiseKernel("one_minus_w_sq"),
        ("f", "r"): CompromiseKernel("one_minus_w_sq"),
        ("l", "r"): CompromiseKernel("scaled_one_minus_w_sq", 0.001),
        ("r", "l"): CompromiseKernel("scaled_one_minus_w_sq", 0.001),
    }
    if with_trolls:
        species.append(
            SpeciesSpec("q", 0.3, 0.0, Mobility(1.0), linear,
                        InitialDensity.mixture(((0.3, 0.3, 0.1),))))
        kernels[("f", "q")] = CompromiseKernel("constant")
        kernels[("q", "r")] = CompromiseKernel("quad_dist")
    return ModelSpec(tuple(species), kernels)


def _preset_models() -> dict[str, ModelSpec]:
    linear = DiffusionNonlinearity.linear()
    porous = DiffusionNonlinearity.power_law(2.0)
    return {
        "single-ini1": _single_species(INI1, linear),
        "single-ini2": _single_species(INI2, linear),
        "single-ini3": _single_species(INI3, linear),
        "single-porous": _single_species(INI1, porous),
        "fl-symmetric": _leader_system(0.6, with_trolls=False),
        "fl-asymmetric": _leader_system(0.2, with_trolls=False),
        "flt-symmetric": _leader_system(0.6, with_trolls=True),
        "flt-asymmetric": _leader_system(0.2, with_trolls=True),
    }


PRESET_NAMES = tuple(_preset_models())


def preset(name: str) -> Scenario:
    """A fully populated scenario for one of the standard experiments."""
    models = _preset_models()
    if name not in models:
        raise KeyError(f"unknown scenario {name!r}; choose from"
                       f" {', '.join(PRESET_NAMES)}")
    return Scenario(name=name, model=models[name], n_particles=200,
                    integrator=IntegratorConfig())


# --------------------------------------------------------------------------
# configuration files
# --------------------------------------------------------------------------

_SPECIES_KEYS = {"mass", "half_lambda_sq", "alpha", "nonlinearity", "gamma",
                 "initial", "floor"}
_SCENARIO_KEYS = {"name", "particles", "outputs"}
_INTEGRATOR_KEYS = {"scheme", "dt", "c_cfl", "t_final", "snapshot_stride"}


def _format_initial(density: InitialDensity) -> str:
    if density.kind == "uniform":
        return "uniform"
    if density.kind == "mixture":
        comps = " ".join(f"{w!r}:{c!r}:{s!r}" for w, c, s in density.components)
        return f"mixture {comps}"
    raise ConfigError("tabulated initial densities are not representable in"
                      " config files")


def _parse_initial(text: str, key: str) -> tuple[str, tuple]:
    tokens = text.split()
    if not tokens:
        raise ConfigError(f"{key}: empty initial density")
    kind = tokens[0]
    if kind == "uniform":
        if len(tokens) > 1:
            raise ConfigError(f"{key}: uniform takes no parameters")
        return "uniform", ()
    if kind == "mixture":
        if len(tokens) < 2:
            raise ConfigError(f"{key}: mixture needs weight:center:std"
                              " components")
        comps = []
        for tok in tokens[1:]:
            parts = tok.split(":")
            if len(parts) != 3:
                raise ConfigError(f"{key}: bad mixture component {tok!r}")
            try:
                comps.append(tuple(float(x) for x in parts))
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
        return "mixture", tuple(comps)
    raise ConfigError(f"{key}: unknown initial density kind {kind!r}")


def serialize_config(scenario: Scenario) -> str:
    """Canonical config text; ``load_config`` inverts it exactly."""
    out = io.StringIO()
    out.write("[scenario]\n")
    out.write(f"name = {scenario.name}\n")
    out.write(f"particles = {scenario.n_particles}\n")
    out.write(f"outputs = {' '.join(scenario.outputs)}\n\n")
    for s in scenario.model.species:
        out.write(f"[species.{s.tag}]\n")
        out.write(f"mass = {s.sigma!r}\n")
        out.write(f"half_lambda_sq = {s.half_lambda_sq!r}\n")
        out.write(f"alpha = {s.mobility.alpha!r}\n")
        out.write(f"nonlinearity = {s.nonlinearity.kind}\n")
        if s.nonlinearity.kind == "powerlaw":
            out.write(f"gamma = {s.nonlinearity.gamma!r}\n")
        out.write(f"initial = {_format_initial(s.initial_density)}\n")
        out.write(f"floor = {s.initial_density.floor!r}\n\n")
    out.write("[kernels]\n")
    for u in scenario.model.tags:
        for h in scenario.model.tags:
            k = scenario.model.kernel(u, h)
            if k.kind == "scaled_one_minus_w_sq":
                out.write(f"{u},{h} = {k.kind}:{k.c!r}\n")
            else:
                out.write(f"{u},{h} = {k.kind}\n")
    out.write("\n[integrator]\n")
    cfg = scenario.integrator
    out.write(f"scheme = {cfg.scheme}\n")
    if isinstance(cfg.dt_policy, FixedDt):
        out.write(f"dt = {cfg.dt_policy.dt!r}\n")
    else:
        out.write(f"c_cfl = {cfg.dt_policy.c_cfl!r}\n")
    out.write(f"t_final = {cfg.t_final!r}\n")
    out.write(f"snapshot_stride = {cfg.snapshot_stride}\n")
    return out.getvalue()


def save_config(scenario: Scenario, path) -> None:
    Path(path).write_text(serialize_config(scenario), encoding="utf-8",
                          newline="\n")


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def _parse_kernel(value: str, key: str) -> CompromiseKernel:
    kind, _, par = value.partition(":")
    kind = kind.strip()
    if par:
        if kind != "scaled_one_minus_w_sq":
            raise ConfigError(f"{key}: kernel kind {kind!r} takes no parameter")
        try:
            return CompromiseKernel(kind, float(par))
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    try:
        return CompromiseKernel(kind)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _get_float(section, key: str, default=None) -> float:
    if key not in section:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return float(section[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def load_config(path) -> Scenario:
    """Parse and validate a scenario configuration file.

    Raises ``ConfigError`` on syntax errors, unknown keys, or model
    assumption violations (the report rides on the exception).
    """
    cp = configparser.ConfigParser(delimiters=("=",), interpolation=None)
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"parse error: {exc}") from None

    if "scenario" not in cp:
        raise ConfigError("missing [scenario] section")
    sc = cp["scenario"]
    for key in sc:
        if key not in _SCENARIO_KEYS:
            raise ConfigError(f"unknown key {key!r} in [scenario]")
    name = sc.get("name", Path(path).stem)
    n_particles = int(_get_float(sc, "particles", 200))
    outputs = tuple(sc["outputs"].split()) if "outputs" in sc \
        else DEFAULT_OUTPUTS
    for o in outputs:
        if o not in DEFAULT_OUTPUTS:
            raise ConfigError(f"unknown output kind {o!r}")

    species = []
    for section in cp.sections():
        if section in ("scenario", "kernels", "integrator"):
            continue
        if not section.startswith("species."):
            raise ConfigError(f"unknown section [{section}]")
        tag = section[len("species."):]
        body = cp[section]
        for key in body:
            if key not in _SPECIES_KEYS:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
        if "initial" not in body:
            raise ConfigError(f"[{section}] needs an initial density")
        kind, comps = _parse_initial(body["initial"], f"[{section}] initial")
        floor = _get_float(body, "floor", 0.0)
        if kind == "uniform":
            density = InitialDensity.uniform(floor)
        else:
            density = InitialDensity.mixture(comps, floor)
        nl_kind = body.get("nonlinearity", "linear")
        if nl_kind == "linear":
            if "gamma" in body:
                raise ConfigError(f"[{section}]: gamma is only valid for"
                                  " powerlaw nonlinearity")
            nl = DiffusionNonlinearity.linear()
        elif nl_kind == "powerlaw":
            nl = DiffusionNonlinearity.power_law(_get_float(body, "gamma"))
        else:
            raise ConfigError(f"[{section}]: unknown nonlinearity {nl_kind!r}")
        try:
            species.append(SpeciesSpec(
                tag=tag, sigma=_get_float(body, "mass"),
                half_lambda_sq=_get_float(body, "half_lambda_sq", 0.0),
                mobility=Mobility(_get_float(body, "alpha", 1.0)),
                nonlinearity=nl, initial_density=density))
        except ValueError as exc:
            raise ConfigError(f"[{section}]: {exc}") from None
    if not species:
        raise ConfigError("no [species.<tag>] sections")
    tags = [s.tag for s in species]

    kernels = {}
    if "kernels" in cp:
        for key, value in cp["kernels"].items():
            parts = [p.strip() for p in key.split(",")]
            if len(parts) != 2:
                raise ConfigError(f"kernel key {key!r} must be 'u,h'")
            u, h = parts
            if u not in tags or h not in tags:
                raise ConfigError(f"kernel key {key!r} names unknown species")
            kernels[(u, h)] = _parse_kernel(value.strip(), key)
    missing = [(u, h) for u in tags for h in tags if (u, h) not in kernels]
    if missing:
        warnings.warn(
            f"{len(missing)} kernel entr{'y' if len(missing) == 1 else 'ies'}"
            f" omitted; defaulting to zero: "
            + " ".join(f"{u},{h}" for u, h in missing), stacklevel=2)

    scheme, t_final, stride = "rk4", 2.0, 200
    policy = AdaptiveSpacing()
    if "integrator" in cp:
        body = cp["integrator"]
        for key in body:
            if key not in _INTEGRATOR_KEYS:
                raise ConfigError(f"unknown key {key!r} in [integrator]")
        scheme = body.get("scheme", "rk4")
        t_final = _get_float(body, "t_final", 2.0)
        stride = int(_get_float(body, "snapshot_stride", 200))
        if "dt" in body and "c_cfl" in body:
            raise ConfigError("[integrator] takes dt or c_cfl, not both")
        if "dt" in body:
            policy = FixedDt(_get_float(body, "dt"))
        elif "c_cfl" in body:
            policy = AdaptiveSpacing(_get_float(body, "c_cfl"))
    try:
        integrator = IntegratorConfig(scheme=scheme, dt_policy=policy,
                                      t_final=t_final, snapshot_stride=stride)
        model = ModelSpec(tuple(species),
                          {k: v for k, v in kernels.items()
                           if not v.is_zero})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    report = validate(model)
    if report:
        raise ConfigError(
            "configuration violates model assumptions: "
            + "; ".join(str(v) for v in report), violations=report)
    return Scenario(name=name, model=model, n_particles=n_particles,
                    integrator=integrator, outputs=outputs)


# --------------------------------------------------------------------------
# run records and serialization
# --------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.17g}"


@dataclass
class RunRecord:
    """Everything one run produced, ready for serialization."""

    scenario: str
    config_hash: str
    config_text: str
    species: tuple[str, ...]
    times: np.ndarray
    positions: dict[str, list[np.ndarray]]
    densities: dict[str, list[analysis.PiecewiseConstantDensity]]
    diagnostics: dict[str, dict[str, np.ndarray]]
    n_steps: int = 0
    n_rejected: int = 0
    violation_count: int = 0

    def __post_init__(self):
        if self.times.size and np.any(np.diff(self.times) <= 0):
            raise ValueError("snapshot times must be strictly increasing")

    @classmethod
    def from_trajectory(cls, scenario: Scenario, traj: Trajectory,
                        w1_targets: dict | None = None) -> "RunRecord":
        text = serialize_config(scenario)
        positions: dict[str, list[np.ndarray]] = {t: [] for t in traj.tags}
        densities: dict[str, list] = {t: [] for t in traj.tags}
        diagnostics = {t: {"m1": [], "var": [], "tv": [], "w1_to_target": []}
                       for t in traj.tags}
        for k in range(len(traj)):
            state = traj.state_at(k)
            for tag in traj.tags:
                rho = analysis.reconstruct(state, tag)
                positions[tag].append(state.positions[state.index(tag)])
                densities[tag].append(rho)
                diag = diagnostics[tag]
                diag["m1"].append(analysis.moment(rho, 1))
                diag["var"].append(analysis.variance(rho))
                diag["tv"].append(analysis.total_variation(rho))
                target = (w1_targets or {}).get(tag)
                diag["w1_to_target"].append(
                    analysis.wasserstein1(rho, target) if target is not None
                    else float("nan"))
        for tag in traj.tags:
            diagnostics[tag] = {k: np.asarray(v)
                                for k, v in diagnostics[tag].items()}
        return cls(
            scenario=scenario.name, config_hash=config_hash(text),
            config_text=text, species=traj.tags, times=traj.times.copy(),
            positions=positions, densities=densities,
            diagnostics=diagnostics, n_steps=traj.n_steps,
            n_rejected=traj.n_rejected, violation_count=traj.violation_count)


def write_run(record: RunRecord, out_dir,
              outputs: tuple[str, ...] = DEFAULT_OUTPUTS) -> list[Path]:
    """Write a run to CSV files plus a JSON metadata echo.

    Emits ``trajectories_<tag>.csv`` (t,i,W), ``density_<tag>_<k>.csv`` per
    snapshot (w_left,w_right,u), ``diagnostics.csv`` and ``run.json``.  All
    floats carry 17 significant digits; identical records produce
    byte-identical files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    if "trajectories" in outputs:
        for tag in record.species:
            path = out / f"trajectories_{tag}.csv"
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write("t,i,W\n")
                for t, w in zip(record.times, record.positions[tag]):
                    ts = _fmt(t)
                    for i, x in enumerate(w):
                        fh.write(f"{ts},{i},{_fmt(x)}\n")
            written.append(path)

    if "densities" in outputs:
        for tag in record.species:
            for k, rho in enumerate(record.densities[tag]):
                path = out / f"density_{tag}_{k}.csv"
                with open(path, "w", encoding="utf-8", newline="\n") as fh:
                    fh.write("w_left,w_right,u\n")
                    bp = rho.breakpoints
                    for j, u in enumerate(rho.values):
                        fh.write(f"{_fmt(bp[j])},{_fmt(bp[j + 1])},{_fmt(u)}\n")
                written.append(path)

    if "diagnostics" in outputs:
        path = out / "diagnostics.csv"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("t,species,m1,var,tv,w1_to_target\n")
            for k, t in enumerate(record.times):
                for tag in record.species:
                    d = record.diagnostics[tag]
                    fh.write(",".join([
                        _fmt(t), tag, _fmt(d["m1"][k]), _fmt(d["var"][k]),
                        _fmt(d["tv"][k]), _fmt(d["w1_to_target"][k])]) + "\n")
        written.append(path)

    meta = {
        "scenario": record.scenario,
        "config_hash": record.config_hash,
        "species": list(record.species),
        "snapshot_count": int(record.times.size),
        "n_steps": record.n_steps,
        "n_rejected": record.n_rejected,
        "violation_count": record.violation_count,
        "config": record.config_text,
    }
    path = out / "run.json"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(path)
    return written
