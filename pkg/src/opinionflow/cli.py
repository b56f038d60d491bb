"""Command-line driver.

Subcommands: ``run`` (integrate a scenario and write CSV outputs),
``compare-stationary`` (distance of the final density to the analytic
steady state), ``convergence-study`` (self-convergence across particle
counts), ``list-scenarios``, ``validate-config`` and ``emit-plots``.

Exit codes are the machine contract: 0 clean, 2 spacing-bound violations
were logged (outputs still written), 1 hard error.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, engine, scenarios, stationary
from .errors import ConfigError, OpinionFlowError

DEFAULT_SNAPSHOT_COUNT = 101


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("OPINIONFLOW_THREADS", "1")))
    except ValueError:
        return 1


def _resolve_scenario(args) -> scenarios.Scenario:
    if bool(args.scenario) == bool(args.config):
        raise ConfigError("give exactly one of --scenario or --config")
    if args.scenario:
        sc = scenarios.preset(args.scenario)
    else:
        sc = scenarios.load_config(args.config)

    cfg = sc.integrator
    if args.t_final is not None:
        cfg = replace(cfg, t_final=args.t_final)
    if args.dt is not None and args.cfl is not None:
        raise ConfigError("give at most one of --dt or --cfl")
    if args.dt is not None:
        cfg = replace(cfg, dt_policy=engine.FixedDt(args.dt))
    if args.cfl is not None:
        cfg = replace(cfg, dt_policy=engine.AdaptiveSpacing(args.cfl))
    if args.scheme is not None:
        cfg = replace(cfg, scheme=args.scheme)
    if getattr(args, "snapshot_every", None):
        cfg = replace(cfg, snapshot_stride=args.snapshot_every)
    sc = replace(sc, integrator=cfg)
    if args.particles is not None:
        sc = replace(sc, n_particles=args.particles)
    return sc


def _snapshot_times(sc: scenarios.Scenario, args) -> np.ndarray | None:
    # a stride given explicitly wins; otherwise snapshot on a uniform grid
    if getattr(args, "snapshot_every", None):
        return None
    return np.linspace(0.0, sc.t_final, DEFAULT_SNAPSHOT_COUNT)


def _monitored_run(sc: scenarios.Scenario, snapshot_times):
    monitor = engine.SpacingMonitor.for_model(sc.model)
    if not all(math.isfinite(c) for c in monitor.rate.values()):
        print("note: a kernel has no finite smoothness constants;"
              " spacing monitor disabled")
        monitor = None
    traj = engine.run(sc.model, sc.n_particles, sc.integrator,
                      monitor=monitor, snapshot_times=snapshot_times)
    return traj


def cmd_run(args) -> int:
    sc = _resolve_scenario(args)
    traj = _monitored_run(sc, _snapshot_times(sc, args))
    record = scenarios.RunRecord.from_trajectory(sc, traj)
    out = Path(args.out)
    scenarios.write_run(record, out, outputs=sc.outputs)
    print(f"{sc.name}: {traj.n_steps} steps ({traj.n_rejected} rejected),"
          f" {len(traj)} snapshots -> {out}")
    if traj.violation_count:
        print(f"spacing bounds violated {traj.violation_count} times;"
              " see run.json / diagnostics")
        return 2
    return 0


def _stationary_target(sc: scenarios.Scenario, which: str | None):
    species = sc.model.species[0]
    kind = which or ("porous" if species.nonlinearity.kind == "powerlaw"
                     else "linear")
    params = stationary.StationaryParams(
        alpha=species.mobility.alpha,
        lambda_sq=2.0 * species.half_lambda_sq,
        sigma=species.sigma, m1_inf=0.0,
        gamma=species.nonlinearity.gamma)
    if kind == "porous":
        return stationary.stationary_porous(params)
    return stationary.stationary_linear(params)


def cmd_compare_stationary(args) -> int:
    sc = _resolve_scenario(args)
    if len(sc.model.species) != 1:
        raise OpinionFlowError(
            "compare-stationary needs a single-species scenario; no"
            " closed-form target exists for coupled systems")
    tag = sc.model.tags[0]
    if sc.model.kernel(tag, tag).kind != "constant":
        raise OpinionFlowError(
            "compare-stationary needs the constant compromise kernel")

    profile = _stationary_target(sc, args.target)
    target = stationary.as_piecewise_constant(profile)
    traj = _monitored_run(sc, _snapshot_times(sc, args))

    w1 = np.array([analysis.wasserstein1(traj.density_at(k, tag), target)
                   for k in range(len(traj))])
    decreases = np.sum(np.diff(w1) <= 0)
    frac = decreases / max(1, w1.size - 1)

    m1 = np.array([analysis.moment(traj.density_at(k, tag), 1)
                   for k in range(len(traj))])
    half = len(traj) // 2
    rate_fit = float("nan")
    usable = np.abs(m1[half:]) > 1e-13
    if np.all(usable) and np.unique(traj.times[half:]).size > 2:
        slope, _ = np.polyfit(traj.times[half:], np.log(np.abs(m1[half:])), 1)
        rate_fit = -float(slope)
    rate_exact = stationary.mean_opinion_decay_rate(
        2.0 * sc.model.species[0].half_lambda_sq)

    print(f"{sc.name}: final W1 to target = {w1[-1]:.6g}"
          f" ({w1[-1] / sc.model.species[0].sigma:.4g} of the mass)")
    print(f"W1 series decreases on {frac:.1%} of snapshot steps")
    if math.isfinite(rate_fit):
        print(f"mean-opinion decay: fitted {rate_fit:.5g},"
              f" analytic {rate_exact:.5g}")
    else:
        print(f"mean-opinion decay: mean stays at zero"
              f" (analytic rate {rate_exact:.5g})")
    if profile.kind == "porous":
        print(f"target support: [{profile.support[0]:.6g},"
              f" {profile.support[1]:.6g}]")

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "stationary_comparison.csv", "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write("t,w1_to_target,m1\n")
            for t, d, m in zip(traj.times, w1, m1):
                fh.write(f"{t:.17g},{d:.17g},{m:.17g}\n")
        print(f"wrote {out / 'stationary_comparison.csv'}")
    return 0


def cmd_convergence_study(args) -> int:
    sc = _resolve_scenario(args)
    n_list = [int(x) for x in args.n_list.split(",")]
    if sorted(n_list) != n_list or len(n_list) < 2:
        raise OpinionFlowError("--n-list must be ascending with >= 2 entries")
    times = np.linspace(0.0, sc.t_final, 21)

    def one(n):
        return engine.run(sc.model, n, sc.integrator, snapshot_times=times)

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        runs = dict(zip(n_list, pool.map(one, n_list)))

    rows = []
    for n_lo, n_hi in zip(n_list[:-1], n_list[1:]):
        dist = 0.0
        for k in range(times.size):
            for tag in sc.model.tags:
                d = analysis.wasserstein1(runs[n_lo].density_at(k, tag),
                                          runs[n_hi].density_at(k, tag))
                dist = max(dist, d)
        rows.append((n_lo, n_hi, dist))

    print(f"{'N':>6} {'vs':>6} {'sup_t W1':>12} {'order':>7}")
    for i, (n_lo, n_hi, dist) in enumerate(rows):
        order = (math.log2(rows[i - 1][2] / dist) if i and dist > 0
                 else float("nan"))
        print(f"{n_lo:>6} {n_hi:>6} {dist:>12.5g} {order:>7.3g}")

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "convergence.csv", "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write("n_coarse,n_fine,sup_w1\n")
            for n_lo, n_hi, dist in rows:
                fh.write(f"{n_lo},{n_hi},{dist:.17g}\n")
        print(f"wrote {out / 'convergence.csv'}")
    return 0


def cmd_list_scenarios(_args) -> int:
    for name in scenarios.PRESET_NAMES:
        sc = scenarios.preset(name)
        masses = ", ".join(f"{s.tag}={s.sigma:g}" for s in sc.model.species)
        print(f"{name:16} {masses}")
    return 0


def cmd_validate_config(args) -> int:
    scenarios.load_config(args.config)
    print(f"{args.config}: valid")
    return 0


# --------------------------------------------------------------------------
# plots
# --------------------------------------------------------------------------

def _read_csv(path: Path) -> list[dict]:
    if not path.exists():
        raise OpinionFlowError(f"missing {path}")
    with open(path, encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def cmd_emit_plots(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    run_dir = Path(args.run_dir)
    meta_path = run_dir / "run.json"
    if not meta_path.exists():
        raise OpinionFlowError(f"{run_dir} does not look like a run directory"
                               " (no run.json)")
    import json
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    species = meta["species"]

    diag_rows = _read_csv(run_dir / "diagnostics.csv")
    emitted = []
    for tag in species:
        # density waterfall
        k = 0
        snapshots = []
        while (run_dir / f"density_{tag}_{k}.csv").exists():
            snapshots.append(_read_csv(run_dir / f"density_{tag}_{k}.csv"))
            k += 1
        if snapshots:
            keep = np.unique(np.linspace(0, len(snapshots) - 1,
                                         12).astype(int))
            fig, ax = plt.subplots(figsize=(7, 5))
            cmap = plt.get_cmap("viridis")
            for j, ki in enumerate(keep):
                rows = snapshots[ki]
                w = [float(r["w_left"]) for r in rows] \
                    + [float(rows[-1]["w_right"])]
                u = [float(r["u"]) for r in rows] + [float(rows[-1]["u"])]
                ax.step(w, u, where="post",
                        color=cmap(j / max(1, len(keep) - 1)), lw=1.0)
            ax.set_xlabel("opinion")
            ax.set_ylabel("density")
            ax.set_title(f"density evolution ({tag})")
            path = run_dir / f"plot_density_{tag}.svg"
            fig.savefig(path)
            plt.close(fig)
            emitted.append(path)

        # trajectories with mean-opinion overlay
        rows = _read_csv(run_dir / f"trajectories_{tag}.csv")
        if rows:
            ts = np.array([float(r["t"]) for r in rows])
            idx = np.array([int(r["i"]) for r in rows])
            ws = np.array([float(r["W"]) for r in rows])
            fig, ax = plt.subplots(figsize=(7, 5))
            for i in range(idx.max() + 1):
                sel = idx == i
                ax.plot(ts[sel], ws[sel], color="0.4", lw=0.4)
            dt_rows = [r for r in diag_rows if r["species"] == tag]
            m1 = np.array([float(r["m1"]) for r in dt_rows])
            if m1.size:
                td = np.array([float(r["t"]) for r in dt_rows])
                ax.plot(td, m1, "*-", color="magenta", ms=5, lw=0.8,
                        label="mean opinion")
                ax.legend(loc="best")
            ax.set_xlabel("t")
            ax.set_ylabel("opinion")
            ax.set_ylim(-1.05, 1.05)
            ax.set_title(f"opinion trajectories ({tag})")
            path = run_dir / f"plot_trajectories_{tag}.svg"
            fig.savefig(path)
            plt.close(fig)
            emitted.append(path)

    for p in emitted:
        print(f"wrote {p}")
    if not emitted:
        raise OpinionFlowError(f"no plottable CSV files in {run_dir}")
    return 0


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def _add_scenario_flags(p: argparse.ArgumentParser, with_stride=True):
    p.add_argument("--scenario", help="preset name (see list-scenarios)")
    p.add_argument("--config", help="path to a scenario config file")
    p.add_argument("--particles", type=int, help="particle cell count N")
    p.add_argument("--t-final", dest="t_final", type=float)
    p.add_argument("--dt", type=float, help="fixed time step")
    p.add_argument("--cfl", type=float, help="adaptive step CFL constant")
    p.add_argument("--scheme", choices=("euler", "rk4"))
    if with_stride:
        p.add_argument("--snapshot-every", dest="snapshot_every", type=int,
                       help="snapshot every k accepted steps (default:"
                            " uniform time grid)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="opinionflow",
        description="Deterministic particle simulator for opinion formation")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="integrate a scenario and write outputs")
    _add_scenario_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare-stationary",
                       help="distance of the final density to the analytic"
                            " steady state")
    _add_scenario_flags(p)
    p.add_argument("--target", choices=("linear", "porous"))
    p.add_argument("--out", help="optional output directory")
    p.set_defaults(func=cmd_compare_stationary)

    p = sub.add_parser("convergence-study",
                       help="self-convergence across particle counts")
    _add_scenario_flags(p, with_stride=False)
    p.add_argument("--n-list", dest="n_list", default="50,100,200,400,800",
                   help="ascending comma-separated particle counts")
    p.add_argument("--out", help="optional output directory")
    p.set_defaults(func=cmd_convergence_study)

    p = sub.add_parser("list-scenarios", help="list preset scenarios")
    p.set_defaults(func=cmd_list_scenarios)

    p = sub.add_parser("validate-config", help="parse and validate a config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate_config)

    p = sub.add_parser("emit-plots", help="render static plots from a run"
                                          " directory")
    p.add_argument("run_dir", help="directory written by `run`")
    p.set_defaults(func=cmd_emit_plots)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for v in exc.violations:
            print(f"  {v}", file=sys.stderr)
        return 1
    except OpinionFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
