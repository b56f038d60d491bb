"""Deterministic particle simulation of opinion formation with diffusion and
nonlocal compromise, for single and multi-species (followers, leaders,
trolls) models, with analytic stationary states and transport-metric
diagnostics."""

from .model import (OpinionInterval, OPINIONS, Mobility,
                    DiffusionNonlinearity, CompromiseKernel, InitialDensity,
                    SpeciesSpec, ModelSpec, Violation, eval_mobility_sq,
                    eval_nonlinearity, eval_kernel, compromise_rate_bound,
                    validate)
from .engine import (ParticleState, FixedDt, AdaptiveSpacing,
                     IntegratorConfig, SpacingMonitor, Trajectory, atomize,
                     local_densities, initialize, diffusive_velocity,
                     compromise_velocity, rhs, step, run)
from .analysis import (PiecewiseConstantDensity, PseudoInverse, reconstruct,
                       pseudo_inverse, wasserstein1, total_variation, moment,
                       variance)
from .stationary import (StationaryParams, StationaryProfile,
                         drift_potential, stationary_linear,
                         stationary_porous, mean_opinion_decay_rate,
                         moment_hierarchy_rhs, as_piecewise_constant)
from .scenarios import (Scenario, RunRecord, PRESET_NAMES, preset,
                        load_config, save_config, serialize_config,
                        write_run)

__version__ = "0.1.0"
