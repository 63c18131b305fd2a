"""smallmass: the zero-mass limit of distribution-dependent Langevin
dynamics under fast stationary mixing forcing.

The package simulates the second-order N-particle system with its
law-averaged fast forcing, simulates the limiting distribution-dependent
SDE under pluggable diffusion normalizations, and quantifies the
convergence in distribution through exact and sliced Wasserstein-2
distances plus moment, decay and increment diagnostics.
"""

from ._version import __version__
from .core import (EmpiricalMeasure, ParticleEnsemble, PotentialSpec,
                   RunConfig, empirical_mean, grad_v, probe_lipschitz)
from .dynamics_eps import EpsScheme, InitialLaw, StepReport, simulate_eps, step
from .dynamics_limit import (DiffusionSpec, LimitScheme, build_diffusion,
                             simulate_limit, step_em)
from .errors import ConfigError, NumericError, UsageError
from .noise import (DriverState, MixingMetadata, NoiseModel, advance,
                    averaged_forcing, eval_field, init_stationary,
                    mixing_metadata, sigma_matrix)
from .transport import W2Result, w2_1d, w2_assignment, w2_auto, w2_sliced

__all__ = [
    "ConfigError",
    "DiffusionSpec",
    "DriverState",
    "EmpiricalMeasure",
    "EpsScheme",
    "InitialLaw",
    "LimitScheme",
    "MixingMetadata",
    "NoiseModel",
    "NumericError",
    "ParticleEnsemble",
    "PotentialSpec",
    "RunConfig",
    "StepReport",
    "UsageError",
    "W2Result",
    "__version__",
    "advance",
    "averaged_forcing",
    "build_diffusion",
    "empirical_mean",
    "eval_field",
    "grad_v",
    "init_stationary",
    "mixing_metadata",
    "probe_lipschitz",
    "sigma_matrix",
    "simulate_eps",
    "simulate_limit",
    "step",
    "step_em",
    "w2_1d",
    "w2_assignment",
    "w2_auto",
    "w2_sliced",
]
