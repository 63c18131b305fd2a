"""The limiting distribution-dependent SDE and its particle discretization.

The zero-mass limit of the fast-forced system is the first-order equation

    dx = -(1/alpha) * grad_v(x, mu_t) dt + sqrt(D_eff) dB,

simulated as an N-particle Euler-Maruyama system with synchronous
mean-field coupling (the law in the drift is the same-step empirical
measure).  ``D_eff`` is the per-unit-time covariance of the limit noise;
the division by alpha is already absorbed into it.

Two sources for D_eff are supported besides an explicit matrix:

* ``paper`` mode divides the stationary forcing covariance by the product
  of alpha^2 and the envelope decay rate at lag zero:
  D_eff = Sigma / (alpha^2 * beta);
* ``green-kubo`` mode uses the measured effective diffusion of the
  integrated forcing: D_eff = G / alpha^2 with
  G = 2 * integral of the stationary forcing autocovariance.

For an exponentially correlated driver the two differ by a factor of two;
the convergence study reports the transport distance under both so the
normalization is settled by measurement rather than by assumption.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .core import ParticleEnsemble, PotentialSpec, RunConfig, pairwise_mean
from .dynamics_eps import InitialLaw
from .errors import NumericError, UsageError
from .noise import NoiseModel, mixing_metadata, sigma_matrix

__all__ = [
    "DiffusionSpec",
    "LimitScheme",
    "build_diffusion",
    "default_limit_scheme",
    "run_limit_replicas",
    "simulate_limit",
    "step_em",
]

_SYM_TOL = 1e-12
_EIG_CLAMP = -1e-12


@dataclass(frozen=True)
class DiffusionSpec:
    """Limit-noise covariance per unit time, with its provenance mode."""

    mode: str  # paper | green-kubo | explicit
    matrix: np.ndarray  # (d, d), symmetric PSD

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if m.shape[0] != m.shape[1]:
            raise UsageError(f"diffusion matrix must be square, got {m.shape}")
        scale = max(1.0, float(np.max(np.abs(m))))
        if np.max(np.abs(m - m.T)) > _SYM_TOL * scale:
            raise UsageError("diffusion matrix is not symmetric")
        m = 0.5 * (m + m.T)
        w, v = np.linalg.eigh(m)
        if np.min(w) < _EIG_CLAMP * scale:
            raise UsageError(f"diffusion matrix has negative eigenvalue {np.min(w):g}")
        w = np.clip(w, 0.0, None)
        object.__setattr__(self, "matrix", (v * w) @ v.T)
        object.__setattr__(self, "_sqrt", (v * np.sqrt(w)) @ v.T)

    @property
    def sqrt(self) -> np.ndarray:
        """Symmetric square root S with S @ S.T = matrix."""
        return self._sqrt

    @property
    def d(self) -> int:
        return self.matrix.shape[0]


def build_diffusion(mode: str, model: NoiseModel | None = None, m=None,
                    gk_estimate=None, alpha: float = 1.0,
                    explicit=None) -> DiffusionSpec:
    """Assemble the limit diffusion matrix for the requested mode."""
    if alpha <= 0.0:
        raise UsageError("alpha must be > 0")
    if mode == "paper":
        if model is None:
            raise UsageError("paper mode needs a noise model")
        meta = mixing_metadata(model)
        sig = sigma_matrix(model, m)
        return DiffusionSpec(mode=mode, matrix=sig / (alpha**2 * meta.beta))
    if mode == "green-kubo":
        if gk_estimate is None:
            raise UsageError("green-kubo mode needs a G estimate from the diagnostics")
        g = np.atleast_2d(np.asarray(gk_estimate, dtype=float))
        return DiffusionSpec(mode=mode, matrix=g / alpha**2)
    if mode == "explicit":
        if explicit is None:
            raise UsageError("explicit mode needs a matrix")
        return DiffusionSpec(mode=mode, matrix=np.atleast_2d(np.asarray(explicit, dtype=float)))
    raise UsageError(f"unknown diffusion mode: {mode!r}")


@dataclass(frozen=True)
class LimitScheme:
    """Euler-Maruyama step for the limit equation."""

    h: float

    def __post_init__(self):
        if self.h <= 0.0:
            raise UsageError("step must be > 0")

    def validate(self, alpha: float, pot: PotentialSpec):
        cap = 0.01 * alpha / max(pot.stiffness, 1e-300)
        if self.h > cap * (1.0 + 1e-12):
            raise UsageError(
                f"limit step h={self.h:g} exceeds 0.01*alpha/stiffness = {cap:g}"
            )


def default_limit_scheme(cfg: RunConfig, pot: PotentialSpec) -> LimitScheme:
    """Largest admissible step that divides the horizon evenly."""
    cap = 0.01 * cfg.alpha / max(pot.stiffness, 1e-300)
    n = max(1, math.ceil(cfg.T / cap - 1e-12))
    return LimitScheme(h=cfg.T / n)


def step_em(ens: ParticleEnsemble, pot: PotentialSpec, diff: DiffusionSpec,
            sch: LimitScheme, alpha: float, rng) -> ParticleEnsemble:
    """One Euler-Maruyama step of the interacting particle system."""
    if not ens.is_limit_mode:
        raise UsageError("step_em requires a limit-mode ensemble (no velocities)")
    X = ens.positions
    grad = _limit_drift(pot, X, ens)
    Z = rng.standard_normal(X.shape)
    X2 = X - (sch.h / alpha) * grad + math.sqrt(sch.h) * Z @ diff.sqrt.T
    out = ParticleEnsemble(positions=X2, velocities=None, time=ens.time + sch.h, eps=None)
    out.check_finite()
    return out


def _limit_drift(pot, X, ens=None):
    if pot.kind == "quadratic":
        return pot.lam * X
    if pot.kind == "curie-weiss":
        mean = pairwise_mean(X, axis=-2)
        return pot.lam * X + pot.kappa * (X - mean[..., None, :])
    from .core import grad_v_batch

    return grad_v_batch(pot, X, ens.measure())


def simulate_limit(cfg: RunConfig, pot: PotentialSpec, diff: DiffusionSpec,
                   init: InitialLaw | None = None, rng=None,
                   sch: LimitScheme | None = None) -> ParticleEnsemble:
    """Euler-Maruyama to the horizon; deterministic given the seed."""
    init = init or InitialLaw()
    if rng is None:
        rng = _rng.stream(cfg.seed, _rng.LIMIT_RUN, 0, 0)
    sch = sch or default_limit_scheme(cfg, pot)
    sch.validate(cfg.alpha, pot)
    X = init.draw_positions(cfg.N, cfg.d, rng)
    ens = ParticleEnsemble(positions=X, velocities=None, time=0.0, eps=None)
    n = max(1, int(round(cfg.T / sch.h)))
    for k in range(n):
        try:
            ens = step_em(ens, pot, diff, sch, cfg.alpha, rng)
        except NumericError as err:
            raise NumericError(str(err), step=k) from err
    return ens


def run_limit_replicas(cfg: RunConfig, pot: PotentialSpec, diff: DiffusionSpec,
                       init: InitialLaw, replica_ids, stream_path,
                       sch: LimitScheme | None = None) -> np.ndarray:
    """Terminal positions (R, N, d) over independent replicas."""
    sch = sch or default_limit_scheme(cfg, pot)
    out = np.empty((len(replica_ids), cfg.N, cfg.d))
    for i, r in enumerate(replica_ids):
        gen = _rng.stream(cfg.seed, *stream_path, r)
        try:
            ens = simulate_limit(cfg, pot, diff, init=init, rng=gen, sch=sch)
        except NumericError as err:
            raise NumericError(str(err), replica=r) from err
        out[i] = ens.positions
    return out
