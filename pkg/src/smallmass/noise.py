"""Stationary time-mixing random fields and their analytic mixing metadata.

The fast forcing is a stationary random field eta(s, x) driven by an
exactly updatable Gauss-Markov process: each driver component relaxes at
rate ``gamma`` (fast-time units) toward mean zero with stationary standard
deviation ``sigma``.  The declared mixing envelope is exp(-gamma * s),
which gives the closed-form metadata the rest of the toolkit consumes: the
integrated envelope K = 1/gamma, the decay rate beta = gamma at lag zero,
and the per-component stationary variance sigma^2.  The true strong-mixing
coefficient of the driver is dominated by a constant multiple of this
envelope; the envelope choice is recorded in every emitted report.

Three concrete field shapes are provided:

* ``scalar-ou``      eta(s, x) = xi(s), one independent driver component
                     per space dimension, no x dependence;
* ``separable``      eta(s, x) = xi(s) * g(x) with a bounded smooth scalar
                     profile g;
* ``fourier-field``  eta(s, x)_i = sum_k xi_{i,k}(s) (a_k cos(w_k . x)
                     + b_k sin(w_k . x)) with independent per-dimension,
                     per-mode drivers.

Gaussian drivers are unbounded, so the uniform field bounds hold in mean
rather than almost surely; set ``clip=True`` to truncate the driver at six
standard deviations when strict almost-sure boundedness is wanted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import rng as _rng
from .core import EmpiricalMeasure, pairwise_mean
from .errors import UsageError

__all__ = [
    "DriverState",
    "MixingMetadata",
    "NoiseModel",
    "advance",
    "averaged_forcing",
    "eval_field",
    "eval_field_points",
    "init_stationary",
    "mixing_metadata",
    "separable_profile",
    "sigma_matrix",
]

_CLIP_SDS = 6.0

# Named separable profiles, so configurations stay serializable and worker
# processes can rebuild models without shipping code objects around.
# Each entry: (callable on the last axis, |g| bound, |grad g| bound, |hess g| bound).
_PROFILES: dict[str, tuple[Callable[[np.ndarray], np.ndarray], float, float, float]] = {
    "one": (lambda x: np.ones(x.shape[:-1]), 1.0, 0.0, 0.0),
    "cos-sum": (lambda x: np.cos(np.sum(x, axis=-1)), 1.0, None, None),
    "clip-linear": (lambda x: np.clip(x[..., 0], -1.0, 1.0), 1.0, 1.0, 0.0),
    "gauss": (lambda x: np.exp(-0.5 * np.sum(x * x, axis=-1)), 1.0, 1.0, 2.0),
}


def separable_profile(name: str, d: int):
    """Resolve a named profile to (callable, bounds) for dimension ``d``."""
    try:
        fn, m0, m1, m2 = _PROFILES[name]
    except KeyError:
        raise UsageError(f"unknown separable profile {name!r}") from None
    if name == "cos-sum":
        m1, m2 = math.sqrt(d), float(d)
    return fn, (m0, m1, m2)


@dataclass(frozen=True)
class NoiseModel:
    """Parameters of one stationary mixing field."""

    kind: str
    d: int
    gamma: float
    sigma: float
    clip: bool = False
    g_name: str | None = None
    g: Callable[[np.ndarray], np.ndarray] | None = None
    g_bounds: tuple[float, float, float] | None = None
    omegas: np.ndarray | None = None  # (K, d)
    a: np.ndarray | None = None  # (K,)
    b: np.ndarray | None = None  # (K,)

    def __post_init__(self):
        if self.kind not in ("scalar-ou", "separable", "fourier-field"):
            raise UsageError(f"unknown noise kind: {self.kind!r}")
        if self.d < 1:
            raise UsageError("dimension must be >= 1")
        if self.gamma <= 0.0:
            raise UsageError("mixing rate gamma must be > 0 (K = 1/gamma must be finite)")
        if self.sigma < 0.0:
            raise UsageError("driver amplitude sigma must be >= 0")
        if self.kind == "separable":
            if self.g is None:
                if self.g_name is None:
                    raise UsageError("separable models need g or g_name")
                fn, bounds = separable_profile(self.g_name, self.d)
                object.__setattr__(self, "g", fn)
                object.__setattr__(self, "g_bounds", bounds)
            elif self.g_bounds is None:
                raise UsageError("separable models with a custom g need g_bounds")
        if self.kind == "fourier-field":
            if self.omegas is None or self.a is None or self.b is None:
                raise UsageError("fourier-field needs omegas, a and b")
            om = np.atleast_2d(np.asarray(self.omegas, dtype=float))
            a = np.atleast_1d(np.asarray(self.a, dtype=float))
            b = np.atleast_1d(np.asarray(self.b, dtype=float))
            if om.shape[1] != self.d or a.shape != b.shape or a.shape[0] != om.shape[0]:
                raise UsageError("fourier-field needs omegas (K, d) and a, b of length K")
            object.__setattr__(self, "omegas", om)
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", b)

    @classmethod
    def scalar_ou(cls, d: int, gamma: float, sigma: float, clip: bool = False):
        return cls(kind="scalar-ou", d=d, gamma=gamma, sigma=sigma, clip=clip)

    @classmethod
    def separable(cls, d, gamma, sigma, g_name=None, g=None, g_bounds=None, clip=False):
        return cls(kind="separable", d=d, gamma=gamma, sigma=sigma, clip=clip,
                   g_name=g_name, g=g, g_bounds=g_bounds)

    @classmethod
    def fourier_field(cls, d, gamma, sigma, omegas, a, b, clip=False):
        return cls(kind="fourier-field", d=d, gamma=gamma, sigma=sigma, clip=clip,
                   omegas=omegas, a=a, b=b)

    @property
    def driver_shape(self) -> tuple[int, ...]:
        if self.kind == "fourier-field":
            return (self.d, self.omegas.shape[0])
        return (self.d,)

    def field_scales(self) -> dict[str, float]:
        """Analytic amplitude envelopes for the field and its derivatives.

        Values are per-unit-driver scales: multiply by the realized driver
        magnitude (about sigma in mean, at most 6 sigma when clipped) to
        bound the field, its space gradient and its space Hessian.
        """
        if self.kind == "scalar-ou":
            return {"field": 1.0, "dx": 0.0, "dxx": 0.0}
        if self.kind == "separable":
            m0, m1, m2 = self.g_bounds
            return {"field": m0, "dx": m1, "dxx": m2}
        amp = float(np.sum(np.abs(self.a) + np.abs(self.b)))
        omega_max = float(np.max(np.linalg.norm(self.omegas, axis=1))) if self.omegas.size else 0.0
        return {"field": amp, "dx": amp * omega_max, "dxx": amp * omega_max**2}


@dataclass(frozen=True)
class MixingMetadata:
    """Closed-form mixing data of the exponential envelope."""

    gamma: float
    K: float
    beta: float
    sigma_sq: float

    def envelope(self, s):
        return np.exp(-self.gamma * np.asarray(s, dtype=float))


def mixing_metadata(model: NoiseModel) -> MixingMetadata:
    g = model.gamma
    return MixingMetadata(gamma=g, K=1.0 / g, beta=g, sigma_sq=model.sigma**2)


@dataclass(frozen=True)
class DriverState:
    """Current driver values and the fast clock."""

    xi: np.ndarray
    fast_time: float

    def __post_init__(self):
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float))
        if self.fast_time < 0.0:
            raise UsageError("fast time must be nonnegative")


def init_stationary(model: NoiseModel, seed_or_rng) -> DriverState:
    """Draw the driver from its stationary marginal N(0, sigma^2)."""
    gen = _as_generator(seed_or_rng)
    return DriverState(xi=stationary_xi(model, gen), fast_time=0.0)


def stationary_xi(model: NoiseModel, rng) -> np.ndarray:
    """One stationary driver draw (clipped when the model asks for it)."""
    xi = model.sigma * rng.standard_normal(model.driver_shape)
    return _clip(xi, model) if model.clip else xi


def advance(state: DriverState, model: NoiseModel, delta_s: float, rng) -> DriverState:
    """Exact one-step update of the Gauss-Markov driver over fast lag delta_s."""
    if delta_s < 0.0:
        raise UsageError("cannot advance the driver backwards")
    if delta_s == 0.0:
        return state
    z = rng.standard_normal(state.xi.shape)
    xi = advance_xi(state.xi, model, delta_s, z)
    return DriverState(xi=xi, fast_time=state.fast_time + delta_s)


def advance_xi(xi: np.ndarray, model: NoiseModel, delta_s: float, z: np.ndarray) -> np.ndarray:
    """Array form of the exact update; ``xi`` may carry leading batch axes."""
    r = math.exp(-model.gamma * delta_s)
    out = xi * r + model.sigma * math.sqrt(max(0.0, 1.0 - r * r)) * z
    if model.clip:
        out = _clip(out, model)
    return out


def _clip(xi, model):
    bound = _CLIP_SDS * model.sigma
    return np.clip(xi, -bound, bound)


def eval_field(model: NoiseModel, state: DriverState, x) -> np.ndarray:
    """Field value at one point; returns a d-vector."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape[-1] != model.d:
        raise UsageError(f"dimension mismatch: point d={x.shape[-1]}, model d={model.d}")
    return eval_field_points(model, state.xi, x[None, :])[0]


def eval_field_points(model: NoiseModel, xi: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Field values at ``points`` (..., n, d) for driver values ``xi``.

    Leading batch axes of ``xi`` broadcast against those of ``points``.
    """
    if model.kind == "scalar-ou":
        return np.broadcast_to(
            xi[..., None, :], points.shape[:-2] + (points.shape[-2], model.d)
        )
    if model.kind == "separable":
        gvals = model.g(points)  # (..., n)
        return xi[..., None, :] * gvals[..., :, None]
    phase = points @ model.omegas.T  # (..., n, K)
    basis = model.a * np.cos(phase) + model.b * np.sin(phase)
    return np.einsum("...nk,...dk->...nd", basis, xi)


def averaged_forcing(model: NoiseModel, state: DriverState, m: EmpiricalMeasure) -> np.ndarray:
    """Mean of the field over the points of ``m``.

    This realizes the law-averaged forcing applied identically to every
    particle: the common-noise reading of the fluctuating term, with the
    expectation over the state taken as the empirical average over the
    ensemble sharing one driver path.
    """
    if m.n < 1:
        raise UsageError("empty measure")
    return averaged_forcing_xi(model, state.xi, m.points)


def averaged_forcing_xi(model: NoiseModel, xi: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Array form of ``averaged_forcing``; batch axes broadcast."""
    if model.kind == "scalar-ou":
        # x-independent field: the law average is the driver value itself.
        return xi
    if model.kind == "separable":
        gbar = pairwise_mean(model.g(points), axis=-1)
        return xi * gbar[..., None]
    return pairwise_mean(eval_field_points(model, xi, points), axis=-2)


def sigma_matrix(model: NoiseModel, m: EmpiricalMeasure | None = None, *,
                 mc_samples: int = 4096, seed: int = 0) -> np.ndarray:
    """Stationary covariance of the law-averaged forcing, as a d x d matrix.

    scalar-ou and separable kinds are closed-form; the fourier-field value
    is a Monte Carlo estimate over the driver's stationary law (the field's
    law dependence makes it an estimate, not an identity, and it is
    recorded as such wherever it enters a report).
    """
    s2 = model.sigma**2
    eye = np.eye(model.d)
    if model.kind == "scalar-ou":
        return s2 * eye
    if m is None:
        raise UsageError(f"{model.kind} needs a measure for the forcing covariance")
    if model.kind == "separable":
        gbar = float(pairwise_mean(model.g(m.points), axis=-1))
        return s2 * gbar**2 * eye
    gen = _as_generator(seed)
    xis = model.sigma * gen.standard_normal((mc_samples,) + model.driver_shape)
    etas = averaged_forcing_xi(model, xis, m.points)  # (mc, d)
    return etas.T @ etas / mc_samples


def _as_generator(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return _rng.stream(int(seed_or_rng), _rng.DIRECT)
