"""Numerical checks of the moment, decay, and increment estimates.

These diagnostics make the qualitative estimates behind the zero-mass
limit falsifiable at desk scale:

* ``moment_table``: the scaled moments E||sqrt(eps) X||^{2,4} and
  E||sqrt(eps) Y||^{2,4} stay bounded uniformly over the eps grid;
* ``uv_check``: the integrated forcing u and its exponentially filtered
  part v, computed with the integrator's own quadrature (left-endpoint
  forcing, exact exponential weights for v).  E||v(T)||^2 must vanish
  linearly in eps, and the fourth-moment increment ratio
  E||u(t) - u(s)||^4 / |t - s| must stay bounded across dyadic lags;
* ``green_kubo``: the effective diffusion of the law-averaged forcing,
  G = 2 * integral of its stationary autocovariance, the executable
  surrogate for the limit noise normalization;
* ``bm_proxy``: three falsifiable statistics of the u paths (linear
  variance growth, vanishing increment autocorrelation, vanishing excess
  kurtosis) standing in for the martingale-problem characterization of the
  diffusion limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .core import EmpiricalMeasure, PotentialSpec, RunConfig
from .dynamics_eps import InitialLaw, _n_steps, build_scheme, run_eps_replicas
from .errors import UsageError
from .noise import (DriverState, NoiseModel, advance_xi, averaged_forcing,
                    averaged_forcing_xi, stationary_xi)

__all__ = [
    "GkEstimate",
    "MomentTable",
    "UvReport",
    "bm_proxy",
    "dyadic_lags",
    "green_kubo",
    "moment_table",
    "uv_check",
]

_MOMENT_KEYS = ("sx2", "sx4", "sy2", "sy4")


@dataclass(frozen=True)
class MomentTable:
    """Sup over a time grid of the scaled moment estimates, with CIs."""

    eps: float
    sup: dict  # key -> sup_t estimate, keys sx2 sx4 sy2 sy4
    ci: dict  # key -> 95% halfwidth of the sup-attaining entry
    n_replicas: int
    n_particles: int
    grid_times: np.ndarray


@dataclass(frozen=True)
class UvReport:
    """Decay and increment statistics of the integrated forcing."""

    eps: float
    v_msq: float
    v_msq_ci: float
    u_increment_ratios: dict  # lag (slow time) -> E||du||^4 / lag
    bm_stats: dict
    n_replicas: int

    @property
    def ratio_max(self) -> float:
        return max(self.u_increment_ratios.values())

    @property
    def ratio_median(self) -> float:
        return float(np.median(list(self.u_increment_ratios.values())))


@dataclass(frozen=True)
class GkEstimate:
    """Effective diffusion of the averaged forcing, with its provenance."""

    G: np.ndarray
    horizon_fast: float
    truncation_lag: float
    reps: int
    ci_fro: float


class _MomentRecorder:
    def __init__(self, n_total_steps, grid_points, eps, n_replicas):
        every = max(1, n_total_steps // max(1, grid_points - 1))
        self.idx = list(range(0, n_total_steps + 1, every))
        if self.idx[-1] != n_total_steps:
            self.idx.append(n_total_steps)
        self.lookup = {k: i for i, k in enumerate(self.idx)}
        self.eps = eps
        self.values = np.zeros((n_replicas, len(self.idx), 4))
        self.times = np.zeros(len(self.idx))
        self._cursor = {}

    def __call__(self, ids, k, t, X, Y):
        slot = self.lookup.get(k)
        if slot is None:
            return
        self.times[slot] = t
        sx = self.eps * np.sum(X * X, axis=-1)  # ||sqrt(eps) X||^2 per particle
        sy = self.eps * np.sum(Y * Y, axis=-1)
        block = np.stack(
            [sx.mean(axis=-1), (sx * sx).mean(axis=-1),
             sy.mean(axis=-1), (sy * sy).mean(axis=-1)], axis=-1
        )
        rows = [self._row(r) for r in ids]
        self.values[rows, slot] = block

    def _row(self, replica_id):
        if replica_id not in self._cursor:
            self._cursor[replica_id] = len(self._cursor)
        return self._cursor[replica_id]


def moment_table(cfg: RunConfig, model: NoiseModel, pot: PotentialSpec,
                 sch_kind: str = "exponential", *, reps: int = 256,
                 grid_points: int = 48, init: InitialLaw | None = None,
                 eps_index: int = 0, batch_size: int = 128) -> MomentTable:
    """Estimate sup_t of the scaled moments over ``reps`` replicas.

    Particles within a replica share one driver path, so the effective
    sample size is the replica count; confidence halfwidths are computed
    across replicas.
    """
    init = init or InitialLaw()
    sch = build_scheme(cfg, sch_kind)
    n = _n_steps(cfg.T, sch.h)
    rec = _MomentRecorder(n, grid_points, cfg.eps, reps)
    run_eps_replicas(cfg, model, pot, sch_kind, init, range(reps),
                     (_rng.MOMENT_RUN, eps_index), batch_size=batch_size,
                     recorder=rec)
    per_rep = rec.values  # (R, G, 4)
    est = per_rep.mean(axis=0)  # (G, 4)
    sup_slots = est.argmax(axis=0)
    sup, ci = {}, {}
    for j, key in enumerate(_MOMENT_KEYS):
        slot = int(sup_slots[j])
        sup[key] = float(est[slot, j])
        ci[key] = float(1.96 * per_rep[:, slot, j].std(ddof=1) / math.sqrt(reps))
    return MomentTable(eps=cfg.eps, sup=sup, ci=ci, n_replicas=reps,
                       n_particles=cfg.N, grid_times=rec.times)


def dyadic_lags(lo: float = 0.01, hi: float = 1.0) -> list[float]:
    """The doubling ladder lo, 2*lo, 4*lo, ... capped at hi."""
    lags, lag = [], lo
    while lag <= hi * (1.0 + 1e-12):
        lags.append(lag)
        lag *= 2.0
    return lags


def uv_check(cfg: RunConfig, model: NoiseModel, *, reps: int = 512,
             lags: list[float] | None = None, init: InitialLaw | None = None,
             pot: PotentialSpec | None = None, bm_grid: int = 50,
             eps_index: int = 0) -> UvReport:
    """Compute u and v paths and their decay/increment statistics.

    u(t) = (alpha sqrt(eps))^{-1} * integral_0^t of the averaged forcing,
    v(t) = the same integral filtered by exp(-(alpha/eps)(t-s)); both use
    the integrator's quadrature (forcing frozen at step left endpoints,
    exact exponential weights for v) so that diagnostic and dynamics share
    one discretization error.

    E||v||^2 is estimated by averaging over replicas and over the second
    half of the horizon; v is stationary there up to an exp(-alpha T /
    (2 eps)) transient, and the time average tightens the estimate without
    changing what is estimated.
    """
    lags = lags if lags is not None else dyadic_lags()
    h = cfg.eps_step
    n = _n_steps(cfg.T, h)
    if model.kind == "scalar-ou":
        u, v_late = _u_paths_scalar(cfg, model, reps, n, eps_index)
    else:
        u, v_late = _u_paths_ensemble(cfg, model, reps, n, eps_index, init, pot)
    # v statistics from the late-time pool
    v_sq = np.sum(v_late * v_late, axis=-1)  # (R, n_late)
    per_rep = v_sq.mean(axis=1)
    v_msq = float(per_rep.mean())
    v_ci = float(1.96 * per_rep.std(ddof=1) / math.sqrt(len(per_rep)))
    # increment ratios over dyadic lags
    ratios = {}
    for lag in lags:
        m = max(1, int(round(lag / h)))
        if m >= u.shape[1]:
            continue
        actual = m * h
        du = u[:, m:] - u[:, :-m]
        e4 = float(np.mean(np.sum(du * du, axis=-1) ** 2))
        ratios[actual] = e4 / actual
    if not ratios:
        raise UsageError("no admissible lags: horizon too short for the lag ladder")
    # Brownian-proxy statistics on a decimated grid
    every = max(1, n // bm_grid)
    times = np.arange(0, n + 1, every) * h
    stats = bm_proxy(u[:, ::every], times)
    return UvReport(eps=cfg.eps, v_msq=v_msq, v_msq_ci=v_ci,
                    u_increment_ratios=ratios, bm_stats=stats, n_replicas=reps)


def _u_paths_scalar(cfg, model, reps, n, eps_index):
    """Vectorized u/v paths for the x-independent field (standalone driver)."""
    h = cfg.eps_step
    ds = model.driver_shape
    d = model.d
    xi = np.empty((reps,) + ds)
    Z = np.empty((reps, n) + ds)
    for r in range(reps):
        gen = _rng.stream(cfg.seed, _rng.UV_RUN, eps_index, r)
        xi[r] = stationary_xi(model, gen)
        Z[r] = gen.standard_normal((n,) + ds)
    cu = h / (cfg.alpha * math.sqrt(cfg.eps))
    a = cfg.alpha * h / cfg.eps
    r_fac = math.exp(-a)
    cv = math.sqrt(cfg.eps) * (-math.expm1(-a)) / cfg.alpha**2
    u = np.zeros((reps, n + 1, d))
    v = np.zeros((reps, d))
    n_late_from = n // 2
    v_late = np.zeros((reps, n - n_late_from, d))
    delta_s = h / cfg.eps
    for k in range(n):
        eta = xi  # scalar-ou: law-averaged field equals the driver value
        u[:, k + 1] = u[:, k] + cu * eta
        v = v * r_fac + cv * eta
        if k >= n_late_from:
            v_late[:, k - n_late_from] = v
        xi = advance_xi(xi, model, delta_s, Z[:, k])
    return u, v_late


def _u_paths_ensemble(cfg, model, reps, n, eps_index, init, pot):
    """u/v paths riding on the full particle system (law-dependent fields)."""
    from .core import ParticleEnsemble
    from .dynamics_eps import EpsScheme, step

    init = init or InitialLaw()
    pot = pot or PotentialSpec.quadratic(1.0)
    h = cfg.eps_step
    sch = EpsScheme("exponential", h)
    cu = h / (cfg.alpha * math.sqrt(cfg.eps))
    a = cfg.alpha * h / cfg.eps
    r_fac = math.exp(-a)
    cv = math.sqrt(cfg.eps) * (-math.expm1(-a)) / cfg.alpha**2
    u = np.zeros((reps, n + 1, cfg.d))
    n_late_from = n // 2
    v_late = np.zeros((reps, n - n_late_from, cfg.d))
    for rix in range(reps):
        gen = _rng.stream(cfg.seed, _rng.UV_RUN, eps_index, rix)
        X = init.draw_positions(cfg.N, cfg.d, gen)
        ens = ParticleEnsemble(X, init.velocities(cfg.N, cfg.d), 0.0, cfg.eps)
        drv = DriverState(xi=stationary_xi(model, gen), fast_time=0.0)
        v = np.zeros(cfg.d)
        for k in range(n):
            eta = averaged_forcing(model, drv, ens.measure())
            u[rix, k + 1] = u[rix, k] + cu * eta
            v = v * r_fac + cv * eta
            if k >= n_late_from:
                v_late[rix, k - n_late_from] = v
            ens, drv, _ = step(ens, model, drv, pot, sch, cfg.alpha, gen)
    return u, v_late


def green_kubo(model: NoiseModel, m_source: EmpiricalMeasure | None = None,
               horizon_fast: float = 50.0, reps: int = 64, seed: int = 0,
               dt: float | None = None) -> GkEstimate:
    """Effective diffusion G = 2 * integral of the forcing autocovariance.

    The averaged forcing is sampled on a fast-time grid under the frozen
    measure ``m_source`` (ignored for the x-independent kind); the
    empirical autocovariance is averaged over ``reps`` independent driver
    paths and integrated by the trapezoid rule up to the first lag at
    which its magnitude falls below the noise floor estimated from the
    tail of the lag window.  No sample mean is subtracted: the drivers are
    centered by construction, and subtracting a sample mean would bias the
    integral downward by order 1/horizon.
    """
    if horizon_fast < 20.0 / model.gamma:
        raise UsageError(
            f"horizon_fast={horizon_fast:g} too short; need at least 20/gamma = {20.0 / model.gamma:g}"
        )
    if model.kind != "scalar-ou" and m_source is None:
        raise UsageError(f"{model.kind} needs a frozen measure for the estimator")
    if dt is None:
        dt = 0.05 / model.gamma
    n = int(round(horizon_fast / dt))
    d = model.d
    ds = model.driver_shape
    # simulate the driver paths, vectorized across replicas
    gens = [_rng.stream(seed, _rng.GK_RUN, r) for r in range(reps)]
    xi = np.stack([stationary_xi(model, g) for g in gens])
    Z = np.stack([g.standard_normal((n,) + ds) for g in gens])
    eta = np.empty((reps, n, d))
    pts = m_source.points if m_source is not None else None
    for k in range(n):
        if model.kind == "scalar-ou":
            eta[:, k] = xi
        else:
            eta[:, k] = averaged_forcing_xi(model, xi, pts)
        xi = advance_xi(xi, model, dt, Z[:, k])
    # empirical autocovariance per replica, FFT over time, no mean removal
    max_lag = n // 5
    cov = np.zeros((reps, max_lag + 1, d, d))
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    F = np.fft.rfft(eta, n=nfft, axis=1)  # (R, nf, d)
    counts = n - np.arange(max_lag + 1)
    for i in range(d):
        for j in range(d):
            full = np.fft.irfft(F[:, :, i] * np.conj(F[:, :, j]), n=nfft, axis=1)
            cov[:, :, i, j] = full[:, : max_lag + 1] / counts
    cbar = cov.mean(axis=0)  # (L+1, d, d)
    trace = np.trace(cbar, axis1=1, axis2=2) / d
    tail = trace[int(2 * max_lag / 3):]
    floor = float(tail.std(ddof=1)) if tail.size > 1 else 0.0
    below = np.nonzero(np.abs(trace[1:]) < floor)[0]
    cut = int(below[0]) + 1 if below.size else max_lag
    lags = np.arange(cut + 1) * dt
    G = 2.0 * np.trapezoid(cbar[: cut + 1], dx=dt, axis=0)
    G = 0.5 * (G + G.T)
    per_rep = 2.0 * np.trapezoid(cov[:, : cut + 1], dx=dt, axis=1)
    ci_fro = float(1.96 * np.sqrt(np.sum(per_rep.var(axis=0, ddof=1)) / reps))
    return GkEstimate(G=G, horizon_fast=horizon_fast, truncation_lag=float(lags[-1]),
                      reps=reps, ci_fro=ci_fro)


def bm_proxy(u_paths: np.ndarray, times: np.ndarray) -> dict:
    """Brownian-limit statistics of a family of paths on a uniform grid.

    Returns variance-vs-time regression slope (through the origin), pooled
    lag-1 increment autocorrelation, and pooled excess kurtosis of the
    increments.  A Brownian limit predicts (linear variance, zero
    correlation, zero excess kurtosis).  Paths with no variability are
    flagged degenerate with the undefined statistics set to NaN.
    """
    u = np.asarray(u_paths, dtype=float)
    if u.ndim == 2:
        u = u[:, :, None]
    if u.shape[0] < 100:
        raise UsageError("bm_proxy needs at least 100 independent paths")
    times = np.asarray(times, dtype=float)
    if times.shape[0] != u.shape[1]:
        raise UsageError("times must match the path grid")
    msq = np.mean(np.sum(u * u, axis=-1), axis=0)  # E||u(t)||^2
    denom = float(np.dot(times, times))
    slope = float(np.dot(times, msq) / denom) if denom > 0 else 0.0
    du = np.diff(u, axis=1)  # (R, n-1, d)
    flat = du.reshape(du.shape[0], -1)
    total_var = float(np.var(flat))
    if total_var < 1e-300:
        return {"variance_slope": 0.0, "lag1_increment_corr": float("nan"),
                "excess_kurtosis": float("nan"), "degenerate": True}
    a = du[:, :-1, :].reshape(-1)
    b = du[:, 1:, :].reshape(-1)
    corr = float(np.corrcoef(a, b)[0, 1])
    z = du.reshape(-1)
    m2 = float(np.mean(z * z))
    kurt = float(np.mean(z**4) / (m2 * m2) - 3.0)
    return {"variance_slope": slope, "lag1_increment_corr": corr,
            "excess_kurtosis": kurt, "degenerate": False}
