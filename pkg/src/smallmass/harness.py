"""Experiment orchestration: the eps-sweep convergence study and friends.

The convergence study samples the law of the terminal position twice --
from the second-order system at each eps on the grid, and from the limit
equation under each configured diffusion mode -- and reports the
Wasserstein-2 distance between the sample pairs, row per eps.

Sampling the annealed law deserves care: particles within one replica
share a driver path and an attracting drift, so they synchronize and are
nearly redundant as samples.  Pooling therefore draws at most
``samples_per_replica`` particles per replica, and the effective sample
size is governed by the replica count; the confidence halfwidths come
from a block bootstrap over replicas.  This bias note is recorded in the
report header.

Scheduling never touches values: replicas are keyed to counter-based
streams, work is split into fixed-size batches, and aggregation follows
(eps index, replica index) order, so a run with one worker and a run with
sixteen emit byte-identical files.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from ._version import __version__ as _version
from .config import Config
from .core import EmpiricalMeasure
from .diagnostics import GkEstimate, green_kubo, moment_table, uv_check
from .dynamics_eps import run_eps_replicas
from .dynamics_limit import (DiffusionSpec, build_diffusion,
                             default_limit_scheme, run_limit_replicas)
from .errors import UsageError
from .transport import ASSIGNMENT_MAX_N, w2_auto

__all__ = [
    "ConvergenceReport",
    "run_convergence",
    "run_diagnose",
    "run_estimate_gk",
    "worker_count",
]

WORKERS_ENV = "SMALLMASS_WORKERS"
EPS_BATCH = 64
BOOTSTRAP_RESAMPLES = 24

CONVERGE_COLUMNS = ("eps", "w2_paper_mode", "w2_gk_mode", "ci_halfwidth",
                    "n_samples", "w2_method")


def worker_count() -> int:
    """Worker pool size: the environment variable, else all available."""
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"{WORKERS_ENV} must be >= 1")
    return n


def _parallel_map(fn, items):
    """Map a picklable function over items, preserving order.

    Work items carry all state; the batch decomposition is fixed up front,
    so the result is independent of the worker count by construction.
    """
    workers = worker_count()
    if workers == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _eps_batch_worker(args):
    values, eps, eps_index, ids, spr = args
    cfg = Config(values=values)
    rc = cfg.run_config(eps)
    pos, _ = run_eps_replicas(rc, cfg.noise_model(), cfg.potential(),
                              values["run.scheme"], cfg.init_law(), ids,
                              (_rng.EPS_RUN, eps_index), batch_size=EPS_BATCH)
    return pos[:, :spr, :].reshape(-1, rc.d)


def _limit_batch_worker(args):
    values, matrix, mode, mode_index, ids, spr = args
    cfg = Config(values=values)
    rc = cfg.run_config(cfg.eps_grid[0])
    diff = DiffusionSpec(mode=mode, matrix=np.asarray(matrix))
    pot = cfg.potential()
    sch = None
    if values["limit.h"] is not None:
        from .dynamics_limit import LimitScheme

        sch = LimitScheme(values["limit.h"])
        sch.validate(rc.alpha, pot)
    pos = run_limit_replicas(rc, pot, diff, cfg.init_law(), ids,
                             (_rng.LIMIT_RUN, mode_index), sch=sch)
    return pos[:, :spr, :].reshape(-1, rc.d)


def _self_test_batch_worker(args):
    values, matrix, mode, eps_index, ids, spr = args
    cfg = Config(values=values)
    rc = cfg.run_config(cfg.eps_grid[0])
    diff = DiffusionSpec(mode=mode, matrix=np.asarray(matrix))
    pos = run_limit_replicas(rc, cfg.potential(), diff, cfg.init_law(), ids,
                             (_rng.SELF_TEST, eps_index))
    return pos[:, :spr, :].reshape(-1, rc.d)


def _batched(n, size):
    return [list(range(a, min(a + size, n))) for a in range(0, n, size)]


@dataclass(frozen=True)
class ConvergenceReport:
    """One row per eps plus enough metadata to re-run the experiment."""

    rows: list
    metadata: dict

    def write_csv(self, path):
        write_table(path, self.metadata, CONVERGE_COLUMNS,
                    [[r[c] for c in CONVERGE_COLUMNS] for r in self.rows])

    @property
    def selected_mode(self) -> str:
        return self.metadata["selected_mode"]


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_table(path, metadata: dict, header, rows):
    """CSV with a '#'-prefixed metadata block; fixed 17-significant-digit
    decimal formatting so identical runs are byte-identical."""
    lines = []
    for key in sorted(metadata):
        lines.append(f"# {key} = {metadata[key]}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    text = "\n".join(lines) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return text


def _base_metadata(cfg: Config) -> dict:
    meta = {
        "smallmass.version": _version,
        "mixing.envelope": "exp(-gamma*s) declared; true driver mixing is dominated by C*exp(-gamma*s)",
        "sampling.note": ("pooled at most samples_per_replica particles per replica; "
                          "within-replica particles share a driver path and are not "
                          "independent samples of the annealed law"),
        "w2.auto_thresholds": f"d=1 quantile; d>1 n<={ASSIGNMENT_MAX_N} assignment; else sliced n_proj=128",
    }
    for key in sorted(cfg.values):
        val = cfg.values[key]
        if val is None:
            continue
        meta[f"config.{key}"] = json.dumps(val, separators=(",", ":"))
    return meta


def _reference_measure(cfg: Config) -> EmpiricalMeasure:
    """Frozen measure for law-dependent noise metadata (the initial law)."""
    gen = _rng.stream(cfg.seed, _rng.DIRECT, 1)
    pts = cfg.init_law().draw_positions(1024, cfg.values["run.d"], gen)
    return EmpiricalMeasure(pts)


def build_mode_diffusions(cfg: Config) -> dict[str, DiffusionSpec]:
    """D_eff per configured mode, with the measured G where needed."""
    model = cfg.noise_model()
    alpha = cfg.values["run.alpha"]
    mref = _reference_measure(cfg)
    out = {}
    for mode in cfg.modes:
        if mode == "paper":
            out[mode] = build_diffusion("paper", model=model, m=mref, alpha=alpha)
        elif mode == "green-kubo":
            gk = green_kubo(model, m_source=mref, horizon_fast=cfg.gk_horizon(),
                            reps=cfg.values["gk.reps"], seed=cfg.seed,
                            dt=cfg.values["gk.dt"])
            out[mode] = build_diffusion("green-kubo", gk_estimate=gk.G, alpha=alpha)
        else:
            out[mode] = build_diffusion(
                "explicit", explicit=np.asarray(cfg.values["limit.explicit_matrix"]),
                alpha=alpha)
    return out


def pool_eps_samples(cfg: Config, eps: float, eps_index: int) -> np.ndarray:
    spr = cfg.values["run.samples_per_replica"]
    reps = cfg.values["run.replicas"]
    items = [(cfg.values, eps, eps_index, ids, spr) for ids in _batched(reps, EPS_BATCH)]
    parts = _parallel_map(_eps_batch_worker, items)
    return np.concatenate(parts, axis=0)


def pool_limit_samples(cfg: Config, mode: str, mode_index: int,
                       diff: DiffusionSpec) -> np.ndarray:
    reps, spr = cfg.limit_pooling()
    spr = min(spr, cfg.values["run.N"])
    items = [(cfg.values, diff.matrix.tolist(), mode, mode_index, ids, spr)
             for ids in _batched(reps, EPS_BATCH)]
    parts = _parallel_map(_limit_batch_worker, items)
    return np.concatenate(parts, axis=0)


def _pool_self_test_samples(cfg: Config, eps_index: int, diff: DiffusionSpec,
                            mode: str) -> np.ndarray:
    spr = cfg.values["run.samples_per_replica"]
    reps = cfg.values["run.replicas"]
    spr = min(spr, cfg.values["run.N"])
    items = [(cfg.values, diff.matrix.tolist(), mode, eps_index, ids, spr)
             for ids in _batched(reps, EPS_BATCH)]
    parts = _parallel_map(_self_test_batch_worker, items)
    return np.concatenate(parts, axis=0)


def _block_bootstrap_ci(eps_sample: np.ndarray, spr: int, limit_sample: np.ndarray,
                        seed: int, eps_index: int, mode_index: int) -> float:
    """95% halfwidth of the W2 value under replica-block resampling."""
    n_blocks = eps_sample.shape[0] // spr
    blocks = eps_sample.reshape(n_blocks, spr, -1)
    gen = _rng.stream(seed, _rng.BOOT, eps_index, mode_index)
    vals = []
    for _ in range(BOOTSTRAP_RESAMPLES):
        pick = gen.integers(0, n_blocks, size=n_blocks)
        resampled = blocks[pick].reshape(-1, blocks.shape[2])
        vals.append(w2_auto(resampled, limit_sample, seed=seed).value)
    return float(1.96 * np.std(vals, ddof=1))


def run_convergence(cfg: Config) -> ConvergenceReport:
    """The eps-sweep study behind the headline convergence claim."""
    diffs = build_mode_diffusions(cfg)
    meta = _base_metadata(cfg)
    for mode, diff in diffs.items():
        meta[f"diffusion.{mode}.D_eff"] = np.array2string(
            diff.matrix, separator=",", max_line_width=10**9)
    mode_list = cfg.modes
    limit_samples = {}
    for mode_index, mode in enumerate(mode_list):
        limit_samples[mode] = pool_limit_samples(cfg, mode, mode_index, diffs[mode])
    rows = []
    self_test = cfg.values["run.self_test"]
    for eps_index, eps in enumerate(cfg.eps_grid):
        if self_test:
            eps_sample = _pool_self_test_samples(cfg, eps_index, diffs[mode_list[0]],
                                                 mode_list[0])
        else:
            eps_sample = pool_eps_samples(cfg, eps, eps_index)
        spr = min(cfg.values["run.samples_per_replica"], cfg.values["run.N"])
        row = {"eps": eps, "w2_paper_mode": float("nan"), "w2_gk_mode": float("nan"),
               "n_samples": eps_sample.shape[0]}
        ci = 0.0
        method = ""
        for mode_index, mode in enumerate(mode_list):
            res = w2_auto(eps_sample, limit_samples[mode], seed=cfg.seed)
            method = res.method
            col = {"paper": "w2_paper_mode", "green-kubo": "w2_gk_mode",
                   "explicit": "w2_gk_mode"}[mode]
            row[col] = res.value
            ci = max(ci, _block_bootstrap_ci(eps_sample, spr, limit_samples[mode],
                                             cfg.seed, eps_index, mode_index))
        row["ci_halfwidth"] = ci
        row["w2_method"] = method
        rows.append(row)
    terminal = rows[-1]
    candidates = {}
    if not math.isnan(terminal["w2_paper_mode"]):
        candidates["paper"] = terminal["w2_paper_mode"]
    if not math.isnan(terminal["w2_gk_mode"]):
        gk_mode = next((m for m in mode_list if m != "paper"), None)
        if gk_mode:
            candidates[gk_mode] = terminal["w2_gk_mode"]
    meta["selected_mode"] = min(candidates, key=candidates.get) if candidates else ""
    meta["selected_mode_note"] = ("mode with the smaller terminal W2; settles the "
                                  "limit-noise normalization empirically")
    return ConvergenceReport(rows=rows, metadata=meta)


def run_estimate_gk(cfg: Config) -> GkEstimate:
    model = cfg.noise_model()
    return green_kubo(model, m_source=_reference_measure(cfg),
                      horizon_fast=cfg.gk_horizon(), reps=cfg.values["gk.reps"],
                      seed=cfg.seed, dt=cfg.values["gk.dt"])


def run_diagnose(cfg: Config):
    """Moment tables and u/v reports per eps, plus the G estimate.

    Returns (rows, metadata) where rows are module-tagged (module, eps,
    stat, value, ci) tuples ready for CSV.
    """
    from .diagnostics import dyadic_lags

    model = cfg.noise_model()
    pot = cfg.potential()
    init = cfg.init_law()
    v = cfg.values
    rows = []
    lags = dyadic_lags(v["diag.lag_lo"], v["diag.lag_hi"])
    from dataclasses import replace

    for eps_index, eps in enumerate(cfg.eps_grid):
        rc = cfg.run_config(eps)
        rc_small = replace(rc, N=v["diag.N"],
                           samples_per_replica=min(rc.samples_per_replica, v["diag.N"]))
        mt = moment_table(rc_small, model, pot, v["run.scheme"],
                          reps=v["diag.moment_reps"], grid_points=v["diag.grid_points"],
                          init=init, eps_index=eps_index)
        for key in ("sx2", "sx4", "sy2", "sy4"):
            rows.append(("moment_table", eps, f"sup_{key}", mt.sup[key], mt.ci[key]))
        uv = uv_check(rc_small, model, reps=v["diag.reps"], lags=lags, init=init,
                      pot=pot, eps_index=eps_index)
        rows.append(("uv", eps, "v_msq", uv.v_msq, uv.v_msq_ci))
        for lag, ratio in sorted(uv.u_increment_ratios.items()):
            rows.append(("uv", eps, f"u_inc_ratio[{lag:.6g}]", ratio, ""))
        rows.append(("uv", eps, "u_inc_ratio_max_over_median",
                     uv.ratio_max / uv.ratio_median, ""))
        for key in ("variance_slope", "lag1_increment_corr", "excess_kurtosis"):
            rows.append(("bm_proxy", eps, key, uv.bm_stats[key], ""))
    gk = run_estimate_gk(cfg)
    for i in range(gk.G.shape[0]):
        for j in range(gk.G.shape[1]):
            rows.append(("green_kubo", "", f"G[{i},{j}]", gk.G[i, j], gk.ci_fro))
    rows.append(("green_kubo", "", "truncation_lag", gk.truncation_lag, ""))
    meta = _base_metadata(cfg)
    return rows, meta


# -- CLI-facing single-run helpers ----------------------------------------


def run_simulate_eps(cfg: Config, out_dir: str):
    """Pool the eps-system terminal samples for the first grid value."""
    eps = cfg.eps_grid[0]
    sample = pool_eps_samples(cfg, eps, 0)
    meta = _base_metadata(cfg)
    meta["run.eps"] = _fmt(eps)
    header = ["sample"] + [f"x_{i + 1}" for i in range(cfg.values["run.d"])]
    rows = [[i] + list(map(float, p)) for i, p in enumerate(sample)]
    path = os.path.join(out_dir, "samples_eps.csv")
    write_table(path, meta, header, rows)
    if cfg.values["output.dump_trajectories"]:
        _dump_eps_trajectory(cfg, eps, os.path.join(out_dir, "trajectory_eps.csv"))
    return path


def _dump_eps_trajectory(cfg: Config, eps: float, path: str):
    rc = cfg.run_config(eps)
    gen = _rng.stream(cfg.seed, _rng.EPS_RUN, 0, 0)
    from .core import ParticleEnsemble
    from .dynamics_eps import build_scheme, step
    from .noise import DriverState, stationary_xi

    init = cfg.init_law()
    model, pot = cfg.noise_model(), cfg.potential()
    sch = build_scheme(rc, cfg.values["run.scheme"])
    X = init.draw_positions(rc.N, rc.d, gen)
    ens = ParticleEnsemble(X, init.velocities(rc.N, rc.d), 0.0, eps)
    drv = DriverState(xi=stationary_xi(model, gen), fast_time=0.0)
    d = rc.d
    header = ["t", "i"] + [f"x_{k + 1}" for k in range(d)] + [f"y_{k + 1}" for k in range(d)]
    rows = []

    def emit(e):
        for i in range(rc.N):
            rows.append([e.time, i] + list(map(float, e.positions[i]))
                        + list(map(float, e.velocities[i])))

    emit(ens)
    n = max(1, int(round(rc.T / sch.h)))
    for _ in range(n):
        ens, drv, _rep = step(ens, model, drv, pot, sch, rc.alpha, gen)
        emit(ens)
    write_table(path, {"trajectory.replica": "0"}, header, rows)


def run_simulate_limit(cfg: Config, out_dir: str):
    """Pool limit-law terminal samples for the first configured mode."""
    diffs = build_mode_diffusions(cfg)
    mode = cfg.modes[0]
    sample = pool_limit_samples(cfg, mode, 0, diffs[mode])
    meta = _base_metadata(cfg)
    meta["limit.mode"] = mode
    meta["limit.D_eff"] = np.array2string(diffs[mode].matrix, separator=",",
                                          max_line_width=10**9)
    header = ["sample"] + [f"x_{i + 1}" for i in range(cfg.values["run.d"])]
    rows = [[i] + list(map(float, p)) for i, p in enumerate(sample)]
    path = os.path.join(out_dir, "samples_limit.csv")
    write_table(path, meta, header, rows)
    if cfg.values["output.dump_trajectories"]:
        _dump_limit_trajectory(cfg, diffs[mode], os.path.join(out_dir, "trajectory_limit.csv"))
    return path


def _dump_limit_trajectory(cfg: Config, diff: DiffusionSpec, path: str):
    rc = cfg.run_config(cfg.eps_grid[0])
    gen = _rng.stream(cfg.seed, _rng.LIMIT_RUN, 0, 0)
    from .core import ParticleEnsemble
    from .dynamics_limit import step_em

    init = cfg.init_law()
    pot = cfg.potential()
    sch = default_limit_scheme(rc, pot)
    ens = ParticleEnsemble(init.draw_positions(rc.N, rc.d, gen), None, 0.0, None)
    d = rc.d
    header = ["t", "i"] + [f"x_{k + 1}" for k in range(d)]
    rows = []

    def emit(e):
        for i in range(rc.N):
            rows.append([e.time, i] + list(map(float, e.positions[i])))

    emit(ens)
    n = max(1, int(round(rc.T / sch.h)))
    for _ in range(n):
        ens = step_em(ens, pot, diff, sch, rc.alpha, gen)
        emit(ens)
    write_table(path, {"trajectory.replica": "0"}, header, rows)


def load_sample_file(path) -> np.ndarray:
    """Read a numeric CSV of sample points ('#' comments and an optional
    header line are skipped; a leading 'sample' index column is dropped)."""
    rows = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split(",")
                try:
                    rows.append([float(p) for p in parts])
                except ValueError:
                    if not rows:
                        continue  # header line
                    raise UsageError(f"non-numeric row in {path}: {line!r}") from None
    except OSError as err:
        raise UsageError(f"cannot read sample file {path}: {err}") from None
    if not rows:
        raise UsageError(f"no samples found in {path}")
    arr = np.asarray(rows, dtype=float)
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise UsageError(f"ragged rows in {path}")
    if arr.shape[1] > 1 and np.array_equal(arr[:, 0], np.arange(arr.shape[0])):
        arr = arr[:, 1:]
    return arr
