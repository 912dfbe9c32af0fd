"""Twin-experiment driver: cycling, parameter sweeps and the scalar benchmark.

Random streams
--------------
Every random draw comes from ``SeedSequence(seed, spawn_key=(stream, ...))``
so that streams never overlap and do not depend on run order:

====  ==========================================  ================
 id   purpose                                     seeded by
====  ==========================================  ================
 0    reference initial condition                 ``seed``
 1    observation noise                           ``seed``
 2    initial ensemble perturbations              ``member_seed``
 3    perturbed observations, one per cycle       ``member_seed``
 4    random observation order, one per cycle     ``member_seed``
 5    scalar benchmark prior draws                ``seed``
====  ==========================================  ================

Truth and observations depend on ``seed`` only, so switching filters never
changes them.
"""
from __future__ import annotations

import functools
import logging
import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace, asdict
from itertools import product

import numpy as np

from .anamorphosis import AnamorphosisError, ga_enkf_update
from .enkf import SingularInnovationCovariance, enkf_update
from .ensemble import CycleMetrics, check_divergence, inflate, summarize
from .localization import LocalizationSpec, loc_matrix
from .model import IntegratorConfig, ModelBlowUp, integrate, make_reference
from .observations import ObservingSystem, sample_obs
from .scalar_update import (ScalarUpdateError, irhf_scalar_update, linear_gaussian_map,
                            rhf_scalar_update)
from .twostep import two_step_assimilate

log = logging.getLogger(__name__)

METHODS = ("enkf", "ga-pl", "ga-kde", "rhf", "irhf")
OBS_KINDS = ("linear", "logit-normal", "log-normal")
INFLATION_GRID = tuple(1 + k / 20 for k in range(9))
LOC_GRID = (0.5,) + tuple(2 * k - 1 for k in range(1, 9)) + (math.inf,)

STREAM_TRUTH, STREAM_OBS, STREAM_INIT, STREAM_PERTURB, STREAM_ORDER, STREAM_SCALAR = range(6)

DEFAULT_WORKERS_ENV = "NLENKF_WORKERS"

_FAILURES = (ModelBlowUp, SingularInnovationCovariance, ScalarUpdateError, AnamorphosisError,
             FloatingPointError, np.linalg.LinAlgError)


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def stream(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


@dataclass(frozen=True)
class ExperimentConfig:
    method: str = "enkf"
    obs: str = "linear"
    N: int = 120
    loc_radius: float = math.inf
    inflation: float = 1.0
    n_cycles: int = 5500
    spinup_cycles: int = 500
    seed: int = 0
    member_seed: int | None = None
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    n_sites: int = 40
    spinup_mtu: float = 9.0
    obs_noise_sd: float = 1.0
    divergence_threshold: float = 1e3
    chordal: bool = False
    obs_order: str = "ascending"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.obs not in OBS_KINDS:
            raise ConfigError(f"obs must be one of {OBS_KINDS}, got {self.obs!r}")
        if self.N < 2:
            raise ConfigError("ensemble size must be >= 2")
        if not self.loc_radius > 0:
            raise ConfigError("loc_radius must be positive")
        if self.inflation < 1:
            raise ConfigError("inflation must be >= 1")
        if not 0 <= self.spinup_cycles < self.n_cycles:
            raise ConfigError("need 0 <= spinup_cycles < n_cycles")
        if self.obs_order not in ("ascending", "random"):
            raise ConfigError("obs_order must be 'ascending' or 'random'")

    @property
    def filter_seed(self):
        return self.seed if self.member_seed is None else self.member_seed

    @property
    def observing_system(self):
        return ObservingSystem(self.obs, noise_sd=self.obs_noise_sd)

    @property
    def localization(self):
        return LocalizationSpec(self.loc_radius, self.n_sites, self.chordal)


@dataclass
class RunSummary:
    config: ExperimentConfig
    forecast_rmse: float
    forecast_spread: float
    forecast_crps: float
    analysis_rmse: float
    analysis_spread: float
    analysis_crps: float
    diverged: bool
    n_scored: int
    wall_time: float


@functools.lru_cache(maxsize=8)
def twin_data(seed, n_cycles, integrator, n_sites, spinup_mtu, obs, obs_noise_sd):
    """Reference trajectory and observations (cached, read-only)."""
    truth = make_reference(stream(seed, STREAM_TRUTH), spinup_mtu, n_cycles, integrator, n_sites)
    ys = sample_obs(truth, ObservingSystem(obs, noise_sd=obs_noise_sd), stream(seed, STREAM_OBS))
    truth.flags.writeable = False
    ys.flags.writeable = False
    return truth, ys


def analysis_step(cfg: ExperimentConfig, E, y, L, cycle):
    """Inflate and assimilate one batch of observations."""
    sys = cfg.observing_system
    fseed = cfg.filter_seed
    if cfg.method == "enkf":
        Ei = inflate(E, cfg.inflation)
        Y = sample_obs(Ei, sys, stream(fseed, STREAM_PERTURB, cycle))
        return enkf_update(Ei, Y, y, L)
    if cfg.method in ("ga-pl", "ga-kde"):
        return ga_enkf_update(E, y, sys, L, cfg.method[3:], stream(fseed, STREAM_PERTURB, cycle),
                              inflation=cfg.inflation)
    order = None
    if cfg.obs_order == "random":
        order = stream(fseed, STREAM_ORDER, cycle).permutation(E.shape[1])
    return two_step_assimilate(inflate(E, cfg.inflation), y, sys, L, cfg.method, order)


def run_cycle_experiment(cfg: ExperimentConfig, on_cycle=None):
    """Run one twin experiment.

    Returns
    -------
    summary : RunSummary
    records : list of CycleMetrics
        One per cycle; after a divergence the remaining cycles are flagged.
    """
    t0 = time.perf_counter()
    truth, ys = twin_data(cfg.seed, cfg.n_cycles, cfg.integrator, cfg.n_sites, cfg.spinup_mtu,
                          cfg.obs, cfg.obs_noise_sd)
    L = loc_matrix(cfg.localization)
    E = truth[0] + stream(cfg.filter_seed, STREAM_INIT).standard_normal((cfg.N, cfg.n_sites))
    records = []
    diverged = False
    for c in range(cfg.n_cycles):
        rec = CycleMetrics(c)
        try:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                if c > 0:
                    E = integrate(E, cfg.integrator)
                rec.forecast_rmse, rec.forecast_spread, rec.forecast_crps = summarize(E, truth[c])
                E = analysis_step(cfg, E, ys[c], L, c)
            if check_divergence(E, cfg.divergence_threshold):
                raise FloatingPointError("ensemble diverged")
            rec.analysis_rmse, rec.analysis_spread, rec.analysis_crps = summarize(E, truth[c])
        except _FAILURES as exc:
            log.info("%s diverged at cycle %d: %s", cfg.method, c, exc)
            diverged = True
        if diverged:
            rec = CycleMetrics(c, diverged=True)
            records.append(rec)
            records.extend(CycleMetrics(k, diverged=True) for k in range(c + 1, cfg.n_cycles))
            break
        records.append(rec)
        if on_cycle is not None:
            on_cycle(rec)
    summary = summarize_run(cfg, records, time.perf_counter() - t0)
    return summary, records


def summarize_run(cfg, records, wall_time=0.0):
    scored = records[cfg.spinup_cycles:]
    diverged = any(r.diverged for r in records)
    names = ("forecast_rmse", "forecast_spread", "forecast_crps",
             "analysis_rmse", "analysis_spread", "analysis_crps")
    if diverged:
        meds = {k: math.nan for k in names}
    else:
        meds = {k: float(np.median([getattr(r, k) for r in scored])) for k in names}
    return RunSummary(cfg, diverged=diverged, n_scored=len(scored), wall_time=wall_time, **meds)


# ---------------------------------------------------------------- sweeps

def grid_configs(base: ExperimentConfig, methods, Ns, radii, inflations):
    """Cartesian product of the sweep axes; each point gets a member seed
    derived from the master seed and its own parameters (not its position)."""
    out = []
    for method, N, d, r in product(methods, Ns, radii, inflations):
        key = f"{method}|{N}|{float(d)!r}|{float(r)!r}".encode()
        mseed = int(np.random.SeedSequence([base.seed, zlib.crc32(key)]).generate_state(1)[0])
        out.append(replace(base, method=method, N=N, loc_radius=float(d), inflation=float(r),
                           member_seed=mseed))
    return out


def _run_summary_only(cfg):
    return run_cycle_experiment(cfg)[0]


def default_workers():
    try:
        return max(1, int(os.environ.get(DEFAULT_WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run_sweep(base: ExperimentConfig, methods=METHODS, Ns=(120,), radii=LOC_GRID,
              inflations=INFLATION_GRID, workers=None):
    """Run every grid point; results are in grid order whatever ``workers`` is."""
    configs = grid_configs(base, methods, Ns, radii, inflations)
    workers = default_workers() if workers is None else workers
    if workers <= 1:
        return [_run_summary_only(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_summary_only, configs))


def best_by_method(summaries):
    """Per (method, N), the non-diverged run with the lowest analysis RMSE
    (``None`` if every run diverged)."""
    best = {}
    for s in summaries:
        key = (s.config.method, s.config.N)
        cur = best.get(key)
        if s.diverged:
            best.setdefault(key, None)
            continue
        if cur is None or s.analysis_rmse < cur.analysis_rmse:
            best[key] = s
    return best


# ---------------------------------------------------------------- scalar benchmark

SCALAR_FILTERS = {"rhf": rhf_scalar_update, "irhf": irhf_scalar_update}
GAMMA_FLOOR = 1e-3


@dataclass
class ScalarBenchmark:
    y_grid: np.ndarray
    gamma_grid: np.ndarray
    errors: dict  # (filter, N) -> median max-abs error, shape (len(y), len(gamma))
    trials: int
    gamma_floor: float = GAMMA_FLOOR


def run_scalar_benchmark(N_list=(20, 80), y_grid=None, gamma_grid=None, trials=100, seed=0,
                         filters=("rhf", "irhf")):
    """Median (over trials) of the max-abs error of each scalar filter
    against the exact linear-Gaussian transport, on a (y, gamma) grid.

    Both filters see the same prior draws.  ``gamma = 0`` is replaced by
    ``GAMMA_FLOOR``.
    """
    y_grid = np.round(np.arange(0, 21) * 0.1, 10) if y_grid is None else np.asarray(y_grid, float)
    gamma_grid = (np.round(np.arange(0, 21) * 0.1, 10) if gamma_grid is None
                  else np.asarray(gamma_grid, float))
    errors = {}
    for N in N_list:
        for name in filters:
            errors[(name, N)] = np.empty((y_grid.size, gamma_grid.size))
        for iy, y in enumerate(y_grid):
            for ig, gamma in enumerate(gamma_grid):
                g = max(float(gamma), GAMMA_FLOOR)
                Z = stream(seed, STREAM_SCALAR, N, iy, ig).standard_normal((trials, N))
                ll = _gaussian_loglik(float(y), g)
                for name in filters:
                    update = SCALAR_FILTERS[name]
                    errs = [np.max(np.abs(update(z, ll) - linear_gaussian_map(z, y, g))) for z in Z]
                    errors[(name, N)][iy, ig] = np.median(errs)
    return ScalarBenchmark(y_grid, gamma_grid, errors, trials)


def _gaussian_loglik(y, gamma):
    inv = 1.0 / gamma
    return lambda z: -0.5 * ((y - np.asarray(z, dtype=float)) * inv) ** 2


def config_as_dict(cfg: ExperimentConfig):
    d = asdict(cfg)
    integ = d.pop("integrator")
    d.update({f"integrator_{k}": v for k, v in integ.items()})
    return d
