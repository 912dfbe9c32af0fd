"""Nonlinear ensemble Kalman filter extensions on Lorenz-96.

Gaussian-anamorphosis EnKFs (piecewise-linear and kernel-density maps) and
two-step filters (rank histogram filter and its boxcar-kernel variant),
with a twin-experiment harness.
"""
from .model import IntegratorConfig, integrate, lorenz96_rhs, make_reference, rk4_step
from .observations import ObservingSystem, log_likelihood, sample_obs
from .localization import LocalizationSpec, loc_matrix, loc_weight, ring_distance
from .ensemble import crps, ensemble_mean, inflate, rmse, spread
from .enkf import enkf_update, perturbation_matrix
from .anamorphosis import build_kde_map, build_pl_map, ga_enkf_update
from .scalar_update import (PiecewiseCdf, irhf_prior, irhf_scalar_update, posterior_cdf,
                            rhf_prior, rhf_scalar_update)
from .twostep import two_step_assimilate
from .harness import ExperimentConfig, run_cycle_experiment, run_scalar_benchmark, run_sweep

__version__ = "0.1.0"
