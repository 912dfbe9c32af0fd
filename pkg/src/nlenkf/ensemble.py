"""Ensemble verification metrics, inflation and divergence checks.

Ensembles are plain arrays of shape ``(N, K)``: one row per member.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, astuple

import numpy as np


@dataclass
class CycleMetrics:
    cycle_index: int
    forecast_rmse: float = np.nan
    forecast_spread: float = np.nan
    forecast_crps: float = np.nan
    analysis_rmse: float = np.nan
    analysis_spread: float = np.nan
    analysis_crps: float = np.nan
    diverged: bool = False

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def as_tuple(self):
        return astuple(self)


def ensemble_mean(E):
    return np.mean(np.asarray(E, dtype=float), axis=0)


def perturbations(E):
    E = np.asarray(E, dtype=float)
    return E - E.mean(axis=0)


def rmse(E, truth):
    """RMSE of the ensemble mean against ``truth``."""
    err = ensemble_mean(E) - np.asarray(truth, dtype=float)
    return float(np.sqrt(np.mean(err**2)))


def spread(E):
    """Square root of the site-averaged ensemble variance (ddof=1)."""
    return float(np.sqrt(np.mean(np.var(np.asarray(E, dtype=float), axis=0, ddof=1))))


def crps(sample, truth):
    """CRPS of the empirical CDF of ``sample`` against the scalar ``truth``.

    Uses the energy form  E|S - t| - E|S - S'| / 2, which is exact for the
    step-function CDF of the sample.
    """
    s = np.sort(np.asarray(sample, dtype=float).ravel())
    n = s.size
    if n == 0:
        raise ValueError("empty sample")
    # sum_{i,j} |s_i - s_j| = 2 * sum_i (2i - n - 1) s_(i), 1-based ranks
    w = 2.0 * np.arange(1, n + 1) - n - 1
    pair = 2.0 * np.dot(w, s)
    return float(np.mean(np.abs(s - truth)) - pair / (2.0 * n * n))


def crps_ensemble(E, truth):
    """Site-mean CRPS of an ensemble ``(N, K)`` against a truth vector ``(K,)``."""
    s = np.sort(np.asarray(E, dtype=float), axis=0)
    n = s.shape[0]
    w = 2.0 * np.arange(1, n + 1) - n - 1
    pair = 2.0 * (w @ s)
    per_site = np.mean(np.abs(s - truth), axis=0) - pair / (2.0 * n * n)
    return float(np.mean(per_site))


def inflate(E, r):
    """Multiplicative inflation of perturbations about the ensemble mean."""
    if r < 1:
        raise ValueError(f"inflation factor must be >= 1, got {r}")
    E = np.asarray(E, dtype=float)
    mean = E.mean(axis=0)
    if r == 1:
        return E.copy()
    return mean + r * (E - mean)


def check_divergence(E, threshold=1e3, climatology=None):
    """True if ``E`` has non-finite entries or its RMS distance from
    ``climatology`` (zero by default) exceeds ``threshold``."""
    E = np.asarray(E, dtype=float)
    if not np.all(np.isfinite(E)):
        return True
    ref = 0.0 if climatology is None else np.asarray(climatology, dtype=float)
    return bool(np.sqrt(np.mean((E - ref) ** 2)) > threshold)


def summarize(E, truth):
    """(rmse, spread, crps) for one ensemble."""
    return rmse(E, truth), spread(E), crps_ensemble(E, truth)
