"""Serial two-step assimilation.

For each observed site k: a scalar Bayesian update moves the prior values
``z_i = x_i[k]`` to ``z_i+``, then every state coordinate receives the
least-squares regression increment  ``L[k, m] * b_m * (z_i+ - z_i)``  with
``b_m = Cov(x_m, z) / Var(z)``.  Re-using the regression residuals makes the
intercept and residual terms cancel, leaving only this increment.
"""
from __future__ import annotations

import logging

import numpy as np

from .localization import LocalizationSpec, loc_matrix
from .observations import ObservingSystem, loglik_function
from .scalar_update import irhf_scalar_update, rhf_scalar_update

log = logging.getLogger(__name__)

SCALAR_UPDATES = {
    "rhf": rhf_scalar_update,
    "irhf": irhf_scalar_update,
}


def choose_z(obs_site):
    """Selector returning the observed coordinate of every member."""
    return lambda E: np.asarray(E)[:, obs_site]


def regression_slopes(E, z):
    """OLS slopes of each column of ``E`` on ``z`` (``None`` if Var(z) == 0)."""
    zc = z - z.mean()
    var = zc @ zc
    if not var > 0:
        return None
    return (zc @ (E - E.mean(axis=0))) / var


def regress_increments(E, z, z_plus, L_row):
    """Spread the scalar increments ``z_plus - z`` to all coordinates."""
    E = np.asarray(E, dtype=float)
    z = np.asarray(z, dtype=float)
    beta = regression_slopes(E, z)
    if beta is None:
        log.warning("zero prior variance in observed variable; skipping observation")
        return E.copy()
    return E + np.outer(np.asarray(z_plus) - z, np.asarray(L_row) * beta)


def two_step_assimilate(E, y, sys: ObservingSystem, loc, scalar_kind="rhf", order=None):
    """Assimilate one observation per site, serially.

    Parameters
    ----------
    E : ndarray (N, K)
        Forecast ensemble (already inflated).
    y : ndarray (K,)
        Observations, one per site.
    sys : ObservingSystem
    loc : LocalizationSpec or ndarray (K, K)
        Localization of the regression increments.
    scalar_kind : {"rhf", "irhf"} or callable ``(sample, loglik) -> sample``
    order : sequence of site indices, optional
        Processing order; ascending by default.
    """
    update = SCALAR_UPDATES[scalar_kind] if isinstance(scalar_kind, str) else scalar_kind
    L = loc_matrix(loc) if isinstance(loc, LocalizationSpec) else np.asarray(loc, dtype=float)
    E = np.array(E, dtype=float)
    sites = range(E.shape[1]) if order is None else order
    for k in sites:
        z = E[:, k].copy()
        z_plus = update(z, loglik_function(y[k], sys))
        beta = regression_slopes(E, z)
        if beta is None:
            log.warning("zero prior variance at site %d; skipping", k)
            continue
        E += np.outer(z_plus - z, L[k] * beta)
        # slope of x_k on itself is exactly 1
        E[:, k] = z + L[k, k] * (z_plus - z)
    return E
