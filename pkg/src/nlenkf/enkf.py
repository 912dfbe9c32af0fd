"""Perturbed-observation EnKF built on the conditional-Gaussian formula.

Every member is moved by

    x_i <- x_i + Cov[X, Y] Cov[Y]^{-1} (y - y_i)

where the covariances are ensemble estimates from the joint ensemble
``(x_i, y_i)`` with ``y_i`` a draw of Y | X = x_i.  No observation operator
or observation-error covariance is needed, which is what lets the same code
serve nonlinear and non-additive observing systems.
"""
from __future__ import annotations

import logging

import numpy as np
from scipy import linalg

log = logging.getLogger(__name__)


class SingularInnovationCovariance(np.linalg.LinAlgError):
    """The localized observation covariance could not be factorized."""


def perturbation_matrix(members):
    """Scaled perturbation matrix, shape ``(d, N)``; column i is
    ``(member_i - mean) / sqrt(N - 1)``."""
    M = np.asarray(members, dtype=float)
    n = M.shape[0]
    return (M - M.mean(axis=0)).T / np.sqrt(n - 1)


def enkf_update(X, Y, y, L=None):
    """Simultaneous perturbed-observation update.

    Parameters
    ----------
    X : ndarray (N, K)
        Forecast state ensemble.
    Y : ndarray (N, P)
        Perturbed observations, row i drawn from Y | X = X[i].
    y : ndarray (P,)
        The actual observation.
    L : ndarray (K, P) or None
        Schur localization applied to both Cov[X, Y] and Cov[Y]; for Cov[Y]
        the ``(P, P)`` block is used, so P must equal K when L is given.

    Returns
    -------
    ndarray (N, K)

    Raises
    ------
    SingularInnovationCovariance
        If the localized Cov[Y] cannot be Cholesky-factorized even after a
        small ridge is added.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    Ax = perturbation_matrix(X)
    Ay = perturbation_matrix(Y)
    Cxy = Ax @ Ay.T
    Cyy = Ay @ Ay.T
    if L is not None:
        Cxy = L * Cxy
        Cyy = L * Cyy
    innov = (np.asarray(y, dtype=float) - Y).T  # (P, N)
    W = _spd_solve(Cyy, innov)
    return X + (Cxy @ W).T


def _spd_solve(C, B):
    if not np.all(np.isfinite(C)):
        raise SingularInnovationCovariance("non-finite observation covariance")
    try:
        return linalg.cho_solve(linalg.cho_factor(C, lower=True, check_finite=False), B,
                                check_finite=False)
    except linalg.LinAlgError:
        pass
    ridge = 1e-8 * np.trace(C) / C.shape[0]
    log.warning("Cov[Y] not positive definite; retrying with ridge %.3g", ridge)
    try:
        Cr = C + ridge * np.eye(C.shape[0])
        return linalg.cho_solve(linalg.cho_factor(Cr, lower=True, check_finite=False), B,
                                check_finite=False)
    except linalg.LinAlgError as exc:
        raise SingularInnovationCovariance(str(exc)) from exc
