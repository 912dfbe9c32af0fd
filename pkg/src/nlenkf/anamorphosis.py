"""Univariate Gaussian anamorphosis and the perturbed-observation GA-EnKF.

Each state and observation coordinate gets its own monotone map to a
standard-normal variable, built from the ensemble for that coordinate:

* ``pl``  -- ranks mapped to normal quantiles ``Phi^{-1}(k / (N + 1))``,
  piecewise-linear between the sorted members, with fixed anchor points for
  extrapolation;
* ``kde`` -- ``Phi^{-1}`` of a Gaussian-kernel CDF estimate, after a logit
  or log pre-transform for bounded variables.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri, log_ndtr

from .enkf import enkf_update
from .ensemble import inflate
from .observations import ObservingSystem, sample_obs

_SQRT2PI = np.sqrt(2.0 * np.pi)
DOMAINS = ("unbounded", "unit", "positive")


class AnamorphosisError(ValueError):
    """A transform could not be built from the given sample."""


@dataclass
class PiecewiseLinearMap:
    """Monotone piecewise-linear map ``knots -> gauss`` (both increasing).

    Pure interpolation: values outside the knot hull are clamped to the end
    knots in both directions.  Linear extension past the anchors turns a
    heavy-tailed observation into an arbitrarily large transformed
    innovation, which wrecks the filter for log-normal observations.
    """

    knots: np.ndarray
    gauss: np.ndarray
    domain: str = "unbounded"

    def forward(self, v):
        return np.interp(np.asarray(v, dtype=float), self.knots, self.gauss)

    def inverse(self, g):
        return np.interp(np.asarray(g, dtype=float), self.gauss, self.knots)


def build_pl_map(sample, domain="unbounded", anchors=True):
    """Rank-based piecewise-linear anamorphosis.

    Sorted member k (1-based) maps to ``Phi^{-1}(k / (N + 1))``.  Anchor
    points per domain:

    ``unbounded``  mean -/+ 10 sd  ->  -/+ 10
    ``unit``       0 -> -20, 1 -> 20
    ``positive``   0 -> -20, mean + 4 sd -> 4

    An anchor that would break monotonicity (it lies inside the sample
    hull, which happens for heavy right tails) is dropped.
    """
    x = np.asarray(sample, dtype=float)
    n = x.size
    if n < 2:
        raise AnamorphosisError("need at least two sample points")
    order = np.argsort(x, kind="stable")
    xs = x[order]
    if xs[0] == xs[-1]:
        raise AnamorphosisError("all sample values identical")
    xs = _untie(xs)
    g = ndtri(np.arange(1, n + 1) / (n + 1.0))
    if anchors:
        mu, sd = x.mean(), x.std(ddof=1)
        if domain == "unbounded":
            lo, hi = (mu - 10 * sd, -10.0), (mu + 10 * sd, 10.0)
        elif domain == "unit":
            lo, hi = (0.0, -20.0), (1.0, 20.0)
        elif domain == "positive":
            lo, hi = (0.0, -20.0), (mu + 4 * sd, 4.0)
        else:
            raise ValueError(f"unknown domain {domain!r}")
        if lo[0] < xs[0] and lo[1] < g[0]:
            xs, g = np.r_[lo[0], xs], np.r_[lo[1], g]
        if hi[0] > xs[-1] and hi[1] > g[-1]:
            xs, g = np.r_[xs, hi[0]], np.r_[g, hi[1]]
    return PiecewiseLinearMap(xs, g, domain)


def _untie(xs):
    d = np.diff(xs)
    if np.all(d > 0):
        return xs
    eps = 1e-12 * max(np.ptp(xs), 1.0)
    return xs + eps * np.arange(xs.size)


def _pre(v, domain):
    v = np.asarray(v, dtype=float)
    if domain == "unbounded":
        return v
    if domain == "unit":
        return np.log(v) - np.log1p(-v)
    if domain == "positive":
        return np.log(v)
    raise ValueError(f"unknown domain {domain!r}")


def _pre_inv(w, domain):
    if domain == "unbounded":
        return w
    if domain == "unit":
        return 1.0 / (1.0 + np.exp(-w))
    return np.exp(w)


def silverman_bandwidth(x):
    """``1.06 min(sd, IQR / 1.34) N^(-1/5)`` along the last axis."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    q75, q25 = np.percentile(x, [75.0, 25.0], axis=-1)
    return 1.06 * np.minimum(np.std(x, ddof=1, axis=-1), (q75 - q25) / 1.34) * n ** (-0.2)


def kde_cdf(centers, h, w):
    """Gaussian-kernel CDF.  Batched: ``centers (K, N)``, ``h (K,)``,
    ``w (K, M)`` -> ``(K, M)``."""
    s = (w[:, :, None] - centers[:, None, :]) / h[:, None, None]
    return ndtr(s).mean(axis=-1)


def kde_pdf(centers, h, w):
    s = (w[:, :, None] - centers[:, None, :]) / h[:, None, None]
    return np.exp(-0.5 * s * s).mean(axis=-1) / (_SQRT2PI * h[:, None])


def kde_gauss(centers, h, w):
    """``Phi^{-1}(kde_cdf)`` with a log-space fallback far out in the tails."""
    F = kde_cdf(centers, h, w)
    g = ndtri(F)
    far = (F < 1e-12) | (F > 1.0 - 1e-8)
    if np.any(far):
        kk, mm = np.nonzero(far)
        s = (w[kk, mm][:, None] - centers[kk]) / h[kk][:, None]
        lo = _logmeanexp(log_ndtr(s))
        hi = _logmeanexp(log_ndtr(-s))
        g[kk, mm] = np.where(lo < hi, ndtri_exp(lo), -ndtri_exp(hi))
    return g


def kde_quantile(centers, h, g, guess=None, tol=1e-10, max_iter=200):
    """Solve ``kde_gauss(w) = g`` for ``w`` row by row.

    Safeguarded Newton inside a bracket that starts at the sample hull
    expanded by 20 sd; bisection whenever a Newton step leaves the bracket.
    Only unconverged entries are iterated.

    Raises
    ------
    AnamorphosisError
        If a root lies outside the bracket or Newton/bisection stalls.
    """
    g = np.asarray(g, dtype=float)
    K, M = g.shape
    upper = g > 0
    # residual on the side of the CDF with the better precision; deep in
    # the tails it is taken in log probability so the target stays resolvable
    log_target = log_ndtr(-np.abs(g))
    deep = (np.abs(g) > _DEEP).ravel()
    sign = np.where(upper, -1.0, 1.0)
    sd = np.maximum(np.std(centers, ddof=1, axis=-1), h)[:, None]
    lo = np.broadcast_to(centers.min(axis=-1)[:, None] - 20.0 * sd, g.shape).copy()
    hi = np.broadcast_to(centers.max(axis=-1)[:, None] + 20.0 * sd, g.shape).copy()
    if guess is None:
        cs = np.sort(centers, axis=-1)
        ranks = ndtri(np.arange(1, cs.shape[1] + 1) / (cs.shape[1] + 1.0))
        guess = np.stack([np.interp(g[k], ranks, cs[k]) for k in range(K)])
    w = np.clip(guess, lo, hi).ravel()
    lo, hi = lo.ravel(), hi.ravel()
    edges = (lo.copy(), hi.copy())
    rows = np.repeat(np.arange(K), M)
    log_target, sign = log_target.ravel(), sign.ravel()
    active = np.arange(K * M)
    for _ in range(max_iter):
        r = rows[active]
        wa = w[active]
        hr = h[r]
        s = (wa[:, None] - centers[r]) / hr[:, None]
        f, fp = _tail_residual(s, hr, sign[active], log_target[active], deep[active])
        la = np.where(f < 0, wa, lo[active])
        ha = np.where(f > 0, wa, hi[active])
        with np.errstate(divide="ignore", invalid="ignore"):
            wn = wa - f / fp
        bad = ~((wn >= la) & (wn <= ha))
        wn = np.where(bad, 0.5 * (la + ha), wn)
        done = (np.abs(wn - wa) <= tol * np.maximum(1.0, np.abs(wn))) | (ha - la <= tol)
        w[active] = wn
        lo[active] = la
        hi[active] = ha
        active = active[~done]
        if active.size == 0:
            break
    else:
        raise AnamorphosisError("KDE inverse did not converge")
    # a root outside the bracket shows up as a collapsed bracket at its edge
    span = edges[1] - edges[0]
    if np.any((w - edges[0] <= 1e-9 * span) | (edges[1] - w <= 1e-9 * span)):
        raise AnamorphosisError("KDE inverse: root outside the +/-20 sd bracket")
    return w.reshape(K, M)


_DEEP = 8.0


def _tail_residual(s, h, sg, log_target, deep):
    """Increasing residual of the KDE tail mass and its derivative in w."""
    f = np.empty(s.shape[0])
    fp = np.empty(s.shape[0])
    sh = ~deep
    if np.any(sh):
        ss, g = s[sh], sg[sh]
        f[sh] = g * (ndtr(g[:, None] * ss).mean(axis=-1) - np.exp(log_target[sh]))
        fp[sh] = np.exp(-0.5 * ss * ss).mean(axis=-1) / (_SQRT2PI * h[sh])
    if np.any(deep):
        ss, g = s[deep], sg[deep]
        log_t = _logmeanexp(log_ndtr(g[:, None] * ss))
        f[deep] = g * (log_t - log_target[deep])
        log_p = _logmeanexp(-0.5 * ss * ss) - np.log(_SQRT2PI * h[deep])
        fp[deep] = np.exp(log_p - log_t)
    return f, fp


@dataclass
class KdeMap:
    """``Phi^{-1}(Fhat(pre(v)))`` with Fhat a Gaussian-kernel CDF estimate
    on the pre-transformed sample (identity, logit, or log)."""

    centers: np.ndarray
    bandwidth: float
    domain: str = "unbounded"

    def kde_cdf(self, w):
        w = np.asarray(w, dtype=float)
        return kde_cdf(self.centers[None], np.array([self.bandwidth]), w.reshape(1, -1)).reshape(w.shape)

    def kde_pdf(self, w):
        w = np.asarray(w, dtype=float)
        return kde_pdf(self.centers[None], np.array([self.bandwidth]), w.reshape(1, -1)).reshape(w.shape)

    def forward(self, v):
        w = _pre(v, self.domain)
        return kde_gauss(self.centers[None], np.array([self.bandwidth]), w.reshape(1, -1)).reshape(w.shape)

    def inverse(self, g, tol=1e-10):
        g = np.asarray(g, dtype=float)
        w = kde_quantile(self.centers[None], np.array([self.bandwidth]), g.reshape(1, -1), tol=tol)
        return _pre_inv(w.reshape(g.shape), self.domain)


def _logmeanexp(a):
    m = np.max(a, axis=-1)
    return m + np.log(np.mean(np.exp(a - m[..., None]), axis=-1))


def ndtri_exp(logp):
    """``Phi^{-1}(exp(logp))`` without underflow for very negative ``logp``."""
    logp = np.asarray(logp, dtype=float)
    out = np.empty(logp.shape)
    ok = logp > -700
    out[ok] = ndtri(np.exp(logp[ok]))
    if np.any(~ok):
        # Mills-ratio starting point, Newton in log space
        lp = logp[~ok]
        x = -np.sqrt(-2.0 * lp)
        for _ in range(8):
            f = log_ndtr(x) - lp
            dlog = np.exp(-0.5 * x * x - log_ndtr(x)) / _SQRT2PI
            x = x - f / dlog
        out[~ok] = x
    return out


def build_kde_map(sample, domain="unbounded"):
    x = np.asarray(sample, dtype=float)
    if x.size < 2:
        raise AnamorphosisError("need at least two sample points")
    _check_domain(x, domain)
    w = _pre(x, domain)
    h = float(silverman_bandwidth(w))
    if not h > 0:
        raise AnamorphosisError("zero bandwidth (degenerate sample)")
    return KdeMap(w, h, domain)


def _check_domain(x, domain):
    if domain == "unit" and not np.all((x > 0) & (x < 1)):
        raise AnamorphosisError("unit-interval sample outside (0, 1)")
    if domain == "positive" and not np.all(x > 0):
        raise AnamorphosisError("positive sample has non-positive values")


@dataclass
class IdentityMap:
    domain: str = "unbounded"

    def forward(self, v):
        return np.array(v, dtype=float)

    def inverse(self, g):
        return np.array(g, dtype=float)


def identity_map(sample, domain="unbounded"):
    """Test hook: forward and inverse are both the identity."""
    return IdentityMap(domain)


MAP_BUILDERS = {"pl": build_pl_map, "kde": build_kde_map, "identity": identity_map}


def ga_enkf_update(X, y, sys: ObservingSystem, L, map_kind, rng, inflation=1.0, Y=None):
    """One perturbed-observation GA-EnKF analysis.

    1. draw ``Y[i] ~ Y | X = X[i]``;
    2-3. build one map per state and per observation coordinate and
       transform the ensembles and ``y``;
    4. inflate the transformed state ensemble and apply the EnKF there;
    5. map the analysis back.

    Parameters
    ----------
    X : ndarray (N, K)
        Forecast ensemble (not inflated).
    y : ndarray (K,)
    sys : ObservingSystem
    L : ndarray (K, K) or None
    map_kind : {"pl", "kde", "identity"}
    rng : numpy.random.Generator
        Stream for the perturbed observations.
    inflation : float
        Multiplicative inflation applied in the transformed space.
    Y : ndarray (N, K), optional
        Pre-drawn perturbed observations (``rng`` is then unused).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if Y is None:
        Y = sample_obs(X, sys, rng)
    if map_kind == "kde":
        return _ga_kde(X, Y, y, sys, L, inflation)
    build = MAP_BUILDERS[map_kind]
    K = X.shape[1]
    xmaps = [build(X[:, k], "unbounded") for k in range(K)]
    ymaps = [build(Y[:, k], sys.domain) for k in range(Y.shape[1])]
    Xh = np.column_stack([m.forward(X[:, k]) for k, m in enumerate(xmaps)])
    Yh = np.column_stack([m.forward(Y[:, k]) for k, m in enumerate(ymaps)])
    yh = np.array([m.forward(y[k:k + 1])[0] for k, m in enumerate(ymaps)])
    if inflation != 1.0:
        Xh = inflate(Xh, inflation)
    Xa_h = enkf_update(Xh, Yh, yh, L)
    return np.column_stack([m.inverse(Xa_h[:, k]) for k, m in enumerate(xmaps)])


def _ga_kde(X, Y, y, sys, L, inflation):
    _check_domain(Y, sys.domain)
    Wx = X.T.copy()
    Wy = _pre(Y, sys.domain).T.copy()
    hx = silverman_bandwidth(Wx)
    hy = silverman_bandwidth(Wy)
    if not (np.all(hx > 0) and np.all(hy > 0)):
        raise AnamorphosisError("zero bandwidth (degenerate sample)")
    Xh0 = kde_gauss(Wx, hx, Wx)
    Xh = Xh0.T
    Yh = kde_gauss(Wy, hy, Wy).T
    yh = kde_gauss(Wy, hy, _pre(y, sys.domain)[:, None])[:, 0]
    if inflation != 1.0:
        Xh = inflate(Xh, inflation)
    Xa_h = enkf_update(Xh, Yh, yh, L)
    # Newton starts from interpolating the (transformed, original) member pairs
    order = np.argsort(Wx, axis=1)
    xs = np.take_along_axis(Wx, order, axis=1)
    gs = np.take_along_axis(Xh0, order, axis=1)
    G = Xa_h.T
    guess = np.stack([np.interp(G[k], gs[k], xs[k]) for k in range(G.shape[0])])
    return kde_quantile(Wx, hx, G, guess=guess).T
