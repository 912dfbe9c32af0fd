"""Observing systems: forward sampling and scalar log-likelihoods.

Three systems observe every model site:

* ``linear``:        y = x + e
* ``logit-normal``:  y = 1 / (1 + exp(slope * (x - center) + e))
* ``log-normal``:    y = exp(slope * |x - center| + e)

with e ~ N(0, noise_sd**2) independently per site.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class ObsKind(str, enum.Enum):
    LINEAR = "linear"
    LOGIT_NORMAL = "logit-normal"
    LOG_NORMAL = "log-normal"


@dataclass(frozen=True)
class ObservingSystem:
    kind: ObsKind = ObsKind.LINEAR
    noise_sd: float = 1.0
    slope: float = 0.5
    center: float = 2.5

    def __post_init__(self):
        object.__setattr__(self, "kind", ObsKind(self.kind))
        if not self.noise_sd > 0:
            raise ValueError("noise_sd must be positive")

    @property
    def domain(self) -> str:
        """Range of the observations: 'unbounded', 'unit', or 'positive'."""
        return {
            ObsKind.LINEAR: "unbounded",
            ObsKind.LOGIT_NORMAL: "unit",
            ObsKind.LOG_NORMAL: "positive",
        }[self.kind]

    def forward(self, x, eps):
        """Deterministic map from state and noise realisation to observation."""
        x = np.asarray(x, dtype=float)
        if self.kind is ObsKind.LINEAR:
            return x + eps
        if self.kind is ObsKind.LOGIT_NORMAL:
            with np.errstate(over="ignore"):
                y = 1.0 / (1.0 + np.exp(self.slope * (x - self.center) + eps))
            # keep logit(y) finite
            tiny = np.finfo(float).tiny
            return np.clip(y, tiny, np.nextafter(1.0, 0.0))
        with np.errstate(over="ignore"):
            return np.exp(self.slope * np.abs(x - self.center) + eps)

    def in_range(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.kind is ObsKind.LINEAR:
            return np.isfinite(y)
        if self.kind is ObsKind.LOGIT_NORMAL:
            return (y > 0) & (y < 1)
        return (y > 0) & np.isfinite(y)


def sample_obs(x, sys: ObservingSystem, rng, zero_noise=False):
    """Draw observations of state(s) ``x`` (any shape, sites on the last axis).

    ``zero_noise=True`` forces e = 0, giving the deterministic forward map.
    """
    x = np.asarray(x, dtype=float)
    eps = np.zeros_like(x) if zero_noise else sys.noise_sd * rng.standard_normal(x.shape)
    return sys.forward(x, eps)


def transformed_obs(y, sys: ObservingSystem):
    """Map y to the quantity that is Gaussian given x (identity, -logit, log)."""
    y = np.asarray(y, dtype=float)
    if not np.all(sys.in_range(y)):
        raise ValueError(f"observation outside the range of the {sys.kind.value} system")
    if sys.kind is ObsKind.LINEAR:
        return y
    if sys.kind is ObsKind.LOGIT_NORMAL:
        return np.log1p(-y) - np.log(y)
    return np.log(y)


def log_likelihood(y, z, sys: ObservingSystem):
    """log [y | z] up to a z-independent constant.

    ``y`` is a scalar observation; ``z`` may be an array of state values.
    """
    t = float(transformed_obs(y, sys))
    z = np.asarray(z, dtype=float)
    if sys.kind is ObsKind.LINEAR:
        mean = z
    elif sys.kind is ObsKind.LOGIT_NORMAL:
        mean = sys.slope * (z - sys.center)
    else:
        mean = sys.slope * np.abs(z - sys.center)
    return -0.5 * ((t - mean) / sys.noise_sd) ** 2


def loglik_function(y, sys: ObservingSystem):
    """Bind an observation value, returning ``z -> log_likelihood(y, z, sys)``."""
    t = float(transformed_obs(y, sys))
    inv = 1.0 / sys.noise_sd
    if sys.kind is ObsKind.LINEAR:
        return lambda z: -0.5 * ((t - np.asarray(z, dtype=float)) * inv) ** 2
    if sys.kind is ObsKind.LOGIT_NORMAL:
        a, c = sys.slope, sys.center
        return lambda z: -0.5 * ((t - a * (np.asarray(z, dtype=float) - c)) * inv) ** 2
    a, c = sys.slope, sys.center
    return lambda z: -0.5 * ((t - a * np.abs(np.asarray(z, dtype=float) - c)) * inv) ** 2
