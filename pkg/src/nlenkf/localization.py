"""Ring distances and Schur-product localization weights."""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np


@dataclass(frozen=True)
class LocalizationSpec:
    radius: float = math.inf
    n_sites: int = 40
    chordal: bool = False

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("localization radius must be positive")


def ring_distance(i, j, n=40):
    """Shortest distance between sites ``i`` and ``j`` on a ring of ``n``."""
    d = np.abs(np.asarray(i) - np.asarray(j)) % n
    return np.minimum(d, n - d)


def chordal_distance(i, j, n=40):
    """Euclidean distance after placing the sites on a circle of
    circumference ``n`` (so neighbouring sites are ~1 apart)."""
    return n / np.pi * np.sin(np.pi * ring_distance(i, j, n) / n)


def loc_weight(i, j, spec: LocalizationSpec):
    if math.isinf(spec.radius):
        return np.ones(np.broadcast(np.asarray(i), np.asarray(j)).shape)
    dist = chordal_distance if spec.chordal else ring_distance
    d = dist(i, j, spec.n_sites)
    return np.exp(-0.5 * (d / spec.radius) ** 2)


def loc_matrix(spec: LocalizationSpec):
    """Full ``n_sites x n_sites`` localization matrix."""
    idx = np.arange(spec.n_sites)
    return loc_weight(idx[:, None], idx[None, :], spec)
