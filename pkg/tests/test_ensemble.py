import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from nlenkf.ensemble import (check_divergence, crps, crps_ensemble, ensemble_mean, inflate,
                             rmse, spread)


def test_mean_basic(rng):
    v = rng.standard_normal(40)
    np.testing.assert_array_equal(ensemble_mean(np.tile(v, (4, 1))), v)
    np.testing.assert_array_equal(ensemble_mean(np.stack([v, -v])), np.zeros(40))
    E = rng.standard_normal((3, 40))
    np.testing.assert_allclose(ensemble_mean(E), (E[0] + E[1] + E[2]) / 3, atol=1e-14)


def test_rmse(rng):
    t = rng.standard_normal(40)
    E = t + rng.standard_normal((5, 40))
    E -= E.mean(axis=0) - t
    assert rmse(E, t) == pytest.approx(0, abs=1e-14)
    assert rmse(E + 1, t) == pytest.approx(1.0)
    F = rng.standard_normal((6, 40))
    direct = np.sqrt(sum((t[k] - F[:, k].sum() / 6) ** 2 for k in range(40)) / 40)
    assert rmse(F, t) == pytest.approx(direct, rel=1e-12)


def test_spread(rng):
    assert spread(np.ones((4, 40))) == 0
    E = np.stack([np.zeros(40), np.full(40, 2.0)])
    assert spread(E) == pytest.approx(np.sqrt(2))
    F = rng.standard_normal((7, 40))
    m = F.sum(axis=0) / 7
    var = ((F - m) ** 2).sum(axis=0) / 6
    assert spread(F) == pytest.approx(np.sqrt(var.mean()), rel=1e-12)


def test_permutation_invariance(rng):
    E = rng.standard_normal((9, 40))
    t = rng.standard_normal(40)
    P = E[rng.permutation(9)]
    assert rmse(P, t) == pytest.approx(rmse(E, t), rel=1e-14)
    assert spread(P) == pytest.approx(spread(E), rel=1e-14)


def test_crps_examples():
    assert crps([3.0], 3.0) == 0
    assert crps([0.0, 1.0], 0.0) == pytest.approx(0.25)
    s = [0.3, -1.2, 2.0]
    far = [crps(s, -100.0 - d) for d in (0.0, 1.0, 2.0)]
    np.testing.assert_allclose(np.diff(far), [1.0, 1.0], rtol=1e-12)


def crps_integral(sample, truth):
    s = np.sort(sample)
    pts = np.unique(np.concatenate((s, [truth])))

    def f(t):
        F = np.searchsorted(s, t, side="right") / s.size
        return (F - (t >= truth)) ** 2

    # integrand is piecewise constant between the points
    total = sum(integrate.quad(f, a, b, epsabs=1e-14)[0] for a, b in zip(pts[:-1], pts[1:]))
    return total


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=8),
       st.floats(-12, 12, allow_nan=False))
def test_crps_energy_equals_integral(sample, truth):
    assert crps(sample, truth) == pytest.approx(crps_integral(np.array(sample), truth), abs=1e-8)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=20),
       st.floats(-1e3, 1e3, allow_nan=False))
def test_crps_nonnegative(sample, truth):
    assert crps(sample, truth) >= -1e-9 * (1 + max(abs(truth), max(map(abs, sample))))


def test_crps_ensemble_is_site_mean(rng):
    E = rng.standard_normal((11, 40))
    t = rng.standard_normal(40)
    expect = np.mean([crps(E[:, k], t[k]) for k in range(40)])
    assert crps_ensemble(E, t) == pytest.approx(expect, rel=1e-12)


def test_inflate(rng):
    E = rng.standard_normal((10, 40)) * 3 + 5
    np.testing.assert_array_equal(inflate(E, 1.0), E)
    D = np.tile(rng.standard_normal(40), (5, 1))
    np.testing.assert_allclose(inflate(D, 1.4), D, rtol=1e-15)
    out = inflate(E, 1.2)
    assert spread(out) == pytest.approx(1.2 * spread(E), rel=1e-12)
    np.testing.assert_allclose(out.mean(axis=0), E.mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(out - out.mean(axis=0), 1.2 * (E - E.mean(axis=0)), atol=1e-12)
    with pytest.raises(ValueError):
        inflate(E, 0.9)


def test_divergence():
    E = np.ones((4, 40))
    assert not check_divergence(E)
    E[1, 3] = np.inf
    assert check_divergence(E)
    assert check_divergence(np.full((4, 40), 1e6), threshold=1e3)
