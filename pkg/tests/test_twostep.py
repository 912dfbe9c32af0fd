import numpy as np
import pytest

from nlenkf.ensemble import inflate
from nlenkf.localization import LocalizationSpec, loc_matrix
from nlenkf.observations import ObservingSystem
from nlenkf.scalar_update import rhf_scalar_update
from nlenkf.twostep import choose_z, regress_increments, regression_slopes, two_step_assimilate


def test_choose_z(rng):
    E = rng.normal(size=(10, 40))
    np.testing.assert_array_equal(choose_z(7)(E), E[:, 7])
    assert not np.array_equal(choose_z(3)(E), choose_z(4)(E))
    np.testing.assert_allclose(inflate(choose_z(5)(E)[:, None], 1.3)[:, 0],
                               choose_z(5)(inflate(E, 1.3)), rtol=1e-14)


def test_zero_increment_leaves_ensemble(rng):
    E = rng.normal(size=(20, 40))
    z = E[:, 3]
    np.testing.assert_array_equal(regress_increments(E, z, z, np.ones(40)), E)


def test_observed_coordinate_set_exactly(rng):
    E = rng.normal(size=(20, 40))
    z = E[:, 3].copy()
    zp = z + rng.normal(size=20)
    out = regress_increments(E, z, zp, np.ones(40))
    np.testing.assert_allclose(out[:, 3], zp, atol=1e-13)


def test_increment_linear_in_weight(rng):
    E = rng.normal(size=(30, 6))
    z = E[:, 0].copy()
    zp = 0.5 * z + 1.0
    L = np.full(6, 0.3)
    a = regress_increments(E, z, zp, L) - E
    L2 = L.copy()
    L2[4] *= 2
    b = regress_increments(E, z, zp, L2) - E
    np.testing.assert_allclose(b[:, 4], 2 * a[:, 4], rtol=1e-13)
    np.testing.assert_array_equal(np.delete(b, 4, axis=1), np.delete(a, 4, axis=1))


def test_slope_converges_to_truth():
    r = np.random.default_rng(11)
    b = np.array([0.7, -1.2, 0.0])
    errs = []
    for n in (100, 10_000):
        z = r.normal(size=n)
        X = z[:, None] * b + 0.5 * r.normal(size=(n, 3))
        errs.append(np.max(np.abs(regression_slopes(X, z) - b)))
    assert errs[1] < 5 * 0.5 / np.sqrt(10_000)
    assert errs[1] < errs[0]


def test_zero_variance_skips(rng, caplog):
    E = rng.normal(size=(10, 4))
    E[:, 1] = 2.0
    out = regress_increments(E, E[:, 1], E[:, 1] + 1, np.ones(4))
    np.testing.assert_array_equal(out, E)
    assert "zero prior variance" in caplog.text


@pytest.mark.parametrize("kind", ["rhf", "irhf"])
def test_flat_likelihood_is_identity(rng, kind):
    E = rng.normal(size=(30, 40)) + 2.0
    y = np.full(40, 2.0)
    sys = ObservingSystem("linear", noise_sd=1e9)
    out = two_step_assimilate(E, y, sys, LocalizationSpec(5.0), kind)
    np.testing.assert_allclose(out, E, atol=1e-6)


def test_tiny_radius_changes_only_observed_site(rng):
    E = rng.normal(size=(30, 40))
    y = np.full(40, 1.5)
    sys = ObservingSystem("linear")
    L = loc_matrix(LocalizationSpec(0.05))
    out = two_step_assimilate(E, y, sys, L, "rhf", order=[7])
    d = np.abs(out - E).max(axis=0)
    assert d[7] > 0.1
    assert np.max(np.delete(d, 7)) < 1e-50


def test_serial_order_matters_but_is_deterministic(rng):
    E = rng.normal(size=(20, 40))
    y = rng.normal(size=40)
    sys = ObservingSystem("linear")
    a = two_step_assimilate(E, y, sys, LocalizationSpec(3.0), "rhf")
    b = two_step_assimilate(E, y, sys, LocalizationSpec(3.0), "rhf")
    c = two_step_assimilate(E, y, sys, LocalizationSpec(3.0), "rhf", order=range(39, -1, -1))
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_matches_per_site_composition(rng):
    E = rng.normal(size=(15, 5))
    y = rng.normal(size=5)
    sys = ObservingSystem("linear")
    L = loc_matrix(LocalizationSpec(2.0, n_sites=5))
    ref = E.copy()
    for k in range(5):
        z = ref[:, k].copy()
        zp = rhf_scalar_update(z, lambda s, k=k: -0.5 * (y[k] - s) ** 2)
        ref = regress_increments(ref, z, zp, L[k])
    np.testing.assert_allclose(two_step_assimilate(E, y, sys, L, "rhf"), ref, atol=1e-12)


@pytest.mark.parametrize("kind", ["rhf", "irhf"])
def test_gaussian_toy_matches_kalman(kind):
    # x = (x0, x1), prior N(0, [[1, .6], [.6, 1]]), y = x0 + N(0, 1), y = 1
    n = 4000
    r = np.random.default_rng(21)
    C = np.array([[1.0, 0.6], [0.6, 1.0]])
    E = r.multivariate_normal([0, 0], C, size=n)
    out = two_step_assimilate(E, np.array([1.0, 0.0]), ObservingSystem("linear"),
                              np.ones((2, 2)), kind, order=[0])
    tol = 5 / np.sqrt(n)
    np.testing.assert_allclose(out.mean(axis=0), [0.5, 0.3], atol=tol)
    np.testing.assert_allclose(np.cov(out.T), [[0.5, 0.3], [0.3, 0.82]], atol=tol)
