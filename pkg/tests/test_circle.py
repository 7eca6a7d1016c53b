import warnings

import numpy as np
import pytest
from scipy.integrate import quad
from hypothesis import given, strategies as st

from bayesext.circle import (CircleData, CirclePredictive, DegenerateDataWarning, Kind, bayes_plugin_mean,
                             bayesian_predictive_kl, bayesian_predictive_log_density, extended_plugin_mean,
                             gaussian_log_density, kl_true_vs_predictive, mean_of, posterior_log_density,
                             posterior_quadrature)
from bayesext.errors import DegeneracyError
from bayesext.special import log_bessel_i0


def data_at(n, r, phi=0.0, sigma2=1.0):
    return CircleData(n, r * mean_of(phi), sigma2)


def quadrature_mean_eta(data, nodes=4096):
    """Independent trapezoid rule for the posterior mean of (cos, sin)."""
    om = 2 * np.pi * np.arange(nodes) / nodes
    logw = data.kappa * np.cos(om - data.phi)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    return np.array([w @ np.cos(om), w @ np.sin(om)])


def gh_grid(center, sd, nodes=60):
    z, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / np.sqrt(2 * np.pi)
    g1, g2 = np.meshgrid(center[0] + sd * z, center[1] + sd * z, indexing="ij")
    return np.stack([g1.ravel(), g2.ravel()], axis=1), np.outer(w, w).ravel()


def test_data_properties():
    d = CircleData(4, np.array([0.3, -0.4]))
    assert d.r == pytest.approx(0.5)
    assert 0 <= d.phi < 2 * np.pi
    np.testing.assert_allclose(d.r * mean_of(d.phi), d.xbar, atol=1e-12)
    assert d.kappa == pytest.approx(2.0)
    assert CircleData(4, np.array([0.3, -0.4]), sigma2=2.0).kappa == pytest.approx(1.0)
    with pytest.raises(ValueError):
        CircleData(0, np.zeros(2))
    with pytest.raises(ValueError):
        CircleData(3, np.zeros(2), sigma2=0.0)


def test_from_samples():
    x = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    d = CircleData.from_samples(x)
    assert d.n == 3
    np.testing.assert_allclose(d.xbar, [2 / 3, 2 / 3])
    np.testing.assert_allclose(d.summary().mean_stat, d.xbar)


# ---------------------------------------------------------------------------
# posterior


@pytest.mark.parametrize("n,r", [(5, 0.3), (20, 1.0), (50, 2.0)])
def test_posterior_normalizes(n, r):
    data = data_at(n, r, 1.0)
    _, w = posterior_quadrature(data)
    assert abs(w.sum() - 1) <= 1e-10


def test_posterior_peak_and_uniform_case():
    data = data_at(10, 0.7, 2.0)
    om = np.linspace(0, 2 * np.pi, 3601)
    assert om[np.argmax(posterior_log_density(data, om))] == pytest.approx(2.0, abs=2e-3)
    flat = CircleData(3, np.zeros(2))
    np.testing.assert_allclose(posterior_log_density(flat, om), -np.log(2 * np.pi), atol=1e-15)


# ---------------------------------------------------------------------------
# point estimates


def test_bayes_plugin_values():
    np.testing.assert_allclose(bayes_plugin_mean(CircleData(3, np.array([2.0, 0.0]))), [1.0, 0.0])
    np.testing.assert_allclose(bayes_plugin_mean(CircleData(3, np.array([0.3, 0.4]))), [0.6, 0.8])
    with pytest.raises(DegeneracyError):
        bayes_plugin_mean(CircleData(3, np.zeros(2)))


def test_posterior_circular_mean_is_phi():
    data = data_at(7, 0.6, 2.4)
    om, w = posterior_quadrature(data)
    circ = np.arctan2(w @ np.sin(om), w @ np.cos(om))
    assert np.mod(circ, 2 * np.pi) == pytest.approx(2.4, abs=1e-10)


@pytest.mark.parametrize("n", [2, 5, 10, 20, 40])
@pytest.mark.parametrize("r", [0.05, 0.3, 0.6, 1.0, 1.5])
def test_extended_mean_matches_quadrature(n, r):
    data = data_at(n, r, 0.9)
    assert np.max(np.abs(extended_plugin_mean(data) - quadrature_mean_eta(data))) <= 1e-10


def test_extended_mean_matches_module_quadrature():
    data = data_at(20, 0.3, 5.0)
    om, w = posterior_quadrature(data)
    np.testing.assert_allclose(extended_plugin_mean(data), [w @ np.cos(om), w @ np.sin(om)], atol=1e-12)


def test_extended_mean_degenerate():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out = extended_plugin_mean(CircleData(5, np.zeros(2)))
    np.testing.assert_array_equal(out, 0.0)
    assert any(issubclass(c.category, DegenerateDataWarning) for c in caught)


@given(st.integers(1, 10**5), st.floats(1e-6, 50.0), st.floats(0, 2 * np.pi), st.floats(0.1, 10.0))
def test_shrinkage_ordering(n, r, phi, sigma2):
    data = data_at(n, r, phi, sigma2)
    ext = np.linalg.norm(extended_plugin_mean(data))
    assert 0 < ext < 1 or (ext == 1.0 and data.kappa > 1e15)
    assert np.linalg.norm(bayes_plugin_mean(data)) == pytest.approx(1.0, abs=1e-15)


# ---------------------------------------------------------------------------
# Bayesian predictive


@pytest.mark.parametrize("n,r,sigma2", [(5, 1.0, 1.0), (20, 0.4, 1.0), (10, 0.8, 3.0)])
def test_bayesian_predictive_normalizes(n, r, sigma2):
    data = data_at(n, r, 0.5, sigma2)
    x, w = np.polynomial.legendre.leggauss(200)
    half = 10 * np.sqrt(sigma2)
    g1, g2 = np.meshgrid(half * x, half * x, indexing="ij")
    y = np.stack([g1.ravel(), g2.ravel()], axis=1)
    total = np.sum(np.outer(w, w).ravel() * half ** 2 * np.exp(bayesian_predictive_log_density(data, y)))
    assert abs(total - 1) <= 1e-6


def test_bayesian_predictive_is_posterior_mixture(rng):
    data = data_at(8, 0.9, 1.3, 1.5)
    om, w = posterior_quadrature(data)
    y = rng.normal(size=(20, 2)) * 2
    mix = np.array([np.sum(w * np.exp(gaussian_log_density(mean_of(om), yy, data.sigma2))) for yy in y])
    np.testing.assert_allclose(np.exp(bayesian_predictive_log_density(data, y)), mix, rtol=1e-8)


def test_bayesian_predictive_rotation_invariant_at_zero_mean():
    data = CircleData(6, np.zeros(2))
    ang = np.linspace(0, 2 * np.pi, 13)
    y = 1.7 * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    vals = bayesian_predictive_log_density(data, y)
    np.testing.assert_allclose(vals, vals[0], atol=1e-14)


def test_bayesian_predictive_is_not_unit_covariance_gaussian():
    data = data_at(5, 1.0)
    y, w = gh_grid(data.xbar, 2.0, nodes=80)
    # weights against a N(xbar, 4 I) reference density
    ref = gaussian_log_density(data.xbar, y, 4.0)
    q = np.exp(bayesian_predictive_log_density(data, y) - ref) * w
    mean = q @ y
    cov = (y - mean).T @ ((y - mean) * q[:, None])
    assert abs(q.sum() - 1) <= 1e-9
    # the radial spread of omega adds variance beyond the unit noise
    assert np.max(np.abs(cov - np.eye(2))) > 10 * 1e-7


# ---------------------------------------------------------------------------
# KL


def test_plugin_kl_values():
    data = data_at(10, 1.0, 0.0)
    om = 0.8
    assert kl_true_vs_predictive(om, data, CirclePredictive(Kind.BAYES_PLUGIN, mean_of(om))) == 0.0
    anti = CirclePredictive(Kind.EXTENDED_PLUGIN, -mean_of(om))
    assert kl_true_vs_predictive(om, data, anti) == pytest.approx(2.0, abs=1e-14)


def test_plugin_kl_matches_quadrature_definition():
    data = data_at(6, 0.7, 0.4, 2.0)
    pred = CirclePredictive.extended_plugin(data)
    om = 1.0
    y, w = gh_grid(mean_of(om), np.sqrt(2.0))
    integrand = gaussian_log_density(mean_of(om), y, 2.0) - pred.log_density(y)
    assert kl_true_vs_predictive(om, data, pred) == pytest.approx(w @ integrand, abs=1e-12)


@pytest.mark.parametrize("om", [0.0, 0.5, 2.0])
def test_bayesian_kl_paths_agree(om):
    data = data_at(15, 0.8, 0.3)
    pred = CirclePredictive.bayesian(data)
    grid = kl_true_vs_predictive(om, data, pred)
    fast = bayesian_predictive_kl(om, data.n, data.xbar[None], data.sigma2)[0]
    # independent oracle: Gauss-Hermite over y on the defining integral
    y, w = gh_grid(mean_of(om), 1.0, nodes=80)
    direct = w @ (gaussian_log_density(mean_of(om), y) - bayesian_predictive_log_density(data, y))
    assert grid == pytest.approx(direct, abs=1e-7)
    assert fast == pytest.approx(direct, abs=1e-10)
    assert grid >= 0 and np.isfinite(grid)


def rice_reference(rho, sigma2):
    """Adaptive quadrature of E log I0(|w| / sigma2) with |w| Rice distributed."""
    sd = np.sqrt(sigma2)

    def f(s):
        z = s * rho / sigma2
        return (s / sigma2 * np.exp(-(s - rho) ** 2 / (2 * sigma2) + log_bessel_i0(z) - z)
                * log_bessel_i0(s / sigma2))

    return quad(f, max(rho - 12 * sd, 0.0), rho + 12 * sd, epsabs=1e-13, epsrel=1e-13, limit=200)[0]


@pytest.mark.parametrize("sigma2,n", [(0.3, 5), (1.0, 25), (4.0, 25), (0.1, 50)])
def test_bayesian_kl_against_adaptive_quadrature(rng, sigma2, n):
    # small r puts w = y + n xbar near the origin, the hard case
    r = np.concatenate([rng.uniform(0, 0.2, 20), rng.uniform(0.2, 1.5, 20)])
    phi = rng.uniform(0, 2 * np.pi, r.size)
    xbar = r[:, None] * np.stack([np.cos(phi), np.sin(phi)], axis=1)
    om = 0.2
    rho = np.linalg.norm(mean_of(om) + n * xbar, axis=1)
    ref = np.array([1 / sigma2 + log_bessel_i0(n * rr / sigma2) - rice_reference(p, sigma2)
                    for rr, p in zip(r, rho)])
    np.testing.assert_allclose(bayesian_predictive_kl(om, n, xbar, sigma2), ref, atol=2e-9)


def test_predictive_constructors():
    data = data_at(4, 0.5, 1.0)
    assert CirclePredictive.bayes_plugin(data).kind is Kind.BAYES_PLUGIN
    ext = CirclePredictive.extended_plugin(data)
    assert np.linalg.norm(ext.mean) < 1
    y = np.array([[0.1, 0.2]])
    np.testing.assert_allclose(ext.log_density(y), gaussian_log_density(ext.mean, y))
