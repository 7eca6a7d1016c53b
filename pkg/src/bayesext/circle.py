"""The Fisher circle model: N(mu(omega), sigma2 I_2) with mu = (cos omega, sin omega).

Under the uniform prior on omega everything is available in closed form
through I_0 and I_1.  The concentration ``kappa = n r / sigma2`` (with
``r = |xbar|``) is the only data-dependent Bessel argument.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import DegeneracyError
from .expfam import CurvedModel, DataSummary, GaussianMeanFamily
from .special import bessel_ratio, log_bessel_i0

LOG_2PI = np.log(2.0 * np.pi)


class DegenerateDataWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CircleData:
    n: int
    xbar: np.ndarray
    sigma2: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "xbar", np.asarray(self.xbar, dtype=float).reshape(2))
        if self.n < 1:
            raise ValueError("need at least one observation")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")

    @property
    def r(self) -> float:
        return float(np.hypot(*self.xbar))

    @property
    def phi(self) -> float:
        return float(np.mod(np.arctan2(self.xbar[1], self.xbar[0]), 2 * np.pi))

    @property
    def kappa(self) -> float:
        return self.n * self.r / self.sigma2

    @classmethod
    def from_samples(cls, x, sigma2: float = 1.0) -> "CircleData":
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return cls(x.shape[0], x.mean(axis=0), sigma2)

    def summary(self) -> DataSummary:
        return DataSummary(self.n, self.n * self.xbar)


def mean_of(omega) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    return np.stack([np.cos(omega), np.sin(omega)], axis=-1)


def fisher_circle_model(sigma2: float = 1.0) -> CurvedModel:
    fam = GaussianMeanFamily(2, sigma2)

    def embed(om):
        return mean_of(om[0]) / sigma2

    def jac(om):
        return np.array([[-np.sin(om[0])], [np.cos(om[0])]]) / sigma2

    def init(data: DataSummary):
        xbar = data.mean_stat
        if np.hypot(*xbar) == 0.0:
            raise DegeneracyError("xbar = 0: the MLE direction is undefined")
        return np.array([np.arctan2(xbar[1], xbar[0])])

    return CurvedModel(family=fam, d=1, embed=embed, jacobian=jac, initializer=init,
                       name=f"fisher-circle(sigma2={sigma2:g})")


# ---------------------------------------------------------------------------
# posterior and point estimates


def posterior_log_density(data: CircleData, omega):
    """Posterior of omega under the uniform prior (von Mises)."""
    k = data.kappa
    return k * np.cos(np.asarray(omega) - data.phi) - LOG_2PI - log_bessel_i0(k)


def posterior_quadrature(data: CircleData, nodes: int = 4096):
    """Trapezoid nodes on [0, 2 pi) and posterior weights summing to one."""
    om = 2 * np.pi * np.arange(nodes) / nodes
    w = np.exp(posterior_log_density(data, om)) * (2 * np.pi / nodes)
    return om, w


def bayes_plugin_mean(data: CircleData) -> np.ndarray:
    """``xbar / |xbar|``: the posterior is symmetric about ``phi``."""
    if data.r == 0.0:
        raise DegeneracyError("xbar = 0: the Bayes estimate of omega is undefined")
    return data.xbar / data.r


def extended_plugin_mean(data: CircleData) -> np.ndarray:
    """Posterior mean of ``(cos omega, sin omega)``: ``I1/I0(kappa) xbar/|xbar|``.

    At ``xbar = 0`` the posterior is uniform and the mean is the origin; a
    :class:`DegenerateDataWarning` is emitted.
    """
    if data.r == 0.0:
        warnings.warn("xbar = 0: returning the origin", DegenerateDataWarning, stacklevel=2)
        return np.zeros(2)
    return bessel_ratio(data.kappa) * data.xbar / data.r


def bayesian_predictive_log_density(data: CircleData, y):
    """Log of the posterior-averaged density at points ``y`` (shape (..., 2))."""
    y = np.asarray(y, dtype=float)
    s2 = data.sigma2
    arg = np.linalg.norm(y + data.n * data.xbar, axis=-1) / s2
    return (log_bessel_i0(arg) - log_bessel_i0(data.kappa)
            - 0.5 * (np.sum(y * y, axis=-1) + 1.0) / s2 - np.log(2 * np.pi * s2))


def gaussian_log_density(mean, y, sigma2: float = 1.0):
    y = np.asarray(y, dtype=float)
    d2 = np.sum((y - np.asarray(mean)) ** 2, axis=-1)
    return -0.5 * d2 / sigma2 - np.log(2 * np.pi * sigma2)


# ---------------------------------------------------------------------------
# predictive densities and KL


class Kind(Enum):
    BAYES_PLUGIN = "bayes-plugin"
    EXTENDED_PLUGIN = "extended-plugin"
    BAYESIAN_PREDICTIVE = "bayesian-predictive"


@dataclass(frozen=True)
class CirclePredictive:
    kind: Kind
    mean: Optional[np.ndarray] = None
    data: Optional[CircleData] = None
    sigma2: float = 1.0

    @classmethod
    def bayes_plugin(cls, data: CircleData) -> "CirclePredictive":
        return cls(Kind.BAYES_PLUGIN, bayes_plugin_mean(data), sigma2=data.sigma2)

    @classmethod
    def extended_plugin(cls, data: CircleData) -> "CirclePredictive":
        return cls(Kind.EXTENDED_PLUGIN, extended_plugin_mean(data), sigma2=data.sigma2)

    @classmethod
    def bayesian(cls, data: CircleData) -> "CirclePredictive":
        return cls(Kind.BAYESIAN_PREDICTIVE, data=data, sigma2=data.sigma2)

    def log_density(self, y):
        if self.kind is Kind.BAYESIAN_PREDICTIVE:
            return bayesian_predictive_log_density(self.data, y)
        return gaussian_log_density(self.mean, y, self.sigma2)


def _gl_grid(center, half_width, nodes):
    x, w = np.polynomial.legendre.leggauss(nodes)
    x1 = center[0] + half_width * x
    x2 = center[1] + half_width * x
    g1, g2 = np.meshgrid(x1, x2, indexing="ij")
    ww = np.outer(w, w) * half_width ** 2
    return np.stack([g1.ravel(), g2.ravel()], axis=-1), ww.ravel()


def kl_true_vs_predictive(omega_true: float, data: CircleData, predictive: CirclePredictive,
                          radius: float = 8.0, nodes: int = 200) -> float:
    """KL from the true density to ``predictive``.

    Plugin kinds use ``|mu - mu_hat|^2 / (2 sigma2)``.  The Bayesian
    predictive uses a ``nodes x nodes`` Gauss-Legendre grid on the square of
    half-width ``radius * sigma`` around the true mean.
    """
    mu = mean_of(omega_true)
    s2 = data.sigma2
    if predictive.kind is not Kind.BAYESIAN_PREDICTIVE:
        return float(np.sum((mu - predictive.mean) ** 2) / (2 * s2))
    y, w = _gl_grid(mu, radius * np.sqrt(s2), nodes)
    logp = gaussian_log_density(mu, y, s2)
    logq = predictive.log_density(y)
    return float(np.sum(w * np.exp(logp) * (logp - logq)))


def _expected_log_i0_rice(rho, sigma2, nodes):
    """``E log I0(|w| / sigma2)`` for ``w ~ N(m, sigma2 I_2)``, ``|m| = rho``.

    ``|w|`` is Rice distributed, so this is a 1-d Gauss-Legendre integral
    over ``rho +- 10 sigma`` (clipped at 0).
    """
    sd = np.sqrt(sigma2)
    x, w = np.polynomial.legendre.leggauss(nodes)
    lo = np.maximum(rho - 10.0 * sd, 0.0)
    half = 0.5 * (rho + 10.0 * sd - lo)
    s = half[:, None] * (x + 1.0) + lo[:, None]
    arg = s * rho[:, None] / sigma2
    with np.errstate(divide="ignore"):
        log_pdf = (np.log(s) - np.log(sigma2) - (s - rho[:, None]) ** 2 / (2 * sigma2)
                   + log_bessel_i0(arg.ravel()).reshape(arg.shape) - arg)
    vals = np.exp(log_pdf) * log_bessel_i0((s / sigma2).ravel()).reshape(s.shape)
    # row-wise sums keep each trial independent of the batch it is in
    return np.sum(vals * w, axis=1) * half


def bayesian_predictive_kl(omega_true: float, n: int, xbar, sigma2: float = 1.0,
                           nodes: int = 8, rice_nodes: int = 64, switch: float = 8.0) -> np.ndarray:
    """Vectorized KL to the Bayesian predictive for a batch of sample means.

    Uses ``KL = 1/sigma2 + log I0(kappa) - E log I0(|w| / sigma2)`` with
    ``w = y + n xbar`` and ``y ~ N(mu, sigma2 I)``.  When the centre of
    ``w`` is at least ``switch`` standard deviations from the origin the
    expectation is a ``nodes x nodes`` Gauss-Hermite rule; closer in, the
    complex zeros of I0 near ``w = 0`` slow that rule down and the 1-d Rice
    form with ``rice_nodes`` Gauss-Legendre nodes is used instead.  Both
    branches are accurate to about 1e-9.  ``xbar`` has shape (T, 2).
    """
    xbar = np.atleast_2d(np.asarray(xbar, dtype=float))
    mu = mean_of(omega_true)
    sd = np.sqrt(sigma2)
    c = n * xbar  # (T, 2)
    rho = np.hypot(mu[0] + c[:, 0], mu[1] + c[:, 1])
    near = rho < switch * sd
    expected = np.empty(c.shape[0])

    far = ~near
    if np.any(far):
        z, w = np.polynomial.hermite_e.hermegauss(nodes)
        w = w / np.sqrt(2 * np.pi)
        z1, z2 = np.meshgrid(z, z, indexing="ij")
        ww = np.outer(w, w).ravel()
        shift = mu + sd * np.stack([z1.ravel(), z2.ravel()], axis=-1)  # (K, 2)
        cf = c[far]
        arg = np.hypot(cf[:, None, 0] + shift[None, :, 0], cf[:, None, 1] + shift[None, :, 1]) / sigma2
        expected[far] = np.sum(log_bessel_i0(arg.ravel()).reshape(arg.shape) * ww, axis=1)
    if np.any(near):
        expected[near] = _expected_log_i0_rice(rho[near], sigma2, rice_nodes)

    kappa = n * np.hypot(xbar[:, 0], xbar[:, 1]) / sigma2
    return 1.0 / sigma2 + log_bessel_i0(kappa) - expected
