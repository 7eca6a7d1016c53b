"""Full exponential families and curved submodels embedded in them.

A full family has densities ``p(x; theta) = s(x) exp(theta . t(x) - psi(theta))``.
Natural parameters ``theta`` and expectation parameters ``eta = grad psi(theta)``
are plain 1-d numpy arrays of length ``m``.

A curved model is a smooth map ``omega -> theta(omega)`` from a
``d``-dimensional parameter space into the natural domain.  Models carry
their enveloping family, so most functions here take only the model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import ConvergenceError, ParameterDomainError
from .sampling import RngStream, normal

LOG_2PI = np.log(2.0 * np.pi)


def fd_step(x):
    """Per-coordinate central-difference step ``max(1e-5, 1e-5 |x|)``."""
    return np.maximum(1e-5, 1e-5 * np.abs(np.asarray(x, dtype=float)))


class ExponentialFamily:
    """Base class for an ``m``-dimensional full exponential family.

    Subclasses implement ``psi``, ``grad_psi``, ``hess_psi``,
    ``sufficient_stat``, ``log_base_measure``, ``sample`` and the two
    domain predicates.  ``theta_from_eta`` may return ``None`` when no
    closed form is known; Newton iteration is used then.
    """

    m: int
    name: str = "family"

    def psi(self, theta) -> float:
        raise NotImplementedError

    def grad_psi(self, theta) -> np.ndarray:
        raise NotImplementedError

    def hess_psi(self, theta) -> np.ndarray:
        raise NotImplementedError

    def hess_psi_directional(self, theta, v) -> np.ndarray:
        """Derivative of ``hess_psi`` along ``v``; central differences by default."""
        theta = np.asarray(theta, dtype=float)
        v = np.asarray(v, dtype=float)
        h = 1e-5 * max(1.0, float(np.linalg.norm(theta))) / max(float(np.linalg.norm(v)), 1e-300)
        return (self.hess_psi(theta + h * v) - self.hess_psi(theta - h * v)) / (2.0 * h)

    def sufficient_stat(self, x) -> np.ndarray:
        raise NotImplementedError

    def log_base_measure(self, x):
        raise NotImplementedError

    def sample(self, theta, stream: RngStream, size: int):
        raise NotImplementedError

    def in_domain(self, theta) -> bool:
        raise NotImplementedError

    def in_mean_domain(self, eta) -> bool:
        raise NotImplementedError

    def theta_from_eta(self, eta) -> Optional[np.ndarray]:
        return None

    def initial_theta(self) -> np.ndarray:
        return np.zeros(self.m)

    def check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.m,) or not np.all(np.isfinite(theta)) or not self.in_domain(theta):
            raise ParameterDomainError(f"natural parameter outside the domain of {self.name}")
        return theta


class GaussianMeanFamily(ExponentialFamily):
    """N(mu, sigma2 I_k) with known ``sigma2``.

    ``t(x) = x``, ``theta = mu / sigma2`` and ``eta = mu``.  With
    ``sigma2 = 1`` this is the family in which natural and expectation
    parameters coincide.
    """

    def __init__(self, dim: int, sigma2: float = 1.0):
        if sigma2 <= 0:
            raise ParameterDomainError("sigma2 must be positive")
        self.m = int(dim)
        self.sigma2 = float(sigma2)
        self.name = f"gaussian-mean(k={dim}, sigma2={sigma2:g})"

    def psi(self, theta):
        theta = np.asarray(theta, dtype=float)
        return 0.5 * self.sigma2 * float(theta @ theta)

    def grad_psi(self, theta):
        return self.sigma2 * np.asarray(theta, dtype=float)

    def hess_psi(self, theta):
        return self.sigma2 * np.eye(self.m)

    def hess_psi_directional(self, theta, v):
        return np.zeros((self.m, self.m))

    def sufficient_stat(self, x):
        return np.asarray(x, dtype=float)

    def log_base_measure(self, x):
        x = np.asarray(x, dtype=float)
        return -0.5 * np.sum(x * x, axis=-1) / self.sigma2 - 0.5 * self.m * (LOG_2PI + np.log(self.sigma2))

    def sample(self, theta, stream, size):
        z, nxt = normal(stream, (size, self.m))
        return self.grad_psi(theta) + np.sqrt(self.sigma2) * z, nxt

    def in_domain(self, theta):
        return bool(np.all(np.isfinite(theta)))

    def in_mean_domain(self, eta):
        return bool(np.all(np.isfinite(eta)))

    def theta_from_eta(self, eta):
        return np.asarray(eta, dtype=float) / self.sigma2


class GaussianCovarianceFamily(ExponentialFamily):
    """Zero-mean N_l(0, Sigma) with unknown covariance.

    Packing: ``eta`` holds the upper triangle of ``Sigma`` (``i <= j``,
    row-major, off-diagonals unscaled) and ``t(x)`` the matching products
    ``x_i x_j``.  With precision ``P = Sigma^-1`` the dual coordinates are
    ``theta_ii = -P_ii / 2`` and ``theta_ij = -P_ij`` (``i < j``), so that
    ``theta . t(x) = -x' P x / 2``.  ``psi = -log det(P) / 2`` and the
    ``(2 pi)^(-l/2)`` factor lives in the base measure.
    """

    def __init__(self, l: int):
        self.l = int(l)
        self.m = self.l * (self.l + 1) // 2
        self.rows, self.cols = np.triu_indices(self.l)
        self._diag = self.rows == self.cols
        self.name = f"gaussian-covariance(l={l})"

    # packing helpers
    def vech(self, mat) -> np.ndarray:
        return np.asarray(mat, dtype=float)[self.rows, self.cols]

    def unvech(self, vec) -> np.ndarray:
        out = np.zeros((self.l, self.l))
        out[self.rows, self.cols] = vec
        out[self.cols, self.rows] = vec
        return out

    def precision(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        vals = np.where(self._diag, -2.0 * theta, -theta)
        return self.unvech(vals)

    def theta_from_precision(self, prec) -> np.ndarray:
        vals = self.vech(prec)
        return np.where(self._diag, -0.5 * vals, -vals)

    def sigma(self, theta) -> np.ndarray:
        return np.linalg.inv(self.precision(theta))

    def psi(self, theta):
        sign, logdet = np.linalg.slogdet(self.precision(theta))
        if sign <= 0:
            raise ParameterDomainError("precision is not positive definite")
        return -0.5 * logdet

    def grad_psi(self, theta):
        return self.vech(self.sigma(theta))

    def _isserlis(self, sig):
        r, c = self.rows, self.cols
        return sig[np.ix_(r, r)] * sig[np.ix_(c, c)] + sig[np.ix_(r, c)] * sig[np.ix_(c, r)]

    def hess_psi(self, theta):
        # Cov(x_i x_j, x_k x_l) = S_ik S_jl + S_il S_jk
        return self._isserlis(self.sigma(theta))

    def sufficient_stat(self, x):
        x = np.asarray(x, dtype=float)
        return x[..., self.rows] * x[..., self.cols]

    def log_base_measure(self, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], -0.5 * self.l * LOG_2PI) if x.ndim > 1 else -0.5 * self.l * LOG_2PI

    def sample(self, theta, stream, size):
        chol = np.linalg.cholesky(self.sigma(theta))
        z, nxt = normal(stream, (size, self.l))
        return z @ chol.T, nxt

    def in_domain(self, theta):
        try:
            np.linalg.cholesky(self.precision(theta))
        except np.linalg.LinAlgError:
            return False
        return True

    def in_mean_domain(self, eta):
        try:
            np.linalg.cholesky(self.unvech(eta))
        except np.linalg.LinAlgError:
            return False
        return True

    def theta_from_eta(self, eta):
        return self.theta_from_precision(np.linalg.inv(self.unvech(eta)))

    def initial_theta(self):
        return self.theta_from_precision(np.eye(self.l))


# ---------------------------------------------------------------------------
# parameter conversions, densities, divergence


def theta_to_eta(fam: ExponentialFamily, theta) -> np.ndarray:
    return fam.grad_psi(fam.check_theta(theta))


def eta_to_theta(fam: ExponentialFamily, eta, method: str = "auto",
                 max_iter: int = 100, tol: float = 1e-10) -> np.ndarray:
    """Invert ``eta = grad psi(theta)``.

    ``method="auto"`` uses the family's closed form when it has one.
    Otherwise damped Newton on the convex objective ``psi(theta) - theta.eta``
    with step halving; convergence when the residual ``|grad psi - eta|`` is
    below ``tol * max(1, |eta|)``.
    """
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (fam.m,) or not np.all(np.isfinite(eta)) or not fam.in_mean_domain(eta):
        raise ParameterDomainError("expectation parameter outside the mean domain")
    if method == "auto":
        closed = fam.theta_from_eta(eta)
        if closed is not None:
            return closed
    elif method != "newton":
        raise ValueError(f"unknown method {method!r}")

    scale = max(1.0, float(np.linalg.norm(eta)))
    theta = fam.initial_theta()
    resid = fam.grad_psi(theta) - eta
    obj = fam.psi(theta) - theta @ eta
    for _ in range(max_iter):
        if np.linalg.norm(resid) <= tol * scale:
            return theta
        step = np.linalg.solve(fam.hess_psi(theta), -resid)
        t = 1.0
        for _ in range(60):
            cand = theta + t * step
            if fam.in_domain(cand):
                cand_obj = fam.psi(cand) - cand @ eta
                if cand_obj <= obj + 1e-14 * abs(obj):
                    break
            t *= 0.5
        else:
            raise ConvergenceError("line search failed in eta_to_theta", float(np.linalg.norm(resid)))
        theta, obj = cand, cand_obj
        resid = fam.grad_psi(theta) - eta
    res = float(np.linalg.norm(resid))
    if res <= tol * scale:
        return theta
    raise ConvergenceError("eta_to_theta did not converge", res)


def log_density(fam: ExponentialFamily, theta, x):
    """``log s(x) + theta . t(x) - psi(theta)``; ``x`` may be a batch of points."""
    theta = fam.check_theta(theta)
    return fam.log_base_measure(x) + fam.sufficient_stat(x) @ theta - fam.psi(theta)


def kl_divergence(fam: ExponentialFamily, theta_true, theta_hat) -> float:
    """KL(p_theta_true || p_theta_hat) in Bregman form."""
    th = fam.check_theta(theta_true)
    hat = fam.check_theta(theta_hat)
    val = (th - hat) @ fam.grad_psi(th) - fam.psi(th) + fam.psi(hat)
    return max(float(val), 0.0)


# ---------------------------------------------------------------------------
# curved models and data


@dataclass(frozen=True)
class DataSummary:
    """Sample count and the summed sufficient statistic of i.i.d. data."""

    n: int
    sum_x: np.ndarray
    samples: Optional[np.ndarray] = None
    sum_log_base: Optional[float] = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one observation")
        if not np.all(np.isfinite(self.sum_x)):
            raise ValueError("sufficient statistic is not finite")

    @property
    def mean_stat(self) -> np.ndarray:
        return np.asarray(self.sum_x, dtype=float) / self.n

    @classmethod
    def from_samples(cls, fam: ExponentialFamily, x) -> "DataSummary":
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return cls(n=x.shape[0], sum_x=fam.sufficient_stat(x).sum(axis=0), samples=x,
                   sum_log_base=float(np.sum(fam.log_base_measure(x))))


@dataclass(frozen=True)
class CurvedModel:
    """A ``d``-dimensional model ``omega -> theta(omega)`` inside ``family``.

    ``jacobian`` (m x d) is optional; central differences are used when it
    is missing.  ``initializer`` maps a :class:`DataSummary` to a starting
    point for the MLE and may raise :class:`DegeneracyError`.
    """

    family: ExponentialFamily
    d: int
    embed: Callable[[np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    initializer: Optional[Callable[[DataSummary], np.ndarray]] = None
    domain: Optional[Callable[[np.ndarray], bool]] = None
    name: str = "model"
    extras: dict = field(default_factory=dict, compare=False)

    def check_omega(self, omega) -> np.ndarray:
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        if omega.shape != (self.d,) or not np.all(np.isfinite(omega)):
            raise ParameterDomainError(f"omega must be a finite vector of length {self.d}")
        if self.domain is not None and not self.domain(omega):
            raise ParameterDomainError("omega outside the model domain")
        return omega

    def theta(self, omega) -> np.ndarray:
        return np.asarray(self.embed(self.check_omega(omega)), dtype=float)

    def eta(self, omega) -> np.ndarray:
        return self.family.grad_psi(self.theta(omega))

    def jac_theta(self, omega) -> np.ndarray:
        omega = self.check_omega(omega)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(omega), dtype=float).reshape(self.family.m, self.d)
        h = fd_step(omega)
        cols = []
        for a in range(self.d):
            e = np.zeros(self.d)
            e[a] = h[a]
            cols.append((self.embed(omega + e) - self.embed(omega - e)) / (2 * h[a]))
        return np.column_stack(cols)

    def jac_eta(self, omega) -> np.ndarray:
        return self.family.hess_psi(self.theta(omega)) @ self.jac_theta(omega)


class LogLikelihood(NamedTuple):
    value: float
    includes_base: bool


def avg_log_likelihood(model: CurvedModel, data: DataSummary, omega,
                       include_base: bool = False) -> LogLikelihood:
    """Average log-likelihood ``(theta(omega) . sum_x - n psi) / n``.

    The base-measure term does not depend on ``omega``; it is added only
    when requested and available.
    """
    theta = model.theta(omega)
    val = (theta @ data.sum_x) / data.n - model.family.psi(theta)
    if include_base:
        if data.sum_log_base is None:
            raise ValueError("data carries no base-measure term")
        return LogLikelihood(float(val + data.sum_log_base / data.n), True)
    return LogLikelihood(float(val), False)


def score(model: CurvedModel, data: DataSummary, omega) -> np.ndarray:
    """Gradient of the average log-likelihood, ``J' (xbar - eta(omega))``."""
    return model.jac_theta(omega).T @ (data.mean_stat - model.eta(omega))


def mle(model: CurvedModel, data: DataSummary, omega0=None,
        tol: float = 1e-10, max_iter: int = 100) -> np.ndarray:
    """Maximum-likelihood point by damped Newton from the model initializer.

    The Hessian is a central difference of the score.  When it is not
    negative definite a Fisher-scoring step is taken instead.
    """
    if omega0 is None:
        if model.initializer is None:
            raise ValueError("model has no initializer; pass omega0")
        omega0 = model.initializer(data)
    omega = model.check_omega(omega0)
    loglik = avg_log_likelihood(model, data, omega).value
    grad = score(model, data, omega)
    for _ in range(max_iter):
        if np.linalg.norm(grad) <= tol:
            return omega
        h = fd_step(omega)
        hess = np.empty((model.d, model.d))
        for a in range(model.d):
            e = np.zeros(model.d)
            e[a] = h[a]
            hess[:, a] = (score(model, data, omega + e) - score(model, data, omega - e)) / (2 * h[a])
        hess = 0.5 * (hess + hess.T)
        if np.all(np.linalg.eigvalsh(hess) < 0):
            step = np.linalg.solve(-hess, grad)
        else:
            jac = model.jac_theta(omega)
            fisher = jac.T @ model.family.hess_psi(model.theta(omega)) @ jac
            step = np.linalg.solve(fisher, grad)
        t = 1.0
        for _ in range(50):
            cand = omega + t * step
            try:
                cand_ll = avg_log_likelihood(model, data, cand).value
            except ParameterDomainError:
                cand_ll = -np.inf
            if cand_ll >= loglik - 1e-15 * abs(loglik):
                break
            t *= 0.5
        else:
            raise ConvergenceError("MLE line search failed", float(np.linalg.norm(grad)))
        omega, loglik = cand, cand_ll
        grad = score(model, data, omega)
    res = float(np.linalg.norm(grad))
    if res <= tol:
        return omega
    raise ConvergenceError("MLE did not converge", res)


__all__ = [
    "ExponentialFamily", "GaussianMeanFamily", "GaussianCovarianceFamily",
    "CurvedModel", "DataSummary", "LogLikelihood",
    "theta_to_eta", "eta_to_theta", "log_density", "kl_divergence",
    "avg_log_likelihood", "score", "mle", "fd_step",
]
