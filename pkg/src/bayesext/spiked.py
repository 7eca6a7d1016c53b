"""Zero-mean Gaussian spiked covariance model ``Sigma = lam u u' + I``.

Rank-one identities keep every per-sample cost O(l):

    Sigma^-1 = I - lam / (1 + lam) u u'
    log det Sigma = log(1 + lam)

The posterior is explored by a Metropolis-within-Gibbs chain: a
random-walk block on ``log lam`` and a block on ``u`` that is either an
exact Bingham draw or a tangent-space random walk.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln, logsumexp

from .errors import ConvergenceError, DegeneracyError, ParameterDomainError
from .expfam import CurvedModel, DataSummary, GaussianCovarianceFamily
from .sampling import RngStream

log = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class SpikedParam:
    lam: float
    u: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float).ravel()
        object.__setattr__(self, "u", u)
        if not self.lam > 0:
            raise ParameterDomainError("spike strength must be positive")
        if abs(np.linalg.norm(u) - 1.0) > 1e-12:
            raise ParameterDomainError("spike direction must have unit norm")

    @property
    def l(self) -> int:
        return self.u.size


def covariance(p: SpikedParam) -> np.ndarray:
    return p.lam * np.outer(p.u, p.u) + np.eye(p.l)


# ---------------------------------------------------------------------------
# prior and posterior


@dataclass(frozen=True)
class SpikedPrior:
    """Prior on ``(lam, u)``: ``u`` uniform on the sphere.

    ``lambda_prior`` is ``"half-cauchy"`` (scale ``lambda_scale``) or
    ``"exponential"`` (mean ``lambda_scale``).
    """

    lambda_prior: str = "half-cauchy"
    lambda_scale: float = 1.0

    def __post_init__(self):
        if self.lambda_prior not in ("half-cauchy", "exponential"):
            raise ValueError(f"unknown lambda prior {self.lambda_prior!r}")
        if not self.lambda_scale > 0:
            raise ValueError("prior scale must be positive")

    def log_lambda(self, lam: float) -> float:
        s = self.lambda_scale
        if self.lambda_prior == "half-cauchy":
            return np.log(2.0 / (np.pi * s)) - np.log1p((lam / s) ** 2)
        return -np.log(s) - lam / s

    @staticmethod
    def log_u(l: int) -> float:
        # reciprocal surface area of S^(l-1)
        return gammaln(0.5 * l) - np.log(2.0) - 0.5 * l * np.log(np.pi)


@dataclass(frozen=True)
class SpikedData:
    """Scatter matrix ``S = sum_t x_t x_t'`` of zero-mean samples."""

    n: int
    scatter: np.ndarray

    @property
    def l(self) -> int:
        return self.scatter.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.scatter))

    @classmethod
    def from_samples(cls, x) -> "SpikedData":
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return cls(x.shape[0], x.T @ x)


def _as_data(data) -> SpikedData:
    return data if isinstance(data, SpikedData) else SpikedData.from_samples(data)


def _loglik(n, l, tr_s, quad, lam):
    c = lam / (1.0 + lam)
    return -0.5 * n * l * LOG_2PI - 0.5 * n * np.log1p(lam) - 0.5 * (tr_s - c * quad)


def log_posterior(prior: SpikedPrior, data, p: SpikedParam) -> float:
    """Unnormalized log posterior via the rank-one identities."""
    d = _as_data(data)
    quad = float(p.u @ d.scatter @ p.u)
    return float(_loglik(d.n, d.l, d.trace, quad, p.lam) + prior.log_lambda(p.lam) + prior.log_u(d.l))


def dense_log_likelihood(data, p: SpikedParam) -> float:
    """Cholesky-based log-likelihood of raw samples; reference for the fast path."""
    x = np.atleast_2d(np.asarray(data, dtype=float))
    chol = np.linalg.cholesky(covariance(p))
    z = np.linalg.solve(chol, x.T)
    n, l = x.shape
    return float(-0.5 * n * l * LOG_2PI - n * np.sum(np.log(np.diag(chol))) - 0.5 * np.sum(z * z))


# ---------------------------------------------------------------------------
# sampler


@dataclass(frozen=True)
class SamplerConfig:
    """Chain settings.

    ``direction_kernel`` is ``"gibbs"`` (exact draw of ``u`` from its
    Bingham full conditional) or ``"random-walk"`` (tangent-space
    Metropolis step of size ``direction_step``, repeated
    ``direction_sweeps`` times per iteration).  Steps left at ``None`` are
    set once from the data by :func:`default_steps`.
    """

    n_draws: int = 1000
    burn_in: int = 250
    lambda_step: Optional[float] = None
    direction_step: Optional[float] = None
    direction_kernel: str = "gibbs"
    direction_sweeps: int = 1
    lambda_sweeps: int = 5
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        if self.direction_kernel not in ("gibbs", "random-walk"):
            raise ValueError(f"unknown direction kernel {self.direction_kernel!r}")
        if self.n_draws < 1 or self.burn_in < 0:
            raise ValueError("need n_draws >= 1 and burn_in >= 0")

    @classmethod
    def for_dimension(cls, l: int, **kw) -> "SamplerConfig":
        """Draw/burn-in defaults: 1000/250 for small l, 2000/500 from l = 80 on."""
        base = dict(n_draws=2000, burn_in=500) if l >= 80 else dict(n_draws=1000, burn_in=250)
        base.update(kw)
        return cls(**base)


@dataclass(frozen=True)
class PosteriorDraws:
    lams: np.ndarray          # (n_draws,)
    us: np.ndarray            # (n_draws, l)
    burn_in: int
    acceptance_rates: dict
    seed: int
    stream_id: int = 0
    warnings: tuple = field(default=())

    def __len__(self):
        return self.lams.size

    def __getitem__(self, k) -> SpikedParam:
        return SpikedParam(float(self.lams[k]), self.us[k])

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    @property
    def l(self) -> int:
        return self.us.shape[1]

    @property
    def nbytes(self) -> int:
        return self.lams.nbytes + self.us.nbytes

    @classmethod
    def from_params(cls, params, seed: int = 0) -> "PosteriorDraws":
        params = list(params)
        return cls(np.array([p.lam for p in params]), np.array([p.u for p in params]),
                   burn_in=0, acceptance_rates={}, seed=seed)


def _top_eigvec(mat):
    w, v = np.linalg.eigh(mat)
    return w[-1], v[:, -1]


def default_steps(data) -> tuple[float, float]:
    """Proposal scales fixed once from the data before the chain starts.

    Near the mode, ``sd(log lam) ~ (1 + lam) / lam * sqrt(2 / n)`` and the
    tangent-space spread of ``u`` per direction is about
    ``1 / sqrt(c (s_1 - s_rest))`` with ``c = lam / (1 + lam)`` and
    ``s_1``, ``s_rest`` the top and mean remaining eigenvalues of the
    scatter matrix.  Both steps use the random-walk factor ``2.38 / sqrt(dim)``.
    """
    d = _as_data(data)
    w = np.linalg.eigvalsh(d.scatter)
    lam0 = max(w[-1] / d.n - 1.0, 0.1)
    s_lam = min(2.38 * (1.0 + lam0) / lam0 * np.sqrt(2.0 / d.n), 1.0)
    if d.l == 1:
        return s_lam, 0.0
    c0 = lam0 / (1.0 + lam0)
    gap = max(w[-1] - float(np.mean(w[:-1])), 1e-3 * d.n)
    s_u = min(2.38 / np.sqrt((d.l - 1) * c0 * gap), 1.0 / np.sqrt(d.l - 1))
    return float(s_lam), float(s_u)


class BinghamSampler:
    """Exact draws from ``p(u) ~ exp(c/2 u' S u)`` on the unit sphere.

    Rejection from an angular central Gaussian envelope (Kent, Ganeiber
    and Mardia, 2013).  With ``A = c/2 (s_max I - S)`` the target is
    ``exp(-u' A u)``; the envelope ``(u' Omega u)^(-l/2)`` uses
    ``Omega = I + 2 A / b`` where ``sum_i 1 / (b + 2 a_i) = 1``.
    """

    def __init__(self, scatter):
        w, v = np.linalg.eigh(np.asarray(scatter, dtype=float))
        self.w = w
        self.v = v

    def draw(self, c: float, rng: np.random.Generator, max_tries: int = 100_000):
        a = 0.5 * c * (self.w[-1] - self.w)
        q = a.size
        if q == 1:
            return self.v[:, 0] * (1.0 if rng.random() < 0.5 else -1.0), 1
        b = brentq(lambda b: np.sum(1.0 / (b + 2.0 * a)) - 1.0, 1e-12, float(q))
        om = 1.0 + 2.0 * a / b
        log_m = -0.5 * (q - b) + 0.5 * q * np.log(q / b)
        scale = 1.0 / np.sqrt(om)
        for tries in range(1, max_tries + 1):
            y = rng.standard_normal(q) * scale
            x = y / np.linalg.norm(y)
            log_ratio = -np.sum(a * x * x) + 0.5 * q * np.log(np.sum(om * x * x)) - log_m
            if np.log(rng.random()) < log_ratio:
                return self.v @ x, tries
        raise ConvergenceError("Bingham rejection sampler exhausted its tries")


def sample_posterior(prior: SpikedPrior, data, config: SamplerConfig = SamplerConfig()) -> PosteriorDraws:
    """Metropolis-within-Gibbs chain for ``(lam, u)``.

    Block 1 is a random walk on ``log lam``.  Block 2 updates ``u``: by
    default an exact draw from its full conditional; with
    ``direction_kernel="random-walk"`` it proposes
    ``u' = normalize(u + s z_perp)`` with ``z_perp`` a standard normal
    projected on the tangent space at ``u``.  That proposal density depends
    only on the angle between ``u`` and ``u'``, so it is symmetric.  The
    chain starts at the maximum-likelihood point and all randomness comes
    from the ``(seed, stream_id)`` counter stream.
    """
    d = _as_data(data)
    if d.n < 2:
        raise ValueError("need at least two observations")
    l = d.l
    s_lam, s_u = default_steps(d)
    if config.lambda_step is not None:
        s_lam = config.lambda_step
    if config.direction_step is not None:
        s_u = config.direction_step
    gibbs = config.direction_kernel == "gibbs"
    sweeps = 1 if gibbs else max(1, int(config.direction_sweeps))
    lam_sweeps = max(1, int(config.lambda_sweeps))
    total = config.burn_in + config.n_draws
    rng = RngStream(config.seed, config.stream_id).substream(1).generator()
    bingham = BinghamSampler(d.scatter) if gibbs else None

    top, u = _top_eigvec(d.scatter / d.n)
    scatter, tr_s, n = d.scatter, d.trace, d.n
    log_lam = np.log(max(top - 1.0, 0.1))

    def target_lam(ll, quad):
        lm = np.exp(ll)
        # + ll: Jacobian of the log transform
        return _loglik(n, l, tr_s, quad, lm) + prior.log_lambda(lm) + ll

    quad = float(u @ scatter @ u)
    cur = target_lam(log_lam, quad)

    lams = np.empty(config.n_draws)
    us = np.empty((config.n_draws, l))
    acc = np.zeros(2)
    tries = 0
    for it in range(total):
        keep = it >= config.burn_in
        for _ in range(lam_sweeps):
            prop = log_lam + s_lam * rng.standard_normal()
            new = target_lam(prop, quad)
            if np.log1p(-rng.random()) < new - cur:
                log_lam, cur = prop, new
                acc[0] += keep

        c = np.exp(log_lam) / (1.0 + np.exp(log_lam))
        if gibbs:
            u, k = bingham.draw(c, rng)
            quad = float(u @ scatter @ u)
            tries += k * keep
            acc[1] += keep
        else:
            for _ in range(sweeps):
                zz = rng.standard_normal(l)
                zz -= (zz @ u) * u
                cand = u + s_u * zz
                cand /= np.linalg.norm(cand)
                qc = float(cand @ scatter @ cand)
                # only the u u' term of the likelihood changes
                if np.log1p(-rng.random()) < 0.5 * c * (qc - quad):
                    u, quad = cand, qc
                    acc[1] += keep
        cur = target_lam(log_lam, quad)

        if keep:
            k = it - config.burn_in
            lams[k] = np.exp(log_lam)
            us[k] = u

    rates = {"lambda": acc[0] / (config.n_draws * lam_sweeps), "direction": acc[1] / (config.n_draws * sweeps)}
    if gibbs:
        rates["bingham_efficiency"] = config.n_draws / max(tries, 1)
    warns = tuple(f"{name} acceptance rate {rates[name]:.3f} outside [0.05, 0.8]"
                  for name in ("lambda", "direction")
                  if not (gibbs and name == "direction") and not 0.05 <= rates[name] <= 0.8)
    for w in warns:
        log.warning(w)
    us /= np.linalg.norm(us, axis=1, keepdims=True)
    return PosteriorDraws(lams, us, config.burn_in, rates, config.seed, config.stream_id, warns)


# ---------------------------------------------------------------------------
# estimators and predictive densities


def posterior_mean_sigma(draws: PosteriorDraws) -> np.ndarray:
    """Posterior mean of ``Sigma``; the extended Bayes estimate of eta."""
    if len(draws) == 0:
        raise ValueError("no draws")
    weighted = draws.us * np.sqrt(draws.lams)[:, None]
    out = weighted.T @ weighted / len(draws) + np.eye(draws.l)
    return 0.5 * (out + out.T)


def _power(mat, x, tol, max_iter):
    val = float(x @ mat @ x)
    for _ in range(max_iter):
        y = mat @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return val, x, False
        x = y / ny
        val = float(x @ mat @ x)
        if np.linalg.norm(mat @ x - val * x) <= tol * max(abs(val), 1.0):
            return val, x, True
    return val, x, False


def power_iteration(mat, tol: float = 1e-12, max_iter: int = 10_000):
    """Top eigenpair of a symmetric positive semidefinite matrix.

    Starts from ``e_1``.  A start orthogonal to the top eigenvector stalls
    on a lower eigenpair, so a second run from the normalized all-ones
    vector is made whenever the first fails to converge or a quick check
    finds a larger Rayleigh quotient.  The sign is fixed so that the
    largest-magnitude entry is positive.  Returns ``(value, vector,
    degenerate)``; ``degenerate`` flags an eigen-gap below 1e-10.
    """
    mat = np.asarray(mat, dtype=float)
    l = mat.shape[0]
    val, x, ok = _power(mat, np.eye(l)[0], tol, max_iter)
    alt = np.ones(l) / np.sqrt(l)
    if not ok or float(alt @ mat @ alt) > val + 1e-12:
        val2, x2, ok2 = _power(mat, alt, tol, max_iter)
        if val2 > val:
            val, x, ok = val2, x2, ok2
    if not ok:
        log.warning("power iteration did not reach tolerance %.1e", tol)
    # second eigenvalue from the deflated matrix
    second, _, _ = _power(mat - val * np.outer(x, x), np.ones(l) / np.sqrt(l), 1e-8, 500)
    degenerate = val - abs(second) < 1e-10
    if degenerate:
        log.warning("top eigenvalue is nearly degenerate (gap %.2e)", val - abs(second))
    k = int(np.argmax(np.abs(x)))
    if x[k] < 0:
        x = -x
    return val, x, degenerate


def bayes_estimator(draws: PosteriorDraws) -> SpikedParam:
    """Posterior mean of ``lam`` with the top eigenvector of the mean covariance."""
    if len(draws) == 0:
        raise ValueError("no draws")
    _, u, _ = power_iteration(posterior_mean_sigma(draws))
    return SpikedParam(float(np.mean(draws.lams)), u / np.linalg.norm(u))


def gaussian_kl_zero_mean(sigma0, sigma1) -> float:
    """KL(N(0, sigma0) || N(0, sigma1))."""
    sigma0 = np.asarray(sigma0, dtype=float)
    sigma1 = np.asarray(sigma1, dtype=float)
    try:
        c0 = np.linalg.cholesky(sigma0)
        c1 = np.linalg.cholesky(sigma1)
    except np.linalg.LinAlgError as exc:
        raise ParameterDomainError("covariance is not positive definite") from exc
    l = sigma0.shape[0]
    m = np.linalg.solve(c1, c0)
    logdet0 = 2 * np.sum(np.log(np.diag(c0)))
    logdet1 = 2 * np.sum(np.log(np.diag(c1)))
    return max(0.5 * (np.sum(m * m) - l + logdet1 - logdet0), 0.0)


def spiked_kl(p0: SpikedParam, p1: SpikedParam) -> float:
    """Rank-one closed form of KL(N(0, Sigma(p0)) || N(0, Sigma(p1))).

    With ``d = (lam0 - lam1) / (1 + lam1)`` and ``s2`` the squared sine of
    the angle between the directions this is
    ``(d - log1p(d) + c1 lam0 s2) / 2``, ``c1 = lam1 / (1 + lam1)``; the
    form is cancellation-free and exactly zero when ``p0 == p1``.
    """
    c1 = p1.lam / (1.0 + p1.lam)
    d = (p0.lam - p1.lam) / (1.0 + p1.lam)
    # |u0 - u1|^2 |u0 + u1|^2 = 4 (1 - cos^2)
    s2 = float(np.sum((p0.u - p1.u) ** 2) * np.sum((p0.u + p1.u) ** 2)) / 4.0
    return max(0.5 * (d - np.log1p(d) + c1 * p0.lam * s2), 0.0)


def spiked_log_density(p: SpikedParam, y):
    y = np.atleast_2d(np.asarray(y, dtype=float))
    c = p.lam / (1.0 + p.lam)
    proj = y @ p.u
    return -0.5 * p.l * LOG_2PI - 0.5 * np.log1p(p.lam) - 0.5 * (np.sum(y * y, axis=1) - c * proj * proj)


class GaussianPredictive:
    """N(0, sigma) with its Cholesky factor cached for repeated evaluation."""

    def __init__(self, sigma):
        self.sigma = np.asarray(sigma, dtype=float)
        self._chol = np.linalg.cholesky(self.sigma)
        self._logdet = 2 * np.sum(np.log(np.diag(self._chol)))
        self._inv_chol = np.linalg.inv(self._chol)

    @property
    def nbytes(self) -> int:
        return self.sigma.nbytes

    def log_density(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        z = y @ self._inv_chol.T
        return -0.5 * (self.sigma.shape[0] * LOG_2PI + self._logdet + np.sum(z * z, axis=1))


class MixturePredictive:
    """Equal-weight mixture of plugin densities over posterior draws."""

    def __init__(self, draws: PosteriorDraws):
        self.draws = draws

    @property
    def nbytes(self) -> int:
        return self.draws.nbytes

    def log_density(self, y):
        return mixture_log_density(self.draws, y)


def mixture_log_density(draws: PosteriorDraws, y):
    """``log mean_k N(y; 0, Sigma_k)`` via rank-one densities and log-sum-exp."""
    if len(draws) == 0:
        raise ValueError("no draws")
    y = np.atleast_2d(np.asarray(y, dtype=float))
    lams = draws.lams
    c = lams / (1.0 + lams)
    proj = y @ draws.us.T  # (N, K)
    yy = np.sum(y * y, axis=1)
    l = draws.l
    logs = (-0.5 * l * LOG_2PI - 0.5 * np.log1p(lams))[None, :] - 0.5 * (yy[:, None] - c[None, :] * proj * proj)
    return logsumexp(logs, axis=1) - np.log(len(draws))


Predictive = Union[SpikedParam, GaussianPredictive, MixturePredictive, np.ndarray]


def kl_risk_terms(truth: SpikedParam, predictive: Predictive, y_samples=None,
                  control: Optional[Predictive] = None) -> float:
    """KL loss of one predictive density.

    Gaussian predictives (a :class:`SpikedParam`, a covariance matrix or a
    :class:`GaussianPredictive`) are exact.  A mixture uses the Monte Carlo
    average of ``log p_true(y) - log p_mix(y)`` over ``y_samples`` drawn
    from the truth.  With ``control`` (a Gaussian predictive) the estimate
    becomes ``KL(control) + mean(log p_control - log p_mix)``, which is
    unbiased and has far smaller variance when the two are close.
    """
    if isinstance(predictive, MixturePredictive):
        if y_samples is None:
            raise ValueError("a mixture needs y_samples")
        logq = predictive.log_density(y_samples)
        if control is not None:
            ctrl = _as_gaussian(control)
            return kl_risk_terms(truth, ctrl) + float(np.mean(ctrl.log_density(y_samples) - logq))
        return float(np.mean(spiked_log_density(truth, y_samples) - logq))
    if isinstance(predictive, SpikedParam):
        return spiked_kl(truth, predictive)
    sigma = predictive.sigma if isinstance(predictive, GaussianPredictive) else predictive
    return gaussian_kl_zero_mean(covariance(truth), sigma)


def _as_gaussian(pred) -> GaussianPredictive:
    if isinstance(pred, GaussianPredictive):
        return pred
    if isinstance(pred, SpikedParam):
        return GaussianPredictive(covariance(pred))
    return GaussianPredictive(pred)


# ---------------------------------------------------------------------------
# the model as a curved exponential family


def spiked_curved_model(l: int, u0=None, analytic_jacobian: bool = True) -> CurvedModel:
    """Spiked model in the zero-mean Gaussian covariance family.

    Chart: ``omega = (lam, v)`` with ``v`` in R^(l-1) and
    ``u = (u0 + B v) / |u0 + B v|``, ``B`` an orthonormal basis of the
    complement of ``u0`` (default ``e_1``).
    """
    fam = GaussianCovarianceFamily(l)
    u0 = np.eye(l)[0] if u0 is None else np.asarray(u0, dtype=float) / np.linalg.norm(u0)
    # complete u0 to an orthonormal basis
    q, _ = np.linalg.qr(np.column_stack([u0, np.eye(l)]))
    basis = q[:, 1:l]

    def direction(v):
        w = u0 + basis @ v
        return w / np.linalg.norm(w), np.linalg.norm(w)

    def embed(om):
        lam, v = om[0], om[1:]
        u, _ = direction(v)
        prec = np.eye(l) - lam / (1.0 + lam) * np.outer(u, u)
        return fam.theta_from_precision(prec)

    def jac(om):
        lam, v = om[0], om[1:]
        u, nw = direction(v)
        c = lam / (1.0 + lam)
        cols = [fam.theta_from_precision(-np.outer(u, u) / (1.0 + lam) ** 2)]
        du = (np.eye(l) - np.outer(u, u)) @ basis / nw
        for k in range(l - 1):
            dp = -c * (np.outer(du[:, k], u) + np.outer(u, du[:, k]))
            cols.append(fam.theta_from_precision(dp))
        return np.column_stack(cols)

    def init(data: DataSummary):
        s = fam.unvech(data.mean_stat)
        top, u = _top_eigvec(s)
        if top <= 1.0:
            raise DegeneracyError("top sample eigenvalue <= 1: the MLE sits on the boundary lam = 0")
        cosang = float(u @ u0)
        if abs(cosang) < 1e-3:
            raise DegeneracyError("top eigenvector is orthogonal to the chart centre")
        u = u * np.sign(cosang)
        return np.concatenate([[top - 1.0], basis.T @ u / (u @ u0)])

    def domain(om):
        return om[0] > 0

    return CurvedModel(family=fam, d=l, embed=embed, jacobian=jac if analytic_jacobian else None,
                       initializer=init, domain=domain, name=f"spiked(l={l})",
                       extras={"u0": u0, "basis": basis})


def chart_to_param(model: CurvedModel, omega) -> SpikedParam:
    u0, basis = model.extras["u0"], model.extras["basis"]
    w = u0 + basis @ np.asarray(omega[1:])
    return SpikedParam(float(omega[0]), w / np.linalg.norm(w))
