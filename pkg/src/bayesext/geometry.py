"""Information geometry of a curved model inside its enveloping family.

Derivatives of ``theta(omega)`` and ``eta(omega)`` are central differences.
With an analytic Jacobian the second derivatives difference the Jacobian;
otherwise a 3x3 cross stencil is applied to the embedding itself.

Index conventions: model indices ``a, b, c`` run over ``d``; ancillary
indices ``kappa, lambda`` over ``m - d``.  Tensors are stored with the
lower indices in that order, e.g. ``gamma_m[a, b, c]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import GeometryError
from .expfam import CurvedModel, DataSummary, fd_step, mle


@dataclass(frozen=True)
class GeometryReport:
    g: np.ndarray
    g_inv: np.ndarray
    gamma_e: np.ndarray
    gamma_m: np.ndarray
    skew: np.ndarray
    skew_vec: np.ndarray
    jeffreys: float
    # raw derivatives, reused by the expansion formulas
    theta: np.ndarray
    eta: np.ndarray
    hess: np.ndarray
    jac_theta: np.ndarray
    jac_eta: np.ndarray
    d2_theta: np.ndarray
    d2_eta: np.ndarray

    @property
    def gamma_m_up(self) -> np.ndarray:
        """Gamma^(m)_ab^c with the last index raised."""
        return np.einsum("abd,dc->abc", self.gamma_m, self.g_inv)


@dataclass(frozen=True)
class AncillaryFrame:
    """Tangent vectors (columns, eta-coordinates) orthogonal to the model."""

    basis: np.ndarray
    g_orth: np.ndarray
    residual: float


@dataclass(frozen=True)
class EmbeddingCurvature:
    h: np.ndarray
    frame: AncillaryFrame


class ShiftVector(NamedTuple):
    alpha: np.ndarray
    beta: np.ndarray


def _second_derivatives(model: CurvedModel, omega: np.ndarray):
    d, m = model.d, model.family.m
    d2_theta = np.empty((d, d, m))
    d2_eta = np.empty((d, d, m))
    if model.jacobian is not None:
        h = fd_step(omega)
        for b in range(d):
            e = np.zeros(d)
            e[b] = h[b]
            dj = (model.jac_theta(omega + e) - model.jac_theta(omega - e)) / (2 * h[b])
            dje = (model.jac_eta(omega + e) - model.jac_eta(omega - e)) / (2 * h[b])
            d2_theta[:, b, :] = dj.T
            d2_eta[:, b, :] = dje.T
        d2_theta = 0.5 * (d2_theta + d2_theta.transpose(1, 0, 2))
        d2_eta = 0.5 * (d2_eta + d2_eta.transpose(1, 0, 2))
        return d2_theta, d2_eta

    # 3x3 cross stencil; a larger step keeps the eps/h^2 roundoff near 1e-8
    h = np.maximum(1e-4, 1e-4 * np.abs(omega))
    f0t, f0e = model.theta(omega), model.eta(omega)
    for a in range(d):
        ea = np.zeros(d)
        ea[a] = h[a]
        tp, tm = model.theta(omega + ea), model.theta(omega - ea)
        ep, em = model.eta(omega + ea), model.eta(omega - ea)
        d2_theta[a, a] = (tp - 2 * f0t + tm) / h[a] ** 2
        d2_eta[a, a] = (ep - 2 * f0e + em) / h[a] ** 2
        for b in range(a + 1, d):
            eb = np.zeros(d)
            eb[b] = h[b]
            den = 4 * h[a] * h[b]
            vt = (model.theta(omega + ea + eb) - model.theta(omega + ea - eb)
                  - model.theta(omega - ea + eb) + model.theta(omega - ea - eb)) / den
            ve = (model.eta(omega + ea + eb) - model.eta(omega + ea - eb)
                  - model.eta(omega - ea + eb) + model.eta(omega - ea - eb)) / den
            d2_theta[a, b] = d2_theta[b, a] = vt
            d2_eta[a, b] = d2_eta[b, a] = ve
    return d2_theta, d2_eta


def geometry_at(model: CurvedModel, omega) -> GeometryReport:
    """Fisher metric, e/m-connections, skewness tensor and Jeffreys density at ``omega``.

    The skewness tensor comes from the third derivative of ``psi``
    contracted with the Jacobian, independently of the connections, so
    ``gamma_m - gamma_e == skew`` is a genuine consistency check.
    """
    omega = model.check_omega(omega)
    fam = model.family
    theta = model.theta(omega)
    hess = fam.hess_psi(theta)
    jac = model.jac_theta(omega)
    jac_eta = hess @ jac
    g = jac.T @ jac_eta
    g = 0.5 * (g + g.T)
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise GeometryError("Fisher metric is not positive definite; embedding is rank deficient") from exc
    g_inv = np.linalg.inv(g)

    d2_theta, d2_eta = _second_derivatives(model, omega)
    gamma_e = np.einsum("abi,ic->abc", d2_theta, jac_eta)
    gamma_m = np.einsum("abi,ic->abc", d2_eta, jac)

    d = model.d
    skew = np.empty((d, d, d))
    for c in range(d):
        dh = fam.hess_psi_directional(theta, jac[:, c])
        skew[:, :, c] = jac.T @ dh @ jac
    skew_vec = np.einsum("abc,bc->a", skew, g_inv)

    return GeometryReport(
        g=g, g_inv=g_inv, gamma_e=gamma_e, gamma_m=gamma_m, skew=skew,
        skew_vec=skew_vec, jeffreys=float(np.sqrt(np.linalg.det(g))),
        theta=theta, eta=fam.grad_psi(theta), hess=hess, jac_theta=jac,
        jac_eta=jac_eta, d2_theta=d2_theta, d2_eta=d2_eta,
    )


def eta_inner(hess: np.ndarray, u, v):
    """Fisher inner product of two tangent vectors given in eta-coordinates."""
    return np.asarray(u).T @ np.linalg.solve(hess, np.asarray(v))


def ancillary_frame(model: CurvedModel, omega, report: Optional[GeometryReport] = None) -> AncillaryFrame:
    """Gram-Schmidt complement of the model tangent space.

    Canonical eta-basis vectors are taken in order and orthogonalized,
    under the Fisher inner product, against the model tangents and the
    vectors already accepted.  Vectors are orthogonal but not normalized.
    """
    rep = report if report is not None else geometry_at(model, omega)
    m, d = rep.jac_eta.shape
    hinv = np.linalg.inv(rep.hess)

    def ip(u, v):
        return u @ hinv @ v

    tangents = [rep.jac_eta[:, a] for a in range(d)]
    ortho = []  # orthonormal set spanning tangents + accepted vectors
    for t in tangents:
        v = t.copy()
        for _ in range(2):
            for q in ortho:
                v = v - ip(q, v) * q
        nv = np.sqrt(ip(v, v))
        if nv <= 1e-10 * np.sqrt(ip(t, t)):
            raise GeometryError("model tangents are linearly dependent")
        ortho.append(v / nv)

    frame = []
    for i in range(m):
        if len(frame) == m - d:
            break
        e = np.zeros(m)
        e[i] = 1.0
        v = e.copy()
        for _ in range(2):
            for q in ortho:
                v = v - ip(q, v) * q
        nv = np.sqrt(ip(v, v))
        if nv <= 1e-8 * np.sqrt(ip(e, e)):
            continue
        frame.append(v)
        ortho.append(v / nv)
    if len(frame) != m - d:
        raise GeometryError("could not complete the ancillary frame")

    basis = np.column_stack(frame) if frame else np.zeros((m, 0))
    g_orth = basis.T @ hinv @ basis
    cross = rep.jac_eta.T @ hinv @ basis
    residual = float(np.max(np.abs(cross))) if cross.size else 0.0
    return AncillaryFrame(basis=basis, g_orth=0.5 * (g_orth + g_orth.T), residual=residual)


def embedding_curvature(model: CurvedModel, omega, report: Optional[GeometryReport] = None,
                        frame: Optional[AncillaryFrame] = None) -> EmbeddingCurvature:
    """Mixture embedding curvature ``H_ab,kappa = (d_a d_b eta) . (d_kappa theta)``."""
    rep = report if report is not None else geometry_at(model, omega)
    fr = frame if frame is not None else ancillary_frame(model, omega, rep)
    dtheta_frame = np.linalg.solve(rep.hess, fr.basis)
    h = np.einsum("abi,ik->abk", rep.d2_eta, dtheta_frame)
    return EmbeddingCurvature(h=h, frame=fr)


def _mean_curvature_vector(model, omega):
    rep = geometry_at(model, omega)
    curv = embedding_curvature(model, omega, rep)
    # b_lambda = H_ab,lambda g^ab
    b = np.einsum("abk,ab->k", curv.h, rep.g_inv)
    return rep, curv, b


def optimal_beta(model: CurvedModel, omega) -> np.ndarray:
    """Optimal orthogonal shift ``beta^kappa = H_ab^kappa g^ab / 2`` in the ancillary frame."""
    _, curv, b = _mean_curvature_vector(model, omega)
    if b.size == 0:
        return b
    return 0.5 * np.linalg.solve(curv.frame.g_orth, b)


def risk_improvement(model: CurvedModel, omega, n: int) -> float:
    """Leading-order KL-risk gain of the optimal orthogonal shift.

    ``H_ab^lambda H_cd^kappa g^ab g^cd g_kappa,lambda / (8 n^2)``, which is
    invariant to the choice of ancillary frame.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    _, curv, b = _mean_curvature_vector(model, omega)
    if b.size == 0:
        return 0.0
    return float(b @ np.linalg.solve(curv.frame.g_orth, b)) / (8.0 * n * n)


def projection_angle_cos(improvement_in_e: float, improvement_in_f: float) -> float:
    """Cosine of the angle between the two optimal orthogonal shifts."""
    if not (improvement_in_f > 0 and 0 <= improvement_in_e <= improvement_in_f):
        raise ValueError("need 0 <= improvement_in_e <= improvement_in_f and improvement_in_f > 0")
    return float(np.sqrt(improvement_in_e / improvement_in_f))


# ---------------------------------------------------------------------------
# asymptotic expansions around the MLE


class ExpansionTerms(NamedTuple):
    omega_mle: np.ndarray
    eta_mle: np.ndarray
    orthogonal: np.ndarray   # eta-coordinates, includes the 1/n factor
    parallel: np.ndarray     # eta-coordinates, includes the 1/n factor
    alpha: np.ndarray        # parallel shift coefficients (before 1/n)
    report: GeometryReport


def _grad_log_ratio(prior_log_ratio, omega, d):
    if prior_log_ratio is None:
        return np.zeros(d)
    h = fd_step(omega)
    out = np.empty(d)
    for a in range(d):
        e = np.zeros(d)
        e[a] = h[a]
        out[a] = (prior_log_ratio(omega + e) - prior_log_ratio(omega - e)) / (2 * h[a])
    return out


def expansion_terms(model: CurvedModel, data: DataSummary,
                    prior_log_ratio: Optional[Callable] = None,
                    prior_log_ratio_grad: Optional[Callable] = None) -> ExpansionTerms:
    """Parallel and orthogonal O(1/n) shifts of the posterior mean of eta.

    ``prior_log_ratio`` is ``log(pi / pi_J)`` as a function of omega; the
    default ``None`` means the Jeffreys prior.
    """
    omega = mle(model, data)
    rep = geometry_at(model, omega)
    n = data.n
    if prior_log_ratio_grad is not None:
        dlog = np.asarray(prior_log_ratio_grad(omega), dtype=float)
    else:
        dlog = _grad_log_ratio(prior_log_ratio, omega, model.d)
    gup = rep.gamma_m_up
    inner = rep.d2_eta - np.einsum("abc,ic->abi", gup, rep.jac_eta)
    orth = np.einsum("ab,abi->i", rep.g_inv, inner) / (2.0 * n)
    alpha = rep.g_inv @ (dlog + 0.5 * rep.skew_vec)
    par = rep.jac_eta @ alpha / n
    return ExpansionTerms(omega, rep.eta, orth, par, alpha, rep)


def expansion_estimator(model: CurvedModel, data: DataSummary,
                        prior_log_ratio: Optional[Callable] = None,
                        prior_log_ratio_grad: Optional[Callable] = None) -> np.ndarray:
    """First-order expansion of the Bayes extended estimator around ``eta(omega_MLE)``."""
    t = expansion_terms(model, data, prior_log_ratio, prior_log_ratio_grad)
    return t.eta_mle + t.orthogonal + t.parallel


class DensityExpansion(NamedTuple):
    base: np.ndarray
    parallel: np.ndarray
    orthogonal: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.base + self.parallel + self.orthogonal


def _density_and_centered(model, theta, eta, y):
    fam = model.family
    logp = fam.log_base_measure(y) + fam.sufficient_stat(y) @ theta - fam.psi(theta)
    return np.exp(logp), fam.sufficient_stat(y) - eta


def expansion_density_shift(model: CurvedModel, data: DataSummary, y,
                            prior_log_ratio: Optional[Callable] = None,
                            prior_log_ratio_grad: Optional[Callable] = None) -> DensityExpansion:
    """First-order expansion of the extended plugin density on the points ``y``.

    Returns the MLE plugin density and the parallel and orthogonal shift
    densities separately.  A shift ``v`` in eta-coordinates acts on the
    density as ``v_i d p / d eta_i = p (t(y) - eta) . hess^-1 v``.
    """
    t = expansion_terms(model, data, prior_log_ratio, prior_log_ratio_grad)
    rep = t.report
    p, centered = _density_and_centered(model, rep.theta, rep.eta, y)
    par = p * (centered @ np.linalg.solve(rep.hess, t.parallel))
    orth = p * (centered @ np.linalg.solve(rep.hess, t.orthogonal))
    return DensityExpansion(p, par, orth)


def tangent_densities(model: CurvedModel, omega, y) -> tuple[np.ndarray, np.ndarray]:
    """``p(y)`` and the model tangent densities ``d_a p(y)`` (shape (N, d))."""
    rep = geometry_at(model, omega)
    p, centered = _density_and_centered(model, rep.theta, rep.eta, y)
    return p, p[:, None] * (centered @ rep.jac_theta)


def orthogonal_shift_densities(model: CurvedModel, omega, y) -> tuple[np.ndarray, np.ndarray]:
    """Two routes to ``h_ab(y)``, shape (N, d, d) each.

    The direct route applies ``d_a d_b eta - Gamma_ab^c d_c eta`` to the
    density; the frame route rebuilds it as ``H_ab^kappa d_kappa p``.
    """
    rep = geometry_at(model, omega)
    curv = embedding_curvature(model, omega, rep)
    p, centered = _density_and_centered(model, rep.theta, rep.eta, y)
    hinv = np.linalg.inv(rep.hess)
    inner = rep.d2_eta - np.einsum("abc,ic->abi", rep.gamma_m_up, rep.jac_eta)
    direct = p[:, None, None] * np.einsum("ni,ij,abj->nab", centered, hinv, inner)
    fr = curv.frame
    h_up = np.einsum("abl,lk->abk", curv.h, np.linalg.inv(fr.g_orth)) if fr.g_orth.size else curv.h
    dk_p = p[:, None] * (centered @ hinv @ fr.basis)
    via_frame = np.einsum("abk,nk->nab", h_up, dk_p)
    return direct, via_frame


def fisher_inner(f, q, p, weights) -> float:
    """Quadrature form of ``int f q / p dy``."""
    return float(np.sum(weights * f * q / p))
