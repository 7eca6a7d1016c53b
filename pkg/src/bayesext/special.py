"""Modified Bessel functions of the first kind, orders 0 and 1.

Below ``SWITCH`` the ascending power series is summed (all terms are
positive, Neumaier-compensated).  Above it the large-argument expansion of
``exp(-z) I_nu(z)`` is used, so the log variants never overflow.
"""

from __future__ import annotations

import numpy as np

SWITCH = 30.0
SERIES_TERMS = 60
ASYMPTOTIC_TERMS = 14


def _asymptotic_coeffs(nu: int) -> np.ndarray:
    mu = 4.0 * nu * nu
    c = np.empty(ASYMPTOTIC_TERMS)
    c[0] = 1.0
    for k in range(1, ASYMPTOTIC_TERMS):
        c[k] = -c[k - 1] * (mu - (2 * k - 1) ** 2) / (k * 8.0)
    return c


_ASY = {0: _asymptotic_coeffs(0), 1: _asymptotic_coeffs(1)}


def _series(nu: int, z: np.ndarray) -> np.ndarray:
    q = 0.25 * z * z
    term = np.ones_like(z) if nu == 0 else 0.5 * z
    total = term.copy()
    comp = np.zeros_like(z)
    for k in range(1, SERIES_TERMS):
        term = term * q / (k * (k + nu))
        t = total + term
        comp += np.where(np.abs(total) >= np.abs(term), (total - t) + term, (term - t) + total)
        total = t
    return total + comp


def _scaled_asymptotic(nu: int, z: np.ndarray) -> np.ndarray:
    inv = 1.0 / z
    acc = np.zeros_like(z)
    for c in _ASY[nu][::-1]:
        acc = acc * inv + c
    return acc / np.sqrt(2.0 * np.pi * z)


def _log_i(nu: int, z):
    z = np.abs(np.asarray(z, dtype=float))
    out = np.empty_like(z)
    small = z < SWITCH
    if np.any(small):
        with np.errstate(divide="ignore"):
            out[small] = np.log(_series(nu, z[small]))
    big = ~small
    if np.any(big):
        zb = z[big]
        out[big] = zb + np.log(_scaled_asymptotic(nu, zb))
    return out


def log_bessel_i0(z):
    """log I_0(|z|); finite for every finite ``z``."""
    out = _log_i(0, z)
    return float(out) if np.ndim(out) == 0 else out


def log_bessel_i1(z):
    """log I_1(|z|); ``-inf`` at zero."""
    out = _log_i(1, z)
    return float(out) if np.ndim(out) == 0 else out


def bessel_i0(z):
    z = np.asarray(z, dtype=float)
    with np.errstate(over="ignore"):
        out = np.exp(_log_i(0, z))
    return float(out) if out.ndim == 0 else out


def bessel_i1(z):
    """I_1(z), odd in ``z``."""
    z = np.asarray(z, dtype=float)
    with np.errstate(over="ignore"):
        out = np.sign(z) * np.exp(_log_i(1, z))
    return float(out) if out.ndim == 0 else out


def bessel_ratio(z):
    """I_1(z) / I_0(z) for ``z >= 0``, computed without overflow."""
    z = np.abs(np.asarray(z, dtype=float))
    out = np.empty_like(z)
    small = z < SWITCH
    if np.any(small):
        zs = z[small]
        out[small] = _series(1, zs) / _series(0, zs)
    big = ~small
    if np.any(big):
        zb = z[big]
        out[big] = _scaled_asymptotic(1, zb) / _scaled_asymptotic(0, zb)
    return float(out) if out.ndim == 0 else out
