"""Special functions behind the asymptotic calibrations.

All functions accept scalars or numpy arrays and broadcast; scalar input
returns a Python float.
"""

from __future__ import annotations

import numpy as np
from scipy.special import betaln, erfc

from .errors import DomainError

_TINY = 1e-300
_EPS = 1e-16
_MAX_ITER = 20000


def _out(value):
    value = np.asarray(value, dtype=float)
    return float(value) if value.ndim == 0 else value


def std_normal_cdf(z):
    """Standard normal CDF via the complementary error function."""
    z = np.asarray(z, dtype=float)
    return _out(0.5 * erfc(-z / np.sqrt(2.0)))


def std_normal_sf2(z):
    """Two-sided tail 2*(1 - Phi(|z|)), computed without cancellation."""
    z = np.abs(np.asarray(z, dtype=float))
    return _out(erfc(z / np.sqrt(2.0)))


def _beta_cf(a, b, x):
    # Modified Lentz evaluation of the incomplete beta continued fraction.
    # Rows stop updating once converged, so each element's result does not
    # depend on what else is in the array.
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < _TINY, _TINY, d)
    d = 1.0 / d
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for m in range(1, _MAX_ITER + 1):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        aa_, bb_, xx = a[idx], b[idx], x[idx]
        cc, dd, hh = c[idx], d[idx], h[idx]
        m2 = 2.0 * m
        num = m * (bb_ - m) * xx / ((qam[idx] + m2) * (aa_ + m2))
        dd = 1.0 + num * dd
        dd = np.where(np.abs(dd) < _TINY, _TINY, dd)
        cc = 1.0 + num / cc
        cc = np.where(np.abs(cc) < _TINY, _TINY, cc)
        dd = 1.0 / dd
        hh = hh * dd * cc
        num = -(aa_ + m) * (qab[idx] + m) * xx / ((aa_ + m2) * (qap[idx] + m2))
        dd = 1.0 + num * dd
        dd = np.where(np.abs(dd) < _TINY, _TINY, dd)
        cc = 1.0 + num / cc
        cc = np.where(np.abs(cc) < _TINY, _TINY, cc)
        dd = 1.0 / dd
        delta = dd * cc
        hh = hh * delta
        c[idx], d[idx], h[idx] = cc, dd, hh
        active[idx] = np.abs(delta - 1.0) > _EPS
    return h


def _stirling_tail(z):
    # lgamma(z) - [(z - 1/2) log z - z + log(2 pi)/2] for z >= 8
    w = 1.0 / (z * z)
    return (1.0 / 12 + w * (-1.0 / 360 + w * (1.0 / 1260 + w * (-1.0 / 1680 + w * (1.0 / 1188 + w * (-691.0 / 360360)))))) / z


def _log1pmx(u):
    # log(1 + u) - u, accurate for small u
    small = np.abs(u) < 0.05
    us = np.where(small, u, 0.0)
    series = np.zeros_like(us)
    for k in range(16, 1, -1):
        series = us * (((-1.0) ** (k + 1)) / k + series)
    series = us * series
    big = np.log1p(np.where(small, 0.0, u)) - np.where(small, 0.0, u)
    return np.where(small, series, big)


def _log_front(a, b, x):
    """log of x^a (1 - x)^b / B(a, b)."""
    plain = a * np.log(x) + b * np.log1p(-x) - betaln(a, b)
    large = (a >= 8.0) & (b >= 8.0)
    if not np.any(large):
        return plain
    # expand about the mode x0 = a / (a + b): the constant part reduces to
    # Stirling corrections and the linear terms in (x - x0) cancel exactly
    al, bl, xl = a[large], b[large], x[large]
    s = al + bl
    x0 = al / s
    e = xl - x0
    const = 0.5 * np.log(al * bl / (2.0 * np.pi * s)) - (_stirling_tail(al) + _stirling_tail(bl) - _stirling_tail(s))
    shape = al * _log1pmx(e / x0) + bl * _log1pmx(-e / (1.0 - x0))
    out = plain.copy()
    out[large] = const + shape
    return out


def regularized_incomplete_beta(a, b, x):
    """Regularized incomplete beta function I_x(a, b).

    Evaluated by continued fraction on whichever side of the mean
    ``(a + 1) / (a + b + 2)`` converges fastest; the other side uses the
    reflection ``I_x(a, b) = 1 - I_{1-x}(b, a)``.
    """
    a, b, x = np.broadcast_arrays(
        np.asarray(a, dtype=float), np.asarray(b, dtype=float), np.asarray(x, dtype=float)
    )
    shape = x.shape
    a, b, x = a.ravel().copy(), b.ravel().copy(), x.ravel().copy()
    if np.any(~(a > 0)) or np.any(~(b > 0)):
        raise DomainError("incomplete beta requires a > 0 and b > 0")
    if np.any(~((x >= 0) & (x <= 1))):
        raise DomainError("incomplete beta requires 0 <= x <= 1")

    out = np.empty_like(x)
    lo = x <= 0.0
    hi = x >= 1.0
    out[lo] = 0.0
    out[hi] = 1.0
    mid = ~(lo | hi)
    if np.any(mid):
        am, bm, xm = a[mid], b[mid], x[mid]
        flip = xm > (am + 1.0) / (am + bm + 2.0)
        aa = np.where(flip, bm, am)
        bb = np.where(flip, am, bm)
        xx = np.where(flip, 1.0 - xm, xm)
        log_front = _log_front(aa, bb, xx)
        val = np.exp(log_front) * _beta_cf(aa, bb, xx) / aa
        out[mid] = np.where(flip, 1.0 - val, val)
    return _out(np.clip(out, 0.0, 1.0).reshape(shape))


def student_t_sf2(t, nu):
    """Two-sided tail probability 2*(1 - F_nu(|t|)) of Student's t."""
    t = np.asarray(t, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if np.any(~(nu > 0)):
        raise DomainError("degrees of freedom must be positive")
    t2 = t * t
    x = nu / (nu + t2)
    # x underflows to 0 for |t| = inf; the tail is then exactly 0.
    return regularized_incomplete_beta(0.5 * nu, 0.5, np.where(np.isfinite(t2), x, 0.0))


def student_t_cdf(t, nu):
    t = np.asarray(t, dtype=float)
    tail = np.asarray(student_t_sf2(t, nu)) / 2.0
    return _out(np.where(t >= 0, 1.0 - tail, tail))
