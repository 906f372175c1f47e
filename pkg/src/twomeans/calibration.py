"""Statistic-to-p-value calibrations.

Asymptotic references (chi-square with one df, Student t, standard normal),
the null-recentred bootstrap, the exact Mann-Whitney distribution and the
full permutation distribution of the Welch statistic. All p-values are
two-sided.
"""

from __future__ import annotations

import enum
import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import core
from .errors import CapExceeded, ConfigError, DomainError, TiesPresent, ZeroVariance
from .scenarios import as_generator
from .special import std_normal_sf2, student_t_sf2

DEFAULT_B = 499
DEFAULT_CAP = 1_000_000
# relative slack when comparing permutation statistics with the observed one
_PERM_FUZZ = 1e-9


class Method(str, enum.Enum):
    WELCH = "welch"
    WMW = "wmw"
    EL = "el"
    EEL = "eel"


class Calibration(str, enum.Enum):
    CHISQ = "chisq"
    T = "t"
    NORMAL = "normal"
    BOOT = "boot"
    EXACT = "exact"


# which calibrations apply to which procedure
ALLOWED = {
    Method.EL: (Calibration.CHISQ, Calibration.T, Calibration.BOOT),
    Method.EEL: (Calibration.CHISQ, Calibration.T, Calibration.BOOT),
    Method.WMW: (Calibration.NORMAL, Calibration.EXACT),
    Method.WELCH: (Calibration.T, Calibration.BOOT, Calibration.EXACT),
}


def check_combination(method, cal) -> tuple[Method, Calibration]:
    try:
        method = Method(method)
        cal = Calibration(cal)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cal not in ALLOWED[method]:
        allowed = ", ".join(c.value for c in ALLOWED[method])
        raise ConfigError(f"calibration {cal.value!r} is not available for {method.value} (use one of: {allowed})")
    return method, cal


# ---------------------------------------------------------------------------
# asymptotic references
# ---------------------------------------------------------------------------


def pvalue_t(t, nu):
    """Two-sided Student-t p-value."""
    return student_t_sf2(t, nu)


def pvalue_normal(z):
    return std_normal_sf2(z)


def pvalue_chisq1(lam):
    """Upper tail of chi-square(1) at ``lam``, i.e. 2(1 - Phi(sqrt(lam)))."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise DomainError("chi-square statistic must be nonnegative")
    return std_normal_sf2(np.sqrt(lam))


def pvalue_nonparam_t(lam, nu):
    """t calibration of a likelihood-ratio statistic: 2(1 - F_nu(sqrt(lam)))."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise DomainError("likelihood-ratio statistic must be nonnegative")
    return student_t_sf2(np.sqrt(lam), nu)


# ---------------------------------------------------------------------------
# bootstrap
# ---------------------------------------------------------------------------


def _stat_rows(method: Method, X, Y) -> np.ndarray:
    """Statistic magnitude per row; unusable rows map to +inf."""
    if method is Method.WELCH:
        t, _, _, _ = core.welch_rows(X, Y)
        out = np.abs(t)
    elif method is Method.EL:
        out = core.el_rows(X, Y)["stat"]
    elif method is Method.EEL:
        out = core.eel_rows(X, Y)["stat"]
    else:
        raise ConfigError(f"bootstrap is not defined for {method.value}")
    return np.where(np.isnan(out), np.inf, out)


def bootstrap_pvalue(x, y, method, B: int = DEFAULT_B, stream=None, observed: float | None = None) -> float:
    """Bootstrap p-value with both samples recentred at the common mean.

    Resamples whose statistic cannot be computed (no overlap, zero
    variance) count as exceeding the observed value.
    """
    method = Method(method)
    if int(B) != B or B < 1:
        raise ConfigError(f"B must be a positive integer, got {B!r}")
    x = core.as_sample(x, 2, "x")
    y = core.as_sample(y, 2, "y")
    if observed is None:
        observed = _observed(method, x, y)
    mu_c = core.common_mean(x, y)
    xs = x - x.mean() + mu_c
    ys = y - y.mean() + mu_c
    rng = as_generator(stream)
    ix = rng.integers(0, x.size, size=(int(B), x.size))
    iy = rng.integers(0, y.size, size=(int(B), y.size))
    stats = _stat_rows(method, xs[ix], ys[iy])
    exceed = int(np.count_nonzero(stats > observed))
    return (exceed + 1) / (int(B) + 1)


def _observed(method: Method, x, y) -> float:
    if method is Method.WELCH:
        return abs(core.welch_statistic(x, y).t_w)
    if method is Method.EL:
        return core.el_statistic(x, y).lambda_stat
    if method is Method.EEL:
        return core.eel_statistic(x, y).lambda_stat
    raise ConfigError(f"bootstrap is not defined for {method.value}")


# ---------------------------------------------------------------------------
# exact Mann-Whitney distribution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExactWmwDistribution:
    n_x: int
    n_y: int
    pmf: np.ndarray

    def cdf(self, k: float) -> float:
        k = math.floor(k + 1e-9)
        if k < 0:
            return 0.0
        return float(min(1.0, self.pmf[: k + 1].sum()))

    def sf(self, k: float) -> float:
        """P(M >= k)."""
        k = math.ceil(k - 1e-9)
        if k <= 0:
            return 1.0
        return float(min(1.0, self.pmf[k:].sum()))


# n_x * n_y above which the quadratic-cost recurrence hands over to inversion
_RECURRENCE_LIMIT = 40_000


def _gaussian_binomial_counts(m: int, n: int) -> np.ndarray:
    # Integer coefficients of [m+n choose n]_q as the running product of
    # (1 - q^(m+j)) / (1 - q^j); only used while the counts fit in int64.
    size = m * n + 1
    c = np.zeros(size, dtype=np.int64)
    c[0] = 1
    for j in range(1, n + 1):
        k = m + j
        if k < size:
            c[k:] -= c[:-k].copy()
        # dividing by (1 - q^j) is a running sum with stride j
        pad = (-size) % j
        blocks = np.concatenate((c, np.zeros(pad, dtype=np.int64))).reshape(-1, j)
        c = np.cumsum(blocks, axis=0).ravel()[:size]
        c[j * m + 1:] = 0
    return c


def _recurrence_pmf(m: int, n: int) -> np.ndarray:
    # P(k; i, j) = i/(i+j) P(k-j; i-1, j) + j/(i+j) P(k; i, j-1).
    # Every term is nonnegative, so relative error grows only linearly.
    prev = [np.ones(1) for _ in range(m + 1)]  # j = 0
    for j in range(1, n + 1):
        cur = [np.ones(1)]
        for i in range(1, m + 1):
            p = np.zeros(i * j + 1)
            p[: prev[i].size] = (j / (i + j)) * prev[i]
            p[j:] += (i / (i + j)) * cur[i - 1]
            cur.append(p)
        prev = cur
    return prev[m]


def _inversion_pmf(m: int, n: int, chunk: int = 1024) -> np.ndarray:
    # The generating function at theta = 2 pi k / N (N = m n + 1) is
    # exp(i pi m n k / N) * prod_j sin(pi (m+j) k / N) / sin(pi j k / N).
    # The product is accumulated in logs with removable zeros replaced by
    # their limits, then one FFT recovers the coefficients.
    size = m * n + 1
    log_sin = np.zeros(size)
    log_sin[1:] = np.log(np.sin(np.pi * np.arange(1, size) / size))
    a_num = np.arange(m + 1, m + n + 1, dtype=np.int64)
    a_den = np.arange(1, n + 1, dtype=np.int64)
    log_c = np.log(a_num).sum() - np.log(a_den).sum()
    half = np.arange(size // 2 + 1, dtype=np.int64)
    h = np.empty(half.size)

    def factors(k, a):
        q, r = np.divmod(np.multiply.outer(k, a), size)
        zero = r == 0
        logs = np.where(zero, np.log(a)[None, :], log_sin[r]).sum(axis=1)
        return logs, q.sum(axis=1) & 1, zero.sum(axis=1)

    for start in range(0, half.size, chunk):
        k = half[start:start + chunk]
        ln, pn, zn = factors(k, a_num)
        ld, pd, zd = factors(k, a_den)
        val = np.exp(ln - ld - log_c) * np.where((pn + pd) & 1, -1.0, 1.0)
        h[start:start + chunk] = np.where(zn > zd, 0.0, val)
    g = np.empty(size, dtype=complex)
    g[: half.size] = h * np.exp(1j * np.pi * ((m * n * half) % (2 * size)) / size)
    g[half.size:] = np.conj(g[1: size - half.size + 1][::-1])
    return np.fft.fft(g).real / size


@functools.lru_cache(maxsize=64)
def _wmw_pmf_cached(m: int, n: int) -> np.ndarray:
    total = math.comb(m + n, n)
    if total < 2 ** 62:
        pmf = _gaussian_binomial_counts(m, n) / float(total)
    elif m * n <= _RECURRENCE_LIMIT:
        pmf = _recurrence_pmf(m, n)
    else:
        pmf = _inversion_pmf(m, n)
    pmf = np.clip(pmf, 0.0, None)
    pmf = 0.5 * (pmf + pmf[::-1])
    pmf /= pmf.sum()
    pmf.setflags(write=False)
    return pmf


def wmw_exact_distribution(n_x: int, n_y: int, cap: int = DEFAULT_CAP) -> ExactWmwDistribution:
    """Exact null distribution of the Mann-Whitney count over 0..n_x*n_y."""
    if n_x < 1 or n_y < 1 or int(n_x) != n_x or int(n_y) != n_y:
        raise DomainError("sample sizes must be positive integers")
    n_x, n_y = int(n_x), int(n_y)
    if n_x * n_y > cap:
        raise CapExceeded(f"n_x * n_y = {n_x * n_y} exceeds the exact-table cap {cap}")
    # the distribution is symmetric in the two sizes; iterate over the smaller
    m, n = max(n_x, n_y), min(n_x, n_y)
    return ExactWmwDistribution(n_x, n_y, _wmw_pmf_cached(m, n))


def wmw_exact_pvalue(u: float, n_x: int, n_y: int, cap: int = DEFAULT_CAP) -> float:
    """Two-sided exact p-value: doubled smaller tail, capped at 1."""
    return float(wmw_exact_pvalues(np.array([u]), n_x, n_y, cap)[0])


def wmw_exact_pvalues(u, n_x: int, n_y: int, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Vectorized :func:`wmw_exact_pvalue` for integer counts ``u``."""
    u = np.asarray(u, dtype=float)
    if np.any(np.abs(u - np.round(u)) > 1e-9):
        raise TiesPresent("exact Mann-Whitney p-value is unavailable with tied observations")
    dist = wmw_exact_distribution(n_x, n_y, cap)
    cdf = np.cumsum(dist.pmf)
    k = np.round(u).astype(np.int64)
    top = n_x * n_y
    if np.any((k < 0) | (k > top)):
        raise DomainError(f"Mann-Whitney count must lie in [0, {top}]")
    # the pmf is exactly symmetric, so P(M >= k) = P(M <= top - k)
    return np.minimum(1.0, 2.0 * np.minimum(cdf[k], cdf[top - k]))


# ---------------------------------------------------------------------------
# exact permutation Welch
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=8)
def _splits(n: int, k: int) -> np.ndarray:
    dtype = np.int8 if n < 128 else np.int32
    combos = np.fromiter(itertools.chain.from_iterable(itertools.combinations(range(n), k)),
                         dtype=dtype, count=math.comb(n, k) * k)
    combos = combos.reshape(-1, k)
    combos.setflags(write=False)
    return combos


def welch_exact_pvalue(x, y, cap: int = DEFAULT_CAP) -> float:
    """Permutation p-value of |T_w| over every split of the pooled data.

    Splits are enumerated in lexicographic order of the first group's
    indices; the observed split is one of them. Splits where both groups
    have zero variance count as extreme.
    """
    x = core.as_sample(x, 2, "x")
    y = core.as_sample(y, 2, "y")
    nx, ny = x.size, y.size
    total = math.comb(nx + ny, nx)
    if total > cap:
        raise CapExceeded(f"{total} permutations exceed the cap of {cap}")
    pooled = np.concatenate((x, y))
    obs = core.welch_rows(x, y)[0][0]
    if np.isnan(obs):
        raise ZeroVariance("both samples have zero variance")
    obs = abs(obs)
    combos = _splits(nx + ny, nx)
    # complement indices for the second group
    mask = np.ones((combos.shape[0], nx + ny), dtype=bool)
    mask[np.arange(combos.shape[0])[:, None], combos] = False
    rest = np.nonzero(mask)[1].reshape(-1, ny)
    count = 0
    chunk = 1 << 16
    for start in range(0, combos.shape[0], chunk):
        gx = pooled[combos[start:start + chunk]]
        gy = pooled[rest[start:start + chunk]]
        t = np.abs(core.welch_rows(gx, gy)[0])
        t = np.where(np.isnan(t), np.inf, t)
        count += int(np.count_nonzero(t >= obs * (1.0 - _PERM_FUZZ)))
    return count / total
