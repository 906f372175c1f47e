"""Two-sample statistics: Welch, Wilcoxon-Mann-Whitney, empirical likelihood
and exponential empirical likelihood.

The ``*_rows`` kernels take 2-D arrays (one dataset per row) and solve every
row independently; a row's result never depends on the other rows in the
call, so batching is bit-for-bit equivalent to row-by-row evaluation.
The public scalar functions wrap those kernels for a single pair of samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateData, DomainError, Infeasible, InvalidSize, NoConvergence, NoOverlap, NumericOverflow, ZeroVariance

# row status codes shared by the kernels
OK = 0
NO_OVERLAP = 1
NO_CONVERGENCE = 2
OVERFLOW = 3
ZERO_VARIANCE = 4

STATUS_ERRORS = {
    NO_OVERLAP: NoOverlap,
    NO_CONVERGENCE: NoConvergence,
    OVERFLOW: NumericOverflow,
    ZERO_VARIANCE: ZeroVariance,
}

_LAMBDA_TOL = 1e-13
_MU_TOL = 1e-13
# a Newton step this small (relative to the data scale) is at roundoff level
_NEWTON_ACCEPT = 1e-10
_MAX_INNER = 200
_MAX_OUTER = 200


def as_sample(values, min_size: int = 2, name: str = "sample") -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        arr = arr.ravel()
    if arr.size < min_size:
        raise InvalidSize(f"{name} needs at least {min_size} observations, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    return arr


def _rows(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a[None, :] if a.ndim == 1 else a


def _mean_var(a: np.ndarray):
    n = a.shape[1]
    mean = a.sum(axis=1) / n
    dev = a - mean[:, None]
    np.multiply(dev, dev, out=dev)
    var = dev.sum(axis=1) / (n - 1)
    return mean, var


# ---------------------------------------------------------------------------
# Welch
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WelchResult:
    t_w: float
    nu: float
    mean_diff: float
    se: float


def welch_rows(X, Y):
    """Welch statistic per row: returns ``(t, nu, diff, se)`` arrays.

    Rows where both variances vanish get ``t = nu = nan`` and ``se = 0``.
    """
    X, Y = _rows(X), _rows(Y)
    nx, ny = X.shape[1], Y.shape[1]
    mx, vx = _mean_var(X)
    my, vy = _mean_var(Y)
    ax = vx / nx
    ay = vy / ny
    se2 = ax + ay
    diff = mx - my
    bad = se2 <= 0
    safe = np.where(bad, 1.0, se2)
    se = np.sqrt(safe)
    t = diff / se
    den = ax * ax / (nx - 1) + ay * ay / (ny - 1)
    nu = safe * safe / np.where(bad, 1.0, den)
    t[bad] = np.nan
    nu[bad] = np.nan
    se[bad] = 0.0
    return t, nu, diff, se


def welch_statistic(x, y) -> WelchResult:
    x = as_sample(x, 2, "x")
    y = as_sample(y, 2, "y")
    t, nu, diff, se = welch_rows(x, y)
    if se[0] == 0:
        raise ZeroVariance("both samples have zero variance")
    return WelchResult(float(t[0]), float(nu[0]), float(diff[0]), float(se[0]))


def common_mean(x, y) -> float:
    """Precision-weighted common mean under the null (weights n / s^2)."""
    x = as_sample(x, 2, "x")
    y = as_sample(y, 2, "y")
    mx, vx = _mean_var(x[None, :])
    my, vy = _mean_var(y[None, :])
    if vx[0] <= 0 or vy[0] <= 0:
        raise ZeroVariance("common mean needs positive variance in both samples")
    wx = x.size / vx[0]
    wy = y.size / vy[0]
    return float((wx * mx[0] + wy * my[0]) / (wx + wy))


# ---------------------------------------------------------------------------
# Wilcoxon-Mann-Whitney
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WmwResult:
    w: float
    u: float
    z: float
    ties_present: bool
    tie_multiplicities: tuple[int, ...]


def rank_midranks(u):
    """Midranks of ``u`` and the sizes of its tied groups (those > 1)."""
    u = np.asarray(u, dtype=float).ravel()
    if u.size == 0:
        raise InvalidSize("cannot rank an empty vector")
    order = np.argsort(u, kind="mergesort")
    s = u[order]
    starts = np.concatenate(([0], np.nonzero(s[1:] != s[:-1])[0] + 1))
    ends = np.concatenate((starts[1:], [s.size]))
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(u.size)
    ranks[order] = np.repeat(avg, ends - starts)
    counts = ends - starts
    return ranks, tuple(int(c) for c in counts[counts > 1])


def wmw_statistic(x, y) -> WmwResult:
    x = as_sample(x, 1, "x")
    y = as_sample(y, 1, "y")
    nx, ny = x.size, y.size
    n = nx + ny
    ranks, ties = rank_midranks(np.concatenate((x, y)))
    w = float(ranks[:nx].sum())
    u = w - nx * (nx + 1) / 2.0
    correction = sum(t ** 3 - t for t in ties) / (n * (n - 1)) if ties else 0.0
    var = nx * ny / 12.0 * (n + 1 - correction)
    if var <= 0:
        raise DegenerateData("all observations are identical")
    z = (u - 0.5 * nx * ny) / np.sqrt(var)
    return WmwResult(w, u, float(z), bool(ties), ties)


def wmw_rows(X, Y):
    """Row-wise WMW: returns ``(w, u, z, ties)`` arrays.

    ``ties`` flags rows with tied values; rows with all values identical
    get ``z = nan``.
    """
    X, Y = _rows(X), _rows(Y)
    nx, ny = X.shape[1], Y.shape[1]
    n = nx + ny
    pooled = np.concatenate((X, Y), axis=1)
    ranks = rankdata(pooled, method="average", axis=1)
    # an element in a tied group of size t contributes t^2 - 1, so the
    # row total equals sum over groups of t^3 - t
    t = rankdata(pooled, method="max", axis=1) - rankdata(pooled, method="min", axis=1) + 1
    tie_term = (t * t - 1).sum(axis=1)
    w = ranks[:, :nx].sum(axis=1)
    u = w - nx * (nx + 1) / 2.0
    var = nx * ny / 12.0 * (n + 1 - tie_term / (n * (n - 1)))
    bad = var <= 0
    z = (u - 0.5 * nx * ny) / np.sqrt(np.where(bad, 1.0, var))
    z[bad] = np.nan
    return w, u, z, tie_term > 0


# ---------------------------------------------------------------------------
# Empirical likelihood
# ---------------------------------------------------------------------------


def _el_lambda_rows(D, lam0):
    """Solve sum_i d_i / (1 + lam d_i) = 0 per row of deviations ``D``.

    Safeguarded Newton inside the bracket that keeps every 1 + lam d_i > 0.
    Every row must have min(D) < 0 < max(D). Returns (lam, iterations, ok).
    """
    m = D.shape[0]
    dmax = D.max(axis=1)
    dmin = D.min(axis=1)
    lo = -1.0 / dmax
    hi = -1.0 / dmin
    scale = np.maximum(dmax, -dmin)
    lam = np.array(lam0, dtype=float, copy=True)
    outside = ~((lam > lo) & (lam < hi))
    lam[outside] = 0.0
    iters = np.zeros(m, dtype=int)
    ok = np.zeros(m, dtype=bool)
    active = np.ones(m, dtype=bool)
    for _ in range(_MAX_INNER):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        d = D[idx]
        la = lam[idx]
        w = 1.0 / (1.0 + la[:, None] * d)
        dw = d * w
        g = dw.sum(axis=1)
        gp = -(dw * dw).sum(axis=1)
        l_lo, l_hi = lo[idx], hi[idx]
        l_lo = np.where(g > 0, la, l_lo)
        l_hi = np.where(g < 0, la, l_hi)
        lo[idx], hi[idx] = l_lo, l_hi
        newton = la - g / gp
        small = np.abs(newton - la) * scale[idx] <= _NEWTON_ACCEPT
        bad = ~((newton > l_lo) & (newton < l_hi)) & ~small
        new = np.where(bad, 0.5 * (l_lo + l_hi), newton)
        done = (g == 0) | small | ((l_hi - l_lo) * scale[idx] <= _LAMBDA_TOL)
        new = np.where(g == 0, la, new)
        lam[idx] = new
        iters[idx] += 1
        ok[idx[done]] = True
        active[idx[done]] = False
    return lam, iters, ok


def _feasible_overlap(X, Y):
    lo = np.maximum(X.min(axis=1), Y.min(axis=1))
    hi = np.minimum(X.max(axis=1), Y.max(axis=1))
    return lo, hi, lo < hi


def el_rows(X, Y):
    """EL statistic per row.

    The profile statistic is minimized over the common mean by solving its
    stationarity condition ``n_x lam_x(mu) + n_y lam_y(mu) = 0`` with a
    safeguarded Newton iteration, bracketed between the two sample means
    (intersected with the feasible overlap).

    Returns a dict of arrays: ``stat, mu, lam_x, lam_y, iterations, status``.
    """
    X, Y = _rows(X), _rows(Y)
    m, nx = X.shape
    ny = Y.shape[1]
    stat = np.full(m, np.nan)
    mu = np.full(m, np.nan)
    lam_x = np.full(m, np.nan)
    lam_y = np.full(m, np.nan)
    iters = np.zeros(m, dtype=int)
    status = np.full(m, NO_OVERLAP, dtype=int)

    f_lo, f_hi, feasible = _feasible_overlap(X, Y)
    rows = np.nonzero(feasible)[0]
    if rows.size == 0:
        return dict(stat=stat, mu=mu, lam_x=lam_x, lam_y=lam_y, iterations=iters, status=status)
    Xf, Yf = X[rows], Y[rows]
    mx, vx = _mean_var(Xf)
    my, vy = _mean_var(Yf)
    a = np.maximum(np.minimum(mx, my), f_lo[rows])
    b = np.minimum(np.maximum(mx, my), f_hi[rows])
    spread = f_hi[rows] - f_lo[rows]
    wx = np.where(vx > 0, nx / np.where(vx > 0, vx, 1.0), 1.0)
    wy = np.where(vy > 0, ny / np.where(vy > 0, vy, 1.0), 1.0)
    start = (wx * mx + wy * my) / (wx + wy)
    start = np.where((start > a) & (start < b), start, 0.5 * (a + b))
    degenerate = ~(a < b)
    start = np.where(degenerate, a, start)

    k = rows.size
    cur = start.copy()
    lx = np.zeros(k)
    ly = np.zeros(k)
    outer_ok = degenerate.copy()
    inner_ok = np.ones(k, dtype=bool)
    active = ~degenerate
    count = np.zeros(k, dtype=int)
    for _ in range(_MAX_OUTER):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        muc = cur[idx]
        lxa, _, okx = _el_lambda_rows(Xf[idx] - muc[:, None], lx[idx])
        lya, _, oky = _el_lambda_rows(Yf[idx] - muc[:, None], ly[idx])
        lx[idx], ly[idx] = lxa, lya
        h = nx * lxa + ny * lya
        dx = Xf[idx] - muc[:, None]
        dy = Yf[idx] - muc[:, None]
        wx2 = (1.0 / (1.0 + lxa[:, None] * dx)) ** 2
        wy2 = (1.0 / (1.0 + lya[:, None] * dy)) ** 2
        dlx = -wx2.sum(axis=1) / (dx * dx * wx2).sum(axis=1)
        dly = -wy2.sum(axis=1) / (dy * dy * wy2).sum(axis=1)
        hp = nx * dlx + ny * dly
        aa, bb = a[idx], b[idx]
        aa = np.where(h > 0, muc, aa)
        bb = np.where(h < 0, muc, bb)
        a[idx], b[idx] = aa, bb
        newton = muc - h / hp
        small = np.abs(newton - muc) <= _NEWTON_ACCEPT * spread[idx]
        bad = ~((newton > aa) & (newton < bb)) & ~small
        new = np.where(bad, 0.5 * (aa + bb), newton)
        new = np.where(h == 0, muc, new)
        done = (h == 0) | small | ((bb - aa) <= _MU_TOL * spread[idx])
        done &= okx & oky
        failed_inner = ~(okx & oky)
        inner_ok[idx[failed_inner]] = False
        cur[idx] = np.where(done, muc, new)
        count[idx] += 1
        outer_ok[idx[done]] = True
        active[idx[done | failed_inner]] = False

    # final multipliers at the reported mean
    dx = Xf - cur[:, None]
    dy = Yf - cur[:, None]
    lxf, _, okx = _el_lambda_rows(dx, lx)
    lyf, _, oky = _el_lambda_rows(dy, ly)
    val = 2.0 * np.log1p(lxf[:, None] * dx).sum(axis=1) + 2.0 * np.log1p(lyf[:, None] * dy).sum(axis=1)
    good = outer_ok & inner_ok & okx & oky
    st = np.where(good, OK, NO_CONVERGENCE)
    stat[rows] = np.where(good, np.maximum(val, 0.0), np.nan)
    mu[rows] = cur
    lam_x[rows] = lxf
    lam_y[rows] = lyf
    iters[rows] = count
    status[rows] = st
    return dict(stat=stat, mu=mu, lam_x=lam_x, lam_y=lam_y, iterations=iters, status=status)


def el_lambda_solve(s, mu: float):
    """One-sample EL multiplier at ``mu``: returns ``(lambda, iterations)``."""
    s = as_sample(s, 1, "sample")
    mu = float(mu)
    if not (s.min() < mu < s.max()):
        raise Infeasible(f"mu={mu!r} is not strictly inside the sample range [{s.min()!r}, {s.max()!r}]")
    lam, iters, ok = _el_lambda_rows((s - mu)[None, :], np.zeros(1))
    if not ok[0]:
        raise NoConvergence("EL multiplier iteration did not converge")
    return float(lam[0]), int(iters[0])


def one_sample_t2(s, mu: float) -> float:
    """Squared one-sample t statistic about ``mu`` (unbiased variance)."""
    s = np.asarray(s, dtype=float)
    n = s.size
    mean, var = _mean_var(s[None, :])
    return float(n * (mean[0] - mu) ** 2 / var[0])


@dataclass(frozen=True)
class ElResult:
    lambda_stat: float
    mu_hat: float
    lam_x: float
    lam_y: float
    p_x: np.ndarray
    p_y: np.ndarray
    t2_components: tuple[float, float]
    converged: bool
    iterations: int

    def asymptotic_form(self) -> float:
        """Quadratic approximation T^2 (1 + (T^2 - 1)/n)^-1 summed over samples."""
        nx, ny = self.p_x.size, self.p_y.size
        tx, ty = self.t2_components
        return tx / (1.0 + (tx - 1.0) / nx) + ty / (1.0 + (ty - 1.0) / ny)


def _raise_status(code: int, what: str):
    if code == OK:
        return
    raise STATUS_ERRORS[code](f"{what}: " + {
        NO_OVERLAP: "sample ranges do not overlap",
        NO_CONVERGENCE: "solver did not converge",
        OVERFLOW: "tilting probabilities underflow (samples nearly separated)",
        ZERO_VARIANCE: "zero variance",
    }[code])


def el_statistic(x, y) -> ElResult:
    x = as_sample(x, 2, "x")
    y = as_sample(y, 2, "y")
    r = el_rows(x, y)
    _raise_status(int(r["status"][0]), "empirical likelihood")
    mu = float(r["mu"][0])
    lx, ly = float(r["lam_x"][0]), float(r["lam_y"][0])
    px = 1.0 / (x.size * (1.0 + lx * (x - mu)))
    py = 1.0 / (y.size * (1.0 + ly * (y - mu)))
    return ElResult(
        lambda_stat=float(r["stat"][0]),
        mu_hat=mu,
        lam_x=lx,
        lam_y=ly,
        p_x=px,
        p_y=py,
        t2_components=(one_sample_t2(x, mu), one_sample_t2(y, mu)),
        converged=True,
        iterations=int(r["iterations"][0]),
    )


# ---------------------------------------------------------------------------
# Exponential empirical likelihood
# ---------------------------------------------------------------------------


def _tilt(Z, lam):
    """Tilted mean and variance of each row of Z under exp(lam * z)."""
    e = lam[:, None] * Z
    e = np.exp(e - e.max(axis=1, keepdims=True))
    s = e.sum(axis=1)
    mean = (Z * e).sum(axis=1) / s
    dev = Z - mean[:, None]
    var = (dev * dev * e).sum(axis=1) / s
    return mean, var


def _eel_gap(Xc, Yc, lam, r):
    mxl, vxl = _tilt(Xc, lam)
    myl, vyl = _tilt(Yc, -r * lam)
    return mxl - myl, vxl + r * vyl


def _log_probs(Z, lam):
    e = lam[:, None] * Z
    e = e - e.max(axis=1, keepdims=True)
    return e - np.log(np.exp(e).sum(axis=1))[:, None]


def eel_rows(X, Y):
    """EEL statistic per row.

    With ``lam_y = -(n_x / n_y) lam`` the two tilted means must agree, which
    is one monotone equation in ``lam``: bracketed by doubling from zero,
    then refined by safeguarded Newton.

    Returns a dict of arrays: ``stat, lam, tilted_mean, iterations, status``.
    """
    X, Y = _rows(X), _rows(Y)
    m, nx = X.shape
    ny = Y.shape[1]
    r = nx / ny
    stat = np.full(m, np.nan)
    lam_out = np.full(m, np.nan)
    tmean = np.full(m, np.nan)
    iters = np.zeros(m, dtype=int)
    status = np.full(m, NO_OVERLAP, dtype=int)

    f_lo, f_hi, feasible = _feasible_overlap(X, Y)
    rows = np.nonzero(feasible)[0]
    if rows.size == 0:
        return dict(stat=stat, lam=lam_out, tilted_mean=tmean, iterations=iters, status=status)
    center = 0.5 * (f_lo[rows] + f_hi[rows])
    Xc = X[rows] - center[:, None]
    Yc = Y[rows] - center[:, None]
    spread = np.maximum(np.ptp(Xc, axis=1), np.ptp(Yc, axis=1))
    k = rows.size

    f0, fp0 = _eel_gap(Xc, Yc, np.zeros(k), r)
    sign = np.where(f0 < 0, 1.0, -1.0)  # direction of the root
    lo = np.zeros(k)
    hi = np.zeros(k)
    # bracket: walk outward by doubling until the gap changes sign
    need = f0 != 0
    step = 1.0 / spread
    probe = np.zeros(k)
    found = ~need
    for _ in range(64):
        idx = np.nonzero(~found)[0]
        if idx.size == 0:
            break
        probe[idx] = sign[idx] * step[idx]
        f, _ = _eel_gap(Xc[idx], Yc[idx], probe[idx], r)
        crossed = np.sign(f) != np.sign(f0[idx])
        hit = idx[crossed]
        found[hit] = True
        lo[idx] = np.where(crossed, lo[idx], probe[idx])
        step[idx] = np.where(crossed, step[idx], 2.0 * step[idx])
    a = np.minimum(lo, probe)
    b = np.maximum(lo, probe)
    a = np.where(need, a, 0.0)
    b = np.where(need, b, 0.0)
    bracket_ok = found

    lam = np.where(need & bracket_ok, 0.5 * (a + b), 0.0)
    ok = ~need
    active = need & bracket_ok
    count = np.zeros(k, dtype=int)
    for _ in range(_MAX_INNER):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        la = lam[idx]
        f, fp = _eel_gap(Xc[idx], Yc[idx], la, r)
        aa, bb = a[idx], b[idx]
        aa = np.where(f < 0, la, aa)
        bb = np.where(f > 0, la, bb)
        a[idx], b[idx] = aa, bb
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = la - f / fp
        small = np.abs(newton - la) * spread[idx] <= _NEWTON_ACCEPT
        badn = ~((newton > aa) & (newton < bb)) & ~small
        new = np.where(badn, 0.5 * (aa + bb), newton)
        done = (f == 0) | small | ((bb - aa) * spread[idx] <= _LAMBDA_TOL)
        lam[idx] = np.where(f == 0, la, new)
        count[idx] += 1
        ok[idx[done]] = True
        active[idx[done]] = False

    lam_y = -(nx * lam) / ny
    lpx = _log_probs(Xc, lam)
    lpy = _log_probs(Yc, lam_y)
    val = -2.0 * (lpx.sum(axis=1) + nx * np.log(nx)) - 2.0 * (lpy.sum(axis=1) + ny * np.log(ny))
    underflow = (lpx.min(axis=1) < -745.0) | (lpy.min(axis=1) < -745.0)
    mean_x, _ = _tilt(Xc, lam)
    st = np.where(~ok, NO_CONVERGENCE, np.where(underflow, OVERFLOW, OK))
    stat[rows] = np.where(st == OK, np.maximum(val, 0.0), np.nan)
    lam_out[rows] = lam
    tmean[rows] = mean_x + center
    iters[rows] = count
    status[rows] = st
    return dict(stat=stat, lam=lam_out, tilted_mean=tmean, iterations=iters, status=status)


@dataclass(frozen=True)
class EelResult:
    lambda_stat: float
    lam: float
    tilted_mean: float
    p_x: np.ndarray
    p_y: np.ndarray
    converged: bool
    t2_components: tuple[float, float] = (float("nan"), float("nan"))

    @property
    def lam_x(self) -> float:
        return self.lam

    @property
    def lam_y(self) -> float:
        return -(self.p_x.size * self.lam) / self.p_y.size

    def asymptotic_form(self) -> float:
        """T^2 (1 - 1/n)^-1 summed over samples, T about the tilted mean."""
        nx, ny = self.p_x.size, self.p_y.size
        tx, ty = self.t2_components
        return tx / (1.0 - 1.0 / nx) + ty / (1.0 - 1.0 / ny)


def eel_statistic(x, y) -> EelResult:
    x = as_sample(x, 2, "x")
    y = as_sample(y, 2, "y")
    r = eel_rows(x, y)
    _raise_status(int(r["status"][0]), "exponential empirical likelihood")
    lam = float(r["lam"][0])
    lam_y = -(x.size * lam) / y.size
    xc = x - x.mean()
    yc = y - y.mean()
    px = np.exp(_log_probs(xc[None, :], np.array([lam]))[0])
    py = np.exp(_log_probs(yc[None, :], np.array([lam_y]))[0])
    mu = float(r["tilted_mean"][0])
    return EelResult(
        lambda_stat=float(r["stat"][0]),
        lam=lam,
        tilted_mean=mu,
        p_x=px,
        p_y=py,
        converged=True,
        t2_components=(one_sample_t2(x, mu), one_sample_t2(y, mu)),
    )


def tilted_means(x, y, res: EelResult) -> tuple[float, float]:
    """Tilted means of both samples under the solved multipliers."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.dot(res.p_x, x)), float(np.dot(res.p_y, y))
