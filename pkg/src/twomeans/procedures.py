"""Test procedures: a statistic paired with a calibration.

``run_test`` handles one pair of samples and raises on failure.
``evaluate_rows`` handles many datasets at once (one per row) and records
failures per row instead of raising, which is what the simulation and
batch drivers need.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import calibration as cal_
from . import core
from .calibration import Calibration, Method, check_combination
from .errors import DegenerateData, TiesPresent, TwoMeansError, ZeroVariance


@dataclass(frozen=True)
class TestOutcome:
    """Result of one test: statistic, degrees of freedom and p-value.

    ``error`` holds the error name when the test could not be carried out;
    statistic and p-value are then NaN/None.
    """

    __test__ = False  # not a pytest class

    method: str
    calibration: str
    statistic: float
    df: float | None
    pvalue: float | None
    error: str | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.error is None


def run_test(x, y, method, cal, B: int = cal_.DEFAULT_B, stream=None, cap: int = cal_.DEFAULT_CAP) -> TestOutcome:
    """Run one test on a single pair of samples; solver failures raise."""
    method, cal = check_combination(method, cal)
    m, c = method.value, cal.value
    if method is Method.WELCH:
        r = core.welch_statistic(x, y)
        if cal is Calibration.T:
            p = cal_.pvalue_t(r.t_w, r.nu)
        elif cal is Calibration.BOOT:
            p = cal_.bootstrap_pvalue(x, y, method, B, stream, observed=abs(r.t_w))
        else:
            p = cal_.welch_exact_pvalue(x, y, cap)
        return TestOutcome(m, c, r.t_w, r.nu, float(p), diagnostics={"mean_diff": r.mean_diff, "se": r.se})
    if method is Method.WMW:
        r = core.wmw_statistic(x, y)
        diag = {"w": r.w, "u": r.u, "ties": list(r.tie_multiplicities)}
        if cal is Calibration.NORMAL:
            return TestOutcome(m, c, r.z, None, float(cal_.pvalue_normal(r.z)), diagnostics=diag)
        if r.ties_present:
            raise TiesPresent("exact Mann-Whitney p-value is unavailable with tied observations")
        nx, ny = np.size(x), np.size(y)
        return TestOutcome(m, c, r.u, None, cal_.wmw_exact_pvalue(r.u, nx, ny, cap), diagnostics=diag)

    if method is Method.EL:
        r = core.el_statistic(x, y)
        diag = {"mu_hat": r.mu_hat, "lam_x": r.lam_x, "lam_y": r.lam_y, "iterations": r.iterations}
    else:
        r = core.eel_statistic(x, y)
        diag = {"tilted_mean": r.tilted_mean, "lam_x": r.lam_x, "lam_y": r.lam_y}
    stat = r.lambda_stat
    if cal is Calibration.CHISQ:
        return TestOutcome(m, c, stat, 1.0, float(cal_.pvalue_chisq1(stat)), diagnostics=diag)
    if cal is Calibration.T:
        nu = core.welch_statistic(x, y).nu
        return TestOutcome(m, c, stat, nu, float(cal_.pvalue_nonparam_t(stat, nu)), diagnostics=diag)
    p = cal_.bootstrap_pvalue(x, y, method, B, stream, observed=stat)
    return TestOutcome(m, c, stat, None, float(p), diagnostics=diag)


# ---------------------------------------------------------------------------
# many datasets at once
# ---------------------------------------------------------------------------


@dataclass
class RowOutcomes:
    """Columnar outcomes for a block of datasets.

    ``failure`` is an object array holding the error name, or ``""`` for
    rows that produced a p-value.
    """

    method: str
    calibration: str
    statistic: np.ndarray
    df: np.ndarray
    pvalue: np.ndarray
    failure: np.ndarray

    def __len__(self) -> int:
        return self.statistic.size

    def __getitem__(self, i: int) -> TestOutcome:
        fail = self.failure[i] or None
        df = None if np.isnan(self.df[i]) else float(self.df[i])
        p = None if fail else float(self.pvalue[i])
        return TestOutcome(self.method, self.calibration, float(self.statistic[i]), df, p, fail)

    @property
    def valid(self) -> np.ndarray:
        return self.failure == ""

    @classmethod
    def concat(cls, parts: list["RowOutcomes"]) -> "RowOutcomes":
        first = parts[0]
        return cls(
            first.method,
            first.calibration,
            np.concatenate([p.statistic for p in parts]),
            np.concatenate([p.df for p in parts]),
            np.concatenate([p.pvalue for p in parts]),
            np.concatenate([p.failure for p in parts]),
        )


def _status_names(status: np.ndarray) -> np.ndarray:
    names = np.full(status.shape, "", dtype=object)
    for code, err in core.STATUS_ERRORS.items():
        names[status == code] = err.__name__
    return names


def evaluate_rows(
    method,
    cal,
    X,
    Y,
    B: int = cal_.DEFAULT_B,
    stream_for: Callable[[int], object] | None = None,
    cap: int = cal_.DEFAULT_CAP,
) -> RowOutcomes:
    """Evaluate one procedure on every row of ``X`` against the same row of ``Y``.

    ``stream_for(i)`` supplies the bootstrap RNG stream of row ``i``; each
    row's result depends only on that row and its stream.
    """
    method, cal = check_combination(method, cal)
    X = core._rows(X)
    Y = core._rows(Y)
    rows = X.shape[0]
    stat = np.full(rows, np.nan)
    df = np.full(rows, np.nan)
    p = np.full(rows, np.nan)
    fail = np.full(rows, "", dtype=object)

    t, nu, _, se = core.welch_rows(X, Y)
    if method is Method.WELCH:
        stat[:] = t
        df[:] = nu
        fail[se == 0] = ZeroVariance.__name__
    elif method is Method.WMW:
        _, u, z, ties = core.wmw_rows(X, Y)
        stat[:] = z if cal is Calibration.NORMAL else u
        fail[np.isnan(z)] = DegenerateData.__name__
    else:
        res = core.el_rows(X, Y) if method is Method.EL else core.eel_rows(X, Y)
        stat[:] = res["stat"]
        fail[:] = _status_names(res["status"])
        if cal is Calibration.CHISQ:
            df[:] = 1.0
        elif cal is Calibration.T:
            df[:] = nu
            fail[(fail == "") & (se == 0)] = ZeroVariance.__name__

    ok = fail == ""
    if cal is Calibration.T:
        if method is Method.WELCH:
            p[ok] = cal_.pvalue_t(stat[ok], df[ok])
        else:
            p[ok] = cal_.pvalue_nonparam_t(stat[ok], df[ok])
    elif cal is Calibration.CHISQ:
        p[ok] = cal_.pvalue_chisq1(stat[ok])
    elif cal is Calibration.NORMAL:
        p[ok] = cal_.pvalue_normal(stat[ok])
    elif cal is Calibration.EXACT and method is Method.WMW:
        fail[ok & ties] = TiesPresent.__name__
        ok = fail == ""
        if np.any(ok):
            p[ok] = cal_.wmw_exact_pvalues(stat[ok], X.shape[1], Y.shape[1], cap)
    else:
        observed = np.abs(stat) if method is Method.WELCH else stat
        for i in np.nonzero(ok)[0]:
            try:
                if cal is Calibration.BOOT:
                    stream = stream_for(int(i)) if stream_for is not None else None
                    p[i] = cal_.bootstrap_pvalue(X[i], Y[i], method, B, stream, observed=float(observed[i]))
                else:
                    p[i] = cal_.welch_exact_pvalue(X[i], Y[i], cap)
            except TwoMeansError as exc:
                fail[i] = exc.name
    return RowOutcomes(method.value, cal.value, stat, df, p, fail)
