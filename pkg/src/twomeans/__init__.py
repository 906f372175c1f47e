"""Two-sample tests for equal population means.

Welch, Wilcoxon-Mann-Whitney, empirical likelihood and exponential
empirical likelihood statistics with asymptotic, bootstrap and exact
calibrations, plus a Monte Carlo harness and row-wise batch testing.
"""

__version__ = "0.1.0"

from .calibration import Calibration, Method
from .core import (
    common_mean,
    eel_statistic,
    el_lambda_solve,
    el_statistic,
    rank_midranks,
    welch_statistic,
    wmw_statistic,
)
from .procedures import TestOutcome, run_test

__all__ = [
    "Calibration",
    "Method",
    "TestOutcome",
    "common_mean",
    "eel_statistic",
    "el_lambda_solve",
    "el_statistic",
    "rank_midranks",
    "run_test",
    "welch_statistic",
    "wmw_statistic",
]
