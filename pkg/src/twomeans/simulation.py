"""Monte Carlo harness for type I error, quantile diagnostics and power.

Every replication draws its two samples from its own RNG stream, keyed by
``(master_seed; scenario, n_x, n_y, replication, role)``. All procedures in a
run see the same samples, and adding a procedure or changing the worker
count never changes the draws. Bootstrap resampling uses further streams
keyed the same way with a per-procedure role.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import rel_entr

from .calibration import DEFAULT_B, Calibration, Method, check_combination
from .errors import ConfigError, DomainError, EmptyInput
from .procedures import RowOutcomes, evaluate_rows
from .scenarios import SCENARIO_IDS, ScenarioSpec, check_null, sample, shift

# default calibration when a procedure is named without one
DEFAULT_CAL = {
    Method.WELCH: Calibration.T,
    Method.WMW: Calibration.NORMAL,
    Method.EL: Calibration.CHISQ,
    Method.EEL: Calibration.CHISQ,
}

# the ten procedure/calibration columns of the golden type I error grid
GOLDEN_METHODS = (
    (Method.EL, Calibration.CHISQ),
    (Method.EEL, Calibration.CHISQ),
    (Method.EL, Calibration.T),
    (Method.EEL, Calibration.T),
    (Method.WELCH, Calibration.T),
    (Method.WMW, Calibration.NORMAL),
    (Method.EL, Calibration.BOOT),
    (Method.EEL, Calibration.BOOT),
    (Method.WELCH, Calibration.BOOT),
    (Method.WMW, Calibration.EXACT),
)
GOLDEN_SIZES = ((20, 30), (20, 40), (30, 40), (30, 50), (50, 100))
DEFAULT_LEVELS = tuple(k / 100 for k in range(1, 100))

_ROLE_X = 0
_ROLE_Y = 1
_ROLE_BOOT = 10  # plus the procedure's ordinal
_CHUNK = 50  # replications per work unit


def parse_methods(text: str) -> list[tuple[Method, Calibration]]:
    """Parse ``"welch:t,el:boot,eel"`` into (method, calibration) pairs."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        name, _, cal = item.partition(":")
        try:
            method = Method(name.strip().lower())
        except ValueError:
            raise ConfigError(f"unknown method {name!r}") from None
        out.append(check_combination(method, cal.strip().lower() or DEFAULT_CAL[method]))
    if not out:
        raise ConfigError("no methods given")
    return out


def method_label(method, cal) -> str:
    return f"{Method(method).value}:{Calibration(cal).value}"


@dataclass(frozen=True)
class SimConfig:
    scenario: ScenarioSpec
    size_pairs: tuple[tuple[int, int], ...]
    methods: tuple[tuple[Method, Calibration], ...]
    replications: int = 1000
    alpha: float = 0.05
    master_seed: int = 0
    B: int = DEFAULT_B

    def __post_init__(self):
        if int(self.replications) != self.replications or self.replications < 1:
            raise ConfigError(f"replications must be a positive integer, got {self.replications!r}")
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if int(self.B) != self.B or self.B < 1:
            raise ConfigError(f"B must be a positive integer, got {self.B!r}")
        if not self.size_pairs:
            raise ConfigError("at least one size pair is required")
        pairs = []
        for pair in self.size_pairs:
            nx, ny = (int(v) for v in pair)
            if nx < 2 or ny < 2 or (nx, ny) != tuple(pair):
                raise ConfigError(f"size pairs need integers >= 2, got {pair!r}")
            pairs.append((nx, ny))
        if not self.methods:
            raise ConfigError("at least one method is required")
        object.__setattr__(self, "size_pairs", tuple(pairs))
        object.__setattr__(self, "methods", tuple(check_combination(m, c) for m, c in self.methods))
        object.__setattr__(self, "replications", int(self.replications))
        object.__setattr__(self, "B", int(self.B))


def size_band(alpha: float, replications: int) -> tuple[float, float]:
    """Normal-approximation 95% band for a rejection rate around ``alpha``."""
    if not (0.0 < alpha < 1.0) or int(replications) != replications or replications < 1:
        raise DomainError("size_band needs 0 < alpha < 1 and a positive integer replication count")
    half = 1.96 * math.sqrt(alpha * (1.0 - alpha) / replications)
    return alpha - half, alpha + half


# ---------------------------------------------------------------------------
# drawing and evaluating replications
# ---------------------------------------------------------------------------


def replication_seed(master_seed: int, scenario_id: str, n_x: int, n_y: int, rep: int, role: int):
    key = (SCENARIO_IDS.index(scenario_id), n_x, n_y, rep, role)
    return np.random.SeedSequence(master_seed, spawn_key=key)


def draw_replications(scenario: ScenarioSpec, n_x: int, n_y: int, reps, master_seed: int, delta: float = 0.0):
    """Samples for the replications in ``reps``: arrays of shape (len, n)."""
    d2 = shift(scenario.sample2, delta)
    X = np.empty((len(reps), n_x))
    Y = np.empty((len(reps), n_y))
    for row, r in enumerate(reps):
        X[row] = sample(scenario.sample1, n_x, replication_seed(master_seed, scenario.id, n_x, n_y, r, _ROLE_X))
        Y[row] = sample(d2, n_y, replication_seed(master_seed, scenario.id, n_x, n_y, r, _ROLE_Y))
    return X, Y


def _ordinal(method: Method) -> int:
    return list(Method).index(method)


def _cell_chunk(args):
    scenario, n_x, n_y, start, stop, methods, seed, B, delta = args
    reps = range(start, stop)
    X, Y = draw_replications(scenario, n_x, n_y, reps, seed, delta)
    out = []
    for method, cal in methods:
        role = _ROLE_BOOT + _ordinal(method)

        def stream_for(i, role=role):
            return replication_seed(seed, scenario.id, n_x, n_y, start + i, role)

        out.append(evaluate_rows(method, cal, X, Y, B, stream_for))
    return out


def run_cell(scenario: ScenarioSpec, n_x: int, n_y: int, methods, replications: int, master_seed: int,
             B: int = DEFAULT_B, delta: float = 0.0, threads: int = 1) -> list[RowOutcomes]:
    """Outcomes of every procedure over all replications of one size pair."""
    jobs = [
        (scenario, n_x, n_y, s, min(s + _CHUNK, replications), tuple(methods), master_seed, B, delta)
        for s in range(0, replications, _CHUNK)
    ]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_cell_chunk, jobs))
    else:
        parts = [_cell_chunk(j) for j in jobs]
    return [RowOutcomes.concat([p[k] for p in parts]) for k in range(len(methods))]


# ---------------------------------------------------------------------------
# type I error
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SizeRow:
    scenario: str
    n_x: int
    n_y: int
    method: str
    calibration: str
    rejections: int
    valid: int
    failures: int
    rate: float
    band: tuple[float, float]
    in_band: bool

    @property
    def label(self) -> str:
        return f"{self.method}:{self.calibration}"


@dataclass
class SizeReport:
    rows: list[SizeRow]
    alpha: float
    replications: int
    master_seed: int
    pvalues: dict = field(default_factory=dict, repr=False)

    @property
    def band(self) -> tuple[float, float]:
        return size_band(self.alpha, self.replications)

    def row(self, method, cal, sizes, scenario: str | None = None) -> SizeRow:
        label = method_label(method, cal)
        for r in self.rows:
            if r.label == label and (r.n_x, r.n_y) == tuple(sizes) and scenario in (None, r.scenario):
                return r
        raise KeyError((label, sizes, scenario))

    def to_tsv(self) -> str:
        head = "scenario\tn_x\tn_y\tmethod\tcalibration\trate\tband_lo\tband_hi\tin_band\trejections\tvalid\tfailures"
        lines = [head]
        for r in self.rows:
            lines.append(
                f"{r.scenario}\t{r.n_x}\t{r.n_y}\t{r.method}\t{r.calibration}\t{r.rate:.6g}\t"
                f"{r.band[0]:.6g}\t{r.band[1]:.6g}\t{str(r.in_band).lower()}\t{r.rejections}\t{r.valid}\t{r.failures}"
            )
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        doc = {
            "alpha": self.alpha,
            "replications": self.replications,
            "master_seed": self.master_seed,
            "band": list(self.band),
            "rows": [asdict(r) for r in self.rows],
        }
        return json.dumps(doc, indent=2, allow_nan=True)

    def merge(self, other: "SizeReport") -> "SizeReport":
        return SizeReport(self.rows + other.rows, self.alpha, self.replications, self.master_seed,
                          {**self.pvalues, **other.pvalues})


def estimate_type1(cfg: SimConfig, threads: int = 1) -> SizeReport:
    """Rejection rates under the null for every size pair and procedure.

    Solver failures are counted separately and excluded from the rate's
    denominator.
    """
    check_null(cfg.scenario)
    band = size_band(cfg.alpha, cfg.replications)
    rows, pvals = [], {}
    for nx, ny in cfg.size_pairs:
        results = run_cell(cfg.scenario, nx, ny, cfg.methods, cfg.replications, cfg.master_seed, cfg.B, 0.0, threads)
        for (method, cal), res in zip(cfg.methods, results):
            p = res.pvalue[res.valid]
            rej = int(np.count_nonzero(p <= cfg.alpha))
            valid = int(p.size)
            rate = rej / valid if valid else float("nan")
            rows.append(SizeRow(cfg.scenario.id, nx, ny, method.value, cal.value, rej, valid,
                                len(res) - valid, rate, band, bool(band[0] < rate < band[1])))
            pvals[(cfg.scenario.id, nx, ny, method.value, cal.value)] = p
    return SizeReport(rows, cfg.alpha, cfg.replications, cfg.master_seed, pvals)


# ---------------------------------------------------------------------------
# quantile diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DivergenceReport:
    """Empirical rejection rate at each nominal level and two summaries.

    The Jensen-Shannon divergence (base 2) compares the increments of the
    nominal and empirical curves, each padded with the endpoints 0 and 1.
    """

    levels: np.ndarray
    empirical_rates: np.ndarray
    js_divergence: float
    max_abs_diff: float


def quantile_divergence(pvalues, levels=DEFAULT_LEVELS) -> DivergenceReport:
    p = np.asarray(pvalues, dtype=float).ravel()
    if p.size == 0:
        raise EmptyInput("quantile_divergence needs at least one p-value")
    if np.any(~((p >= 0) & (p <= 1))):
        raise DomainError("p-values must lie in [0, 1]")
    levels = np.asarray(levels, dtype=float)
    rates = np.searchsorted(np.sort(p), levels, side="right") / p.size
    nominal = np.diff(np.concatenate(([0.0], levels, [1.0])))
    empirical = np.diff(np.concatenate(([0.0], rates, [1.0])))
    nominal = nominal / nominal.sum()
    empirical = empirical / empirical.sum()
    mid = 0.5 * (nominal + empirical)
    js = 0.5 * (rel_entr(nominal, mid).sum() + rel_entr(empirical, mid).sum()) / math.log(2.0)
    return DivergenceReport(levels, rates, float(max(js, 0.0)), float(np.max(np.abs(rates - levels))))


def divergence_table(report: SizeReport, levels=DEFAULT_LEVELS) -> str:
    """Per-level curves for every cell of a size report, as TSV."""
    lines = ["scenario\tn_x\tn_y\tmethod\tcalibration\tlevel\trate\tjs_divergence\tmax_abs_diff"]
    for (sid, nx, ny, m, c), p in report.pvalues.items():
        if p.size == 0:
            continue
        d = quantile_divergence(p, levels)
        for lev, rate in zip(d.levels, d.empirical_rates):
            lines.append(f"{sid}\t{nx}\t{ny}\t{m}\t{c}\t{lev:.6g}\t{rate:.6g}\t{d.js_divergence:.6g}\t{d.max_abs_diff:.6g}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# power
# ---------------------------------------------------------------------------


@dataclass
class PowerCurve:
    deltas: np.ndarray
    rates: dict  # (method, calibration, n_x, n_y) -> rate per delta
    valid: dict  # same keys -> valid replications per delta
    scenario: str = ""

    def standard_errors(self, key) -> np.ndarray:
        r = self.rates[key]
        return np.sqrt(r * (1.0 - r) / np.maximum(self.valid[key], 1))

    def to_tsv(self) -> str:
        lines = ["scenario\tn_x\tn_y\tmethod\tcalibration\tdelta\trate\tvalid"]
        for (m, c, nx, ny), r in self.rates.items():
            for d, v, n in zip(self.deltas, r, self.valid[(m, c, nx, ny)]):
                lines.append(f"{self.scenario}\t{nx}\t{ny}\t{m}\t{c}\t{d:.6g}\t{v:.6g}\t{n}")
        return "\n".join(lines) + "\n"


def default_deltas(scenario: ScenarioSpec, steps: int = 16, top: float = 1.5) -> np.ndarray:
    """0, 0.1 sd, ..., 1.5 sd, with sd the population SD of sample 2."""
    from .scenarios import analytic_variance

    sd = math.sqrt(analytic_variance(scenario.sample2))
    return np.linspace(0.0, top, steps) * sd


def estimate_power(cfg: SimConfig, deltas, threads: int = 1) -> PowerCurve:
    """Rejection rates with sample 2 shifted by each delta."""
    deltas = np.asarray(deltas, dtype=float).ravel()
    if deltas.size == 0 or not np.all(np.isfinite(deltas)):
        raise ConfigError("deltas must be a nonempty list of finite numbers")
    rates, valid = {}, {}
    for nx, ny in cfg.size_pairs:
        for k, delta in enumerate(deltas):
            results = run_cell(cfg.scenario, nx, ny, cfg.methods, cfg.replications, cfg.master_seed, cfg.B,
                               float(delta), threads)
            for (method, cal), res in zip(cfg.methods, results):
                key = (method.value, cal.value, nx, ny)
                rates.setdefault(key, np.full(deltas.size, np.nan))
                valid.setdefault(key, np.zeros(deltas.size, dtype=int))
                p = res.pvalue[res.valid]
                valid[key][k] = p.size
                rates[key][k] = np.count_nonzero(p <= cfg.alpha) / p.size if p.size else np.nan
    return PowerCurve(deltas, rates, valid, cfg.scenario.id)
