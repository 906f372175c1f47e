"""Acceptance criteria, each at its stated tolerance.

Run alone with ``pytest tests/test_acceptance.py -v``; the terminal summary
lists one PASS/FAIL line per criterion. The full set takes roughly 12
minutes on one core.
"""

import itertools
import math
import os
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from twomeans.batch import synthetic_matrix, time_methods
from twomeans.calibration import Calibration as C
from twomeans.calibration import Method as M
from twomeans.calibration import welch_exact_pvalue, wmw_exact_distribution
from twomeans.cli import main
from twomeans.core import eel_statistic, el_statistic, tilted_means
from twomeans.errors import NoOverlap
from twomeans.scenarios import ScenarioSpec, analytic_variance, make_scenario, normal, sample
from twomeans.simulation import GOLDEN_SIZES, SimConfig, estimate_power, estimate_type1, quantile_divergence

THREADS = os.cpu_count() or 1


def _brute_wmw(nx, ny):
    counts = [0] * (nx * ny + 1)
    for ranks in itertools.combinations(range(1, nx + ny + 1), nx):
        counts[sum(ranks) - nx * (nx + 1) // 2] += 1
    return counts


def _exact_t2(gx, gy):
    def mv(g):
        m = sum(g, Fraction(0)) / len(g)
        return m, sum(((v - m) ** 2 for v in g), Fraction(0)) / (len(g) - 1)

    (mx, vx), (my, vy) = mv(gx), mv(gy)
    den = vx / len(gx) + vy / len(gy)
    return None if den == 0 else (mx - my) ** 2 / den


def _brute_welch(x, y):
    # data are short decimals; ties are judged on their decimal values
    pooled = [Fraction(repr(float(v))) for v in list(x) + list(y)]
    nx = len(x)
    obs = _exact_t2(pooled[:nx], pooled[nx:])
    hits = total = 0
    for idx in itertools.combinations(range(len(pooled)), nx):
        s = set(idx)
        t2 = _exact_t2([pooled[i] for i in idx], [pooled[i] for i in range(len(pooled)) if i not in s])
        total += 1
        hits += t2 is None or t2 >= obs
    return Fraction(hits, total)


def test_criterion_01_exact_oracle_equivalence(acceptance_log):
    pairs = 0
    for nx in range(1, 7):
        for ny in range(1, 7):
            total = math.comb(nx + ny, nx)
            pmf = wmw_exact_distribution(nx, ny).pmf
            got = [Fraction(float(p)).limit_denominator(total) for p in pmf]
            assert got == [Fraction(c, total) for c in _brute_wmw(nx, ny)], (nx, ny)
            pairs += 1
    rng = np.random.default_rng(1)
    welch_pairs = 0
    for nx in range(2, 7):
        for ny in range(2, 7):
            for _ in range(3):
                x = np.round(rng.normal(size=nx), 2)
                y = np.round(rng.normal(0.3, 2.0, size=ny), 2)
                p = welch_exact_pvalue(x, y)
                assert Fraction(p).limit_denominator(math.comb(nx + ny, nx)) == _brute_welch(x, y), (x, y)
            welch_pairs += 1
    acceptance_log(f"wmw pmf exact for {pairs} size pairs, welch permutation exact for {welch_pairs} size pairs")


def test_criterion_02_solver_identities(acceptance_log):
    rng = np.random.default_rng(2)
    ids = "abcdefikl"
    worst = dict(el_mean=0.0, el_sum=0.0, eel_balance=0.0, eel_means=0.0)
    solved = 0
    for k in range(200):
        sc = make_scenario(ids[k % len(ids)])
        nx, ny = (int(v) for v in rng.integers(5, 101, size=2))
        x, y = sample(sc.sample1, nx, rng), sample(sc.sample2, ny, rng)
        try:
            el = el_statistic(x, y)
            eel = eel_statistic(x, y)
        except NoOverlap:
            continue
        solved += 1
        for p, s in ((el.p_x, x), (el.p_y, y)):
            worst["el_mean"] = max(worst["el_mean"], abs(np.dot(p, s - el.mu_hat)))
            worst["el_sum"] = max(worst["el_sum"], abs(p.sum() - 1))
        # one multiplication and one division separate the two multipliers
        worst["eel_balance"] = max(worst["eel_balance"],
                                   abs(nx * eel.lam_x + ny * eel.lam_y) / max(1.0, nx * abs(eel.lam_x)))
        mx, my = tilted_means(x, y, eel)
        worst["eel_means"] = max(worst["eel_means"], abs(mx - my))
    acceptance_log(f"{solved}/200 datasets overlap; " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items()))
    assert solved >= 190
    assert worst["el_mean"] <= 1e-8
    assert worst["el_sum"] <= 1e-10
    assert worst["eel_balance"] <= 4e-16
    assert worst["eel_means"] <= 1e-8


def test_criterion_03_asymptotic_form_convergence(acceptance_log):
    med = {}
    for n in (100, 2000):
        el_gap, eel_gap = [], []
        for seed in range(50):
            rng = np.random.default_rng([3, n, seed])
            x, y = rng.normal(size=n), rng.normal(size=n)
            el = el_statistic(x, y)
            eel = eel_statistic(x, y)
            el_gap.append(abs(el.lambda_stat - el.asymptotic_form()))
            eel_gap.append(abs(eel.lambda_stat - eel.asymptotic_form()))
        med[n] = (float(np.median(el_gap)), float(np.median(eel_gap)))
    acceptance_log(f"EL median gap {med[100][0]:.2e} -> {med[2000][0]:.2e}, "
                   f"EEL {med[100][1]:.2e} -> {med[2000][1]:.2e}")
    assert med[2000][0] < med[100][0]
    assert med[2000][1] < med[100][1]


REFERENCE_WELCH = dict(zip(GOLDEN_SIZES, (0.048, 0.065, 0.052, 0.039, 0.052)))


def test_criterion_04_table3_scenario_a(acceptance_log):
    cfg = SimConfig(make_scenario("a"), GOLDEN_SIZES, ((M.WELCH, C.T), (M.WMW, C.NORMAL)), replications=1000,
                    master_seed=4)
    rep = estimate_type1(cfg, threads=THREADS)
    welch = [rep.row("welch", "t", s) for s in GOLDEN_SIZES]
    wmw = [rep.row("wmw", "normal", s) for s in GOLDEN_SIZES]
    acceptance_log("welch " + " ".join(f"{r.rate:.3f}" for r in welch))
    acceptance_log("wmw " + " ".join(f"{r.rate:.3f}" for r in wmw))
    assert sum(r.in_band for r in welch) >= 4
    for s, r in zip(GOLDEN_SIZES, welch):
        assert abs(r.rate - REFERENCE_WELCH[s]) <= 0.015, (s, r.rate)
    assert all(r.rate > 0.0635 for r in wmw)


CRIT5_SCENARIOS = "abcdefik"
CRIT5_SIZES = ((20, 30), (30, 40), (50, 100))
CRIT5_METHODS = (
    (M.EL, C.CHISQ), (M.EL, C.T), (M.EL, C.BOOT),
    (M.EEL, C.CHISQ), (M.EEL, C.T), (M.EEL, C.BOOT),
)


def test_criterion_05_calibration_ordering(acceptance_log):
    hits = {m: 0 for m in CRIT5_METHODS}
    cells = 0
    for sid in CRIT5_SCENARIOS:
        cfg = SimConfig(make_scenario(sid), CRIT5_SIZES, CRIT5_METHODS, replications=1000, master_seed=5)
        rep = estimate_type1(cfg, threads=THREADS)
        for size in CRIT5_SIZES:
            cells += 1
            for m in CRIT5_METHODS:
                hits[m] += rep.row(*m, size).in_band
    prop = {f"{m.value}:{c.value}": hits[(m, c)] / cells for m, c in CRIT5_METHODS}
    acceptance_log(", ".join(f"{k}={v:.3f}" for k, v in prop.items()))
    assert prop["el:t"] > prop["el:chisq"]
    assert prop["eel:t"] > prop["eel:chisq"]
    assert prop["el:boot"] >= prop["el:chisq"]
    assert prop["eel:boot"] >= prop["eel:chisq"]


def test_criterion_06_very_small_samples(acceptance_log):
    cfg = SimConfig(make_scenario("a"), ((10, 10),), ((M.WELCH, C.T), (M.WELCH, C.EXACT)), replications=1000,
                    master_seed=6)
    rep = estimate_type1(cfg, threads=THREADS)
    asym = rep.row("welch", "t", (10, 10))
    exact = rep.row("welch", "exact", (10, 10))
    acceptance_log(f"welch t {asym.rate:.3f}, welch exact {exact.rate:.3f} (reference 0.077)")
    assert asym.in_band
    assert abs(exact.rate - 0.077) <= 0.02


def test_criterion_07_pvalue_uniformity(acceptance_log):
    null = ScenarioSpec("a", normal(0, 1), normal(0, 1), 0.0)
    cfg = SimConfig(null, ((50, 50),), ((M.WELCH, C.T),), replications=2000, master_seed=7)
    rep = estimate_type1(cfg, threads=THREADS)
    p = rep.pvalues[("a", 50, 50, "welch", "t")]
    ks = stats.kstest(p, "uniform").statistic
    div = quantile_divergence(p)
    acceptance_log(f"KS {ks:.4f}, max_abs_diff {div.max_abs_diff:.4f}, JS {div.js_divergence:.2e}")
    assert p.size == 2000
    assert ks <= 0.05
    assert div.max_abs_diff <= 0.03


def test_criterion_08_power_agreement(acceptance_log):
    sc = make_scenario("a")
    sd = math.sqrt(analytic_variance(sc.sample2))
    deltas = np.arange(0, 7) * 0.25 * sd
    methods = ((M.WELCH, C.BOOT), (M.EL, C.BOOT), (M.EEL, C.BOOT))
    cfg = SimConfig(sc, ((50, 100),), methods, replications=1000, master_seed=8)
    curve = estimate_power(cfg, deltas, threads=THREADS)
    keys = [(m.value, c.value, 50, 100) for m, c in methods]
    rates = np.array([curve.rates[k] for k in keys])
    spread = rates.max(axis=0) - rates.min(axis=0)
    for k in keys:
        acceptance_log(f"{k[0]} " + " ".join(f"{v:.3f}" for v in curve.rates[k]))
    assert np.all(spread <= 0.08), spread
    for k in keys:
        r, se = curve.rates[k], curve.standard_errors(k)
        drop = r[:-1] - r[1:]
        assert np.all(drop <= 2 * np.sqrt(se[:-1] ** 2 + se[1:] ** 2)), (k, r)


def test_criterion_09_performance(acceptance_log):
    m = synthetic_matrix(54_675, 102, 102, seed=9)
    rep = time_methods(m, [("welch", "t"), ("el", "chisq"), ("eel", "chisq")], repeats=3)
    boot = time_methods(m, [("welch", "boot")], B=499, warmup_rows=8)
    w, el, eel = rep.get("welch", "t"), rep.get("el", "chisq"), rep.get("eel", "chisq")
    wb = boot.get("welch", "boot")
    acceptance_log(f"welch {w.seconds:.2f}s, EL/welch {el.per_test / w.per_test:.1f}x, "
                   f"EEL/welch {eel.per_test / w.per_test:.1f}x, welch boot/welch {wb.seconds / w.seconds:.0f}x")
    assert w.tests == 54_675 and w.failures == 0
    assert w.seconds < 10
    assert el.per_test >= 10 * w.per_test
    assert eel.per_test >= 3 * w.per_test
    assert wb.seconds >= 100 * w.seconds


def test_criterion_10_determinism(acceptance_log, tmp_path, capsys):
    sim = ["simulate", "--scenario", "a,k", "--sizes", "20,30", "--sizes", "12,15", "--reps", "150", "--B", "49",
           "--methods", "welch:t,wmw:normal,el:boot,eel:t,welch:boot", "--seed", "10"]
    bat = ["batch", "--synthetic", "9000,8,9", "--method", "el", "--cal", "boot", "--B", "29", "--seed", "10"]
    outputs = []
    for run, threads in enumerate((1, 1, 2, 3)):
        d = tmp_path / f"run{run}"
        assert main(sim + ["--threads", str(threads), "--out", str(d / "sim")]) == 0
        assert main(bat + ["--threads", str(threads), "--out", str(d / "batch.tsv")]) == 0
        capsys.readouterr()
        outputs.append(tuple((d / "sim" / f).read_bytes() for f in ("size_report.tsv", "size_report.json",
                                                                     "divergence.tsv"))
                       + ((d / "batch.tsv").read_bytes(),))
    acceptance_log("simulate and batch outputs compared over threads 1, 1, 2, 3")
    assert all(o == outputs[0] for o in outputs[1:])
