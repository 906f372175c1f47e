import numpy as np
import pytest

from twomeans.batch import (
    ExpressionMatrix,
    batch_test,
    load_matrix,
    synthetic_matrix,
    time_methods,
)
from twomeans.core import welch_statistic
from twomeans.calibration import pvalue_t
from twomeans.errors import ConfigError, DataIOError, GroupError, ParseError

TOY = "feature\ts1\ts2\ts3\ts4\n#group\tA\tA\tB\tB\ng1\t1.0\t2.0\t3.0\t5.0\ng2\t0.5\t0.7\t0.2\t0.1\ng3\t4\t4\t4\t4\n"


def _write(tmp_path, text, name="m.tsv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_toy(tmp_path):
    m = load_matrix(_write(tmp_path, TOY))
    assert (m.rows, m.cols) == (3, 4)
    assert m.feature_ids == ("g1", "g2", "g3")
    assert list(m.group_labels) == [True, True, False, False]
    assert m.group_names == ("A", "B")


def test_load_csv_and_sidecar(tmp_path):
    body = "id,c1,c2,c3,c4,c5\nr1,1,2,3,4,5\nr2,2,2,1,0,3\n"
    side = _write(tmp_path, "c1\tctl\nc2\tcase\nc3\tctl\nc4\tcase\nc5\tcase\n", "labels.txt")
    m = load_matrix(_write(tmp_path, body, "m.csv"), side)
    assert list(m.group_labels) == [True, False, True, False, False]
    x, y = m.split()
    assert x.tolist() == [[1, 3], [2, 1]]
    assert y.tolist() == [[2, 4, 5], [2, 0, 3]]


def test_non_numeric_cell(tmp_path):
    bad = TOY.replace("0.7", "n/a")
    with pytest.raises(ParseError) as info:
        load_matrix(_write(tmp_path, bad))
    assert info.value.line == 4 and info.value.column == 3
    assert "n/a" in str(info.value)


def test_field_count_and_duplicates(tmp_path):
    with pytest.raises(ParseError) as info:
        load_matrix(_write(tmp_path, TOY.replace("\t5.0\n", "\n")))
    assert info.value.line == 3
    with pytest.raises(ParseError):
        load_matrix(_write(tmp_path, TOY.replace("g2", "g1")))


def test_group_errors(tmp_path):
    with pytest.raises(GroupError):
        load_matrix(_write(tmp_path, TOY.replace("A\tA\tB\tB", "A\tA\tA\tA")))
    with pytest.raises(GroupError):
        load_matrix(_write(tmp_path, TOY.replace("A\tA\tB\tB", "A\tB\tB\tB")))
    with pytest.raises(GroupError):
        load_matrix(_write(tmp_path, TOY.replace("#group\tA\tA\tB\tB\n", "")))
    with pytest.raises(GroupError):
        ExpressionMatrix(np.zeros((1, 3)), ("a",), ("x", "y", "z"), [True, False, False])


def test_missing_file(tmp_path):
    with pytest.raises(DataIOError):
        load_matrix(tmp_path / "absent.tsv")


def test_identical_row_welch(tmp_path):
    m = load_matrix(_write(tmp_path, TOY.replace("g1\t1.0\t2.0\t3.0\t5.0", "g1\t1.0\t2.0\t1.0\t2.0")))
    res = batch_test(m, "welch", "t")
    assert res[0].statistic == 0.0 and res[0].pvalue == 1.0
    # constant row: zero variance is recorded, not raised
    assert res[2].error == "ZeroVariance" and res.failures == 1


def test_batch_matches_core_exactly():
    m = synthetic_matrix(200, 7, 11, seed=3)
    res = batch_test(m, "welch", "t")
    X, Y = m.split()
    for i in range(200):
        r = welch_statistic(X[i], Y[i])
        assert res[i].statistic == r.t_w
        assert res[i].df == r.nu
        assert res[i].pvalue == float(pvalue_t(r.t_w, r.nu))


def test_interleaved_groups():
    rng = np.random.default_rng(0)
    v = rng.normal(size=(5, 6))
    labels = np.array([True, False, True, False, True, False])
    m = ExpressionMatrix(v, tuple("abcde"), tuple("uvwxyz"), labels)
    res = batch_test(m, "welch", "t")
    for i in range(5):
        assert res[i].statistic == welch_statistic(v[i, labels], v[i, ~labels]).t_w


def test_null_rejection_rate():
    res = batch_test(synthetic_matrix(1000, 50, 50, seed=4), "welch", "t")
    rate = np.mean(res.outcomes.pvalue <= 0.05)
    assert 0.0365 - 0.02 < rate < 0.0635 + 0.02


@pytest.mark.parametrize("method, cal", [("welch", "boot"), ("el", "chisq"), ("eel", "boot")])
def test_thread_and_chunk_independence(monkeypatch, method, cal):
    import twomeans.batch as batch

    m = synthetic_matrix(30, 6, 8, seed=5)
    ref = batch_test(m, method, cal, seed=9, B=29)
    monkeypatch.setattr(batch, "_CHUNK_ROWS", 7)
    for threads in (1, 3):
        got = batch_test(m, method, cal, seed=9, B=29, threads=threads)
        assert got.to_tsv() == ref.to_tsv()


def test_row_order_independence():
    m = synthetic_matrix(20, 6, 6, seed=6)
    ref = batch_test(m, "el", "boot", seed=1, B=19)
    # a leading subset sees the same per-row streams
    sub = batch_test(m, "el", "boot", seed=1, B=19, rows=8)
    assert np.array_equal(sub.outcomes.pvalue, ref.outcomes.pvalue[:8])


def test_el_failures_recorded():
    v = np.array([[1.0, 2.0, 10.0, 11.0], [1.0, 3.0, 2.0, 4.0]])
    m = ExpressionMatrix(v, ("sep", "ok"), tuple("abcd"), [True, True, False, False])
    res = batch_test(m, "el", "chisq")
    assert res[0].error == "NoOverlap" and res[0].pvalue is None
    assert res[1].ok
    lines = res.to_tsv().splitlines()
    assert lines[0].split("\t") == ["feature_id", "statistic", "df", "pvalue", "method", "calibration", "failure"]
    assert lines[1].endswith("NoOverlap")


def test_invalid_combination():
    with pytest.raises(ConfigError):
        batch_test(synthetic_matrix(3, 3, 3), "wmw", "t")


def test_timing_report():
    m = synthetic_matrix(300, 10, 10, seed=7)
    assert len(time_methods(m, [])) == 0
    rep = time_methods(m, [("welch", "t"), ("el", "chisq")], threads=(1,), warmup_rows=8)
    assert len(rep) == 2
    row = rep.get("welch", "t")
    assert row.tests == 300 and row.failures == 0 and row.seconds >= 0
    assert rep.get("el", "chisq").per_test > row.per_test
    assert rep.to_tsv().count("\n") == 3
    with pytest.raises(ConfigError):
        time_methods(m, [("welch", "t")], repeats=0)


def test_throughput_near_linear():
    small = synthetic_matrix(10_000, 20, 20, seed=8)
    large = synthetic_matrix(50_000, 20, 20, seed=8)
    t_small = time_methods(small, [("welch", "t")], repeats=3).rows[0].per_test
    t_large = time_methods(large, [("welch", "t")], repeats=3).rows[0].per_test
    assert 0.5 <= t_large / t_small <= 2.0
