"""Row-wise two-group testing of a feature-by-observation matrix.

Input format (tab- or comma-delimited, wide):

    feature   s1   s2   s3   s4
    #group    A    A    B    B      <- optional label row
    gene1     1.2  0.8  2.2  1.9
    ...

Group labels come from the ``#group`` row or from a sidecar file with one
``column_id<TAB>group`` line per column. The first group label seen is
the ``x`` group.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibration import DEFAULT_B, DEFAULT_CAP, check_combination
from .errors import ConfigError, DataIOError, GroupError, ParseError
from .procedures import RowOutcomes, evaluate_rows

LABEL_MARKER = "#group"
_CHUNK_ROWS = 4096


@dataclass(frozen=True)
class ExpressionMatrix:
    values: np.ndarray  # rows = features, columns = observations
    feature_ids: tuple[str, ...]
    column_ids: tuple[str, ...]
    group_labels: np.ndarray  # bool per column, True = first group (x)
    group_names: tuple[str, str] = ("x", "y")

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ConfigError("expression matrix must be two-dimensional")
        labels = np.asarray(self.group_labels, dtype=bool)
        if labels.shape != (v.shape[1],):
            raise ConfigError("one group label per column is required")
        if len(self.feature_ids) != v.shape[0] or len(set(self.feature_ids)) != v.shape[0]:
            raise ConfigError("feature ids must be unique, one per row")
        if not np.all(np.isfinite(v)):
            raise ConfigError("expression values must be finite")
        nx = int(labels.sum())
        if nx < 2 or v.shape[1] - nx < 2:
            raise GroupError(f"each group needs at least 2 columns (got {nx} and {v.shape[1] - nx})")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "group_labels", labels)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def split(self, rows=slice(None)):
        """``(X, Y)`` blocks of the two groups."""
        block = self.values[rows]
        labels = self.group_labels
        nx = int(labels.sum())
        # contiguous groups are sliced as views instead of copied
        if labels[:nx].all():
            return block[:, :nx], block[:, nx:]
        if labels[-nx:].all():
            return block[:, -nx:], block[:, :-nx]
        return block[:, labels], block[:, ~labels]


def synthetic_matrix(rows: int, n_x: int, n_y: int, seed: int = 0) -> ExpressionMatrix:
    """Null matrix of standard normal values."""
    rng = np.random.default_rng(seed)
    values = rng.standard_normal((rows, n_x + n_y))
    labels = np.r_[np.ones(n_x, dtype=bool), np.zeros(n_y, dtype=bool)]
    ids = tuple(f"f{i}" for i in range(rows))
    cols = tuple(f"c{j}" for j in range(n_x + n_y))
    return ExpressionMatrix(values, ids, cols, labels, ("x", "y"))


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------


def _sniff_delimiter(line: str) -> str:
    return "\t" if "\t" in line else ","


def _labels_to_mask(names: list[str], where: str) -> tuple[np.ndarray, tuple[str, str]]:
    distinct = list(dict.fromkeys(names))
    if len(distinct) != 2:
        raise GroupError(f"{where}: exactly two groups are required, found {len(distinct)}: {distinct}")
    mask = np.array([n == distinct[0] for n in names])
    if mask.sum() < 2 or (~mask).sum() < 2:
        raise GroupError(f"{where}: each group needs at least 2 columns")
    return mask, (distinct[0], distinct[1])


def read_sidecar(path, column_ids) -> list[str]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataIOError(f"cannot read label file {path}: {exc}") from None
    mapping = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t") if "\t" in line else line.split()
        if len(parts) != 2:
            raise ParseError(f"expected 'column_id<TAB>group', got {line!r}", line=lineno, column=1)
        mapping[parts[0].strip()] = parts[1].strip()
    missing = [c for c in column_ids if c not in mapping]
    if missing:
        raise GroupError(f"label file has no group for columns: {', '.join(missing[:5])}")
    return [mapping[c] for c in column_ids]


def load_matrix(path, labels=None) -> ExpressionMatrix:
    """Load a delimited wide matrix; ``labels`` is an optional sidecar path."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            first = fh.readline()
            fh.seek(0)
            records = list(csv.reader(fh, delimiter=_sniff_delimiter(first)))
    except OSError as exc:
        raise DataIOError(f"cannot read matrix file {path}: {exc}") from None
    if not records or len(records[0]) < 2:
        raise ParseError("missing header row of column ids", line=1, column=1)
    header = [h.strip() for h in records[0]]
    column_ids = header[1:]
    ncol = len(column_ids)

    group_names = None
    body_start = 1
    if len(records) > 1 and records[1] and records[1][0].strip() == LABEL_MARKER:
        if len(records[1]) != ncol + 1:
            raise ParseError(f"label row has {len(records[1]) - 1} entries for {ncol} columns", line=2, column=1)
        group_names = [g.strip() for g in records[1][1:]]
        body_start = 2
    if labels is not None:
        group_names = read_sidecar(labels, column_ids)
    if group_names is None:
        raise GroupError("no group labels: add a '#group' row or pass a label file")
    mask, names = _labels_to_mask(group_names, str(path))

    body = [(i + 1, r) for i, r in enumerate(records) if i >= body_start and any(c.strip() for c in r)]
    feature_ids = []
    values = np.empty((len(body), ncol))
    for k, (lineno, rec) in enumerate(body):
        if len(rec) != ncol + 1:
            raise ParseError(f"expected {ncol + 1} fields, found {len(rec)}", line=lineno, column=len(rec))
        feature_ids.append(rec[0].strip())
        try:
            values[k] = np.array(rec[1:], dtype=float)
        except ValueError:
            values[k] = np.nan
        if not np.all(np.isfinite(values[k])):
            for j, cell in enumerate(rec[1:]):
                try:
                    ok = np.isfinite(float(cell))
                except ValueError:
                    ok = False
                if not ok:
                    raise ParseError(f"non-numeric value {cell!r} in row {rec[0]!r}, column {header[j + 1]!r}",
                                     line=lineno, column=j + 2)
    if not feature_ids:
        raise ParseError("matrix has no data rows", line=body_start + 1, column=1)
    seen = set()
    for (lineno, _), fid in zip(body, feature_ids):
        if fid in seen:
            raise ParseError(f"duplicate feature id {fid!r}", line=lineno, column=1)
        seen.add(fid)
    return ExpressionMatrix(values, tuple(feature_ids), tuple(column_ids), mask, names)


# ---------------------------------------------------------------------------
# testing
# ---------------------------------------------------------------------------


@dataclass
class BatchResult:
    """One outcome per matrix row; indexing yields :class:`TestOutcome`."""

    feature_ids: tuple[str, ...]
    outcomes: RowOutcomes

    def __len__(self) -> int:
        return len(self.outcomes)

    def __getitem__(self, i):
        return self.outcomes[i]

    def __iter__(self):
        return (self.outcomes[i] for i in range(len(self)))

    @property
    def failures(self) -> int:
        return int(np.count_nonzero(~self.outcomes.valid))

    def to_tsv(self) -> str:
        o = self.outcomes
        lines = ["feature_id\tstatistic\tdf\tpvalue\tmethod\tcalibration\tfailure"]
        for i, fid in enumerate(self.feature_ids):
            df = "" if np.isnan(o.df[i]) else repr(float(o.df[i]))
            p = "" if o.failure[i] else repr(float(o.pvalue[i]))
            lines.append(f"{fid}\t{float(o.statistic[i])!r}\t{df}\t{p}\t{o.method}\t{o.calibration}\t{o.failure[i]}")
        return "\n".join(lines) + "\n"


def row_seed(seed: int, row: int):
    return np.random.SeedSequence(seed, spawn_key=(row,))


def _batch_chunk(args):
    X, Y, start, method, cal, seed, B, cap = args
    return evaluate_rows(method, cal, X, Y, B, lambda i: row_seed(seed, start + i), cap)


def batch_test(m: ExpressionMatrix, method, cal, seed: int = 0, B: int = DEFAULT_B, threads: int = 1,
               cap: int = DEFAULT_CAP, rows=None) -> BatchResult:
    """Test every row; failures are recorded per row and never abort the batch.

    Bootstrap streams are keyed by row index, so results do not depend on
    chunking or the number of workers. ``rows`` restricts the run to a
    leading row count.
    """
    method, cal = check_combination(method, cal)
    n = m.rows if rows is None else min(int(rows), m.rows)
    jobs = []
    for start in range(0, n, _CHUNK_ROWS):
        stop = min(start + _CHUNK_ROWS, n)
        X, Y = m.split(slice(start, stop))
        jobs.append((X, Y, start, method, cal, seed, B, cap))
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_batch_chunk, jobs))
    else:
        parts = [_batch_chunk(j) for j in jobs]
    return BatchResult(m.feature_ids[:n], RowOutcomes.concat(parts))


# ---------------------------------------------------------------------------
# timing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimingRow:
    method: str
    calibration: str
    threads: int
    seconds: float
    tests: int
    failures: int

    @property
    def per_test(self) -> float:
        return self.seconds / self.tests if self.tests else float("nan")


@dataclass
class TimingReport:
    rows: list[TimingRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def get(self, method, cal, threads: int = 1) -> TimingRow:
        method, cal = check_combination(method, cal)
        for r in self.rows:
            if (r.method, r.calibration, r.threads) == (method.value, cal.value, threads):
                return r
        raise KeyError((method.value, cal.value, threads))

    def to_tsv(self) -> str:
        lines = ["method\tcalibration\tthreads\tseconds\ttests\tfailures\tseconds_per_test"]
        for r in self.rows:
            lines.append(f"{r.method}\t{r.calibration}\t{r.threads}\t{r.seconds:.6g}\t{r.tests}\t{r.failures}\t{r.per_test:.6g}")
        return "\n".join(lines) + "\n"


def time_methods(m: ExpressionMatrix, specs, seed: int = 0, B: int = DEFAULT_B, threads=(1,),
                 rows=None, warmup_rows: int = 64, repeats: int = 1) -> TimingReport:
    """Wall-clock time of each (method, calibration) over the matrix rows.

    A short warm-up run on the first rows precedes the timed runs and is
    not counted. With ``repeats > 1`` the fastest run is reported.
    """
    if int(repeats) != repeats or repeats < 1:
        raise ConfigError(f"repeats must be a positive integer, got {repeats!r}")
    report = TimingReport()
    for method, cal in specs:
        method, cal = check_combination(method, cal)
        for t in threads:
            batch_test(m, method, cal, seed, B, 1, rows=min(warmup_rows, m.rows))
            seconds = float("inf")
            for _ in range(int(repeats)):
                start = time.perf_counter()
                res = batch_test(m, method, cal, seed, B, t, rows=rows)
                seconds = min(seconds, time.perf_counter() - start)
            report.rows.append(TimingRow(method.value, cal.value, int(t), seconds, len(res), res.failures))
    return report
