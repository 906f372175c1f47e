"""Command-line interface: ``twomeans {test,simulate,power,batch,bench}``.

Output is tab-separated by default and aligned with ``--pretty``. Exit
codes: 0 success, 1 validation, 2 solver failure, 3 I/O. On failure the
error name and message go to standard error.
"""

from __future__ import annotations

import argparse
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .batch import batch_test, load_matrix, synthetic_matrix, time_methods
from .calibration import DEFAULT_B, DEFAULT_CAP, Method
from .errors import DataIOError, ParseError, TwoMeansError, UsageError
from .procedures import run_test
from .scenarios import UNAMBIGUOUS_IDS, load_overrides, make_scenario
from .simulation import (
    DEFAULT_CAL,
    GOLDEN_METHODS,
    GOLDEN_SIZES,
    SimConfig,
    default_deltas,
    divergence_table,
    estimate_power,
    estimate_type1,
    parse_methods,
)

SEED_ENV = "TWOMEANS_SEED"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV, "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _int_list(text: str, n: int | None = None) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in text.replace(" ", "").split(",") if v)
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None
    if n is not None and len(vals) != n:
        raise UsageError(f"expected {n} comma-separated integers, got {text!r}")
    return vals


def _float_list(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.replace(" ", "").split(",") if v])
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _size_pairs(items) -> tuple[tuple[int, int], ...]:
    pairs = []
    for item in items:
        for chunk in item.split(";"):
            if chunk.strip():
                pairs.append(_int_list(chunk, 2))
    return tuple(pairs)


def read_sample(path) -> np.ndarray:
    """Numbers from a text file: whitespace- or comma-separated, ``#`` comments."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from None
    values = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        for tok in re.finditer(r"[^\s,#]+", line.split("#", 1)[0]):
            try:
                values.append(float(tok.group()))
            except ValueError:
                raise ParseError(f"{path}: not a number: {tok.group()!r}", line=lineno, column=tok.start() + 1) from None
    return np.array(values)


def _emit(rows: list[tuple], header: tuple | None, pretty: bool, out=None) -> None:
    out = out or sys.stdout
    table = ([header] if header else []) + [tuple(str(c) for c in r) for r in rows]
    if pretty:
        widths = [max(len(r[i]) for r in table) for i in range(len(table[0]))]
        for r in table:
            out.write("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n")
    else:
        for r in table:
            out.write("\t".join(r) + "\n")


def _tsv_to_rows(tsv: str):
    lines = tsv.rstrip("\n").split("\n")
    return tuple(lines[0].split("\t")), [tuple(line.split("\t")) for line in lines[1:]]


def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, float):
        return repr(v)
    return str(v)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_test(args) -> int:
    if args.x is not None or args.y is not None:
        if args.x is None or args.y is None or args.files:
            raise UsageError("give both --x and --y, or two sample files")
        x, y = _float_list(args.x), _float_list(args.y)
    elif len(args.files) == 2:
        x, y = read_sample(args.files[0]), read_sample(args.files[1])
    else:
        raise UsageError("test needs two sample files (or --x and --y)")
    method = Method(args.method)
    cal = args.cal or DEFAULT_CAL[method].value
    out = run_test(x, y, method, cal, args.B, np.random.SeedSequence(args.seed), args.cap)
    rows = [
        ("method", out.method),
        ("calibration", out.calibration),
        ("statistic", _fmt(out.statistic)),
        ("df", _fmt(out.df)),
        ("pvalue", _fmt(out.pvalue)),
        ("n_x", x.size),
        ("n_y", y.size),
    ]
    _emit(rows, None, args.pretty)
    return 0


def _scenarios(args):
    overrides = load_overrides(args.overrides) if args.overrides else None
    ids = UNAMBIGUOUS_IDS if args.golden else tuple(s.strip() for s in args.scenario.split(",") if s.strip())
    return [make_scenario(s, overrides) for s in ids]


def cmd_simulate(args) -> int:
    scenarios = _scenarios(args)
    sizes = GOLDEN_SIZES if args.golden else (_size_pairs(args.sizes) if args.sizes else ((20, 30),))
    methods = GOLDEN_METHODS if args.golden else parse_methods(args.methods)
    report = None
    for sc in scenarios:
        cfg = SimConfig(sc, sizes, tuple(methods), args.reps, args.alpha, args.seed, args.B)
        part = estimate_type1(cfg, threads=args.threads)
        report = part if report is None else report.merge(part)
    lo, hi = report.band
    sys.stdout.write(f"# band ({lo:.4f}, {hi:.4f}) alpha={args.alpha:g} replications={args.reps}\n")
    header, rows = _tsv_to_rows(report.to_tsv())
    _emit(rows, header, args.pretty)
    if args.out:
        out = Path(args.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "size_report.tsv").write_text(report.to_tsv())
            (out / "size_report.json").write_text(report.to_json())
            (out / "divergence.tsv").write_text(divergence_table(report))
        except OSError as exc:
            raise DataIOError(f"cannot write reports to {out}: {exc}") from None
    return 0


def cmd_power(args) -> int:
    methods = parse_methods(args.methods)
    sizes = _size_pairs(args.sizes) if args.sizes else ((50, 100),)
    text = ""
    for sc in _scenarios(args):
        deltas = _float_list(args.deltas) if args.deltas else default_deltas(sc)
        cfg = SimConfig(sc, sizes, tuple(methods), args.reps, args.alpha, args.seed, args.B)
        curve = estimate_power(cfg, deltas, threads=args.threads)
        tsv = curve.to_tsv()
        text += tsv if not text else tsv.split("\n", 1)[1]
    header, rows = _tsv_to_rows(text)
    _emit(rows, header, args.pretty)
    if args.out:
        try:
            Path(args.out).write_text(text)
        except OSError as exc:
            raise DataIOError(f"cannot write {args.out}: {exc}") from None
    return 0


def _load_input(args):
    if args.synthetic:
        rows, nx, ny = _int_list(args.synthetic, 3)
        return synthetic_matrix(rows, nx, ny, args.seed)
    if not args.matrix:
        raise UsageError("an input matrix (--matrix) or --synthetic rows,nx,ny is required")
    return load_matrix(args.matrix, args.labels)


def cmd_batch(args) -> int:
    m = _load_input(args)
    method = Method(args.method)
    cal = args.cal or DEFAULT_CAL[method].value
    res = batch_test(m, method, cal, args.seed, args.B, args.threads, args.cap)
    tsv = res.to_tsv()
    if args.out:
        try:
            Path(args.out).write_text(tsv)
        except OSError as exc:
            raise DataIOError(f"cannot write {args.out}: {exc}") from None
        sys.stdout.write(f"{len(res)} tests, {res.failures} failures -> {args.out}\n")
    else:
        header, rows = _tsv_to_rows(tsv)
        _emit(rows, header, args.pretty)
    return 0


def cmd_bench(args) -> int:
    m = _load_input(args)
    specs = []
    for name in args.methods.split(","):
        name = name.strip()
        if not name:
            continue
        if ":" in name:
            specs.extend(parse_methods(name))
        else:
            specs.extend(parse_methods(f"{name}:{args.cal}" if args.cal else name))
    threads = (1,) if args.threads <= 1 else (1, args.threads)
    report = time_methods(m, specs, args.seed, args.B, threads, rows=args.rows, repeats=args.repeats)
    header, rows = _tsv_to_rows(report.to_tsv())
    _emit(rows, header, args.pretty)
    if args.out:
        try:
            Path(args.out).write_text(report.to_tsv())
        except OSError as exc:
            raise DataIOError(f"cannot write {args.out}: {exc}") from None
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="twomeans", description="Two-sample tests for equal means.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    methods = [m.value for m in Method]

    def common(sp, seed=True, threads=True):
        sp.add_argument("--pretty", action="store_true", help="aligned human-readable output")
        if seed:
            sp.add_argument("--seed", type=int, default=None, help=f"master seed (default ${SEED_ENV} or 0)")
        if threads:
            sp.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker processes")

    t = sub.add_parser("test", help="run one test on two samples")
    t.add_argument("files", nargs="*", help="two files with one sample each")
    t.add_argument("--x", help="inline first sample, comma-separated")
    t.add_argument("--y", help="inline second sample, comma-separated")
    t.add_argument("--method", choices=methods, required=True)
    t.add_argument("--cal", help="calibration (default depends on the method)")
    t.add_argument("--B", type=int, default=DEFAULT_B, help="bootstrap resamples")
    t.add_argument("--cap", type=int, default=DEFAULT_CAP, help="size cap for exact calibrations")
    common(t, threads=False)
    t.set_defaults(func=cmd_test)

    for name, func, help_ in (("simulate", cmd_simulate, "type I error study"),
                              ("power", cmd_power, "power study over location shifts")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--scenario", default="a", help="comma-separated scenario ids")
        s.add_argument("--sizes", action="append", help="size pair 'nx,ny' (repeatable)")
        s.add_argument("--reps", type=int, default=1000)
        s.add_argument("--alpha", type=float, default=0.05)
        s.add_argument("--B", type=int, default=DEFAULT_B)
        s.add_argument("--overrides", help="scenario override file")
        s.add_argument("--out", help="output directory (simulate) or file (power)")
        common(s)
        if name == "simulate":
            s.add_argument("--methods", default="welch:t,wmw:normal", help="e.g. welch:t,el:boot")
            s.add_argument("--golden", action="store_true", help="full grid over unambiguous scenarios")
        else:
            s.add_argument("--methods", default="welch:boot,el:boot,eel:boot")
            s.add_argument("--deltas", help="comma-separated shifts of sample 2")
            s.set_defaults(golden=False)
        s.set_defaults(func=func)

    for name, func in (("batch", cmd_batch), ("bench", cmd_bench)):
        b = sub.add_parser(name, help="row-wise tests on a matrix" if name == "batch" else "time methods on a matrix")
        b.add_argument("--matrix", help="delimited wide matrix file")
        b.add_argument("--labels", help="sidecar 'column_id<TAB>group' file")
        b.add_argument("--synthetic", help="rows,nx,ny of a standard normal matrix")
        b.add_argument("--cal", help="calibration")
        b.add_argument("--B", type=int, default=DEFAULT_B)
        b.add_argument("--out", help="output file")
        common(b)
        if name == "batch":
            b.add_argument("--method", choices=methods, default="welch")
            b.add_argument("--cap", type=int, default=DEFAULT_CAP)
        else:
            b.add_argument("--methods", default="welch,eel,el")
            b.add_argument("--rows", type=int, help="time only the first ROWS rows")
            b.add_argument("--repeats", type=int, default=1, help="report the fastest of this many runs")
        b.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required: test, simulate, power, batch or bench")
        if getattr(args, "seed", 0) is None:
            args.seed = _default_seed()
        if getattr(args, "threads", 1) < 1:
            raise UsageError("--threads must be at least 1")
        return args.func(args)
    except TwoMeansError as exc:
        sys.stderr.write(f"{exc.name}: {exc}\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(f"DataIOError: {exc}\n")
        return DataIOError.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
