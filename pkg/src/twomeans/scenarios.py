"""Distributional scenarios for the two-sample simulations.

Parameterizations (all positional):

===============  ==============================  =========================
family           params                          notes
===============  ==============================  =========================
NORMAL           (mean, variance)                second argument is a variance
BETA             (a, b)
GAMMA            (shape, rate)                   mean shape / rate
FOLDED_NORMAL    (mu, sigma)                     |N(mu, sigma^2)|
LAPLACE          (location, scale)
VON_MISES        (mu, kappa)                     angles on [mu - pi, mu + pi)
SKELLAM          (lambda1, lambda2)              Pois(lambda1) - Pois(lambda2)
NEG_BINOMIAL     (mean, size)
POISSON          (rate,)
MIXTURE          ()                              components in ``mixture``
===============  ==============================  =========================

Any spec may carry an additive ``offset`` (used for location shifts of
families without a location parameter).
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import integrate

from .errors import AmbiguousScenario, ConfigError, DomainError, InvalidSize, ParseError, UnknownScenario


class Family(enum.Enum):
    NORMAL = "N"
    BETA = "Be"
    GAMMA = "Ga"
    FOLDED_NORMAL = "FN"
    LAPLACE = "La"
    VON_MISES = "vM"
    SKELLAM = "Skel"
    NEG_BINOMIAL = "NB"
    POISSON = "Pois"
    MIXTURE = "mix"


_ARITY = {
    Family.NORMAL: 2,
    Family.BETA: 2,
    Family.GAMMA: 2,
    Family.FOLDED_NORMAL: 2,
    Family.LAPLACE: 2,
    Family.VON_MISES: 2,
    Family.SKELLAM: 2,
    Family.NEG_BINOMIAL: 2,
    Family.POISSON: 1,
    Family.MIXTURE: 0,
}


@dataclass(frozen=True)
class DistSpec:
    family: Family
    params: tuple[float, ...] = ()
    mixture: tuple[tuple[float, "DistSpec"], ...] | None = None
    offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        _validate(self)

    def __str__(self) -> str:
        if self.family is Family.MIXTURE:
            body = "mix(" + ", ".join(f"{w:g}*{c}" for w, c in self.mixture) + ")"
        else:
            body = f"{self.family.value}(" + ",".join(f"{p:g}" for p in self.params) + ")"
        if self.offset:
            body += f"{self.offset:+g}"
        return body


def _validate(d: DistSpec) -> None:
    fam, p = d.family, d.params
    if len(p) != _ARITY[fam]:
        raise DomainError(f"{fam.name} takes {_ARITY[fam]} parameters, got {len(p)}")
    if not all(math.isfinite(v) for v in p) or not math.isfinite(d.offset):
        raise DomainError(f"{fam.name} parameters must be finite")
    if fam is Family.MIXTURE:
        if not d.mixture:
            raise DomainError("mixture needs at least one component")
        weights = [w for w, _ in d.mixture]
        if any(not (0 < w <= 1) for w in weights):
            raise DomainError("mixture weights must lie in (0, 1]")
        if abs(math.fsum(weights) - 1.0) > 1e-12:
            raise DomainError(f"mixture weights sum to {math.fsum(weights)!r}, not 1")
        return
    if d.mixture is not None:
        raise DomainError("only MIXTURE specs carry components")
    positive = {
        Family.NORMAL: p[1:],
        Family.BETA: p,
        Family.GAMMA: p,
        Family.FOLDED_NORMAL: p[1:],
        Family.LAPLACE: p[1:],
        Family.VON_MISES: p[1:],
        Family.SKELLAM: p,
        Family.NEG_BINOMIAL: p,
        Family.POISSON: p,
    }[fam]
    if any(v <= 0 for v in positive):
        raise DomainError(f"invalid parameters for {fam.name}: {p}")


def normal(mean, variance):
    return DistSpec(Family.NORMAL, (mean, variance))


def beta(a, b):
    return DistSpec(Family.BETA, (a, b))


def gamma(shape, rate):
    return DistSpec(Family.GAMMA, (shape, rate))


def folded_normal(mu, sigma):
    return DistSpec(Family.FOLDED_NORMAL, (mu, sigma))


def laplace(loc, scale):
    return DistSpec(Family.LAPLACE, (loc, scale))


def von_mises(mu, kappa):
    return DistSpec(Family.VON_MISES, (mu, kappa))


def skellam(lam1, lam2):
    return DistSpec(Family.SKELLAM, (lam1, lam2))


def neg_binomial(mean, size):
    return DistSpec(Family.NEG_BINOMIAL, (mean, size))


def poisson(rate):
    return DistSpec(Family.POISSON, (rate,))


def mixture(*components):
    """``mixture((w1, d1), (w2, d2), ...)``."""
    return DistSpec(Family.MIXTURE, (), tuple((float(w), d) for w, d in components))


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------


def _vm_second_moment(kappa: float) -> float:
    # E[theta^2] for theta ~ vM(0, kappa) on [-pi, pi)
    norm = 2.0 * math.pi * float(np.i0(kappa))
    val, _ = integrate.quad(lambda t: t * t * math.exp(kappa * (math.cos(t) - 1.0)), -math.pi, math.pi,
                            epsabs=1e-14, epsrel=1e-12)
    return val * math.exp(kappa) / norm


def analytic_mean(d: DistSpec) -> float:
    fam, p = d.family, d.params
    if fam is Family.MIXTURE:
        m = math.fsum(w * analytic_mean(c) for w, c in d.mixture)
    elif fam is Family.NORMAL:
        m = p[0]
    elif fam is Family.BETA:
        m = p[0] / (p[0] + p[1])
    elif fam is Family.GAMMA:
        m = p[0] / p[1]
    elif fam is Family.FOLDED_NORMAL:
        mu, s = p
        m = s * math.sqrt(2.0 / math.pi) * math.exp(-mu * mu / (2.0 * s * s)) + mu * math.erf(mu / (s * math.sqrt(2.0)))
    elif fam is Family.LAPLACE:
        m = p[0]
    elif fam is Family.VON_MISES:
        m = p[0]
    elif fam is Family.SKELLAM:
        m = p[0] - p[1]
    elif fam is Family.NEG_BINOMIAL:
        m = p[0]
    elif fam is Family.POISSON:
        m = p[0]
    else:  # pragma: no cover
        raise DomainError(fam)
    return m + d.offset


def analytic_variance(d: DistSpec) -> float:
    fam, p = d.family, d.params
    if fam is Family.MIXTURE:
        mean = analytic_mean(d) - d.offset
        second = math.fsum(w * (analytic_variance(c) + (analytic_mean(c)) ** 2) for w, c in d.mixture)
        return second - mean * mean
    if fam is Family.NORMAL:
        return p[1]
    if fam is Family.BETA:
        a, b = p
        return a * b / ((a + b) ** 2 * (a + b + 1.0))
    if fam is Family.GAMMA:
        return p[0] / p[1] ** 2
    if fam is Family.FOLDED_NORMAL:
        mu, s = p
        m = analytic_mean(d) - d.offset
        return mu * mu + s * s - m * m
    if fam is Family.LAPLACE:
        return 2.0 * p[1] ** 2
    if fam is Family.VON_MISES:
        return _vm_second_moment(p[1])
    if fam is Family.SKELLAM:
        return p[0] + p[1]
    if fam is Family.NEG_BINOMIAL:
        return p[0] + p[0] ** 2 / p[1]
    if fam is Family.POISSON:
        return p[0]
    raise DomainError(fam)  # pragma: no cover


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def as_generator(stream) -> np.random.Generator:
    if isinstance(stream, np.random.Generator):
        return stream
    return np.random.default_rng(stream)


def _draw(d: DistSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    fam, p = d.family, d.params
    if fam is Family.MIXTURE:
        weights = np.array([w for w, _ in d.mixture])
        which = rng.choice(len(weights), size=n, p=weights / weights.sum())
        out = np.empty(n)
        for k, (_, comp) in enumerate(d.mixture):
            pos = np.nonzero(which == k)[0]
            if pos.size:
                out[pos] = _draw(comp, pos.size, rng)
        return out
    if fam is Family.NORMAL:
        return rng.normal(p[0], math.sqrt(p[1]), n)
    if fam is Family.BETA:
        return rng.beta(p[0], p[1], n)
    if fam is Family.GAMMA:
        return rng.gamma(p[0], 1.0 / p[1], n)
    if fam is Family.FOLDED_NORMAL:
        return np.abs(rng.normal(p[0], p[1], n))
    if fam is Family.LAPLACE:
        return rng.laplace(p[0], p[1], n)
    if fam is Family.VON_MISES:
        # centered draw keeps the support symmetric about mu
        return p[0] + rng.vonmises(0.0, p[1], n)
    if fam is Family.SKELLAM:
        return (rng.poisson(p[0], n) - rng.poisson(p[1], n)).astype(float)
    if fam is Family.NEG_BINOMIAL:
        mean, size = p
        return rng.negative_binomial(size, size / (size + mean), n).astype(float)
    if fam is Family.POISSON:
        return rng.poisson(p[0], n).astype(float)
    raise DomainError(fam)  # pragma: no cover


def sample(d: DistSpec, n: int, stream) -> np.ndarray:
    """Draw ``n`` i.i.d. values. ``stream`` is a Generator or a seed."""
    if int(n) != n or n < 1:
        raise InvalidSize(f"sample size must be a positive integer, got {n!r}")
    rng = as_generator(stream)
    out = _draw(d, int(n), rng)
    if d.offset:
        out = out + d.offset
    return out


def shift(d: DistSpec, delta: float) -> DistSpec:
    """Location-shift ``d`` so its mean moves by ``delta``."""
    if delta == 0:
        return d
    if d.family in (Family.NORMAL, Family.LAPLACE, Family.VON_MISES):
        return replace(d, params=(d.params[0] + delta,) + d.params[1:])
    return replace(d, offset=d.offset + delta)


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    sample1: DistSpec
    sample2: DistSpec
    null_mean: float
    note: str = field(default="", compare=False)

    def mean_gap(self) -> float:
        return max(abs(analytic_mean(self.sample1) - self.null_mean),
                   abs(analytic_mean(self.sample2) - self.null_mean))


SCENARIO_IDS = tuple("abcdefghijkl")
AMBIGUOUS_IDS = ("h", "j")
UNAMBIGUOUS_IDS = tuple(s for s in SCENARIO_IDS if s not in AMBIGUOUS_IDS)


def _builtin(sid: str) -> ScenarioSpec:
    if sid == "a":
        return ScenarioSpec("a", normal(3, 4), normal(3, 0.5), 3.0)
    if sid == "b":
        return ScenarioSpec("b", beta(3, 4), normal(3 / 7, 0.5), 3 / 7)
    if sid == "c":
        return ScenarioSpec("c", mixture((0.5, beta(1, 5)), (0.5, beta(5, 2))), normal(37 / 84, 0.5), 37 / 84)
    if sid == "d":
        return ScenarioSpec("d", beta(3, 4), mixture((0.5, normal(-11 / 7, 0.5)), (0.5, normal(17 / 7, 0.5))), 3 / 7)
    if sid == "e":
        fn = folded_normal(3, 4)
        # the tabulated gamma shape 4.049335 is this mean rounded to 6 d.p.
        m = analytic_mean(fn)
        return ScenarioSpec("e", fn, gamma(m, 1), m)
    if sid == "f":
        return ScenarioSpec("f", mixture((0.5, gamma(3, 3)), (0.5, gamma(8, 1))), gamma(18, 4), 4.5)
    if sid == "g":
        return ScenarioSpec("g", beta(1.3, 1.3), mixture((0.4, beta(0.9, 0.9)), (0.6, beta(12, 12))), 0.5)
    if sid == "i":
        return ScenarioSpec("i", von_mises(2, 10), von_mises(2, 5), 2.0)
    if sid == "k":
        return ScenarioSpec("k", neg_binomial(5, 12), neg_binomial(5, 4), 5.0)
    if sid == "l":
        return ScenarioSpec("l", neg_binomial(5, 10), mixture((0.6, poisson(2)), (0.4, poisson(9.5))), 5.0)
    raise AmbiguousScenario(
        f"scenario {sid!r} has no canonical parameterization; supply it through a scenario-override file"
    )


def make_scenario(sid: str, overrides: dict[str, ScenarioSpec] | None = None) -> ScenarioSpec:
    sid = str(sid).strip().lower()
    if overrides and sid in overrides:
        return overrides[sid]
    if sid not in SCENARIO_IDS:
        raise UnknownScenario(f"unknown scenario {sid!r}; expected one of {''.join(SCENARIO_IDS)}")
    return _builtin(sid)


# ---------------------------------------------------------------------------
# override files
# ---------------------------------------------------------------------------

_NAMES = {f.value.lower(): f for f in Family if f is not Family.MIXTURE}
_NAMES.update({"skellam": Family.SKELLAM, "poisson": Family.POISSON, "normal": Family.NORMAL})
_NUMBER = re.compile(r"^\s*(?:[A-Za-z_]\w*\s*=\s*)?([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?(?:\s*/\s*[-+]?(?:\d+\.?\d*|\.\d+))?)\s*$")


def _number(text: str) -> float:
    m = _NUMBER.match(text)
    if not m:
        raise ValueError(f"not a number: {text!r}")
    num = m.group(1).replace(" ", "")
    if "/" in num:
        top, bot = num.split("/")
        return float(Fraction(top) / Fraction(bot))
    return float(num)


def _split_top(text: str, sep: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise ValueError("unbalanced parentheses")
        if depth == 0 and (ch == sep or (sep == " " and ch.isspace())):
            if cur:
                parts.append("".join(cur))
            cur = []
            continue
        cur.append(ch)
    if depth != 0:
        raise ValueError("unbalanced parentheses")
    if cur:
        parts.append("".join(cur))
    return parts


def parse_dist(expr: str) -> DistSpec:
    """Parse a distribution expression.

    Grammar::

        dist    := NAME "(" number ("," number)* ")"
                 | "mix(" weight "*" dist ("," weight "*" dist)* ")"
        number  := [key "="] decimal ["/" decimal]

    ``NAME`` is one of N, Be, Ga, FN, La, vM, Skel, NB, Pois (case-insensitive).
    """
    expr = expr.strip()
    m = re.match(r"^([A-Za-z]+)\s*\((.*)\)$", expr, re.S)
    if not m:
        raise ValueError(f"cannot parse distribution {expr!r}")
    name, body = m.group(1).lower(), m.group(2)
    args = [a.strip() for a in _split_top(body, ",")]
    if name == "mix":
        comps = []
        for arg in args:
            w, _, rest = arg.partition("*")
            if not rest:
                raise ValueError(f"mixture component {arg!r} needs the form weight*dist")
            comps.append((_number(w), parse_dist(rest)))
        return mixture(*comps)
    if name not in _NAMES:
        raise ValueError(f"unknown distribution {m.group(1)!r}")
    return DistSpec(_NAMES[name], tuple(_number(a) for a in args))


def parse_overrides(text: str) -> dict[str, ScenarioSpec]:
    """Parse scenario-override lines: ``id  dist1  dist2  null_mean``.

    Fields are separated by whitespace outside parentheses; ``#`` starts a
    comment. ``null_mean`` is a number or fraction, or ``auto`` for the
    analytic mean of ``dist1``.
    """
    out: dict[str, ScenarioSpec] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            fields = _split_top(line, " ")
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
        if len(fields) != 4:
            raise ParseError(f"expected 4 fields (id dist1 dist2 mean), got {len(fields)}", line=lineno)
        sid = fields[0].lower()
        if sid not in SCENARIO_IDS:
            raise ParseError(f"unknown scenario id {fields[0]!r}", line=lineno, column=1)
        dists = []
        for col, f in ((2, fields[1]), (3, fields[2])):
            try:
                dists.append(parse_dist(f))
            except (ValueError, DomainError) as exc:
                raise ParseError(str(exc), line=lineno, column=col) from None
        try:
            mean = analytic_mean(dists[0]) if fields[3].lower() == "auto" else _number(fields[3])
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno, column=4) from None
        out[sid] = ScenarioSpec(sid, dists[0], dists[1], mean, note="override")
    return out


def load_overrides(path) -> dict[str, ScenarioSpec]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read override file {path}: {exc}") from None
    return parse_overrides(text)


def check_null(spec: ScenarioSpec, tol: float = 1e-8) -> None:
    if spec.mean_gap() > tol:
        raise ConfigError(
            f"scenario {spec.id}: analytic means {analytic_mean(spec.sample1):.10g} and "
            f"{analytic_mean(spec.sample2):.10g} do not both equal the null mean {spec.null_mean:.10g}"
        )
