"""Diophantine exhibits: secant products along convergent denominators,
the Buslaev log-sine average, the exponential bound audit and a constructor
for the pathological number whose partial quotients grow like 2^{q_n^2}.

All trigonometric arguments are reduced exactly. A real input is held as an
exact rational ``N/D`` plus a relative radius ``2**-precision``; ``l*N mod D``
is integer arithmetic, so no digits are lost before the final ``sin``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import contfrac
from .errors import LevelBudget, NonPositiveInput, PrecisionExhausted

LN2 = math.log(2.0)
LN6 = math.log(6.0)
RESOLUTION = 1e-3  # absolute resolution demanded of pi*l*tau mod pi
SUM_AGREEMENT = 1e-9
MAX_FACTORS = 200_000
MAX_LEVELS = 3
GUARD_BITS = 64


class RealInput:
    """Exact centre plus trustworthy precision, as used by the reductions."""

    __slots__ = ("value", "precision")

    def __init__(self, x, precision=None):
        if isinstance(x, PathologicalNumber):
            self.value, self.precision = x.tau, x.precision_bits
            return
        if isinstance(x, RealInput):
            self.value, self.precision = x.value, x.precision
            return
        self.value = contfrac.to_fraction(x)
        if self.value <= 0:
            raise NonPositiveInput(f"expected a positive real, got {float(self.value)!r}")
        self.precision = contfrac.default_precision(x) if precision is None else precision

    def scaled(self, c: Fraction) -> "RealInput":
        out = RealInput.__new__(RealInput)
        out.value, out.precision = self.value * c, self.precision
        return out

    def abs_error(self, l: int) -> float:
        """Bound on the absolute error of ``l * x``."""
        if self.precision is None:
            return 0.0
        return l * float(self.value) * 2.0 ** -self.precision

    def denominators(self, max_terms=512) -> list[int]:
        exp = contfrac.expand(self.value, max_terms=max_terms, quotient_cap=None,
                              precision=self.precision, exact=self.precision is None)
        out = []
        for q in exp.denominators:
            if not out or q > out[-1]:
                out.append(q)
        return out


def _log_dist(num: int, den: int) -> float:
    """log sin(pi*num/den) for 0 < num/den <= 1/2."""
    d = num / den
    if d > 1e-300:
        return math.log(math.sin(math.pi * d))
    return math.log(math.pi) + math.log(num) - math.log(den)


def log_trig_terms(x: RealInput, n: int, kind: str, *, strict: bool = True):
    """``ln|sin(pi l x)|`` (kind 'sin') or ``ln|cos(pi l x)|`` (kind 'cos') for l = 1..n.

    Returns ``(terms, n_ok)``. If the precision of ``x`` cannot resolve the
    argument at some ``l`` the array is cut there; ``strict`` turns that into
    :class:`PrecisionExhausted`.
    """
    N, D = x.value.numerator, x.value.denominator
    out = np.empty(n)
    r = 0
    for l in range(1, n + 1):
        r += N
        if r >= D:
            r %= D
        err = x.abs_error(l)
        if kind == "sin":
            num, den = min(r, D - r), D
        else:
            num, den = abs(2 * r - D), 2 * D
        dist = num / den
        if math.pi * err > RESOLUTION or (num == 0 or dist <= err):
            if strict:
                raise PrecisionExhausted(
                    f"cannot resolve pi*{l}*x mod pi: distance {dist:.3g}, error bound {err:.3g}"
                )
            return out[: l - 1], l - 1
        out[l - 1] = _log_dist(num, den)
    return out, n


def _streaming(terms: np.ndarray) -> np.ndarray:
    """Prefix sums by plain sequential accumulation."""
    acc, out = 0.0, np.empty(terms.size + 1)
    out[0] = 0.0
    for i, t in enumerate(terms.tolist()):
        acc += t
        out[i + 1] = acc
    return out


def _pairwise(terms: np.ndarray) -> float:
    if terms.size <= 8:
        return float(sum(terms.tolist()))
    h = terms.size // 2
    return _pairwise(terms[:h]) + _pairwise(terms[h:])


def _checked_sum(prefix: np.ndarray, terms: np.ndarray, n: int) -> tuple[float, float]:
    s, p = float(prefix[n]), _pairwise(terms[:n])
    scale = max(1.0, float(np.abs(terms[:n]).sum()))
    gap = abs(s - p) / scale
    if gap > SUM_AGREEMENT:
        warnings.warn(f"streaming and pairwise sums differ by {gap:.3g}", RuntimeWarning)
    return s, gap


# ---------------------------------------------------------------- secant products


@dataclass(frozen=True)
class SecantRow:
    k: int
    q_k: int
    log_product: float
    log_bound_gap: float
    sum_gap: float = 0.0


@dataclass(frozen=True)
class SecantProductReport:
    tau: Fraction
    precision: int | None
    convention: str
    rows: tuple[SecantRow, ...]
    truncated: bool = False

    @property
    def c_estimate(self) -> float:
        return math.exp(max(r.log_bound_gap for r in self.rows))

    def c_estimate_upto(self, k: int) -> float:
        return math.exp(max(r.log_bound_gap for r in self.rows if r.k <= k))

    def to_json(self) -> dict:
        return {
            "tau": float(self.tau),
            "convention": self.convention,
            "c_estimate": self.c_estimate,
            "truncated": self.truncated,
            "rows": [
                {"k": r.k, "q_k": str(r.q_k) if r.q_k.bit_length() > 53 else r.q_k,
                 "log_product": r.log_product, "log_bound_gap": r.log_bound_gap}
                for r in self.rows
            ],
        }


def _denominators(x: RealInput, convention: str) -> list[int]:
    if convention == "2tau":
        return x.scaled(Fraction(2)).denominators()
    if convention == "tau":
        return x.denominators()
    raise ValueError(f"unknown convention {convention!r}")


def secant_product_report(tau, k_max: int = 12, *, precision=None, convention="2tau",
                          max_factors: int = MAX_FACTORS, strict: bool = False):
    """Rows ``(k, q_k, log prod_{l<q_k} |sec(pi l tau)|, gap to q_k ln 6)``.

    ``convention`` picks whether ``q_k`` are the denominators of ``2 tau``
    (as in the lemma) or of ``tau`` itself. Rows stop at ``k_max``, at the
    factor budget, or where the precision of ``tau`` runs out (``truncated``).
    """
    x = RealInput(tau, precision)
    # q = 1 rows are empty products and carry no information
    qs = [q for q in _denominators(x, convention)[: k_max + 1] if 1 < q <= max_factors + 1]
    if not qs:
        raise ValueError("no denominator q_k > 1 within the factor budget")
    n = max(qs) - 1
    terms, n_ok = log_trig_terms(x, n, "cos", strict=strict)
    terms = -terms  # ln|sec|
    prefix = _streaming(terms)
    rows = []
    for k, q in enumerate(_denominators(x, convention)[: k_max + 1]):
        if q not in qs:
            continue
        if q - 1 > n_ok:
            break
        s, gap = _checked_sum(prefix, terms, q - 1)
        rows.append(SecantRow(k, q, s, s - q * LN6, gap))
    if not rows:
        raise PrecisionExhausted("no row could be resolved at the given precision")
    return SecantProductReport(x.value, x.precision, convention, tuple(rows),
                               truncated=n_ok < n)


# ---------------------------------------------------------------- Buslaev average


@dataclass(frozen=True)
class BuslaevRow:
    q_k: int
    average: float
    identity_gap: float | None = None


def buslaev_average(beta, k_max: int = 12, *, precision=None,
                    max_factors: int = MAX_FACTORS, audit: bool = True,
                    strict: bool = False) -> list[BuslaevRow]:
    """``(1/q_k) sum_{l<q_k} ln(2|sin(pi l beta)|)`` along ``q_k = q_k(beta)``.

    With ``audit`` each row also records the gap of the half-angle identity
    ``ln 2|sin 2y| = ln 2|sin y| + ln 2|cos y|`` summed over the same l.
    """
    x = RealInput(beta, precision)
    qs = [q for q in x.denominators()[: k_max + 1] if q - 1 <= max_factors]
    n = max(qs) - 1
    t, n_ok = log_trig_terms(x, n, "sin", strict=strict)
    t = t + LN2
    prefix = _streaming(t)
    if audit:
        half = x.scaled(Fraction(1, 2))
        ts, ns = log_trig_terms(half, n_ok, "sin", strict=strict)
        tc, nc = log_trig_terms(half, n_ok, "cos", strict=strict)
        n_ok = min(n_ok, ns, nc)
        ph, pc = _streaming(ts + LN2), _streaming(tc + LN2)
    rows = []
    for q in qs:
        if q - 1 > n_ok:
            break
        s, _ = _checked_sum(prefix, t, q - 1)
        gap = None
        if audit:
            gap = abs(s - (ph[q - 1] + pc[q - 1]))
        rows.append(BuslaevRow(q, s / q, gap))
    return rows


# ---------------------------------------------------------------- pathological number


@dataclass(frozen=True)
class PathologicalNumber:
    """tau = [a_0; a_1, ...] with a_0 = 1 and a_{n+1} = 2^{q_n^2}.

    Only ``a_0..a_levels`` are representable. ``tau`` stores the value of
    ``[a_0; ..., a_levels, 2^64]``: the guard quotient stands in for the next
    (astronomically large) quotient, which moves tau by less than
    ``1/(2^64 q_levels^2)`` and leaves every built quotient intact.
    """

    levels: int
    quotients: tuple[int, ...]
    convergents: tuple[tuple[int, int], ...]
    precision_bits: int
    tau: Fraction = field(repr=False)

    @property
    def p(self) -> list[int]:
        return [p for p, _ in self.convergents]

    @property
    def q(self) -> list[int]:
        return [q for _, q in self.convergents]

    @property
    def alpha(self) -> Fraction:
        return 2 / self.tau

    def secant_log(self, n: int) -> float:
        """ln|sec(pi q_n / alpha)| with exact reduction."""
        qn = self.q[n]
        v = qn * self.tau / 2
        r = v - math.floor(v)
        d = abs(2 * r - 1) / 2  # distance of q_n/alpha to the nearest half-integer
        return -_log_dist(d.numerator, d.denominator)

    def to_json(self) -> dict:
        big = lambda v: str(v) if v.bit_length() > 53 else v  # noqa: E731
        return {
            "levels": self.levels,
            "quotients": [big(a) for a in self.quotients],
            "p": [big(p) for p in self.p],
            "q": [big(q) for q in self.q],
            "precision_bits": self.precision_bits,
            "alpha_approx": float(self.alpha),
        }


def build_pathological(levels: int) -> PathologicalNumber:
    """Quotients ``[1; 2, 2^4, 2^1089, ...]`` up to ``a_levels``.

    ``levels = 3`` is the last one that fits in memory: ``a_4 = 2^{q_3^2}``
    with ``q_3 > 2^1094``.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if levels > MAX_LEVELS:
        raise LevelBudget(f"levels={levels} needs a_{levels} = 2^(q_{levels-1}^2), "
                          f"beyond representable size; max is {MAX_LEVELS}")
    # a_{n+1} = 2^{q_n^2} for n >= -1, with q_{-1} = 0 giving a_0 = 1
    a, q_prev2, q_prev = [], 1, 0
    for _ in range(levels + 1):
        a.append(2 ** (q_prev * q_prev))
        q_prev2, q_prev = q_prev, a[-1] * q_prev + q_prev2
    conv = contfrac.convergents(a)
    q_last = conv[-1][1]
    precision = max(2 * q_last.bit_length() + GUARD_BITS, conv[-2][1] ** 2 + 64)
    tail = contfrac.convergents(a + [2 ** GUARD_BITS])[-1]
    return PathologicalNumber(levels, tuple(a), tuple(conv), precision,
                              Fraction(tail[0], tail[1]))


# ---------------------------------------------------------------- bound (12) audit


def exponential_bound_audit(alpha, k_max: int = 500, *, precision=None,
                            strict: bool = False) -> list[tuple[int, float]]:
    """``(k, (1/k) ln prod_{l<=k} |sec(pi l / alpha)|)`` for k = 1..k_max.

    ``alpha`` may be a :class:`PathologicalNumber`, in which case
    ``alpha = 2/tau`` is reduced exactly.
    """
    if isinstance(alpha, PathologicalNumber):
        x = RealInput(alpha).scaled(Fraction(1, 2))
    else:
        a = RealInput(alpha, precision)
        x = RealInput.__new__(RealInput)
        x.value, x.precision = 1 / a.value, a.precision
    terms, n_ok = log_trig_terms(x, k_max, "cos", strict=strict)
    prefix = _streaming(-terms)
    return [(k, float(prefix[k]) / k) for k in range(1, n_ok + 1)]
