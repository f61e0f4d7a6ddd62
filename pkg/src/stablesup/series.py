"""Density of the supremum S_1 from the double series.

Two summation orders are provided for the convergent side of the expansion:

* triangular partial sums over ``{m + 1 + alpha(n + 1/2) < q_k}`` with ``q_k``
  the continued-fraction denominators of ``2/alpha`` (valid for every
  irrational alpha);
* shells of ascending ``m + alpha n`` (valid when the series converges
  absolutely).

For alpha in (1, 2) the convergent series is in powers of ``x`` and the
``b``-series in ``1/x`` is only asymptotic at infinity; for alpha in (0, 1) the
roles are swapped. :func:`asymptotic_expansion` evaluates the far side by
optimal truncation, which is what makes full-range quadrature possible.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import integrate

from .coeffs import SIN_FLOOR, CoefficientGrid, SignedLogValue
from .contfrac import cutoff_sequence
from .errors import RationalAlpha, ShellBudgetExhausted, Unsupported
from .params import Branch, StableParams

DEFAULT_TOL = 1e-10
DEFAULT_Q_MAX = 4000
TAIL_RANGE = (1e-6, 1e6)
EPS = np.finfo(float).eps


class Verdict(str, enum.Enum):
    CONVERGED = "converged"
    NOT_CONVERGED = "not_converged"
    CUTOFF_CAPPED = "cutoff_capped"


class Method(str, enum.Enum):
    TRIANGULAR = "triangular"
    ABSOLUTE = "absolute"
    ASYMPTOTIC = "asymptotic"


@dataclass(frozen=True)
class TraceEntry:
    q: int
    terms_added: int
    partial_sum: float
    delta: float


@dataclass
class TriangularSumTrace:
    x: float
    branch: Branch
    entries: list[TraceEntry] = field(default_factory=list)
    verdict: Verdict = Verdict.NOT_CONVERGED
    estimated_value: float = math.nan
    estimated_error: float = math.inf
    rounding_error: float = 0.0

    def to_json(self) -> dict:
        return {
            "x": self.x,
            "branch": self.branch.value,
            "entries": [
                {"q": e.q, "terms_added": e.terms_added, "partial_sum": e.partial_sum, "delta": e.delta}
                for e in self.entries
            ],
            "verdict": self.verdict.value,
            "estimated_value": self.estimated_value,
            "estimated_error": self.estimated_error,
        }


@dataclass
class DensityResult:
    value: float
    method: Method
    estimated_error: float
    trace: TriangularSumTrace | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def verdict(self) -> Verdict:
        if self.trace is not None:
            return self.trace.verdict
        return Verdict.CONVERGED if "ShellBudgetExhausted" not in self.warning_codes else Verdict.NOT_CONVERGED

    @property
    def warning_codes(self) -> list[str]:
        return [w.split(":", 1)[0] for w in self.warnings]

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "method": self.method.value,
            "est_error": self.estimated_error,
            "verdict": self.verdict.value,
            "warnings": list(self.warnings),
        }


# --------------------------------------------------------------------------
# lattice bookkeeping


@dataclass(frozen=True)
class LatticeBlock:
    """Lattice points with their (x-independent) log-coefficients, sorted by s."""

    m: np.ndarray
    n: np.ndarray
    s: np.ndarray
    log_c: np.ndarray
    sign: np.ndarray

    @property
    def size(self) -> int:
        return int(self.m.size)


def triangle_count(alpha: Fraction, q: int) -> int:
    """#{(m, n) >= 0 : m + 1 + alpha (n + 1/2) < q}, exact."""
    return int(sum(_row_counts(alpha, q)))


def _row_counts(alpha: Fraction, q: int) -> list[int]:
    counts = []
    n = 0
    while True:
        t = q - 1 - alpha * (n + Fraction(1, 2))
        if t <= 0:
            break
        counts.append(math.ceil(t))
        n += 1
    return counts


def _points(counts) -> tuple[np.ndarray, np.ndarray]:
    counts = np.asarray(counts, dtype=np.int64)
    if counts.size == 0 or counts.sum() == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    n = np.repeat(np.arange(counts.size, dtype=np.int64), counts)
    starts = np.repeat(np.cumsum(counts) - counts, counts)
    m = np.arange(n.size, dtype=np.int64) - starts
    return m, n


class SeriesEvaluator:
    """Shared, lazily grown coefficient data for one parameter pair."""

    def __init__(self, params: StableParams, sin_floor: float = SIN_FLOOR):
        if params.is_rational:
            raise RationalAlpha(f"alpha={params.alpha!r} is numerically rational")
        self.params = params
        self.grid = CoefficientGrid(params, sin_floor=sin_floor)
        self._triangles: dict[int, LatticeBlock] = {}
        self._shells: dict[tuple[str, int], LatticeBlock] = {}

    # the convergent series uses a_{m,n} (alpha > 1) or b_{m,n+1} (alpha < 1)
    @property
    def near_family(self) -> str:
        return "a" if self.params.branch is Branch.HIGH_ALPHA else "b+1"

    @property
    def far_family(self) -> str:
        return "b+1" if self.params.branch is Branch.HIGH_ALPHA else "a"

    def exponents(self, family: str) -> tuple[float, float]:
        """(prefactor exponent, sign of s) so a term is c * x^(pref + sgn*s)."""
        a, r = self.params.alpha, self.params.rho
        if family == "a":
            return a * r - 1.0, 1.0
        return -1.0 - a, -1.0

    def _block(self, m, n, family) -> LatticeBlock:
        s = m + self.params.alpha * n
        order = np.argsort(s, kind="stable")
        m, n, s = m[order], n[order], s[order]
        log_c, sign = self.grid.log_terms(m, n, family)
        return LatticeBlock(m, n, s, log_c, sign)

    def triangle(self, q: int) -> LatticeBlock:
        blk = self._triangles.get(q)
        if blk is None:
            m, n = _points(_row_counts(self.params.alpha_exact, q))
            blk = self._block(m, n, self.near_family)
            self._triangles[q] = blk
        return blk

    def shells(self, family: str, j_max: int) -> LatticeBlock:
        """All points with m + alpha n < j_max (as floats), sorted by s."""
        key = (family, j_max)
        blk = self._shells.get(key)
        if blk is None:
            alpha = self.params.alpha
            n_rows = int(math.floor(j_max / alpha)) + 1
            counts = [max(0, math.ceil(j_max - alpha * k)) for k in range(n_rows)]
            m, n = _points(counts)
            keep = (m + alpha * n) < j_max
            blk = self._block(m[keep], n[keep], family)
            self._shells[key] = blk
        return blk

    def terms(self, blk: LatticeBlock, x: float, family: str) -> tuple[np.ndarray, np.ndarray]:
        """Density-scale terms and their relative rounding-error estimates."""
        pref, sgn = self.exponents(family)
        lx = math.log(x)
        expo = blk.log_c + (sgn * blk.s + pref) * lx
        with np.errstate(over="ignore", under="ignore"):
            vals = blk.sign * np.exp(expo)
        rel = EPS * (4.0 + np.abs(blk.log_c) + np.abs(blk.s * lx) + 2.0 * blk.s * np.log(blk.s + 2.0))
        return vals, rel


@functools.lru_cache(maxsize=8)
def evaluator(params: StableParams, sin_floor: float = SIN_FLOOR) -> SeriesEvaluator:
    return SeriesEvaluator(params, sin_floor)


def _fsum(vals: np.ndarray) -> float:
    """Correctly rounded sum of the significant terms; negligible ones added plainly."""
    if vals.size == 0:
        return 0.0
    mags = np.abs(vals)
    big = mags >= mags.max() * 1e-24
    if big.all():
        return math.fsum(vals.tolist())
    return math.fsum(vals[big].tolist()) + float(np.sum(vals[~big]))


def _rounding(vals: np.ndarray, rel: np.ndarray) -> float:
    # per-term errors are independent; 3 sigma of their sum plus the final rounding
    with np.errstate(over="ignore", invalid="ignore"):
        err = np.abs(vals) * rel
        top = float(err.max()) if err.size else 0.0
        if top == 0.0 or not math.isfinite(top):
            rms = top
        else:
            rms = top * float(np.sqrt(np.sum((err / top) ** 2)))
        return float(3.0 * rms + EPS * abs(float(np.sum(vals))))


def _check_x(x: float):
    if not (x > 0 and math.isfinite(x)):
        raise ValueError(f"x must be a positive finite number, got {x!r}")


def _clamp(res: DensityResult) -> DensityResult:
    if res.value < 0:
        if -res.value <= max(res.estimated_error, DEFAULT_TOL):
            res.warnings.append(f"NegativeDensity: clamped {res.value:.3e} to 0")
            res.value = 0.0
        else:
            res.warnings.append(f"NegativeDensity: value {res.value:.3e} exceeds error estimate")
    return res


# --------------------------------------------------------------------------
# triangular summation


def partial_sum_trace(
    params: StableParams,
    x: float,
    cutoffs,
    tol: float | None = None,
    *,
    sin_floor: float = SIN_FLOOR,
    _capped: bool = False,
) -> TriangularSumTrace:
    """Partial sums at each cutoff; with ``tol`` set, stop once converged.

    Cutoffs whose triangle is empty are recorded but do not count towards
    the two-consecutive-delta rule.
    """
    _check_x(x)
    ev = evaluator(params, sin_floor)
    fam = ev.near_family
    trace = TriangularSumTrace(x=float(x), branch=params.branch)
    prev = 0.0
    small_run = 0
    for q in cutoffs:
        blk = ev.triangle(int(q))
        if blk.size == 0:
            trace.entries.append(TraceEntry(int(q), 0, 0.0, 0.0))
            continue
        vals, rel = ev.terms(blk, x, fam)
        if not np.all(np.isfinite(vals)):
            with np.errstate(over="ignore", invalid="ignore"):
                total = math.copysign(math.inf, float(np.nansum(vals)))
            trace.entries.append(TraceEntry(int(q), blk.size, total, math.inf))
            trace.rounding_error = math.inf
            break
        total = _fsum(vals)
        delta = total - prev
        prev = total
        trace.entries.append(TraceEntry(int(q), blk.size, total, delta))
        trace.rounding_error = _rounding(vals, rel)
        if tol is not None:
            if abs(delta) < tol * max(1.0, abs(total)):
                small_run += 1
            else:
                small_run = 0
            if small_run >= 2:
                trace.verdict = Verdict.CONVERGED
                break
    else:
        if tol is not None:
            trace.verdict = Verdict.CUTOFF_CAPPED if _capped else Verdict.NOT_CONVERGED
    live = [e for e in trace.entries if e.terms_added > 0]
    if live:
        trace.estimated_value = live[-1].partial_sum
        last_delta = abs(live[-1].delta) if len(live) > 1 else abs(live[-1].partial_sum)
        trace.estimated_error = max(last_delta, trace.rounding_error)
    return trace


def density_triangular(
    params: StableParams,
    x: float,
    cutoffs=None,
    tol: float = DEFAULT_TOL,
    *,
    q_max: int = DEFAULT_Q_MAX,
    sin_floor: float = SIN_FLOOR,
) -> DensityResult:
    """p(x) from triangular partial sums cut at the denominators of 2/alpha."""
    _check_x(x)
    if params.is_rational:
        raise RationalAlpha(f"alpha={params.alpha!r} is numerically rational")
    tail = _tail_regime(params, x)
    if tail is not None:
        return tail
    capped = cutoffs is None
    if cutoffs is None:
        cutoffs = cutoff_sequence(params, q_max)
    trace = partial_sum_trace(params, x, cutoffs, tol, sin_floor=sin_floor, _capped=capped)
    res = DensityResult(trace.estimated_value, Method.TRIANGULAR, trace.estimated_error, trace)
    if trace.verdict is not Verdict.CONVERGED:
        res.warnings.append(
            f"CutoffExhausted: no convergence by q={trace.entries[-1].q if trace.entries else None}"
        )
    if trace.rounding_error > tol * max(1.0, abs(res.value)):
        res.warnings.append(f"CancellationLoss: rounding error ~{trace.rounding_error:.2e}")
    return _clamp(res)


# --------------------------------------------------------------------------
# absolute-order summation


def _shell_stats(blk: LatticeBlock, vals: np.ndarray, n_shells: int) -> np.ndarray:
    idx = np.floor(blk.s).astype(np.int64)
    out = np.zeros(n_shells)
    with np.errstate(over="ignore", invalid="ignore"):
        np.add.at(out, idx, np.abs(vals))
    return out


def amplification_rebound(params: StableParams, shells: int, start: int = 10,
                          sin_floor: float = SIN_FLOOR) -> float:
    """Largest rise of the small-denominator factor above its running minimum.

    For each unit shell ``j <= m + alpha n < j + 1`` take the largest log of
    the coefficient divided by its smooth Gamma part (the sine products and
    reflection sine). Returns ``max_j (D_j - min_{start <= i < j} D_i)`` over
    ``j > start``. Generic irrationals give a few units; numbers with huge
    continued-fraction quotients give values of order log(quotient).
    """
    ev = evaluator(params, sin_floor)
    blk = ev.shells(ev.near_family, shells)
    m, n = blk.m, blk.n
    g = ev.grid
    fam = ev.near_family
    nn = n if fam == "a" else n + 1
    logP = np.asarray(g._logP)[m]
    logQ = np.asarray(g._logQ)[nn]
    if fam == "a":
        extra = np.array([s.log_mag for s in g._S])[m]
    else:
        extra = np.array([t.log_mag for t in g._T])[nn]
    amp = logP + logQ + extra
    idx = np.floor(blk.s).astype(np.int64)
    D = np.full(shells, -np.inf)
    np.maximum.at(D, idx, np.where(np.isfinite(amp), amp, -np.inf))
    run_min = math.inf
    rebound = 0.0
    for j in range(start, shells):
        if j > start and math.isfinite(run_min):
            rebound = max(rebound, D[j] - run_min)
        run_min = min(run_min, D[j])
    return float(rebound)


def density_absolute(
    params: StableParams,
    x: float,
    tol: float = DEFAULT_TOL,
    max_shell: int = 2000,
    *,
    rebound_factor: float = 1e6,
    audit_shells: int = 100,
    sin_floor: float = SIN_FLOOR,
) -> DensityResult:
    """p(x) summing unit shells of ascending m + alpha n.

    Stops once three consecutive shells each contribute less than
    ``tol * max(1, |S|)`` in absolute value.
    """
    _check_x(x)
    if params.is_rational:
        raise RationalAlpha(f"alpha={params.alpha!r} is numerically rational")
    tail = _tail_regime(params, x)
    if tail is not None:
        return tail
    ev = evaluator(params, sin_floor)
    fam = ev.near_family
    j_hi = 32
    stop = None
    while stop is None:
        j_hi = min(j_hi, max_shell)
        blk = ev.shells(fam, j_hi)
        vals, rel = ev.terms(blk, x, fam)
        finite = np.isfinite(vals)
        per_shell = _shell_stats(blk, np.where(finite, vals, 0.0), j_hi)
        if not finite.all():
            bad = int(np.floor(blk.s[~finite].min()))
            per_shell[bad:] = math.inf
        csum = np.cumsum(np.bincount(np.floor(blk.s).astype(np.int64),
                                     weights=np.where(finite, vals, 0.0), minlength=j_hi))
        run = 0
        for j in range(j_hi):
            if per_shell[j] < tol * max(1.0, abs(csum[j])):
                run += 1
                if run >= 3:
                    stop = j + 1
                    break
            else:
                run = 0
        if stop is None and j_hi >= max_shell:
            break
        j_hi *= 2

    warnings = []
    rebound = amplification_rebound(params, max(audit_shells, 2 * (stop or max_shell)),
                                    sin_floor=sin_floor)
    if rebound > math.log(rebound_factor):
        warnings.append(
            f"AbsoluteOrderUnsafe: term magnitudes rebound by e^{rebound:.1f} beyond shell 10"
        )
    n_shell = stop if stop is not None else max_shell
    blk = ev.shells(fam, n_shell)
    vals, rel = ev.terms(blk, x, fam)
    if np.all(np.isfinite(vals)):
        value = _fsum(vals)
        rounding = _rounding(vals, rel)
    else:
        value, rounding = math.nan, math.inf
    last = _shell_stats(blk, np.nan_to_num(vals, posinf=0, neginf=0), n_shell)[-3:].sum()
    res = DensityResult(value, Method.ABSOLUTE, max(float(last), rounding), None, warnings)
    if rounding > tol * max(1.0, abs(value)):
        res.warnings.append(f"CancellationLoss: rounding error ~{rounding:.2e}")
    if stop is None:
        res.warnings.append(f"ShellBudgetExhausted: no convergence within {max_shell} shells")
        raise ShellBudgetExhausted(res.warnings[-1], res)
    return _clamp(res)


# --------------------------------------------------------------------------
# asymptotics


def leading_asymptotic(params: StableParams, side: str) -> tuple[float, SignedLogValue]:
    """Leading power and coefficient of the convergent expansion at its own end."""
    ev = evaluator(params)
    if params.branch is Branch.HIGH_ALPHA and side == "zero":
        return params.alpha * params.rho - 1.0, ev.grid.a_coeff(0, 0)
    if params.branch is Branch.LOW_ALPHA and side == "infinity":
        return -1.0 - params.alpha, ev.grid.b_coeff(0, 1)
    raise Unsupported(f"no convergent expansion for {params.branch.value} at {side}")


def far_side_leading(params: StableParams) -> tuple[float, SignedLogValue]:
    """Leading term of the asymptotic (divergent) expansion on the other side."""
    ev = evaluator(params)
    if params.branch is Branch.HIGH_ALPHA:
        return -1.0 - params.alpha, ev.grid.b_coeff(0, 1)
    return params.alpha * params.rho - 1.0, ev.grid.a_coeff(0, 0)


def asymptotic_expansion(
    params: StableParams,
    x: float,
    tol: float = DEFAULT_TOL,
    max_shell: int = 160,
) -> DensityResult:
    """Far-side expansion summed by shells up to its smallest shell.

    The estimated error is the smallest shell contribution seen (the usual
    optimal-truncation rule for divergent asymptotic series).
    """
    _check_x(x)
    ev = evaluator(params)
    fam = ev.far_family
    blk = ev.shells(fam, max_shell)
    vals, rel = ev.terms(blk, x, fam)
    vals = np.where(np.isfinite(vals), vals, np.inf)
    per_shell = _shell_stats(blk, np.where(np.isfinite(vals), vals, 0.0), max_shell)
    per_shell[~np.isfinite(_shell_stats(blk, vals, max_shell))] = np.inf
    best, best_j = math.inf, 0
    stop = max_shell
    run = 0
    total = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        # shells past the optimal truncation may overflow; they are never used
        csum = np.cumsum(np.bincount(np.floor(blk.s).astype(np.int64),
                                     weights=np.where(np.isfinite(vals), vals, 0.0),
                                     minlength=max_shell))
    for j in range(max_shell):
        total = csum[j]
        if per_shell[j] < best:
            best, best_j = per_shell[j], j
        elif j >= best_j + 3 and per_shell[j] > 10 * best:
            stop = best_j
            break
        # relative: far-side values are often tiny tail densities
        if per_shell[j] < tol * abs(total):
            run += 1
            if run >= 3:
                stop = j + 1
                best = per_shell[j]
                break
        else:
            run = 0
    keep = np.floor(blk.s) < stop
    value = _fsum(vals[keep])
    rounding = _rounding(vals[keep], rel[keep])
    res = DensityResult(value, Method.ASYMPTOTIC, max(float(best), rounding))
    return _clamp(res)


def _tail_regime(params: StableParams, x: float) -> DensityResult | None:
    lo, hi = TAIL_RANGE
    if lo <= x <= hi:
        return None
    side = "zero" if x < lo else "infinity"
    try:
        expo, coef = leading_asymptotic(params, side)
    except Unsupported:
        expo, coef = far_side_leading(params)
    value = float(coef) * x**expo
    return DensityResult(
        value, Method.ASYMPTOTIC, math.nan, None,
        [f"TailRegime: x={x:g} outside [{lo:g}, {hi:g}], leading term returned"],
    )


def density(
    params: StableParams,
    x: float,
    method: str = "triangular",
    tol: float = DEFAULT_TOL,
    *,
    q_max: int = DEFAULT_Q_MAX,
) -> DensityResult:
    """Dispatch on ``method`` in {triangular, absolute, asymptotic, auto}.

    ``auto`` takes the far-side asymptotic expansion when it already meets
    ``tol`` and the triangular sum otherwise, keeping whichever has the
    smaller error estimate.
    """
    method = {"tri": "triangular", "abs": "absolute", "asym": "asymptotic"}.get(method, method)
    if method == "triangular":
        return density_triangular(params, x, tol=tol, q_max=q_max)
    if method == "absolute":
        return density_absolute(params, x, tol=tol)
    if method == "asymptotic":
        return asymptotic_expansion(params, x, tol=tol)
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    tail = _tail_regime(params, x)
    if tail is not None:
        return tail
    far = asymptotic_expansion(params, x, tol=tol)
    if far.estimated_error <= tol * abs(far.value):
        return far
    near = density_triangular(params, x, tol=tol, q_max=q_max)
    return near if near.estimated_error <= far.estimated_error else far


# --------------------------------------------------------------------------
# normalization


@dataclass
class NormalizationReport:
    total: float
    body: float
    body_error: float
    lower_tail: float
    upper_tail: float
    x_lo: float
    x_hi: float
    mass_below_one: float


def normalization(
    params: StableParams,
    x_lo: float = 1e-6,
    x_hi: float = 1e5,
    tol: float = 1e-9,
) -> NormalizationReport:
    """Integral of p over (0, inf): quadrature in log x plus analytic tails."""
    ar = params.alpha * params.rho
    lead0 = float(evaluator(params).grid.a_coeff(0, 0))
    lead_inf = float(evaluator(params).grid.b_coeff(0, 1))
    lower = lead0 * x_lo**ar / ar
    upper = lead_inf * x_hi ** (-params.alpha) / params.alpha

    def f(u):
        x = math.exp(u)
        return density(params, x, method="auto", tol=tol).value * x

    pts = [math.log(v) for v in (0.25, 0.5, 1.0, 2.0, 4.0, 8.0) if x_lo < v < x_hi]
    below, e1 = integrate.quad(f, math.log(x_lo), 0.0, points=[p for p in pts if p < 0],
                               limit=200, epsabs=1e-8, epsrel=1e-8)
    above, e2 = integrate.quad(f, 0.0, math.log(x_hi), points=[p for p in pts if p > 0],
                               limit=200, epsabs=1e-8, epsrel=1e-8)
    body = below + above
    return NormalizationReport(
        total=lower + body + upper,
        body=body,
        body_error=e1 + e2,
        lower_tail=lower,
        upper_tail=upper,
        x_lo=x_lo,
        x_hi=x_hi,
        mass_below_one=lower + below,
    )
