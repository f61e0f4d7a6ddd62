"""Continued fractions of positive reals with explicit input precision.

A real number is given as an exact rational centre plus a relative radius
``2**-precision``. Quotients are only emitted while the whole interval agrees
on them, so a truncated expansion never contains a garbage tail.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

from .errors import CutoffUnderflow, InvalidQuotient, NonPositiveInput, RationalAlpha

DEFAULT_PRECISION = 256
FLOAT_PRECISION = 53
DEFAULT_QUOTIENT_CAP = 10**12


class TruncationReason(str, enum.Enum):
    MAX_TERMS = "max_terms"
    PRECISION_EXHAUSTED = "precision_exhausted"
    TERMINATED_RATIONAL = "terminated_rational"


def to_fraction(x) -> Fraction:
    """Exact rational value of ``x`` (float, int, Fraction, decimal string, mpf)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise NonPositiveInput(f"non-finite value {x!r}")
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    man_exp = getattr(x, "man_exp", None)  # mpmath.mpf
    if man_exp is not None:
        man, exp = man_exp
        return Fraction(int(man)) * Fraction(2) ** int(exp)
    return Fraction(x)


def default_precision(x) -> int:
    return FLOAT_PRECISION if isinstance(x, float) else DEFAULT_PRECISION


@dataclass(frozen=True)
class ContinuedFractionExpansion:
    value: Fraction
    precision: int | None
    quotients: tuple[int, ...]
    convergents: tuple[tuple[int, int], ...]
    truncation_reason: TruncationReason
    # set when the number is indistinguishable from a rational at this
    # precision: exact termination, a quotient above the cap, or an interval
    # squeezed onto an integer
    rational_like: bool = False
    overflow_quotient: int | None = None

    @property
    def denominators(self) -> list[int]:
        return [q for _, q in self.convergents]

    def to_json(self) -> dict:
        return {
            "quotients": [str(a) if a.bit_length() > 53 else a for a in self.quotients],
            "convergents": [
                [str(p) if p.bit_length() > 53 else p, str(q) if q.bit_length() > 53 else q]
                for p, q in self.convergents
            ],
            "flags": {
                "truncation_reason": self.truncation_reason.value,
                "rational_like": self.rational_like,
                "precision_bits": self.precision,
            },
        }


def convergents(quotients) -> list[tuple[int, int]]:
    """Numerators and denominators ``(p_n, q_n)`` from the two-term recurrence."""
    quotients = list(quotients)
    if not quotients:
        raise InvalidQuotient("empty quotient list")
    for i, a in enumerate(quotients):
        if int(a) != a:
            raise InvalidQuotient(f"quotient a_{i}={a!r} is not an integer")
        if a < (0 if i == 0 else 1):
            raise InvalidQuotient(f"quotient a_{i}={a} out of range")
    p_prev2, p_prev = 0, 1
    q_prev2, q_prev = 1, 0
    out = []
    for a in quotients:
        a = int(a)
        p = a * p_prev + p_prev2
        q = a * q_prev + q_prev2
        out.append((p, q))
        p_prev2, p_prev = p_prev, p
        q_prev2, q_prev = q_prev, q
    return out


def expand(
    x,
    max_terms: int = 64,
    quotient_cap: int | None = DEFAULT_QUOTIENT_CAP,
    precision: int | None = None,
    exact: bool = False,
) -> ContinuedFractionExpansion:
    """Continued fraction of ``x > 0`` via the fractional-part iteration.

    ``precision`` is the number of trustworthy relative bits of ``x``; by
    default 53 for Python floats and 256 otherwise. With ``exact=True`` the
    value is taken as an exact rational.
    """
    if max_terms < 1:
        raise ValueError("max_terms must be >= 1")
    c = to_fraction(x)
    if c <= 0:
        raise NonPositiveInput(f"continued fraction needs x > 0, got {float(c)!r}")
    if exact:
        precision = None
        radius = Fraction(0)
    else:
        if precision is None:
            precision = default_precision(x)
        radius = c / (Fraction(2) ** precision)
    inv_cap = None if quotient_cap is None else Fraction(1, int(quotient_cap))

    lo, hi = c - radius, c + radius
    quotients: list[int] = []
    reason = TruncationReason.MAX_TERMS
    rational_like = False
    overflow = None
    while len(quotients) < max_terms:
        a = math.floor(lo)
        if quotients and quotient_cap is not None and a > quotient_cap:
            reason = TruncationReason.PRECISION_EXHAUSTED
            rational_like, overflow = True, a
            break
        if hi is None or math.floor(hi) != a:
            # the interval straddles an integer
            if hi is not None and inv_cap is not None and hi - lo < inv_cap:
                n_int = math.floor(hi)
                if n_int >= (1 if quotients else 0):
                    quotients.append(n_int)
                reason = TruncationReason.TERMINATED_RATIONAL
                rational_like = True
            else:
                reason = TruncationReason.PRECISION_EXHAUSTED
            break
        quotients.append(a)
        flo, fhi = lo - a, hi - a
        if fhi == 0:
            reason = TruncationReason.TERMINATED_RATIONAL
            rational_like = True
            break
        lo, hi = 1 / fhi, (None if flo == 0 else 1 / flo)

    return ContinuedFractionExpansion(
        value=c,
        precision=precision,
        quotients=tuple(quotients),
        convergents=tuple(convergents(quotients)) if quotients else (),
        truncation_reason=reason,
        rational_like=rational_like,
        overflow_quotient=overflow,
    )


def cutoff_sequence(params, q_max: int) -> list[int]:
    """Denominators ``q_k(2/alpha)`` not exceeding ``q_max``, deduplicated."""
    if params.is_rational:
        raise RationalAlpha(f"alpha={params.alpha!r} is numerically rational")
    exp = expand(
        2 / params.alpha_exact,
        max_terms=512,
        quotient_cap=None,
        precision=params.precision,
    )
    out: list[int] = []
    for q in exp.denominators:
        if q > q_max:
            break
        if not out or q > out[-1]:
            out.append(q)
    if len(out) < 2:
        raise CutoffUnderflow(
            f"no continued-fraction denominator of 2/alpha beyond q_0 is <= {q_max}"
        )
    return out
