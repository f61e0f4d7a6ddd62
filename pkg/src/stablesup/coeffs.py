"""Series coefficients a_{m,n} and b_{m,n} in log-space with sign tracking.

Write s = m + alpha*n. For the two sine products

    P_m = prod_{j<=m} sin(pi(rho + (j-1)/alpha)) / sin(pi j/alpha)
    Q_n = prod_{j<=n} sin(pi alpha(rho + j - 1)) / sin(pi alpha j)

the coefficients are

    a_{m,n} = (-1)^{m+n} P_m Q_n / [Gamma(1 - rho - n - m/alpha) Gamma(alpha rho + s)]
    b_{m,n} = (-1)^{m+n} P_m Q_n / [Gamma(1 + n + m/alpha) Gamma(-s)]

The b form is the Gamma-ratio definition with the shared factors cancelled
analytically. Gammas at negative arguments go through the reflection formula,
and every sine of pi*y is evaluated after reducing y modulo 2 in exact
rational arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import gammaln

from .contfrac import to_fraction
from .errors import GammaPole, NearSingularProduct
from .params import Branch, StableParams

LOG_PI = math.log(math.pi)
POLE_TOLERANCE = 1e-9
SIN_FLOOR = 1e-280


@dataclass(frozen=True)
class SignedLogValue:
    log_mag: float
    sign: int

    def __post_init__(self):
        if (self.sign == 0) != (self.log_mag == -math.inf):
            raise ValueError(f"inconsistent SignedLogValue({self.log_mag}, {self.sign})")

    @classmethod
    def from_float(cls, v: float) -> "SignedLogValue":
        if v == 0:
            return ZERO
        return cls(math.log(abs(v)), 1 if v > 0 else -1)

    def __mul__(self, other: "SignedLogValue") -> "SignedLogValue":
        if self.sign == 0 or other.sign == 0:
            return ZERO
        return SignedLogValue(self.log_mag + other.log_mag, self.sign * other.sign)

    def __truediv__(self, other: "SignedLogValue") -> "SignedLogValue":
        if other.sign == 0:
            raise ZeroDivisionError("division by a zero SignedLogValue")
        if self.sign == 0:
            return ZERO
        return SignedLogValue(self.log_mag - other.log_mag, self.sign * other.sign)

    def __neg__(self) -> "SignedLogValue":
        return SignedLogValue(self.log_mag, -self.sign)

    def __add__(self, other: "SignedLogValue") -> "SignedLogValue":
        if other.sign == 0:
            return self
        if self.sign == 0:
            return other
        big, small = (self, other) if self.log_mag >= other.log_mag else (other, self)
        r = math.exp(small.log_mag - big.log_mag)
        if big.sign == small.sign:
            return SignedLogValue(big.log_mag + math.log1p(r), big.sign)
        if r == 1.0:
            return ZERO
        return SignedLogValue(big.log_mag + math.log1p(-r), big.sign)

    def __sub__(self, other: "SignedLogValue") -> "SignedLogValue":
        return self + (-other)

    def __float__(self) -> float:
        if self.sign == 0:
            return 0.0
        try:
            return self.sign * math.exp(self.log_mag)
        except OverflowError:
            return self.sign * math.inf

    def representable(self) -> bool:
        return self.sign == 0 or -745.0 < self.log_mag < 709.7


ZERO = SignedLogValue(-math.inf, 0)
ONE = SignedLogValue(0.0, 1)


def sin_pi(y) -> tuple[SignedLogValue, float]:
    """sin(pi*y) for exact rational ``y`` as (value, distance of y to nearest integer)."""
    y = to_fraction(y)
    r = y - 2 * math.floor(y / 2)  # [0, 2)
    half = 1 if r < 1 else -1
    f = r - math.floor(r)  # [0, 1)
    d = min(f, 1 - f)
    if d == 0:
        return ZERO, 0.0
    df = float(d)
    if df > 1e-300:
        log_mag = math.log(math.sin(math.pi * df))
    else:
        log_mag = LOG_PI + math.log(d.numerator) - math.log(d.denominator)
    return SignedLogValue(log_mag, half), df


def signed_log_gamma(z, pole_tolerance: float = POLE_TOLERANCE) -> SignedLogValue:
    """log|Gamma(z)| and sign(Gamma(z)); reflection for z < 1/2."""
    zf = float(z)
    if zf >= 0.5:
        return SignedLogValue(math.lgamma(zf), 1)
    zq = to_fraction(z)
    s, d = sin_pi(zq)
    if d < pole_tolerance:
        raise GammaPole(f"Gamma({zf}) is within {d:.3g} of a pole")
    return SignedLogValue(LOG_PI - s.log_mag - math.lgamma(float(1 - zq)), s.sign)


def signed_log_rgamma(z, pole_tolerance: float = POLE_TOLERANCE) -> SignedLogValue:
    """1/Gamma(z) in log form."""
    g = signed_log_gamma(z, pole_tolerance)
    return SignedLogValue(-g.log_mag, g.sign)


class CoefficientGrid:
    """Coefficients of one parameter pair, with sine products kept incrementally.

    Products are extended on demand; each extension by one index costs one
    pair of sine evaluations. Individual coefficients are then O(1) (two
    log-gammas). ``log_terms`` evaluates whole index arrays at once.
    """

    def __init__(self, params: StableParams, *, sin_floor: float = SIN_FLOOR,
                 pole_tolerance: float = POLE_TOLERANCE):
        self.params = params
        self.branch = params.branch
        self.sin_floor = sin_floor
        self.pole_tolerance = pole_tolerance
        self._alpha = params.alpha_exact
        self._inv_alpha = 1 / params.alpha_exact
        self._rho = params.rho_exact
        # P_m, Q_n and the reflection sines S_m = sin(pi(rho + m/alpha)),
        # T_n = sin(pi alpha n); index 0 is the empty product / first sine
        self._logP = [0.0]
        self._sgnP = [1]
        self._logQ = [0.0]
        self._sgnQ = [1]
        self._S: list[SignedLogValue] = []
        self._T: list[SignedLogValue] = [ZERO]
        self._extend_m(0)

    def _check_den(self, d: float, what: str):
        if math.sin(math.pi * d) < self.sin_floor:
            raise NearSingularProduct(f"{what} has |sin| below floor (distance {d:.3g})")

    def _extend_m(self, m_max: int):
        while len(self._S) <= m_max:
            m = len(self._S)
            s, d = sin_pi(self._rho + m * self._inv_alpha)
            if s.sign != 0 and d < self.pole_tolerance:
                raise GammaPole(f"Gamma(1 - rho - n - {m}/alpha) near a pole")
            self._S.append(s)
        while len(self._logP) <= m_max:
            j = len(self._logP)
            num = self._S[j - 1]
            den, d = sin_pi(j * self._inv_alpha)
            if den.sign == 0:
                raise NearSingularProduct(f"sin(pi*{j}/alpha) vanishes")
            self._check_den(d, f"sin(pi*{j}/alpha)")
            self._logP.append(self._logP[-1] + num.log_mag - den.log_mag)
            self._sgnP.append(self._sgnP[-1] * num.sign * den.sign)

    def _extend_n(self, n_max: int):
        while len(self._logQ) <= n_max:
            j = len(self._logQ)
            num, _ = sin_pi(self._alpha * (self._rho + j - 1))
            den, d = sin_pi(self._alpha * j)
            if den.sign == 0:
                raise NearSingularProduct(f"sin(pi*alpha*{j}) vanishes")
            self._check_den(d, f"sin(pi*alpha*{j})")
            self._T.append(den)
            if num.sign == 0:
                self._logQ.append(-math.inf)
                self._sgnQ.append(0)
            else:
                self._logQ.append(self._logQ[-1] + num.log_mag - den.log_mag)
                self._sgnQ.append(self._sgnQ[-1] * num.sign * den.sign)

    def ensure(self, m_max: int, n_max: int):
        self._extend_m(m_max)
        self._extend_n(n_max)

    def sine_products(self, m: int, n: int) -> tuple[SignedLogValue, SignedLogValue]:
        self.ensure(m, n)
        P = ZERO if self._sgnP[m] == 0 else SignedLogValue(self._logP[m], self._sgnP[m])
        Q = ZERO if self._sgnQ[n] == 0 else SignedLogValue(self._logQ[n], self._sgnQ[n])
        return P, Q

    def a_coeff(self, m: int, n: int) -> SignedLogValue:
        if m < 0 or n < 0:
            raise ValueError("a_{m,n} needs m, n >= 0")
        P, Q = self.sine_products(m, n)
        a, rho = self.params.alpha, self.params.rho
        S = self._S[m]
        if S.sign == 0 or Q.sign == 0:
            return ZERO
        # 1/Gamma(1-rho-n-m/alpha) = (-1)^n S_m Gamma(rho+n+m/alpha)/pi
        log_mag = (
            S.log_mag
            + math.lgamma(float(self._rho + n + m * self._inv_alpha))
            - LOG_PI
            - math.lgamma(a * rho + m + a * n)
            + P.log_mag
            + Q.log_mag
        )
        sign = (-1) ** m * S.sign * P.sign * Q.sign
        return SignedLogValue(log_mag, sign)

    def b_coeff(self, m: int, n: int) -> SignedLogValue:
        if n < 1 or m < 0:
            raise ValueError("b_{m,n} is only used for m >= 0, n >= 1")
        P, Q = self.sine_products(m, n)
        if Q.sign == 0:
            return ZERO
        T = self._T[n]
        # 1/Gamma(-m-alpha n) = -(-1)^m T_n Gamma(1+m+alpha n)/pi
        log_mag = (
            T.log_mag
            + math.lgamma(1 + m + self.params.alpha * n)
            - LOG_PI
            - math.lgamma(float(1 + n + m * self._inv_alpha))
            + P.log_mag
            + Q.log_mag
        )
        sign = -((-1) ** n) * T.sign * P.sign * Q.sign
        return SignedLogValue(log_mag, sign)

    def series_coeff(self, m: int, n: int) -> SignedLogValue:
        """Coefficient multiplying x^{+-(m + alpha n)} in the convergent series."""
        if self.branch is Branch.HIGH_ALPHA:
            return self.a_coeff(m, n)
        return self.b_coeff(m, n + 1)

    def log_terms(self, m: np.ndarray, n: np.ndarray, which: str) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised (log|c|, sign) for ``which`` in {'a', 'b+1'}.

        ``'a'`` gives a_{m,n}; ``'b+1'`` gives b_{m,n+1}.
        """
        m = np.asarray(m, dtype=np.int64)
        n = np.asarray(n, dtype=np.int64)
        if m.size == 0:
            return np.zeros(0), np.zeros(0, dtype=np.int8)
        alpha, rho = self.params.alpha, self.params.rho
        inv = 1.0 / alpha
        nn = n if which == "a" else n + 1
        self.ensure(int(m.max()), int(nn.max()))
        logP = np.asarray(self._logP)[m]
        sgnP = np.asarray(self._sgnP, dtype=np.int8)[m]
        logQ = np.asarray(self._logQ)[nn]
        sgnQ = np.asarray(self._sgnQ, dtype=np.int8)[nn]
        if which == "a":
            S_log = np.array([s.log_mag for s in self._S])[m]
            S_sgn = np.array([s.sign for s in self._S], dtype=np.int8)[m]
            log_mag = (
                S_log
                + gammaln(rho + nn + m * inv)
                - LOG_PI
                - gammaln(alpha * rho + m + alpha * nn)
                + logP
                + logQ
            )
            sign = np.where(m % 2 == 0, 1, -1).astype(np.int8) * S_sgn * sgnP * sgnQ
        elif which == "b+1":
            T_log = np.array([t.log_mag for t in self._T])[nn]
            T_sgn = np.array([t.sign for t in self._T], dtype=np.int8)[nn]
            log_mag = (
                T_log
                + gammaln(1 + m + alpha * nn)
                - LOG_PI
                - gammaln(1 + nn + m * inv)
                + logP
                + logQ
            )
            sign = -np.where(nn % 2 == 0, 1, -1).astype(np.int8) * T_sgn * sgnP * sgnQ
        else:
            raise ValueError(f"unknown coefficient family {which!r}")
        log_mag = np.where(sign == 0, -np.inf, log_mag)
        return log_mag, sign.astype(np.int8)


def a_coeff(grid: CoefficientGrid, m: int, n: int) -> SignedLogValue:
    return grid.a_coeff(m, n)


def b_coeff(grid: CoefficientGrid, m: int, n: int) -> SignedLogValue:
    return grid.b_coeff(m, n)


def _direct_products(params: StableParams, m: int, n: int) -> SignedLogValue:
    alpha, rho = params.alpha_exact, params.rho_exact
    prod = ONE
    for j in range(1, m + 1):
        prod = prod * sin_pi(rho + Fraction(j - 1) / alpha)[0]
        prod = prod / sin_pi(Fraction(j) / alpha)[0]
    for j in range(1, n + 1):
        prod = prod * sin_pi(alpha * (rho + j - 1))[0]
        prod = prod / sin_pi(alpha * j)[0]
    return prod


def a_coeff_direct(params: StableParams, m: int, n: int) -> SignedLogValue:
    """a_{m,n} from scratch: literal formula, products rebuilt every call."""
    alpha, rho = params.alpha_exact, params.rho_exact
    parity = SignedLogValue(0.0, (-1) ** (m + n))
    g1 = signed_log_gamma(1 - rho - n - Fraction(m) / alpha)
    g2 = signed_log_gamma(alpha * rho + m + alpha * n)
    return parity * _direct_products(params, m, n) / (g1 * g2)


def b_coeff_direct(params: StableParams, m: int, n: int) -> SignedLogValue:
    """b_{m,n} as the literal Gamma ratio times a_{m,n} (no cancellation)."""
    alpha, rho = params.alpha_exact, params.rho_exact
    num = signed_log_gamma(1 - rho - n - Fraction(m) / alpha) * signed_log_gamma(
        alpha * rho + m + alpha * n
    )
    den = signed_log_gamma(1 + n + Fraction(m) / alpha) * signed_log_gamma(-m - alpha * n)
    return num / den * a_coeff_direct(params, m, n)
