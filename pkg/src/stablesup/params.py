"""Admissible stable parameters (alpha, rho) with arithmetic classification."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction

from . import contfrac
from .errors import AdmissibilityError, DoneyClass

DONEY_TOLERANCE = 1e-9
DONEY_K_MAX = 50
DONEY_L_MAX = 100


class AlphaClass(str, enum.Enum):
    IRRATIONAL = "irrational"
    NUMERICALLY_RATIONAL = "numerically_rational"


class Branch(str, enum.Enum):
    LOW_ALPHA = "low_alpha"  # alpha in (0, 1): series in x^{-1}
    HIGH_ALPHA = "high_alpha"  # alpha in (1, 2): series in x


@dataclass(frozen=True)
class DoneyProximity:
    k: int
    l: int
    distance: float


def nearest_doney(alpha: Fraction, rho: Fraction, k_max=DONEY_K_MAX, l_max=DONEY_L_MAX):
    """Closest Doney relation ``rho + k = l / alpha`` over the scan window."""
    best = None
    inv = 1 / alpha
    for l in range(-l_max, l_max + 1):
        if l == 0:
            continue
        target = l * inv - rho
        k = max(-k_max, min(k_max, round(target)))
        d = abs(float(rho + k - l * inv))
        if best is None or d < best.distance:
            best = DoneyProximity(k, l, d)
    return best


def _admissible(alpha: Fraction, rho: Fraction) -> bool:
    if 0 < alpha < 1:
        return 0 < rho < 1
    if 1 < alpha < 2:
        return 1 - 1 / alpha <= rho <= 1 / alpha
    return False


@dataclass(frozen=True)
class StableParams:
    """Parameters of the stable process; build with :meth:`create`.

    ``alpha``/``rho`` are doubles for the numerics; ``alpha_exact``/``rho_exact``
    are the exact rational values of the inputs and ``precision`` says how many
    relative bits of ``alpha_exact`` are trustworthy.
    """

    alpha: float
    rho: float
    alpha_exact: Fraction
    rho_exact: Fraction
    precision: int
    alpha_class: AlphaClass
    doney_proximity: DoneyProximity | None = field(default=None, compare=False)

    @classmethod
    def create(
        cls,
        alpha,
        rho,
        *,
        precision: int | None = None,
        quotient_cap: int | None = contfrac.DEFAULT_QUOTIENT_CAP,
        assume_irrational: bool = False,
        doney_tolerance: float = DONEY_TOLERANCE,
    ) -> "StableParams":
        a = contfrac.to_fraction(alpha)
        r = contfrac.to_fraction(rho)
        if precision is None:
            precision = contfrac.default_precision(alpha)
        if not _admissible(a, r):
            raise AdmissibilityError(
                f"(alpha, rho) = ({float(a)}, {float(r)}) is not admissible"
            )
        if assume_irrational:
            cls_ = AlphaClass.IRRATIONAL
        else:
            exp = contfrac.expand(a, max_terms=128, quotient_cap=quotient_cap, precision=precision)
            cls_ = AlphaClass.NUMERICALLY_RATIONAL if exp.rational_like else AlphaClass.IRRATIONAL
        prox = nearest_doney(a, r)
        if prox is not None and prox.distance < doney_tolerance:
            raise DoneyClass(
                f"rho + {prox.k} = {prox.l}/alpha within {prox.distance:.3g}"
            )
        return cls(float(a), float(r), a, r, precision, cls_, prox)

    @property
    def branch(self) -> Branch:
        return Branch.LOW_ALPHA if self.alpha < 1 else Branch.HIGH_ALPHA

    @property
    def is_rational(self) -> bool:
        return self.alpha_class is AlphaClass.NUMERICALLY_RATIONAL

    @property
    def theta(self) -> float:
        """Rotation angle pi*alpha*(1/2 - rho) of the characteristic exponent."""
        return math.pi * self.alpha * (0.5 - self.rho)

    def char_exponent(self, z):
        """Psi(z) = |z|^alpha exp(i theta sign z)."""
        import numpy as np

        z = np.asarray(z, dtype=float)
        return np.abs(z) ** self.alpha * np.exp(1j * self.theta * np.sign(z))

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "rho": self.rho,
            "alpha_class": self.alpha_class.value,
            "precision_bits": self.precision,
            "doney_proximity": None
            if self.doney_proximity is None
            else {
                "k": self.doney_proximity.k,
                "l": self.doney_proximity.l,
                "distance": self.doney_proximity.distance,
            },
        }
