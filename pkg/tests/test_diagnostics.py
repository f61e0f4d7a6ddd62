import math
from fractions import Fraction

import mpmath
import pytest

from stablesup import contfrac
from stablesup import diagnostics as dg
from stablesup.errors import LevelBudget, PrecisionExhausted


def quad(expr):
    with mpmath.workprec(300):
        return expr()


GOLDEN = quad(lambda: (1 + mpmath.sqrt(5)) / 2)
QUADRATIC_TAUS = [
    quad(lambda: mpmath.sqrt(2)),
    quad(lambda: mpmath.sqrt(3)),
    quad(lambda: (1 + mpmath.sqrt(5)) / 4),
    quad(lambda: mpmath.sqrt(7)),
    quad(lambda: (mpmath.sqrt(13) - 1) / 2),
]


# ---------------------------------------------------------------- pathological number


def test_pathological_levels_3():
    pn = dg.build_pathological(3)
    assert list(pn.quotients) == [1, 2, 16, 2**1089]
    assert pn.p[:3] == [1, 3, 49] and pn.q[:3] == [1, 2, 33]
    assert all(p % 2 == 1 for p in pn.p)
    assert pn.precision_bits >= pn.q[2] ** 2 + 64


@pytest.mark.parametrize("levels", [1, 2, 3])
def test_pathological_round_trip(levels):
    pn = dg.build_pathological(levels)
    e = contfrac.expand(pn.tau, max_terms=levels + 1, quotient_cap=None,
                        precision=pn.precision_bits)
    assert e.quotients == pn.quotients


@pytest.mark.parametrize("levels", [2, 3])
def test_pathological_approximation_quality(levels):
    pn = dg.build_pathological(levels)
    for n in range(levels):
        p, q = pn.convergents[n]
        assert abs(q * pn.tau - p) < Fraction(1, 2 ** (q * q))


def test_pathological_secant_blowup():
    pn = dg.build_pathological(2)
    assert math.exp(pn.secant_log(1)) > 16 / math.pi
    # the same factor straight from mpmath at high precision
    with mpmath.workprec(2000):
        tau = mpmath.mpf(pn.tau.numerator) / pn.tau.denominator
        ref = abs(mpmath.sec(mpmath.pi * pn.q[1] * tau / 2))
    assert pn.secant_log(1) == pytest.approx(float(mpmath.log(ref)), rel=1e-12)


def test_level_budget():
    with pytest.raises(LevelBudget):
        dg.build_pathological(4)


# ---------------------------------------------------------------- secant products


def test_golden_secant_gap_bounded():
    rep = dg.secant_product_report(GOLDEN / 2, 12, precision=300)
    gaps = [r.log_bound_gap for r in rep.rows]
    assert rep.rows[-1].k == 12
    assert max(gaps) < 0 and math.isfinite(rep.c_estimate)
    assert max(gaps[len(gaps) // 2:]) <= max(gaps)


def test_sqrt2_half_no_unresolved_factor():
    # double input: the whole report must resolve at 53 bits
    rep = dg.secant_product_report(math.sqrt(2) / 2, 10, strict=True)
    assert rep.rows[-1].k == 10 and not rep.truncated


@pytest.mark.parametrize("tau", QUADRATIC_TAUS)
def test_c_estimate_stable(tau):
    rep = dg.secant_product_report(tau, 16, precision=300)
    k = rep.rows[-1].k
    assert rep.c_estimate / rep.c_estimate_upto(k // 2) < 2


def test_streaming_and_pairwise_agree():
    rep = dg.secant_product_report(QUADRATIC_TAUS[0], 12, precision=300)
    assert all(r.sum_gap < 1e-9 for r in rep.rows)


def test_secant_against_direct_product():
    tau = QUADRATIC_TAUS[1]
    rep = dg.secant_product_report(tau, 5, precision=300)
    with mpmath.workprec(300):
        for r in rep.rows:
            ref = sum(-mpmath.log(abs(mpmath.cos(mpmath.pi * l * tau))) for l in range(1, r.q_k))
            assert r.log_product == pytest.approx(float(ref), rel=1e-12, abs=1e-12)


def test_precision_exhausted():
    # 20 trustworthy bits cannot resolve pi*l*x mod pi to 1e-3 beyond l ~ 200
    x = dg.RealInput(math.sqrt(2), precision=20)
    with pytest.raises(PrecisionExhausted):
        dg.log_trig_terms(x, 5000, "cos", strict=True)
    terms, n_ok = dg.log_trig_terms(x, 5000, "cos", strict=False)
    assert 0 < n_ok < 5000 and terms.size == n_ok


def test_conventions_differ():
    a = dg.secant_product_report(QUADRATIC_TAUS[0], 6, convention="2tau", precision=300)
    b = dg.secant_product_report(QUADRATIC_TAUS[0], 6, convention="tau", precision=300)
    assert [r.q_k for r in a.rows] != [r.q_k for r in b.rows]


# ---------------------------------------------------------------- Buslaev average


def test_buslaev_golden():
    rows = dg.buslaev_average(GOLDEN, 16, precision=300)
    late = [r for r in rows if r.q_k >= 2]
    avgs = [abs(r.average) for r in late]
    assert all(avgs[i + 1] < avgs[i] for i in range(len(avgs) - 1))
    assert all(abs(r.average) < 0.05 for r in rows if r.q_k >= 233)


def test_buslaev_sqrt2():
    rows = dg.buslaev_average(quad(lambda: mpmath.sqrt(2)), 12, precision=300)
    assert all(abs(r.average) < 0.1 for r in rows if r.q_k >= 169)
    assert any(r.q_k >= 169 for r in rows)


def test_half_angle_identity():
    for beta in (GOLDEN, QUADRATIC_TAUS[0]):
        for r in dg.buslaev_average(beta, 14, precision=300):
            assert r.identity_gap < 1e-10


# ---------------------------------------------------------------- bound audit


def test_audit_sqrt2():
    rows = dg.exponential_bound_audit(quad(lambda: mpmath.sqrt(2)), 500, precision=300)
    assert len(rows) == 500
    assert max(v for _, v in rows) < math.log(3) + 0.5


def test_audit_first_factor():
    a = math.sqrt(3)
    (k, v), = dg.exponential_bound_audit(a, 1)[:1]
    assert k == 1 and v == pytest.approx(-math.log(abs(math.cos(math.pi / a))), rel=1e-13)


def test_audit_pathological_spike():
    pn = dg.build_pathological(2)
    rows = dict(dg.exponential_bound_audit(pn, 10))
    q1 = pn.q[1]
    assert rows[q1] > (q1**2 * math.log(2) - math.log(math.pi)) / q1
