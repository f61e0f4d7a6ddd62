import math

import numpy as np
import pytest
from scipy import stats

from stablesup import oracle, series
from stablesup.errors import AdmissibilityError, OutOfRange
from stablesup.params import StableParams

SQ2, SQ3 = math.sqrt(2), math.sqrt(3)
N = 1_000_000


def sign_z(x, rho):
    frac = float(np.mean(x > 0))
    return (frac - rho) / math.sqrt(rho * (1 - rho) / x.size)


def cf_worst_z(p, x, zs=(-2.0, -1.0, -0.5, 0.5, 1.0, 2.0)):
    worst = 0.0
    for z in zs:
        e = np.exp(1j * z * x)
        target = np.exp(-p.char_exponent(z))
        for part, ref in ((e.real, target.real), (e.imag, target.imag)):
            worst = max(worst, abs(part.mean() - ref) / (part.std() / math.sqrt(x.size)))
    return worst


def test_skewness_conversion():
    beta, sigma = oracle.skewness(StableParams.create(SQ2, 0.5))
    assert beta == pytest.approx(0.0, abs=1e-15) and sigma == 1.0
    # totally skewed boundary rho = 1/alpha maps to beta = -1 for alpha in (1, 2)
    a = SQ3
    beta, _ = oracle.skewness(StableParams.create(a, 1 / a - 1e-12, doney_tolerance=0))
    assert beta == pytest.approx(-1.0, abs=1e-9)


@pytest.mark.parametrize("alpha,rho", [(SQ2, 0.5), (SQ3, 0.9 / SQ3), (1 / SQ2, 0.3), (1 / SQ3, 0.7)])
def test_sign_probability_and_char_function(alpha, rho):
    p = StableParams.create(alpha, rho)
    x = oracle.sample_increments(p, N, 1.0, seed=101)
    assert abs(sign_z(x, rho)) < 4
    assert cf_worst_z(p, x) < 5


def test_symmetric_sign_mean():
    x = oracle.sample_increments(StableParams.create(SQ2, 0.5), N, 1.0, seed=3)
    s = np.sign(x)
    assert abs(s.mean()) < 4 * s.std() / math.sqrt(N)


def test_self_similarity_ks():
    p = StableParams.create(SQ3, 0.45)
    a = oracle.sample_increments(p, 200_000, 0.25, seed=1)
    b = 0.25 ** (1 / p.alpha) * oracle.sample_increments(p, 200_000, 1.0, seed=2)
    assert stats.ks_2samp(a, b).pvalue > 1e-3


def test_sampler_input_checks():
    with pytest.raises(AdmissibilityError):
        oracle.sample_increments((SQ2, 0.5), 10, 1.0, seed=0)
    with pytest.raises(ValueError):
        oracle.sample_increments(StableParams.create(SQ2, 0.5), 10, 0.0, seed=0)


@pytest.mark.parametrize("kw", [dict(n_steps=50), dict(n_paths=0), dict(estimator="box"),
                                dict(strides=(1, 7)), dict(seed=-1), dict(seed=2**64)])
def test_config_validation(kw):
    base = dict(params=StableParams.create(SQ2, 0.5), n_paths=10, n_steps=1000, seed=0)
    base.update(kw)
    with pytest.raises(ValueError):
        oracle.SimulationConfig(**base)


@pytest.fixture(scope="module")
def small_run():
    p = StableParams.create(SQ2, 0.5)
    cfg = oracle.SimulationConfig(p, 20_000, 1000, seed=42)
    return cfg, oracle.simulate_maxima(cfg)


def test_supremum_monotonicity(small_run):
    _, s = small_run
    assert np.all(s.maxima >= 0)
    assert np.all(s.maxima[:, 0] >= s.terminal)
    # coarser sub-grids see a subset of the same points
    assert np.all(s.maxima[:, 0] >= s.maxima[:, 1]) and np.all(s.maxima[:, 1] >= s.maxima[:, 2])


def test_histogram_normalization(small_run):
    cfg, s = small_run
    est = oracle.estimate_sup_density(cfg, s)
    mass = float(np.sum(est.density * np.diff(est.edges)))
    assert abs(mass + est.tail_mass - 1) < 1e-9
    assert np.all(est.density >= 0)
    full = oracle.SimulationConfig(cfg.params, cfg.n_paths, cfg.n_steps, cfg.seed,
                                   x_range=(0.0, float(s.maxima[:, 0].max()) * 1.0001))
    est_full = oracle.estimate_sup_density(full, s)
    assert est_full.tail_mass == 0
    assert abs(float(np.sum(est_full.density * np.diff(est_full.edges))) - 1) < 1e-9


def test_bias_direction():
    p = StableParams.create(SQ2, 0.5)
    # paired paths: n_steps = 10^4 with the 10^2-step sub-grid of the same walk
    cfg = oracle.SimulationConfig(p, 2000, 10_000, seed=8, strides=(1, 100))
    est = oracle.estimate_sup_density(cfg)
    assert est.mean_supremum[100] < est.mean_supremum[10_000]
    s = oracle.simulate_maxima(cfg)
    assert np.mean(s.maxima[:, 1] < s.maxima[:, 0]) > 0.5


def test_determinism_and_threads():
    p = StableParams.create(SQ2, 0.5)
    cfg = oracle.SimulationConfig(p, 3000, 200, seed=5, chunk_paths=500)
    a = oracle.simulate_maxima(cfg)
    b = oracle.simulate_maxima(cfg)
    c = oracle.simulate_maxima(oracle.SimulationConfig(p, 3000, 200, seed=5, chunk_paths=500,
                                                       threads=3))
    assert np.array_equal(a.maxima, b.maxima) and np.array_equal(a.maxima, c.maxima)
    d = oracle.simulate_maxima(oracle.SimulationConfig(p, 3000, 200, seed=6, chunk_paths=500))
    assert not np.array_equal(a.maxima, d.maxima)


def test_compare_determinism_and_range(small_run):
    cfg, s = small_run
    est = oracle.estimate_sup_density(cfg, s)
    r1 = oracle.compare_with_series(cfg.params, [0.5, 1.0], est)
    r2 = oracle.compare_with_series(cfg.params, [0.5, 1.0], oracle.estimate_sup_density(cfg, s))
    assert r1 == r2
    with pytest.raises(OutOfRange):
        oracle.compare_with_series(cfg.params, [1e3], est)


def test_kde_estimator(small_run):
    cfg, s = small_run
    k = oracle.SimulationConfig(cfg.params, cfg.n_paths, cfg.n_steps, cfg.seed, estimator="kde")
    est = oracle.estimate_sup_density(k, s)
    assert est.edges is None and np.all(est.density >= 0)
    with pytest.raises(OutOfRange):
        est.bin_index(1.0)


def test_mass_split_matches_mc_cdf():
    p = StableParams.create(SQ2, 0.5)
    cfg = oracle.SimulationConfig(p, 100_000, 1000, seed=9)
    s = oracle.simulate_maxima(cfg)
    w = 1 / (10 ** (1 / p.alpha) - 1)
    # per-path Richardson combination of the fine and 10x coarser grid
    y = (1 + w) * (s.maxima[:, 0] <= 1) - w * (s.maxima[:, 1] <= 1)
    f_mc, se = float(y.mean()), float(y.std() / math.sqrt(y.size))
    rep = series.normalization(p)
    assert abs(rep.mass_below_one - f_mc) < 3 * se
    assert rep.mass_below_one + (rep.total - rep.mass_below_one) == pytest.approx(rep.total)


@pytest.mark.slow
def test_low_alpha_kde_agreement():
    p = StableParams.create(1 / SQ2, 0.5)
    cfg = oracle.SimulationConfig(p, 1_000_000, 1000, seed=5, estimator="kde", x_range=(0.0, 10.0))
    est = oracle.estimate_sup_density(cfg)
    i = int(np.argmin(np.abs(est.grid - 3.0)))
    ref = series.density_triangular(p, float(est.grid[i])).value
    assert abs(est.density[i] - ref) / ref < 0.05


@pytest.mark.slow
def test_negative_control_shifted_rho():
    p = StableParams.create(SQ2, 0.5)
    shifted = StableParams.create(SQ2, 0.55)
    cfg = oracle.SimulationConfig(shifted, 200_000, 1000, seed=77)
    rows = oracle.compare_with_series(p, [0.5, 1.0, 2.0], oracle.estimate_sup_density(cfg))
    assert any(abs(r.z) > 5 for r in rows)
    same = oracle.SimulationConfig(p, 200_000, 1000, seed=77)
    rows = oracle.compare_with_series(p, [0.5, 1.0, 2.0], oracle.estimate_sup_density(same))
    assert all(abs(r.z) <= 5 for r in rows)
