import numpy as np
import pytest
from scipy.integrate import quad

from cavitymatch import DegreeLaw, Empirical, Exponential, Uniform


def test_delta2_generating_functions():
    law = DegreeLaw.delta(2)
    xs = np.linspace(0, 1, 11)
    assert np.allclose(law.phi(xs), xs**2)
    assert np.allclose(law.phi_hat(xs), xs)
    assert law.mean == 2.0


def test_poisson_phi_hat_equals_phi():
    law = DegreeLaw.poisson(2.0)
    xs = np.linspace(0, 1, 11)
    assert np.allclose(law.phi_hat(xs), np.exp(2.0 * (xs - 1)))
    assert np.allclose(law.phi(xs), law.phi_hat(xs))


@pytest.mark.parametrize(
    "law",
    [DegreeLaw.delta(1), DegreeLaw.delta(2), DegreeLaw.poisson(0.8),
     DegreeLaw.from_pmf([0.1, 0.3, 0.4, 0.2])],
)
def test_phi_hat_is_a_pgf(law):
    xs = np.linspace(0, 1, 41)
    vals = np.asarray(law.phi_hat(xs))
    assert abs(float(law.phi_hat(1.0)) - 1.0) <= 1e-12
    assert np.all(vals >= -1e-12) and np.all(vals <= 1 + 1e-12)
    assert np.all(np.diff(vals) >= -1e-12)


def test_offspring_pmf_delta2_forces_single_child():
    pmf = DegreeLaw.delta(2).offspring_pmf()
    assert np.allclose(pmf, [0.0, 1.0])


def test_offspring_pmf_matches_phi_hat_coefficients():
    law = DegreeLaw.from_pmf([0.1, 0.3, 0.4, 0.2])
    pmf = law.offspring_pmf()
    assert abs(pmf.sum() - 1.0) <= 1e-12
    # phi_hat coefficients are exactly the offspring pmf
    xs = np.linspace(0, 1, 7)
    assert np.allclose(np.polynomial.polynomial.polyval(xs, pmf), law.phi_hat(xs))


def test_poisson_offspring_is_same_poisson():
    law = DegreeLaw.poisson(1.5)
    pmf = law.offspring_pmf()
    k = np.arange(pmf.size)
    import math as _m
    expected = np.exp(-1.5) * 1.5**k / np.array([_m.factorial(i) for i in k])
    assert np.allclose(pmf, expected, atol=1e-12)
    assert 1.0 - pmf.sum() < 1e-12


def test_pmf_validation():
    with pytest.raises(ValueError):
        DegreeLaw.from_pmf([0.5, 0.6])
    with pytest.raises(ValueError):
        DegreeLaw.from_pmf([-0.1, 1.1])
    with pytest.raises(ValueError):
        DegreeLaw.from_pmf([1.0])  # mean 0
    with pytest.raises(ValueError):
        DegreeLaw(pmf=(1.0,), poisson_rate=1.0)


def test_degree_sampling_matches_pmf(rng):
    law = DegreeLaw.from_pmf([0.2, 0.5, 0.3])
    draws = law.sample_degrees(rng, 50_000)
    freq = np.bincount(draws, minlength=3) / draws.size
    assert np.allclose(freq, [0.2, 0.5, 0.3], atol=0.02)


@pytest.mark.parametrize("law", [Exponential(1.0), Exponential(2.5), Uniform(0, 1), Uniform(-1, 3)])
def test_weight_law_cdf_quantile_roundtrip(law):
    qs = np.linspace(0.01, 0.99, 25)
    assert np.allclose(law.cdf(law.quantile(qs)), qs, atol=1e-9)
    ts = np.linspace(law.quantile(0.001), law.quantile(0.999), 50)
    vals = np.asarray(law.cdf(ts))
    assert np.all(np.diff(vals) >= 0)
    assert float(law.cdf(-1e12)) == 0.0 and abs(float(law.cdf(1e12)) - 1.0) <= 1e-12


@pytest.mark.parametrize("law", [Exponential(1.0), Exponential(0.5), Uniform(0, 1), Uniform(-1, 3)])
def test_mean_above_matches_quadrature(law):
    for s in (-1.0, 0.0, 0.3, 1.7):
        lo = min(s, law.quantile(1e-12)) if isinstance(law, Uniform) else max(s, 0.0)
        if isinstance(law, Uniform):
            val, _ = quad(lambda t: t / (law.b - law.a), min(max(s, law.a), law.b), law.b)
        else:
            val, _ = quad(lambda t: t * law.rate * np.exp(-law.rate * t), max(s, 0.0), np.inf)
        assert abs(float(law.mean_above(s)) - val) <= 1e-8


def test_weight_sampling_matches_cdf(rng):
    law = Exponential(1.0)
    xs = np.sort(law.sample(rng, 200_000))
    # Kolmogorov-style check at a few quantiles
    for q in (0.1, 0.5, 0.9):
        emp = np.searchsorted(xs, law.quantile(q)) / xs.size
        assert abs(emp - q) < 0.01


def test_empirical_law_interpolates_and_rejects_ties(rng):
    samples = np.sort(rng.exponential(size=500))
    law = Empirical(samples)
    ts = np.linspace(0, samples[-1], 100)
    vals = np.asarray(law.cdf(ts))
    assert np.all(np.diff(vals) >= 0)
    assert abs(law.mean() - samples.mean()) <= 1e-9
    with pytest.raises(ValueError):
        Empirical([1.0, 1.0, 2.0])
