import math

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad
from scipy.special import erfc, erfcx, gamma, log_ndtr

from logsob.measure import QuadratureError, normalize
from logsob.potential import make_builtin, make_custom


@pytest.fixture(scope="module")
def gauss():
    return normalize(make_builtin("power", 2.0))


@pytest.mark.parametrize("alpha", [1.0, 1.2, 1.5, 2.0, 3.0])
def test_normalization_constant(alpha):
    m = normalize(make_builtin("power", alpha))
    assert m.z_norm == pytest.approx(2.0 * gamma(1.0 + 1.0 / alpha), rel=1e-10)
    assert m.quad["mass_check"] == pytest.approx(1.0, abs=1e-10)
    assert m.quad["truncation_tail_bound"] < 1e-15


def test_power_log_normalization_oracle():
    p = make_builtin("power-log", 1.5, 1.0)
    m = normalize(p)
    z = 2.0 * quad(lambda t: math.exp(-float(p.phi(t))), 0, np.inf, epsabs=0, epsrel=1e-13, limit=200)[0]
    assert m.z_norm == pytest.approx(z, rel=1e-10)


def test_gaussian_tail_and_cdf(gauss):
    x = np.array([-3.0, -0.7, 0.0, 0.4, 2.5, 5.0])
    assert np.allclose(gauss.tail(x), 0.5 * erfc(x), rtol=1e-10, atol=1e-16)
    assert np.allclose(gauss.cdf(x), 0.5 * erfc(-x), rtol=1e-10)
    assert float(gauss.cdf(0.0)) == pytest.approx(0.5, abs=1e-14)


def test_log_tails_far_out(gauss):
    # mu = N(0, 1/2): log P(X >= x) = log_ndtr(-x sqrt 2)
    x = np.array([1.0, 5.0, 10.0, 15.0])
    ref = log_ndtr(-x * math.sqrt(2.0))
    assert np.allclose(gauss.log_tail(x), ref, rtol=1e-10)
    assert np.allclose(gauss.log_lower_tail(-x), ref, rtol=1e-10)
    with pytest.raises(ValueError):
        gauss.log_lower_tail(1.0)


def test_tail_asymptotic_example(gauss):
    # exact ratio sqrt(pi) x exp(x^2) erfc(x)
    r = float(gauss.tail(5.0) / gauss.tail_asymptotic(5.0))
    assert 0.97 <= r <= 1.0
    assert r == pytest.approx(math.sqrt(math.pi) * 5.0 * erfcx(5.0), rel=1e-10)


def test_tail_asymptotic_trend():
    m = normalize(make_builtin("power", 1.5))
    xs = np.array([2.0, 5.0, 10.0, 20.0, 40.0])
    r = m.tail(xs) / m.tail_asymptotic(xs)
    assert np.all(np.diff(np.abs(r - 1.0)) < 0)
    with pytest.raises(ValueError):
        m.tail_asymptotic(0.0)


def test_inverse_cdf_round_trip():
    m = normalize(make_builtin("power", 1.5))
    u = np.array([1e-12, 1e-6, 0.01, 0.3, 0.5, 0.77, 0.999999])
    x = m.inverse_cdf(u)
    assert np.allclose(m.cdf(x), u, rtol=1e-9)
    assert np.all(np.diff(x) > 0)
    for bad in (0.0, 1.0, -0.1, np.nan):
        with pytest.raises(ValueError):
            m.inverse_cdf(bad)


def test_sampling_distribution(gauss):
    xs = gauss.sample(20000, seed=3)
    assert stats.kstest(xs, stats.norm(scale=math.sqrt(0.5)).cdf).pvalue > 1e-3
    assert np.array_equal(xs, gauss.sample(20000, seed=3))
    assert not np.array_equal(xs, gauss.sample(20000, seed=4))


@pytest.mark.parametrize("alpha", [1.0, 1.5, 2.5])
def test_expectations(alpha):
    m = normalize(make_builtin("power", alpha))
    ex2 = gamma(3.0 / alpha) / gamma(1.0 / alpha)
    assert m.expect(lambda x: x * x) == pytest.approx(ex2, rel=1e-9)
    assert m.expect(np.abs) == pytest.approx(gamma(2.0 / alpha) / gamma(1.0 / alpha), rel=1e-9)
    assert m.expect(lambda x: np.maximum(x - 1.0, 0.0), breakpoints=(1.0,)) == pytest.approx(
        quad(lambda t: (t - 1.0) * math.exp(-t ** alpha), 1.0, np.inf, epsrel=1e-12)[0] / m.z_norm, rel=1e-8)


def test_expect_rejects_nonfinite(gauss):
    with pytest.raises(QuadratureError), np.errstate(divide="ignore"):
        gauss.expect(lambda x: 1.0 / np.where(x > 0, 0.0, 1.0))


def test_nonintegrable_and_asymmetric():
    with pytest.raises(ValueError):
        normalize(make_custom(lambda x: 0.0 * x, lambda x: 0.0 * x))
    p = make_builtin("power", 2.0)
    object.__setattr__(p, "symmetric", False)
    with pytest.raises(ValueError):
        normalize(p)


def test_summary_keys(gauss):
    s = gauss.summary()
    assert s["cdf_at_zero"] == pytest.approx(0.5)
    assert set(s) >= {"z_norm", "trunc", "quad", "mass_check", "potential"}
