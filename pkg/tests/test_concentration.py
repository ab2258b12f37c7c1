import math

import numpy as np
import pytest
from scipy import optimize, special

from logsob.concentration import (
    TailBound,
    empirical_deviation,
    herbst_G,
    herbst_G_prime,
    inner_integral,
    laplace_bound,
    minimize_G,
    tail_bound,
    tensorize,
)
from logsob.convex import HFunction, LegendreEngine, build_H
from logsob.measure import normalize
from logsob.potential import make_builtin

D15 = 6.75


@pytest.fixture(scope="module")
def hf15():
    return build_H(LegendreEngine(make_builtin("power", 1.5)), 1.0)


def closed_I(t):
    # phi*(y) = 4 y^3 / 27 for |x|^1.5
    if t <= 2 * D15:
        return t / 4
    return D15 / 2 + (t * t - 4 * D15 * D15) / 108


def test_d_constant(hf15):
    assert hf15.d_const == pytest.approx(D15, rel=1e-10)


@pytest.mark.parametrize("t", [0.0, 1.0, 13.5, 14.0, 40.0, 500.0, 2e4])
def test_inner_integral_closed_form(hf15, t):
    assert inner_integral(hf15, t) == pytest.approx(closed_I(t), rel=1e-11, abs=1e-14)


def test_inner_integral_quadratic_cost():
    q = HFunction.quadratic()
    for t in (0.5, 10.0, 1e5):
        assert inner_integral(q, t) == pytest.approx(t / 4, rel=1e-15)
    with pytest.raises(ValueError):
        inner_integral(q, -1.0)


def test_G_prime_matches_finite_difference(hf15):
    for t in (3.0, 13.0, 20.0, 100.0):
        h = 1e-5 * t
        fd = (herbst_G(2.0, hf15, t + h, 4.0) - herbst_G(2.0, hf15, t - h, 4.0)) / (2 * h)
        assert herbst_G_prime(2.0, hf15, t, 4.0) == pytest.approx(fd, rel=1e-7)


def test_minimize_G_quadratic():
    # G = A t^2 / 4 - lam t
    for a, lam in ((1.0, 0.5), (3.0, 7.0)):
        t, g = minimize_G(a, HFunction.quadratic(), lam)
        assert t == pytest.approx(2 * lam / a, rel=1e-9)
        assert g == pytest.approx(-lam * lam / a, rel=1e-12)
    assert minimize_G(1.0, HFunction.quadratic(), 0.0) == (0.0, 0.0)


@pytest.mark.parametrize("lam", [5.0, 60.0, 400.0])
def test_minimize_G_closed_form_oracle(hf15, lam):
    a = 2.0

    def g(t):
        return a * t * closed_I(t) - lam * t

    ref = optimize.minimize_scalar(g, bounds=(0.0, 1e4), method="bounded",
                                   options={"xatol": 1e-12})
    t, val = minimize_G(a, hf15, lam)
    assert val == pytest.approx(ref.fun, rel=1e-10)
    assert t == pytest.approx(ref.x, rel=1e-6)


def test_minimize_G_rejects_bad_input(hf15):
    with pytest.raises(ValueError):
        minimize_G(1.0, hf15, -1.0)
    with pytest.raises(ValueError):
        minimize_G(0.0, hf15, 1.0)
    # H = phi*(B x) with B = 1e-3 beyond x = 1 puts the minimizer near t = 2.3e6
    slow = build_H(LegendreEngine(make_builtin("power", 1.5)), 1e-3, d_const=1.0)
    with pytest.raises(ValueError, match="certified"):
        minimize_G(1.0, slow, 100.0)


def test_laplace_bound_is_sharp_for_gaussian():
    # E exp(tX) = exp(t^2/4) under e^{-x^2}/sqrt(pi), whose LSI constant is 1
    m = normalize(make_builtin("power", 2.0))
    for t in (0.5, 1.0, 3.0):
        exact = m.expect(lambda x, t=t: np.exp(t * x))
        assert laplace_bound(1.0, HFunction.quadratic(), t) == pytest.approx(exact, rel=1e-10)


def test_tail_bound_regimes(hf15):
    tb = TailBound(2.0, hf15)
    assert tb.regime_split == pytest.approx(2.0 * D15)
    assert tb.split(n=10, zeta=0.5) == pytest.approx(2.0 * 10 * 0.5 * D15)
    lam = 0.5 * tb.regime_split
    assert tb.regime(lam) == "gaussian"
    assert tb.bound(lam) == pytest.approx(2 * math.exp(-lam * lam / 2.0), rel=1e-10)
    assert tb.regime(3 * tb.regime_split) == "phi"
    rows = tb.table([1.0, 40.0])
    assert rows[0]["capped_bound"] == 1.0 and rows[0]["raw_bound"] > 1.0
    assert rows[1]["capped_bound"] == rows[1]["raw_bound"] < 1.0
    assert tail_bound(2.0, hf15, 40.0) == rows[1]["raw_bound"]


def test_tail_bound_scaling(hf15):
    # n and zeta enter as A -> A n, lam -> lam / zeta
    a = TailBound(2.0, hf15).bound(30.0, n=4, zeta=0.5)
    b = TailBound(8.0, hf15).bound(60.0)
    assert a == pytest.approx(b, rel=1e-14)
    with pytest.raises(ValueError):
        TailBound(2.0, hf15).bound(1.0, n=0)
    with pytest.raises(ValueError):
        TailBound(2.0, hf15).bound(1.0, zeta=0.0)


def test_tail_bound_decreases_in_lam(hf15):
    tb = TailBound(2.0, hf15)
    vals = [tb.log_bound(lam) for lam in np.linspace(1.0, 200.0, 30)]
    assert np.all(np.diff(vals) < 0)


@pytest.fixture(scope="module")
def gauss():
    return normalize(make_builtin("power", 2.0))


def test_empirical_deviation_matches_gaussian_tail(gauss):
    lams = [0.25, 0.5, 1.0]
    rows = empirical_deviation(gauss, lambda x: x, 1, lams, trials=40000, seed=3)
    for r in rows:
        exact = special.erfc(r["lam"])
        assert abs(r["empirical"] - exact) <= 5 * math.sqrt(exact * (1 - exact) / r["trials"])


def test_empirical_deviation_thread_independent(gauss):
    args = (gauss, lambda x: x, 5, [0.1, 0.3], 5000, 11)
    one = empirical_deviation(*args, block=700, threads=1)
    four = empirical_deviation(*args, block=700, threads=4)
    assert one == four
    other = empirical_deviation(*args[:-1], 12, block=700, threads=1)
    assert other != one


def test_empirical_deviation_validation(gauss):
    with pytest.raises(ValueError):
        empirical_deviation(gauss, lambda x: x, 1, [0.1], trials=99, seed=0)
    with pytest.raises(ValueError):
        empirical_deviation(gauss, lambda x: x, 0, [0.1], trials=100, seed=0)


def test_tensorize():
    assert tensorize(1.0, 3.5, 2.0) == 3.5
    with pytest.raises(ValueError):
        tensorize()
    with pytest.raises(ValueError):
        tensorize(1.0, -1.0)
