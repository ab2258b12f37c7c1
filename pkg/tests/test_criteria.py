import json
import math

import numpy as np
import pytest
from scipy import integrate, optimize, special

from logsob.convex import HFunction, h_weight
from logsob.criteria import (
    bakry_emery,
    barthe_roberto,
    half_line_grid,
    hardy_constant,
    muckenhoupt_poincare,
    perturbation_bound,
)
from logsob.functionals import default_family, estimate_best_constant
from logsob.measure import normalize
from logsob.potential import make_builtin, make_custom


def neg(c):
    return lambda t: -c * np.asarray(t)


def test_half_line_grid():
    g = half_line_grid(10.0, 50, extra=(3.14159, 20.0))
    assert g[0] == 0.0 and g[-1] == 10.0
    assert np.all(np.diff(g) > 0)
    assert 3.14159 in g and 20.0 not in g


def test_hardy_interior_sup():
    # mu = e^{-2x}, nu = e^{-x}: e^{-2x}/2 (e^x - 1), max 1/8 at log 2
    r = hardy_constant(neg(2.0), neg(1.0), log_weights=True)
    assert r.status == "finite"
    assert r.value == pytest.approx(0.125, rel=1e-12)
    assert r.maximizer_x == pytest.approx(math.log(2.0), rel=1e-6)
    assert r.bracket_high == pytest.approx(4 * r.value)


def test_hardy_exponential_sup_at_infinity():
    r = hardy_constant(neg(1.0), neg(1.0), log_weights=True)
    assert r.value == pytest.approx(1.0, rel=1e-9)
    assert r.status == "sup_at_infinity"


def test_hardy_unbounded():
    r = hardy_constant(neg(1.0), neg(2.0), log_weights=True, x_max=60.0)
    assert r.status == "possibly_unbounded"


def test_hardy_zero_plateau():
    def nu(t):
        t = np.asarray(t)
        return np.where((t > 1) & (t < 2), 0.0, 1.0)

    r = hardy_constant(lambda t: np.exp(-np.asarray(t)), nu)
    assert r.status == "infinite" and math.isinf(r.value)
    lo, hi = r.details["nu_zero_interval"]
    assert lo == pytest.approx(1.0, abs=0.01) and hi == pytest.approx(2.0, abs=0.01)


def test_hardy_left_side_mirrors_right():
    left = hardy_constant(lambda t: np.exp(2 * np.asarray(t)), lambda t: np.exp(np.asarray(t)), side="left")
    assert left.value == pytest.approx(0.125, rel=1e-10)
    with pytest.raises(ValueError):
        hardy_constant(neg(1.0), neg(1.0), side="up", log_weights=True)


def test_poincare_exponential():
    r = muckenhoupt_poincare(normalize(make_builtin("power", 1.0)))
    assert r.value == pytest.approx(1.0, rel=1e-9)
    # the Laplace law has Poincare constant 4, the top of the bracket
    assert r.bracket_low <= 4.0 <= r.bracket_high * (1 + 1e-9)


def test_poincare_gaussian_closed_form():
    # mu[x, inf) int_0^x Z e^{t^2} dt = (pi/4) erfc(x) erfi(x)
    ref = optimize.minimize_scalar(lambda x: -math.pi / 4 * special.erfc(x) * special.erfi(x),
                                   bounds=(0.1, 3.0), method="bounded", options={"xatol": 1e-12})
    r = muckenhoupt_poincare(normalize(make_builtin("power", 2.0)))
    assert r.status == "finite"
    assert r.value == pytest.approx(-ref.fun, rel=1e-10)
    assert r.maximizer_x == pytest.approx(ref.x, rel=1e-5)
    # the Gaussian Poincare constant of e^{-x^2} is 1/2
    assert r.bracket_low <= 0.5 <= r.bracket_high


def test_poincare_grid_stability():
    m = normalize(make_builtin("power", 1.5))
    a = muckenhoupt_poincare(m, points=2000).value
    b = muckenhoupt_poincare(m, points=4000).value
    assert abs(a - b) <= 0.01 * b


def random_pl(rng, knots=6, span=6.0):
    xs = np.sort(rng.uniform(-span, span, knots))
    ys = rng.normal(size=knots)
    return xs, ys


def test_poincare_bracket_validity():
    rng = np.random.default_rng(5)
    p = make_builtin("power", 1.5)
    m = normalize(p)
    top = muckenhoupt_poincare(m).bracket_high
    d = lambda x: math.exp(-abs(x) ** 1.5) / m.z_norm  # noqa: E731
    for _ in range(20):
        xs, ys = random_pl(rng)
        f = lambda x: float(np.interp(x, xs, ys))  # noqa: E731
        slopes = np.diff(ys) / np.diff(xs)
        opts = dict(points=list(xs) + [0.0], limit=400)
        mean = integrate.quad(lambda x: f(x) * d(x), -30, 30, **opts)[0]
        var = integrate.quad(lambda x: (f(x) - mean) ** 2 * d(x), -30, 30, **opts)[0]
        energy = sum(s * s * integrate.quad(d, a, b)[0] for s, a, b in zip(slopes, xs[:-1], xs[1:]))
        assert var <= top * energy + 1e-8


@pytest.fixture(scope="module")
def br15():
    p = make_builtin("power", 1.5)
    m = normalize(p)
    return p, m, barthe_roberto(m, 1.0)


def test_barthe_roberto_against_quadrature(br15):
    p, m, r = br15
    z = m.z_norm

    def tail(x):
        return integrate.quad(lambda t: math.exp(-t ** 1.5) / z, x, np.inf, epsabs=0, epsrel=1e-12)[0]

    def inner(x):
        pts = [1.0] if x > 1 else None
        return integrate.quad(lambda t: z * math.exp(t ** 1.5) / float(h_weight(p, 1.0, t)), 0, x,
                              points=pts, epsabs=0, epsrel=1e-12)[0]

    for key, c in (("b_plus", 0.5), ("B_plus", math.e ** 2)):
        def neg_j(x, c=c):
            s = tail(x)
            return -s * math.log1p(c / s) * inner(x)

        ref = optimize.minimize_scalar(neg_j, bounds=(0.3, 4.0), method="bounded", options={"xatol": 1e-10})
        assert r.details[key] == pytest.approx(-ref.fun, rel=1e-7)


def test_barthe_roberto_symmetry_and_bracket(br15):
    _, _, r = br15
    d = r.details
    assert d["b_plus"] == d["b_minus"] and d["B_plus"] == d["B_minus"]
    assert r.status == "finite"
    assert r.bracket_low <= r.value <= r.bracket_high
    assert r.bracket_high == pytest.approx(4 * d["B_plus"])
    assert math.isfinite(d["witness_K"]) and d["witness_K"] > 0


def _tilt_ratio(p, m, t):
    d = lambda x: math.exp(-float(p.phi(x))) / m.z_norm  # noqa: E731
    opts = dict(points=[0.0, -1.0, 1.0], limit=400, epsabs=0)
    mass = integrate.quad(lambda x: math.exp(t * x) * d(x), -40, 40, **opts)[0]
    ent = integrate.quad(lambda x: math.exp(t * x) * t * x * d(x), -40, 40, **opts)[0] - mass * math.log(mass)
    dirichlet = integrate.quad(lambda x: (t / 2) ** 2 * math.exp(t * x) * float(h_weight(p, 1.0, x)) * d(x),
                               -40, 40, **opts)[0]
    return ent / dirichlet


def test_barthe_roberto_validity(br15):
    p, m, r = br15
    ratios = [_tilt_ratio(p, m, t) for t in np.linspace(-3, 3, 13) if t != 0]
    assert max(ratios) <= r.bracket_high + 1e-8
    # tilts already beat the unscaled max(B), which is therefore not an upper bound
    assert max(ratios) > r.details["B_plus"]


def test_barthe_roberto_exponential_finite():
    r = barthe_roberto(normalize(make_builtin("power", 1.0)), 1.0)
    assert r.status == "finite" and math.isfinite(r.value)


def test_barthe_roberto_rejects_zero_phi():
    p = make_custom(lambda x: np.maximum(np.abs(x) - 1.0, 0.0) ** 2,
                    lambda x: 2 * np.sign(x) * np.maximum(np.abs(x) - 1.0, 0.0))
    with pytest.raises(ValueError):
        barthe_roberto(normalize(p), 0.5)


def test_bakry_emery():
    r = bakry_emery(make_builtin("power", 2.0))
    assert r.status == "finite" and r.value == pytest.approx(2.0) and r.bracket_high == pytest.approx(1.0)
    quartic = make_custom(lambda x: x * x + x ** 4, lambda x: 2 * x + 4 * x ** 3, lambda x: 2 + 12 * x * x)
    assert bakry_emery(quartic).value == pytest.approx(2.0)
    flat = bakry_emery(make_builtin("power", 1.5))
    assert flat.status == "not_applicable" and math.isinf(flat.bracket_high)
    with pytest.raises(ValueError):
        bakry_emery(make_custom(lambda x: x * x, lambda x: 2 * x))
    json.dumps(r.to_dict())


def test_perturbation_bound_values():
    assert perturbation_bound(3.0, 0.0) == 3.0
    assert perturbation_bound(1.0, math.log(2.0)) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        perturbation_bound(1.0, -0.1)


def test_perturbation_bound_dominates_perturbed_ratio():
    gauss = normalize(make_builtin("power", 2.0))
    base = estimate_best_constant(gauss, HFunction.quadratic(), default_family(gauss))
    # phi = x^2 - 0.3 cos x is the Gaussian tilted by e^{0.3 cos x}, oscillation 0.6
    p = make_custom(lambda x: x * x - 0.3 * np.cos(x), lambda x: 2 * x + 0.3 * np.sin(x),
                    lambda x: 2 + 0.3 * np.cos(x))
    m = normalize(p)
    pert = estimate_best_constant(m, HFunction.quadratic(), default_family(m))
    assert pert.best_ratio <= perturbation_bound(base, 0.6) * 1.02
