import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logsob.potential import (
    check_hypothesis_H,
    check_shape,
    load_table,
    make_builtin,
    make_custom,
    potential_from_samples,
    scan_hypothesis,
)


def test_power_values_and_derivatives():
    p = make_builtin("power", 1.5)
    x = np.array([-4.0, -1.0, 0.0, 0.5, 9.0])
    assert np.allclose(p.phi(x), np.abs(x) ** 1.5, rtol=1e-14)
    assert np.allclose(p.dphi(x), 1.5 * np.sign(x) * np.abs(x) ** 0.5, rtol=1e-14)
    assert np.allclose(p.d2phi(x[x != 0]), 0.75 * np.abs(x[x != 0]) ** -0.5, rtol=1e-14)


def test_power_log_value():
    p = make_builtin("power-log", 1.5, 1.0)
    x = 3.0
    assert float(p.phi(x)) == pytest.approx(x ** 1.5 * math.log(math.e + x), rel=1e-14)


def test_scale():
    p = make_builtin("power", 2.0, scale=0.5)
    assert float(p.phi(3.0)) == pytest.approx(4.5)
    assert float(p.dphi(3.0)) == pytest.approx(3.0)


@pytest.mark.parametrize("fam,a,b", [("power", 1.0, 0), ("power", 1.5, 0), ("power", 2.0, 0),
                                     ("power-log", 1.5, 1.0), ("power-log", 1.2, 2.0)])
def test_builtin_shapes(fam, a, b):
    p = make_builtin(fam, a, b)
    grid = np.linspace(-20, 20, 4001)
    shape = check_shape(p, grid)
    assert shape["convex"] and shape["symmetric"] and shape["deriv_monotone"]
    assert shape["fd_consistent"] and shape["deriv_nonneg"]


def test_builtin_rejects_bad_parameters():
    with pytest.raises(ValueError):
        make_builtin("power", 0.5)
    with pytest.raises(ValueError):
        make_builtin("power", 1.5, scale=-1.0)
    with pytest.raises(ValueError):
        make_builtin("cubic", 1.5)


def test_truncation():
    p = make_builtin("power", 2.0)
    assert p.truncation() == pytest.approx(math.sqrt(40.0), rel=1e-10)
    assert p.truncation(10.0, start=1.0) == pytest.approx(math.sqrt(11.0), rel=1e-10)


def test_hypothesis_exact_power():
    # x phi'/phi = alpha exactly, so (H) holds iff eps <= min(alpha - 1, 2 - alpha)
    p = make_builtin("power", 1.5)
    rep = check_hypothesis_H(p, 0.5, 1.0)
    assert rep.passed
    assert rep.ratio_min == pytest.approx(1.5) and rep.ratio_max == pytest.approx(1.5)
    assert not check_hypothesis_H(make_builtin("power", 1.0), 0.25, 1.0).passed
    assert not check_hypothesis_H(make_builtin("power", 2.0), 0.25, 1.0).passed


@settings(max_examples=25, deadline=None)
@given(st.floats(1.05, 1.95), st.floats(0.01, 0.5))
def test_hypothesis_power_property(alpha, eps):
    rep = check_hypothesis_H(make_builtin("power", alpha), eps, 1.0, points_per_decade=50)
    margin = min(alpha - 1.0, 2.0 - alpha) - eps
    if abs(margin) > 1e-9:
        assert rep.passed == (margin > 0)


def test_growth_constants():
    p = make_builtin("power", 1.5)
    eps = 0.4
    rep = check_hypothesis_H(p, eps, 2.0)
    # both phi / x^(1/(1-eps)) and phi / x^(2-eps) decrease on [M, X]
    x_max = rep.grid_spec["stop"]
    assert rep.growth_m1 == pytest.approx(x_max ** 1.5 / x_max ** (1 / (1 - eps)), rel=1e-10)
    assert rep.growth_m2 == pytest.approx(2.0 ** 1.5 / 2.0 ** (2 - eps), rel=1e-10)


def test_hypothesis_power_log():
    p = make_builtin("power-log", 1.5, 1.0)
    assert check_hypothesis_H(p, 0.15, 1.0).passed
    assert not check_hypothesis_H(p, 0.5, 1.0).passed


def test_hypothesis_validation():
    p = make_builtin("power", 1.5)
    with pytest.raises(ValueError):
        check_hypothesis_H(p, 0.0, 1.0)
    with pytest.raises(ValueError):
        check_hypothesis_H(p, 0.6, 1.0)
    with pytest.raises(ValueError):
        check_hypothesis_H(p, 0.2, 0.0)


def test_scan_hypothesis():
    pairs = scan_hypothesis(make_builtin("power", 1.3), [0.1, 0.3, 0.5], [1.0, 10.0])
    assert pairs == [(0.1, 1.0), (0.3, 1.0), (0.1, 10.0), (0.3, 10.0)]


def test_custom_potential():
    p = make_custom(lambda x: x * x + np.abs(x) ** 3, lambda x: 2 * x + 3 * x * np.abs(x))
    assert float(p.phi(-2.0)) == 12.0
    with pytest.raises(ValueError):
        p.d2phi(1.0)


def test_table_round_trip(tmp_path):
    xs = np.linspace(0.0, 20.0, 401)
    path = tmp_path / "phi.txt"
    lines = ["# x phi dphi"] + [f"{x:.17g}, {x ** 1.5:.17g}, {1.5 * x ** 0.5:.17g}" for x in xs]
    path.write_text("\n".join(lines) + "\n")
    p = load_table(path)
    ref = make_builtin("power", 1.5)
    x = np.linspace(-19.9, 19.9, 777)
    assert np.allclose(p.phi(x), ref.phi(x), rtol=1e-5, atol=1e-4)  # x^1.5 is not C^2 at 0
    assert np.allclose(p.dphi(x[np.abs(x) > 0.5]), ref.dphi(x[np.abs(x) > 0.5]), rtol=1e-4)
    # extension beyond the last row keeps growing
    assert float(p.phi(40.0)) > float(p.phi(20.0))


def test_table_errors(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("0 0\n1 1\n1 2\n2 4\n")
    with pytest.raises(ValueError):
        load_table(bad)
    short = tmp_path / "short.txt"
    short.write_text("0 0\n1 1\n")
    with pytest.raises(ValueError):
        load_table(short)
    ragged = tmp_path / "ragged.txt"
    ragged.write_text("0 0\n1 1 2\n2 4\n3 9\n")
    with pytest.raises(ValueError):
        load_table(ragged)


def test_samples_without_derivative():
    xs = np.linspace(0, 10, 201)
    p = potential_from_samples(xs, xs ** 2)
    assert float(p.dphi(3.0)) == pytest.approx(6.0, rel=1e-3)
    assert float(p.dphi(-3.0)) == pytest.approx(-6.0, rel=1e-3)
