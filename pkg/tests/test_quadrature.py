import math

import numpy as np
import pytest

from logsob.quadrature import golden_section, panel_rule, symmetric_edges, unit_rule


@pytest.mark.parametrize("deg", [0, 5, 17, 31])
def test_panel_rule_exact_for_polynomials(deg):
    x, w = panel_rule([-1.0, 0.3, 2.0])
    assert w @ x ** deg == pytest.approx((2.0 ** (deg + 1) - (-1.0) ** (deg + 1)) / (deg + 1), rel=1e-13)


def test_unit_rule_handles_endpoint_singularity():
    x, w = unit_rule(32)
    assert w @ x ** -0.5 == pytest.approx(2.0, rel=1e-8)
    assert w @ np.log(x) == pytest.approx(-1.0, rel=1e-10)


def test_symmetric_edges_breakpoints():
    e = symmetric_edges(5.0, 8, breakpoints=(1.234, -7.0))
    assert e[0] == -5.0 and e[-1] == 5.0
    assert 1.234 in e and -7.0 not in e
    assert np.all(np.diff(e) > 0)


def test_golden_section():
    x, f = golden_section(lambda t: (t - math.pi) ** 2 + 1.0, 0.0, 10.0)
    assert x == pytest.approx(math.pi, abs=1e-6)
    assert f == pytest.approx(1.0, abs=1e-12)
