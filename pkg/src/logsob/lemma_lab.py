"""Grid verification of the auxiliary inequalities behind the modified LSI.

Each ``verify_*`` turns an existential statement ("there is a constant C
such that ...") into a bounded search on an explicit grid and returns a
:class:`LemmaVerdict` with the constants found, the closed-form candidates
they are compared with, and the grid points (if any) where no constant
below ``cap`` works.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import xlogy

from .convex import (LegendreEngine, conjugate_inverse_log_slope, find_A_lambda, h_weight, k_weight,
                     psi, tau, tau2)
from .potential import HypothesisReport, Potential

SLACK = 1e-9
DEFAULT_CAP = 1e6


@dataclass
class LemmaVerdict:
    lemma: str
    grid_spec: dict
    found_constants: dict
    violation_points: list
    passed: bool
    candidates: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"lemma": self.lemma, "grid_spec": self.grid_spec,
                "found_constants": self.found_constants, "candidates": self.candidates,
                "violation_points": self.violation_points, "passed": self.passed,
                "details": self.details}


def _require_h(rep: HypothesisReport):
    if not rep.passed:
        raise ValueError(f"hypothesis (H) not satisfied for eps={rep.epsilon}, M={rep.big_m}: {rep.reason}")


def _witnesses(x, bad, limit: int = 10):
    return [float(v) for v in np.asarray(x)[bad][:limit]]


def _smallest_constant(ratio, cap):
    """``max(ratio)`` with the slack of the verdict contract, or ``None`` above ``cap``."""
    c = float(np.max(ratio)) * (1.0 + SLACK)
    return c if c <= cap else None


def lem_av_grid(p: Potential, rep: HypothesisReport, points: int = 2000):
    """Dual variables ``y = phi'(x)`` for ``x`` log-spaced on ``[M, max(X, 100 M)]``."""
    x_top = max(p.truncation(start=rep.big_m), 100.0 * rep.big_m)
    xs = np.geomspace(rep.big_m, x_top, points)
    return p.dphi(xs), {"kind": "geometric in phi'^-1", "start": rep.big_m, "stop": float(x_top),
                        "points": points}


def verify_lem_av(p: Potential, rep: HypothesisReport, cap: float = DEFAULT_CAP,
                  points: int = 2000) -> LemmaVerdict:
    """``x^2 <= C phi*(x)``; ``eps phi(phi'^-1) <= phi* <= (1-eps) phi(phi'^-1)``;
    ``phi'^-1/C <= phi*(x)/x <= C phi'^-1`` for ``x >= phi'(M)``."""
    _require_h(rep)
    eps = rep.epsilon
    eng = LegendreEngine(p)
    y, spec = lem_av_grid(p, rep, points)
    xy = eng.invert_derivative(y)
    conj = eng.legendre(y)
    phi_xy = p.phi(xy)
    violations = []

    r1 = y * y / conj
    c1 = _smallest_constant(r1, cap)
    if c1 is None:
        violations += _witnesses(y, r1 > cap)
    lo_ok = eps * phi_xy <= conj + SLACK * np.abs(conj)
    hi_ok = conj <= (1 - eps) * phi_xy + SLACK * np.abs(conj)
    violations += _witnesses(y, ~(lo_ok & hi_ok))
    r3 = (conj / y) / xy
    r3c = np.maximum(r3, 1.0 / r3)
    c3 = _smallest_constant(r3c, cap)
    if c3 is None:
        violations += _witnesses(y, r3c > cap)

    y0 = float(y[0])
    m2 = rep.growth_m2
    cand1 = (2 - eps) / eps * ((2 - eps) * m2) ** (1 / (1 - eps)) * y0 ** (-eps / (1 - eps))
    cand3 = (1 + eps) / eps
    ratio_star = conj / phi_xy
    return LemmaVerdict(
        "lem_av", spec,
        {"C_lem1": c1, "C_lem3": c3},
        violations, not violations,
        {"C_lem1": cand1, "C_lem3": cand3},
        {"threshold": y0, "eps": eps,
         "star_ratio_min": float(ratio_star.min()), "star_ratio_max": float(ratio_star.max()),
         "star_margin_low": float(np.min(ratio_star - eps)),
         "star_margin_high": float(np.min((1 - eps) - ratio_star))})


def _xlog2(x):
    """``x^2 log x^2`` with ``0 log 0 = 0``."""
    return xlogy(x * x, x * x)


def scalar_decomposition_gap(x, a_const: float, shift: float):
    """RHS - LHS of ``x^2 log x^2 <= a (x-1)^2 + x^2 - 1 + (x-shift)_+^2 log (x-shift)_+^2``."""
    x = np.asarray(x, float)
    pos = np.maximum(x - shift, 0.0)
    return a_const * (x - 1) ** 2 + x * x - 1 + _xlog2(pos) - _xlog2(x)


def verify_scalar_decomposition(variant: str = "two", shift: Optional[float] = None,
                                grid=None, a_max: int = 10 ** 6) -> LemmaVerdict:
    """``variant="two"``: constant 5 and shift 2.  ``variant="A_lambda"``: ``shift``
    is ``A_lambda >= 2``; the smallest integer ``A <= a_max`` is searched for the
    shift ``sqrt(A_lambda)``."""
    if grid is None:
        grid = np.union1d(np.linspace(0.0, 1e3, 200001), np.geomspace(1e-6, 1e3, 20001))
    grid = np.asarray(grid, float)
    spec = {"kind": "linear+geometric", "start": float(grid.min()), "stop": float(grid.max()),
            "points": int(grid.size)}
    if variant == "two":
        gap = scalar_decomposition_gap(grid, 5.0, 2.0)
        scale = 1.0 + np.abs(_xlog2(grid))
        bad = gap < -SLACK * scale
        return LemmaVerdict("scalar_two", spec, {"A": 5.0, "shift": 2.0}, _witnesses(grid, bad),
                            not np.any(bad), {"A": 5.0},
                            {"min_gap": float(np.min(gap))})
    if variant != "A_lambda":
        raise ValueError("variant must be 'two' or 'A_lambda'")
    if shift is None or shift < 2:
        raise ValueError("A_lambda variant needs shift = A_lambda >= 2")
    s = math.sqrt(shift)
    base = scalar_decomposition_gap(grid, 0.0, s)
    w = (grid - 1) ** 2
    need = np.where(w > 0, -base / np.where(w > 0, w, 1.0), 0.0)
    at_one = (w == 0) & (base < -SLACK)
    a_req = float(np.max(need))
    a_int = max(0, int(math.ceil(a_req - 1e-12)))
    ok = a_int <= a_max and not np.any(at_one)
    if ok:
        gap = scalar_decomposition_gap(grid, float(a_int), s)
        bad = gap < -SLACK * (1.0 + np.abs(_xlog2(grid)))
        ok = not np.any(bad)
    else:
        bad = need > a_max
    return LemmaVerdict("scalar_A_lambda", spec, {"A": float(a_int) if ok else None, "shift": s},
                        [] if ok else _witnesses(grid, bad), ok, {},
                        {"A_required": a_req, "A_lambda": shift})


def _golden_max(fun, a, b, iters: int = 80):
    """Vectorised golden-section maximisation of ``fun`` on ``[a, b]``."""
    r = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - r * (b - a), a + r * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c_new = np.where(left, b - r * (b - a), d)
        d_new = np.where(left, c, a + r * (b - a))
        c, d = c_new, d_new
        fc, fd = fun(c), fun(d)
    return np.maximum(fc, fd)


def tau_conjugate(t, s, y_table):
    """``sup_y {s y - t(y)}`` from the tabulation ``y_table``, polished by golden
    section around the grid argmax.  Returns values and an ``interior`` mask
    (false where the argmax sits at the end of the table)."""
    s = np.asarray(s, float)
    tv = t(y_table)
    vals = s[:, None] * y_table[None, :] - tv[None, :]
    k = np.argmax(vals, axis=1)
    interior = k < len(y_table) - 1
    lo = y_table[np.maximum(k - 1, 0)]
    hi = y_table[np.minimum(k + 1, len(y_table) - 1)]
    grid_sup = vals[np.arange(len(s)), k]
    polished = _golden_max(lambda y: s * y - t(y), lo, hi)
    return np.maximum(grid_sup, polished), interior


def verify_legendre_tau(p: Potential, c_h: float, rep: HypothesisReport, c_lem1: Optional[float] = None,
                        cap: float = DEFAULT_CAP, table_points: int = 4096,
                        x_points: int = 400) -> LemmaVerdict:
    """``tau*(x^2) <= A phi*(C x)`` for ``x >= D`` and ``<= B x^2`` for ``x <= D``.

    ``C`` and ``D`` are fixed at their closed-form values; ``A`` and ``B``
    are the smallest constants working on the grid.
    """
    _require_h(rep)
    eps, big_m = rep.epsilon, rep.big_m
    t = tau(p, c_h, big_m)
    eng = LegendreEngine(p)
    m = t.m
    y_top = float(h_weight(p, big_m, 1e4 * big_m))
    y_table = np.linspace(0.0, y_top, table_points)
    if c_lem1 is None:
        c_lem1 = verify_lem_av(p, rep).found_constants["C_lem1"]
    c_const = max(1.0, math.sqrt(8 * c_h * (1 - eps) * (2 - eps)))
    d_const = max(math.sqrt(t.right_slope_at_m()), float(p.dphi(big_m)))
    k_const = (2 - eps) ** 2 / (8 * c_h * eps ** 2 * (1 + eps))
    a_cand = k_const + m * c_lem1
    b_cand = a_cand * float(eng.legendre(c_const * d_const)) / d_const ** 2

    # largest x whose conjugation argmax stays inside the table
    slope_top = (t(y_top) - t(y_top * (1 - 1e-6))) / (y_top * 1e-6)
    x_top = math.sqrt(slope_top) * 0.5
    xs = np.union1d(np.geomspace(1e-3 * d_const, x_top, x_points), [d_const])
    conj, interior = tau_conjugate(t, xs * xs, y_table)
    xs, conj = xs[interior], conj[interior]
    big = xs >= d_const
    ratio_a = conj[big] / eng.legendre(c_const * xs[big])
    ratio_b = conj[~big] / (xs[~big] ** 2)
    a_found = _smallest_constant(ratio_a, cap) if ratio_a.size else 0.0
    b_found = _smallest_constant(ratio_b, cap) if ratio_b.size else 0.0
    violations = []
    if a_found is None:
        violations += _witnesses(xs[big], ratio_a > cap)
    if b_found is None:
        violations += _witnesses(xs[~big], ratio_b > cap)
    spec = {"tau_table": {"kind": "linear", "start": 0.0, "stop": y_top, "points": table_points},
            "x": {"kind": "geometric", "start": float(xs.min()), "stop": float(xs.max()),
                  "points": int(xs.size)}}
    step = y_top / (table_points - 1)
    return LemmaVerdict(
        "lem_legen", spec,
        {"A": a_found, "B": b_found, "C": c_const, "D": d_const},
        violations, not violations,
        {"A": a_cand, "B": b_cand, "C": c_const, "D": d_const},
        {"tau_star_at_0": float(tau_conjugate(t, np.array([0.0]), y_table)[0][0]),
         "table_step": step, "m": m, "c_h": c_h,
         "grid_sup_error_bound": float(xs.max() ** 2 * step)})


def verify_tau2(p: Potential, lam: float, eps: float, a_lambda: float, cap: float = 1e3,
                big_m: float = 1.0, x_hi: float = 1e8, points: int = 2000,
                candidates: int = 2001) -> LemmaVerdict:
    """Smallest ``u0`` on a log grid in ``(0, cap]`` with
    ``tau2(K(x)^2 / u0) <= log(x^2) / 2`` for all grid ``x >= A_lambda``."""
    t2 = tau2(p, lam, eps, big_m)
    eng = LegendreEngine(p)
    xs = np.geomspace(a_lambda, x_hi, points)
    k2 = k_weight(eng, lam, xs) ** 2
    rhs = np.log(xs)  # log(x^2) / 2
    u_grid = np.geomspace(cap * 1e-12, cap, candidates)

    def ok(u):
        return bool(np.all(t2(k2 / u) <= rhs + SLACK * np.maximum(rhs, 1.0)))

    kappa = 2 * lam / (1 - eps)
    cand = 1.0 / ((1 + eps) ** 2 * kappa)
    spec = {"kind": "geometric", "start": a_lambda, "stop": x_hi, "points": points,
            "u0_grid": {"kind": "geometric", "start": float(u_grid[0]), "stop": cap, "points": candidates}}
    worst = int(np.argmax(k2))
    details = {"x_at_max_K2": float(xs[worst]), "max_K2": float(k2[worst]), "kappa": kappa}
    if not ok(u_grid[-1]):
        bad = t2(k2 / cap) > rhs + SLACK * np.maximum(rhs, 1.0)
        return LemmaVerdict("lem_tau2", spec, {"u0": None}, _witnesses(xs, bad), False, {"u0": cand}, details)
    lo, hi = -1, len(u_grid) - 1     # ok(u_grid[hi]) holds; tau2 increasing makes ok monotone in u
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(u_grid[mid]):
            hi = mid
        else:
            lo = mid
    u0 = float(u_grid[hi])
    # the binding point under the found u0
    slack = rhs - t2(k2 / u0)
    details["binding_x"] = float(xs[int(np.argmin(slack))])
    return LemmaVerdict("lem_tau2", spec, {"u0": u0}, [], True, {"u0": cand}, details)


def verify_psi_shape(p: Potential, lam: float, x_hi: float = 1e8, points: int = 4000) -> LemmaVerdict:
    """``psi`` positive, increasing, concave beyond ``A_lambda``, ``psi(A_lambda) >= 1``,
    and ``g'/g`` (``g = (phi*)^-1``) decreasing over the last decade."""
    eng = LegendreEngine(p)
    a_lam = find_A_lambda(eng, lam, x_hi=x_hi, points=points)
    grid = np.geomspace(a_lam, x_hi, points)
    vals = psi(eng, lam, grid)
    d1 = np.diff(vals)
    slope = d1 / np.diff(grid)
    d2 = np.diff(slope)
    checks = {
        "positive": bool(np.all(vals > 0)),
        "increasing": bool(np.all(d1 > 0)),
        "concave": bool(np.all(d2 <= 1e-12 * np.maximum(1.0, np.abs(slope[:-1])))),
        "psi_at_A_ge_1": bool(float(psi(eng, lam, a_lam)) >= 1 - 1e-9),
    }
    z_end = lam * math.log(x_hi)
    zs = np.geomspace(z_end / 10.0, z_end, 64)
    ratio = conjugate_inverse_log_slope(eng, zs)
    fit = float(np.polyfit(np.log(zs), np.log(ratio), 1)[0])
    checks["log_slope_decreasing"] = bool(ratio[-1] < ratio[0] and fit < 0)
    bad = [k for k, v in checks.items() if not v]
    spec = {"kind": "geometric", "start": a_lam, "stop": x_hi, "points": points}
    return LemmaVerdict("lem_con", spec, {"A_lambda": a_lam}, [], not bad, {},
                        {"checks": checks, "failed_checks": bad, "psi_at_A": float(psi(eng, lam, a_lam)),
                         "max_second_difference": float(np.max(d2)),
                         "log_slope_fit": fit, "log_slope_last": float(ratio[-1])})


def run_battery(p: Potential, rep: HypothesisReport, c_h: float, lam: float = 1.0,
                cap: float = DEFAULT_CAP) -> list:
    """All verdicts for one potential, in a fixed order."""
    _require_h(rep)
    av = verify_lem_av(p, rep, cap)
    out = [av, verify_scalar_decomposition("two")]
    eng = LegendreEngine(p)
    a_lam = find_A_lambda(eng, lam)
    out.append(verify_scalar_decomposition("A_lambda", max(2.0, a_lam)))
    out.append(verify_legendre_tau(p, c_h, rep, av.found_constants["C_lem1"], cap))
    out.append(verify_tau2(p, lam, rep.epsilon, a_lam, min(cap, 1e3), rep.big_m))
    out.append(verify_psi_shape(p, lam))
    return out
