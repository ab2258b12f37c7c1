"""Convex duality on the half line: derivative inversion, the Legendre
transform ``phi*``, the weight ``h``, the cost function ``H`` and the
auxiliary functions built from them (``tau``, ``tau2``, ``psi``, ``K``).

All root finding is bracket expansion followed by bisection, vectorised over
numpy arrays.  Monotonicity makes bisection unconditionally safe; flat
stretches of an increasing map resolve to their leftmost point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .potential import Potential

HUGE = 1e300


def bisect_increasing(fun: Callable, target, lo=0.0, hi=1.0, growth: float = 2.0,
                      max_iter: int = 2000):
    """Leftmost ``x >= lo`` with ``fun(x) >= target`` for nondecreasing ``fun``.

    Works elementwise on arrays.  Targets that are never reached (``fun``
    bounded below them up to ``1e300``) give ``inf``; targets already met at
    ``lo`` give ``lo``.
    """
    target = np.atleast_1d(np.asarray(target, float))
    lo = np.broadcast_to(np.asarray(lo, float), target.shape).copy()
    hi = np.maximum(np.broadcast_to(np.asarray(hi, float), target.shape).copy(), lo)
    hi = np.where(hi > lo, hi, lo + 1.0)
    done_at_lo = fun(lo) >= target
    # expand until the bracket straddles the target
    need = ~done_at_lo & (fun(hi) < target)
    while np.any(need):
        hi = np.where(need, lo + growth * (hi - lo), hi)
        lost = need & (hi > HUGE)
        hi = np.where(lost, np.inf, hi)
        need = need & ~lost
        if np.any(need):
            idx = np.flatnonzero(need)
            need[idx] = fun(hi[idx]) < target[idx]
    active = ~done_at_lo & np.isfinite(hi)
    a, b = lo.copy(), hi.copy()
    for _ in range(max_iter):
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        mid = 0.5 * (a[idx] + b[idx])
        up = fun(mid) >= target[idx]
        b[idx] = np.where(up, mid, b[idx])
        a[idx] = np.where(up, a[idx], mid)
        width = b[idx] - a[idx]
        conv = (width <= 4 * np.finfo(float).eps * np.abs(b[idx])) | (b[idx] <= 1e-290)
        active[idx[conv]] = False
    out = np.where(done_at_lo, lo, b)
    out = np.where(np.isinf(hi), np.inf, out)
    return out


@dataclass(frozen=True)
class LegendreEngine:
    """Numerical Legendre transform of a symmetric convex potential.

    Stateless apart from its configuration, so safe to share between threads.
    """

    potential: Potential
    bracket_growth: float = 2.0
    tol: float = 1e-10

    def invert_derivative(self, y):
        """``(phi')^{-1}(y)`` for ``y >= 0``: leftmost ``x >= 0`` with ``phi'(x) >= y``.

        Values of ``y`` not exceeding ``phi'(0+)`` map to 0.
        """
        y = np.asarray(y, float)
        if not np.all(np.isfinite(y)):
            raise ValueError("invert_derivative needs finite y")
        if np.any(y < 0):
            raise ValueError("invert_derivative needs y >= 0")
        p = self.potential
        out = bisect_increasing(p.deriv, y, 0.0, 1.0, self.bracket_growth)
        out = np.where(out <= 1e-290, 0.0, out)
        return out.reshape(y.shape) if y.shape else float(out[0])

    def legendre(self, y):
        """``phi*(y) = sup_x (x y - phi(x))``; even because ``phi`` is."""
        y = np.asarray(y, float)
        if not np.all(np.isfinite(y)):
            raise ValueError("legendre needs finite y")
        ay = np.abs(y)
        x = np.atleast_1d(self.invert_derivative(ay))
        ay1 = np.atleast_1d(ay)
        with np.errstate(invalid="ignore"):
            val = np.where(np.isfinite(x), ay1 * x - self.potential.phi(np.where(np.isfinite(x), x, 0.0)), np.inf)
        val = np.maximum(val, -float(self.potential.phi(0.0)))
        return val.reshape(y.shape) if y.shape else float(val[0])

    __call__ = legendre

    def conjugate_inverse(self, z):
        """``(phi*)^{-1}(z)`` on ``[0, inf)``; ``nan`` where ``z < phi*(0)``."""
        z = np.asarray(z, float)
        z1 = np.atleast_1d(z)
        floor = float(self.legendre(0.0))
        ok = z1 >= floor
        out = np.full(z1.shape, np.nan)
        if np.any(ok):
            out[ok] = bisect_increasing(self.legendre, z1[ok], 0.0, 1.0, self.bracket_growth)
        return out.reshape(z.shape) if z.shape else float(out[0])


@dataclass(frozen=True)
class HFunction:
    """``H(x) = x**2`` for ``|x| <= D`` and ``phi*(B |x|)`` beyond.

    ``d_const = inf`` is the purely quadratic cost.
    """

    b_const: float
    d_const: float
    engine: Optional[LegendreEngine] = field(default=None, repr=False)
    discontinuous: bool = False
    degenerate: bool = False

    @classmethod
    def quadratic(cls) -> "HFunction":
        return cls(1.0, math.inf, None, False, True)

    def __call__(self, x):
        x = np.asarray(x, float)
        ax = np.abs(np.atleast_1d(x))
        out = ax * ax
        if not math.isinf(self.d_const):
            far = ax > self.d_const
            if np.any(far):
                out[far] = self.engine.legendre(self.b_const * ax[far])
        return out.reshape(x.shape) if x.shape else float(out[0])

    def describe(self) -> dict:
        return {"b_const": self.b_const, "d_const": self.d_const,
                "discontinuous": self.discontinuous, "degenerate": self.degenerate}


def build_H(engine: LegendreEngine, b_const: float, d_const: Optional[float] = None,
            d_min: float = 1e-6, d_max: float = 1e6, points: int = 1200) -> HFunction:
    """Cost function with constant ``B``; ``D`` solves ``phi*(B D) = D**2``.

    If no positive solution exists on ``[d_min, d_max]`` the best match is
    used and the function is flagged discontinuous.  When ``phi*(B x) = x**2``
    identically the result is the quadratic cost, flagged degenerate.
    """
    if not b_const > 0:
        raise ValueError("B must be positive")
    if d_const is not None:
        gap = abs(float(engine.legendre(b_const * d_const)) - d_const ** 2)
        return HFunction(b_const, float(d_const), engine, gap > 1e-9 * (1 + d_const ** 2))
    ds = np.geomspace(d_min, d_max, points)
    rel = (engine.legendre(b_const * ds) - ds ** 2) / ds ** 2
    if np.all(np.abs(rel) <= 1e-9):
        return HFunction(b_const, math.inf, engine, False, True)
    sgn = np.sign(rel)
    change = np.flatnonzero(sgn[:-1] * sgn[1:] < 0)
    if change.size:
        i = int(change[0])
        f = lambda d: float(engine.legendre(b_const * d)) - d * d  # noqa: E731
        d = brentq(f, ds[i], ds[i + 1], xtol=1e-14, rtol=1e-14)
        return HFunction(b_const, float(d), engine)
    zero = np.flatnonzero(rel == 0)
    if zero.size:
        return HFunction(b_const, float(ds[zero[0]]), engine)
    i = int(np.argmin(np.abs(rel)))
    return HFunction(b_const, float(ds[i]), engine, True)


def h_weight(p: Potential, big_m: float, x):
    """``1`` on ``|x| < M`` and ``x**2 / phi(x)`` on ``|x| >= M``."""
    x = np.asarray(x, float)
    ax = np.abs(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(ax >= big_m, ax * ax / p.phi(np.maximum(ax, big_m)), 1.0)
    return out if out.shape else float(out)


def h_inverse(p: Potential, big_m: float, y):
    """Inverse of ``h`` on ``[M, inf)``; ``inf`` beyond the range of ``h``."""
    y = np.asarray(y, float)
    out = bisect_increasing(lambda x: x * x / p.phi(x), y, big_m, 2.0 * big_m)
    return out.reshape(y.shape) if y.shape else float(out[0])


def _check_h_increasing(p: Potential, big_m: float):
    if float(p.phi(big_m)) <= 0:
        raise ValueError("phi(M) must be positive")
    grid = np.geomspace(big_m, 1e4 * big_m, 2000)
    h = grid ** 2 / p.phi(grid)
    if np.any(np.diff(h) < -1e-12 * np.abs(h[1:])):
        raise ValueError("h is not increasing on [M, inf)")


@dataclass(frozen=True)
class Tau:
    """``tau`` (``scale = 1/(8 C_h)``) or ``tau2`` (``scale = (1-eps)/(2 lambda)``):
    linear on ``[0, m]``, ``scale * phi(h^{-1}(x))`` beyond, ``m = h(M)``."""

    potential: Potential
    big_m: float
    scale: float

    def __post_init__(self):
        _check_h_increasing(self.potential, self.big_m)

    @property
    def m(self) -> float:
        return float(h_weight(self.potential, self.big_m, self.big_m))

    def __call__(self, x):
        x = np.asarray(x, float)
        if np.any(x < 0):
            raise ValueError("tau is defined on [0, inf)")
        m = self.m
        phi_m = float(self.potential.phi(self.big_m))
        x1 = np.atleast_1d(x)
        out = x1 * phi_m * self.scale / m
        far = x1 >= m
        if np.any(far):
            inv = np.atleast_1d(h_inverse(self.potential, self.big_m, x1[far]))
            with np.errstate(invalid="ignore"):
                vals = np.where(np.isfinite(inv), self.scale * self.potential.phi(np.where(np.isfinite(inv), inv, 0.0)), np.inf)
            out[far] = vals
        return out.reshape(x.shape) if x.shape else float(out[0])

    def right_slope_at_m(self) -> float:
        """``tau'(m+)``, from ``phi'(M) / h'(M)``."""
        p, M = self.potential, self.big_m
        phi, dphi = float(p.phi(M)), float(p.dphi(M))
        dh = M * (2.0 * phi - M * dphi) / phi ** 2
        return self.scale * dphi / dh if dh > 0 else math.inf


def tau(p: Potential, c_h: float, big_m: float = 1.0) -> Tau:
    if not c_h > 0:
        raise ValueError("C_h must be positive")
    return Tau(p, big_m, 1.0 / (8.0 * c_h))


def tau2(p: Potential, lam: float, eps: float, big_m: float = 1.0) -> Tau:
    if not lam > 0:
        raise ValueError("lambda must be positive")
    return Tau(p, big_m, (1.0 - eps) / (2.0 * lam))


def psi(engine: LegendreEngine, lam: float, x, strict: bool = True):
    """``psi(x) = ((phi*)^{-1}(lambda log x))**2``.

    Undefined where ``lambda log x < phi*(0)``: raises if ``strict``, else nan.
    """
    x = np.asarray(x, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = lam * np.log(x)
    g = np.asarray(engine.conjugate_inverse(np.where(np.isfinite(z), z, -np.inf)))
    if strict and np.any(np.isnan(g)):
        raise ValueError("psi undefined: lambda*log(x) below phi*(0)")
    out = g * g
    return out if out.shape else float(out)


def psi_domain_start(engine: LegendreEngine, lam: float) -> float:
    """Smallest ``x`` with ``lambda log x >= phi*(0)``."""
    return math.exp(float(engine.legendre(0.0)) / lam)


def find_A_lambda(engine: LegendreEngine, lam: float, x_hi: float = 1e8, points: int = 4000,
                  concave_tol: float = 1e-12, return_grid: bool = False):
    """Smallest ``A`` such that ``psi`` is positive, increasing and concave on
    ``[A, x_hi]`` (scan grid) with ``psi(A) >= 1``.

    The grid answer is refined by solving ``psi(A) = 1`` when that is the
    binding condition.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    x0 = psi_domain_start(engine, lam) * (1.0 + 1e-12)
    grid = np.geomspace(x0, x_hi, points)
    vals = psi(engine, lam, grid, strict=False)
    ok = _shape_suffix_ok(grid, vals, concave_tol)
    ok &= vals >= 1.0
    idx = np.flatnonzero(ok)
    if not idx.size:
        raise ValueError("psi never becomes increasing and concave with psi >= 1 on the scan grid")
    # first index after which every point qualifies
    good = np.flatnonzero(~ok)
    i = int(good[-1] + 1) if good.size else 0
    if i >= len(grid):
        raise ValueError("no admissible A_lambda on the scan grid")
    a = float(grid[i])
    if i > 0 and vals[i - 1] < 1.0:
        shape_ok = _shape_suffix_ok(grid, vals, concave_tol)
        if shape_ok[i - 1]:
            a = brentq(lambda t: float(psi(engine, lam, t)) - 1.0, grid[i - 1], grid[i],
                       xtol=1e-14, rtol=1e-13)
    if return_grid:
        return a, grid, vals
    return a


def _shape_suffix_ok(grid, vals, concave_tol):
    """Per grid index: positive, and increasing/concave on every later step."""
    slope = np.diff(vals) / np.diff(grid)
    inc = slope > 0
    dslope = np.diff(slope)
    conc = dslope <= concave_tol * np.maximum(1.0, np.abs(slope[:-1]))
    n = len(grid)
    step_ok = np.ones(n, bool)
    step_ok[: n - 1] &= inc
    step_ok[: n - 2] &= conc
    suffix = np.logical_and.accumulate(step_ok[::-1])[::-1]
    return suffix & np.isfinite(vals) & (vals > 0)


def k_weight(engine: LegendreEngine, lam: float, x):
    """``K(x) = sqrt(log(x**2) / psi(x**2))``."""
    x = np.asarray(x, float)
    out = np.sqrt(np.log(x * x) / psi(engine, lam, x * x))
    return out if out.shape else float(out)


def conjugate_inverse_log_slope(engine: LegendreEngine, z, rel_step: float = 1e-4):
    """Central-difference estimate of ``g'(z)/g(z)`` with ``g = (phi*)^{-1}``."""
    z = np.asarray(z, float)
    h = rel_step * np.maximum(np.abs(z), 1.0)
    gp = engine.conjugate_inverse(z + h)
    gm = engine.conjugate_inverse(z - h)
    g0 = engine.conjugate_inverse(z)
    return (gp - gm) / (2 * h) / g0
