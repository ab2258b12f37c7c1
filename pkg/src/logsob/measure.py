"""The probability measure ``mu_phi(dx) = exp(-phi(x)) dx / Z``.

All integrals use composite Gauss-Legendre panels graded towards the origin
(where built-in potentials may have a kink or a singular second derivative)
on the truncated line ``[-X, X]``, ``phi(X) >= phi(0) + 40``.  The panel
count is doubled until successive estimates agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import PchipInterpolator

from .potential import TRUNCATION_GAP, Potential
from .quadrature import gauss_legendre, panel_rule, symmetric_edges, unit_rule

Z_RTOL = 1e-10
EXPECT_RTOL = 1e-8
CDF_KNOTS = 4097
MIN_TRUNC = 1e-8


class QuadratureError(ArithmeticError):
    """Raised when an integrand misbehaves inside the truncated domain."""


@dataclass
class LogConcaveMeasure:
    potential: Potential
    z_norm: float
    trunc: float
    quad: dict
    cdf_knots: np.ndarray = field(repr=False)
    cdf_values: np.ndarray = field(repr=False)
    _inv_interp: Callable = field(repr=False)

    # -- densities and tails -------------------------------------------------

    def density(self, x):
        return np.exp(-self.potential.phi(x)) / self.z_norm

    def log_density(self, x):
        return -self.potential.phi(x) - math.log(self.z_norm)

    def _scaled_upper(self, x, n_panels: int = 64, mirror: bool = False):
        """``int_x^inf exp(-(phi(t) - phi(x))) dt`` for ``x >= 0`` (vectorised).

        ``mirror`` integrates ``phi(-t)`` instead (the left tail).
        """
        p = self.potential
        if mirror:
            p = _Mirror(p)
        x = np.atleast_1d(np.asarray(x, float))
        d = p.dphi(x)
        with np.errstate(divide="ignore"):
            span = np.where(d > 0, TRUNCATION_GAP / np.where(d > 0, d, 1.0), np.inf)
        span = np.minimum(span, self.trunc)
        u, w = unit_rule(n_panels)
        t = x[:, None] + span[:, None] * u[None, :]
        vals = np.exp(-(p.phi(t) - p.phi(x)[:, None]))
        return span * (vals @ w)

    def tail(self, x):
        """``mu([x, inf))``; beyond the truncation the integral is extended."""
        x = np.asarray(x, float)
        ax = np.abs(np.atleast_1d(x))
        upper = np.exp(-self.potential.phi(ax)) * self._scaled_upper(ax) / self.z_norm
        out = np.where(np.atleast_1d(x) >= 0, upper, 1.0 - upper)
        return out.reshape(x.shape) if x.shape else float(out[0])

    def log_tail(self, x):
        x = np.asarray(x, float)
        ax = np.abs(np.atleast_1d(x))
        log_upper = -self.potential.phi(ax) + np.log(self._scaled_upper(ax)) - math.log(self.z_norm)
        out = np.where(np.atleast_1d(x) >= 0, log_upper, np.log1p(-np.exp(log_upper)))
        return out.reshape(x.shape) if x.shape else float(out[0])

    def log_lower_tail(self, x):
        """``log mu((-inf, x])`` for ``x <= 0``, integrated on the negative axis."""
        x = np.asarray(x, float)
        ax = -np.atleast_1d(x)
        if np.any(ax < 0):
            raise ValueError("log_lower_tail needs x <= 0")
        out = -self.potential.phi(-ax) + np.log(self._scaled_upper(ax, mirror=True)) - math.log(self.z_norm)
        return out.reshape(x.shape) if x.shape else float(out[0])

    def cdf(self, x):
        x = np.asarray(x, float)
        return self.tail(-x)

    def tail_asymptotic(self, x):
        """``exp(-phi(x)) / (Z phi'(x))`` for large positive ``x``."""
        x = np.asarray(x, float)
        d = self.potential.dphi(x)
        if np.any(d <= 0):
            raise ValueError("tail asymptotic undefined where phi'(x) <= 0")
        return np.exp(-self.potential.phi(x)) / (self.z_norm * d)

    # -- inverse cdf and sampling --------------------------------------------

    def _lower_cdf_local(self, x, k):
        """``F(x)`` for ``x`` in knot interval ``[knot_k, knot_k+1]`` (``x <= 0``)."""
        a = self.cdf_knots[k]
        gx, gw = gauss_legendre(8)
        half = 0.5 * (x - a)
        t = 0.5 * (x + a)[:, None] + half[:, None] * gx[None, :]
        return self.cdf_values[k] + half * (self.density(t) @ gw)

    def _inverse_lower(self, u):
        """Inverse cdf for ``0 < u <= 1/2`` (result ``<= 0``)."""
        knots = self.cdf_knots
        x = self._inv_interp(np.log(u))
        x = np.clip(x, knots[0], 0.0)
        for _ in range(6):
            k = np.clip(np.searchsorted(knots, x, side="right") - 1, 0, len(knots) - 2)
            f = self._lower_cdf_local(x, k)
            step = (f - u) / np.maximum(self.density(x), 1e-300)
            x = np.clip(x - step, knots[0], 0.0)
            if np.max(np.abs(step)) <= 1e-13 * (1.0 + self.trunc):
                break
        return x

    def inverse_cdf(self, u):
        u = np.asarray(u, float)
        if np.any((u <= 0) | (u >= 1)) or np.any(~np.isfinite(u)):
            raise ValueError("inverse_cdf needs u in the open interval (0, 1)")
        flat = np.atleast_1d(u).ravel()
        out = np.empty_like(flat)
        low = flat <= 0.5
        if np.any(low):
            out[low] = self._inverse_lower(flat[low])
        if np.any(~low):
            out[~low] = -self._inverse_lower(1.0 - flat[~low])
        return out.reshape(u.shape) if u.shape else float(out[0])

    def sample(self, n: int, seed: int, chunk: int = 1 << 18):
        """``n`` draws by inverse-cdf transform of a seeded uniform stream."""
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = np.random.default_rng(seed)
        return self.sample_with(rng, n, chunk)

    def sample_with(self, rng: np.random.Generator, n: int, chunk: int = 1 << 18):
        out = np.empty(n)
        for start in range(0, n, chunk):
            m = min(chunk, n - start)
            # open-interval uniforms: (k + 1/2) / 2**53
            u = (rng.integers(0, 1 << 53, m, dtype=np.int64) + 0.5) / float(1 << 53)
            out[start:start + m] = self.inverse_cdf(u)
        return out

    # -- expectations ----------------------------------------------------------

    def nodes(self, n_panels: int, breakpoints=(), x_max: Optional[float] = None):
        """Quadrature nodes and probability weights (density folded in) on
        ``[-x_max, x_max]``, by default the truncation window."""
        x, logw = self.log_nodes(n_panels, breakpoints, x_max)
        return x, np.exp(logw)

    def log_nodes(self, n_panels: int, breakpoints=(), x_max: Optional[float] = None):
        """Like :meth:`nodes` with the logarithm of the weights."""
        edges = symmetric_edges(self.trunc if x_max is None else x_max, n_panels, breakpoints)
        x, w = panel_rule(edges)
        return x, np.log(w) + self.log_density(x)

    def expect(self, g, breakpoints=(), rtol: float = EXPECT_RTOL, max_panels: int = 8192,
               return_panels: bool = False):
        """``int g dmu`` on the truncated line, doubling panels until stable.

        ``g`` maps an array of abscissae to values.  Kinks of ``g`` should be
        passed as ``breakpoints``; they become panel edges.
        """
        n = self.quad.get("panels", 32)
        prev = None
        while True:
            x, w = self.nodes(n, breakpoints)
            vals = np.asarray(g(x), float)
            bad = ~np.isfinite(vals)
            if np.any(bad):
                raise QuadratureError(f"non-finite integrand at x = {x[bad][0]!r}")
            cur = float(vals @ w)
            scale = float(np.abs(vals) @ w)
            if prev is not None and abs(cur - prev) <= rtol * max(scale, 1e-300):
                return (cur, n) if return_panels else cur
            if n >= max_panels:
                return (cur, n) if return_panels else cur
            prev = cur
            n *= 2

    def summary(self) -> dict:
        return {
            "potential": self.potential.describe(),
            "z_norm": self.z_norm,
            "trunc": self.trunc,
            "quad": dict(self.quad),
            "cdf_at_zero": float(self.cdf(0.0)),
            "mass_check": self.quad.get("mass_check"),
        }


class _Mirror:
    def __init__(self, p):
        self._p = p

    def phi(self, x):
        return self._p.phi(-np.asarray(x))

    def dphi(self, x):
        return -self._p.dphi(-np.asarray(x))


def _z_estimate(p: Potential, trunc: float, n_panels: int) -> float:
    u, w = unit_rule(n_panels)
    # exp(-phi) on [0, trunc]; the piece beyond trunc is below e^-40 relative
    return 2.0 * trunc * float(np.exp(-p.phi(trunc * u)) @ w)


def normalize(p: Potential, panels: int = 32, rtol: float = Z_RTOL, gap: float = TRUNCATION_GAP,
              knots: int = CDF_KNOTS) -> LogConcaveMeasure:
    """Normalise ``exp(-phi)`` and tabulate its cdf.

    Raises ``ValueError`` for potentials that do not grow enough to be
    integrable (the truncation search fails).
    """
    if not p.symmetric:
        raise ValueError("only symmetric potentials are supported")
    trunc = p.truncation(gap)
    n = panels
    z_prev = _z_estimate(p, trunc, n)
    while True:
        n *= 2
        z = _z_estimate(p, trunc, n)
        if abs(z - z_prev) <= rtol * z:
            break
        if n > 1 << 16:
            raise ArithmeticError("normalisation did not converge")
        z_prev = z
    # the tail beyond trunc, bounded through convexity: phi(t) >= phi(X) + phi'(X)(t - X)
    d_end = float(p.dphi(trunc))
    tail_bound = math.exp(-float(p.phi(trunc))) / d_end if d_end > 0 else math.inf
    quad = {"panels": n, "order": 16, "rtol": rtol, "grading_levels": 48,
            "truncation_tail_bound": 2.0 * tail_bound / z}

    knots_x = np.linspace(-trunc, 0.0, (knots + 1) // 2)
    m = LogConcaveMeasure(p, z, trunc, quad, knots_x, np.zeros_like(knots_x), None)
    vals = m.tail(-knots_x)
    m.cdf_values = vals
    m._inv_interp = PchipInterpolator(np.log(vals), knots_x, extrapolate=True)
    m.quad["mass_check"] = _mass_check(m)
    if trunc <= MIN_TRUNC:
        m.quad["degenerate"] = True
    return m


def _mass_check(m: LogConcaveMeasure) -> float:
    x, w = m.nodes(m.quad["panels"])
    return float(np.sum(w))
