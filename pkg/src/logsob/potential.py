"""Convex symmetric potentials and the growth hypothesis (H).

A :class:`Potential` bundles a vectorised value map ``phi``, its derivative
and (optionally) its second derivative.  Built-in families are the pure
powers ``|x|**alpha`` and the e-shifted power-log family
``|x|**alpha * log(e + |x|)**beta``; anything else can be supplied as a pair
of callables or read from a tabulated text file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

ArrayFn = Callable[[np.ndarray], np.ndarray]

TRUNCATION_GAP = 40.0
POINTS_PER_DECADE = 2000
RATIO_RTOL = 1e-12


@dataclass(frozen=True)
class Potential:
    """A convex, symmetric potential on the real line.

    ``value``, ``deriv`` and ``second_deriv`` accept and return numpy arrays.
    Instances are immutable and safe to share between threads.
    """

    value: ArrayFn
    deriv: ArrayFn
    second_deriv: Optional[ArrayFn] = None
    symmetric: bool = True
    family: str = "custom"
    alpha: float = float("nan")
    beta: float = 0.0
    domain_floor: float = 0.0
    label: str = ""

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=float))

    def phi(self, x):
        return self.value(np.asarray(x, dtype=float))

    def dphi(self, x):
        return self.deriv(np.asarray(x, dtype=float))

    def d2phi(self, x):
        if self.second_deriv is None:
            raise ValueError("potential has no second derivative")
        return self.second_deriv(np.asarray(x, dtype=float))

    def describe(self) -> dict:
        return {"family": self.family, "alpha": self.alpha, "beta": self.beta,
                "label": self.label}

    def truncation(self, gap: float = TRUNCATION_GAP, start: float = 0.0) -> float:
        """Point ``X > start`` where ``phi`` first reaches ``phi(start) + gap`` (relative 1e-12)."""
        base = float(self.phi(start))
        hi = 1.0 if start <= 0 else 2.0 * start
        while float(self.phi(hi)) < base + gap:
            hi *= 2.0
            if hi > 1e150:
                raise ValueError("potential does not grow: not integrable")
        lo = max(start, 0.0)
        # bisect for the crossing so the truncation is not wasteful
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if float(self.phi(mid)) >= base + gap:
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-12 * hi:
                break
        return hi


def _power(alpha: float):
    def value(x):
        return np.abs(x) ** alpha

    def deriv(x):
        return alpha * np.sign(x) * np.abs(x) ** (alpha - 1.0)

    def second(x):
        ax = np.abs(x)
        if alpha == 1.0:
            return np.zeros_like(ax)
        if alpha == 2.0:
            return np.full_like(ax, 2.0)
        with np.errstate(divide="ignore"):
            return alpha * (alpha - 1.0) * ax ** (alpha - 2.0)

    return value, deriv, second


def _power_log(alpha: float, beta: float):
    e = math.e

    def value(x):
        ax = np.abs(x)
        return ax ** alpha * np.log(e + ax) ** beta

    def deriv(x):
        ax = np.abs(x)
        L = np.log(e + ax)
        d = alpha * ax ** (alpha - 1.0) * L ** beta + beta * ax ** alpha * L ** (beta - 1.0) / (e + ax)
        return np.sign(x) * d

    def second(x):
        ax = np.abs(x)
        L = np.log(e + ax)
        s = e + ax
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = alpha * (alpha - 1.0) * ax ** (alpha - 2.0) * L ** beta if alpha != 1.0 else 0.0 * ax
            t2 = 2.0 * alpha * beta * ax ** (alpha - 1.0) * L ** (beta - 1.0) / s
            t3 = beta * (beta - 1.0) * ax ** alpha * L ** (beta - 2.0) / s ** 2
            t4 = -beta * ax ** alpha * L ** (beta - 1.0) / s ** 2
        return t1 + t2 + t3 + t4

    return value, deriv, second


def make_builtin(family: str, alpha: float, beta: float = 0.0, scale: float = 1.0) -> Potential:
    """Build ``scale * |x|**alpha`` (``family="power"``) or
    ``scale * |x|**alpha * log(e+|x|)**beta`` (``family="power-log"``).

    The shifted logarithm keeps the potential finite and smooth at the origin
    while matching the asymptotics of ``|x|**alpha log**beta |x|``.
    """
    if not alpha >= 1.0:
        raise ValueError(f"alpha={alpha} < 1 gives non-convex tails")
    if scale <= 0:
        raise ValueError("scale must be positive")
    if family == "power":
        v, d, s = _power(alpha)
        label = f"|x|^{alpha:g}"
    elif family in ("power-log", "power_log"):
        if alpha == 1.0 and beta < 0:
            raise ValueError("beta < 0 with alpha = 1: integrability not guaranteed")
        family = "power-log"
        v, d, s = _power_log(alpha, beta)
        label = f"|x|^{alpha:g} log^{beta:g}(e+|x|)"
    else:
        raise ValueError(f"unknown family {family!r}")
    if scale != 1.0:
        v0, d0, s0 = v, d, s
        v = lambda x: scale * v0(x)  # noqa: E731
        d = lambda x: scale * d0(x)  # noqa: E731
        s = lambda x: scale * s0(x)  # noqa: E731
        label = f"{scale:g}*{label}"
    return Potential(v, d, s, True, family, float(alpha), float(beta), 0.0, label)


def make_custom(value: ArrayFn, deriv: ArrayFn, second_deriv: Optional[ArrayFn] = None,
                label: str = "custom") -> Potential:
    """Wrap user callables; they must be vectorised and even in ``x``."""
    return Potential(value, deriv, second_deriv, True, "custom", label=label)


def load_table(path) -> Potential:
    """Read a tabulated potential.

    The file holds two or three whitespace/comma separated columns
    ``x, phi(x)[, phi'(x)]`` with strictly increasing ``x``; ``#`` starts a
    comment.  Only rows with ``x >= 0`` are used and the potential is
    extended evenly.  Values are interpolated with monotone cubics; beyond the
    last row the potential continues as its second-order Taylor polynomial.
    """
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            rows.append([float(tok) for tok in line.replace(",", " ").split()])
    if not rows:
        raise ValueError(f"{path}: empty table")
    ncol = {len(r) for r in rows}
    if len(ncol) != 1 or ncol.pop() not in (2, 3):
        raise ValueError(f"{path}: expected 2 or 3 columns on every row")
    tab = np.array(rows)
    if np.any(np.diff(tab[:, 0]) <= 0):
        raise ValueError(f"{path}: x column must be strictly increasing")
    tab = tab[tab[:, 0] >= 0]
    if len(tab) < 4 or tab[0, 0] != 0.0:
        raise ValueError(f"{path}: table must start at x = 0 and have >= 4 rows with x >= 0")
    return potential_from_samples(tab[:, 0], tab[:, 1], tab[:, 2] if tab.shape[1] == 3 else None,
                                  label=str(path))


def potential_from_samples(xs, phis, dphis=None, label: str = "table") -> Potential:
    xs = np.asarray(xs, float)
    f = PchipInterpolator(xs, phis, extrapolate=False)
    if dphis is None:
        df = f.derivative()
        d2f = df.derivative()
    else:
        df = PchipInterpolator(xs, dphis, extrapolate=False)
        d2f = df.derivative()
    xn = xs[-1]
    fn, dn = float(f(xn)), float(df(xn))
    d2n = max(float(d2f(xn)), 0.0)

    def value(x):
        ax = np.abs(np.asarray(x, float))
        inside = ax <= xn
        out = np.empty_like(ax)
        out[inside] = f(ax[inside])
        dx = ax[~inside] - xn
        out[~inside] = fn + dn * dx + 0.5 * d2n * dx * dx
        return out

    def deriv(x):
        x = np.asarray(x, float)
        ax = np.abs(x)
        inside = ax <= xn
        out = np.empty_like(ax)
        out[inside] = df(ax[inside])
        out[~inside] = dn + d2n * (ax[~inside] - xn)
        return np.sign(x) * out

    def second(x):
        ax = np.abs(np.asarray(x, float))
        inside = ax <= xn
        out = np.full_like(ax, d2n)
        out[inside] = d2f(ax[inside])
        return out

    return Potential(value, deriv, second, True, "custom", label=label)


@dataclass
class HypothesisReport:
    epsilon: float
    big_m: float
    passed: bool
    ratio_min: float
    ratio_max: float
    growth_m1: float
    growth_m2: float
    grid_spec: dict
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon, "big_m": self.big_m, "passed": self.passed,
            "ratio_min": self.ratio_min, "ratio_max": self.ratio_max,
            "growth_m1": self.growth_m1, "growth_m2": self.growth_m2,
            "grid_spec": self.grid_spec, "reason": self.reason,
        }


def hypothesis_grid(p: Potential, big_m: float, x_max: Optional[float] = None,
                    points_per_decade: int = POINTS_PER_DECADE):
    """Log-spaced scan grid on ``[big_m, x_max]``."""
    if x_max is None:
        x_max = p.truncation(start=big_m)
    decades = math.log10(x_max / big_m)
    n = max(int(math.ceil(points_per_decade * decades)) + 1, points_per_decade + 1)
    grid = np.geomspace(big_m, x_max, n)
    spec = {"kind": "geometric", "start": big_m, "stop": float(x_max), "points": n,
            "points_per_decade": points_per_decade}
    return grid, spec


def check_hypothesis_H(p: Potential, epsilon: float, big_m: float,
                       x_max: Optional[float] = None,
                       points_per_decade: int = POINTS_PER_DECADE) -> HypothesisReport:
    """Check ``(1+eps) phi(x) <= x phi'(x) <= (2-eps) phi(x)`` on ``[big_m, x_max]``.

    By default ``x_max`` is the point where ``phi`` has grown by 40 above
    ``phi(big_m)``.  Equality at either end counts as passing.
    """
    if not (0.0 < epsilon <= 0.5):
        raise ValueError("epsilon must lie in (0, 1/2]")
    if not big_m > 0:
        raise ValueError("big_m must be positive")
    phi_m = float(p.phi(big_m))
    if phi_m <= 0:
        nan = float("nan")
        return HypothesisReport(epsilon, big_m, False, nan, nan, nan, nan, {},
                                reason=f"phi(M) = {phi_m} <= 0")
    grid, spec = hypothesis_grid(p, big_m, x_max, points_per_decade)
    phi = p.phi(grid)
    ratio = grid * p.dphi(grid) / phi
    rmin, rmax = float(ratio.min()), float(ratio.max())
    # closed inequality; the tolerance absorbs rounding in x phi'/phi
    passed = bool(rmin >= (1.0 + epsilon) * (1 - RATIO_RTOL) and rmax <= (2.0 - epsilon) * (1 + RATIO_RTOL))
    m1 = float(np.min(phi / grid ** (1.0 / (1.0 - epsilon))))
    m2 = float(np.max(phi / grid ** (2.0 - epsilon)))
    reason = ""
    if not passed:
        reason = f"ratio range [{rmin:.6g}, {rmax:.6g}] not inside [{1 + epsilon:g}, {2 - epsilon:g}]"
    return HypothesisReport(epsilon, big_m, passed, rmin, rmax, m1, m2, spec, reason)


def scan_hypothesis(p: Potential, epsilons: Sequence[float], big_ms: Sequence[float],
                    points_per_decade: int = 200) -> list[tuple[float, float]]:
    """All ``(epsilon, M)`` pairs from the two lists for which (H) passes."""
    out = []
    for m in big_ms:
        for eps in epsilons:
            if check_hypothesis_H(p, eps, m, points_per_decade=points_per_decade).passed:
                out.append((float(eps), float(m)))
    return out


def check_shape(p: Potential, grid, fd_step: float = 1e-5, fd_tol: float = 1e-4) -> dict:
    """Grid checks of convexity, symmetry, monotone derivative and the
    central-difference consistency of ``deriv``.

    Returns a dict of booleans plus the worst violations.
    """
    x = np.sort(np.asarray(grid, float))
    phi = p.phi(x)
    a, b, c = x[:-2], x[1:-1], x[2:]
    interp = phi[:-2] + (phi[2:] - phi[:-2]) * (b - a) / (c - a)
    convex_gap = float(np.max(phi[1:-1] - interp)) if len(x) > 2 else 0.0
    sym_gap = float(np.max(np.abs(phi - p.phi(-x))))
    d = p.dphi(x)
    mono_gap = float(np.max(d[:-1] - d[1:])) if len(x) > 1 else 0.0
    pos = x >= 0
    sign_ok = bool(np.all(d[pos] >= 0))
    h = fd_step
    fd = (p.phi(x + h) - p.phi(x - h)) / (2 * h)
    smooth = np.abs(x) > 2 * h  # the origin may be a kink
    fd_err = np.abs(d - fd) / (1.0 + np.abs(d))
    fd_worst = float(np.max(fd_err[smooth])) if np.any(smooth) else 0.0
    return {
        "convex": convex_gap <= 1e-12 * (1.0 + float(np.max(np.abs(phi)))),
        "convex_gap": convex_gap,
        "symmetric": sym_gap <= 1e-12 * (1.0 + float(np.max(np.abs(phi)))),
        "symmetry_gap": sym_gap,
        "deriv_monotone": mono_gap <= 1e-12 * (1.0 + float(np.max(np.abs(d)))),
        "deriv_nonneg": sign_ok,
        "fd_consistent": fd_worst <= fd_tol,
        "fd_worst": fd_worst,
    }
