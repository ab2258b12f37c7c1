"""Entropy, variance, Dirichlet forms and best-constant scans.

Test functions are small value objects (:class:`TestFunction`) that know
their derivative and kinks.  Every functional is computed on graded
Gauss-Legendre nodes with panel doubling until two consecutive estimates
agree.  The window is widened beyond the measure's truncation when ``f**2``
grows fast enough to carry mass there (steep tilts).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .convex import HFunction
from .measure import LogConcaveMeasure, QuadratureError

RTOL = 1e-9
ATOL = 1e-15


def _shape(name, g, dg):
    return name, g, dg


# perturbation shapes g for f = 1 + eps * g
SHAPES = [
    _shape("linear", lambda x: x, lambda x: np.ones_like(x)),
    _shape("tanh", np.tanh, lambda x: 1.0 / np.cosh(x) ** 2),
    _shape("sin", np.sin, np.cos),
    _shape("cos", np.cos, lambda x: -np.sin(x)),
    _shape("arctan", np.arctan, lambda x: 1.0 / (1.0 + x * x)),
    _shape("gauss", lambda x: np.exp(-0.5 * x * x), lambda x: -x * np.exp(-0.5 * x * x)),
    _shape("rational", lambda x: x / (1.0 + x * x), lambda x: (1.0 - x * x) / (1.0 + x * x) ** 2),
    _shape("shifted_tanh", lambda x: np.tanh(2.0 * x - 1.0), lambda x: 2.0 / np.cosh(2.0 * x - 1.0) ** 2),
    _shape("sin2", lambda x: np.sin(2.0 * x), lambda x: 2.0 * np.cos(2.0 * x)),
    _shape("log1p_sq", lambda x: np.log1p(x * x), lambda x: 2.0 * x / (1.0 + x * x)),
]
SHAPE_NAMES = [s[0] for s in SHAPES]


@dataclass(frozen=True)
class TestFunction:
    """A positive (or nonnegative) test function with known derivative.

    kinds and ``params``:

    ``exp_tilt``        ``(t,)`` or ``(t, clamp)``: ``exp(t * clip(x, -clamp, clamp) / 2)``
    ``piecewise_linear`` ``(x_0..x_k, y_0..y_k)``: linear interpolation, constant outside
    ``bump``            ``(center, width, amp)``: ``1 + amp * exp(-((x-center)/width)**2 / 2)``
    ``hinge``           ``(c, floor)``: ``floor + (x - c)_+``
    ``perturbation``    ``(eps, shape)``: ``1 + eps * g_shape(x)``, shape an index into SHAPES
    """

    __test__ = False  # not a pytest class

    kind: str
    params: tuple

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.kind not in ("exp_tilt", "piecewise_linear", "bump", "hinge", "perturbation"):
            raise ValueError(f"unknown test function kind {self.kind!r}")
        if self.kind == "piecewise_linear":
            k = len(self.params) // 2
            if len(self.params) != 2 * k or k < 2:
                raise ValueError("piecewise_linear needs matching node and value lists")
            xs = np.array(self.params[:k])
            if np.any(np.diff(xs) <= 0):
                raise ValueError("piecewise_linear nodes must increase")
            if np.any(np.array(self.params[k:]) < 0):
                raise ValueError("piecewise_linear values must be nonnegative")

    def _pl(self):
        k = len(self.params) // 2
        return np.array(self.params[:k]), np.array(self.params[k:])

    def value(self, x):
        x = np.asarray(x, float)
        kind, p = self.kind, self.params
        if kind == "exp_tilt":
            c = x if len(p) == 1 else np.clip(x, -p[1], p[1])
            return np.exp(0.5 * p[0] * c)
        if kind == "piecewise_linear":
            xs, ys = self._pl()
            return np.interp(x, xs, ys)
        if kind == "bump":
            return 1.0 + p[2] * np.exp(-0.5 * ((x - p[0]) / p[1]) ** 2)
        if kind == "hinge":
            return p[1] + np.maximum(x - p[0], 0.0)
        g = SHAPES[int(p[1])][1]
        return 1.0 + p[0] * g(x)

    __call__ = value

    def deriv(self, x):
        """Derivative; at kinks the left limit."""
        x = np.asarray(x, float)
        kind, p = self.kind, self.params
        if kind == "exp_tilt":
            d = 0.5 * p[0] * self.value(x)
            if len(p) == 2:
                d = np.where(np.abs(x) < p[1], d, 0.0)
            return d
        if kind == "piecewise_linear":
            xs, ys = self._pl()
            slopes = np.diff(ys) / np.diff(xs)
            i = np.searchsorted(xs, x, side="left") - 1
            inside = (i >= 0) & (i < len(slopes))
            return np.where(inside, slopes[np.clip(i, 0, len(slopes) - 1)], 0.0)
        if kind == "bump":
            z = (x - p[0]) / p[1]
            return -p[2] * z / p[1] * np.exp(-0.5 * z * z)
        if kind == "hinge":
            return np.where(x > p[0], 1.0, 0.0)
        dg = SHAPES[int(p[1])][2]
        return p[0] * dg(x)

    def log_parts(self, x):
        """``(log|f|, sign f, log|f'|, sign f')``; exact for tilts where ``f`` overflows."""
        x = np.asarray(x, float)
        kind, p = self.kind, self.params
        if kind == "exp_tilt":
            lf = 0.5 * p[0] * (x if len(p) == 1 else np.clip(x, -p[1], p[1]))
            with np.errstate(divide="ignore"):
                lfp = lf + math.log(abs(0.5 * p[0])) if p[0] else np.full_like(lf, -np.inf)
            if len(p) == 2:
                lfp = np.where(np.abs(x) < p[1], lfp, -np.inf)
            return lf, np.ones_like(lf), lfp, np.full_like(lf, math.copysign(1.0, p[0]))
        v, d = self.value(x), self.deriv(x)
        with np.errstate(divide="ignore"):
            return np.log(np.abs(v)), np.sign(v), np.log(np.abs(d)), np.sign(d)

    def kinks(self) -> tuple:
        kind, p = self.kind, self.params
        if kind == "exp_tilt" and len(p) == 2:
            return (-p[1], p[1])
        if kind == "piecewise_linear":
            return tuple(self._pl()[0])
        if kind == "hinge":
            return (p[0],)
        return ()

    def describe(self) -> dict:
        d = {"kind": self.kind, "params": list(self.params)}
        if self.kind == "perturbation":
            d["shape"] = SHAPE_NAMES[int(self.params[1])]
        return d


# -- integration on the measure ---------------------------------------------


EXTENT_GAP = 40.0   # e-folds below the peak of (f^2 + f'^2) * density
MAX_EXTENT = 1e3    # in units of the measure's truncation


def integration_extent(m: LogConcaveMeasure, f: "TestFunction", gap: float = EXTENT_GAP) -> float:
    """Half-width where ``(f^2 + f'^2) e^{-phi}`` has dropped ``gap`` e-folds
    below its peak; at least the truncation point of ``m``."""
    phi = m.potential.phi

    def logw(x):
        lf, _, lfp, _ = f.log_parts(x)
        return np.logaddexp(2.0 * lf, 2.0 * lfp) - phi(x)

    x_max = m.trunc
    while True:
        grid = np.linspace(-x_max, x_max, 4001)
        lw = logw(grid)
        peak = float(np.max(lw))
        if max(lw[0], lw[-1]) <= peak - gap:
            return x_max
        if x_max >= MAX_EXTENT * m.trunc:
            raise QuadratureError("f**2 does not decay against the density: functional diverges")
        x_max *= 1.5


@dataclass
class _Nodes:
    """A node set with ``f`` in log form.

    Integrals are returned as ``exp(L) * sum(...)`` with ``L = log int f^2``
    so no intermediate overflows for steep tilts.
    """

    x: np.ndarray
    logw: np.ndarray
    lf: np.ndarray
    sf: np.ndarray
    lfp: np.ndarray
    sfp: np.ndarray

    @property
    def w(self):
        return np.exp(self.logw)

    @property
    def log_mass(self) -> float:
        return float(logsumexp(2.0 * self.lf + self.logw))

    def ratio(self):
        """``f'/f`` (``nan`` where ``f = 0``)."""
        with np.errstate(invalid="ignore"):
            return np.where(self.lf == -np.inf, np.nan, self.sf * self.sfp * np.exp(self.lfp - self.lf))


def _stable(m: LogConcaveMeasure, fn: Callable, f: "TestFunction", breakpoints=None,
            rtol: float = RTOL, atol: float = ATOL, max_panels: int = 4096):
    """Evaluate ``fn(nodes)`` (a scalar functional of a node set) with panel
    doubling until two consecutive values agree."""
    n = m.quad.get("panels", 32)
    x_max = integration_extent(m, f)
    bps = f.kinks() if breakpoints is None else breakpoints
    prev = None
    while True:
        x, logw = m.log_nodes(n, bps, x_max)
        cur = fn(_Nodes(x, logw, *f.log_parts(x)))
        if prev is not None:
            with np.errstate(invalid="ignore"):
                close = np.abs(np.subtract(cur, prev)) <= rtol * np.abs(cur) + atol
            if np.all(close | np.equal(cur, prev)):
                return cur
        if n >= max_panels:
            return cur
        prev = cur
        n *= 2


def _rescale(lmass: float, value: float) -> float:
    """``exp(lmass) * value``, raising when the result leaves double range."""
    try:
        return math.exp(lmass) * value
    except OverflowError:
        raise QuadratureError("functional overflows double precision") from None


def _kl_sum(log_r, logw):
    """``sum w (r log r - r + 1)`` from ``log r`` and ``log w``; accurate for ``r ~ 1``."""
    w = np.exp(logw)
    with np.errstate(invalid="ignore", over="ignore"):
        near = np.abs(log_r) < 0.4
        lr = np.where(near, log_r, 0.0)
        near_terms = w * (np.exp(lr) * lr - np.expm1(lr))
        rw = np.exp(np.where(near, -np.inf, log_r + logw))
        far_terms = np.where(rw > 0, rw * log_r, 0.0) - rw + w
    return float(np.sum(np.where(near, near_terms, far_terms)))


def _entropy_parts(nd: _Nodes):
    """``(L, sum)`` with ``Ent(f^2) = exp(L) * sum``."""
    lmass = nd.log_mass
    if not np.isfinite(lmass):
        raise ValueError("entropy needs a positive finite integral of f**2")
    return lmass, _kl_sum(2.0 * nd.lf - lmass, nd.logw)


def entropy(m: LogConcaveMeasure, f: TestFunction, rtol: float = RTOL) -> float:
    """``Ent(f**2) = int f^2 log f^2 - int f^2 log int f^2`` (``0 log 0 = 0``)."""
    def fn(nd):
        lmass, s = _entropy_parts(nd)
        return _rescale(lmass, s)
    return _stable(m, fn, f, rtol=rtol)


def variance(m: LogConcaveMeasure, f: TestFunction, rtol: float = RTOL) -> float:
    def fn(nd):
        lmass = nd.log_mass
        if not np.isfinite(lmass):
            return 0.0
        half = 0.5 * nd.logw
        a = nd.sf * np.exp(nd.lf - 0.5 * lmass + half)   # f sqrt(w) / sqrt(int f^2)
        b = np.exp(half)
        mean = float(a @ b)
        return _rescale(lmass, float(np.sum((a - mean * b) ** 2)))
    return _stable(m, fn, f, rtol=rtol)


def mean_square(m: LogConcaveMeasure, f: TestFunction, rtol: float = RTOL) -> float:
    return _stable(m, lambda nd: _rescale(nd.log_mass, 1.0), f, rtol=rtol)


def dirichlet_classic(m: LogConcaveMeasure, f: TestFunction, rtol: float = RTOL) -> float:
    """``int f'^2 dmu``."""
    return _stable(m, lambda nd: _rescale(float(logsumexp(2.0 * nd.lfp + nd.logw)), 1.0), f, rtol=rtol)


def _h_terms(hf: HFunction, nd: _Nodes, lmass: float):
    """``H(f'/f) f^2 w / exp(lmass)`` per node with the convention ``0 * inf = 0``."""
    zero = nd.lf == -np.inf
    bad = zero & (nd.lfp != -np.inf)
    if np.any(bad):
        raise QuadratureError(f"f = 0 with f' != 0 at x = {nd.x[bad][0]!r}: integrand infinite")
    ratio = np.where(zero, 0.0, nd.ratio())
    mass = np.exp(np.where(zero, -np.inf, 2.0 * nd.lf + nd.logw - lmass))
    return np.where(zero, 0.0, hf(ratio) * mass)


def dirichlet_H(m: LogConcaveMeasure, hf: HFunction, f: TestFunction, rtol: float = RTOL) -> float:
    """``int H(f'/f) f^2 dmu`` with the convention ``0 * inf = 0``."""
    def fn(nd):
        lmass = nd.log_mass
        if not np.isfinite(lmass):
            return 0.0
        return _rescale(lmass, float(np.sum(_h_terms(hf, nd, lmass))))
    return _stable(m, fn, f, rtol=rtol)


def _log_level(f: TestFunction, kappa: float, scale: float):
    """``log(scale f^2) - log(kappa)`` as a function of ``x``."""
    shift = math.log(scale) - math.log(kappa)
    return lambda x: 2.0 * f.log_parts(x)[0] + shift


def level_crossings(m: LogConcaveMeasure, f: TestFunction, kappa: float, scale: float = 1.0,
                    points: int = 20001) -> tuple:
    """Points where ``scale * f**2 - kappa`` changes sign inside the integration window."""
    if kappa <= 0:
        return ()
    x_max = integration_extent(m, f)
    grid = np.union1d(np.linspace(-x_max, x_max, points), np.asarray(f.kinks(), float))
    grid = grid[(grid >= -x_max) & (grid <= x_max)]
    level = _log_level(f, kappa, scale)
    s = level(grid)
    idx = np.flatnonzero(np.sign(s[:-1]) * np.sign(s[1:]) < 0)
    g = lambda t: float(level(t))  # noqa: E731
    out = [brentq(g, grid[i], grid[i + 1], xtol=1e-14)
           for i in idx if np.isfinite(s[i]) and np.isfinite(s[i + 1])]
    out += [float(grid[i]) for i in np.flatnonzero(s == 0)]
    return tuple(sorted(out))


def dirichlet_H_restricted(m: LogConcaveMeasure, hf: HFunction, f: TestFunction, kappa: float,
                           scale: float = 1.0, rtol: float = RTOL) -> float:
    """``int_{f^2 >= kappa} H(f'/f) f^2 dmu``.

    ``scale`` multiplies ``f**2`` in both the level set and the integrand
    (used for the normalisation ``int f^2 = 1``).
    """
    bps = f.kinks() + level_crossings(m, f, kappa, scale)
    level = _log_level(f, kappa, scale) if kappa > 0 else None

    def fn(nd):
        lmass = nd.log_mass
        if not np.isfinite(lmass):
            return 0.0
        terms = _h_terms(hf, nd, lmass)
        if level is not None:
            terms = np.where(level(nd.x) >= 0, terms, 0.0)
        return scale * _rescale(lmass, float(np.sum(terms)))
    return _stable(m, fn, f, bps, rtol=rtol)


def dual_entropy_gap(m: LogConcaveMeasure, f: TestFunction, g: Callable, rtol: float = RTOL) -> float:
    """``Ent(f^2) + log int e^g - int f^2 g`` with ``f`` rescaled to ``int f^2 = 1``.

    Nonnegative by the entropy duality.  Raises ``ValueError`` if ``e^g``
    does not decay against the density at the truncation points.
    """
    grid = np.linspace(-m.trunc, m.trunc, 4001)
    q = np.asarray(g(grid), float) - m.potential.phi(grid)
    qf = q[np.isfinite(q)]
    if qf.size == 0 or np.any(np.isposinf(q)) or max(qf[0], qf[-1]) > float(np.max(qf)) - 20.0:
        raise ValueError("e^g does not decay against the density: not integrable")

    def fn(nd):
        lmass, ent = _entropy_parts(nd)
        gv = np.asarray(g(nd.x), float)
        finite = np.isfinite(gv)
        log_mgf = float(logsumexp(np.where(finite, gv, -np.inf) + nd.logw))
        F = np.exp(2.0 * nd.lf + nd.logw - lmass)
        cross = float(np.sum(np.where(F > 0, F * np.where(finite, gv, 0.0), 0.0)))
        return ent + log_mgf - cross
    return _stable(m, fn, f, rtol=rtol)


# -- families and best constants ----------------------------------------------


@dataclass
class Family:
    members: list
    description: str

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)


def tilt_family(ts: Sequence[float], clamp: Optional[float] = None) -> Family:
    members = [TestFunction("exp_tilt", (t,) if clamp is None else (t, clamp)) for t in ts]
    desc = f"exp_tilt t in [{min(ts):g}, {max(ts):g}] ({len(ts)} values)"
    if clamp is not None:
        desc += f", clamp {clamp:g}"
    return Family(members, desc)


def default_family(m: LogConcaveMeasure, refine: int = 1) -> Family:
    """Tilts ``t = +-0.25 .. +-3``, 5x3 bumps, 5 hinges and 4 perturbations.

    ``refine`` multiplies the resolution of the tilt and bump grids.
    """
    step = 0.25 / refine
    ts = [k * step for k in range(1, int(round(3 / step)) + 1)]
    members = [TestFunction("exp_tilt", (s * t,)) for t in ts for s in (-1.0, 1.0)]
    scale = min(m.trunc / 4.0, 2.0)
    centers = np.linspace(-scale, scale, 4 * refine + 1)
    widths = np.geomspace(0.25, 1.0, 3 * refine - (refine - 1)) if refine > 1 else (0.25, 0.5, 1.0)
    members += [TestFunction("bump", (c, w, 2.0)) for c in centers for w in widths]
    members += [TestFunction("hinge", (c, 1.0)) for c in np.linspace(-scale, scale, 5)]
    members += [TestFunction("perturbation", (0.5, i)) for i in (1, 2, 3, 4)]
    desc = (f"default: {2 * len(ts)} tilts |t|<=3, {len(centers) * len(widths)} bumps, "
            f"5 hinges, 4 perturbations (refine={refine})")
    return Family(members, desc)


@dataclass
class BestConstantReport:
    family: str
    form: str
    constants: dict
    best_ratio: float
    at_function: Optional[dict]
    members: list = field(default_factory=list)
    counterexamples: list = field(default_factory=list)

    def to_dict(self, with_members: bool = False) -> dict:
        d = {"family": self.family, "form": self.form, "constants": self.constants,
             "best_ratio": self.best_ratio, "at_function": self.at_function,
             "counterexamples": self.counterexamples}
        if with_members:
            d["members"] = self.members
        return d


def thread_count(threads: Optional[int] = None) -> int:
    if threads:
        return int(threads)
    env = os.environ.get("LOGSOB_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _ordered_map(fn, items, threads):
    threads = thread_count(threads)
    if threads == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(fn, items))


def estimate_best_constant(m: LogConcaveMeasure, hf: HFunction, family: Family,
                           form: str = "eq-cor", a_fixed: float = 0.0, kappa: float = 1.0,
                           threads: Optional[int] = None) -> BestConstantReport:
    """Largest ratio over a finite family.

    ``form="eq-cor"``: ``Ent(f^2) / int H(f'/f) f^2``.
    ``form="eq-theo"``: with ``f`` normalised to ``int f^2 = 1``,
    ``(Ent(f^2) - a_fixed * Var(f)) / int_{f^2 >= kappa} H(f'/f) f^2``, i.e. the
    smallest ``A'`` that works for the user-fixed ``A = a_fixed``.
    Members with ``0/0`` are skipped; ``positive/0`` is a counterexample.
    Members whose integrals diverge or overflow are marked ``not_integrable``.
    """
    if not len(family):
        raise ValueError("empty test-function family")
    if form not in ("eq-cor", "eq-theo"):
        raise ValueError(f"unknown form {form!r}")

    def one(f: TestFunction):
        try:
            return terms(f)
        except QuadratureError:
            return None

    def terms(f: TestFunction):
        if form == "eq-cor":
            num = entropy(m, f)
            den = dirichlet_H(m, hf, f)
        else:
            c = mean_square(m, f)
            num = entropy(m, f) / c - a_fixed * variance(m, f) / c
            den = dirichlet_H_restricted(m, hf, f, kappa, scale=1.0 / c)
        return num, den

    results = _ordered_map(one, list(family), threads)
    members, counter = [], []
    best, at = -math.inf, None
    for f, res in zip(family, results):
        if res is None:
            members.append({"function": f.describe(), "numerator": None, "denominator": None,
                            "ratio": None, "status": "not_integrable"})
            continue
        num, den = res
        tiny = 1e-13 * max(1.0, abs(num))
        if den <= tiny and num <= tiny:
            status, ratio = "skipped", None
        elif den <= tiny:
            status, ratio = "counterexample", math.inf
            counter.append(f.describe())
        else:
            status, ratio = "ok", num / den
        members.append({"function": f.describe(), "numerator": num, "denominator": den,
                        "ratio": ratio, "status": status})
        if status == "ok" and ratio > best:
            best, at = ratio, f.describe()
    if counter:
        best = math.inf
    constants = {"B": hf.b_const, "D": hf.d_const}
    if form == "eq-cor":
        constants["A"] = best if at is not None else None
    else:
        constants.update({"A": a_fixed, "A_prime": best if at is not None else None, "kappa": kappa})
    if at is None and not counter:
        best = float("nan")
    return BestConstantReport(family.description, form, constants, best, at, members, counter)


# -- two dimensions ------------------------------------------------------------


def tensor_entropy_2d(m1: LogConcaveMeasure, m2: LogConcaveMeasure, hf: HFunction,
                      u: TestFunction, v: TestFunction, form: str = "product",
                      panels: Optional[int] = None, chunk: int = 256):
    """Entropy of ``f^2`` under ``m1 x m2`` and ``sum_i int H(d_i f / f) f^2``.

    ``f(x, y) = u(x) v(y)`` (``form="product"``) or ``u(x) + v(y)``
    (``form="sum"``), integrated on the tensor product of both node sets.
    """
    if form not in ("product", "sum"):
        raise ValueError("only product or sum forms are supported")
    n1 = panels or m1.quad["panels"]
    n2 = panels or m2.quad["panels"]
    x, lwx = m1.log_nodes(n1, u.kinks(), integration_extent(m1, u))
    y, lwy = m2.log_nodes(n2, v.kinks(), integration_extent(m2, v))
    lu, su, lup, sup = u.log_parts(x)
    lv, sv, lvp, svp = v.log_parts(y)
    if form == "product":
        return _tensor_product(hf, x, lwx, (lu, su, lup, sup), y, lwy, (lv, sv, lvp, svp), chunk)
    ux, vy = u.value(x), v.value(y)
    nonneg = bool(np.all(su >= 0) and np.all(sv >= 0))

    def rows():
        """Per chunk of x: node sets for the x- and y-derivatives."""
        for s in range(0, len(x), chunk):
            sl = slice(s, s + chunk)
            shape = (len(x[sl]), len(y))
            logw = (lwx[sl, None] + lwy[None, :]).ravel()
            xs = np.repeat(x[sl], len(y))
            if nonneg:
                lf = np.logaddexp(lu[sl, None], lv[None, :]).ravel()
                sf = np.where(lf == -np.inf, 0.0, 1.0)
            else:
                fv = (ux[sl, None] + vy[None, :]).ravel()
                with np.errstate(divide="ignore"):
                    lf, sf = np.log(np.abs(fv)), np.sign(fv)
            dx = (np.broadcast_to(lup[sl, None], shape).ravel(), np.broadcast_to(sup[sl, None], shape).ravel())
            dy = (np.broadcast_to(lvp[None, :], shape).ravel(), np.broadcast_to(svp[None, :], shape).ravel())
            yield _Nodes(xs, logw, lf, sf, *dx), _Nodes(xs, logw, lf, sf, *dy)

    lmass = -np.inf
    for nd, _ in rows():
        lmass = np.logaddexp(lmass, float(logsumexp(2.0 * nd.lf + nd.logw)))
    if not np.isfinite(lmass):
        raise ValueError("entropy needs a positive finite integral of f**2")
    ent = dir_h = 0.0
    for ndx, ndy in rows():
        ent += _kl_sum(2.0 * ndx.lf - lmass, ndx.logw)
        dir_h += float(np.sum(_h_terms(hf, ndx, lmass)) + np.sum(_h_terms(hf, ndy, lmass)))
    return _rescale(lmass, ent), _rescale(lmass, dir_h)


def _axis_h(hf: HFunction, x, parts):
    """``H(u'/u)`` on one axis (0 where ``u = 0``, the product then vanishes)."""
    lu, su, lup, sup = parts
    zero = lu == -np.inf
    bad = zero & (lup != -np.inf)
    if np.any(bad):
        raise QuadratureError(f"f = 0 with f' != 0 at x = {x[bad][0]!r}: integrand infinite")
    with np.errstate(invalid="ignore"):
        ratio = np.where(zero, 0.0, su * sup * np.exp(lup - np.where(zero, 0.0, lu)))
    return np.where(zero, 0.0, hf(ratio))


def _tensor_product(hf, x, lwx, px, y, lwy, py, chunk):
    """``f = u(x) v(y)``: the 2-d mass on the full grid, with ``d_x f / f = u'/u``
    depending on ``x`` alone (and likewise in ``y``)."""
    hx, hy = _axis_h(hf, x, px), _axis_h(hf, y, py)
    ax = 2.0 * px[0] + lwx           # log(u^2 w_x)
    ay = 2.0 * py[0] + lwy
    lmass = float(logsumexp(ax)) + float(logsumexp(ay))
    if not np.isfinite(lmass):
        raise ValueError("entropy needs a positive finite integral of f**2")
    ent = dir_h = 0.0
    for s in range(0, len(x), chunk):
        sl = slice(s, s + chunk)
        logm = ax[sl, None] + ay[None, :] - lmass
        mass = np.exp(logm)
        log_r = logm - (lwx[sl, None] + lwy[None, :])
        ent += _kl_sum(log_r.ravel(), (lwx[sl, None] + lwy[None, :]).ravel())
        dir_h += float(hx[sl] @ mass.sum(axis=1) + mass.sum(axis=0) @ hy)
    return _rescale(lmass, ent), _rescale(lmass, dir_h)
