"""Herbst argument: Laplace bound, ``G(t)``, deviation bounds, Monte-Carlo check."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .convex import HFunction
from .functionals import thread_count
from .measure import LogConcaveMeasure
from .quadrature import gauss_legendre, golden_section

T_MAX = 1e6
PANEL_RATIO = 1.05
MIN_TRIALS = 100


class _TailIntegral:
    """``J(t) = int_{2D}^t H(s/2)/s^2 ds`` from a cumulative panel table.

    Each evaluation adds one 16-node panel from the nearest table edge.
    """

    def __init__(self, hf: HFunction):
        self.hf = hf
        self.start = 2.0 * hf.d_const
        if not math.isfinite(self.start) or self.start >= 2.0 * T_MAX:
            self.edges = None
            return
        n = int(math.ceil(math.log(2.0 * T_MAX / self.start) / math.log(PANEL_RATIO))) + 1
        self.edges = self.start * PANEL_RATIO ** np.arange(n + 1)
        self.gx, self.gw = gauss_legendre(16)
        a, b = self.edges[:-1], self.edges[1:]
        vals = self._panel(a, b)
        self.cum = np.concatenate(([0.0], np.cumsum(vals)))

    def _panel(self, a, b):
        a, b = np.atleast_1d(a), np.atleast_1d(b)
        half = 0.5 * (b - a)
        s = 0.5 * (a + b)[:, None] + half[:, None] * self.gx[None, :]
        f = self.hf(s / 2.0) / (s * s)
        return half * (f @ self.gw)

    def __call__(self, t: float) -> float:
        if self.edges is None or t <= self.start:
            return 0.0
        k = int(np.searchsorted(self.edges, t, side="right") - 1)
        k = min(k, len(self.edges) - 2)
        return float(self.cum[k] + self._panel(self.edges[k], t)[0])


@lru_cache(maxsize=64)
def _tail_integral(hf: HFunction) -> _TailIntegral:
    return _TailIntegral(hf)


def inner_integral(hf: HFunction, t: float) -> float:
    """``I(t) = int_0^t H(s/2)/s^2 ds``; exactly ``t/4`` while ``s/2 <= D``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return min(t, 2.0 * hf.d_const) / 4.0 + _tail_integral(hf)(t)


def herbst_G(a_const: float, hf: HFunction, t: float, lam: float) -> float:
    """``G(t) = A t I(t) - lam t``."""
    return a_const * t * inner_integral(hf, t) - lam * t


def herbst_G_prime(a_const: float, hf: HFunction, t: float, lam: float) -> float:
    if t == 0:
        return -lam
    return a_const * inner_integral(hf, t) + a_const * float(hf(t / 2.0)) / t - lam


def laplace_bound(a_const: float, hf: HFunction, t: float) -> float:
    """``exp(A t I(t))``, the bound on ``E exp(tF)`` for centred 1-Lipschitz ``F``."""
    return math.exp(a_const * t * inner_integral(hf, t))


def minimize_G(a_const: float, hf: HFunction, lam: float):
    """``(t_star, min_{t>=0} G(t))``.

    Raises ``ValueError`` if ``G`` is still decreasing at ``t = 1e6``.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if a_const <= 0:
        raise ValueError("A must be positive")
    if lam == 0:
        return 0.0, 0.0
    g = lambda t: herbst_G(a_const, hf, t, lam)  # noqa: E731
    hi = 4.0 * lam / a_const
    g_prev = g(hi / 2.0)
    while True:
        g_hi = g(hi)
        if g_hi > g_prev:
            break
        if hi > T_MAX:
            raise ValueError(f"G still decreasing past t = {T_MAX:g}: lam = {lam!r} out of certified range")
        g_prev = g_hi
        hi *= 2.0
    lo = hi / 4.0 if hi > 4.0 * lam / a_const else 0.0
    t, val = golden_section(g, lo, hi, tol=1e-13)
    # polish on the first-order condition when it brackets
    d = lambda s: herbst_G_prime(a_const, hf, s, lam)  # noqa: E731
    a, b = max(lo, t * (1 - 1e-6)), min(hi, t * (1 + 1e-6))
    if a < b and d(a) < 0 < d(b):
        t2 = brentq(d, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        v2 = g(t2)
        if v2 <= val:
            t, val = t2, v2
    return float(t), float(val)


@dataclass(frozen=True)
class TailBound:
    """``lam -> 2 exp(min_t G_n(t))`` with ``A -> A n`` and ``lam -> lam / zeta``."""

    a_const: float
    h_fun: HFunction

    @property
    def regime_split(self) -> float:
        return self.split(1, 1.0)

    def split(self, n: int = 1, zeta: float = 1.0) -> float:
        """Largest ``lam`` with the purely Gaussian bound ``2 exp(-lam^2 / (A n zeta^2))``."""
        return self.a_const * n * zeta * self.h_fun.d_const

    def regime(self, lam: float, n: int = 1, zeta: float = 1.0) -> str:
        return "gaussian" if lam <= self.split(n, zeta) else "phi"

    def log_bound(self, lam: float, n: int = 1, zeta: float = 1.0) -> float:
        _check_nz(n, zeta)
        return math.log(2.0) + minimize_G(self.a_const * n, self.h_fun, lam / zeta)[1]

    def bound(self, lam: float, n: int = 1, zeta: float = 1.0) -> float:
        return math.exp(self.log_bound(lam, n, zeta))

    def table(self, lams: Sequence[float], n: int = 1, zeta: float = 1.0) -> list:
        rows = []
        for lam in lams:
            raw = self.bound(lam, n, zeta)
            rows.append({"lam": float(lam), "raw_bound": raw, "capped_bound": min(1.0, raw),
                         "regime": self.regime(lam, n, zeta)})
        return rows


def _check_nz(n, zeta):
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    if not zeta > 0:
        raise ValueError("zeta must be positive")


def tail_bound(a_const: float, hf: HFunction, lam: float, n: int = 1, zeta: float = 1.0) -> float:
    """Raw bound ``2 exp(min_t G_n(t))`` on ``P(|F - E F| >= lam)``."""
    return TailBound(a_const, hf).bound(lam, n, zeta)


def empirical_deviation(m: LogConcaveMeasure, f: Callable, n: int, lam_grid: Sequence[float],
                        trials: int, seed: int, block: int = 1000,
                        threads: Optional[int] = None) -> list:
    """Monte-Carlo ``P(|n^-1 sum f(X_k) - mu(f)| > lam)`` with binomial stderr.

    Trials run in blocks; block ``b`` draws from ``SeedSequence([seed, b])``
    so the table does not depend on the thread count.
    """
    if trials < MIN_TRIALS:
        raise ValueError(f"trials must be at least {MIN_TRIALS}")
    _check_nz(n, 1.0)
    lams = np.asarray(lam_grid, float)
    mean_f = m.expect(f)
    starts = list(range(0, trials, block))

    def run(b):
        size = min(block, trials - starts[b])
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), b]))
        x = m.sample_with(rng, size * n).reshape(size, n)
        dev = np.abs(np.asarray(f(x), float).mean(axis=1) - mean_f)
        return (dev[:, None] > lams[None, :]).sum(axis=0)

    k = thread_count(threads)
    if k == 1:
        counts = [run(b) for b in range(len(starts))]
    else:
        with ThreadPoolExecutor(k) as ex:
            counts = list(ex.map(run, range(len(starts))))
    total = np.sum(counts, axis=0)
    rows = []
    for lam, c in zip(lams, total):
        p = int(c) / trials
        rows.append({"lam": float(lam), "empirical": p, "stderr": math.sqrt(p * (1 - p) / trials),
                     "count": int(c), "trials": int(trials)})
    return rows


def tensorize(*constants: float) -> float:
    """LSI constant of a product measure: the max of the factors' constants."""
    if not constants:
        raise ValueError("need at least one constant")
    if any(c < 0 for c in constants):
        raise ValueError("constants must be nonnegative")
    return float(max(constants))
