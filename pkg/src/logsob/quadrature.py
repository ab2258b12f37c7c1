"""Composite Gauss-Legendre panels with geometric grading at singular points."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

ORDER = 16
GRADING_LEVELS = 48


@lru_cache(maxsize=None)
def gauss_legendre(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def panel_rule(edges, order: int = ORDER):
    """Nodes and weights of the composite rule on consecutive ``edges``."""
    edges = np.asarray(edges, float)
    a, b = edges[:-1], edges[1:]
    x, w = gauss_legendre(order)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def graded_unit_edges(n_panels: int, levels: int = GRADING_LEVELS):
    """Edges on ``[0, 1]``: ``n_panels`` uniform panels, the first one split
    geometrically towards 0 (ratio 1/2) over ``levels`` levels."""
    first = 1.0 / n_panels
    grading = first * 0.5 ** np.arange(levels, 0, -1)
    return np.concatenate(([0.0], grading, np.linspace(first, 1.0, n_panels)))


def symmetric_edges(x_max: float, n_panels: int, breakpoints=()):
    """Edges on ``[-x_max, x_max]`` graded at 0, with extra breakpoints."""
    pos = x_max * graded_unit_edges(n_panels)
    edges = np.concatenate((-pos[::-1], pos[1:]))
    bp = np.asarray([b for b in np.ravel(breakpoints) if -x_max < b < x_max], float)
    if bp.size:
        edges = np.union1d(edges, bp)
    return edges


def unit_rule(n_panels: int, order: int = ORDER):
    """Graded rule on ``[0, 1]`` (cached per panel count)."""
    return _unit_rule(int(n_panels), int(order))


@lru_cache(maxsize=32)
def _unit_rule(n_panels: int, order: int):
    nodes, weights = panel_rule(graded_unit_edges(n_panels), order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def golden_section(fun, a: float, b: float, tol: float = 1e-12, max_iter: int = 500):
    """Minimise a unimodal ``fun`` on ``[a, b]``; returns ``(x, fun(x))``."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * (1.0 + abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    x = 0.5 * (a + b)
    fx = fun(x)
    best = min((fx, x), (fc, c), (fd, d))
    return best[1], best[0]
