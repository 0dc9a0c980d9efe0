"""Composite Gauss-Legendre rules graded toward singular points of the chart.

Tensor-product panels whose breakpoints accumulate geometrically at chosen
centres resolve point singularities like 1/|x - y| as well as nearby image
singularities sitting just outside the domain.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=32)
def gauss_legendre(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


@dataclass(frozen=True)
class GradedRule:
    order: int = 10
    ratio: float = 0.25     # geometric factor between successive panels
    depth: float = 1e-4     # smallest panel relative to the local scale
    max_panel: float = 0.25  # coarse panel length away from centres


def graded_breaks(lo, hi, centers, rule: GradedRule, floor=None):
    """Breakpoints on [lo, hi] accumulating at each centre.

    Around a centre c the panel edges are c +- d_k, d_k = scale * ratio^k,
    where scale is the distance to the nearest other centre (or the interval
    length). Refinement stops below floor (default scale * depth); pass the
    smallest length scale of the whole problem so that tensor panels resolve
    singularities that are close in the other coordinate.
    """
    pts = {float(lo), float(hi)}
    cs = sorted({float(c) for c in centers if lo <= c <= hi})
    pts.update(cs)
    L = hi - lo
    for c in cs:
        others = [abs(c - o) for o in cs if o != c]
        scale = min([L] + others)
        stop = scale * rule.depth if floor is None else min(floor, scale * rule.depth)
        d = scale
        while d > stop:
            for q in (c - d, c + d):
                if lo < q < hi:
                    pts.add(q)
            d *= rule.ratio
        d = scale
        while d < L:
            for q in (c - d, c + d):
                if lo < q < hi:
                    pts.add(q)
            d /= rule.ratio
    b = np.array(sorted(pts))
    tol = 1e-13 * max(1.0, abs(lo), abs(hi))
    b = b[np.concatenate([[True], np.diff(b) > tol])]
    b[-1] = hi
    out = [b[0]]
    for a, z in zip(b[:-1], b[1:]):
        n = int(np.ceil((z - a) / rule.max_panel))
        out.extend(a + (z - a) * np.arange(1, n + 1) / n)
    return np.array(out)


def panel_nodes(breaks, order):
    x, w = gauss_legendre(order)
    a = breaks[:-1, None]
    h = (breaks[1:] - breaks[:-1])[:, None]
    nodes = a + 0.5 * h * (x[None, :] + 1)
    weights = 0.5 * h * w[None, :]
    return nodes.ravel(), weights.ravel()


def tensor_nodes(breaks_x, breaks_y, order):
    """Flattened (X, Y, W) for the tensor rule on the panel mesh."""
    x, wx = panel_nodes(np.asarray(breaks_x, float), order)
    y, wy = panel_nodes(np.asarray(breaks_y, float), order)
    X, Y = np.meshgrid(x, y, indexing="ij")
    W = np.outer(wx, wy)
    return X.ravel(), Y.ravel(), W.ravel()


def integrate_tensor(f, breaks_x, breaks_y, order, chunk=400_000):
    """Sum f(X, Y) * W over the tensor rule; f may return (k, n) arrays."""
    X, Y, W = tensor_nodes(breaks_x, breaks_y, order)
    total = None
    for a in range(0, len(X), chunk):
        v = np.asarray(f(X[a:a + chunk], Y[a:a + chunk]))
        s = v @ W[a:a + chunk]
        total = s if total is None else total + s
    return total
