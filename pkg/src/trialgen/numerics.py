"""Quadrature and root finding for scenario calibration.

All integrals are over the unit interval. A composite Gauss-Legendre
rule (32 panels x 8 nodes) is accurate far beyond the 1e-8 tolerance the
calibration solvers need for these smooth logistic integrands.
"""

from typing import Callable

import numpy as np

_PANELS = 32
_NODES_PER_PANEL = 8


def _unit_interval_rule() -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(_NODES_PER_PANEL)
    edges = np.linspace(0.0, 1.0, _PANELS + 1)
    half_width = np.diff(edges) / 2.0
    midpoints = (edges[:-1] + edges[1:]) / 2.0
    x = (midpoints[:, None] + half_width[:, None] * nodes[None, :]).ravel()
    w = (half_width[:, None] * weights[None, :]).ravel()
    return x, w


_X01, _W01 = _unit_interval_rule()


def integrate01(f: Callable[[np.ndarray], np.ndarray]) -> float:
    """Integrate a vectorized function over (0, 1)."""
    return float(_W01 @ f(_X01))


def bisect(f: Callable[[float], float], lo: float, hi: float,
           tol: float = 1e-10, max_iter: int = 200) -> float:
    """Root of a scalar function by bisection; f(lo) and f(hi) must differ in sign."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0.0:
        raise ValueError(f"no sign change on [{lo}, {hi}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if fmid == 0.0 or (hi - lo) / 2.0 < tol:
            return mid
        if flo * fmid < 0.0:
            hi = mid
        else:
            lo, flo = mid, fmid
    return 0.5 * (lo + hi)
