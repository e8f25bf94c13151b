"""Adaptive panel quadrature with a Gauss-Kronrod (7, 15) pair.

Panels are bisected until the embedded-rule error estimate meets a local
tolerance proportional to panel length, so the accumulated error over the
whole interval stays below the requested absolute tolerance.  Integrands are
called with an array of nodes and may return vectors per node, which keeps
the cost of smooth vector-valued integrands at one call per panel.
"""

from __future__ import annotations

import numpy as np

from torusavg.errors import SolverError

__all__ = ["adaptive_quadrature", "QuadratureConfig"]

# Gauss-Kronrod 15-point nodes on [-1, 1]; odd-index nodes carry the embedded
# 7-point Gauss rule.
_XK = np.array([
    -0.991455371120813, -0.949107912342759, -0.864864423359769,
    -0.741531185599394, -0.586087235467691, -0.405845151377397,
    -0.207784955007898, 0.0, 0.207784955007898, 0.405845151377397,
    0.586087235467691, 0.741531185599394, 0.864864423359769,
    0.949107912342759, 0.991455371120813,
])
_WK = np.array([
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728, 0.204432940075298,
    0.190350578064785, 0.169004726639267, 0.140653259715525,
    0.104790010322250, 0.063092092629979, 0.022935322010529,
])
_WG = np.array([
    0.129484966168870, 0.279705391489277, 0.381830050505119,
    0.417959183673469, 0.381830050505119, 0.279705391489277,
    0.129484966168870,
])
_GAUSS_IDX = np.arange(1, 15, 2)


class QuadratureConfig:
    """Absolute tolerance and subdivision limits for adaptive quadrature."""

    def __init__(self, abs_tol=1e-10, max_panels=4000, initial_panels=4):
        if abs_tol <= 0 or max_panels < 1 or initial_panels < 1:
            raise ValueError("bad quadrature configuration")
        self.abs_tol = abs_tol
        self.max_panels = max_panels
        self.initial_panels = initial_panels


def _panel(f, a, b):
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    nodes = mid + half * _XK
    vals = np.asarray(f(nodes), dtype=float)
    if vals.shape[0] != 15:
        raise ValueError("integrand must return one value per node")
    k15 = half * np.tensordot(_WK, vals, axes=(0, 0))
    g7 = half * np.tensordot(_WG, vals[_GAUSS_IDX], axes=(0, 0))
    err = float(np.max(np.abs(k15 - g7)))
    return k15, err


def adaptive_quadrature(f, a, b, cfg: QuadratureConfig | None = None):
    """Integrate f over [a, b]; f maps an array of nodes to per-node values
    (scalars or vectors).  Returns (value, error_estimate).

    Raises SolverError if the panel budget is exhausted before every panel
    meets its share of the tolerance.
    """
    cfg = cfg or QuadratureConfig()
    if a == b:
        probe = np.asarray(f(np.array([a])), dtype=float)
        return np.zeros(probe.shape[1:]), 0.0
    sign = 1.0
    if b < a:
        a, b = b, a
        sign = -1.0
    length = b - a
    edges = np.linspace(a, b, cfg.initial_panels + 1)
    stack = [(edges[i], edges[i + 1]) for i in range(cfg.initial_panels)]
    total = None
    total_err = 0.0
    used = 0
    while stack:
        lo, hi = stack.pop()
        used += 1
        if used > cfg.max_panels:
            raise SolverError(
                f"quadrature did not converge within {cfg.max_panels} panels "
                f"(abs_tol={cfg.abs_tol})"
            )
        val, err = _panel(f, lo, hi)
        local_tol = cfg.abs_tol * (hi - lo) / length
        if err > local_tol and (hi - lo) > 1e-14 * length:
            mid = 0.5 * (lo + hi)
            stack.append((lo, mid))
            stack.append((mid, hi))
            continue
        total = val if total is None else total + val
        total_err += err
    return sign * total, total_err
