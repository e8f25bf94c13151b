"""Compiled fixed-step propagators for the built-in 4D demonstration system.

Long Poincare-map runs (tens of thousands of returns at millions of RK4
steps) dominate the experiment runtime, so the default-configuration fields
are hard-coded here and jitted with numba.  Without numba the same functions
run as plain Python: correct, deterministic, roughly two orders of magnitude
slower.  All state is carried explicitly, so chunked calls resume exactly.

Lane status codes: 0 ok, 1 blow-up (non-finite or beyond 1e8),
2 angular-speed guard tripped, 3 no section return within the step budget.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import config as _numba_config
    from numba import njit, prange

    # the default layer probes TBB and warns on version mismatches; the
    # portable workqueue layer is all these embarrassingly parallel lane
    # loops need
    _numba_config.THREADING_LAYER = "workqueue"

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False
    prange = range

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


STATUS_OK = 0
STATUS_BLOWUP = 1
STATUS_GUARD = 2
STATUS_NO_RETURN = 3

_BLOWUP = 1.0e8


@njit(cache=True)
def _cart_rhs(x, y, u, v, eps_n, eps_n1, mu):
    r2 = x * x + y * y
    s2 = u * u + v * v
    dx = -y + eps_n * (y * u) + eps_n1 * (mu * x * r2)
    dy = x + eps_n * (-x * v) + eps_n1 * (-mu * y * r2 * r2)
    du = eps_n * (x * x * x) + eps_n1 * (x * x * (u * (1.0 - s2) + v))
    dv = eps_n * (y * y * y) + eps_n1 * (y * y * (v * (1.0 - s2) - u))
    return dx, dy, du, dv


@njit(cache=True)
def _cyl_rhs(theta, r, u, v, eps_n, eps_n1, mu):
    """Exact angular reduction of the Cartesian field: returns
    (dr/dtheta, du/dtheta, dv/dtheta, theta_speed)."""
    c = math.cos(theta)
    s = math.sin(theta)
    x = r * c
    y = r * s
    dx, dy, du, dv = _cart_rhs(x, y, u, v, eps_n, eps_n1, mu)
    rdot = (x * dx + y * dy) / r
    thdot = (x * dy - y * dx) / (r * r)
    return rdot / thdot, du / thdot, dv / thdot, thdot


@njit(cache=True, parallel=True)
def strobo_orbits(state, eps, mu, big_n, nsteps, niters, record, orbits, status):
    """Iterate the theta-stroboscopic return map of the reduced system.

    state: (B, 3) lanes of (r, u, v), updated in place to the final state.
    orbits: (niters, B, 3) output when record, else an unused (0, 0, 0) array.
    status: (B,) int lane codes; a nonzero lane is frozen.  Lanes are
    independent and run in parallel; results do not depend on scheduling.
    """
    eps_n = eps ** big_n
    eps_n1 = eps ** (big_n + 1)
    h = 2.0 * math.pi / nsteps
    nlanes = state.shape[0]
    for lane in prange(nlanes):
        if status[lane] != STATUS_OK:
            continue
        r = state[lane, 0]
        u = state[lane, 1]
        v = state[lane, 2]
        for it in range(niters):
            if status[lane] != STATUS_OK:
                if record:
                    orbits[it, lane, 0] = np.nan
                    orbits[it, lane, 1] = np.nan
                    orbits[it, lane, 2] = np.nan
                continue
            theta = 0.0
            for k in range(nsteps):
                a1, b1, c1, w1 = _cyl_rhs(theta, r, u, v, eps_n, eps_n1, mu)
                a2, b2, c2, w2 = _cyl_rhs(
                    theta + 0.5 * h, r + 0.5 * h * a1, u + 0.5 * h * b1, v + 0.5 * h * c1,
                    eps_n, eps_n1, mu)
                a3, b3, c3, w3 = _cyl_rhs(
                    theta + 0.5 * h, r + 0.5 * h * a2, u + 0.5 * h * b2, v + 0.5 * h * c2,
                    eps_n, eps_n1, mu)
                a4, b4, c4, w4 = _cyl_rhs(
                    theta + h, r + h * a3, u + h * b3, v + h * c3, eps_n, eps_n1, mu)
                r = r + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
                u = u + (h / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
                v = v + (h / 6.0) * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
                theta = theta + h
                if not (abs(r) + abs(u) + abs(v) < _BLOWUP):
                    status[lane] = STATUS_BLOWUP
                    break
                if not (w1 > 0.5 and w4 > 0.5):
                    status[lane] = STATUS_GUARD
                    break
            if status[lane] == STATUS_OK:
                if record:
                    orbits[it, lane, 0] = r
                    orbits[it, lane, 1] = u
                    orbits[it, lane, 2] = v
            elif record:
                orbits[it, lane, 0] = np.nan
                orbits[it, lane, 1] = np.nan
                orbits[it, lane, 2] = np.nan
        if status[lane] == STATUS_OK:
            state[lane, 0] = r
            state[lane, 1] = u
            state[lane, 2] = v
        else:
            state[lane, 0] = np.nan
            state[lane, 1] = np.nan
            state[lane, 2] = np.nan
    return niters


@njit(cache=True)
def _cart_step(t, x, y, u, v, h, eps_n, eps_n1, mu):
    a1, b1, c1, d1 = _cart_rhs(x, y, u, v, eps_n, eps_n1, mu)
    a2, b2, c2, d2 = _cart_rhs(
        x + 0.5 * h * a1, y + 0.5 * h * b1, u + 0.5 * h * c1, v + 0.5 * h * d1,
        eps_n, eps_n1, mu)
    a3, b3, c3, d3 = _cart_rhs(
        x + 0.5 * h * a2, y + 0.5 * h * b2, u + 0.5 * h * c2, v + 0.5 * h * d2,
        eps_n, eps_n1, mu)
    a4, b4, c4, d4 = _cart_rhs(
        x + h * a3, y + h * b3, u + h * c3, v + h * d3, eps_n, eps_n1, mu)
    return (
        x + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
        y + (h / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4),
        u + (h / 6.0) * (c1 + 2.0 * c2 + 2.0 * c3 + c4),
        v + (h / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4),
    )


@njit(cache=True, parallel=True)
def section_orbits(seeds, eps, mu, big_n, nsteps, niters, orbits, status):
    """Iterate the first-return map on the half-plane section {y = 0, x > 0}
    of the Cartesian system.

    seeds: (B, 4) start states, updated in place (state after the last
    accepted full step).  orbits: (niters, B, 3) crossings as (x, u, v).
    Crossing times are refined by bisection to ~1e-12 in time.
    """
    eps_n = eps ** big_n
    eps_n1 = eps ** (big_n + 1)
    h = 2.0 * math.pi / nsteps
    max_steps = (niters + 2) * nsteps * 3
    nlanes = seeds.shape[0]
    for lane in prange(nlanes):
        x = seeds[lane, 0]
        y = seeds[lane, 1]
        u = seeds[lane, 2]
        v = seeds[lane, 3]
        t = 0.0
        found = 0
        for _ in range(max_steps):
            if found >= niters:
                break
            xn, yn, un, vn = _cart_step(t, x, y, u, v, h, eps_n, eps_n1, mu)
            if not (abs(xn) + abs(yn) + abs(un) + abs(vn) < _BLOWUP):
                status[lane] = STATUS_BLOWUP
                break
            if y < 0.0 and yn >= 0.0:
                # bracket the upward crossing; bisection on the step fraction
                lo = 0.0
                hi = h
                xl, yl, ul, vl = x, y, u, v
                for _ in range(48):
                    mid = 0.5 * (lo + hi)
                    xm, ym, um, vm = _cart_step(t, x, y, u, v, mid, eps_n, eps_n1, mu)
                    if ym >= 0.0:
                        hi = mid
                    else:
                        lo = mid
                        xl, yl, ul, vl = xm, ym, um, vm
                if xl > 0.0:
                    orbits[found, lane, 0] = xl
                    orbits[found, lane, 1] = ul
                    orbits[found, lane, 2] = vl
                    found += 1
            x, y, u, v = xn, yn, un, vn
            t += h
        if status[lane] == STATUS_OK and found < niters:
            status[lane] = STATUS_NO_RETURN
        seeds[lane, 0] = x
        seeds[lane, 1] = y
        seeds[lane, 2] = u
        seeds[lane, 3] = v
    return niters
