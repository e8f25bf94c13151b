"""Trajectory, variational, and parameter-jet flows of perturbed systems.

One Dormand-Prince 5(4) adaptive stepper and one fixed-step classical RK4
drive everything: plain trajectories, tangent (variational) flows carrying
the fundamental matrix, and truncated power-series flows in the perturbation
parameter.  The jet flow integrates the coefficient hierarchy obtained by
expanding F(t, z(t, eps)) around the order-zero solution, so its order-zero
coefficient follows exactly the unperturbed field.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from torusavg.bell import EpsJet
from torusavg.errors import BlowupError, SolverError
from torusavg.system import SystemSpec, derivative_tensor

__all__ = [
    "IntegratorConfig",
    "VariationalState",
    "CallableField",
    "EpsField",
    "flow",
    "flow_variational",
    "flow_jet",
]


@dataclass(frozen=True)
class IntegratorConfig:
    """method "rk45" (adaptive, abs_tol/rel_tol) or "rk4" (fixed step)."""

    method: str = "rk45"
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    step: float = 1e-3
    max_steps: int = 10_000_000
    blowup: float = 1e8

    def __post_init__(self):
        if self.method not in ("rk45", "rk4"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.abs_tol <= 0 or self.rel_tol <= 0 or self.step <= 0 or self.max_steps <= 0:
            raise ValueError("tolerances, step, and max_steps must be positive")


@dataclass
class VariationalState:
    """Base point and tangent (fundamental) matrix after a variational flow."""

    z: np.ndarray
    psi: np.ndarray


class CallableField:
    """Wrap a plain callable f(t, z) with an optional Jacobian evaluator."""

    def __init__(self, f, jacobian=None):
        self._f = f
        self._jac = jacobian

    def __call__(self, t, z):
        return np.asarray(self._f(t, z), dtype=float)

    def jacobian(self, t, z):
        if self._jac is None:
            raise ValueError("field has no Jacobian evaluator")
        return np.asarray(self._jac(t, z), dtype=float)


class EpsField:
    """The full perturbed field sum_i eps^i F_i (+ remainder) of a spec at a
    fixed parameter value, with the symbolic Jacobian of the series part."""

    def __init__(self, spec: SystemSpec, eps: float, include_remainder=True):
        self.spec = spec
        self.eps = float(eps)
        self.include_remainder = include_remainder

    def __call__(self, t, z):
        if self.include_remainder:
            return self.spec.field_eps(t, z, self.eps)
        out = np.zeros(self.spec.n)
        for i in self.spec.components:
            out += self.eps ** i * self.spec.field_order(i, t, z)
        return out

    def jacobian(self, t, z):
        if self.include_remainder and self.spec.remainder is not None:
            raise ValueError("Jacobian unavailable for a spec with a remainder term")
        J = np.zeros((self.spec.n, self.spec.n))
        for i in self.spec.components:
            J += self.eps ** i * self.spec.jacobian_order(i, t, z)
        return J


# Dormand-Prince 5(4) tableau
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)


def _check_finite(y, t, cfg):
    if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > cfg.blowup:
        raise BlowupError(f"trajectory blow-up at t={t:.6g}", time=t)


def _rk45(f, t0, t1, y0, cfg):
    t, y = t0, y0.copy()
    direction = 1.0 if t1 >= t0 else -1.0
    span = abs(t1 - t0)
    h = direction * min(span, max(span / 100.0, 1e-8))
    k1 = np.asarray(f(t, y), dtype=float)
    steps = 0
    while (t1 - t) * direction > 0:
        if steps >= cfg.max_steps:
            raise SolverError(f"max_steps={cfg.max_steps} exceeded at t={t:.6g}")
        if (t + h - t1) * direction > 0:
            h = t1 - t
        ks = [k1]
        for i in range(1, 7):
            yi = y + h * sum(a * k for a, k in zip(_DP_A[i], ks))
            ks.append(np.asarray(f(t + _DP_C[i] * h, yi), dtype=float))
        y5 = y + h * sum(b * k for b, k in zip(_DP_B5, ks))
        y4 = y + h * sum(b * k for b, k in zip(_DP_B4, ks))
        scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y5))
        err = float(np.sqrt(np.mean((np.abs(y5 - y4) / scale) ** 2)))
        steps += 1
        if err <= 1.0:
            t = t + h
            y = y5
            _check_finite(y, t, cfg)
            k1 = ks[6]  # FSAL
        else:
            k1 = ks[0]
        factor = 0.9 * err ** -0.2 if err > 0 else 5.0
        h = h * min(5.0, max(0.2, factor))
        if abs(h) < 1e-15 * max(1.0, abs(t)):
            raise SolverError(f"step size underflow at t={t:.6g}")
    return y


def _rk4(f, t0, t1, y0, cfg):
    span = t1 - t0
    if span == 0.0:
        return y0.copy()
    nsteps = max(1, int(math.ceil(abs(span) / cfg.step)))
    if nsteps > cfg.max_steps:
        raise SolverError(f"max_steps={cfg.max_steps} exceeded")
    h = span / nsteps
    t, y = t0, y0.copy()
    for k in range(nsteps):
        k1 = np.asarray(f(t, y), dtype=float)
        k2 = np.asarray(f(t + 0.5 * h, y + 0.5 * h * k1), dtype=float)
        k3 = np.asarray(f(t + 0.5 * h, y + 0.5 * h * k2), dtype=float)
        k4 = np.asarray(f(t + h, y + h * k3), dtype=float)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t0 + (k + 1) * h
        _check_finite(y, t, cfg)
    return y


def _integrate(f, t0, t1, y0, cfg):
    y0 = np.asarray(y0, dtype=float)
    if t0 == t1:
        return y0.copy()
    if cfg.method == "rk4":
        return _rk4(f, t0, t1, y0, cfg)
    return _rk45(f, t0, t1, y0, cfg)


def flow(field, t0, t1, z0, cfg: IntegratorConfig | None = None):
    """State at time t1 of dz/dt = field(t, z) from z(t0) = z0.

    Backward integration (t1 < t0) is allowed.  Raises BlowupError when the
    state leaves the admissible region and SolverError on step failures.
    """
    cfg = cfg or IntegratorConfig()
    return _integrate(field, t0, t1, z0, cfg)


def flow_variational(field, t0, t1, z0, cfg: IntegratorConfig | None = None):
    """Integrate the pair dz/dt = f(t, z), dPsi/dt = Df(t, z) Psi with
    Psi(t0) = I; `field` must expose a `jacobian(t, z)` evaluator."""
    cfg = cfg or IntegratorConfig()
    z0 = np.asarray(z0, dtype=float)
    n = z0.size
    jac = field.jacobian

    def rhs(t, state):
        z = state[:n]
        psi = state[n:].reshape(n, n)
        dz = np.asarray(field(t, z), dtype=float)
        dpsi = jac(t, z) @ psi
        return np.concatenate([dz, dpsi.ravel()])

    y0 = np.concatenate([z0, np.eye(n).ravel()])
    out = _integrate(rhs, t0, t1, y0, cfg)
    return VariationalState(z=out[:n], psi=out[n:].reshape(n, n))


def _jet_plan(N):
    """Terms of the expansion of eps^i F_i(t, c0 + sum_k eps^k c_k): tuples
    (i, m, orders, weight) contributing weight * D^m F_i[c_k1, ..., c_km] to
    the coefficient of eps^(i + sum(orders))."""
    plan = []
    for i in range(1, N + 1):
        budget = N - i
        for m in range(1, budget + 1):
            for orders in itertools.combinations_with_replacement(range(1, budget + 1), m):
                if sum(orders) > budget:
                    continue
                weight = 1.0
                for mult in (orders.count(v) for v in set(orders)):
                    weight /= math.factorial(mult)
                plan.append((i, m, orders, weight))
    return plan


def flow_jet(spec: SystemSpec, t0, t1, z0, cfg: IntegratorConfig | None = None) -> EpsJet:
    """Propagate the truncated eps-expansion of the solution through the ODE.

    Returns the jet of z(t1, z0, eps) of order spec.N.  The order-zero
    coefficient integrates the eps=0 field (identically zero for a purely
    perturbative spec), so it stays at z0 exactly.
    """
    cfg = cfg or IntegratorConfig()
    z0 = np.asarray(z0, dtype=float)
    n, N = spec.n, spec.N
    plan = _jet_plan(N)

    def rhs(t, state):
        C = state.reshape(N + 1, n)
        out = np.zeros_like(C)
        c0 = C[0]
        for i in range(1, N + 1):
            if i in spec.components:
                out[i] += spec.field_order(i, t, c0)
        for i, m, orders, weight in plan:
            if i not in spec.components:
                continue
            target = i + sum(orders)
            dirs = [C[k] for k in orders]
            out[target] += weight * derivative_tensor(spec, i, m, t, c0, dirs)
        return out.ravel()

    y0 = np.zeros((N + 1) * n)
    y0[:n] = z0
    out = _integrate(rhs, t0, t1, y0, cfg)
    return EpsJet.from_coeffs(out.reshape(N + 1, n))
