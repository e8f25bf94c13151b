"""Averaged/Melnikov functions of arbitrary order by the Bell recursion.

For a perturbative T-periodic field with orders F_1..F_N, the displacement
of the time-T map is determined by the functions

    y_1(t, z) = int_0^t F_1(s, z) ds,
    y_i(t, z) = int_0^t ( i! F_i(s, z)
                + sum_{j=1}^{i-1} sum_{m=1}^{j} (i!/j!)
                  D_x^m F_{i-j}(s, z) [B(j, m)(y_1, ..., y_{j-m+1})(s, z)] ) ds,

where the partial Bell polynomial of the vector-valued lower-order y's is
interpreted monomial by monomial: each exponent pattern feeds the matching
multiset of y-vectors into the symmetric m-linear derivative map.  The i-th
order function is f_i(z) = y_i(T, z) / i!; it is the coefficient of eps^i in
the time-T map, which `melnikov_f_via_jet` exploits as an independent check.

Evaluation uses adaptive Gauss-Kronrod panels.  Lower-order y values are
memoized on every node where they get computed and new nodes integrate
incrementally from the nearest cached point, which turns an exponential
recursion into a near-linear pass.
"""

from __future__ import annotations

import bisect
import math

import numpy as np

from torusavg.bell import BellTable
from torusavg.errors import HypothesisError
from torusavg.integrate import IntegratorConfig, flow_jet
from torusavg.quadrature import QuadratureConfig, adaptive_quadrature
from torusavg.system import SystemSpec, derivative_tensor

__all__ = [
    "MelnikovEvaluator",
    "MelnikovFunction",
    "melnikov_y",
    "melnikov_f",
    "melnikov_f_via_jet",
    "averaged_g",
    "AveragedField",
    "vanishing_defect",
    "sample_box",
]

_BELL = BellTable(max_n=12)


class MelnikovEvaluator:
    """The y-hierarchy of one spec at one base point z.

    Instances memoize y_j values at every abscissa where they were computed;
    reuse one instance when evaluating several orders at the same z.
    """

    def __init__(self, spec: SystemSpec, z, quad: QuadratureConfig | None = None):
        self.spec = spec
        self.z = np.asarray(z, dtype=float)
        if self.z.shape != (spec.n,):
            raise ValueError(f"z must have shape ({spec.n},)")
        self.quad = quad or QuadratureConfig(abs_tol=1e-10)
        zero = np.zeros(spec.n)
        zero.setflags(write=False)
        self._values = {j: {0.0: zero} for j in range(1, spec.N + 1)}
        self._grid = {j: [0.0] for j in range(1, spec.N + 1)}

    def y(self, j, t):
        """y_j(t, z) for scalar t."""
        if not 1 <= j <= self.spec.N:
            raise ValueError(f"order {j} outside 1..{self.spec.N}")
        t = float(t)
        vals = self._values[j]
        hit = vals.get(t)
        if hit is not None:
            return hit
        grid = self._grid[j]
        pos = bisect.bisect_left(grid, t)
        # integrate incrementally from the nearest cached abscissa
        candidates = []
        if pos > 0:
            candidates.append(grid[pos - 1])
        if pos < len(grid):
            candidates.append(grid[pos])
        s0 = min(candidates, key=lambda s: abs(s - t))
        frac = max(abs(t - s0) / max(self.spec.T, 1e-300), 1e-3)
        cfg = QuadratureConfig(
            abs_tol=self.quad.abs_tol * frac,
            max_panels=self.quad.max_panels,
            initial_panels=1,
        )
        inc, _ = adaptive_quadrature(lambda s: self._integrand(j, s), s0, t, cfg)
        val = vals[s0] + inc
        val.setflags(write=False)
        vals[t] = val
        bisect.insort(grid, t)
        return val

    def _y_nodes(self, j, s_nodes):
        return np.stack([self.y(j, float(s)) for s in s_nodes])

    def _integrand(self, i, s_nodes):
        """Integrand of y_i at an array of abscissas; shape (len(s), n)."""
        spec = self.spec
        s_nodes = np.asarray(s_nodes, dtype=float)
        out = np.zeros((s_nodes.size, spec.n))
        if i in spec.components:
            out += math.factorial(i) * spec.field_order(i, s_nodes, self.z)
        for j in range(1, i):
            order_f = i - j
            if order_f not in spec.components:
                continue
            coef_ij = math.factorial(i) / math.factorial(j)
            y_cache = {}
            for m in range(1, j + 1):
                for expo, c in _BELL.coefficients(j, m).items():
                    dirs = []
                    for p, a in enumerate(expo, start=1):
                        if a == 0:
                            continue
                        if p not in y_cache:
                            y_cache[p] = self._y_nodes(p, s_nodes)
                        dirs.extend([y_cache[p]] * a)
                    if not dirs:
                        continue
                    term = derivative_tensor(spec, order_f, m, s_nodes, self.z, dirs)
                    out += coef_ij * c * term
        return out

    def f(self, i):
        """f_i(z) = y_i(T, z) / i!."""
        return self.y(i, self.spec.T) / math.factorial(i)


def melnikov_y(spec: SystemSpec, i: int, t: float, z, quad=None):
    """y_i(t, z); the i-th running integral of the displacement hierarchy."""
    return MelnikovEvaluator(spec, z, quad).y(i, t)


def melnikov_f(spec: SystemSpec, i: int, z, quad=None, evaluator=None):
    """The order-i Melnikov function f_i(z) = y_i(T, z) / i!.

    f_0 is identically zero.  Pass a shared `evaluator` when computing
    several orders at the same point.
    """
    if i == 0:
        return np.zeros(spec.n)
    ev = evaluator or MelnikovEvaluator(spec, z, quad)
    return ev.f(i)


def melnikov_f_via_jet(spec: SystemSpec, i: int, z, cfg: IntegratorConfig | None = None):
    """Independent route to f_i(z): coefficient i of the parameter-jet of the
    time-T map.  Agreement with `melnikov_f` validates both paths."""
    if not 0 <= i <= spec.N:
        raise ValueError(f"order {i} outside 0..{spec.N}")
    cfg = cfg or IntegratorConfig(abs_tol=1e-12, rel_tol=1e-12)
    jet = flow_jet(spec, 0.0, spec.T, z, cfg)
    if i == 0:
        return jet.coeffs[0] - np.asarray(z, dtype=float)  # displacement: zero
    return jet.coeffs[i]


class MelnikovFunction:
    """The order-i Melnikov function of a spec as a callable value.

    Bundles the order, the period, and the sampled vanishing flags of the
    lower orders (which decide whether f_i/T is the order-i averaged
    function).  The order-0 function is identically zero.
    """

    def __init__(self, spec: SystemSpec, order: int, quad=None):
        if not 0 <= order <= spec.N:
            raise ValueError(f"order {order} outside 0..{spec.N}")
        self.spec = spec
        self.order = order
        self.quad = quad

    @property
    def T(self):
        return self.spec.T

    def __call__(self, z):
        return melnikov_f(self.spec, self.order, z, self.quad)

    def vanishing_flags(self, points=None, box=None, tol=1e-8):
        """Sampled |f_j| <= tol verdicts for j = 1..order-1."""
        if points is None:
            points = sample_box(box or [(-1.0, 1.0)] * self.spec.n)
        flags = []
        for j in range(1, self.order):
            defect = vanishing_defect(self.spec, [j], points, self.quad)
            flags.append(bool(defect <= tol))
        return flags

    def averaged(self, z, **kwargs):
        """g_i(z) = f_i(z)/T, guarded by the vanishing hypothesis."""
        return averaged_g(self.spec, self.order, z, self.quad, **kwargs)


def sample_box(bounds, per_dim=32, cap=1024, seed=0):
    """Sample points in a box given as [(lo, hi)] * n: the full per_dim
    product grid when it has at most `cap` points, otherwise `cap` seeded
    uniform draws."""
    bounds = [(float(lo), float(hi)) for lo, hi in bounds]
    n = len(bounds)
    if per_dim ** n <= cap:
        axes = [np.linspace(lo, hi, per_dim) for lo, hi in bounds]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)
    rng = np.random.default_rng(seed)
    pts = rng.uniform(size=(cap, n))
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    return lo + pts * (hi - lo)


def vanishing_defect(spec: SystemSpec, orders, points, quad=None):
    """max over sample points and requested orders of |f_j(z)|."""
    worst = 0.0
    for z in np.atleast_2d(points):
        ev = MelnikovEvaluator(spec, z, quad)
        for j in orders:
            worst = max(worst, float(np.max(np.abs(ev.f(j)))))
    return worst


def averaged_g(
    spec: SystemSpec,
    ell: int,
    z,
    quad=None,
    check=True,
    vanish_tol=1e-8,
    box=None,
    points=None,
):
    """The order-ell averaged function g_ell(z) = f_ell(z) / T.

    Valid when all lower-order Melnikov functions vanish; with `check` the
    hypothesis is sampled (|f_j| <= vanish_tol for j < ell over `points`, or
    a default grid over `box`, or over [-1, 1]^n) and a HypothesisError is
    raised on violation.  Computing averaged functions without the vanishing
    hypothesis requires the near-identity transform machinery and is not
    supported.
    """
    if not 1 <= ell <= spec.N:
        raise ValueError(f"order {ell} outside 1..{spec.N}")
    if ell > 1 and check:
        if points is None:
            points = sample_box(box or [(-1.0, 1.0)] * spec.n)
        defect = vanishing_defect(spec, range(1, ell), points, quad)
        if defect > vanish_tol:
            raise HypothesisError(
                f"lower-order functions do not vanish (max |f_j| = {defect:.3e} "
                f"> {vanish_tol:.1e} for some j < {ell}); g_{ell} is undefined "
                "by the direct formula"
            )
    return melnikov_f(spec, ell, z, quad) / spec.T


class AveragedField:
    """Autonomous guiding field z -> g_ell(z), hypothesis-checked once.

    Callable as field(t, z) so it plugs into the flow routines; t is ignored.
    """

    def __init__(self, spec, ell, quad=None, check=True, vanish_tol=1e-8, box=None, points=None):
        if ell > 1 and check:
            pts = points if points is not None else sample_box(box or [(-1.0, 1.0)] * spec.n)
            defect = vanishing_defect(spec, range(1, ell), pts, quad)
            if defect > vanish_tol:
                raise HypothesisError(
                    f"lower-order functions do not vanish (max |f_j| = {defect:.3e})"
                )
        self.spec = spec
        self.ell = ell
        self.quad = quad

    def __call__(self, t, z):
        return melnikov_f(self.spec, self.ell, z, self.quad) / self.spec.T
