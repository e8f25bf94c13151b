"""Periodically forced perturbative systems defined by expression components.

A ``SystemSpec`` holds the data of a T-periodic field written as a power
series in a small parameter,

    dx/dt = sum_{i=1}^{N} eps^i F_i(t, x)  (+ eps^{N+1} remainder),

with each F_i given componentwise by parsed expressions (or omitted, meaning
zero).  Partial derivatives of any order come from exact symbolic
differentiation; repeated mixed partials are cached in compiled form since
the averaging recursion evaluates them at every quadrature node.

Definition files are TOML with keys ``name, n, T, N`` and ``[[order]]``
blocks; see ``load_system``.  Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from torusavg import expr as ex

__all__ = [
    "SystemSpec",
    "AutonomousField",
    "derivative_tensor",
    "load_system",
    "parse_constant",
    "SystemDefinitionError",
]


class SystemDefinitionError(ValueError):
    """Invalid system definition (bad keys, dimensions, or periodicity)."""


def parse_constant(value, what="value"):
    """Accept a float or a constant expression string like "2*pi"."""
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            tree = ex.parse_expr(value, n=0)
        except ex.ExprSyntaxError as err:
            raise SystemDefinitionError(f"bad {what} expression {value!r}: {err}") from err
        if ex.free_variables(tree):
            raise SystemDefinitionError(f"{what} must be constant, got {value!r}")
        return float(ex.eval_expr(tree, 0.0, ()))
    raise SystemDefinitionError(f"{what} must be a number or string, got {type(value).__name__}")


@dataclass
class SystemSpec:
    """A T-periodic perturbed field with expression components per order."""

    n: int
    T: float
    N: int
    components: dict  # order i -> list of n Expr
    name: str = ""
    remainder: object = None  # optional callable (t, x, eps) -> n-vector

    _compiled: dict = field(default_factory=dict, repr=False)
    _partials: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.n < 1 or self.N < 1 or self.T <= 0:
            raise SystemDefinitionError("need n >= 1, N >= 1, T > 0")
        for i, comps in self.components.items():
            if not 1 <= i <= self.N:
                raise SystemDefinitionError(f"order {i} outside 1..{self.N}")
            if len(comps) != self.n:
                raise SystemDefinitionError(
                    f"order {i} has {len(comps)} components, expected {self.n}"
                )

    # -- evaluation ---------------------------------------------------------

    def _fn(self, i, c):
        key = (i, c)
        if key not in self._compiled:
            comps = self.components.get(i)
            tree = comps[c] if comps is not None else ex.Num(0.0)
            self._compiled[key] = ex.compile_expr(tree)
        return self._compiled[key]

    def field_order(self, i, t, x):
        """F_i(t, x) as an n-vector (t may be an array; result broadcasts)."""
        if not 1 <= i <= self.N:
            raise ValueError(f"order {i} outside 1..{self.N}")
        t = np.asarray(t, dtype=float)
        cols = [np.broadcast_to(np.asarray(self._fn(i, c)(t, x), dtype=float), t.shape)
                for c in range(self.n)]
        return np.stack(cols, axis=-1) if t.ndim else np.array([np.asarray(v).item() for v in cols])

    def field_eps(self, t, x, eps):
        """The full field sum_i eps^i F_i (+ eps^{N+1} remainder)."""
        out = np.zeros(self.n)
        for i in range(1, self.N + 1):
            if i in self.components:
                out += eps ** i * self.field_order(i, t, x)
        if self.remainder is not None:
            out += eps ** (self.N + 1) * np.asarray(self.remainder(t, x, eps), dtype=float)
        return out

    def _partial(self, i, c, multi):
        """Compiled d^m F_i[c] / dx_multi with `multi` a sorted tuple of
        1-based variable indices."""
        key = (i, c, multi)
        if key not in self._partials:
            comps = self.components.get(i)
            tree = comps[c] if comps is not None else ex.Num(0.0)
            for j in multi:
                tree = ex.diff_expr(tree, f"x{j}")
            self._partials[key] = ex.compile_expr(tree)
        return self._partials[key]

    def jacobian_order(self, i, t, x):
        """D_x F_i(t, x) as an (n, n) matrix."""
        out = np.empty((self.n, self.n))
        for c in range(self.n):
            for j in range(1, self.n + 1):
                out[c, j - 1] = self._partial(i, c, (j,))(t, x)
        return out

    def periodicity_defect(self, samples=12, seed=0):
        """max |F_i(t+T, x) - F_i(t, x)| over sampled (t, x); periodicity is
        declared by the user, this is the spot check."""
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(samples):
            t = float(rng.uniform(0.0, self.T))
            x = rng.uniform(-1.0, 1.0, size=self.n)
            for i in self.components:
                d = self.field_order(i, t + self.T, x) - self.field_order(i, t, x)
                worst = max(worst, float(np.max(np.abs(d))))
        return worst


def derivative_tensor(spec: SystemSpec, i: int, m: int, t, x, dirs):
    """Apply the symmetric m-linear map D_x^m F_i(t, x) to m direction
    vectors.

    Computed from cached symbolic partials: the (c)-th output component is
    sum over index tuples (j1..jm) of d^m F_i[c]/dx_j1..dx_jm * prod_k
    dirs[k][jk].  `t` may be an array, in which case the result has shape
    (len(t), n) and each direction may be either a fixed n-vector or an
    array of per-node vectors.
    """
    if not 1 <= i <= spec.N:
        raise ValueError(f"order {i} outside 1..{spec.N}")
    if m < 1:
        raise ValueError("tensor order m must be >= 1")
    if len(dirs) != m:
        raise ValueError(f"need {m} direction vectors, got {len(dirs)}")
    if i not in spec.components:
        t_arr = np.asarray(t, dtype=float)
        shape = t_arr.shape + (spec.n,)
        return np.zeros(shape) if t_arr.ndim else np.zeros(spec.n)

    t_arr = np.asarray(t, dtype=float)
    dirs = [np.asarray(d, dtype=float) for d in dirs]
    scalar_t = t_arr.ndim == 0
    out_shape = (spec.n,) if scalar_t else t_arr.shape + (spec.n,)
    out = np.zeros(out_shape)

    for c in range(spec.n):
        # evaluate each distinct mixed partial once, contract over orderings
        cache = {}
        for ordered in itertools.product(range(1, spec.n + 1), repeat=m):
            key = tuple(sorted(ordered))
            if key not in cache:
                cache[key] = np.asarray(spec._partial(i, c, key)(t_arr, x), dtype=float)
            val = cache[key]
            if np.all(val == 0.0):
                continue
            prod = 1.0
            for k, j in enumerate(ordered):
                prod = prod * (dirs[k][j - 1] if dirs[k].ndim == 1 else dirs[k][..., j - 1])
            term = val * prod
            if scalar_t:
                out[c] += float(np.asarray(term))
            else:
                out[..., c] += term
    return out


_TOP_KEYS = {"name", "n", "T", "N", "order"}
_ORDER_KEYS = {"i", "components"}


def load_system(path) -> SystemSpec:
    """Load a system definition from a TOML file.

    Schema::

        name = "my system"        # optional
        n = 2                     # dimension
        T = "2*pi"                # period (number or constant expression)
        N = 3                     # truncation order

        [[order]]
        i = 1
        components = ["sin(t)*x1", "cos(t)*x2"]

    Orders not listed are identically zero.  Unknown keys anywhere are
    rejected.  Each listed component is spot-checked for T-periodicity on a
    sampled grid (tolerance 1e-10).
    """
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return system_from_dict(data, origin=str(path))


def system_from_dict(data, origin="<config>") -> SystemSpec:
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise SystemDefinitionError(f"{origin}: unknown keys {sorted(unknown)}")
    for req in ("n", "T", "N"):
        if req not in data:
            raise SystemDefinitionError(f"{origin}: missing key {req!r}")
    n = int(data["n"])
    T = parse_constant(data["T"], what="T")
    N = int(data["N"])
    components = {}
    for block in data.get("order", []):
        bad = set(block) - _ORDER_KEYS
        if bad:
            raise SystemDefinitionError(f"{origin}: unknown order keys {sorted(bad)}")
        if "i" not in block or "components" not in block:
            raise SystemDefinitionError(f"{origin}: order block needs 'i' and 'components'")
        i = int(block["i"])
        comps = [ex.parse_expr(src, n) for src in block["components"]]
        if i in components:
            raise SystemDefinitionError(f"{origin}: duplicate order {i}")
        components[i] = comps
    spec = SystemSpec(n=n, T=T, N=N, components=components, name=str(data.get("name", "")))
    defect = spec.periodicity_defect()
    if defect > 1e-10:
        raise SystemDefinitionError(
            f"{origin}: components are not T-periodic (spot-check defect {defect:.3e})"
        )
    return spec


def system_from_strings(n, T, N, orders, name="") -> SystemSpec:
    """Build a spec from {order: [expr strings]} without a file."""
    components = {i: [ex.parse_expr(s, n) for s in comps] for i, comps in orders.items()}
    return SystemSpec(n=n, T=parse_constant(T, what="T"), N=N, components=components, name=name)


class AutonomousField:
    """Time-independent field defined by n expressions in x1..xn, with exact
    symbolic Jacobian and divergence.  Callable as field(t, z); t is ignored,
    which lets the same object drive the time-dependent flow routines."""

    def __init__(self, exprs, name=""):
        self.n = len(exprs)
        self.name = name
        trees = []
        for e in exprs:
            tree = ex.parse_expr(e, self.n) if isinstance(e, str) else e
            if "t" in ex.free_variables(tree):
                raise SystemDefinitionError("autonomous field must not reference t")
            trees.append(tree)
        self.trees = trees
        self._f = [ex.compile_expr(tr) for tr in trees]
        self._jac = [
            [ex.compile_expr(ex.diff_expr(tr, f"x{j}")) for j in range(1, self.n + 1)]
            for tr in trees
        ]

    def __call__(self, t, z):
        return np.array([f(0.0, z) for f in self._f], dtype=float)

    def jacobian(self, t, z):
        return np.array([[fj(0.0, z) for fj in row] for row in self._jac], dtype=float)

    def divergence(self, t, z):
        return float(sum(self._jac[i][i](0.0, z) for i in range(self.n)))
