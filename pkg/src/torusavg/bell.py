"""Partial Bell polynomials and truncated power-series (jet) arithmetic.

The partial Bell polynomial B(n, k) in variables x1, ..., x(n-k+1) is the sum
over all partitions of an n-element set into k blocks of the product of
x(block size) over the blocks.  It is computed here by the standard binomial
recurrence

    B(n, k) = sum_{j=1}^{n-k+1} C(n-1, j-1) * x_j * B(n-j, k-1),

which keeps every coefficient an exact integer.  ``BellTable`` additionally
exposes the monomial structure of B(n, k) (exponent tuple -> coefficient),
which is what the Melnikov recursion needs in order to feed vector-valued
arguments into multilinear derivative maps.

``EpsJet`` is a dense truncated Taylor polynomial in a small parameter with
scalar or vector coefficients; arithmetic never produces terms beyond the
truncation order.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from math import comb

import numpy as np

__all__ = ["BellTable", "EpsJet", "bell_eval", "jet_mul", "jet_extract"]


def bell_eval(n, k, x):
    """Evaluate the partial Bell polynomial B(n, k) at x = (x1, ..., x(n-k+1)).

    Arguments may be exact integers (result is exact), floats, or numpy
    arrays (evaluated elementwise).  Requires 1 <= k <= n and exactly
    n - k + 1 arguments.
    """
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got n={n}, k={k}")
    if len(x) != n - k + 1:
        raise ValueError(f"B({n},{k}) takes {n - k + 1} arguments, got {len(x)}")

    memo = {}

    def rec(nn, kk):
        if kk == 0:
            return 1 if nn == 0 else 0
        if nn == 0:
            return 0
        key = (nn, kk)
        if key not in memo:
            acc = 0
            for j in range(1, nn - kk + 2):
                if j - 1 >= len(x):
                    break
                lower = rec(nn - j, kk - 1)
                if not np.all(lower == 0):
                    acc = acc + comb(nn - 1, j - 1) * x[j - 1] * lower
            memo[key] = acc
        return memo[key]

    return rec(n, k)


class BellTable:
    """Memoized monomial expansions of the partial Bell polynomials.

    ``coefficients(n, k)`` returns a dict mapping exponent tuples
    (a1, ..., a(n-k+1)) to exact integer coefficients, i.e.

        B(n, k) = sum  c[a] * x1^a1 * ... * x(n-k+1)^a(n-k+1),

    with sum(a) = k and sum(j * a_j) = n for every monomial.  The table is
    built lazily behind a lock, so a shared instance is safe to use from
    several threads.
    """

    def __init__(self, max_n=12):
        if max_n < 1:
            raise ValueError("max_n must be >= 1")
        self.max_n = max_n
        self._lock = threading.Lock()
        # key (n, k) -> dict: exponent tuple (len n-k+1) -> int
        self._table = {(0, 0): {(): 1}}

    def coefficients(self, n, k):
        if not 1 <= k <= n:
            raise ValueError(f"need 1 <= k <= n, got n={n}, k={k}")
        if n > self.max_n:
            raise ValueError(f"n={n} exceeds table limit max_n={self.max_n}")
        with self._lock:
            return dict(self._coeffs(n, k))

    def _coeffs(self, n, k):
        key = (n, k)
        if key in self._table:
            return self._table[key]
        if k == 0:
            out = {(): 1} if n == 0 else {}
        elif n == 0:
            out = {}
        else:
            nvars = n - k + 1
            out = {}
            for j in range(1, n - k + 2):
                for expo, c in self._coeffs(n - j, k - 1).items():
                    a = list(expo) + [0] * (nvars - len(expo))
                    a[j - 1] += 1
                    a = tuple(a)
                    out[a] = out.get(a, 0) + comb(n - 1, j - 1) * c
        self._table[key] = out
        return out


@dataclass(frozen=True)
class EpsJet:
    """Truncated Taylor polynomial c0 + c1*eps + ... + cN*eps^N.

    Coefficients are numpy arrays of a common shape (scalars are stored as
    0-d arrays).  Instances are immutable; arithmetic returns new jets and
    silently truncates at the common order.
    """

    order: int
    coeffs: tuple

    def __post_init__(self):
        if self.order < 0:
            raise ValueError("order must be >= 0")
        if len(self.coeffs) != self.order + 1:
            raise ValueError("need exactly order+1 coefficients")

    @staticmethod
    def from_coeffs(coeffs, order=None):
        cs = [np.asarray(c, dtype=float) for c in coeffs]
        if order is None:
            order = len(cs) - 1
        shape = np.broadcast_shapes(*(c.shape for c in cs)) if cs else ()
        full = [np.broadcast_to(c, shape).copy() for c in cs]
        while len(full) < order + 1:
            full.append(np.zeros(shape))
        for c in full:
            c.setflags(write=False)
        return EpsJet(order, tuple(full[: order + 1]))

    @staticmethod
    def constant(value, order):
        """Jet of an eps-independent value: c0 = value, c1..cN = 0."""
        return EpsJet.from_coeffs([value], order=order)

    @property
    def shape(self):
        return self.coeffs[0].shape

    def __add__(self, other):
        other = _coerce(other, self.order)
        _check_order(self, other)
        return EpsJet.from_coeffs(
            [a + b for a, b in zip(self.coeffs, other.coeffs)], order=self.order
        )

    def __sub__(self, other):
        other = _coerce(other, self.order)
        _check_order(self, other)
        return EpsJet.from_coeffs(
            [a - b for a, b in zip(self.coeffs, other.coeffs)], order=self.order
        )

    def scale(self, c):
        return EpsJet.from_coeffs([c * a for a in self.coeffs], order=self.order)

    def __mul__(self, other):
        if isinstance(other, EpsJet):
            return jet_mul(self, other)
        return self.scale(other)

    __rmul__ = __mul__

    def eval(self, eps):
        """Horner evaluation at a concrete parameter value."""
        acc = np.zeros(self.shape)
        for c in reversed(self.coeffs):
            acc = acc * eps + c
        return acc


def _coerce(value, order):
    if isinstance(value, EpsJet):
        return value
    return EpsJet.constant(value, order)


def _check_order(a, b):
    if a.order != b.order:
        raise ValueError(f"jet order mismatch: {a.order} != {b.order}")


def jet_mul(a: EpsJet, b: EpsJet) -> EpsJet:
    """Cauchy product truncated at the common order.

    Scalar jets multiply vector jets by broadcasting.
    """
    _check_order(a, b)
    n = a.order
    shape = np.broadcast_shapes(a.shape, b.shape)
    out = [np.zeros(shape) for _ in range(n + 1)]
    for i, ca in enumerate(a.coeffs):
        for j in range(n + 1 - i):
            out[i + j] = out[i + j] + ca * b.coeffs[j]
    return EpsJet.from_coeffs(out, order=n)


def jet_extract(a: EpsJet, i: int):
    """Coefficient of eps^i."""
    if not 0 <= i <= a.order:
        raise ValueError(f"coefficient index {i} out of range 0..{a.order}")
    return a.coeffs[i]
