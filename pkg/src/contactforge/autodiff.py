"""Forward-mode automatic differentiation.

A :class:`Dual` carries a primal value and a list of tangents, one per chart
coordinate.  Primal and tangents may themselves be duals, which is how second
(and higher) derivatives are obtained: seeding a point whose entries are
already duals creates a new, outer nesting level.  Every dual records its
level so that values from an inner level behave as constants at the outer
one.

The elementary functions below (``exp``, ``log``, ...) accept floats and duals
alike; scalar fields written with them are generic over the scalar type.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DomainError


def level_of(x) -> int:
    return x.level if isinstance(x, Dual) else 0


def primal(x) -> float:
    while isinstance(x, Dual):
        x = x.val
    return float(x)


class Dual:
    __slots__ = ("val", "der", "level")

    def __init__(self, val, der, level=None):
        self.val = val
        self.der = der
        self.level = level_of(val) + 1 if level is None else level

    def __repr__(self):
        return f"Dual({self.val!r}, {self.der!r})"

    # -- arithmetic ---------------------------------------------------------
    # An operand of a lower level is a constant here; an operand of a higher
    # level takes over the operation.

    def __add__(self, other):
        if type(other) is np.ndarray:
            return NotImplemented
        lo = level_of(other)
        if lo == self.level:
            return Dual(self.val + other.val, [a + b for a, b in zip(self.der, other.der)], self.level)
        if lo > self.level:
            return other.__radd__(self)
        return Dual(self.val + other, self.der, self.level)

    def __radd__(self, other):
        return Dual(other + self.val, self.der, self.level)

    def __sub__(self, other):
        if type(other) is np.ndarray:
            return NotImplemented
        lo = level_of(other)
        if lo == self.level:
            return Dual(self.val - other.val, [a - b for a, b in zip(self.der, other.der)], self.level)
        if lo > self.level:
            return other.__rsub__(self)
        return Dual(self.val - other, self.der, self.level)

    def __rsub__(self, other):
        return Dual(other - self.val, [-a for a in self.der], self.level)

    def __neg__(self):
        return Dual(-self.val, [-a for a in self.der], self.level)

    def __pos__(self):
        return self

    def __mul__(self, other):
        if type(other) is np.ndarray:
            return NotImplemented
        lo = level_of(other)
        if lo == self.level:
            u, v = self.val, other.val
            return Dual(u * v, [u * b + v * a for a, b in zip(self.der, other.der)], self.level)
        if lo > self.level:
            return other.__rmul__(self)
        return Dual(self.val * other, [a * other for a in self.der], self.level)

    def __rmul__(self, other):
        return Dual(other * self.val, [other * a for a in self.der], self.level)

    def __truediv__(self, other):
        if type(other) is np.ndarray:
            return NotImplemented
        lo = level_of(other)
        if lo > self.level:
            return other.__rtruediv__(self)
        if lo == self.level:
            return self * reciprocal(other)
        if primal(other) == 0.0:
            raise DomainError("division by zero")
        return Dual(self.val / other, [a / other for a in self.der], self.level)

    def __rtruediv__(self, other):
        return other * reciprocal(self)

    def __pow__(self, k):
        return power(self, k)


def reciprocal(x):
    if primal(x) == 0.0:
        raise DomainError("division by zero")
    if isinstance(x, Dual):
        inv = reciprocal(x.val)
        inv2 = inv * inv
        return Dual(inv, [-a * inv2 for a in x.der], x.level)
    return 1.0 / x


def divide(a, b):
    return a * reciprocal(b)


def power(x, k):
    """``x**k`` for an int or rational exponent ``k``."""
    k = Fraction(k)
    if k == 0:
        return 1.0
    if isinstance(x, Dual):
        inner = power(x.val, k - 1)
        factor = float(k) * inner
        return Dual(inner * x.val, [factor * a for a in x.der], x.level)
    v = float(x)
    if k.denominator == 1:
        n = int(k)
        if n < 0 and v == 0.0:
            raise DomainError("zero raised to a negative power")
        return v**n
    if v <= 0.0:
        raise DomainError("non-integer power of a non-positive number")
    return v ** float(k)


def exp(x):
    if isinstance(x, Dual):
        e = exp(x.val)
        return Dual(e, [e * a for a in x.der], x.level)
    try:
        return math.exp(x)
    except OverflowError as err:
        raise DomainError("exp overflow") from err


def log(x):
    if primal(x) <= 0.0:
        raise DomainError("log of a non-positive number")
    if isinstance(x, Dual):
        inv = reciprocal(x.val)
        return Dual(log(x.val), [a * inv for a in x.der], x.level)
    return math.log(x)


def sqrt(x):
    if primal(x) <= 0.0:
        raise DomainError("sqrt of a non-positive number")
    if isinstance(x, Dual):
        s = sqrt(x.val)
        half_inv = reciprocal(2.0 * s)
        return Dual(s, [a * half_inv for a in x.der], x.level)
    return math.sqrt(x)


def sin(x):
    if isinstance(x, Dual):
        c = cos(x.val)
        return Dual(sin(x.val), [c * a for a in x.der], x.level)
    return math.sin(x)


def cos(x):
    if isinstance(x, Dual):
        s = sin(x.val)
        return Dual(cos(x.val), [-s * a for a in x.der], x.level)
    return math.cos(x)


FUNCTIONS = {"exp": exp, "log": log, "sin": sin, "cos": cos, "sqrt": sqrt}


# -- seeding and extraction ----------------------------------------------------


def seed(point):
    """Promote every entry of ``point`` to a dual with a unit tangent."""
    xs = [x if isinstance(x, Dual) else float(x) for x in point]
    lvl = max((level_of(x) for x in xs), default=0) + 1
    n = len(xs)
    return [Dual(x, [1.0 if j == i else 0.0 for j in range(n)], lvl) for i, x in enumerate(xs)]


def _split(y, lvl, n):
    if isinstance(y, Dual) and y.level == lvl:
        return y.val, list(y.der)
    return y, [0.0] * n


def _as_array(values):
    arr = np.empty(len(values), dtype=object)
    arr[:] = list(values)
    return finish(arr)


def finish(arr):
    """Downcast an object array to float when it holds no duals."""
    arr = np.asarray(arr)
    if arr.dtype != object:
        return arr
    if any(isinstance(v, Dual) for v in arr.flat):
        return arr
    return arr.astype(float)


def value_and_gradient(f, point):
    """Value and gradient of a scalar field; generic over the point's scalars."""
    xs = seed(point)
    y = f(xs)
    return _split(y, xs[0].level if xs else 1, len(xs))


def gradient(f, point) -> np.ndarray:
    """Exact gradient of ``f`` at ``point`` by one forward pass."""
    return _as_array(value_and_gradient(f, point)[1])


def jacobian(F, point):
    """Value and derivative of an array-valued field.

    Returns ``(value, deriv)`` where ``deriv[..., l]`` is the partial of
    ``value[...]`` along coordinate ``l``.
    """
    xs = seed(point)
    n = len(xs)
    lvl = xs[0].level if xs else 1
    out = np.asarray(F(xs), dtype=object)
    val = np.empty(out.shape, dtype=object)
    der = np.empty(out.shape + (n,), dtype=object)
    for idx in np.ndindex(out.shape):
        v, d = _split(out[idx], lvl, n)
        val[idx] = v
        der[idx] = d
    return finish(val), finish(der)


@dataclass(frozen=True)
class Jet2:
    """Second-order jet of a scalar field at a point."""

    value: float
    gradient: np.ndarray
    hessian: np.ndarray


def jet2(f, point) -> Jet2:
    """Value, gradient and symmetrized Hessian by nesting duals."""
    box = {}

    def grad_field(xs):
        v, g = value_and_gradient(f, xs)
        box["value"] = v
        return g

    g, h = jacobian(grad_field, point)
    value = box["value"]
    if isinstance(value, Dual):
        value = value.val
    h = np.asarray(h, dtype=float)
    return Jet2(float(value), np.asarray(g, dtype=float), 0.5 * (h + h.T))


def hessian(f, point) -> np.ndarray:
    return jet2(f, point).hessian


def fd_gradient(f, point, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient; step ``h * max(1, |x_i|)`` per coordinate."""
    x = np.asarray(point, dtype=float)
    g = np.empty(len(x))
    for i in range(len(x)):
        step = h * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        g[i] = (float(f(xp)) - float(f(xm))) / (xp[i] - xm[i])
    return g
