"""Charts, alternating tensor fields and pointwise exterior/multivector calculus.

Conventions (see CONVENTIONS.md):

* A degree-k field with stored components ``A[i1<...<ik]`` stands for
  ``sum A[i1..ik] d_i1 ^ ... ^ d_ik`` (or ``dx^i1 ^ ... ^ dx^ik``).  Its dense
  value at a point is the full antisymmetric array with those entries, so a
  bivector pairs with one-forms as ``L(a, b) = a @ L @ b``.
* Wedge products use the determinant normalization (``X ^ Y = X(x)Y - Y(x)X``).
* Derived tensors (d, Lie derivative, Schouten-Nijenhuis brackets) are
  returned as dense values at a point; derivatives come from
  :mod:`contactforge.autodiff`.  Every routine is generic over the scalar type,
  so derived tensors can themselves be differentiated.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import autodiff as ad
from .errors import (
    AntisymmetryViolation,
    ChartMismatch,
    DegreeOverflow,
    DomainError,
    IndexOutOfRange,
    ScenarioError,
    UnknownReference,
    UnsupportedDegree,
)
from .expr import Add, Expr, Mul, Neg, as_expr, compile_expr, diff


@dataclass(frozen=True)
class Chart:
    """Named coordinates plus positivity constraints and a sampling box."""

    name: str
    coords: tuple
    constraints: tuple = ()
    box: Mapping = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(self.coords))
        object.__setattr__(self, "constraints", tuple(as_expr(c) for c in self.constraints))
        if len(set(self.coords)) != len(self.coords):
            raise ScenarioError(f"chart {self.name!r} repeats a coordinate name")

    @property
    def dim(self) -> int:
        return len(self.coords)

    def index(self, coord) -> int:
        if isinstance(coord, (int, np.integer)):
            if not 0 <= coord < self.dim:
                raise IndexOutOfRange(f"index {coord} outside chart {self.name!r} of dimension {self.dim}")
            return int(coord)
        coord = str(coord).strip()
        if coord in self.coords:
            return self.coords.index(coord)
        if coord.lstrip("-").isdigit():
            return self.index(int(coord))
        raise IndexOutOfRange(f"{coord!r} is not a coordinate of chart {self.name!r}")

    def env(self, xs) -> dict:
        return dict(zip(self.coords, xs))

    def scalar(self, e, name=None) -> "ScalarField":
        return ScalarField(self, as_expr(e), name)

    def admissible(self, x, margin: float = 0.0) -> bool:
        """True when every constraint is positive (and at least ``margin``) at ``x``."""
        env = self.env(x)
        for c in self.constraints:
            try:
                v = ad.primal(c.eval(env))
            except DomainError:
                return False
            if v <= 0.0 or v < margin:
                return False
        return True


class ScalarField:
    """A scalar field given by an expression on a chart."""

    def __init__(self, chart: Chart, expr: Expr, name=None):
        unknown = expr.free_variables() - set(chart.coords)
        if unknown:
            raise UnknownReference(f"expression {expr} uses {sorted(unknown)} not in chart {chart.name!r}")
        self.chart = chart
        self.expr = expr
        self.name = name or str(expr)
        self._fn = None
        self._grad = None

    def __call__(self, xs):
        if self._fn is None:
            self._fn = compile_expr(self.expr, self.chart.coords)
        try:
            return self._fn(xs)
        except DomainError:
            # re-evaluate the tree to name the offending subtree
            return self.expr.eval(dict(zip(self.chart.coords, xs)))

    def gradient(self, x):
        if any(isinstance(v, ad.Dual) for v in x):
            return ad.gradient(self, x)
        if self._grad is None:
            self._grad = [compile_expr(diff(self.expr, c), self.chart.coords) for c in self.chart.coords]
        try:
            return np.array([float(g(x)) for g in self._grad])
        except DomainError:
            return ad.gradient(self, x)

    def __repr__(self):
        return f"ScalarField({self.name!r} on {self.chart.name})"


def grad(f, x):
    """Gradient of any scalar field: its own rule if it has one, else AD."""
    if hasattr(f, "gradient") and not any(isinstance(v, ad.Dual) for v in x):
        return f.gradient(x)
    return ad.gradient(f, x)


# -- alternating arrays -----------------------------------------------------------


def _perm_sign(perm) -> int:
    sign = 1
    perm = list(perm)
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


@functools.lru_cache(maxsize=None)
def _signed_perms(k: int):
    return tuple((p, _perm_sign(p)) for p in itertools.permutations(range(k)))


def increasing(n: int, k: int):
    return itertools.combinations(range(n), k)


def alternating(n: int, k: int, comps: Mapping) -> np.ndarray:
    """Full antisymmetric array from increasing-index components."""
    if k == 0:
        arr = np.empty((), dtype=object)
        arr[()] = comps.get((), 0.0)
        return ad.finish(arr)
    generic = any(isinstance(v, ad.Dual) for v in comps.values())
    arr = np.zeros((n,) * k, dtype=object if generic else float)
    if generic:
        arr[...] = 0.0
    perms = _signed_perms(k)
    for idx, v in comps.items():
        for p, s in perms:
            arr[tuple(idx[i] for i in p)] = v if s > 0 else -v
    return ad.finish(arr)


def components_of(arr) -> dict:
    arr = np.asarray(arr)
    k = arr.ndim
    if k == 0:
        return {(): arr[()]}
    return {idx: arr[idx] for idx in increasing(arr.shape[0], k)}


def _zeros(shape):
    arr = np.empty(shape, dtype=object)
    arr[...] = 0.0
    return arr


# -- fields -----------------------------------------------------------------------


def _normalize_index(chart: Chart, key, degree: int):
    if isinstance(key, str):
        parts = [p for p in key.replace("[", "").replace("]", "").split(",")] if key.strip() else []
    elif isinstance(key, (int, np.integer)):
        parts = [key]
    else:
        parts = list(key)
    if len(parts) != degree:
        raise IndexOutOfRange(f"component key {key!r} has {len(parts)} indices, expected {degree}")
    idx = [chart.index(p) for p in parts]
    if len(set(idx)) != len(idx):
        raise AntisymmetryViolation(f"component {key!r} repeats an index; alternating slots must differ")
    order = sorted(range(len(idx)), key=lambda i: idx[i])
    sign = _perm_sign(order)
    return tuple(idx[i] for i in order), sign


class AlternatingField:
    """Alternating tensor field whose components are expressions."""

    kind = "?"

    def __init__(self, chart: Chart, degree: int, components: Mapping = None, name=None):
        if degree > chart.dim:
            raise DegreeOverflow(f"degree {degree} exceeds dimension {chart.dim} of chart {chart.name!r}")
        self.chart = chart
        self.degree = degree
        self.name = name
        comps = {}
        for key, value in (components or {}).items():
            idx, sign = _normalize_index(chart, key, degree)
            if idx in comps:
                # a second entry for the same slot, possibly under a permuted index
                raise AntisymmetryViolation(f"component {key!r} sets slot {idx} a second time")
            e = as_expr(value)
            unknown = e.free_variables() - set(chart.coords)
            if unknown:
                raise UnknownReference(f"component {key!r} uses {sorted(unknown)} not in chart {chart.name!r}")
            comps[idx] = e if sign > 0 else Neg(e)
        self.components = comps
        self._cache = None

    def _compiled(self):
        if self._cache is None or self._cache[0] is not self.components:
            coords = self.chart.coords
            fns = {idx: compile_expr(e, coords) for idx, e in self.components.items()}
            ders = {idx: [compile_expr(diff(e, c), coords) for c in coords] for idx, e in self.components.items()}
            self._cache = (self.components, fns, ders)
        return self._cache

    def dense(self, xs):
        _, fns, _ = self._compiled()
        try:
            vals = {idx: f(xs) for idx, f in fns.items()}
        except DomainError:
            env = dict(zip(self.chart.coords, xs))
            vals = {idx: e.eval(env) for idx, e in self.components.items()}
        return alternating(self.chart.dim, self.degree, vals)

    def float_jacobian(self, x):
        """Value and partials at a float point from the symbolic derivatives."""
        _, _, ders = self._compiled()
        n = self.chart.dim
        val = np.asarray(self.dense(x), dtype=float)
        der = np.zeros(val.shape + (n,))
        perms = _signed_perms(self.degree)
        for idx, fs in ders.items():
            row = np.array([float(f(x)) for f in fs])
            for p, sign in perms:
                der[tuple(idx[i] for i in p)] = sign * row
        return val, der

    def __add__(self, other):
        return add(self, other)

    def __rmul__(self, c):
        return scale(c, self)

    def __neg__(self):
        return scale(-1.0, self)

    def __repr__(self):
        body = ", ".join(f"{tuple(self.chart.coords[i] for i in k)}: {v}" for k, v in self.components.items())
        return f"{type(self).__name__}(deg={self.degree}, {{{body}}})"


class MultivectorField(AlternatingField):
    kind = "multivector"


class FormField(AlternatingField):
    kind = "form"


class PointwiseField:
    """Tensor field known only through a (generic) evaluation function.

    ``kind`` is ``"multivector"``, ``"form"`` or ``"mixed"`` (a (1,1) tensor
    stored as a matrix ``N[i, j]`` acting on vectors).
    """

    def __init__(self, chart: Chart, kind: str, degree, fn: Callable, name=None):
        self.chart = chart
        self.kind = kind
        self.degree = degree
        self.fn = fn
        self.name = name

    def dense(self, xs):
        return self.fn(xs)

    def __add__(self, other):
        return add(self, other)

    def __rmul__(self, c):
        return scale(c, self)

    def __neg__(self):
        return scale(-1.0, self)

    def __repr__(self):
        return f"PointwiseField({self.kind}, deg={self.degree}, {self.name or '?'})"


def vector_field(chart, comps, name=None) -> MultivectorField:
    return MultivectorField(chart, 1, comps, name)


def bivector_field(chart, comps, name=None) -> MultivectorField:
    return MultivectorField(chart, 2, comps, name)


def one_form(chart, comps, name=None) -> FormField:
    return FormField(chart, 1, comps, name)


def zero_vector(chart) -> MultivectorField:
    return MultivectorField(chart, 1, {})


def is_expr_field(f) -> bool:
    return isinstance(f, AlternatingField)


def _same_chart(*fields):
    if len({f.chart for f in fields}) > 1:
        raise ChartMismatch("fields live on different charts: " + ", ".join(f.chart.name for f in fields))
    return fields[0].chart


def _check_kinds(a, b):
    if a.kind != b.kind or a.degree != b.degree:
        raise ScenarioError(f"cannot combine {a.kind}/{a.degree} with {b.kind}/{b.degree}")


def add(a, b):
    chart = _same_chart(a, b)
    _check_kinds(a, b)
    if is_expr_field(a) and is_expr_field(b):
        comps = dict(a.components)
        for idx, e in b.components.items():
            comps[idx] = Add(comps[idx], e) if idx in comps else e
        out = type(a)(chart, a.degree)
        out.components = comps
        return out
    return PointwiseField(chart, a.kind, a.degree, lambda xs: a.dense(xs) + b.dense(xs))


def scale(c, a):
    """Multiply a field by a number, an expression, or a scalar field."""
    chart = a.chart
    if is_expr_field(a) and isinstance(c, (int, float, Expr, str)):
        ce = as_expr(c)
        out = type(a)(chart, a.degree)
        out.components = {idx: Mul(ce, e) for idx, e in a.components.items()}
        return out
    if callable(c):
        return PointwiseField(chart, a.kind, a.degree, lambda xs: a.dense(xs) * c(xs))
    return PointwiseField(chart, a.kind, a.degree, lambda xs: a.dense(xs) * c)


# -- pointwise algebra ------------------------------------------------------------


def wedge_dense(a, b):
    """Wedge of two dense alternating arrays (vectors or forms alike)."""
    a = np.asarray(a)
    b = np.asarray(b)
    ka, kb = a.ndim, b.ndim
    if ka == 0 or kb == 0:
        return ad.finish(a * b[()] if kb == 0 else b * a[()])
    n = a.shape[0]
    k = ka + kb
    if k > n:
        raise DegreeOverflow(f"wedge of degrees {ka}+{kb} exceeds dimension {n}")
    comps = {}
    for idx in increasing(n, k):
        total = 0.0
        for left in itertools.combinations(range(k), ka):
            right = tuple(i for i in range(k) if i not in left)
            s = _perm_sign(left + right)
            term = a[tuple(idx[i] for i in left)] * b[tuple(idx[i] for i in right)]
            total = total + term if s > 0 else total - term
        comps[idx] = total
    return alternating(n, k, comps)


def wedge(a, b):
    """Wedge product of two fields of the same kind."""
    chart = _same_chart(a, b)
    if a.kind != b.kind or a.kind not in ("multivector", "form"):
        raise ScenarioError("wedge needs two multivector fields or two form fields")
    k = a.degree + b.degree
    if k > chart.dim:
        raise DegreeOverflow(f"wedge of degrees {a.degree}+{b.degree} exceeds dimension {chart.dim}")
    if is_expr_field(a) and is_expr_field(b):
        comps = {}
        for idx in increasing(chart.dim, k):
            total = None
            for left in itertools.combinations(range(k), a.degree):
                right = tuple(i for i in range(k) if i not in left)
                ea = a.components.get(tuple(idx[i] for i in left))
                eb = b.components.get(tuple(idx[i] for i in right))
                if ea is None or eb is None:
                    continue
                term = Mul(ea, eb)
                if _perm_sign(left + right) < 0:
                    term = Neg(term)
                total = term if total is None else Add(total, term)
            if total is not None:
                comps[idx] = total
        out = type(a)(chart, k)
        out.components = comps
        return out
    return PointwiseField(chart, a.kind, k, lambda xs: wedge_dense(a.dense(xs), b.dense(xs)))


def interior_dense(X, alpha):
    """Contraction of a vector into the first slot of a dense form."""
    alpha = np.asarray(alpha)
    X = np.asarray(X)
    if alpha.ndim == 0:
        raise DegreeOverflow("cannot contract a vector into a 0-form")
    out = _zeros(alpha.shape[1:])
    for i in range(X.shape[0]):
        out = out + alpha[i] * X[i]
    return ad.finish(out)


def interior_product(X, alpha, x=None):
    """``i_X alpha``: dense values, or a pointwise field when given fields."""
    if hasattr(X, "dense") and hasattr(alpha, "dense"):
        _same_chart(X, alpha)
        if x is not None:
            return interior_dense(X.dense(x), alpha.dense(x))
        return PointwiseField(
            alpha.chart, "form", alpha.degree - 1, lambda xs: interior_dense(X.dense(xs), alpha.dense(xs))
        )
    return interior_dense(X, alpha)


def pairing(L, a, b):
    """``L(a, b)`` for a dense bivector and two covectors."""
    L = np.asarray(L)
    total = 0.0
    n = L.shape[0]
    for i in range(n):
        for j in range(n):
            if i != j:
                total = total + L[i, j] * a[i] * b[j]
    return total


def mat_vec(M, v):
    M = np.asarray(M)
    out = _zeros(M.shape[0])
    for i in range(M.shape[0]):
        acc = 0.0
        for j in range(M.shape[1]):
            acc = acc + M[i, j] * v[j]
        out[i] = acc
    return ad.finish(out)


# -- differential operators -------------------------------------------------------


def field_jacobian(T, x):
    """Dense value of a field at ``x`` and its partial derivatives (last axis)."""
    if isinstance(T, AlternatingField) and not any(isinstance(v, ad.Dual) for v in x):
        try:
            return T.float_jacobian(x)
        except DomainError:
            pass
    return ad.jacobian(T.dense, x)


def exterior_derivative(alpha, x):
    """Dense value of ``d alpha`` at ``x``."""
    if alpha.kind != "form":
        raise ScenarioError("exterior derivative needs a form field")
    _, der = field_jacobian(alpha, x)
    der = np.asarray(der)
    k = alpha.degree
    n = alpha.chart.dim
    if k + 1 > n:
        raise DegreeOverflow(f"d of a {k}-form exceeds dimension {n}")
    comps = {}
    for idx in increasing(n, k + 1):
        total = 0.0
        for m in range(k + 1):
            rest = idx[:m] + idx[m + 1 :]
            term = der[rest + (idx[m],)]
            total = total + term if m % 2 == 0 else total - term
        comps[idx] = total
    return alternating(n, k + 1, comps)


def d_field(alpha):
    """``d alpha`` as a pointwise field (differentiable again)."""
    return PointwiseField(alpha.chart, "form", alpha.degree + 1, lambda xs: exterior_derivative(alpha, xs))


def directional(X_val, der):
    """Contract the derivative axis (last) of ``der`` with a vector."""
    der = np.asarray(der)
    out = _zeros(der.shape[:-1])
    for l in range(der.shape[-1]):
        out = out + der[..., l] * X_val[l]
    return ad.finish(out)


def _lie_multivector(X, T, x):
    Xv, DX = field_jacobian(X, x)
    Tv, DT = field_jacobian(T, x)
    Tv = np.asarray(Tv)
    out = directional(Xv, DT)
    k = Tv.ndim
    DX = np.asarray(DX)
    n = X.chart.dim
    for m in range(k):
        # replace slot m: sum_l T[..l..] dX^{i_m}/dx^l
        term = _zeros(Tv.shape)
        for idx in np.ndindex(Tv.shape):
            acc = 0.0
            for l in range(n):
                t = Tv[idx[:m] + (l,) + idx[m + 1 :]]
                acc = acc + t * DX[idx[m], l]
            term[idx] = acc
        out = out - term
    return ad.finish(out)


def _lie_form(X, alpha, x):
    """Cartan formula ``i_X d alpha + d i_X alpha``."""
    n, k = alpha.chart.dim, alpha.degree
    if k == 0:
        _, der = field_jacobian(alpha, x)
        return directional(X.dense(x), der)
    Xv = X.dense(x)
    first = interior_dense(Xv, exterior_derivative(alpha, x)) if k < n else _zeros((n,) * k)
    contracted = PointwiseField(
        alpha.chart, "form", k - 1, lambda xs: interior_dense(X.dense(xs), alpha.dense(xs))
    )
    if k == 1:
        _, second = field_jacobian(contracted, x)
    else:
        second = exterior_derivative(contracted, x)
    return ad.finish(np.asarray(first, dtype=object) + np.asarray(second, dtype=object))


def _lie_mixed(X, N, x):
    Xv, DX = field_jacobian(X, x)
    Nv, DN = field_jacobian(N, x)
    Nv = np.asarray(Nv, dtype=object)
    DX = np.asarray(DX, dtype=object)
    out = directional(Xv, DN)
    return ad.finish(out - DX.dot(Nv) + Nv.dot(DX))


def lie_derivative(X, T, x):
    """``L_X T`` at ``x`` for a scalar, form, multivector or (1,1) field."""
    if not hasattr(T, "dense"):
        g = grad(T, x)
        Xv = X.dense(x)
        total = 0.0
        for i in range(len(g)):
            total = total + g[i] * Xv[i]
        return total
    _same_chart(X, T)
    if T.kind == "form":
        return _lie_form(X, T, x)
    if T.kind == "multivector":
        if T.degree == 0:
            _, der = field_jacobian(T, x)
            return directional(X.dense(x), der)
        return _lie_multivector(X, T, x)
    if T.kind == "mixed":
        return _lie_mixed(X, T, x)
    raise ScenarioError(f"no Lie derivative for kind {T.kind!r}")


def schouten_nijenhuis(A, B, x):
    """Schouten-Nijenhuis bracket of multivector fields of degree 1 or 2.

    ``[X, T] = L_X T``; ``[T, X] = -[X, T]``; for bivectors
    ``[P, Q]^{ijk} = sum_cyclic (P^{li} d_l Q^{jk} + Q^{li} d_l P^{jk})``.
    With this normalization a pair (L, E) is Jacobi iff
    ``[L, L] = 2 E ^ L`` and ``[E, L] = 0``.
    """
    _same_chart(A, B)
    a, b = A.degree, B.degree
    if A.kind != "multivector" or B.kind != "multivector" or a not in (1, 2) or b not in (1, 2):
        raise UnsupportedDegree(f"Schouten-Nijenhuis bracket implemented for degrees 1 and 2, got {a}, {b}")
    if a == 1:
        return _lie_multivector(A, B, x)
    if b == 1:
        return ad.finish(-np.asarray(_lie_multivector(B, A, x)))
    Pv, DP = field_jacobian(A, x)
    Qv, DQ = field_jacobian(B, x)
    n = A.chart.dim
    Pv, DP, Qv, DQ = (np.asarray(v, dtype=object) for v in (Pv, DP, Qv, DQ))

    def raw(i, j, k):
        acc = 0.0
        for l in range(n):
            acc = acc + Pv[l, i] * DQ[j, k, l] + Qv[l, i] * DP[j, k, l]
        return acc

    comps = {}
    for i, j, k in increasing(n, 3):
        comps[(i, j, k)] = raw(i, j, k) + raw(j, k, i) + raw(k, i, j)
    return alternating(n, 3, comps)


def sharp(L, alpha, x=None):
    """``#_L(alpha) = L(., alpha)``: components ``L[i, j] alpha_j``."""
    P = L.dense(x) if hasattr(L, "dense") else L
    return mat_vec(P, alpha)


@dataclass(frozen=True)
class MixedTensorPointValue:
    """A (1,1) tensor evaluated at a point, as the matrix acting on vectors."""

    chart: Chart
    point: tuple
    matrix: np.ndarray


def pushforward(chart_from: Chart, chart_to: Chart, mapping: Mapping, X, x):
    """Push a vector at ``x`` through a coordinate map given as expressions.

    ``mapping`` sends each coordinate name of ``chart_to`` to an expression
    in the coordinates of ``chart_from``.  Returns (image point, image vector).
    """
    exprs = [as_expr(mapping[c]) for c in chart_to.coords]

    def F(xs):
        env = chart_from.env(xs)
        return np.array([e.eval(env) for e in exprs], dtype=object)

    y, J = ad.jacobian(F, x)
    Xv = X.dense(x) if hasattr(X, "dense") else np.asarray(X)
    return np.asarray(y, dtype=float), np.asarray(mat_vec(J, Xv), dtype=float)


__all__ = [
    "Chart",
    "ScalarField",
    "MultivectorField",
    "FormField",
    "PointwiseField",
    "MixedTensorPointValue",
    "vector_field",
    "bivector_field",
    "one_form",
    "zero_vector",
    "wedge",
    "wedge_dense",
    "interior_product",
    "exterior_derivative",
    "d_field",
    "lie_derivative",
    "schouten_nijenhuis",
    "sharp",
    "pairing",
    "pushforward",
]
