"""Trivial symplectisation, homogeneous lifts and Poissonization."""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import InternalInconsistency, NotHomogeneous, UnsupportedConformalFactor
from .expr import Add, Const, Div, Expr, Mul, Neg, Sub, Var, as_expr
from .report import combine, judge, sweep
from .structures import (
    ContactForm,
    ExactSymplectic,
    JacobiStructure,
    contact_bracket,
    homogeneity_residuals,
    induced_jacobi,
    symplectic_bracket,
    value_grad,
)
from .tensors import (
    AlternatingField,
    Chart,
    FormField,
    MultivectorField,
    PointwiseField,
    ScalarField,
    pairing,
    vector_field,
)


def extend_chart(chart: Chart, r_name="r"):
    """Append a positive coordinate, renaming it on collision."""
    name, notes = r_name, []
    k = 0
    while name in chart.coords:
        k += 1
        name = f"{r_name}_{k}"
    if name != r_name:
        notes.append(f"coordinate {r_name!r} already in chart {chart.name!r}; the new one is named {name!r}")
    total = Chart(f"{chart.name}_x_R+", chart.coords + (name,), chart.constraints + (Var(name),), dict(chart.box))
    return total, name, notes


def _pull_expr_field(f: AlternatingField, total: Chart, factor=None):
    out = type(f)(total, f.degree)
    out.components = {idx: (Mul(factor, e) if factor is not None else e) for idx, e in f.components.items()}
    out.name = f.name
    return out


def pullback(field_, total: Chart):
    """Coordinate-wise copy of a base field onto ``M x R+``."""
    if isinstance(field_, ScalarField):
        return ScalarField(total, field_.expr, field_.name)
    if isinstance(field_, AlternatingField):
        return _pull_expr_field(field_, total)
    n = total.dim - 1

    def fn(xs):
        v = np.asarray(field_.dense(xs[:n]), dtype=object)
        out = np.zeros((total.dim,) * v.ndim, dtype=object)
        out[(slice(0, n),) * v.ndim] = v
        return ad.finish(out)

    if field_.kind == "mixed":
        raise InternalInconsistency("pullback of a mixed tensor is not a coordinate-wise copy")
    return PointwiseField(total, field_.kind, field_.degree, fn, field_.name)


@dataclass
class SymplectizationLink:
    base: ContactForm
    total: Chart
    r_name: str
    theta: object
    structure: ExactSymplectic
    liouville: MultivectorField
    sigma: Expr
    notes: list = field(default_factory=list)

    @property
    def base_chart(self) -> Chart:
        return self.base.chart

    def r_index(self) -> int:
        return self.total.index(self.r_name)


def symplectize(form: ContactForm, r_name="r", sigma=None) -> SymplectizationLink:
    """``M x R+`` with ``theta = r eta`` and Liouville field ``r d/dr``."""
    total, name, notes = extend_chart(form.chart, r_name)
    r = Var(name)
    if sigma is not None and as_expr(sigma).substitute({r_name: r}) != r:
        raise UnsupportedConformalFactor(f"only the conformal factor sigma = {name} is supported, got {sigma}")
    for note in notes:
        warnings.warn(note, stacklevel=2)
    if isinstance(form.eta, AlternatingField):
        theta = _pull_expr_field(form.eta, total, r)
    else:
        pulled = pullback(form.eta, total)
        theta = PointwiseField(total, "form", 1, lambda xs: ad.finish(np.asarray(pulled.dense(xs), dtype=object) * xs[-1]))
    theta.name = "theta"
    S = ExactSymplectic(theta, "theta")
    Delta = vector_field(total, {name: r}, "Delta")
    return SymplectizationLink(form, total, name, theta, S, Delta, r, notes)


def _minus_r_times(e: Expr, r: Expr) -> Expr:
    if isinstance(e, Const) and e.value == 0:
        return Const(0.0)
    if isinstance(e, Sub):
        return Sub(Mul(r, e.right), Mul(r, e.left))
    if isinstance(e, Neg):
        return Mul(r, e.arg)
    if isinstance(e, Add):
        return Sub(_minus_r_times(e.left, r), Mul(r, e.right))
    return Neg(Mul(r, e))


def lift_function(link: SymplectizationLink, f) -> ScalarField:
    """``f -> -r f`` as an expression rewrite."""
    f = link.base_chart.scalar(f) if not isinstance(f, ScalarField) else f
    return ScalarField(link.total, _minus_r_times(f.expr, Var(link.r_name)), f"lift({f.name})")


def _tidy(e: Expr) -> Expr:
    """Drop the factors of one, minus one and the double negations left by ``r = 1``."""
    if isinstance(e, Neg):
        a = _tidy(e.arg)
        if isinstance(a, Neg):
            return a.arg
        if isinstance(a, Const):
            return Const(-a.value)
        return Neg(a)
    if isinstance(e, Mul):
        a, b = _tidy(e.left), _tidy(e.right)
        if isinstance(a, Const) and a.value == 1:
            return b
        if isinstance(b, Const) and b.value == 1:
            return a
        if isinstance(a, Const) and a.value == -1:
            return _tidy(Neg(b))
        return Mul(a, b)
    if isinstance(e, (Add, Sub)):
        return type(e)(_tidy(e.left), _tidy(e.right))
    if hasattr(e, "arg") and hasattr(e, "func"):
        return type(e)(e.func, _tidy(e.arg))
    if hasattr(e, "base") and hasattr(e, "exponent"):
        return type(e)(_tidy(e.base), e.exponent)
    return e


def project_function(link: SymplectizationLink, F, expected_degree, samples, tol=1e-9) -> ScalarField:
    """Restrict a homogeneous function to ``r = 1`` (undoing the lift for degree 1)."""
    if expected_degree not in (0, 1):
        raise ValueError("projection is defined for degrees 0 and 1")
    F = link.total.scalar(F) if not isinstance(F, ScalarField) else F
    res, size, _ = homogeneity_residuals(F, link.liouville, samples, range(-3, 4))
    if not res[expected_degree] < tol or size < tol:
        hits = [k for k, v in res.items() if v < tol]
        found = f"degree {hits[0]} detected" if hits else "no integer degree"
        raise NotHomogeneous(f"{F.name} is not {expected_degree}-homogeneous ({found})", res)
    at_one = F.expr.substitute({link.r_name: Const(1.0)})
    expr = _tidy(Neg(at_one) if expected_degree == 1 else at_one)
    return ScalarField(link.base_chart, expr, f"proj({F.name})")


def poissonize(J: JacobiStructure, total: Chart = None, r_name="r"):
    """``L/r + d/dr ^ E`` on ``M x R+``; returns ``(bivector, total chart)``."""
    if total is None:
        total, r_name, _ = extend_chart(J.chart, r_name)
    else:
        r_name = total.coords[-1]
    r = Var(r_name)
    if isinstance(J.Lambda, AlternatingField) and isinstance(J.E, AlternatingField):
        out = MultivectorField(total, 2)
        comps = {idx: Div(e, r) for idx, e in J.Lambda.components.items()}
        n = total.dim - 1
        for (i,), e in J.E.components.items():
            # (d/dr ^ E)^{r i} = E^i and r is the last coordinate
            comps[(i, n)] = Neg(e)
        out.components = {k: v for k, v in sorted(comps.items())}
        out.name = "Poissonized"
        return out, total
    n = total.dim - 1

    def fn(xs):
        base = xs[:n]
        P = np.asarray(J.Lambda.dense(base), dtype=object)
        E = np.asarray(J.E.dense(base), dtype=object)
        inv_r = ad.reciprocal(xs[-1])
        out = np.zeros((n + 1, n + 1), dtype=object)
        out[:n, :n] = P * inv_r
        out[n, :n] = E
        out[:n, n] = -E
        return ad.finish(out)

    return PointwiseField(total, "multivector", 2, fn, "Poissonized"), total


def total_samples(samples, r_values=None):
    """Attach deterministic radial values in ``[0.25, 2]`` to base samples."""
    out = []
    for i, x in enumerate(samples):
        r = r_values[i] if r_values is not None else 0.25 + 1.75 * ((0.6180339887498949 * (i + 1)) % 1.0)
        out.append(tuple(x) + (float(r),))
    return out


def _pairs(fs):
    return [(f, g) for f, g in itertools.product(fs, repeat=2)]


def bracket_correspondence(link: SymplectizationLink, pairs, samples, tol=1e-9):
    """``|{f^S, g^S}_theta - (-r {f, g}_eta)|`` over total-chart samples and pairs."""
    lifted = [(lift_function(link, f), lift_function(link, g), f, g) for f, g in pairs]
    S = link.structure
    n = link.total.dim - 1

    def residual(x):
        worst = 0.0
        for F, G, f, g in lifted:
            left = float(symplectic_bracket(S, F, G, x))
            right = -x[n] * float(contact_bracket(link.base, f, g, x[:n]))
            worst = max(worst, abs(left - right))
        return worst

    return judge("bracket_correspondence", sweep(residual, samples), tol, details={"pairs": len(pairs)})


def symplectization_consistency(link: SymplectizationLink, samples, pairs=None, tol=1e-9):
    """Poisson bracket of ``omega`` against the Poissonized induced Jacobi bracket."""
    if link.sigma != Var(link.r_name):
        raise UnsupportedConformalFactor("only sigma = r is supported")
    base = link.base_chart
    if pairs is None:
        fs = [base.scalar(c) for c in base.coords] + [base.scalar(Var(a) * Var(b)) for a, b in itertools.combinations(base.coords, 2)]
        pairs = list(itertools.combinations(fs, 2))
    lifted = [(lift_function(link, f), lift_function(link, g)) for f, g in pairs]
    L_omega = link.structure.poisson_bivector()
    L_tilde, _ = poissonize(induced_jacobi(link.base), link.total)

    def residual(x):
        Pw = np.asarray(L_omega.dense(x), dtype=float)
        Pt = np.asarray(L_tilde.dense(x), dtype=float)
        worst = 0.0
        for F, G in lifted:
            dF = np.asarray(value_grad(F, x)[1], dtype=float)
            dG = np.asarray(value_grad(G, x)[1], dtype=float)
            worst = max(worst, abs(float(pairing(Pw, dF, dG)) - float(pairing(Pt, dF, dG))))
        return worst

    bracket = judge("omega_vs_poissonization", sweep(residual, samples), tol, details={"pairs": len(pairs)})
    tensor = judge(
        "bivectors_equal",
        sweep(lambda x: float(np.max(np.abs(np.asarray(L_omega.dense(x), dtype=float) - np.asarray(L_tilde.dense(x), dtype=float)))), samples),
        tol,
    )
    return combine("symplectization_consistency", [bracket, tensor])
