"""Jacobi, Poisson, contact and exact symplectic structures with executable axioms.

Sign conventions (see CONVENTIONS.md):

* Jacobi bracket ``{f, g} = L(df, dg) + f E(g) - g E(f)``.
* A contact form induces the bracket ``{f, g} = X_f(g) + g R(f)``; hence the
  induced pair is ``L(a, b) = d eta(flat^-1 b^, flat^-1 a^)`` and ``E = -R``.
* On an exact symplectic manifold ``i_{X_f} omega = df`` and the bracket used
  for lifts is ``{F, G}_theta = X_F(G)``, which makes the lift ``f -> -r f``
  a bracket morphism.  The Poisson bivector of ``omega`` is
  ``(omega^T)^{-1}`` and pairs as ``L_omega(dF, dG) = -{F, G}_theta``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import (
    InternalInconsistency,
    NotHomogeneous,
    ScenarioError,
    SingularFlat,
    SingularSymplectic,
    WrongCount,
)
from .expr import Const, Var, as_expr
from .linalg import inverse, primal_array, solve
from .report import FAIL, INCONSISTENT, PASS, SKIPPABLE, CheckResult, Sweep, combine, judge, sweep
from .tensors import (
    Chart,
    FormField,
    PointwiseField,
    ScalarField,
    exterior_derivative,
    grad,
    lie_derivative,
    mat_vec,
    pairing,
    schouten_nijenhuis,
    wedge_dense,
    zero_vector,
)


def _dot(a, b):
    total = 0.0
    for u, v in zip(a, b):
        total = total + u * v
    return total


def _outer(a, b):
    out = np.empty((len(a), len(b)), dtype=object)
    for i, u in enumerate(a):
        for j, v in enumerate(b):
            out[i, j] = u * v
    return ad.finish(out)


def _has_duals(x) -> bool:
    return any(isinstance(v, ad.Dual) for v in x)


def value_grad(f, x):
    """Value and gradient of a scalar field, generic over the point's scalars."""
    if not _has_duals(x) and hasattr(f, "gradient"):
        return f(x), np.asarray(f.gradient(x))
    v, g = ad.value_and_gradient(f, x)
    return v, g


def as_scalar(chart: Chart, f):
    if isinstance(f, (str, int, float)) or hasattr(f, "free_variables"):
        return chart.scalar(f)
    return f


def _maxabs(a) -> float:
    a = primal_array(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


# -- Jacobi structures -------------------------------------------------------------


class JacobiStructure:
    """A bivector field paired with a vector field; Poisson when ``E = 0``."""

    def __init__(self, Lambda, E=None, name=None):
        if E is None:
            E = zero_vector(Lambda.chart)
        if Lambda.chart != E.chart:
            raise ScenarioError("Lambda and E must live on the same chart")
        if Lambda.degree != 2 or E.degree != 1:
            raise ScenarioError("a Jacobi structure pairs a bivector with a vector field")
        self.Lambda = Lambda
        self.E = E
        self.name = name

    @classmethod
    def poisson(cls, Lambda, name=None):
        return cls(Lambda, None, name)

    @property
    def chart(self) -> Chart:
        return self.Lambda.chart

    def __add__(self, other):
        return JacobiStructure(self.Lambda + other.Lambda, self.E + other.E)

    def bracket(self, f, g, x):
        return jacobi_bracket(self, f, g, x)

    def __repr__(self):
        return f"JacobiStructure({self.name or '?'} on {self.chart.name})"


def jacobi_bracket(J: JacobiStructure, f, g, x):
    """``{f, g} = L(df, dg) + f E(g) - g E(f)`` at ``x``."""
    fv, df = value_grad(f, x)
    gv, dg = value_grad(g, x)
    P = J.Lambda.dense(x)
    Ev = J.E.dense(x)
    return pairing(P, df, dg) + fv * _dot(Ev, dg) - gv * _dot(Ev, df)


def jacobiator_residual(J: JacobiStructure, f, g, h, x) -> float:
    """``|{{f,g},h} + {{g,h},f} + {{h,f},g}|`` by nested forward differentiation."""

    def br(a, b):
        return lambda xs: jacobi_bracket(J, a, b, xs)

    total = (
        jacobi_bracket(J, br(f, g), h, x)
        + jacobi_bracket(J, br(g, h), f, x)
        + jacobi_bracket(J, br(h, f), g, x)
    )
    return abs(ad.primal(total))


def weak_leibniz_residual(J: JacobiStructure, f, g, h, x) -> float:
    """``|{f, gh} - {f,g}h - {f,h}g - gh E(f)|``."""
    gh = lambda xs: g(xs) * h(xs)
    fv, df = value_grad(f, x)
    Ef = _dot(J.E.dense(x), df)
    lhs = jacobi_bracket(J, f, gh, x)
    rhs = jacobi_bracket(J, f, g, x) * h(x) + jacobi_bracket(J, f, h, x) * g(x) + g(x) * h(x) * Ef
    return abs(ad.primal(lhs - rhs))


def default_test_family(chart: Chart):
    """Constant 1, the coordinates and their pairwise products."""
    family = [chart.scalar(Const(1.0), "1")]
    family += [chart.scalar(Var(c), c) for c in chart.coords]
    for a, b in itertools.combinations_with_replacement(chart.coords, 2):
        family.append(chart.scalar(Var(a) * Var(b), f"{a}*{b}"))
    return family


def jacobiator_table(J: JacobiStructure, family, x):
    """All Jacobiators over a function family at ``x``, from second-order jets.

    Returns ``(table, scale)`` with ``table[a, b, c]`` the Jacobiator of
    ``(f_a, f_b, f_c)`` and ``scale`` the magnitude of the iterated brackets.
    """
    jets = [ad.jet2(f, x) for f in family]
    v = np.array([j.value for j in jets])
    G = np.array([j.gradient for j in jets])
    H = np.array([j.hessian for j in jets])
    P, dP = (np.asarray(a, dtype=float) for a in ad.jacobian(J.Lambda.dense, x))
    E, dE = (np.asarray(a, dtype=float) for a in ad.jacobian(J.E.dense, x))
    EG = G @ E
    B = np.einsum("ai,ij,bj->ab", G, P, G) + np.outer(v, EG) - np.outer(EG, v)
    EdG = np.einsum("ik,bi->bk", dE, G) + np.einsum("i,bik->bk", E, H)
    dB = (
        np.einsum("ai,ijk,bj->abk", G, dP, G)
        + np.einsum("aik,ij,bj->abk", H, P, G)
        + np.einsum("ai,ij,bjk->abk", G, P, H)
        + G[:, None, :] * EG[None, :, None]
        + v[:, None, None] * EdG[None, :, :]
        - G[None, :, :] * EG[:, None, None]
        - v[None, :, None] * EdG[:, None, :]
    )
    T = (
        np.einsum("abi,ij,cj->abc", dB, P, G)
        + B[:, :, None] * EG[None, None, :]
        - v[None, None, :] * np.einsum("abi,i->ab", dB, E)[:, :, None]
    )
    table = T + np.transpose(T, (2, 0, 1)) + np.transpose(T, (1, 2, 0))
    return table, max(1.0, float(np.max(np.abs(T))) if T.size else 1.0)


def lichnerowicz_residuals(J: JacobiStructure, x):
    """Scaled residuals of ``[L,L] - 2 E^L`` and ``[E,L]`` at ``x``."""
    LL = schouten_nijenhuis(J.Lambda, J.Lambda, x)
    EL2 = 2.0 * np.asarray(wedge_dense(J.E.dense(x), J.Lambda.dense(x)), dtype=float)
    EL = schouten_nijenhuis(J.E, J.Lambda, x)
    scale = max(1.0, _maxabs(LL), _maxabs(EL2))
    return _maxabs(np.asarray(LL, dtype=float) - EL2) / scale, _maxabs(EL) / max(1.0, _maxabs(J.Lambda.dense(x)))


def is_jacobi(J: JacobiStructure, samples, test_family=None, tol=1e-9, min_valid=0.9, name="is_jacobi") -> CheckResult:
    """Check both Lichnerowicz tensor equations and the Jacobiator on a test family.

    The two criteria are independent routes to the same verdict; if they
    disagree the result is marked inconsistent.
    """
    family = default_test_family(J.chart) + list(test_family or [])
    sn_sweep, jac_sweep = Sweep(), Sweep()
    for x in samples:
        try:
            r1, r2 = lichnerowicz_residuals(J, x)
            table, scale = jacobiator_table(J, family, x)
        except SKIPPABLE as err:
            for s in (sn_sweep, jac_sweep):
                s.skipped[type(err).__name__] = s.skipped.get(type(err).__name__, 0) + 1
            continue
        sn_sweep.residuals.append(max(r1, r2))
        sn_sweep.points.append(x)
        jac_sweep.residuals.append(float(np.max(np.abs(table))) / scale)
        jac_sweep.points.append(x)
    sn = judge("lichnerowicz_equations", sn_sweep, tol, min_valid)
    jac = judge("jacobiator", jac_sweep, tol, min_valid, {"family_size": len(family)})
    result = combine(name, [sn, jac])
    if sn.passed != jac.passed and FAIL in (sn.status, jac.status):
        result.status = INCONSISTENT
        result.message = "Schouten-Nijenhuis verdict disagrees with the Jacobiator oracle"
    return result


def weak_leibniz_check(J: JacobiStructure, samples, functions, tol=1e-9) -> CheckResult:
    triples = list(itertools.permutations(functions, 3)) if len(functions) >= 3 else []
    s = sweep(lambda x: max((weak_leibniz_residual(J, f, g, h, x) for f, g, h in triples), default=0.0), samples)
    return judge("weak_leibniz", s, tol)


# -- contact forms -----------------------------------------------------------------


class ContactForm:
    """A one-form on an odd-dimensional chart, checked to be contact at samples."""

    def __init__(self, eta: FormField, name=None):
        if eta.kind != "form" or eta.degree != 1:
            raise ScenarioError("a contact form is a one-form")
        if eta.chart.dim % 2 != 1:
            raise ScenarioError(f"contact forms need odd dimension, chart {eta.chart.name!r} has {eta.chart.dim}")
        self.eta = eta
        self.name = name

    @property
    def chart(self) -> Chart:
        return self.eta.chart

    @property
    def n(self) -> int:
        return (self.chart.dim - 1) // 2

    def parts(self, x):
        """``(eta, d eta, flat)`` at ``x``; ``flat @ X`` is ``i_X d eta + eta(X) eta``."""
        ev = self.eta.dense(x)
        de = exterior_derivative(self.eta, x)
        if not _has_duals(x):
            ev, de = np.asarray(ev, dtype=float), np.asarray(de, dtype=float)
            return ev, de, de.T + np.outer(ev, ev)
        flat = ad.finish(np.asarray(de, dtype=object).T + _outer(ev, ev))
        return ev, de, flat


def contact_volume(form: ContactForm, x) -> float:
    """The single component of ``eta ^ (d eta)^n`` at ``x``."""
    ev, de, _ = form.parts(x)
    top = np.asarray(ev)
    for _ in range(form.n):
        top = wedge_dense(top, de)
    return float(ad.primal(np.asarray(top)[tuple(range(form.chart.dim))]))


def reeb(form: ContactForm, x):
    """Reeb field at ``x``: solves ``flat(R) = eta``."""
    ev, _, flat = form.parts(x)
    return solve(flat, ev, SingularFlat, "flat map")


def contact_hamiltonian_vf(form: ContactForm, f, x, verify=True):
    """``X_f`` with ``eta(X_f) = -f`` and ``i_X d eta = df - R(f) eta``."""
    ev, de, flat = form.parts(x)
    fv, df = value_grad(f, x)
    # one solve for both the Reeb field and flat^-1 df
    both = np.empty((len(ev), 2), dtype=object)
    both[:, 0] = list(ev)
    both[:, 1] = list(df)
    sol = np.asarray(solve(flat, ad.finish(both), SingularFlat, "flat map"))
    R, Y = sol[:, 0], sol[:, 1]
    Rf = _dot(R, df)
    X = ad.finish(np.asarray([Y[i] - (Rf + fv) * R[i] for i in range(len(ev))], dtype=object))
    if verify and not _has_duals(x):
        r1 = abs(float(_dot(ev, X)) + float(fv))
        lhs = mat_vec(np.asarray(de, dtype=float).T, X)
        r2 = _maxabs(np.asarray(lhs, dtype=float) - (np.asarray(df, dtype=float) - float(Rf) * np.asarray(ev, dtype=float)))
        scale = max(1.0, abs(float(fv)), _maxabs(df))
        if max(r1, r2) > 1e-10 * scale:
            raise InternalInconsistency(f"contact Hamiltonian field fails its defining equations ({max(r1, r2):.3g})")
    return X


def contact_bracket(form: ContactForm, f, g, x):
    """``{f, g} = X_f(g) + g R(f)``."""
    X = contact_hamiltonian_vf(form, f, x, verify=False)
    R = reeb(form, x)
    gv, dg = value_grad(g, x)
    _, df = value_grad(f, x)
    return _dot(dg, X) + gv * _dot(R, df)


def darboux_contact_vf(chart: Chart, qs, ps, z, f, x):
    """Closed-form contact Hamiltonian field in Darboux coordinates ``eta = dz - p_i dq^i``."""
    iq = [chart.index(c) for c in qs]
    ip = [chart.index(c) for c in ps]
    iz = chart.index(z)
    fv, df = value_grad(f, x)
    X = np.zeros(chart.dim)
    fz = df[iz]
    for a, b in zip(iq, ip):
        X[a] = df[b]
        X[b] = -(df[a] + x[b] * fz)
    X[iz] = sum(x[b] * df[b] for b in ip) - fv
    return X


def induced_jacobi(form: ContactForm, name=None) -> JacobiStructure:
    """The Jacobi structure ``(L, E)`` whose bracket is ``X_f(g) + g R(f)``."""
    n = form.chart.dim

    def parts(xs):
        ev, de, flat = form.parts(xs)
        K = inverse(flat, SingularFlat, "flat map")
        R = mat_vec(K, ev)
        proj = ad.finish(np.eye(n) - np.asarray(_outer(ev, R), dtype=object))
        A = np.asarray(K, dtype=object).dot(np.asarray(proj, dtype=object))
        P = -(A.T.dot(np.asarray(de, dtype=object)).dot(A))
        return ad.finish(P), R

    Lam = PointwiseField(form.chart, "multivector", 2, lambda xs: parts(xs)[0], "induced Lambda")
    E = PointwiseField(form.chart, "multivector", 1, lambda xs: ad.finish(-np.asarray(reeb(form, xs), dtype=object)), "induced E")
    return JacobiStructure(Lam, E, name or f"induced({form.name or 'eta'})")


# -- exact symplectic --------------------------------------------------------------


class ExactSymplectic:
    """A symplectic potential ``theta`` with ``omega = -d theta``."""

    def __init__(self, theta: FormField, name=None):
        if theta.kind != "form" or theta.degree != 1:
            raise ScenarioError("a symplectic potential is a one-form")
        if theta.chart.dim % 2:
            raise ScenarioError("exact symplectic charts have even dimension")
        self.theta = theta
        self.name = name

    @property
    def chart(self) -> Chart:
        return self.theta.chart

    @property
    def n(self) -> int:
        return self.chart.dim // 2

    def omega(self, x):
        return ad.finish(-np.asarray(exterior_derivative(self.theta, x), dtype=object))

    @property
    def omega_field(self):
        return PointwiseField(self.chart, "form", 2, self.omega, "omega")

    def poisson_bivector(self):
        """``(omega^T)^{-1}``, the Poisson tensor with ``X_f = #(df)``."""
        return PointwiseField(
            self.chart,
            "multivector",
            2,
            lambda xs: inverse(np.asarray(self.omega(xs), dtype=object).T, SingularSymplectic, "omega"),
            "Lambda_omega",
        )

    def liouville(self):
        return PointwiseField(self.chart, "multivector", 1, lambda xs: liouville_field(self, xs), "Liouville")


def liouville_field(S: ExactSymplectic, x):
    """Solves ``i_D omega = -theta``."""
    om = S.omega(x)
    rhs = ad.finish(-np.asarray(S.theta.dense(x), dtype=object))
    return solve(np.asarray(om, dtype=object).T, rhs, SingularSymplectic, "omega")


def hamiltonian_vf(S: ExactSymplectic, f, x):
    """Solves ``i_X omega = df``."""
    om = S.omega(x)
    _, df = value_grad(f, x)
    return solve(np.asarray(om, dtype=object).T, ad.finish(np.asarray(df, dtype=object)), SingularSymplectic, "omega")


def symplectic_bracket(S: ExactSymplectic, f, g, x):
    """``{f, g}_theta = X_f(g)``."""
    X = hamiltonian_vf(S, f, x)
    _, dg = value_grad(g, x)
    return _dot(dg, X)


# -- homogeneity -------------------------------------------------------------------


def _value(T, x):
    return T.dense(x) if hasattr(T, "dense") else T(x)


def homogeneity_residuals(T, Delta, samples, k_range=range(-3, 4)):
    """Scaled ``max |L_D T - k T|`` per candidate degree ``k``."""
    pairs = []
    skipped = 0
    for x in samples:
        try:
            L = np.asarray(primal_array(lie_derivative(Delta, T, x)), dtype=float)
            V = np.asarray(primal_array(_value(T, x)), dtype=float)
        except SKIPPABLE:
            skipped += 1
            continue
        pairs.append((L, V))
    if not pairs:
        raise NotHomogeneous("no admissible samples")
    scale = max(1.0, max(float(np.max(np.abs(V))) if V.size else 0.0 for _, V in pairs))
    res = {}
    for k in k_range:
        res[k] = max(float(np.max(np.abs(L - k * V))) if L.size else 0.0 for L, V in pairs) / scale
    size = max(float(np.max(np.abs(V))) if V.size else 0.0 for _, V in pairs)
    return res, size, skipped


def homogeneity_degree(T, Delta, samples, k_range=range(-3, 4), tol=1e-9) -> int:
    """The unique ``k`` in ``k_range`` with ``L_D T = k T`` at every sample."""
    res, size, _ = homogeneity_residuals(T, Delta, samples, k_range)
    if size < tol:
        raise NotHomogeneous("tensor vanishes at every sample; degree undefined", res)
    hits = [k for k, r in res.items() if r < tol]
    if len(hits) != 1:
        best = min(res, key=res.get)
        raise NotHomogeneous(f"no unique degree in {list(k_range)} (best {best}, residual {res[best]:.3g})", res)
    return hits[0]


# -- integrability -----------------------------------------------------------------


@dataclass
class HamiltonianSystem:
    structure: object
    hamiltonian: object
    integrals: list = field(default_factory=list)
    name: str | None = None


def numerical_rank(M, rel=1e-8) -> int:
    s = np.linalg.svd(np.atleast_2d(np.asarray(M, dtype=float)), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rel * s[0]))


def _rank_check(name, fs, samples, need, rank_rel):
    ranks = []
    skipped = 0
    for x in samples:
        try:
            M = np.array([np.asarray(value_grad(f, x)[1], dtype=float) for f in fs])
        except SKIPPABLE:
            skipped += 1
            continue
        ranks.append(numerical_rank(M, rank_rel))
    if not ranks:
        return CheckResult(name, "skipped", samples=0, skipped=skipped, message="no admissible samples")
    status = PASS if min(ranks) >= need else FAIL
    details = {"min_rank": min(ranks), "max_rank": max(ranks), "required": need}
    msg = ""
    if max(ranks) < len(fs):
        msg = "candidates are functionally dependent at every sample (duplicates?)"
    return CheckResult(name, status, None, None, None, len(ranks), skipped, None, details, msg)


def verify_contact_integrable(system: HamiltonianSystem, samples, tol=1e-9, rank_rel=1e-8) -> CheckResult:
    """Dissipated quantities, mutual involution and the rank condition."""
    form = system.structure
    if not isinstance(form, ContactForm):
        raise ScenarioError("verify_contact_integrable needs a contact form")
    fs = [as_scalar(form.chart, f) for f in system.integrals]
    h = as_scalar(form.chart, system.hamiltonian)
    if len(fs) != form.n + 1:
        raise WrongCount(f"need {form.n + 1} candidate integrals, got {len(fs)}")
    dissipated = judge(
        "dissipated", sweep(lambda x: max(abs(float(contact_bracket(form, f, h, x))) for f in fs), samples), tol
    )
    pairs = list(itertools.combinations(fs, 2))
    involution = judge(
        "involution",
        sweep(lambda x: max((abs(float(contact_bracket(form, f, g, x))) for f, g in pairs), default=0.0), samples),
        tol,
    )
    rank = _rank_check("rank", fs, samples, form.n, rank_rel)
    return combine("contact_integrable", [dissipated, involution, rank])


def verify_homogeneous_integrable(system: HamiltonianSystem, Delta, samples, tol=1e-9, rank_rel=1e-8) -> CheckResult:
    """First integrals of ``X_H`` in involution, independent and 1-homogeneous."""
    S = system.structure
    if not isinstance(S, ExactSymplectic):
        raise ScenarioError("verify_homogeneous_integrable needs an exact symplectic structure")
    fs = [as_scalar(S.chart, f) for f in system.integrals]
    H = as_scalar(S.chart, system.hamiltonian)
    if len(fs) != S.n:
        raise WrongCount(f"need {S.n} candidate integrals, got {len(fs)}")
    if Delta is None:
        Delta = S.liouville()

    def first_integrals(x):
        X = hamiltonian_vf(S, H, x)
        return max(abs(float(_dot(np.asarray(value_grad(f, x)[1], dtype=float), X))) for f in fs)

    pairs = list(itertools.combinations(fs, 2))
    conserved = judge("first_integrals", sweep(first_integrals, samples), tol)
    involution = judge(
        "involution",
        sweep(lambda x: max((abs(float(symplectic_bracket(S, f, g, x))) for f, g in pairs), default=0.0), samples),
        tol,
    )
    rank = _rank_check("rank", fs, samples, S.n, rank_rel)

    def degree_one(x):
        return max(abs(float(lie_derivative(Delta, f, x)) - float(f(x))) for f in fs + [H])

    homog = judge("homogeneous_degree_1", sweep(degree_one, samples), tol)
    return combine("homogeneous_integrable", [conserved, involution, rank, homog])
