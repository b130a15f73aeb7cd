"""Task handlers and command dispatch for scenarios."""

from __future__ import annotations

import itertools
import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import bihamiltonian as bh
from . import flows
from . import structures as st
from . import symplectization as sy
from .errors import ContactForgeError, InternalInconsistency, NotHomogeneous, ScenarioError, TrackingAmbiguity
from .expr import Add, Const, Mul, Var, parse
from .report import FAIL, INCONSISTENT, PASS, SKIPPED, CheckResult, combine, judge, sweep
from .tensors import AlternatingField, lie_derivative, mat_vec, pushforward

SCHEMA = "contactforge-report/1"

COMMANDS = ("check-structure", "recursion", "involution", "integrable", "symplectize", "nogo-report", "flow", "all")

_HANDLERS = {}


def task(check, command):
    def deco(fn):
        _HANDLERS[check] = (command, fn)
        return fn

    return deco


class Context:
    def __init__(self, seed=0, samples=None, tolerances=None, csv_path=None):
        self.seed = seed
        self.samples = samples
        self.tolerances = tolerances or {}
        self.csv_path = csv_path
        self.csv_written = []


def validate_task(scn, t):
    """Resolve every reference of a task at load time."""
    if t.check not in _HANDLERS:
        raise ScenarioError(f"{scn.source}: tasks.{t.index}: unknown check {t.check!r} (known: {', '.join(sorted(_HANDLERS))})")
    t.command = _HANDLERS[t.check][0]
    t.run = _HANDLERS[t.check][1](scn, t, f"tasks.{t.index} ({t.name})")


# -- helpers -----------------------------------------------------------------------


def _tol(scn, t, ctx, key):
    if "tol" in t.params:
        return float(t.params["tol"])
    return float(ctx.tolerances.get(key, scn.tolerances[key]))


def _samples(scn, t, ctx, chart, default=None):
    n = t.params.get("samples") or ctx.samples or default or scn.samples
    return scn.sample(chart, ctx.seed, t.index, int(n), t.params.get("where", ()))


def _exprs(chart, texts, where):
    out = []
    for s in texts:
        e = parse(str(s))
        unknown = e.free_variables() - set(chart.coords)
        if unknown:
            raise ScenarioError(f"{where}: unknown name(s) {sorted(unknown)} in {s!r}")
        out.append(chart.scalar(e))
    return out


def _constant(text):
    return float(parse(str(text)).eval({}))


def _vector_residual(F, expected):
    def residual(x):
        v = np.asarray(F(x), dtype=float)
        e = np.array([float(f(x)) for f in expected])
        return float(np.max(np.abs(v - e)))

    return residual


def _nonvanishing(name, fn, samples, floor=1e-12):
    """Pass iff ``|fn|`` stays above ``floor``; the minimum goes into the details."""
    s = sweep(lambda x: abs(float(fn(x))), samples)
    if not s.count:
        return judge(name, s, floor)
    low = min(s.residuals)
    i = s.residuals.index(low)
    return CheckResult(name, PASS if low > floor else FAIL, None, None, floor, s.count, s.n_skipped, tuple(s.points[i]), {"min_abs": low})


def _vector_field(scn, spec, where):
    """A vector-valued function from a tensor name or {structure, hamiltonian}."""
    if isinstance(spec, str):
        T = scn.tensor(spec, where)
        return T.chart, (lambda x: np.asarray(T.dense(x), dtype=float)), None
    S = scn.structure(spec.get("structure"), where)
    h = scn.function(spec.get("hamiltonian"), S.chart, where)
    if isinstance(S, st.ContactForm):
        return S.chart, (lambda x: st.contact_hamiltonian_vf(S, h, x)), (S, h)
    if isinstance(S, st.ExactSymplectic):
        return S.chart, (lambda x: np.asarray(st.hamiltonian_vf(S, h, x), dtype=float)), (S, h)
    P = S.Lambda

    def sharp_dh(x):
        _, dh = st.value_grad(h, x)
        return np.asarray(mat_vec(P.dense(x), dh), dtype=float)

    return S.chart, sharp_dh, (S, h)


def random_polynomials(chart, k, seed, degree=2):
    """Deterministic random polynomials with coefficients in [-1, 1] rounded to 3 decimals."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 7919])))
    monomials = [()]
    for d in range(1, degree + 1):
        monomials += list(itertools.combinations_with_replacement(chart.coords, d))
    out = []
    for _ in range(k):
        coeffs = np.round(rng.uniform(-1, 1, len(monomials)), 3)
        e = None
        for c, mono in zip(coeffs, monomials):
            if c == 0:
                continue
            term = Const(float(c))
            for v in mono:
                term = Mul(term, Var(v))
            e = term if e is None else Add(e, term)
        out.append(chart.scalar(e if e is not None else Const(0.0)))
    return out


def _pairs(scn, t, chart, where, seed_default=0):
    pairs = []
    for f, g in t.params.get("pairs", []):
        pairs.append((scn.function(f, chart, where), scn.function(g, chart, where)))
    n = int(t.params.get("random_pairs", 0))
    if n:
        polys = random_polynomials(chart, 2 * n, seed_default)
        pairs += list(zip(polys[0::2], polys[1::2]))
    return pairs


# -- check-structure ---------------------------------------------------------------


@task("jacobi", "check-structure")
def _jacobi(scn, t, w):
    J = scn.structure(t.params.get("structure"), w)
    family = [scn.function(f, J.chart, w) for f in t.params.get("family", [])]
    return lambda ctx: st.is_jacobi(J, _samples(scn, t, ctx, J.chart), family, _tol(scn, t, ctx, "jacobi"), scn.tolerances["min_valid"], t.name)


@task("weak_leibniz", "check-structure")
def _weak_leibniz(scn, t, w):
    J = scn.structure(t.params.get("structure"), w)
    fs = [scn.function(f, J.chart, w) for f in t.params.get("functions", [])] or st.default_test_family(J.chart)[1:]

    def run(ctx):
        pts = _samples(scn, t, ctx, J.chart, 16)
        tol = _tol(scn, t, ctx, "bracket")
        leib = st.weak_leibniz_check(J, pts, fs[:4], tol)
        anti = judge(
            "antisymmetry",
            sweep(lambda x: max(abs(float(st.jacobi_bracket(J, f, g, x) + st.jacobi_bracket(J, g, f, x))) for f, g in itertools.combinations(fs, 2)), pts),
            tol,
        )
        return combine(t.name, [leib, anti])

    return run


@task("jacobi_bracket", "check-structure")
def _jacobi_bracket(scn, t, w):
    J = scn.structure(t.params.get("structure"), w)
    f = scn.function(t.params.get("f"), J.chart, w)
    g = scn.function(t.params.get("g"), J.chart, w)
    expected = scn.function(t.params.get("expected"), J.chart, w)

    def run(ctx):
        pts = _samples(scn, t, ctx, J.chart)
        s = sweep(lambda x: abs(float(st.jacobi_bracket(J, f, g, x)) - float(expected(x))), pts)
        return judge(t.name, s, _tol(scn, t, ctx, "bracket"))

    return run


@task("contact_form", "check-structure")
def _contact_form(scn, t, w):
    form = scn.structure(t.params.get("structure"), w)
    if not isinstance(form, st.ContactForm):
        raise ScenarioError(f"{w}: contact_form needs a contact structure")
    expected = _exprs(form.chart, t.params["reeb"], w) if "reeb" in t.params else None

    def run(ctx):
        pts = _samples(scn, t, ctx, form.chart)
        vtol = _tol(scn, t, ctx, "vector")
        parts = [_nonvanishing("volume_nonzero", lambda x: st.contact_volume(form, x), pts)]

        def defining(x):
            ev, de, _ = form.parts(x)
            R = st.reeb(form, x)
            return max(abs(float(np.dot(ev, R)) - 1.0), float(np.max(np.abs(np.asarray(de, dtype=float).T @ R))))

        parts.append(judge("reeb_defining_equations", sweep(defining, pts), vtol))
        if expected:
            parts.append(judge("reeb_expected", sweep(_vector_residual(lambda x: st.reeb(form, x), expected), pts), vtol))
        return combine(t.name, parts)

    return run


@task("contact_vf", "check-structure")
def _contact_vf(scn, t, w):
    form = scn.structure(t.params.get("structure"), w)
    h = scn.function(t.params.get("hamiltonian"), form.chart, w)
    expected = _exprs(form.chart, t.params["expected"], w) if "expected" in t.params else None
    darboux = t.params.get("darboux")

    def run(ctx):
        pts = _samples(scn, t, ctx, form.chart)
        vtol = _tol(scn, t, ctx, "vector")
        F = lambda x: st.contact_hamiltonian_vf(form, h, x)
        parts = [judge("defining_equations", sweep(lambda x: (F(x), 0.0)[1], pts), vtol)]
        if expected:
            parts.append(judge("expected_components", sweep(_vector_residual(F, expected), pts), vtol))
        if darboux:
            oracle = lambda x: st.darboux_contact_vf(form.chart, darboux["q"], darboux["p"], darboux["z"], h, x)
            parts.append(judge("darboux_oracle", sweep(lambda x: float(np.max(np.abs(F(x) - oracle(x)))), pts), vtol))
        return combine(t.name, parts)

    return run


@task("induced_jacobi", "check-structure")
def _induced_jacobi(scn, t, w):
    form = scn.structure(t.params.get("structure"), w)
    J = st.induced_jacobi(form)
    expL = scn.tensor(t.params["expected_Lambda"], w) if "expected_Lambda" in t.params else None
    expE = scn.tensor(t.params["expected_E"], w) if "expected_E" in t.params else None
    fam = st.default_test_family(form.chart)

    def run(ctx):
        pts = _samples(scn, t, ctx, form.chart, 16)
        btol = _tol(scn, t, ctx, "bracket")
        pairs = list(itertools.permutations(fam[: form.chart.dim + 4], 2))

        def agree(x):
            return max(abs(float(st.jacobi_bracket(J, f, g, x)) - float(st.contact_bracket(form, f, g, x))) for f, g in pairs)

        parts = [judge("bracket_equals_contact_bracket", sweep(agree, pts), btol)]
        parts.append(
            judge("reeb_annihilation", sweep(lambda x: float(np.max(np.abs(np.asarray(J.Lambda.dense(x), dtype=float) @ form.eta.dense(x)))), pts), btol)
        )
        if expL is not None:
            parts.append(judge("Lambda_expected", sweep(lambda x: float(np.max(np.abs(J.Lambda.dense(x) - expL.dense(x)))), pts), btol))
        if expE is not None:
            parts.append(judge("E_expected", sweep(lambda x: float(np.max(np.abs(J.E.dense(x) - expE.dense(x)))), pts), btol))
        parts.append(st.is_jacobi(J, pts[:8], tol=_tol(scn, t, ctx, "jacobi"), name="is_jacobi"))
        return combine(t.name, parts)

    return run


@task("exact_symplectic", "check-structure")
def _exact(scn, t, w):
    S = scn.structure(t.params.get("structure"), w)
    if not isinstance(S, st.ExactSymplectic):
        raise ScenarioError(f"{w}: exact_symplectic needs an exact symplectic structure")
    expected = _exprs(S.chart, t.params["liouville"], w) if "liouville" in t.params else None

    def run(ctx):
        pts = _samples(scn, t, ctx, S.chart)
        vtol = _tol(scn, t, ctx, "vector")
        parts = [_nonvanishing("omega_nondegenerate", lambda x: np.linalg.det(np.asarray(S.omega(x), dtype=float)), pts)]

        def defining(x):
            D = st.liouville_field(S, x)
            return float(np.max(np.abs(np.asarray(S.omega(x), dtype=float).T @ D + np.asarray(S.theta.dense(x), dtype=float))))

        parts.append(judge("liouville_defining_equation", sweep(defining, pts), vtol))
        if expected:
            parts.append(judge("liouville_expected", sweep(_vector_residual(lambda x: st.liouville_field(S, x), expected), pts), vtol))
        return combine(t.name, parts)

    return run


@task("hamiltonian_vf", "check-structure")
def _hamiltonian_vf(scn, t, w):
    S = scn.structure(t.params.get("structure"), w)
    h = scn.function(t.params.get("hamiltonian"), S.chart, w)
    expected = _exprs(S.chart, t.params["expected"], w)

    def run(ctx):
        pts = _samples(scn, t, ctx, S.chart)
        F = lambda x: np.asarray(st.hamiltonian_vf(S, h, x), dtype=float)
        return judge(t.name, sweep(_vector_residual(F, expected), pts), _tol(scn, t, ctx, "vector"))

    return run


@task("compatibility", "check-structure")
def _compatibility(scn, t, w):
    a = scn.structure(t.params.get("a"), w)
    b = scn.structure(t.params.get("b"), w)
    both_poisson = all(isinstance(j.E, AlternatingField) and not j.E.components for j in (a, b))

    def run(ctx):
        pts = _samples(scn, t, ctx, a.chart, 16)
        tol = _tol(scn, t, ctx, "jacobi")
        if both_poisson:
            r = bh.poisson_compatibility(a.Lambda, b.Lambda, pts, tol)
        else:
            r = bh.jacobi_compatibility(a, b, pts, tol)
        r.name = t.name
        return r

    return run


@task("tensor_equal", "check-structure")
def _tensor_equal(scn, t, w):
    a = scn.tensor(t.params.get("a"), w)
    b = scn.tensor(t.params.get("b"), w)
    if a.chart != b.chart:
        raise ScenarioError(f"{w}: tensors live on different charts")

    def run(ctx):
        pts = _samples(scn, t, ctx, a.chart)
        diff = lambda x: float(np.max(np.abs(np.asarray(a.dense(x), dtype=float) - np.asarray(b.dense(x), dtype=float))))
        return judge(t.name, sweep(diff, pts), _tol(scn, t, ctx, "vector"))

    return run


@task("homogeneity", "check-structure")
def _homogeneity(scn, t, w):
    ref = t.params.get("target")
    target = scn.fields.get(ref) or scn.tensor(ref, w)
    Delta = scn.tensor(t.params.get("liouville"), w)
    expected = t.params.get("degree")
    trivial = target is Delta

    def run(ctx):
        if trivial:
            msg = "L_Delta Delta = [Delta, Delta] = 0 identically; the degree-0 test is vacuous"
            return CheckResult(t.name, SKIPPED, details={"expected": expected}, message=msg)
        pts = _samples(scn, t, ctx, target.chart, 16)
        tol = _tol(scn, t, ctx, "homogeneity")
        try:
            k = st.homogeneity_degree(target, Delta, pts, tol=tol)
            res = None
        except NotHomogeneous as err:
            k, res = None, err.residuals
        ok = (k == expected) if expected != "none" else (k is None)
        details = {"detected": k if k is not None else "none", "expected": expected}
        if res:
            details["residual_profile"] = {str(kk): v for kk, v in res.items()}
        return CheckResult(t.name, PASS if ok else FAIL, None, None, tol, len(pts), 0, None, details)

    return run


@task("pushforward_match", "check-structure")
def _pushforward(scn, t, w):
    c_from, F_from, _ = _vector_field(scn, t.params.get("vf_from"), w)
    c_to, F_to, _ = _vector_field(scn, t.params.get("vf_to"), w)
    mapping = {k: parse(str(v)) for k, v in t.params.get("mapping", {}).items()}
    if set(mapping) != set(c_to.coords):
        raise ScenarioError(f"{w}: mapping must give every coordinate of chart {c_to.name!r}")
    expected = _exprs(c_to, t.params["expected"], w) if "expected" in t.params else None

    def run(ctx):
        pts = _samples(scn, t, ctx, c_from)
        tol = _tol(scn, t, ctx, "bracket")

        def residual(x):
            y, v = pushforward(c_from, c_to, mapping, np.asarray(F_from(x), dtype=float), x)
            r = float(np.max(np.abs(v - np.asarray(F_to(tuple(y)), dtype=float))))
            if expected:
                r = max(r, float(np.max(np.abs(v - np.array([float(f(tuple(y))) for f in expected])))))
            return r

        return judge(t.name, sweep(residual, pts), tol)

    return run


# -- recursion ---------------------------------------------------------------------


@task("recursion", "recursion")
def _recursion(scn, t, w):
    L = scn.bivector(t.params.get("Lambda"), w)
    L1 = scn.bivector(t.params.get("Lambda1"), w)
    expected = _exprs(L.chart, t.params.get("eigenvalues", []), w)
    mults = t.params.get("multiplicities")

    def run(ctx):
        pts = _samples(scn, t, ctx, L.chart)
        tol = _tol(scn, t, ctx, "eigen")
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([ctx.seed, t.index, 1])))
        bad_mult = []

        def spectrum(x):
            c = bh.eigenvalue_clusters(bh.recursion_operator(L, L1, x))
            exp_vals = sorted(float(f(x)) for f in expected)
            got = c.real_values
            if c.nonreal or len(got) != len(exp_vals):
                return float("inf")
            if mults is not None and sorted(m for _, m in c.values) != sorted(mults):
                bad_mult.append(tuple(x))
                return float("inf")
            return max(abs(a - b) for a, b in zip(got, exp_vals)) / max(1.0, max(abs(v) for v in exp_vals))

        def contract(x):
            N = bh.recursion_operator(L, L1, x).matrix
            a = rng.standard_normal(L.chart.dim)
            P = np.asarray(L.dense(x), dtype=float)
            P1 = np.asarray(L1.dense(x), dtype=float)
            return float(np.max(np.abs(N @ (P @ a) - P1 @ a))) / max(1.0, float(np.max(np.abs(P1))))

        parts = [judge("sharp_contract", sweep(contract, pts), tol)]
        if expected:
            msg = f"multiplicity mismatch at {len(bad_mult)} samples" if bad_mult else ""
            parts.append(judge("eigenvalue_clusters", sweep(spectrum, pts), tol, message=msg))
        return combine(t.name, parts)

    return run


@task("eigen_tracking", "recursion")
def _eigen_tracking(scn, t, w):
    ef = scn._get(scn.eigen, "eigenvalue family", t.params.get("eigen"), w)
    a = np.array(t.params.get("from", ef.base_point), dtype=float)
    b = np.array(t.params["to"], dtype=float)
    steps = int(t.params.get("steps", 20))
    expected = [_constant(v) for v in t.params.get("expected_end", [])]

    def run(ctx):
        path = [tuple(a + (b - a) * k / steps) for k in range(steps + 1)]
        try:
            vals = ef.track(path)
        except TrackingAmbiguity as err:
            return CheckResult(t.name, FAIL, None, None, None, len(path), 0, None, {"error": "TrackingAmbiguity"}, str(err))
        r = float(np.max(np.abs(vals[-1] - np.array(expected)))) if expected else 0.0
        tol = _tol(scn, t, ctx, "eigen")
        return CheckResult(t.name, PASS if r < tol else FAIL, r, None, tol, len(path), 0, None, {"end_values": [float(v) for v in vals[-1]]})

    return run


# -- involution / bi-Hamiltonian ---------------------------------------------------


@task("involution", "involution")
def _involution(scn, t, w):
    B = scn.structure(t.params["bracket"], w) if t.params.get("bracket") in scn.structures else scn.tensor(t.params.get("bracket"), w)
    fs = [scn.function(f, B.chart, w) for f in t.params.get("functions", [])]

    def run(ctx):
        return bh.involution_check(fs, B, _samples(scn, t, ctx, B.chart), _tol(scn, t, ctx, "involution"), t.name)

    return run


@task("bihamiltonian", "involution")
def _bihamiltonian(scn, t, w):
    X = scn.tensor(t.params.get("X"), w)
    L = scn.bivector(t.params.get("Lambda"), w)
    L1 = scn.bivector(t.params.get("Lambda1"), w)
    h = scn.function(t.params.get("h"), L.chart, w)
    h1 = scn.function(t.params.get("h1"), L.chart, w)

    def run(ctx):
        r = bh.bihamiltonian_check(X, L, h, L1, h1, _samples(scn, t, ctx, L.chart), _tol(scn, t, ctx, "bihamiltonian"))
        r.name = t.name
        return r

    return run


@task("rank", "involution")
def _rank(scn, t, w):
    chart = scn.chart(t.params.get("chart", scn.default_chart), w)
    fs = [scn.function(f, chart, w) for f in t.params.get("functions", [])]
    need = int(t.params.get("min_rank", len(fs)))

    def run(ctx):
        r = st._rank_check(t.name, fs, _samples(scn, t, ctx, chart), need, _tol(scn, t, ctx, "rank_rel"))
        return r

    return run


# -- integrable --------------------------------------------------------------------


@task("contact_integrable", "integrable")
def _contact_integrable(scn, t, w):
    sys_ = scn.system(t.params.get("system"), w)

    def run(ctx):
        r = st.verify_contact_integrable(sys_, _samples(scn, t, ctx, sys_.structure.chart), _tol(scn, t, ctx, "bracket"), _tol(scn, t, ctx, "rank_rel"))
        r.name = t.name
        return r

    return run


@task("homogeneous_integrable", "integrable")
def _homogeneous_integrable(scn, t, w):
    sys_ = scn.system(t.params.get("system"), w)
    Delta = scn.tensor(t.params["liouville"], w) if "liouville" in t.params else None

    def run(ctx):
        pts = _samples(scn, t, ctx, sys_.structure.chart)
        r = st.verify_homogeneous_integrable(sys_, Delta, pts, _tol(scn, t, ctx, "bracket"), _tol(scn, t, ctx, "rank_rel"))
        r.name = t.name
        return r

    return run


@task("kolmogorov", "integrable")
def _kolmogorov(scn, t, w):
    chart = scn.chart(t.params.get("chart", scn.default_chart), w)
    H = scn.function(t.params.get("hamiltonian"), chart, w)
    acts = t.params.get("action_coords", [])
    for a in acts:
        chart.index(a)

    def run(ctx):
        r = bh.kolmogorov_check(H, chart, acts, _samples(scn, t, ctx, chart), _tol(scn, t, ctx, "kolmogorov_det"))
        r.name = t.name
        return r

    return run


@task("fernandes", "integrable")
def _fernandes(scn, t, w):
    ef = scn._get(scn.eigen, "eigenvalue family", t.params.get("eigen"), w)
    H = scn.function(t.params.get("hamiltonian"), ef.chart, w)

    def run(ctx):
        r = bh.fernandes_separability_residual(H, ef.fields(), _samples(scn, t, ctx, ef.chart, 8))
        r.name = t.name
        return r

    return run


# -- symplectize -------------------------------------------------------------------


@task("lift", "symplectize")
def _lift(scn, t, w):
    link = scn.link(t.params.get("link"), w)
    f = scn.function(t.params.get("field"), link.base_chart, w)
    expected = scn.function(t.params.get("expected"), link.total, w)

    def run(ctx):
        F = sy.lift_function(link, f)
        pts = _samples(scn, t, ctx, link.total)
        r = judge(t.name, sweep(lambda x: abs(float(F(x)) - float(expected(x))), pts), 1e-12, details={"lift": str(F.expr)})
        deg = judge("one_homogeneous", sweep(lambda x: abs(float(lie_derivative(link.liouville, F, x)) - float(F(x))), pts), _tol(scn, t, ctx, "homogeneity"))
        out = combine(t.name, [r, deg], {"lift": str(F.expr)})
        return out

    return run


@task("project", "symplectize")
def _project(scn, t, w):
    link = scn.link(t.params.get("link"), w)
    F = scn.function(t.params.get("field"), link.total, w)
    degree = int(t.params.get("degree", 1))
    expected = scn.function(t.params["expected"], link.base_chart, w) if "expected" in t.params else None

    def run(ctx):
        pts_total = _samples(scn, t, ctx, link.total, 16)
        try:
            f = sy.project_function(link, F, degree, pts_total, _tol(scn, t, ctx, "homogeneity"))
        except NotHomogeneous as err:
            return CheckResult(t.name, FAIL, None, None, None, len(pts_total), 0, None, {"residual_profile": {str(k): v for k, v in err.residuals.items()}}, str(err))
        details = {"projection": str(f.expr)}
        if expected is None:
            return CheckResult(t.name, PASS, None, None, None, len(pts_total), 0, None, details)
        pts = _samples(scn, t, ctx, link.base_chart, 16)
        return judge(t.name, sweep(lambda x: abs(float(f(x)) - float(expected(x))), pts), 1e-12, details=details)

    return run


@task("bracket_correspondence", "symplectize")
def _bracket_corr(scn, t, w):
    link = scn.link(t.params.get("link"), w)

    def run(ctx):
        pairs = _pairs(scn, t, link.base_chart, w, ctx.seed)
        pts = _samples(scn, t, ctx, link.total)
        r = sy.bracket_correspondence(link, pairs, pts, _tol(scn, t, ctx, "correspondence"))
        r.name = t.name
        return r

    return run


@task("symplectization_consistency", "symplectize")
def _consistency(scn, t, w):
    link = scn.link(t.params.get("link"), w)

    def run(ctx):
        pairs = _pairs(scn, t, link.base_chart, w, ctx.seed) or None
        pts = _samples(scn, t, ctx, link.total)
        r = sy.symplectization_consistency(link, pts, pairs, _tol(scn, t, ctx, "correspondence"))
        r.name = t.name
        return r

    return run


@task("dissipated_conserved", "symplectize")
def _diss_cons(scn, t, w):
    link = scn.link(t.params.get("link"), w)
    h = scn.function(t.params.get("hamiltonian"), link.base_chart, w)
    fs = [scn.function(f, link.base_chart, w) for f in t.params.get("functions", [])]

    def run(ctx):
        pts = _samples(scn, t, ctx, link.total, 16)
        tol = _tol(scn, t, ctx, "bracket")
        H = sy.lift_function(link, h)
        n = link.total.dim - 1
        rows, ok = {}, True
        for f in fs:
            F = sy.lift_function(link, f)
            diss = max(abs(float(st.contact_bracket(link.base, f, h, x[:n]))) for x in pts)
            cons = max(abs(float(st.symplectic_bracket(link.structure, H, F, x))) for x in pts)
            rows[f.name] = {"dissipated": diss < tol, "conserved": cons < tol, "bracket_eta": diss, "X_H_of_lift": cons}
            ok &= (diss < tol) == (cons < tol)
        return CheckResult(t.name, PASS if ok else INCONSISTENT, None, None, tol, len(pts), 0, None, rows)

    return run


# -- nogo --------------------------------------------------------------------------


@task("nogo", "nogo-report")
def _nogo(scn, t, w):
    L = scn.bivector(t.params.get("Lambda"), w)
    L1 = scn.bivector(t.params.get("Lambda1"), w)
    Delta = scn.tensor(t.params.get("liouville"), w)
    H = scn.function(t.params["hamiltonian"], L.chart, w) if "hamiltonian" in t.params else None
    acts = t.params.get("action_coords")

    def run(ctx):
        pts = _samples(scn, t, ctx, L.chart, 16)
        v = bh.nogo_diagnostic(L, L1, Delta, H, pts, acts, _tol(scn, t, ctx, "homogeneity"))
        return v.to_result(t.name)

    return run


# -- flow --------------------------------------------------------------------------


@task("flow", "flow")
def _flow(scn, t, w):
    chart, F, origin = _vector_field(scn, t.params.get("vf"), w)
    x0 = [_constant(v) for v in t.params.get("x0", [])]
    if len(x0) != chart.dim:
        raise ScenarioError(f"{w}: x0 needs {chart.dim} values")
    t_end = float(t.params.get("t_end", 1.0))
    dt = float(t.params.get("dt", 1e-3))
    expected = [_constant(v) for v in t.params.get("expected_end", [])]
    diss = [scn.function(f, chart, w) for f in t.params.get("dissipated", [])]
    cons = [scn.function(f, chart, w) for f in t.params.get("conserved", [])]
    order_dt = t.params.get("order_dt")
    if diss and (origin is None or not isinstance(origin[0], st.ContactForm)):
        raise ScenarioError(f"{w}: dissipation monitors need a contact Hamiltonian vector field")

    def run(ctx):
        parts = []
        try:
            traj = flows.integrate(F, x0, t_end, dt, chart)
        except ContactForgeError as err:
            if getattr(err, "trajectory", None) is not None:
                return CheckResult(t.name, FAIL, None, None, None, len(err.trajectory.times), 0, None, {"exit_time": err.trajectory.exit_time}, str(err))
            raise
        if ctx.csv_path:
            path = ctx.csv_path if not ctx.csv_written else f"{ctx.csv_path}.{t.index}"
            traj.to_csv(path)
            ctx.csv_written.append(path)
        tol = _tol(scn, t, ctx, "flow")
        if expected:
            err = float(np.max(np.abs(traj.end - np.array(expected))))
            parts.append(CheckResult("endpoint", PASS if err < tol else FAIL, err, None, tol, len(traj.times), 0, None, {"end": [float(v) for v in traj.end]}))
        for f in diss:
            parts.append(flows.dissipation_monitor(traj, origin[0], origin[1], f, _tol(scn, t, ctx, "dissipation")))
        for f in cons:
            S = origin[0] if origin and isinstance(origin[0], st.ExactSymplectic) else None
            parts.append(flows.conservation_monitor(traj, S, origin[1] if S else None, f, _tol(scn, t, ctx, "conservation")))
        if order_dt and expected:
            errs = []
            for step in (float(order_dt), float(order_dt) / 2):
                e = flows.integrate(F, x0, t_end, step, chart).end
                errs.append(float(np.linalg.norm(e - np.array(expected))))
            ratio = errs[0] / errs[1] if errs[1] > 0 else float("inf")
            order = {"ratio": ratio, "errors": errs, "dt": float(order_dt), "accepted": [12.0, 20.0]}
            parts.append(CheckResult("rk4_order", PASS if 12 <= ratio <= 20 else FAIL, None, None, None, 2, 0, None, order))
        return combine(t.name, parts, {"steps": len(traj.times) - 1, "dt": traj.dt})

    return run


# -- dispatch ----------------------------------------------------------------------


def _apply_expectation(t, r: CheckResult) -> CheckResult:
    if t.expect != "fail" or r.status not in (PASS, FAIL):
        return r
    observed = r.status
    r.details = dict(r.details)
    r.details["expected_outcome"] = "fail"
    r.details["observed_outcome"] = observed
    if observed == FAIL:
        r.status = PASS
        r.message = f"fails as expected{': ' + r.message if r.message else ''}"
    else:
        r.status = FAIL
        r.message = "expected this check to fail, but it passed"
    return r


def run_task(t, ctx) -> CheckResult:
    try:
        r = t.run(ctx)
    except InternalInconsistency as err:
        r = CheckResult(t.name, INCONSISTENT, message=f"InternalInconsistency: {err}")
    except ContactForgeError as err:
        r = CheckResult(t.name, FAIL, message=f"{type(err).__name__}: {err}")
    r.name = t.name
    return _apply_expectation(t, r)


def threads_from_env() -> int:
    raw = os.environ.get("CONTACTFORGE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run(scn, command, seed=0, samples=None, tolerances=None, csv_path=None, threads=None):
    """Run the tasks selected by ``command``; returns ``(report dict, exit code, wall seconds)``."""
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    ctx = Context(seed, samples, tolerances, csv_path)
    start = time.perf_counter()
    selected = [t for t in scn.tasks if command == "all" or t.command == command]
    threads = threads or threads_from_env()
    if threads > 1 and len(selected) > 1 and not csv_path:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = dict(zip((t.index for t in selected), pool.map(lambda t: run_task(t, ctx), selected)))
    else:
        results = {t.index: run_task(t, ctx) for t in selected}
    entries = []
    for t in scn.tasks:
        if t.index in results:
            d = results[t.index].to_dict()
        else:
            d = CheckResult(t.name, SKIPPED, message=f"not selected by command {command!r}").to_dict()
        d.update({"index": t.index, "check": t.check, "command": t.command})
        entries.append(d)
    statuses = [e["status"] for e in entries if e["index"] in results]
    counts = {s: statuses.count(s) for s in (PASS, FAIL, SKIPPED, INCONSISTENT)}
    if INCONSISTENT in statuses:
        overall, code = INCONSISTENT, 2
    elif FAIL in statuses:
        overall, code = FAIL, 1
    else:
        overall, code = PASS, 0
    eff_tol = dict(scn.tolerances)
    eff_tol.update(tolerances or {})
    report = {
        "schema": SCHEMA,
        "scenario": scn.name,
        "source": scn.source,
        "command": command,
        "seed": seed,
        "samples": samples or scn.samples,
        "tolerances": eff_tol,
        "notes": list(scn.notes),
        "tasks": entries,
        "summary": {"status": overall, "counts": counts},
    }
    return report, code, time.perf_counter() - start
