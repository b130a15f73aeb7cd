"""Compatible pairs, recursion operators, eigenvalue fields and the no-go diagnostic."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import (
    EigenSolverFailure,
    IllConditionedJacobian,
    InternalInconsistency,
    NotHomogeneous,
    SingularSharp,
    TrackingAmbiguity,
)
from .linalg import inverse, primal_array
from .report import FAIL, INCONSISTENT, PASS, SKIPPABLE, SKIPPED, CheckResult, Sweep, combine, judge, sweep
from .structures import (
    JacobiStructure,
    _maxabs,
    homogeneity_degree,
    homogeneity_residuals,
    is_jacobi,
    jacobi_bracket,
    numerical_rank,
    value_grad,
)
from .tensors import MixedTensorPointValue, PointwiseField, lie_derivative, mat_vec, schouten_nijenhuis


def _bivector(L):
    return L.Lambda if isinstance(L, JacobiStructure) else L


# -- compatibility -----------------------------------------------------------------


def poisson_compatibility(L, L1, samples, tol=1e-9) -> CheckResult:
    """``[L, L1] = 0`` at samples, cross-checked against ``is_jacobi(L + L1)``."""

    def residual(x):
        SN = schouten_nijenhuis(L, L1, x)
        scale = max(1.0, _maxabs(L.dense(x)), _maxabs(L1.dense(x)))
        return _maxabs(SN) / scale

    direct = judge("schouten_bracket", sweep(residual, samples), tol)
    cross = is_jacobi(JacobiStructure.poisson(L + L1), samples, tol=tol, name="sum_is_poisson")
    result = combine("poisson_compatibility", [direct, cross])
    if direct.status in (PASS, FAIL) and cross.status in (PASS, FAIL) and direct.passed != cross.passed:
        result.status = INCONSISTENT
        result.message = "[L, L1] verdict disagrees with the Poisson check of L + L1"
    return result


def jacobi_compatibility(J, J1, samples, tol=1e-9) -> CheckResult:
    """The sum is Jacobi; cross-checked through the Poissonizations."""
    from .symplectization import poissonize, total_samples

    direct = is_jacobi(J + J1, samples, tol=tol, name="sum_is_jacobi")
    PL, chart = poissonize(J)
    PL1, _ = poissonize(J1, chart)
    via = poisson_compatibility(PL, PL1, total_samples(samples), tol)
    via.name = "poissonized_compatibility"
    result = combine("jacobi_compatibility", [direct, via])
    if direct.status in (PASS, FAIL) and via.status in (PASS, FAIL) and direct.passed != via.passed:
        result.status = INCONSISTENT
        result.message = "direct and Poissonization routes disagree"
    return result


# -- recursion operator ------------------------------------------------------------


def _recursion_matrix(L, L1, xs):
    P = L.dense(xs)
    P1 = L1.dense(xs)
    Pinv = inverse(P, SingularSharp, "sharp map")
    return ad.finish(np.asarray(P1, dtype=object).dot(np.asarray(Pinv, dtype=object)))


def recursion_operator(L, L1, x) -> MixedTensorPointValue:
    """``N = P1 P^-1`` so that ``N #_L(a) = #_L1(a)``."""
    L, L1 = _bivector(L), _bivector(L1)
    N = np.asarray(_recursion_matrix(L, L1, x), dtype=float)
    return MixedTensorPointValue(L.chart, tuple(float(v) for v in x), N)


def recursion_field(L, L1) -> PointwiseField:
    L, L1 = _bivector(L), _bivector(L1)
    return PointwiseField(L.chart, "mixed", (1, 1), lambda xs: _recursion_matrix(L, L1, xs), "N")


@dataclass
class EigenvalueClusters:
    point: tuple | None
    values: list  # (value, multiplicity), ascending
    nonreal: list = field(default_factory=list)
    discarded_imag: float = 0.0

    @property
    def real_values(self):
        return [v for v, _ in self.values]

    def to_dict(self):
        return {
            "values": [[v, m] for v, m in self.values],
            "nonreal": [[z.real, z.imag] for z in self.nonreal],
            "discarded_imag": self.discarded_imag,
        }


def eigenvalue_clusters(N, cluster_tol=None, complex_tol=1e-8, point=None) -> EigenvalueClusters:
    """Real eigenvalues grouped within ``cluster_tol`` (default 1e-6 times the spectral radius).

    A conjugate pair counts as real when its imaginary part is below
    ``complex_tol`` (relative to the spectral radius) or when the pair would
    fall in one cluster, which is how a split double root shows up.
    """
    if isinstance(N, MixedTensorPointValue):
        point = point or N.point
        N = N.matrix
    N = np.asarray(N, dtype=float)
    if N.ndim != 2 or N.shape[0] != N.shape[1]:
        raise EigenSolverFailure("recursion operator must be a square matrix")
    try:
        w = np.linalg.eigvals(N)
    except np.linalg.LinAlgError as err:
        raise EigenSolverFailure(str(err)) from err
    if not np.all(np.isfinite(w)):
        raise EigenSolverFailure("non-finite eigenvalues")
    rho = float(np.max(np.abs(w))) if w.size else 0.0
    ctol = cluster_tol if cluster_tol is not None else 1e-6 * rho
    real, nonreal, discarded = [], [], 0.0
    for z in w:
        if abs(z.imag) <= complex_tol * max(1.0, rho) or 2 * abs(z.imag) <= ctol:
            real.append(float(z.real))
            discarded = max(discarded, abs(float(z.imag)))
        elif z.imag > 0:
            nonreal.append(complex(z))
    real.sort()
    groups = []
    for v in real:
        if groups and v - groups[-1][-1] <= ctol:
            groups[-1].append(v)
        else:
            groups.append([v])
    values = [(float(np.mean(g)), len(g)) for g in groups]
    return EigenvalueClusters(point, values, nonreal, discarded)


def _match(ref, cands):
    """Assign each reference value its nearest candidate; None if ambiguous."""
    cands = np.asarray(cands, dtype=float)
    out = []
    used = set()
    for r in ref:
        d = np.abs(cands - r)
        order = np.argsort(d)
        best = int(order[0])
        if len(order) > 1 and d[order[1]] <= 2.0 * d[best]:
            return None
        if best in used:
            return None
        used.add(best)
        out.append(float(cands[best]))
    return out


def _pt(x):
    return "(" + ", ".join(f"{float(v):.6g}" for v in x) + ")"


class EigenvalueFields:
    """Distinct real eigenvalues of ``N`` continued from a base point.

    Pointwise evaluation labels the fields by ascending value, which is a
    valid local labelling wherever the eigenvalue count matches the base
    point and no two fields meet.  ``track`` follows a path by nearest-value
    matching and raises :class:`TrackingAmbiguity` at merges or ambiguous
    steps rather than guessing.
    """

    def __init__(self, L, L1, base_point, cluster_tol=None, h=1e-5):
        self.N = recursion_field(L, L1)
        self.chart = self.N.chart
        self.cluster_tol = cluster_tol
        self.h = h
        base = self.clusters(base_point)
        self.base_point = tuple(float(v) for v in base_point)
        self.reference = base.real_values
        self.multiplicities = [m for _, m in base.values]

    @property
    def count(self) -> int:
        return len(self.reference)

    def clusters(self, x) -> EigenvalueClusters:
        N = np.asarray(primal_array(self.N.dense(x)), dtype=float)
        return eigenvalue_clusters(N, self.cluster_tol, point=tuple(float(v) for v in x))

    def values(self, x):
        vals = self.clusters(x).real_values
        if len(vals) != self.count:
            raise TrackingAmbiguity(f"{len(vals)} real eigenvalue clusters at {_pt(x)}, expected {self.count}")
        return vals

    def values_near(self, x, ref):
        vals = self.clusters(x).real_values
        if len(vals) != len(ref):
            raise TrackingAmbiguity(f"eigenvalue clusters merge or split at {_pt(x)}")
        matched = _match(ref, vals)
        if matched is None:
            raise TrackingAmbiguity(f"nearest-value matching is ambiguous at {_pt(x)}")
        return matched

    def track(self, path):
        ref = self.reference
        out = []
        for x in path:
            ref = self.values_near(x, ref)
            out.append(ref)
        return np.array(out)

    def field(self, i) -> "EigenvalueField":
        return EigenvalueField(self, i)

    def fields(self):
        return [self.field(i) for i in range(self.count)]

    def gradients(self, x):
        """Central-difference gradients of every field at ``x`` (rows)."""
        x = np.asarray(x, dtype=float)
        center = self.values(x)
        G = np.empty((self.count, len(x)))
        for j in range(len(x)):
            step = self.h * max(1.0, abs(x[j]))
            xp, xm = x.copy(), x.copy()
            xp[j] += step
            xm[j] -= step
            vp = np.array(self.values_near(xp, center))
            vm = np.array(self.values_near(xm, center))
            G[:, j] = (vp - vm) / (xp[j] - xm[j])
        return G


class EigenvalueField:
    """One tracked eigenvalue as a scalar field with a finite-difference gradient."""

    def __init__(self, parent: EigenvalueFields, index: int):
        self.parent = parent
        self.index = index
        self.chart = parent.chart
        self.name = f"lambda_{index + 1}"

    def __call__(self, xs):
        return self.parent.values([ad.primal(v) for v in xs])[self.index]

    def gradient(self, x):
        return self.parent.gradients(x)[self.index]

    def __repr__(self):
        return f"EigenvalueField({self.name})"


# -- involution and bi-Hamiltonian checks ------------------------------------------


def _as_jacobi(B):
    return B if isinstance(B, JacobiStructure) else JacobiStructure.poisson(B)


def involution_check(functions, bracket, samples, tol=1e-6, name="involution") -> CheckResult:
    """Max of ``|{f_i, f_j}|`` over samples and pairs."""
    J = _as_jacobi(bracket)
    pairs = list(itertools.combinations(functions, 2))
    s = sweep(lambda x: max((abs(float(jacobi_bracket(J, f, g, x))) for f, g in pairs), default=0.0), samples)
    return judge(name, s, tol)


def bihamiltonian_check(X, L, h, L1, h1, samples, tol=1e-9) -> CheckResult:
    """``X = #_L(dh) = #_L1(dh1)`` componentwise."""

    def one(Lb, f):
        def residual(x):
            _, df = value_grad(f, x)
            Y = mat_vec(Lb.dense(x), df)
            return _maxabs(np.asarray(X.dense(x), dtype=float) - np.asarray(Y, dtype=float))

        return residual

    first = judge("X_equals_sharp_dh", sweep(one(_bivector(L), h), samples), tol)
    second = judge("X_equals_sharp1_dh1", sweep(one(_bivector(L1), h1), samples), tol)
    return combine("bihamiltonian", [first, second])


def kolmogorov_check(H, chart, action_coords, samples, det_tol=1e-9, min_fraction=0.9) -> CheckResult:
    """Determinant of the Hessian of ``H`` in the action block."""
    idx = [chart.index(c) for c in action_coords]
    dets = Sweep()
    for x in samples:
        try:
            Hs = ad.hessian(H, x)
        except SKIPPABLE as err:
            dets.skipped[type(err).__name__] = dets.skipped.get(type(err).__name__, 0) + 1
            continue
        dets.residuals.append(float(np.linalg.det(Hs[np.ix_(idx, idx)])))
        dets.points.append(x)
    if not dets.residuals:
        return CheckResult("kolmogorov", SKIPPED, samples=0, skipped=dets.n_skipped, message="no admissible samples")
    d = np.array(dets.residuals)
    frac = float(np.mean(np.abs(d) > det_tol))
    status = PASS if frac >= min_fraction else FAIL
    details = {"det_min_abs": float(np.min(np.abs(d))), "det_max_abs": float(np.max(np.abs(d))), "nondegenerate_fraction": frac}
    if len(d) <= 8:
        details["det_samples"] = [float(v) for v in d]
    msg = "" if status == PASS else "Hessian in the action variables is degenerate: (ND) fails"
    return CheckResult("kolmogorov", status, None, None, det_tol, len(d), dets.n_skipped, None, details, msg)


def fernandes_separability_residual(H, eigen_fields, samples, h=1e-4, cond_limit=1e8) -> CheckResult:
    """Mixed partials of ``H`` re-expressed in the eigenvalue variables.

    Diagnostic only: writes ``dH = sum G_i dl_i`` and ``dG_i = sum G_ij dl_j``
    by least squares and reports ``max_{i != j} |G_ij|``.
    """
    m = len(eigen_fields)

    def coefficients(x):
        Jl = np.array([np.asarray(f.gradient(x), dtype=float) for f in eigen_fields])
        s = np.linalg.svd(Jl, compute_uv=False)
        if s[-1] <= s[0] / cond_limit:
            raise IllConditionedJacobian("eigenvalue differentials are (nearly) dependent")
        _, dH = value_grad(H, x)
        G, *_ = np.linalg.lstsq(Jl.T, np.asarray(dH, dtype=float), rcond=None)
        return G, Jl

    def residual(x):
        x = np.asarray(x, dtype=float)
        G0, Jl = coefficients(x)
        dG = np.empty((m, len(x)))
        for j in range(len(x)):
            step = h * max(1.0, abs(x[j]))
            xp, xm = x.copy(), x.copy()
            xp[j] += step
            xm[j] -= step
            dG[:, j] = (coefficients(xp)[0] - coefficients(xm)[0]) / (xp[j] - xm[j])
        Gij, *_ = np.linalg.lstsq(Jl.T, dG.T, rcond=None)
        off = [abs(Gij[i, j]) for i in range(m) for j in range(m) if i != j]
        return max(off, default=0.0)

    s = sweep(residual, samples)
    r = judge("fernandes_separability", s, np.inf)
    r.details["diagnostic_only"] = True
    return r


# -- no-go diagnostic --------------------------------------------------------------


@dataclass
class NoGoVerdict:
    degree_lambda1: int | None
    degree_lambda: int | None
    degree_N: int | None
    eigen_degrees: list
    eigen_delta_max: float | None
    euler_residual: float | None
    hessian_dets: list
    independent_counts: list
    n: int
    clauses: dict
    verdict: str
    status: str
    residual_profiles: dict = field(default_factory=dict)

    def to_result(self, name="nogo") -> CheckResult:
        counts = self.independent_counts
        details = {
            "degree_Lambda1": self.degree_lambda1,
            "degree_Lambda": self.degree_lambda,
            "degree_N": self.degree_N,
            "eigen_degrees": self.eigen_degrees,
            "eigen_delta_max": self.eigen_delta_max,
            "euler_residual": self.euler_residual,
            "hessian_dets": self.hessian_dets,
            "independent_real_eigenvalues_min": min(counts) if counts else None,
            "independent_real_eigenvalues_max": max(counts) if counts else None,
            "n": self.n,
            "clauses": self.clauses,
            "verdict": self.verdict,
        }
        if self.residual_profiles:
            details["residual_profiles"] = self.residual_profiles
        return CheckResult(name, self.status, self.euler_residual, None, None, len(counts), 0, None, details, self.verdict)


def _degree_or_none(T, Delta, samples, tol, profiles, key):
    try:
        return homogeneity_degree(T, Delta, samples, tol=tol)
    except NotHomogeneous as err:
        profiles[key] = {str(k): v for k, v in err.residuals.items()}
        return None


def nogo_diagnostic(L, L1, Delta, H, samples, action_coords=None, tol=1e-8, fd_tol=1e-6, rank_rel=1e-6) -> NoGoVerdict:
    """Record the quantities in the no-go statement and flag which clause fails.

    Clause 1: ``L1`` is (-1)-homogeneous.  Clause 2: ``N`` has ``n`` functionally
    independent real eigenvalues.  Both holding at once contradicts the theorem
    and marks the run inconsistent; so does a (-1)-homogeneous ``L1`` whose
    eigenvalue fields fail to be 0-homogeneous.
    """
    L, L1 = _bivector(L), _bivector(L1)
    chart = L.chart
    n = chart.dim // 2
    profiles = {}
    deg_l1 = _degree_or_none(L1, Delta, samples, tol, profiles, "Lambda1")
    deg_l = _degree_or_none(L, Delta, samples, tol, profiles, "Lambda")
    deg_n = _degree_or_none(recursion_field(L, L1), Delta, samples, tol, profiles, "N")

    counts, eig_pts = [], []
    eigen = None
    for x in samples:
        try:
            ef = EigenvalueFields(L, L1, x)
            if ef.count == 0:
                counts.append(0)
                continue
            counts.append(numerical_rank(ef.gradients(x), rank_rel))
        except (TrackingAmbiguity, *SKIPPABLE):
            continue
        if eigen is None or ef.count > eigen.count:
            eigen = ef
        eig_pts.append(x)

    eigen_degrees, delta_max = [], None
    if eigen is not None:
        good = []
        for x in eig_pts:
            try:
                if len(eigen.clusters(x).values) == eigen.count:
                    good.append(x)
            except SKIPPABLE:
                continue
        deltas = []
        for k, f in enumerate(eigen.fields()):
            try:
                eigen_degrees.append(homogeneity_degree(f, Delta, good, tol=fd_tol))
            except NotHomogeneous as err:
                eigen_degrees.append(None)
                profiles[f"lambda_{k + 1}"] = {str(kk): v for kk, v in err.residuals.items()}
            deltas += [abs(float(lie_derivative(Delta, f, x))) for x in good]
        delta_max = max(deltas) if deltas else None

    euler = None
    if H is not None:
        vals = []
        for x in samples:
            try:
                vals.append(abs(float(lie_derivative(Delta, H, x)) - float(H(x))))
            except SKIPPABLE:
                continue
        euler = max(vals) if vals else None

    dets = []
    if H is not None and action_coords:
        idx = [chart.index(c) for c in action_coords]
        for x in samples[:8]:
            try:
                dets.append(float(np.linalg.det(ad.hessian(H, x)[np.ix_(idx, idx)])))
            except SKIPPABLE:
                continue

    clause1 = deg_l1 == -1
    clause2 = bool(counts) and min(counts) >= n
    clauses = {"Lambda1_degree_minus_one": clause1, "n_independent_real_eigenvalues": clause2}
    status = PASS
    if clause1 and clause2:
        status = INCONSISTENT
        verdict = "both clauses hold: contradicts the no-go theorem (invalid input or a bug)"
    elif clause1 and delta_max is not None and delta_max >= fd_tol:
        status = INCONSISTENT
        verdict = "Lambda1 is (-1)-homogeneous but the eigenvalue fields are not 0-homogeneous"
    elif clause1:
        verdict = "clause 2 fails (fewer than n independent real eigenvalues) => no contradiction"
    elif clause2:
        verdict = "clause 1 fails (Lambda1 not (-1)-homogeneous) => no contradiction"
    else:
        verdict = "clauses 1 and 2 both fail => no contradiction"
    if deg_l1 is not None and deg_l is not None and deg_n is not None and deg_n != deg_l1 - deg_l:
        status = INCONSISTENT
        verdict += f"; degree of N ({deg_n}) differs from deg L1 - deg L ({deg_l1 - deg_l})"
    return NoGoVerdict(deg_l1, deg_l, deg_n, eigen_degrees, delta_max, euler, dets, counts, n, clauses, verdict, status, profiles)
