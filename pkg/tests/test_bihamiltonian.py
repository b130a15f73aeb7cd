import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from contactforge import autodiff as ad
from contactforge.bihamiltonian import (
    EigenvalueFields,
    bihamiltonian_check,
    eigenvalue_clusters,
    fernandes_separability_residual,
    involution_check,
    jacobi_compatibility,
    kolmogorov_check,
    nogo_diagnostic,
    poisson_compatibility,
    recursion_operator,
)
from contactforge.errors import SingularSharp, TrackingAmbiguity
from contactforge.sampling import sample_points
from contactforge.structures import JacobiStructure, induced_jacobi
from contactforge.tensors import Chart, bivector_field, vector_field

from conftest import close

BASE = (0.5, 2.0, 0.7, 1.5)


def test_poisson_compatibility_examples(tm, canonical, lambda1, pts_tm):
    assert poisson_compatibility(canonical, lambda1, pts_tm[:8]).status == "pass"
    assert poisson_compatibility(lambda1, lambda1, pts_tm[:8]).status == "pass"
    broken = bivector_field(tm, {"x1,x2": "x1"})
    assert poisson_compatibility(canonical, broken, pts_tm[:8]).status == "fail"


def test_jacobi_compatibility_examples(r3, eta, induced_expr, pts_r3):
    J = induced_jacobi(eta)
    assert jacobi_compatibility(J, J, pts_r3[:6]).status == "pass"
    shift = JacobiStructure(bivector_field(r3, {}), vector_field(r3, {"z": "1"}))
    r = jacobi_compatibility(induced_expr, shift, pts_r3[:6])
    # both routes ran and agreed; disagreement would be reported as inconsistent
    assert r.status == "fail"
    perturbed = JacobiStructure(bivector_field(r3, {"q,p": "-p", "p,z": "p^2"}), vector_field(r3, {"q": "1"}))
    assert jacobi_compatibility(induced_expr, perturbed, pts_r3[:6]).status == "pass"


def test_recursion_operator_examples(canonical, lambda1, tm):
    N = recursion_operator(canonical, lambda1, BASE).matrix
    assert close(N, np.diag([0.7, 3.0, 0.7, 3.0]), 1e-14)
    assert close(recursion_operator(lambda1, lambda1, BASE).matrix, np.eye(4), 1e-14)
    twice = bivector_field(tm, {"x1,p1": "2*p1", "x2,p2": "2*p2*x2"})
    assert close(recursion_operator(lambda1, twice, BASE).matrix, 2 * np.eye(4), 1e-14)
    with pytest.raises(SingularSharp):
        recursion_operator(bivector_field(tm, {"x1,p1": "1"}), lambda1, BASE)


def test_eigenvalue_clusters_examples(canonical, lambda1):
    c = eigenvalue_clusters(np.diag([0.7, 3.0, 0.7, 3.0]))
    assert c.values == [(0.7, 2), (3.0, 2)]
    c = eigenvalue_clusters(recursion_operator(canonical, lambda1, BASE))
    assert [m for _, m in c.values] == [2, 2]
    assert close([v for v, _ in c.values], [0.7, 3.0], 1e-12)
    rot = eigenvalue_clusters(np.array([[0.0, -1.0], [1.0, 0.0]]))
    # conjugate pairs are listed once, by the member with positive imaginary part
    assert rot.values == [] and rot.nonreal == [1j]


def test_eigenvalue_fields(canonical, lambda1):
    ef = EigenvalueFields(canonical, lambda1, BASE)
    assert close(ef.values(BASE), [0.7, 3.0], 1e-12)
    assert close(ef.values((0.0, 1.0, 0.2, 1.0)), [0.2, 1.0], 1e-12)
    lam1 = ef.field(0)
    g = ad.fd_gradient(lambda x: abs(lam1(x)), BASE)
    assert close(g, [0, 0, 1, 0], 1e-6)
    assert close(lam1.gradient(BASE), [0, 0, 1, 0], 1e-6)


def test_tracking_across_crossing_raises(canonical, lambda1):
    ef = EigenvalueFields(canonical, lambda1, BASE)
    path = [(0.5, 2.0, p, 1.5) for p in np.linspace(0.7, 3.5, 29)]
    with pytest.raises(TrackingAmbiguity):
        ef.track(path)
    smooth = [(0.5, 2.0, p, 1.5) for p in np.linspace(0.7, 2.5, 19)]
    assert close(ef.track(smooth)[-1], [2.5, 3.0], 1e-12)


def test_involution_examples(tm, canonical, lambda1, eta, r3, pts_tm, pts_r3):
    ef = EigenvalueFields(canonical, lambda1, BASE)
    fs = ef.fields()
    assert involution_check(fs, canonical, pts_tm[:12]).residual < 1e-6
    assert involution_check(fs, lambda1, pts_tm[:12]).residual < 1e-6
    r = involution_check([r3.scalar("q"), r3.scalar("p")], induced_jacobi(eta), pts_r3[:6])
    assert abs(r.residual - 1) < 1e-12 and r.status == "fail"


def test_bihamiltonian_examples(tm, canonical, lambda1, pts_tm):
    X = vector_field(tm, {"x1": "1", "x2": "x2", "p2": "-p2"})
    H, H1 = tm.scalar("p1 + p2*x2"), tm.scalar("log(p1*p2*x2)")
    assert bihamiltonian_check(X, canonical, H, lambda1, H1, pts_tm).residual < 1e-9
    zero = vector_field(tm, {})
    assert bihamiltonian_check(zero, canonical, tm.scalar("2"), lambda1, tm.scalar("5"), pts_tm).status == "pass"
    r = bihamiltonian_check(X, canonical, H, lambda1, tm.scalar("p1"), pts_tm)
    assert r.status == "fail" and r.worst_point is not None


def test_kolmogorov_examples():
    aa = Chart("AA", ("phi1", "phi2", "s1", "s2"), ("s1", "s2"))
    pts = sample_points(aa, 12, 1)
    lin = kolmogorov_check(aa.scalar("s1 + s2"), aa, ["s1", "s2"], pts)
    assert lin.status == "fail" and lin.details["det_max_abs"] == 0
    quad = kolmogorov_check(aa.scalar("(s1^2 + s2^2)/2"), aa, ["s1", "s2"], pts)
    assert quad.status == "pass" and abs(quad.details["det_min_abs"] - 1) < 1e-12
    mixed = kolmogorov_check(aa.scalar("s1*s2"), aa, ["s1", "s2"], pts)
    assert mixed.status == "pass" and mixed.details["det_min_abs"] == mixed.details["det_max_abs"] == 1


def test_fernandes_examples(tm, canonical, lambda1, pts_tm):
    fs = EigenvalueFields(canonical, lambda1, BASE).fields()
    pts = pts_tm[:4]
    assert fernandes_separability_residual(tm.scalar("p1 + p2*x2"), fs, pts).residual < 1e-5
    assert abs(fernandes_separability_residual(tm.scalar("p1*p2*x2"), fs, pts).residual - 1) < 1e-4
    assert fernandes_separability_residual(tm.scalar("p1^2"), fs, pts).residual < 1e-5


def test_nogo_on_bihamiltonian_example(tm, canonical, lambda1, pts_tm):
    D = vector_field(tm, {"p1": "p1", "p2": "p2"})
    v = nogo_diagnostic(canonical, lambda1, D, tm.scalar("p1 + p2*x2"), pts_tm[:10])
    assert (v.degree_lambda1, v.degree_lambda, v.degree_N) == (0, -1, 1)
    assert v.eigen_degrees == [1, 1]
    assert v.euler_residual < 1e-12
    assert min(v.independent_counts) == 2
    assert v.status == "pass" and v.verdict.startswith("clause 1 fails")


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_recursion_operator_is_linear_in_second_argument(a, b):
    tm = Chart("TM", ("x1", "x2", "p1", "p2"))
    L = bivector_field(tm, {"x1,p1": "1", "x2,p2": "1"})
    L1 = bivector_field(tm, {"x1,p1": "p1", "x2,p2": "p2*x2"})
    L2 = bivector_field(tm, {"x1,x2": "p1*p2", "p1,p2": "x1"})
    comb = bivector_field(tm, {"x1,p1": f"({a!r})*p1", "x2,p2": f"({a!r})*p2*x2", "x1,x2": f"({b!r})*p1*p2", "p1,p2": f"({b!r})*x1"})
    x = (0.3, 1.4, 0.8, -0.6)
    N = lambda Q: recursion_operator(L, Q, x).matrix
    assert close(N(comb), a * N(L1) + b * N(L2), 1e-12 * (1 + abs(a) + abs(b)))
