import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from contactforge.errors import AntisymmetryViolation, ChartMismatch, DegreeOverflow, IndexOutOfRange, UnsupportedDegree
from contactforge.structures import ExactSymplectic
from contactforge.tensors import (
    Chart,
    FormField,
    MultivectorField,
    PointwiseField,
    bivector_field,
    d_field,
    exterior_derivative,
    interior_product,
    lie_derivative,
    one_form,
    schouten_nijenhuis,
    sharp,
    vector_field,
    wedge,
    wedge_dense,
)

from conftest import close

QPZR = Chart("S", ("q", "p", "z", "r"), ("r",))


def test_dr_wedge_E_gives_poissonization_term():
    dr = vector_field(QPZR, {"r": "1"})
    E = vector_field(QPZR, {"z": "-1"})
    B = wedge(dr, E)
    x = (0.1, 0.2, 0.3, 1.4)
    D = B.dense(x)
    assert D[2, 3] == 1.0 and D[3, 2] == -1.0
    assert np.count_nonzero(D) == 2


def test_wedge_of_vector_with_itself_vanishes():
    X = vector_field(QPZR, {"q": "p", "z": "r*q", "r": "1"})
    assert np.all(np.asarray(wedge(X, X).dense((0.3, -1.2, 0.5, 0.8)), dtype=float) == 0)


def test_d_eta():
    c = Chart("M", ("q", "p", "z"))
    eta = one_form(c, {"z": "1", "q": "-p"})
    de = exterior_derivative(eta, (0.4, 1.3, -2.0))
    assert de[0, 1] == 1.0 and de[1, 0] == -1.0
    assert np.count_nonzero(de) == 2


def test_d_theta_of_symplectisation():
    theta = one_form(QPZR, {"z": "r", "q": "-r*p"})
    q, p, z, r = (0.3, -0.7, 1.1, 1.9)
    d = exterior_derivative(theta, (q, p, z, r))
    assert d[3, 2] == 1.0
    assert d[3, 0] == -p
    assert d[1, 0] == -r
    assert close(d, -d.T, 0)


def test_interior_products():
    c = Chart("M", ("q", "p", "z"))
    eta = one_form(c, {"z": "1", "q": "-p"})
    assert interior_product(vector_field(c, {"z": "1"}), eta, (0.2, 0.5, 0.1)) == 1.0
    theta = one_form(QPZR, {"z": "r", "q": "-r*p"})
    S = ExactSymplectic(theta)
    Delta = vector_field(QPZR, {"r": "r"})
    x = (0.3, -0.7, 1.1, 1.9)
    contracted = interior_product(Delta.dense(x), S.omega(x))
    assert close(contracted, -theta.dense(x))


def test_lie_derivative_examples(tm):
    theta = one_form(tm, {"x1": "p1", "x2": "p2"})
    D = vector_field(tm, {"p1": "p1", "p2": "p2"})
    x = (0.2, 1.3, 0.8, 0.6)
    assert close(lie_derivative(D, theta, x), theta.dense(x))
    X = vector_field(tm, {"x1": "1", "x2": "x2", "p2": "-p2"})
    assert close(lie_derivative(X, X, x), np.zeros(4), 0)
    L = bivector_field(QPZR, {"q,p": "-1/r", "p,z": "p/r", "z,r": "1"})
    Dr = vector_field(QPZR, {"r": "r"})
    y = (0.3, -0.7, 1.1, 1.9)
    assert close(lie_derivative(Dr, L, y), -L.dense(y))


def test_schouten_examples(canonical, induced_expr, pts_r3):
    assert close(schouten_nijenhuis(canonical, canonical, (0.1, 0.2, 0.3, 0.4)), np.zeros((4, 4, 4)), 0)
    L, E = induced_expr.Lambda, induced_expr.E
    for x in pts_r3[:5]:
        assert close(schouten_nijenhuis(L, L, x), 2 * wedge_dense(E.dense(x), L.dense(x)), 1e-9)
        assert close(schouten_nijenhuis(E, L, x), np.zeros((3, 3)), 1e-9)


def test_schouten_rejects_trivectors(r3):
    T = MultivectorField(r3, 3, {"q,p,z": "1"})
    with pytest.raises(UnsupportedDegree):
        schouten_nijenhuis(T, T, (0.0, 0.0, 0.0))


def test_sharp_examples(tm, canonical, lambda1):
    x = (0.4, 1.7, 0.9, 1.2)
    _, x2, _, p2 = x
    dH = tm.scalar("p1 + p2*x2").gradient(x)
    dH1 = tm.scalar("log(p1*p2*x2)").gradient(x)
    assert close(sharp(canonical, dH, x), [1, x2, 0, -p2])
    assert close(sharp(lambda1, dH1, x), [1, x2, 0, -p2])
    assert close(sharp(canonical, np.zeros(4), x), np.zeros(4), 0)


def test_component_validation(r3):
    with pytest.raises((IndexOutOfRange, AntisymmetryViolation)):
        bivector_field(r3, {"p,p": "1"})
    with pytest.raises(IndexOutOfRange):
        bivector_field(r3, {"q,w": "1"})
    with pytest.raises(AntisymmetryViolation):
        bivector_field(r3, {"q,p": "1", "p,q": "2"})
    B = bivector_field(r3, {"p,q": "1"})
    assert B.dense((0, 0, 0))[0, 1] == -1.0


def test_chart_and_degree_errors(r3):
    other = Chart("N", ("a", "b", "c"))
    with pytest.raises(ChartMismatch):
        wedge(vector_field(r3, {"q": "1"}), vector_field(other, {"a": "1"}))
    B = bivector_field(r3, {"q,p": "1"})
    with pytest.raises(DegreeOverflow):
        wedge(B, B)


# -- properties ----------------------------------------------------------------

C3 = Chart("C", ("x", "y", "z"))
coef = st.integers(-3, 3)
MONOS = ["1", "x", "y", "z", "x*y", "y*z", "x*z", "x^2", "z^2"]


def poly(cs):
    return " + ".join(f"({c})*{m}" for c, m in zip(cs, MONOS) if c) or "0"


polys = st.lists(coef, min_size=len(MONOS), max_size=len(MONOS)).map(poly)
point = st.tuples(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))


def form(k, comps):
    idx = list(itertools.combinations(C3.coords, k))
    return FormField(C3, k, {",".join(i): c for i, c in zip(idx, comps)})


@given(st.lists(polys, min_size=3, max_size=3), point)
def test_d_squared_vanishes(comps, x):
    alpha = form(1, comps)
    dd = exterior_derivative(d_field(alpha), x)
    assert np.max(np.abs(np.asarray(dd, dtype=float))) < 1e-8


@given(st.lists(polys, min_size=3, max_size=3), st.lists(polys, min_size=3, max_size=3), point)
def test_lie_commutes_with_d(vc, ac, x):
    X = vector_field(C3, dict(zip(C3.coords, vc)))
    alpha = form(1, ac)
    left = lie_derivative(X, d_field(alpha), x)
    L_alpha = PointwiseField(C3, "form", 1, lambda xs: lie_derivative(X, alpha, xs))
    right = exterior_derivative(L_alpha, x)
    assert np.max(np.abs(np.asarray(left, dtype=float) - np.asarray(right, dtype=float))) < 1e-8


@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4), st.lists(st.floats(-2, 2), min_size=4, max_size=4), st.lists(st.floats(-2, 2), min_size=6, max_size=6))
def test_wedge_graded_antisymmetry_and_associativity(a, b, c):
    a, b = np.array(a), np.array(b)
    C = np.zeros((4, 4))
    for (i, j), v in zip(itertools.combinations(range(4), 2), c):
        C[i, j], C[j, i] = v, -v
    assert np.max(np.abs(wedge_dense(a, b) + wedge_dense(b, a))) < 1e-10
    assert np.max(np.abs(wedge_dense(C, a) - wedge_dense(a, C))) < 1e-10
    assert np.max(np.abs(wedge_dense(wedge_dense(a, b), C) - wedge_dense(a, wedge_dense(b, C)))) < 1e-10


@given(st.lists(polys, min_size=3, max_size=3), st.lists(polys, min_size=3, max_size=3), point)
def test_d_graded_leibniz(ac, bc, x):
    alpha, beta = form(1, ac), form(1, bc)
    ab = wedge(alpha, beta)
    left = exterior_derivative(ab, x)
    right = wedge_dense(exterior_derivative(alpha, x), beta.dense(x)) - wedge_dense(alpha.dense(x), exterior_derivative(beta, x))
    assert np.max(np.abs(np.asarray(left, dtype=float) - np.asarray(right, dtype=float))) < 1e-8


@given(polys.filter(lambda s: s != "0"), st.tuples(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5)))
def test_sharp_reproduces_darboux_hamiltonian_field(h, x):
    qp = Chart("QP", ("q", "p"))
    H = qp.scalar(h.replace("x", "q").replace("y", "p").replace("z", "q"))
    L = bivector_field(qp, {"q,p": "1"})
    S = ExactSymplectic(one_form(qp, {"q": "p"}))
    X = np.asarray(sharp(L, H.gradient(x), x), dtype=float)
    # i_X omega = dH with omega = dq ^ dp
    assert np.max(np.abs(np.asarray(S.omega(x), dtype=float).T @ X - H.gradient(x))) < 1e-10
