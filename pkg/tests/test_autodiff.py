import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from contactforge import autodiff as ad
from contactforge.errors import DomainError
from contactforge.expr import parse
from contactforge.tensors import Chart


def field(chart, text):
    return chart.scalar(text)


@pytest.fixture
def c4():
    return Chart("TM", ("x1", "x2", "p1", "p2"))


def test_gradient_examples(c4):
    g = ad.gradient(field(c4, "p2*x2"), (0.0, 2.0, 0.0, 1.5))
    assert list(g) == [0.0, 1.5, 0.0, 2.0]
    c = Chart("M", ("q", "p", "z"))
    assert list(ad.gradient(field(c, "p - z"), (3.0, -1.0, 2.0))) == [0.0, 1.0, -1.0]
    assert ad.gradient(field(Chart("X", ("x2",)), "log(x2)"), (2.0,))[0] == 0.5


def test_hessian_examples():
    aa = Chart("AA", ("phi1", "phi2", "s1", "s2"))
    assert np.all(ad.hessian(field(aa, "s1 + s2"), (0.1, 0.2, 0.3, 0.4)) == 0)
    qp = Chart("QP", ("q", "p"))
    assert np.array_equal(ad.hessian(field(qp, "q*p"), (1.3, -0.4)), [[0, 1], [1, 0]])
    assert ad.hessian(field(Chart("P", ("p",)), "p^2"), (3.0,))[0, 0] == 2.0


def test_fd_gradient_examples():
    g = ad.fd_gradient(lambda x: x[0] ** 2, (1.0,), h=1e-4)
    assert abs(g[0] - 2.0) < 1e-7
    assert np.all(np.abs(ad.fd_gradient(lambda x: 4.2, (1.0, 2.0))) < 1e-12)


def test_domain_error_propagates(c4):
    with pytest.raises(DomainError):
        ad.gradient(field(c4, "log(x2)"), (0.0, -1.0, 0.0, 0.0))


def test_jacobian_of_vector_function():
    val, der = ad.jacobian(lambda xs: np.array([xs[0] * xs[1], ad.exp(xs[0])], dtype=object), (0.5, 2.0))
    assert np.allclose(val, [1.0, math.exp(0.5)])
    assert np.allclose(der, [[2.0, 0.5], [math.exp(0.5), 0.0]])


def test_nested_duals_give_exact_second_derivatives():
    j = ad.jet2(lambda xs: ad.sin(xs[0]) * ad.exp(xs[1]), (0.3, -0.2))
    expected = np.array([[-math.sin(0.3) * math.exp(-0.2), math.cos(0.3) * math.exp(-0.2)], [math.cos(0.3) * math.exp(-0.2), math.sin(0.3) * math.exp(-0.2)]])
    assert np.allclose(j.hessian, expected, atol=1e-15)


funcs = st.sampled_from(["x*y + z^2", "exp(x)*sin(y) - z", "log(1 + x^2 + y^2)*cos(z)", "sqrt(2 + x*x)/(3 + y*y) + z^3", "x/(1 + y^2) - z*x*y"])


@given(funcs, st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_ad_matches_finite_differences(text, x, y, z):
    c = Chart("C", ("x", "y", "z"))
    f = c.scalar(text)
    exact = ad.gradient(f, (x, y, z))
    approx = ad.fd_gradient(f, (x, y, z), h=1e-5)
    assert np.max(np.abs(exact - approx)) < 1e-6 * max(1.0, np.max(np.abs(exact)))


@given(funcs, st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_hessian_is_symmetric_and_matches_fd_of_gradient(text, x, y, z):
    c = Chart("C", ("x", "y", "z"))
    f = c.scalar(text)
    H = ad.hessian(f, (x, y, z))
    assert np.allclose(H, H.T, atol=0)
    rows = np.array([ad.fd_gradient(lambda p, i=i: ad.gradient(f, p)[i], (x, y, z)) for i in range(3)])
    assert np.max(np.abs(H - rows)) < 1e-5 * max(1.0, np.max(np.abs(H)))
