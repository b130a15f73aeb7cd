import numpy as np
import pytest
from hypothesis import settings

from contactforge.structures import ContactForm, ExactSymplectic, JacobiStructure, induced_jacobi
from contactforge.tensors import Chart, bivector_field, one_form, vector_field

settings.register_profile("contactforge", max_examples=60, deadline=None, derandomize=True)
settings.load_profile("contactforge")


@pytest.fixture
def tm():
    # T*R^2 restricted to x2, p1, p2 > 0
    return Chart("TM", ("x1", "x2", "p1", "p2"), ("x2", "p1", "p2"))


@pytest.fixture
def canonical(tm):
    return bivector_field(tm, {"x1,p1": "1", "x2,p2": "1"}, "Lambda")


@pytest.fixture
def lambda1(tm):
    return bivector_field(tm, {"x1,p1": "p1", "x2,p2": "p2*x2"}, "Lambda1")


@pytest.fixture
def r3():
    return Chart("M", ("q", "p", "z"))


@pytest.fixture
def eta(r3):
    return ContactForm(one_form(r3, {"z": "1", "q": "-p"}), "eta")


@pytest.fixture
def induced_expr(r3):
    """The Jacobi structure of dz - p dq written out by hand."""
    return JacobiStructure(bivector_field(r3, {"q,p": "-1", "p,z": "p"}), vector_field(r3, {"z": "-1"}), "J0")


@pytest.fixture
def theta_tm(tm):
    return ExactSymplectic(one_form(tm, {"x1": "p1", "x2": "p2"}), "theta")


@pytest.fixture
def pts_tm(tm):
    from contactforge.sampling import sample_points

    return sample_points(tm, 24, 11)


@pytest.fixture
def pts_r3(r3):
    from contactforge.sampling import sample_points

    return sample_points(r3, 24, 5)


def close(a, b, tol=1e-12):
    return float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))) <= tol
