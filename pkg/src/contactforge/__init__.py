"""Verification engine for contact, Jacobi, Poisson and bi-Hamiltonian structures."""

from .errors import ContactForgeError
from .expr import parse, evaluate, free_variables
from .tensors import Chart, ScalarField, bivector_field, one_form, vector_field
from .structures import (
    ContactForm,
    ExactSymplectic,
    HamiltonianSystem,
    JacobiStructure,
    induced_jacobi,
    is_jacobi,
    jacobi_bracket,
)

__version__ = "0.1.0"

__all__ = [
    "ContactForgeError",
    "parse",
    "evaluate",
    "free_variables",
    "Chart",
    "ScalarField",
    "bivector_field",
    "one_form",
    "vector_field",
    "ContactForm",
    "ExactSymplectic",
    "HamiltonianSystem",
    "JacobiStructure",
    "induced_jacobi",
    "is_jacobi",
    "jacobi_bracket",
    "__version__",
]
