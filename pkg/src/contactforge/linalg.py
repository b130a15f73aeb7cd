"""Small dense linear algebra over floats or dual numbers.

Float matrices go straight to numpy.  Matrices holding duals are solved by
Gaussian elimination with partial pivoting on primal magnitudes, so that
derivatives propagate through the solve.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Dual, finish, primal, reciprocal
from .errors import SingularMatrix

COND_LIMIT = 1e12


def primal_array(a) -> np.ndarray:
    a = np.asarray(a)
    if a.dtype != object:
        return a.astype(float)
    return np.vectorize(primal, otypes=[float])(a) if a.size else a.astype(float)


def is_generic(a) -> bool:
    a = np.asarray(a)
    return a.dtype == object and any(isinstance(v, Dual) for v in a.flat)


def _checked_inverse(p, error, what):
    """Inverse of a float matrix, rejected when its 1-norm condition number exceeds the limit."""
    if not np.all(np.isfinite(p)):
        raise error(f"{what} has non-finite entries")
    try:
        inv = np.linalg.inv(p)
    except np.linalg.LinAlgError:
        raise error(f"{what} is singular") from None
    c = np.abs(p).sum(axis=0).max() * np.abs(inv).sum(axis=0).max() if p.size else 1.0
    if not np.isfinite(c) or c > COND_LIMIT:
        raise error(f"{what} is numerically singular (cond = {c:.3g})")
    return inv


def check_conditioning(a, error=SingularMatrix, what="matrix"):
    _checked_inverse(primal_array(a), error, what)


def solve(a, b, error=SingularMatrix, what="matrix"):
    """Solve ``a @ x = b`` for a vector or matrix right-hand side."""
    if not is_generic(a) and not is_generic(b):
        inv = _checked_inverse(np.asarray(a, dtype=float), error, what)
        return inv @ np.asarray(b, dtype=float)
    check_conditioning(a, error, what)
    a = np.array(a, dtype=object)
    b = np.array(b, dtype=object)
    vector = b.ndim == 1
    if vector:
        b = b.reshape(-1, 1)
    n = a.shape[0]
    for col in range(n):
        pivot = max(range(col, n), key=lambda r: abs(primal(a[r, col])))
        if pivot != col:
            a[[col, pivot]] = a[[pivot, col]]
            b[[col, pivot]] = b[[pivot, col]]
        inv = reciprocal(a[col, col])
        for r in range(col + 1, n):
            f = a[r, col] * inv
            if primal(f) == 0.0 and not isinstance(f, Dual):
                continue
            a[r, col:] = a[r, col:] - a[col, col:] * f
            b[r] = b[r] - b[col] * f
    x = np.empty(b.shape, dtype=object)
    for r in range(n - 1, -1, -1):
        acc = b[r].copy()
        for c in range(r + 1, n):
            acc = acc - x[c] * a[r, c]
        x[r] = acc * reciprocal(a[r, r])
    if vector:
        x = x.reshape(-1)
    return finish(x)


def inverse(a, error=SingularMatrix, what="matrix"):
    n = np.asarray(a).shape[0]
    return solve(a, np.eye(n), error, what)
