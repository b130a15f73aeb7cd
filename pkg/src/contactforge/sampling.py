"""Deterministic sampling of chart points inside the domain constraints."""

from __future__ import annotations

import numpy as np

from .errors import RejectionExhausted
from .expr import Add, Call, Const, Div, Mul, Neg, Pow, Sub, Var

DEFAULT_BOX = (-2.0, 2.0)
MARGIN = 1e-3
MAX_ATTEMPTS = 10**6

_NP = {"exp": np.exp, "log": np.log, "sin": np.sin, "cos": np.cos, "sqrt": np.sqrt}


def eval_array(e, env):
    """Vectorized evaluation of an expression; domain errors become nan."""
    if isinstance(e, Const):
        return np.float64(e.value)
    if isinstance(e, Var):
        return env[e.name]
    if isinstance(e, Neg):
        return -eval_array(e.arg, env)
    if isinstance(e, (Add, Sub, Mul, Div)):
        a, b = eval_array(e.left, env), eval_array(e.right, env)
        if isinstance(e, Add):
            return a + b
        if isinstance(e, Sub):
            return a - b
        if isinstance(e, Mul):
            return a * b
        return np.where(b == 0, np.nan, a / np.where(b == 0, 1.0, b))
    if isinstance(e, Pow):
        base = eval_array(e.base, env)
        k = e.exponent
        if k.denominator == 1:
            return np.where((base == 0) & (k < 0), np.nan, base ** float(k))
        return np.where(base > 0, np.abs(base) ** float(k), np.nan)
    if isinstance(e, Call):
        arg = eval_array(e.arg, env)
        if e.func in ("log", "sqrt"):
            return np.where(arg > 0, _NP[e.func](np.where(arg > 0, arg, 1.0)), np.nan)
        return _NP[e.func](arg)
    raise TypeError(f"cannot evaluate {e!r}")


def box_of(chart):
    lo = np.array([chart.box.get(c, DEFAULT_BOX)[0] for c in chart.coords], dtype=float)
    hi = np.array([chart.box.get(c, DEFAULT_BOX)[1] for c in chart.coords], dtype=float)
    return lo, hi


def sample_points(chart, n, seed, margin=MARGIN, max_attempts=MAX_ATTEMPTS):
    """``n`` admissible points, uniform in the chart box, by rejection.

    Uses numpy's PCG64 generator seeded with ``seed``; a point is kept when
    every constraint expression is at least ``margin``.
    """
    if n <= 0:
        raise ValueError("sample count must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    lo, hi = box_of(chart)
    out = []
    attempts = 0
    batch = max(256, 4 * n)
    while len(out) < n and attempts < max_attempts:
        m = min(batch, max_attempts - attempts)
        draws = rng.uniform(lo, hi, size=(m, chart.dim))
        attempts += m
        ok = np.ones(m, dtype=bool)
        env = {c: draws[:, i] for i, c in enumerate(chart.coords)}
        with np.errstate(all="ignore"):
            for c in chart.constraints:
                v = np.broadcast_to(eval_array(c, env), (m,))
                ok &= np.isfinite(v) & (v >= margin)
        out.extend(draws[ok][: n - len(out)])
    if len(out) < n:
        raise RejectionExhausted(
            f"only {len(out)} of {n} admissible points on chart {chart.name!r} after {attempts} draws"
        )
    return [tuple(float(v) for v in p) for p in out]
