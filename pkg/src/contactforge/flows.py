"""Fixed-step RK4 integration with conservation and dissipation monitors."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainExit
from .report import FAIL, PASS, SKIPPABLE, SKIPPED, CheckResult, fmt_float
from .structures import contact_bracket, reeb, symplectic_bracket, value_grad


@dataclass
class Trajectory:
    chart: object
    times: np.ndarray
    states: np.ndarray
    dt: float
    integrator: str = "rk4"
    exit_time: float | None = None

    @property
    def end(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self, target=None) -> str:
        """CSV with a ``t`` column then one column per coordinate, 17 significant digits."""
        names = list(self.chart.coords) if self.chart is not None else [f"x{i}" for i in range(self.states.shape[1])]
        buf = io.StringIO()
        buf.write(",".join(["t"] + names) + "\n")
        for t, x in zip(self.times, self.states):
            buf.write(",".join(fmt_float(float(v)) for v in (t, *x)) + "\n")
        text = buf.getvalue()
        if target is not None:
            with open(target, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def _vector_function(vf):
    if hasattr(vf, "dense"):
        return lambda x: np.asarray(vf.dense(x), dtype=float)
    return lambda x: np.asarray(vf(x), dtype=float)


def integrate(vf, x0, t_end, dt, chart=None) -> Trajectory:
    """Classical fourth-order Runge-Kutta on a uniform grid.

    The step is shrunk slightly if needed so that ``t_end`` is a grid point.
    Leaving the chart domain raises :class:`DomainExit` carrying the partial
    trajectory.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    chart = chart if chart is not None else getattr(vf, "chart", None)
    F = _vector_function(vf)
    steps = max(1, math.ceil(t_end / dt - 1e-9)) if t_end > 0 else 0
    h = t_end / steps if steps else dt
    x = np.asarray(x0, dtype=float)
    times, states = [0.0], [x.copy()]

    def partial(t, why):
        traj = Trajectory(chart, np.array(times), np.array(states), h, exit_time=t)
        return DomainExit(f"trajectory left the domain at t = {t:.17g}: {why}", traj)

    if chart is not None and not chart.admissible(x):
        raise partial(0.0, "initial point violates a constraint")
    for k in range(steps):
        t = k * h
        try:
            k1 = F(x)
            k2 = F(x + 0.5 * h * k1)
            k3 = F(x + 0.5 * h * k2)
            k4 = F(x + h * k3)
        except SKIPPABLE as err:
            raise partial(t, str(err)) from err
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)) or (chart is not None and not chart.admissible(x)):
            raise partial((k + 1) * h, "constraint violated")
        times.append((k + 1) * h)
        states.append(x.copy())
    return Trajectory(chart, np.array(times), np.array(states), h)


def _cumulative_trapezoid(values, dt):
    out = np.zeros(len(values))
    if len(values) > 1:
        out[1:] = np.cumsum(0.5 * dt * (values[1:] + values[:-1]))
    return out


def dissipation_monitor(traj: Trajectory, form, h, f, tol=1e-8, bracket_tol=1e-9, name=None, bracket_points=101) -> CheckResult:
    """``max_t |f(x(t)) - f(x(0)) exp(-int_0^t R(h))|`` for a dissipated ``f``.

    Whether ``{f, h}`` vanishes is decided on at most ``bracket_points``
    evenly spaced states, endpoints included.
    """
    name = name or f"dissipation[{getattr(f, 'name', 'f')}]"
    states = traj.states
    fvals = np.array([float(f(x)) for x in states])
    drift = fvals - fvals[0]
    idx = np.unique(np.linspace(0, len(states) - 1, min(len(states), bracket_points)).round().astype(int))
    bracket = max(abs(float(contact_bracket(form, f, h, states[i]))) for i in idx)
    if bracket >= bracket_tol:
        return CheckResult(
            name,
            SKIPPED,
            None,
            None,
            tol,
            len(states),
            0,
            None,
            {"bracket_with_h": bracket, "drift_max": float(np.max(np.abs(drift))), "drift_end": float(drift[-1])},
            "not dissipated: {f, h} != 0; raw drift shown",
        )
    Rh = np.array([float(np.dot(np.asarray(value_grad(h, x)[1], dtype=float), reeb(form, x))) for x in states])
    integral = _cumulative_trapezoid(Rh, traj.dt)
    resid = np.abs(fvals - fvals[0] * np.exp(-integral))
    i = int(np.argmax(resid))
    status = PASS if resid[i] < tol else FAIL
    return CheckResult(
        name,
        status,
        float(resid[i]),
        float(np.mean(resid)),
        tol,
        len(states),
        0,
        (float(traj.times[i]),),
        {"bracket_with_h": bracket, "integral_R_h_end": float(integral[-1])},
    )


def conservation_monitor(traj: Trajectory, structure, H, F, tol=1e-9, name=None) -> CheckResult:
    """``max_t |F(x(t)) - F(x(0))|``; records ``{F, H}`` along the way when given."""
    name = name or f"conservation[{getattr(F, 'name', 'F')}]"
    vals = np.array([float(F(x)) for x in traj.states])
    drift = np.abs(vals - vals[0])
    details = {}
    if structure is not None and H is not None:
        details["bracket_with_H"] = max(abs(float(symplectic_bracket(structure, H, F, x))) for x in traj.states)
    i = int(np.argmax(drift))
    status = PASS if drift[i] < tol else FAIL
    return CheckResult(name, status, float(drift[i]), float(np.mean(drift)), tol, len(vals), 0, (float(traj.times[i]),), details)
