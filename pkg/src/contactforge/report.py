"""Check results, sample sweeps and deterministic report serialization."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SingularMatrix

PASS, FAIL, SKIPPED, INCONSISTENT = "pass", "fail", "skipped", "inconsistent"

# Errors that mark a sample as lying on a singular locus rather than failing.
SKIPPABLE = (DomainError, SingularMatrix)


@dataclass
class CheckResult:
    name: str
    status: str
    residual: float | None = None
    mean_residual: float | None = None
    tolerance: float | None = None
    samples: int = 0
    skipped: int = 0
    worst_point: tuple | None = None
    details: dict = field(default_factory=dict)
    message: str = ""

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "status": self.status,
            "residual_max": self.residual,
            "residual_mean": self.mean_residual,
            "tolerance": self.tolerance,
            "samples": self.samples,
            "skipped": self.skipped,
            "worst_point": list(self.worst_point) if self.worst_point is not None else None,
            "message": self.message,
            "details": self.details,
        }


@dataclass
class Sweep:
    """Residuals collected over sample points, singular points set aside."""

    residuals: list = field(default_factory=list)
    points: list = field(default_factory=list)
    skipped: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return len(self.residuals)

    @property
    def n_skipped(self) -> int:
        return sum(self.skipped.values())

    def worst(self):
        if not self.residuals:
            return None, None
        i = int(np.argmax(self.residuals))
        return self.residuals[i], tuple(float(v) for v in self.points[i])


def sweep(fn, samples) -> Sweep:
    s = Sweep()
    for x in samples:
        try:
            r = float(fn(x))
        except SKIPPABLE as err:
            name = type(err).__name__
            s.skipped[name] = s.skipped.get(name, 0) + 1
            continue
        s.residuals.append(r)
        s.points.append(x)
    return s


def judge(name, s: Sweep, tol, min_valid=0.9, details=None, message="") -> CheckResult:
    """Pass iff every evaluated residual is below ``tol`` and enough samples ran."""
    total = s.count + s.n_skipped
    worst, point = s.worst()
    details = dict(details or {})
    if s.skipped:
        details["skipped_by_error"] = dict(sorted(s.skipped.items()))
    if s.count == 0:
        return CheckResult(name, SKIPPED, None, None, tol, 0, s.n_skipped, None, details, message or "no admissible samples")
    ok = all(r < tol for r in s.residuals) and all(math.isfinite(r) for r in s.residuals)
    enough = total == 0 or s.count / total >= min_valid
    status = PASS if ok and enough else FAIL
    if ok and not enough:
        message = message or f"only {s.count}/{total} samples evaluable (< {min_valid:.0%})"
    return CheckResult(
        name,
        status,
        worst,
        float(np.mean(s.residuals)),
        tol,
        s.count,
        s.n_skipped,
        point,
        details,
        message,
    )


def combine(name, parts, details=None, message="") -> CheckResult:
    statuses = [p.status for p in parts]
    if INCONSISTENT in statuses:
        status = INCONSISTENT
    elif FAIL in statuses:
        status = FAIL
    elif statuses and all(s == SKIPPED for s in statuses):
        status = SKIPPED
    else:
        status = PASS
    scored = [p for p in parts if p.residual is not None]
    worst = max(scored, key=lambda p: p.residual) if scored else None
    d = {p.name: p.to_dict() for p in parts}
    d.update(details or {})
    return CheckResult(
        name,
        status,
        worst.residual if worst else None,
        None,
        worst.tolerance if worst else None,
        max((p.samples for p in parts), default=0),
        max((p.skipped for p in parts), default=0),
        worst.worst_point if worst else None,
        d,
        message,
    )


# -- serialization -------------------------------------------------------------


def fmt_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def dumps(obj, indent=2, _level=0) -> str:
    """JSON with floats printed at 17 significant digits and sorted keys."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) for v in seq):
            return "[" + ", ".join(dumps(v) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
    return dumps(str(obj))
