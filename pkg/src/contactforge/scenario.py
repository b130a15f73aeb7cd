"""Scenario files: charts, fields, tensors, structures, systems, derived objects and tasks.

A scenario is TOML.  Every table is documented in ``docs/scenario-format.md``;
the two built-in scenarios in ``contactforge/scenarios`` are the canonical
fixtures.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .bihamiltonian import EigenvalueFields, recursion_field
from .errors import ContactForgeError, ParseError, ScenarioError, UnknownReference
from .expr import parse
from .report import SKIPPABLE
from .sampling import sample_points
from .structures import (
    ContactForm,
    ExactSymplectic,
    HamiltonianSystem,
    JacobiStructure,
    contact_volume,
    induced_jacobi,
    is_jacobi,
)
from .symplectization import lift_function, poissonize, symplectize
from .tensors import (
    Chart,
    FormField,
    MultivectorField,
    ScalarField,
    zero_vector,
)

BUILTINS = ("poisson_example", "contact_example")

DEFAULT_TOLERANCES = {
    "jacobi": 1e-9,
    "bracket": 1e-9,
    "vector": 1e-10,
    "involution": 1e-6,
    "bihamiltonian": 1e-9,
    "eigen": 1e-9,
    "homogeneity": 1e-8,
    "rank_rel": 1e-8,
    "correspondence": 1e-9,
    "flow": 1e-8,
    "dissipation": 1e-8,
    "conservation": 1e-9,
    "kolmogorov_det": 1e-9,
    "min_valid": 0.9,
}

KINDS = {
    "scalar": ("multivector", 0),
    "vector": ("multivector", 1),
    "bivector": ("multivector", 2),
    "one-form": ("form", 1),
    "two-form": ("form", 2),
}


@dataclass
class Task:
    index: int
    name: str
    check: str
    params: dict
    expect: str = "pass"
    command: str = ""
    run: object = None


@dataclass
class Scenario:
    name: str
    description: str
    source: str
    charts: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)
    tensors: dict = field(default_factory=dict)
    structures: dict = field(default_factory=dict)
    systems: dict = field(default_factory=dict)
    links: dict = field(default_factory=dict)
    eigen: dict = field(default_factory=dict)
    tasks: list = field(default_factory=list)
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    samples: int = 64
    default_chart: str | None = None
    notes: list = field(default_factory=list)
    margin: float = 1e-3

    # -- lookups -------------------------------------------------------------------

    def _get(self, table, kind, name, where=""):
        try:
            return table[name]
        except (KeyError, TypeError):
            known = ", ".join(sorted(table)) or "none"
            raise UnknownReference(f"{self.source}: {where or kind} refers to unknown {kind} {name!r} (known: {known})") from None

    def chart(self, name, where=""):
        return self._get(self.charts, "chart", name, where)

    def tensor(self, name, where=""):
        return self._get(self.tensors, "tensor", name, where)

    def structure(self, name, where=""):
        return self._get(self.structures, "structure", name, where)

    def system(self, name, where=""):
        return self._get(self.systems, "system", name, where)

    def link(self, name, where=""):
        return self._get(self.links, "symplectisation", name, where)

    def function(self, ref, chart: Chart, where=""):
        """A named scalar field, or an inline expression over ``chart``."""
        if isinstance(ref, (int, float)):
            return chart.scalar(float(ref))
        if ref in self.fields:
            f = self.fields[ref]
            if f.chart != chart:
                raise ScenarioError(f"{self.source}: {where}: field {ref!r} lives on chart {f.chart.name!r}, not {chart.name!r}")
            return f
        try:
            e = parse(str(ref))
        except ParseError as err:
            raise UnknownReference(f"{self.source}: {where}: {ref!r} is neither a field nor an expression ({err})") from None
        unknown = e.free_variables() - set(chart.coords)
        if unknown:
            raise UnknownReference(f"{self.source}: {where}: unknown name(s) {sorted(unknown)} in {ref!r}")
        return chart.scalar(e, str(ref))

    def bivector(self, ref, where=""):
        if ref in self.structures and isinstance(self.structures[ref], JacobiStructure):
            return self.structures[ref].Lambda
        return self.tensor(ref, where)

    def vector(self, ref, where=""):
        return self.tensor(ref, where)

    def sample(self, chart: Chart, seed, task_index, n=None, where=()):
        if where:
            chart = Chart(chart.name, chart.coords, chart.constraints + tuple(parse(str(w)) for w in where), chart.box)
        ss = np.random.SeedSequence([int(seed), int(task_index)])
        return sample_points(chart, n or self.samples, ss, margin=self.margin)


# -- loading -----------------------------------------------------------------------


def builtin_path(name: str):
    return resources.files("contactforge").joinpath("scenarios", f"{name}.toml")


def load_scenario(path_or_name, validate=True) -> Scenario:
    """Parse and cross-reference a scenario file or a built-in scenario name."""
    name = str(path_or_name)
    if name in BUILTINS:
        text = builtin_path(name).read_text(encoding="utf-8")
        source = f"builtin:{name}"
    else:
        p = Path(name)
        if not p.exists():
            raise ScenarioError(f"scenario {name!r} is neither a file nor a built-in ({', '.join(BUILTINS)})")
        text = p.read_text(encoding="utf-8")
        source = str(p)
    return loads_scenario(text, source, validate)


def loads_scenario(text: str, source="<string>", validate=True) -> Scenario:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ScenarioError(f"{source}: {err}") from None
    return _Builder(data, source).build(validate)


def _kind_of(spec: str, where: str):
    if spec in KINDS:
        return KINDS[spec]
    for prefix in ("form:", "multivector:"):
        if spec.startswith(prefix) and spec[len(prefix):].isdigit():
            return prefix[:-1], int(spec[len(prefix):])
    raise ScenarioError(f"{where}: unknown tensor kind {spec!r}")


def _split_component(entry: str, where: str):
    if "=" not in entry:
        raise ScenarioError(f"{where}: component {entry!r} must read 'i,j = expr'")
    key, expr = entry.split("=", 1)
    key = key.strip()
    if "[" in key:
        key = key[key.index("[") + 1 :].rstrip("]")
    return key, expr.strip()


class _Builder:
    def __init__(self, data, source):
        self.d = data
        self.s = Scenario(str(data.get("name", Path(source).stem)), str(data.get("description", "")), source)

    def where(self, *parts):
        return f"{self.s.source}: " + ".".join(str(p) for p in parts)

    def parse_expr(self, text, where):
        try:
            return parse(str(text))
        except ParseError as err:
            raise ParseError(err.position, f"{where}: {err.message}", err.expected, err.text) from None

    def build(self, validate):
        s, d = self.s, self.d
        s.samples = int(d.get("samples", 64))
        s.margin = float(d.get("sampling", {}).get("margin", 1e-3))
        for key, val in d.get("tolerances", {}).items():
            s.tolerances[key] = float(val)
        self.charts()
        self.fields(late=False)
        self.tensors()
        self.structures(validate)
        self.derived()
        self.fields(late=True)
        self.systems()
        self.tasks()
        return s

    def charts(self):
        charts = self.d.get("charts", {})
        if not charts:
            raise ScenarioError(f"{self.s.source}: a scenario needs at least one [charts.NAME] table")
        for name, spec in charts.items():
            w = self.where("charts", name)
            coords = spec.get("coords")
            if not coords:
                raise ScenarioError(f"{w}: 'coords' is required")
            cons = tuple(self.parse_expr(c, f"{w}.constraints") for c in spec.get("constraints", []))
            box = {k: tuple(float(v) for v in b) for k, b in spec.get("box", {}).items()}
            for k in box:
                if k not in coords:
                    raise UnknownReference(f"{w}.box: {k!r} is not a coordinate")
            chart = Chart(name, tuple(coords), cons, box)
            for c in cons:
                unknown = c.free_variables() - set(coords)
                if unknown:
                    raise UnknownReference(f"{w}.constraints: unknown name(s) {sorted(unknown)}")
            self.s.charts[name] = chart
        self.s.default_chart = self.d.get("chart", next(iter(charts)))
        self.s.chart(self.s.default_chart, "default chart")

    def fields(self, late):
        # fields on charts created by [derived] ops are read after those ops
        for name, spec in self.d.get("fields", {}).items():
            w = self.where("fields", name)
            if late and name in self.s.fields:
                continue
            if isinstance(spec, dict):
                cname = spec.get("chart", self.s.default_chart)
                if not late and cname not in self.s.charts:
                    continue
                chart = self.s.chart(cname, w)
                text = spec.get("expr")
            else:
                chart, text = self.s.chart(self.s.default_chart, w), spec
            e = self.parse_expr(text, w)
            unknown = e.free_variables() - set(chart.coords)
            if unknown:
                raise UnknownReference(f"{w}: unknown name(s) {sorted(unknown)} on chart {chart.name!r}")
            self.s.fields[name] = ScalarField(chart, e, name)

    def tensors(self):
        for name, spec in self.d.get("tensors", {}).items():
            w = self.where("tensors", name)
            chart = self.s.chart(spec.get("chart", self.s.default_chart), w)
            kind, degree = _kind_of(spec.get("kind", ""), w)
            raw = spec.get("components", [])
            if isinstance(raw, dict):
                items = list(raw.items())
            else:
                items = [_split_component(c, w) for c in raw]
            comps = {}
            for key, text in items:
                comps[key] = self.parse_expr(text, f"{w}[{key}]")
            cls = FormField if kind == "form" else MultivectorField
            try:
                self.s.tensors[name] = cls(chart, degree, comps, name)
            except ContactForgeError as err:
                raise type(err)(f"{w}: {err}") from None

    def structures(self, validate):
        s = self.s
        for name, spec in self.d.get("structures", {}).items():
            w = self.where("structures", name)
            typ = spec.get("type")
            if typ == "contact":
                obj = ContactForm(s.tensor(spec.get("form"), w), name)
                s.structures[name] = obj
                J = induced_jacobi(obj, f"{name}.jacobi")
                s.structures[f"{name}.jacobi"] = J
                s.tensors[f"{name}.Lambda"] = J.Lambda
                s.tensors[f"{name}.E"] = J.E
            elif typ == "exact_symplectic":
                obj = ExactSymplectic(s.tensor(spec.get("potential"), w), name)
                self._register_exact(name, obj)
            elif typ in ("jacobi", "poisson"):
                L = s.tensor(spec.get("Lambda"), w)
                E = s.tensor(spec["E"], w) if typ == "jacobi" and "E" in spec else zero_vector(L.chart)
                obj = JacobiStructure(L, E, name)
                s.structures[name] = obj
            else:
                raise ScenarioError(f"{w}: unknown structure type {typ!r}")
            if validate and not spec.get("deferred", False):
                self._validate(name, obj, w)

    def _register_exact(self, name, obj):
        s = self.s
        s.structures[name] = obj
        s.tensors[f"{name}.theta"] = obj.theta
        s.tensors[f"{name}.omega"] = obj.omega_field
        s.tensors[f"{name}.Delta"] = obj.liouville()
        s.tensors[f"{name}.Lambda"] = obj.poisson_bivector()
        s.structures[f"{name}.poisson"] = JacobiStructure.poisson(obj.poisson_bivector(), f"{name}.poisson")

    def _validate(self, name, obj, w):
        pts = self.s.sample(obj.chart, 0, 0, 8)
        if isinstance(obj, JacobiStructure):
            r = is_jacobi(obj, pts, tol=self.s.tolerances["jacobi"])
            if r.status != "pass":
                raise ScenarioError(
                    f"{w}: not a Jacobi structure at load (residual {r.residual}); set deferred = true to load it anyway"
                )
        elif isinstance(obj, ContactForm):
            vols = []
            for x in pts:
                try:
                    vols.append(abs(contact_volume(obj, x)))
                except SKIPPABLE:
                    continue
            if not vols or min(vols) < 1e-12:
                raise ScenarioError(f"{w}: eta ^ (d eta)^n vanishes at a sample; not a contact form")
        elif isinstance(obj, ExactSymplectic):
            dets = [abs(np.linalg.det(np.asarray(obj.omega(x), dtype=float))) for x in pts]
            if min(dets) < 1e-12:
                raise ScenarioError(f"{w}: omega = -d theta is degenerate at a sample")

    def derived(self):
        s = self.s
        for name, spec in self.d.get("derived", {}).items():
            w = self.where("derived", name)
            op = spec.get("op")
            if op == "symplectize":
                form = s.structure(spec.get("structure"), w)
                if not isinstance(form, ContactForm):
                    raise ScenarioError(f"{w}: symplectize needs a contact structure")
                link = symplectize(form, spec.get("r", "r"), spec.get("sigma"))
                s.notes.extend(link.notes)
                s.links[name] = link
                s.charts[name] = link.total
                self._register_exact(name, link.structure)
                s.tensors[f"{name}.Delta"] = link.liouville
            elif op == "lift":
                link = s.link(spec.get("link"), w)
                f = s.function(spec.get("field"), link.base_chart, w)
                s.fields[name] = ScalarField(link.total, lift_function(link, f).expr, name)
            elif op == "poissonize":
                J = s.structure(spec.get("structure"), w)
                if not isinstance(J, JacobiStructure):
                    raise ScenarioError(f"{w}: poissonize needs a Jacobi or Poisson structure")
                total = s.link(spec["link"], w).total if "link" in spec else None
                P, chart = poissonize(J, total, spec.get("r", "r"))
                P.name = name
                if chart.name not in s.charts:
                    s.charts[chart.name] = chart
                s.tensors[name] = P
                s.structures[name] = JacobiStructure.poisson(P, name)
            elif op == "recursion":
                L = s.bivector(spec.get("Lambda"), w)
                L1 = s.bivector(spec.get("Lambda1"), w)
                s.tensors[name] = recursion_field(L, L1)
            elif op == "eigenvalues":
                L = s.bivector(spec.get("Lambda"), w)
                L1 = s.bivector(spec.get("Lambda1"), w)
                base = [float(v) for v in spec.get("base_point", [])]
                if len(base) != L.chart.dim:
                    raise ScenarioError(f"{w}: base_point needs {L.chart.dim} coordinates")
                try:
                    ef = EigenvalueFields(L, L1, base)
                except SKIPPABLE as err:
                    raise ScenarioError(f"{w}: recursion operator undefined at base_point ({err})") from None
                s.eigen[name] = ef
                for i, f in enumerate(ef.fields()):
                    f.name = f"{name}.{i + 1}"
                    s.fields[f.name] = f
            else:
                raise ScenarioError(f"{w}: unknown derived op {op!r}")

    def systems(self):
        s = self.s
        for name, spec in self.d.get("systems", {}).items():
            w = self.where("systems", name)
            st = s.structure(spec.get("structure"), w)
            chart = st.chart
            H = s.function(spec.get("hamiltonian"), chart, f"{w}.hamiltonian")
            fs = [s.function(f, chart, f"{w}.integrals") for f in spec.get("integrals", [])]
            s.systems[name] = HamiltonianSystem(st, H, fs, name)

    def tasks(self):
        for i, spec in enumerate(self.d.get("tasks", [])):
            w = self.where("tasks", i)
            spec = dict(spec)
            check = spec.pop("check", None)
            if not check:
                raise ScenarioError(f"{w}: 'check' is required")
            name = spec.pop("name", f"{check}#{i}")
            expect = spec.pop("expect", "pass")
            if expect not in ("pass", "fail"):
                raise ScenarioError(f"{w}: expect must be 'pass' or 'fail'")
            self.s.tasks.append(Task(i, name, check, spec, expect))
        from .runner import validate_task

        for t in self.s.tasks:
            validate_task(self.s, t)
