"""Acceptance criteria 1-9, one printed PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines inline;
they are also printed when output is captured.
"""

import itertools
import math
import time

import numpy as np
import pytest

from contactforge import autodiff as ad
from contactforge.bihamiltonian import (
    bihamiltonian_check,
    eigenvalue_clusters,
    involution_check,
    kolmogorov_check,
    recursion_operator,
)
from contactforge.cli import main
from contactforge.expr import diff, parse
from contactforge.flows import dissipation_monitor, integrate
from contactforge.runner import random_polynomials, run
from contactforge.sampling import sample_points
from contactforge.scenario import load_scenario
from contactforge.structures import (
    JacobiStructure,
    contact_bracket,
    contact_hamiltonian_vf,
    homogeneity_degree,
    is_jacobi,
    numerical_rank,
    reeb,
    symplectic_bracket,
    verify_contact_integrable,
)
from contactforge.symplectization import lift_function, project_function, symplectization_consistency
from contactforge.tensors import Chart, bivector_field, vector_field


@pytest.fixture
def line(capsys):
    def emit(n, ok, text):
        with capsys.disabled():
            print(f"\nacceptance {n}: {'PASS' if ok else 'FAIL'}  {text}")

    return emit


# 1 -----------------------------------------------------------------------------


def test_criterion_1_poisson_golden_run(line):
    t0 = time.perf_counter()
    scn = load_scenario("poisson_example")
    tm = scn.chart("TM")
    L, L1, X = scn.tensor("Lambda"), scn.tensor("Lambda1"), scn.tensor("X")
    pts = sample_points(tm, 64, 1)
    eig_res, mult_ok = 0.0, True
    for x in pts:
        x1, x2, p1, p2 = x
        got = eigenvalue_clusters(recursion_operator(L, L1, x)).values
        want = sorted([(p1, 2), (p2 * x2, 2)])
        mult_ok &= [m for _, m in got] == [m for _, m in want]
        if len(got) == len(want):
            eig_res = max(eig_res, max(abs(a - b) for (a, _), (b, _) in zip(got, want)))
        else:
            eig_res = math.inf
    lam = [scn.function("lam.1", tm), scn.function("lam.2", tm)]
    inv = [involution_check(lam, B, pts).residual for B in (L, L1)]
    bh = bihamiltonian_check(X, L, scn.function("H", tm), L1, scn.function("h1", tm), pts)
    ranks = [numerical_rank(np.array([f.gradient(x) for f in lam])) for x in pts]
    wall = time.perf_counter() - t0
    ok = mult_ok and eig_res < 1e-9 and max(inv) < 1e-6 and bh.residual < 1e-9 and set(ranks) == {2} and wall < 5
    line(
        1,
        ok,
        f"eigen residual {eig_res:.2e}, involution {max(inv):.2e}, bihamiltonian {bh.residual:.2e}, "
        f"ranks {sorted(set(ranks))}, {wall:.2f}s",
    )
    assert ok


# 2 -----------------------------------------------------------------------------


def test_criterion_2_contact_golden_run(line):
    t0 = time.perf_counter()
    scn = load_scenario("contact_example")
    M, U = scn.chart("M"), scn.chart("U")
    eta, eta_bar, link = scn.structure("eta"), scn.structure("eta_bar"), scn.link("sym")
    h, hbar = scn.function("h", M), scn.function("hbar", U)
    pts = sample_points(M, 64, 2)
    reeb_res = max(np.max(np.abs(np.asarray(reeb(eta, x), dtype=float) - [0, 0, 1])) for x in pts)
    xh_res = max(np.max(np.abs(np.asarray(contact_hamiltonian_vf(eta, h, x), dtype=float) - [1, x[1], x[2]])) for x in pts)
    H = lift_function(link, h)
    tpts = sample_points(link.total, 64, 3)
    lift_res = max(abs(H(x) - (x[3] * x[2] - x[3] * x[1])) for x in tpts)
    proj = [project_function(link, scn.function(n, link.total), 1, tpts) for n in ("lam1", "lam2")]
    proj_ok = [str(f.expr) for f in proj] == ["p", "-z"]
    off = [x for x in pts if max(abs(x[1]), abs(x[2])) > 0.05]
    integ = verify_contact_integrable(scn.systems["contact"], off)
    upts = sample_points(U, 64, 4)
    bar_res = max(np.max(np.abs(np.asarray(contact_hamiltonian_vf(eta_bar, hbar, x), dtype=float) - [1, 1, 0])) for x in upts)
    wall = time.perf_counter() - t0
    ok = reeb_res < 1e-10 and xh_res < 1e-10 and lift_res < 1e-12 and proj_ok and integ.passed and bar_res < 1e-9 and wall < 5
    line(
        2,
        ok,
        f"Reeb {reeb_res:.2e}, X_h {xh_res:.2e}, lift {lift_res:.2e}, projections {[str(f.expr) for f in proj]}, "
        f"contact_integrable {integ.status}, eta_bar chart {bar_res:.2e}, {wall:.2f}s",
    )
    assert ok


# 3 -----------------------------------------------------------------------------


def _poly(rng, coords, degree=2):
    monos = [()] + [m for d in range(1, degree + 1) for m in itertools.combinations_with_replacement(coords, d)]
    terms = []
    for m in monos:
        c = int(rng.integers(-3, 4))
        if c:
            terms.append("*".join([f"({c})", *m]))
    return " + ".join(terms) or "0"


def _conformal(chart, L, E, a):
    """``(a L, a E - #_L(da))``, Jacobi whenever ``(L, E)`` is."""

    def lam(i, j):
        if (i, j) in L:
            return L[(i, j)]
        if (j, i) in L:
            return f"-({L[(j, i)]})"
        return None

    Lc = {f"{i},{j}": f"({a})*({v})" for (i, j), v in L.items()}
    Ec = {}
    for i in chart.coords:
        terms = [f"({lam(i, j)})*({diff(parse(a), j)})" for j in chart.coords if lam(i, j) is not None]
        Ec[i] = f"({a})*({E.get(i, '0')}) - ({' + '.join(terms) or '0'})"
    return bivector_field(chart, Lc), vector_field(chart, Ec)


def test_criterion_3_lichnerowicz_consistency(line):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([3, 2024])))
    c3 = Chart("C3", ("q", "p", "z"))
    c4 = Chart("C4", ("x1", "x2", "x3", "x4"))
    bases = {
        c3: ({("q", "p"): "-1", ("p", "z"): "p"}, {"z": "-1"}),
        c4: ({("x1", "x2"): "1", ("x3", "x4"): "1"}, {}),
    }
    verdicts = {"pass": 0, "fail": 0}
    disagreements, known_wrong = 0, 0
    for k in range(100):
        chart = c3 if k % 2 == 0 else c4
        pts = sample_points(chart, 6, 100 + k)
        known = k % 4 < 2
        if known:
            # conformal change of a Jacobi structure: Jacobi by construction
            L, E = _conformal(chart, *bases[chart], _poly(rng, chart.coords, 1))
        else:
            L = bivector_field(chart, {f"{i},{j}": _poly(rng, chart.coords) for i, j in itertools.combinations(chart.coords, 2)})
            E = vector_field(chart, {i: _poly(rng, chart.coords, 1) for i in chart.coords})
        r = is_jacobi(JacobiStructure(L, E), pts)
        sn = r.details["lichnerowicz_equations"]["status"]
        jac = r.details["jacobiator"]["status"]
        disagreements += sn != jac or r.status == "inconsistent"
        verdicts[sn] = verdicts.get(sn, 0) + 1
        known_wrong += known and sn != "pass"
    ok = disagreements == 0 and known_wrong == 0
    line(3, ok, f"100 instances, disagreements {disagreements}, verdicts {verdicts}, known-Jacobi misjudged {known_wrong}")
    assert ok


# 4 -----------------------------------------------------------------------------


def test_criterion_4_symplectization_correspondence(line):
    scn = load_scenario("contact_example")
    link, eta = scn.link("sym"), scn.structure("eta")
    pts = sample_points(link.total, 50, 4)
    fs = random_polynomials(link.base_chart, 20, 4)
    pairs = list(zip(fs[::2], fs[1::2]))
    worst = 0.0
    for f, g in pairs:
        F, G = lift_function(link, f), lift_function(link, g)
        for x in pts:
            up = float(symplectic_bracket(link.structure, F, G, x))
            down = float(contact_bracket(eta, f, g, x[:3]))
            worst = max(worst, abs(up + x[3] * down))
    cons = symplectization_consistency(link, pts, pairs)
    ok = worst < 1e-9 and cons.residual < 1e-9
    line(4, ok, f"|{{F,G}} + r{{f,g}}| max {worst:.2e}, omega vs Poissonization {cons.residual:.2e} (50 samples x 10 pairs)")
    assert ok


# 5 -----------------------------------------------------------------------------


def test_criterion_5_nogo_evidence(line):
    scn = load_scenario("contact_example")
    report, code, _ = run(scn, "nogo-report", seed=5)
    rows = [t for t in report["tasks"] if t["check"] == "nogo"]
    ok = code != 2 and len(rows) == 2
    parts = []
    for t in rows:
        d = t["details"]
        n_contact = d["n"] - 1
        good = t["status"] == "pass"
        if d["degree_Lambda1"] == -1:
            good &= d["eigen_delta_max"] is not None and d["eigen_delta_max"] < 1e-6
        good &= d["independent_real_eigenvalues_max"] < n_contact + 1
        ok &= good
        parts.append(
            f"{t['name']}: deg Lambda1 {d['degree_Lambda1']}, |Delta(lambda)| {d['eigen_delta_max']:.1e}, "
            f"count {d['independent_real_eigenvalues_max']} < {n_contact + 1}"
        )
    line(5, ok, f"exit {code}; " + "; ".join(parts))
    assert ok


# 6 -----------------------------------------------------------------------------


def test_criterion_6_homogeneity_table(line):
    pscn, cscn = load_scenario("poisson_example"), load_scenario("contact_example")
    tm = pscn.chart("TM")
    pts = sample_points(tm, 16, 6)
    Delta = pscn.tensor("Delta")
    table = [
        ("theta", pscn.tensor("theta"), 1),
        ("omega", pscn.tensor("T.omega"), 1),
        ("Lambda1", pscn.tensor("Lambda1"), 0),
        ("N", pscn.tensor("N"), 1),
        ("lambda_1", pscn.function("lam.1", tm), 1),
        ("lambda_2", pscn.function("lam.2", tm), 1),
        ("phi1", pscn.function("phi1", tm), 0),
        ("phi2", pscn.function("phi2", tm), 0),
    ]
    got = {name: homogeneity_degree(T, Delta, pts) for name, T, _ in table}
    link = cscn.link("sym")
    tpts = sample_points(link.total, 16, 7)
    got["Lambda_poissonized"] = homogeneity_degree(cscn.tensor("P0"), cscn.tensor("sym.Delta"), tpts)
    want = {name: k for name, _, k in table}
    want["Lambda_poissonized"] = -1
    ok = got == want
    cells = ", ".join(f"{k}:{got[k]}" for k in want)
    line(6, ok, f"{cells}, Delta-self: skipped (trivially 0)")
    assert ok, (got, want)


# 7 -----------------------------------------------------------------------------


def test_criterion_7_flow_laws(line):
    scn = load_scenario("contact_example")
    M, eta = scn.chart("M"), scn.structure("eta")
    h = scn.function("h", M)
    X = lambda x: np.asarray(contact_hamiltonian_vf(eta, h, x, verify=False), dtype=float)
    t0 = time.perf_counter()
    traj = integrate(X, (0, 1, 1), 1.0, 1e-3, M)
    target = np.array([1, math.e, math.e])
    end_err = float(np.max(np.abs(traj.end - target)))
    diss = [dissipation_monitor(traj, eta, h, M.scalar(f)) for f in ("p", "-z")]
    errs = [np.linalg.norm(integrate(X, (0, 1, 1), 1.0, dt, M).end - target) for dt in (0.1, 0.05)]
    ratio = errs[0] / errs[1]
    wall = time.perf_counter() - t0
    ok = end_err < 1e-8 and all(d.passed and d.residual < 1e-8 for d in diss) and 12 <= ratio <= 20 and wall < 2
    line(
        7,
        ok,
        f"endpoint {end_err:.2e}, dissipation p {diss[0].residual:.2e} / -z {diss[1].residual:.2e}, "
        f"RK4 ratio {ratio:.2f}, {wall:.2f}s",
    )
    assert ok


# 8 -----------------------------------------------------------------------------


def _homogeneous_one(rng):
    """Sum of three 1-homogeneous terms in x, y, z."""
    v = ["x", "y", "z"]
    out = []
    for _ in range(3):
        c = round(float(rng.uniform(0.5, 2)), 3) * (1 if rng.random() < 0.7 else -1)
        a, b = rng.choice(3, 2, replace=False)
        kind = int(rng.integers(5))
        s = int(rng.integers(1, 4))
        if kind == 0:
            term = v[a]
        elif kind == 1:
            term = f"{v[a]}^({s}/{s + 1})*{v[b]}^(1/{s + 1})"
        elif kind == 2:
            term = f"{v[a]}^{s + 1}/{v[b]}^{s}"
        elif kind == 3:
            term = f"sqrt({v[a]}*{v[b]})"
        else:
            term = f"({v[a]}^3 + {v[b]}^3)^(1/3)"
        out.append(f"({c})*{term}")
    return " + ".join(out)


def test_criterion_8_euler_hessian(line):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([8, 2024])))
    chart = Chart("pos", ("x", "y", "z"), ("x", "y", "z"), {c: (0.1, 2.0) for c in "xyz"})
    pts = sample_points(chart, 10, 8)
    worst = 0.0
    for _ in range(50):
        f = chart.scalar(_homogeneous_one(rng))
        for x in pts:
            worst = max(worst, float(np.linalg.norm(ad.hessian(f, x) @ np.asarray(x))))
    scn = load_scenario("poisson_example")
    aa = scn.chart("AA")
    apts = sample_points(aa, 16, 9)
    lin = kolmogorov_check(scn.function("H_linear", aa), aa, ["s1", "s2"], apts)
    quad = kolmogorov_check(scn.function("H_quadratic", aa), aa, ["s1", "s2"], apts)
    ok = worst < 1e-8 and lin.status == "fail" and lin.details["det_max_abs"] == 0 and quad.passed
    line(
        8,
        ok,
        f"max |Hess x| {worst:.2e} over 50 functions; kolmogorov linear {lin.status} (det {lin.details['det_max_abs']:.1e}), "
        f"quadratic {quad.status}",
    )
    assert ok


# 9 -----------------------------------------------------------------------------


@pytest.mark.parametrize("scenario", ["contact_example", "poisson_example"])
def test_criterion_9_determinism(scenario, line, tmp_path, capsys):
    blobs = []
    for k in range(2):
        path = tmp_path / f"run{k}.json"
        main(["all", scenario, "--seed", "7", "--json", str(path)])
        blobs.append(path.read_bytes())
    capsys.readouterr()
    ok = blobs[0] == blobs[1]
    line(9, ok, f"{scenario}: all --seed 7 --json twice, {len(blobs[0])} bytes, identical {ok}")
    assert ok
