import json

import pytest

from contactforge import runner
from contactforge.cli import main
from contactforge.errors import AntisymmetryViolation, IndexOutOfRange, InternalInconsistency, ScenarioError, UnknownReference
from contactforge.scenario import BUILTINS, load_scenario, loads_scenario

SMALL = """
name = "small"
samples = 12

[charts.M]
coords = ["q", "p", "z"]

[tensors.eta_form]
kind = "one-form"
components = ["z = 1", "q = -p"]

[tensors.L_bad]
kind = "bivector"
components = ["q,p = 1"]

[tensors.E_bad]
kind = "vector"
components = ["z = 1"]

[structures.eta]
type = "contact"
form = "eta_form"

[structures.bad]
type = "jacobi"
Lambda = "L_bad"
E = "E_bad"
deferred = true

[[tasks]]
name = "good"
check = "jacobi"
structure = "eta.jacobi"

[[tasks]]
name = "bad"
check = "jacobi"
structure = "bad"

[[tasks]]
name = "bad_expected"
check = "jacobi"
structure = "bad"
expect = "fail"

[[tasks]]
name = "contact"
check = "contact_form"
structure = "eta"
"""


@pytest.fixture
def small_path(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL)
    return str(p)


def only_good(tmp_path):
    p = tmp_path / "good.toml"
    p.write_text(SMALL.split("[[tasks]]\nname = \"bad\"")[0] + '[[tasks]]\nname = "contact"\ncheck = "contact_form"\nstructure = "eta"\n')
    return str(p)


@pytest.mark.parametrize("name", BUILTINS)
def test_builtins_load(name):
    scn = load_scenario(name)
    assert scn.tasks and all(t.command in runner.COMMANDS for t in scn.tasks)


def test_repeated_index_rejected():
    text = SMALL.replace('components = ["q,p = 1"]', 'components = ["L_bad[p,p] = 1"]')
    with pytest.raises(AntisymmetryViolation):
        loads_scenario(text)


def test_wrong_number_of_indices():
    with pytest.raises(IndexOutOfRange):
        loads_scenario(SMALL.replace('components = ["q,p = 1"]', 'components = ["q = 1"]'))


def test_unknown_reference():
    with pytest.raises(UnknownReference) as info:
        loads_scenario(SMALL.replace('structure = "eta.jacobi"', 'structure = "nope"'))
    assert "nope" in str(info.value)


def test_unknown_name_in_expression():
    with pytest.raises(UnknownReference):
        loads_scenario(SMALL.replace('"q = -p"', '"q = -w"'))


def test_unknown_check():
    with pytest.raises(ScenarioError):
        loads_scenario(SMALL.replace('check = "contact_form"', 'check = "bogus"'))


def test_nondeferred_bad_structure_fails_at_load():
    with pytest.raises(ScenarioError):
        loads_scenario(SMALL.replace("deferred = true\n", ""))


def test_statuses_and_expectation(small_path):
    report, code, _ = runner.run(load_scenario(small_path), "all", seed=3)
    status = {t["name"]: t["status"] for t in report["tasks"]}
    assert status == {"good": "pass", "bad": "fail", "bad_expected": "pass", "contact": "pass"}
    assert code == 1
    flipped = next(t for t in report["tasks"] if t["name"] == "bad_expected")
    assert flipped["details"]["observed_outcome"] == "fail"


def test_every_task_listed_once(small_path):
    report, _, _ = runner.run(load_scenario(small_path), "flow")
    assert [t["index"] for t in report["tasks"]] == [0, 1, 2, 3]
    assert all(t["status"] == "skipped" for t in report["tasks"])


def test_exit_codes(small_path, tmp_path, capsys):
    assert main(["check-structure", only_good(tmp_path)]) == 0
    assert main(["check-structure", small_path]) == 1
    assert main(["check-structure", str(tmp_path / "missing.toml")]) == 3
    assert main(["check-structure", small_path, "--tol", "nonsense=1"]) == 3
    assert main(["check-structure", small_path, "--samples", "0"]) == 3
    with pytest.raises(SystemExit) as info:
        main(["no-such-command", small_path])
    assert info.value.code == 3
    capsys.readouterr()


def test_inconsistency_exit_code(small_path, monkeypatch):
    scn = load_scenario(small_path)

    def boom(ctx):
        raise InternalInconsistency("two routes disagree")

    scn.tasks[0].run = boom
    report, code, _ = runner.run(scn, "all")
    assert code == 2 and report["tasks"][0]["status"] == "inconsistent"
    assert report["summary"]["status"] == "inconsistent"


def test_json_is_byte_identical(small_path, tmp_path, monkeypatch, capsys):
    outs = []
    for threads in ("1", "1", "4"):
        monkeypatch.setenv("CONTACTFORGE_THREADS", threads)
        path = tmp_path / f"r{len(outs)}.json"
        main(["all", small_path, "--seed", "7", "--json", str(path)])
        outs.append(path.read_bytes())
    assert outs[0] == outs[1] == outs[2]
    assert b"wall" not in outs[0]
    capsys.readouterr()


def test_seed_changes_samples(small_path):
    scn = load_scenario(small_path)
    a, _, _ = runner.run(scn, "all", seed=1)
    b, _, _ = runner.run(scn, "all", seed=2)
    assert a["tasks"][1]["worst_point"] != b["tasks"][1]["worst_point"]


def test_json_to_stdout(small_path, capsys):
    main(["check-structure", small_path, "--json", "-"])
    report = json.loads(capsys.readouterr().out)
    assert report["schema"] == "contactforge-report/1"
    assert report["summary"]["counts"] == {"pass": 3, "fail": 1, "skipped": 0, "inconsistent": 0}


def test_text_output(small_path, capsys):
    main(["check-structure", small_path])
    out = capsys.readouterr().out
    assert "[        PASS] good (jacobi)" in out
    assert "summary: fail" in out and "wall=" in out


def test_tolerance_override(small_path, capsys):
    main(["check-structure", small_path, "--tol", "jacobi=1e6", "--json", "-"])
    report = json.loads(capsys.readouterr().out)
    bad = next(t for t in report["tasks"] if t["name"] == "bad")
    assert bad["status"] == "pass" and bad["tolerance"] == 1e6
    assert report["tolerances"]["jacobi"] == 1e6


def test_samples_override(small_path, capsys):
    main(["check-structure", small_path, "--samples", "5", "--json", "-"])
    report = json.loads(capsys.readouterr().out)
    assert report["tasks"][0]["samples"] == 5


def test_csv_written(tmp_path, capsys):
    csv = tmp_path / "traj.csv"
    code = main(["flow", "contact_example", "--csv", str(csv)])
    assert code == 0
    assert csv.read_text().startswith("t,q,p,z\n")
    capsys.readouterr()
