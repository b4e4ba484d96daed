import io
import json
import os

import pytest

from core.manifest import load
from core.report import load_report
from main import EXIT_FAIL, EXIT_INPUT, EXIT_PASS, main

XYZ = {
    "schema": "foldcalc/1",
    "charts": {"xyz": {"variables": ["x", "y", "z"], "box": [[-1, 1], [-1, 1], [-1, 1]]}},
    "forms": {
        "alpha": {"chart": "xyz", "degree": 1, "coeffs": {"z": "1", "x": "-y"}},
        "beta": {"chart": "xyz", "degree": 1, "coeffs": {"z": "1"}},
    },
}


def _write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


def _lefschetz(plus, minus):
    return {
        "schema": "foldcalc/1",
        "lefschetz": {
            "page": {"genus": 1},
            "cycles": {"a": [1, 0], "b": [0, 1]},
            "plus": plus,
            "minus": minus,
            "stabilize": [{"attach": "handle", "class": [1, 0, 1], "label": "L"}],
        },
    }


@pytest.fixture
def darboux_manifest(tmp_path):
    path = str(tmp_path / "darboux.json")
    assert main(["model", "darboux", "--n", "2", "--out", path]) == EXIT_PASS
    return path


@pytest.fixture
def dividing_manifest(tmp_path):
    path = str(tmp_path / "dividing.json")
    assert main(["model", "dividing-collar", "--n", "2", "--out", path]) == EXIT_PASS
    return path


def test_model_then_check(darboux_manifest, capsys):
    capsys.readouterr()
    assert main(["check", "folded", darboux_manifest, "--grid", "7"]) == EXIT_PASS
    out = json.loads(capsys.readouterr().out)
    assert out["verdict"] == "pass"


def test_model_pipes_into_check(capsys, monkeypatch):
    assert main(["model", "darboux", "--n", "2"]) == EXIT_PASS
    monkeypatch.setattr("sys.stdin", io.StringIO(capsys.readouterr().out))
    assert main(["check", "folded", "--grid", "6"]) == EXIT_PASS


def test_verify_model(darboux_manifest, tmp_path, capsys):
    report = str(tmp_path / "verify.json")
    capsys.readouterr()
    assert main(["verify", darboux_manifest, "--grid", "6", "--format", "text", "--report", report]) == EXIT_PASS
    assert "总体结论: pass" in capsys.readouterr().out
    assert os.path.exists(report) and os.path.exists(report + ".txt")


def test_model_verify_flag(capsys):
    assert main(["model", "fold-collar", "--n", "2", "--verify", "--grid", "5"]) == EXIT_PASS
    assert json.loads(capsys.readouterr().out)["name"] == "fold-collar"


@pytest.mark.parametrize("form,code", [("alpha", EXIT_PASS), ("beta", EXIT_FAIL)])
def test_check_contact(tmp_path, form, code):
    path = _write(tmp_path, "xyz.json", XYZ)
    assert main(["check", "contact", "--manifest", path, "--form", form, "--grid", "5"]) == code


def test_fold_and_germ_commands(dividing_manifest, darboux_manifest, tmp_path):
    folded = str(tmp_path / "folded.json")
    assert main(["germ-to-fold", dividing_manifest, "--grid", "5", "--out", folded]) == EXIT_PASS
    assert main(["check", "folded", folded]) == EXIT_PASS
    assert main(["ideal", dividing_manifest]) == EXIT_PASS
    assert main(["roundtrip", darboux_manifest, "--grid", "5"]) == EXIT_PASS


def test_asymmetric_double_verify_judges_gluing(tmp_path):
    report_path = str(tmp_path / "asym.json")
    argv = ["model", "asymmetric-double", "--n", "2", "--mu", "2 + x1^2", "--verify", "--grid", "5",
            "--out", str(tmp_path / "asym_manifest.json"), "--report", report_path]
    assert main(argv) == EXIT_PASS
    entries = {e.kind: e for e in load_report(report_path).entries}
    assert entries["pullback"].status == "pass"
    assert entries["pullback"].name == "shift/lam_plus/lam_minus"


def test_fold_to_germ_on_collar(tmp_path):
    collar = str(tmp_path / "collar.json")
    germ = str(tmp_path / "germ.json")
    assert main(["model", "fold-collar", "--n", "2", "--out", collar]) == EXIT_PASS
    assert main(["fold-to-germ", collar, "--grid", "5", "--out", germ]) == EXIT_PASS
    with open(germ, encoding="utf-8") as f:
        data = json.load(f)
    assert data["meta"]["certified"] is True
    assert "germ" in data["germs"]
    assert data["germs"]["germ"]["scale"] == "scale"
    reloaded = load(germ).contact_germ()
    assert reloaded.collar is not None


def test_germ_with_inconsistent_collar_scale_is_input_error(dividing_manifest, tmp_path):
    with open(dividing_manifest, encoding="utf-8") as f:
        data = json.load(f)
    data["germs"]["germ"]["scale"] = "1 + tau^2"
    path = _write(tmp_path, "scaled.json", data)
    assert main(["germ-to-fold", path, "--grid", "5"]) == EXIT_INPUT


def test_samples(darboux_manifest, capsys):
    capsys.readouterr()
    assert main(["samples", darboux_manifest, "--grid", "5"]) == EXIT_PASS
    out = json.loads(capsys.readouterr().out)
    assert out["checks"][0]["kind"] == "fold-locus"
    assert out["checks"][0]["report"]["points"]


@pytest.mark.parametrize("action,plus,minus,code", [
    ("check", ["a", "b", "a"], ["b", "a", "b"], EXIT_PASS),
    ("check", ["a"], ["b"], EXIT_FAIL),
    ("stabilize", ["a", "b"], [], EXIT_PASS),
    ("search", ["a", "b", "a"], ["b", "a", "b"], EXIT_PASS),
])
def test_lefschetz(tmp_path, action, plus, minus, code):
    path = _write(tmp_path, "wlf.json", _lefschetz(plus, minus))
    assert main(["lefschetz", action, path, "--budget", "1"]) == code


def test_search_without_result_is_not_a_pass(tmp_path, capsys):
    path = _write(tmp_path, "wlf.json", _lefschetz(["a"], ["b"]))
    capsys.readouterr()
    assert main(["lefschetz", "search", path, "--budget", "1"]) == EXIT_FAIL
    assert json.loads(capsys.readouterr().out)["verdict"] == "inconclusive"


@pytest.mark.parametrize("argv", [
    ["check", "contact", "{manifest}", "--grid", "1"],
    ["check", "contact", "{missing}"],
    ["check", "nonsense", "{manifest}"],
    ["lefschetz", "check", "{manifest}"],
    ["verify", "{bad_schema}"],
    ["check", "contact", "{manifest}", "--form", "alpha", "--tol", "-1"],
])
def test_input_errors(tmp_path, argv):
    paths = {
        "manifest": _write(tmp_path, "xyz.json", XYZ),
        "bad_schema": _write(tmp_path, "bad.json", {**XYZ, "schema": "foldcalc/0"}),
        "missing": str(tmp_path / "missing.json"),
    }
    assert main([a.format(**paths) for a in argv]) == EXIT_INPUT
