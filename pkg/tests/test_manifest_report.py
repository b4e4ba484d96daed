import os

import pytest

from core.errors import ManifestError
from core.exprcore import Point
from core.lefschetz import EQUAL_ON_HOMOLOGY
from core.manifest import SCHEMA, Manifest, load, loads, parse_manifest
from core.models import build_model
from core.report import Report, load_report
from core.structures import FAIL, INCONCLUSIVE, PASS, StructureReport

CONTACT_TEXT = """
{
  // 手写清单：注释与尾逗号
  schema: "foldcalc/1",
  name: "xyz",
  charts: {xyz: {variables: ["x", "y", "z"], box: [[-1, 1], [-1, 1], [-1, 1]],},},
  forms: {
    alpha: {chart: "xyz", degree: 1, coeffs: {z: "1", x: "-y"}},
    beta: {chart: "xyz", degree: 1, coeffs: {z: "1"}},
  },
  grids: {coarse: {chart: "xyz", counts: [5, 5, 5]}},
  points: {origin: {chart: "xyz", values: [0, 0, 0]}},
  checks: [
    {kind: "contact", form: "alpha", grid: "coarse"},
    {kind: "contact", form: "beta", grid: "coarse", expect: "fail"},
  ],
}
"""


def _base():
    return {
        "schema": SCHEMA,
        "charts": {"xyz": {"variables": ["x", "y", "z"], "box": [[-1, 1], [-1, 1], [-1, 1]]}},
        "forms": {"alpha": {"chart": "xyz", "degree": 1, "coeffs": {"z": "1", "x": "-y"}}},
        "checks": [],
    }


def test_loads_hand_written_manifest():
    m = loads(CONTACT_TEXT)
    assert m.name == "xyz"
    assert m.form("alpha").degree == 1
    assert m.grid("coarse").counts == (5, 5, 5)
    assert m.point("origin") == Point("xyz", (0.0, 0.0, 0.0))
    assert [c["form"] for c in m.checks] == ["alpha", "beta"]
    # 未指定网格名时取坐标卡上的第一个网格，counts 覆盖点数
    assert m.grid(None, m.chart("xyz"), (3,)).counts == (3, 3, 3)


@pytest.mark.parametrize("name", ["darboux", "dividing-collar", "ideal-collar", "asymmetric-double"])
def test_model_manifest_round_trip(name, tmp_path, sample_env, forms_close):
    first = Manifest.from_model(build_model(name, 1).contents())
    path = str(tmp_path / "m.json")
    first.write(path)
    again = load(path)
    assert set(again.forms) == set(first.forms)
    assert again.checks == first.checks
    assert set(again.collars) == set(first.collars)
    for key, form in first.forms.items():
        forms_close(again.form(key), form, sample_env(form.chart, 50, 0.05), 1e-12)
    assert loads(again.dumps()).to_dict() == again.to_dict()


def test_germ_manifest_resolves_collar():
    m = Manifest.from_model(build_model("dividing-collar", 2).contents())
    again = loads(m.dumps())
    germ = again.contact_germ()
    assert germ.collar is not None
    assert germ.chart.id == germ.collar.chart().id


def test_lefschetz_section():
    data = _base()
    data["lefschetz"] = {
        "page": {"genus": 1},
        "cycles": {"a": [1, 0], "b": [0, 1]},
        "plus": ["a", "b", "a"],
        "minus": ["b", "a", "b"],
        "stabilize": [{"attach": "handle", "class": [1, 0, 1]}],
        "budget": 1,
    }
    section = parse_manifest(data).lefschetz
    assert section.page.rank == 2
    assert section.abstract("minus").word == ["b", "a", "b"]
    assert section.budget == 1
    assert section.stabilizations[0].vector == (1, 0, 1)
    assert parse_manifest({**data, "lefschetz": section.to_dict()}).lefschetz.to_dict() == section.to_dict()


def _broken(path):
    data = _base()
    if path == "schema":
        data["schema"] = "foldcalc/0"
    elif path == "forms.alpha.chart":
        data["forms"]["alpha"]["chart"] = "uvw"
    elif path == "forms.alpha.coeffs.z":
        data["forms"]["alpha"]["coeffs"]["z"] = "1 +"
    elif path == "forms.alpha.coeffs.x":
        data["forms"]["alpha"]["coeffs"]["x"] = "w * y"
    elif path == "checks[0].form":
        data["checks"] = [{"kind": "contact", "form": "gamma"}]
    elif path == "checks[0].expect":
        data["checks"] = [{"kind": "contact", "form": "alpha", "expect": "maybe"}]
    elif path == "grids.g":
        data["grids"] = {"g": {"chart": "xyz", "counts": [5, 5]}}
    elif path == "points.p.values":
        data["points"] = {"p": {"chart": "xyz", "values": [0, 0, 3]}}
    elif path == "lefschetz.cycles.c":
        data["lefschetz"] = {"page": {"genus": 1}, "cycles": {"c": [1, 0, 0]}, "plus": [], "minus": []}
    elif path == "lefschetz.plus[1]":
        data["lefschetz"] = {"page": {"genus": 1}, "cycles": {"a": [1, 0]}, "plus": ["a", "z"], "minus": []}
    return data


@pytest.mark.parametrize("path", [
    "schema", "forms.alpha.chart", "forms.alpha.coeffs.z", "forms.alpha.coeffs.x", "checks[0].form",
    "checks[0].expect", "grids.g", "points.p.values", "lefschetz.cycles.c", "lefschetz.plus[1]",
])
def test_manifest_error_carries_field_path(path):
    with pytest.raises(ManifestError) as info:
        parse_manifest(_broken(path))
    assert info.value.field == path


def test_syntax_error_and_missing_reference(tmp_path):
    with pytest.raises(ManifestError) as info:
        loads("{schema: ", "broken.json")
    assert info.value.field == "broken.json"
    with pytest.raises(ManifestError):
        load(str(tmp_path / "missing.json"))
    m = parse_manifest(_base())
    with pytest.raises(ManifestError) as info:
        m.form("omega")
    assert info.value.field == "forms.omega"


def _structure(verdict, margin=0.5):
    return StructureReport(verdict, "contact", margin, Point("xyz", (0.0, 0.0, 0.0)), 125, ["note"], {"k": 1}, 1e-12)


def test_report_status_and_exit_code():
    report = Report("verify")
    assert report.verdict == INCONCLUSIVE
    report.add("alpha", "contact", _structure(PASS))
    report.add("beta", "contact", _structure(FAIL, 0.0), expect=FAIL)
    assert report.verdict == PASS
    assert report.exit_code == 0
    report.add("page", "folded-wlf", {"verdict": EQUAL_ON_HOMOLOGY})
    assert report.entries[-1].status == PASS
    report.add("sample", "contact", _structure(INCONCLUSIVE, float("nan")))
    assert report.verdict == INCONCLUSIVE
    assert report.exit_code == 1
    report.add("gamma", "contact", _structure(PASS), expect=FAIL)
    assert report.entries[-1].status == FAIL
    assert report.verdict == FAIL


def test_report_files(tmp_path):
    report = Report("check contact")
    report.add("alpha", "contact", _structure(PASS))
    report.add("beta", "contact", _structure(FAIL, -1.0))
    report.payload["note"] = "x"
    path = str(tmp_path / "report.json")
    report.write(path)
    assert os.path.exists(path + ".txt")
    again = load_report(path)
    assert again.to_dict() == report.to_dict()
    assert again.verdict == FAIL
    summary = report.summary()
    assert "[fail]" in summary and "xyz" in summary
