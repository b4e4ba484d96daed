"""
清单（manifest）：坐标卡、形式、向量场、映射、折叠、网格、剖面和 Lefschetz 数据的 JSON 表示。
读取用 json5（手写清单允许注释和尾逗号），写出为严格 JSON。
所有解析错误都转换为带字段路径的 ManifestError。
"""
import json
import sys
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Optional

import json5
import numpy as np

from core.errors import FoldcalcError, ManifestError
from core.exprcore import ONE, PiecewisePoly, Point, collect_splines, parse_expr, to_text
from core.forms import Chart, ChartMap, DifferentialForm, VectorField
from core.germs import ContactGerm, FoldedPresentation
from core.lefschetz import AbstractWLF, FoldedWLF, Page, StabilizationSpec, VanishingCycle, standard_page
from core.models import CollarPresentation, ModelContents
from core.profiles import ProfileFn
from core.structures import FoldSpec, SampleGrid
from core.utils.logger import error, info
from core.utils.numpy_cconvert import convert_numpy_types

SCHEMA = "foldcalc/1"


@contextmanager
def at(path: str):
    """
    把块内抛出的异常转换为带字段路径的 ManifestError
    """
    try:
        yield
    except ManifestError:
        raise
    except (FoldcalcError, KeyError, TypeError, ValueError, IndexError) as e:
        message = f"缺少字段 {e}" if isinstance(e, KeyError) else str(e)
        error(f"清单字段 {path} 无效: {message}")
        raise ManifestError(message, path) from e


@dataclass
class LefschetzSection:
    """
    清单中的 Lefschetz 数据：纤维页、命名的消失圈、正负两组序列和待施加的稳定化
    """
    page: Page
    cycles: dict
    plus: list
    minus: list
    stabilizations: list = field(default_factory=list)
    budget: Optional[int] = None

    def word(self, labels: list, path: str) -> list:
        out = []
        for i, label in enumerate(labels):
            if label not in self.cycles:
                raise ManifestError(f"未定义的消失圈 {label}", f"{path}[{i}]")
            out.append(self.cycles[label])
        return out

    def abstract(self, side: str = "plus") -> AbstractWLF:
        labels = self.plus if side == "plus" else self.minus
        return AbstractWLF(self.page, self.word(labels, f"lefschetz.{side}"))

    def folded(self) -> FoldedWLF:
        return FoldedWLF(self.page, self.word(self.plus, "lefschetz.plus"), self.word(self.minus, "lefschetz.minus"))

    def to_dict(self) -> dict:
        out = {
            "page": self.page.to_dict(),
            "cycles": {k: c.vector.tolist() for k, c in self.cycles.items()},
            "plus": list(self.plus),
            "minus": list(self.minus),
        }
        if self.stabilizations:
            out["stabilize"] = [s.to_dict() for s in self.stabilizations]
        if self.budget is not None:
            out["budget"] = self.budget
        return out


@dataclass
class Manifest:
    name: str = ""
    meta: dict = field(default_factory=dict)
    splines: dict = field(default_factory=dict)
    profiles: dict = field(default_factory=dict)
    charts: dict = field(default_factory=dict)
    forms: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)
    maps: dict = field(default_factory=dict)
    scalars: dict = field(default_factory=dict)
    folds: dict = field(default_factory=dict)
    grids: dict = field(default_factory=dict)
    points: dict = field(default_factory=dict)
    germs: dict = field(default_factory=dict)
    collars: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    lefschetz: Optional[LefschetzSection] = None
    source: str = "<memory>"

    # ---- 查询 ----
    def _get(self, section: str, name: str):
        table = getattr(self, section)
        if name not in table:
            available = ", ".join(table) or "无"
            raise ManifestError(f"未定义的引用 {name}（可用: {available}）", f"{section}.{name}")
        return table[name]

    def chart(self, chart_id: str) -> Chart:
        return self._get("charts", chart_id)

    def form(self, name: str) -> DifferentialForm:
        return self._get("forms", name)

    def vector_field(self, name: str) -> VectorField:
        return self._get("fields", name)

    def chart_map(self, name: str) -> ChartMap:
        return self._get("maps", name)

    def scalar(self, name: str):
        return self._get("scalars", name)

    def fold(self, name: str) -> FoldSpec:
        return self._get("folds", name)[1]

    def fold_chart(self, name: str) -> Chart:
        return self.chart(self._get("folds", name)[0])

    def point(self, name: str) -> Point:
        return self._get("points", name)

    def grid(self, name: Optional[str] = None, chart: Optional[Chart] = None,
             counts: Optional[tuple] = None) -> SampleGrid:
        """
        按名称取网格，或取指定坐标卡上的第一个网格；都没有时用默认网格。counts 覆盖每轴点数
        """
        if name is not None:
            grid = self._get("grids", name)
        else:
            grid = next((g for g in self.grids.values() if chart is not None and g.chart == chart), None)
            if grid is None:
                if chart is None:
                    raise ManifestError("无法确定采样网格", "grids")
                grid = SampleGrid.default(chart)
        if counts:
            with at("--grid"):
                grid = SampleGrid(grid.chart, tuple(counts), grid.box, grid.excluded, grid.inset)
        return grid

    def collar_for(self, chart: Chart) -> Optional[CollarPresentation]:
        for presentation, chart_id in self.collars.values():
            if chart_id == chart.id:
                return presentation
        return None

    def contact_germ(self, name: Optional[str] = None) -> ContactGerm:
        if name is None:
            if len(self.germs) != 1:
                raise ManifestError(f"清单中有 {len(self.germs)} 个接触芽，需要用 --form 指定", "germs")
            name = next(iter(self.germs))
        chart_id, f_name, beta_name, scale_name = self._get("germs", name)
        chart = self.chart(chart_id)
        f = self.scalar(f_name)[1]
        scale = self.scalar(scale_name)[1] if scale_name else ONE
        beta = self.form(beta_name)
        with at(f"germs.{name}"):
            return ContactGerm(chart, f, beta, collar=self.collar_for(chart), scale=scale)

    def folded_presentation(self, form: Optional[str] = None, fold: Optional[str] = None) -> FoldedPresentation:
        """
        由 λ 与折叠组成折叠表示；未指定时取清单中第一个 positive-contact-type 预期为 pass 的检验
        """
        if form is None or fold is None:
            for c in self.checks:
                if c.get("kind") == "positive-contact-type" and c.get("expect", "pass") == "pass":
                    form = form or c.get("form")
                    fold = fold or c.get("fold")
                    break
        if form is None or fold is None:
            raise ManifestError("需要用 --form 与 --fold 指定 λ 与折叠", "checks")
        lam = self.form(form)
        spec = self.fold(fold)
        if self.fold_chart(fold) != lam.chart:
            raise ManifestError(f"折叠 {fold} 与形式 {form} 不在同一坐标卡上", f"folds.{fold}")
        return FoldedPresentation(lam, spec, self.collar_for(lam.chart))

    def registry(self) -> dict:
        out = dict(self.splines)
        for p in self.profiles.values():
            out[p.spline.name] = p.spline
        return out

    # ---- 序列化 ----
    def to_dict(self) -> dict:
        exprs = []
        for f in self.forms.values():
            exprs += list(f.coeffs.values())
        for v in self.fields.values():
            exprs += list(v.components)
        for m in self.maps.values():
            exprs += list(m.components)
        exprs += [e for _, e in self.scalars.values()]
        exprs += [spec.h for _, spec in self.folds.values()]
        splines = dict(self.splines)
        splines.update(collect_splines(exprs))
        out = {
            "schema": SCHEMA,
            "name": self.name,
            "meta": self.meta,
            "splines": {k: p.to_dict() for k, p in sorted(splines.items())},
            "profiles": {k: p.to_dict() for k, p in self.profiles.items()},
            "charts": {k: c.to_dict() for k, c in self.charts.items()},
            "forms": {k: f.to_dict() for k, f in self.forms.items()},
            "fields": {k: v.to_dict() for k, v in self.fields.items()},
            "maps": {k: m.to_dict() for k, m in self.maps.items()},
            "scalars": {k: {"chart": cid, "expr": to_text(e)} for k, (cid, e) in self.scalars.items()},
            "folds": {k: {"chart": cid, **spec.to_dict()} for k, (cid, spec) in self.folds.items()},
            "grids": {k: g.to_dict() for k, g in self.grids.items()},
            "points": {k: p.to_dict() for k, p in self.points.items()},
            "germs": {k: {"chart": cid, "f": f, "beta": b, **({"scale": s} if s else {})}
                      for k, (cid, f, b, s) in self.germs.items()},
            "collars": {k: {"chart": cid, "gamma": c.gamma.id, "alpha": self._alpha_name(c), **c.to_dict()}
                        for k, (c, cid) in self.collars.items()},
            "checks": self.checks,
        }
        if self.lefschetz is not None:
            out["lefschetz"] = self.lefschetz.to_dict()
        return convert_numpy_types(out)

    def _alpha_name(self, collar: CollarPresentation) -> str:
        for k, f in self.forms.items():
            if f is collar.alpha or (f.chart == collar.gamma and f.coeffs == collar.alpha.coeffs):
                return k
        raise ManifestError("领口的 α_Γ 不在 forms 中", "collars")

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2)

    def write(self, path: Optional[str] = None):
        text = self.dumps()
        if path is None or path == "-":
            sys.stdout.write(text + "\n")
            return
        with open(path, "w", encoding="utf-8") as f:
            f.write(text + "\n")
        info(f"写出清单 {path}")

    @classmethod
    def from_model(cls, contents: ModelContents) -> 'Manifest':
        m = cls(name=contents.name, meta=convert_numpy_types(contents.meta))
        m.profiles = dict(contents.profiles)
        m.charts = dict(contents.charts)
        m.forms = dict(contents.forms)
        m.fields = dict(contents.fields)
        m.maps = dict(contents.maps)
        m.scalars = dict(contents.scalars)
        m.folds = dict(contents.folds)
        m.grids = dict(contents.grids)
        m.points = dict(contents.points)
        m.germs = {k: (tuple(v) + (None,))[:4] for k, v in contents.germs.items()}
        m.collars = {k: (c, cid) for k, (cid, c, _) in contents.collars.items()}
        for k, (_, c, alpha_name) in contents.collars.items():
            m.forms.setdefault(alpha_name, c.alpha)
            m.charts.setdefault(c.gamma.id, c.gamma)
        for part in list(m.forms.values()) + list(m.fields.values()):
            m.charts.setdefault(part.chart.id, part.chart)
        for mp in m.maps.values():
            m.charts.setdefault(mp.source.id, mp.source)
            m.charts.setdefault(mp.target.id, mp.target)
        m.checks = [dict(c) for c in contents.checks]
        return m


# ---------------------------------------------------------------------------
# 读取
# ---------------------------------------------------------------------------

def loads(text: str, source: str = "<string>") -> Manifest:
    try:
        data = json5.loads(text)
    except ValueError as e:
        error(f"清单 {source} 不是合法的 JSON: {e}")
        raise ManifestError(f"JSON 语法错误: {e}", source) from e
    return parse_manifest(data, source)


def load(path: Optional[str]) -> Manifest:
    """
    读取清单文件；path 为 None 或 "-" 时从标准输入读取
    """
    if path is None or path == "-":
        return loads(sys.stdin.read(), "<stdin>")
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ManifestError(f"无法读取清单: {e}", path) from e
    m = loads(text, path)
    info(f"读取清单 {path}: {len(m.charts)} 张坐标卡, {len(m.forms)} 个形式, {len(m.checks)} 项检验")
    return m


def _named(data: dict, section: str) -> dict:
    value = data.get(section, {}) or {}
    if not isinstance(value, dict):
        raise ManifestError("必须是对象", section)
    return value


def parse_manifest(data: dict, source: str = "<memory>") -> Manifest:
    """
    :raise ManifestError: 版本不符、表达式无法解析或引用无法解析，field 为出错的字段路径
    """
    if not isinstance(data, dict):
        raise ManifestError("清单顶层必须是对象", source)
    if data.get("schema") != SCHEMA:
        raise ManifestError(f"不支持的清单版本 {data.get('schema')!r}，需要 {SCHEMA}", "schema")
    m = Manifest(name=data.get("name", ""), meta=data.get("meta", {}) or {}, source=source)

    for k, v in _named(data, "splines").items():
        with at(f"splines.{k}"):
            m.splines[k] = PiecewisePoly.from_dict(v)
    for k, v in _named(data, "profiles").items():
        with at(f"profiles.{k}"):
            m.profiles[k] = ProfileFn.from_dict(v)
    functions = m.registry()

    for k, v in _named(data, "charts").items():
        with at(f"charts.{k}"):
            m.charts[k] = Chart.from_dict(k, v)

    def chart_of(path: str, value: dict, key: str = "chart") -> Chart:
        cid = value.get(key)
        if cid not in m.charts:
            raise ManifestError(f"未定义的坐标卡 {cid!r}", f"{path}.{key}")
        return m.charts[cid]

    for k, v in _named(data, "forms").items():
        chart = chart_of(f"forms.{k}", v)
        for key, text in (v.get("coeffs") or {}).items():
            with at(f"forms.{k}.coeffs.{key or '(0)'}"):
                parse_expr(text, chart.variables, functions)
        with at(f"forms.{k}"):
            m.forms[k] = DifferentialForm.from_named(chart, int(v["degree"]), v.get("coeffs") or {}, functions)
    for k, v in _named(data, "fields").items():
        chart = chart_of(f"fields.{k}", v)
        with at(f"fields.{k}"):
            m.fields[k] = VectorField.from_named(chart, v.get("components") or {}, functions)
    for k, v in _named(data, "maps").items():
        source_chart = chart_of(f"maps.{k}", v, "source")
        target_chart = chart_of(f"maps.{k}", v, "target")
        with at(f"maps.{k}"):
            m.maps[k] = ChartMap.from_named(source_chart, target_chart, v.get("components") or {}, functions)
    for k, v in _named(data, "scalars").items():
        chart = chart_of(f"scalars.{k}", v)
        with at(f"scalars.{k}.expr"):
            m.scalars[k] = (chart.id, parse_expr(v["expr"], chart.variables, functions))
    for k, v in _named(data, "folds").items():
        chart = chart_of(f"folds.{k}", v)
        with at(f"folds.{k}.h"):
            m.folds[k] = (chart.id, FoldSpec(parse_expr(v["h"], chart.variables, functions), v.get("delta")))
    for k, v in _named(data, "grids").items():
        chart = chart_of(f"grids.{k}", v)
        with at(f"grids.{k}"):
            m.grids[k] = SampleGrid(chart, tuple(v["counts"]), v.get("box"), tuple(v.get("excluded") or ()),
                                    float(v.get("inset", 0.0)))
    for k, v in _named(data, "points").items():
        chart = chart_of(f"points.{k}", v)
        with at(f"points.{k}.values"):
            m.points[k] = chart.point(v["values"])
    for k, v in _named(data, "collars").items():
        chart = chart_of(f"collars.{k}", v)
        gamma = chart_of(f"collars.{k}", v, "gamma")
        alpha = v.get("alpha")
        if alpha not in m.forms:
            raise ManifestError(f"未定义的形式 {alpha!r}", f"collars.{k}.alpha")
        with at(f"collars.{k}"):
            collar = CollarPresentation(gamma, m.forms[alpha], v.get("variable", "tau"),
                                        tuple(v.get("interval", (-0.5, 0.5))), v.get("kind", "fold"))
            if collar.chart().variables != chart.variables:
                raise ManifestError(f"领口变量表与坐标卡 {chart.id} 不一致", f"collars.{k}.chart")
            m.collars[k] = (collar, chart.id)
    for k, v in _named(data, "germs").items():
        chart = chart_of(f"germs.{k}", v)
        f_name, beta_name = v.get("f"), v.get("beta")
        if f_name not in m.scalars:
            with at(f"germs.{k}.f"):
                m.scalars[f"{k}_f"] = (chart.id, parse_expr(str(f_name), chart.variables, functions))
            f_name = f"{k}_f"
        if beta_name not in m.forms:
            raise ManifestError(f"未定义的形式 {beta_name!r}", f"germs.{k}.beta")
        scale_name = v.get("scale")
        if scale_name is not None and scale_name not in m.scalars:
            with at(f"germs.{k}.scale"):
                m.scalars[f"{k}_scale"] = (chart.id, parse_expr(str(scale_name), chart.variables, functions))
            scale_name = f"{k}_scale"
        m.germs[k] = (chart.id, f_name, beta_name, scale_name)

    checks = data.get("checks", []) or []
    if not isinstance(checks, list):
        raise ManifestError("必须是数组", "checks")
    for i, c in enumerate(checks):
        _validate_check(m, c, f"checks[{i}]")
        m.checks.append(dict(c))

    if data.get("lefschetz") is not None:
        m.lefschetz = _parse_lefschetz(data["lefschetz"])
    return m


_REF_SECTIONS = {"form": "forms", "fold": "folds", "grid": "grids", "field": "fields", "phi": "scalars", "map": "maps",
                 "target": "forms"}


def _validate_check(m: Manifest, c: dict, path: str):
    if not isinstance(c, dict) or "kind" not in c:
        raise ManifestError("检验项必须是含 kind 的对象", path)
    if c.get("expect", "pass") not in ("pass", "fail", "inconclusive"):
        raise ManifestError(f"未知的预期结论 {c.get('expect')!r}", f"{path}.expect")
    for key, section in _REF_SECTIONS.items():
        if key in c and c[key] not in getattr(m, section):
            raise ManifestError(f"未定义的引用 {c[key]!r}", f"{path}.{key}")
    for j, p in enumerate(c.get("points", []) or []):
        if p not in m.points:
            raise ManifestError(f"未定义的点 {p!r}", f"{path}.points[{j}]")


def _parse_lefschetz(data: dict) -> LefschetzSection:
    with at("lefschetz.page"):
        page_data = data["page"]
        if "form" in page_data:
            page = Page.from_dict(page_data)
        else:
            page = standard_page(int(page_data.get("genus", 1)), int(page_data.get("boundary", 1)),
                                 page_data.get("label"))
    cycles = {}
    for k, v in (data.get("cycles") or {}).items():
        with at(f"lefschetz.cycles.{k}"):
            vector = np.asarray(v, dtype=np.int64)
            if vector.size != page.rank:
                raise ManifestError(f"类的维数 {vector.size} 与纤维页秩 {page.rank} 不一致",
                                    f"lefschetz.cycles.{k}")
            cycles[k] = VanishingCycle(k, vector)
    section = LefschetzSection(page, cycles, list(data.get("plus", [])), list(data.get("minus", [])))
    for side in ("plus", "minus"):
        section.word(getattr(section, side), f"lefschetz.{side}")
    for i, s in enumerate(data.get("stabilize", []) or []):
        with at(f"lefschetz.stabilize[{i}]"):
            section.stabilizations.append(StabilizationSpec.from_dict(s))
    if data.get("budget") is not None:
        with at("lefschetz.budget"):
            section.budget = int(data["budget"])
    return section
