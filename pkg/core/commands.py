"""
命令实现：每个子命令读取清单、调用检验或构造、汇总为 Report。
退出码由 Report 的总体结论决定；输入错误由 main 统一转换为 2。
"""
from dataclasses import replace
from typing import Optional

import numpy as np

from core.config_manager import ConfigManager, get_config
from core.errors import CertificationError, ManifestError, PreconditionError
from core.germs import fold_to_germ, germ_to_fold, ideal_alignment, normalize_contact_pair, roundtrip_fold
from core.lefschetz import (
    EQUAL_ON_HOMOLOGY, check_folded_wlf, common_stabilization_search, monodromy_h1, stabilization_consistency,
    stabilize,
)
from core.manifest import Manifest, load
from core.models import MODELS, ModelContents, build_model
from core.report import Report
from core.structures import (
    FAIL, MAX_CLOUD, PASS, characteristic_directions, check_contact, check_contact_vector_field, check_folded,
    check_folded_weinstein, check_gradient_like, check_liouville, check_positive_contact_type, check_pullback,
    check_symplectic, fold_samples, point_cloud,
)
from core.utils.logger import info

CHECK_KINDS = ("contact", "symplectic", "folded", "liouville", "gradient-like", "positive-contact-type",
               "folded-weinstein", "contact-vector-field", "pullback")

# 各类检验需要的引用
_NEEDS = {
    "contact": ("form",),
    "symplectic": ("form",),
    "folded": ("form", "fold"),
    "positive-contact-type": ("form", "fold"),
    "liouville": ("form",),
    "gradient-like": ("field", "phi"),
    "folded-weinstein": ("form", "fold", "phi"),
    "contact-vector-field": ("form", "field"),
    "pullback": ("map", "form", "target"),
}
_DEGREE = {"contact": 1, "symplectic": 2, "folded": 2, "positive-contact-type": 1, "liouville": 1,
           "folded-weinstein": 1, "contact-vector-field": 1}


def apply_overrides(args):
    """
    命令行参数临时覆盖配置（不写回磁盘）
    """
    manager = ConfigManager()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "tol", None) is not None:
        changes["tolerance"] = args.tol
    if getattr(args, "threads", None) is not None:
        changes["threads"] = args.threads
    if changes:
        ok, msg = manager.update_config(replace(manager.config, **changes), persist=False)
        if not ok:
            raise ManifestError(msg, "命令行参数")


def parse_grid(text: Optional[str]) -> Optional[tuple]:
    if not text:
        return None
    try:
        counts = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise ManifestError(f"无法解析网格点数 {text!r}", "--grid")
    if any(c < 2 for c in counts):
        raise ManifestError(f"每轴采样点数至少为 2: {text}", "--grid")
    return counts


def load_manifest(args) -> Manifest:
    return load(getattr(args, "manifest", None) or getattr(args, "manifest_path", None))


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------

def _implicit_check(m: Manifest, kind: str) -> dict:
    """
    清单没有声明该类检验时，按唯一性推断引用（例如只有一个 1 形式的接触检验）
    """
    if kind not in _DEGREE and kind != "gradient-like":
        raise ManifestError(f"{kind} 检验无法推断引用，需要在清单的 checks 中声明", "checks")
    spec = {"kind": kind}
    for ref in _NEEDS[kind]:
        if ref == "form":
            pool = [k for k, f in m.forms.items() if f.degree == _DEGREE[kind]]
        elif ref == "fold":
            pool = list(m.folds)
        elif ref == "field":
            pool = list(m.fields)
        else:
            pool = [k for k in m.scalars if k.startswith("phi")]
        if len(pool) != 1:
            raise ManifestError(f"无法推断 {kind} 检验的 {ref}（候选 {pool}），请用 --{ref} 指定", "checks")
        spec[ref] = pool[0]
    return spec


def run_check(m: Manifest, spec: dict, counts: Optional[tuple] = None, tol: Optional[float] = None):
    """
    执行一项检验
    :param spec: {"kind", "form", "fold", "field", "phi", "grid", "points", ...}
    :return: StructureReport
    """
    kind = spec["kind"]
    if kind not in CHECK_KINDS:
        raise ManifestError(f"未知的检验类型 {kind}，可选 {', '.join(CHECK_KINDS)}", "checks.kind")
    for ref in _NEEDS[kind]:
        if spec.get(ref) is None:
            raise ManifestError(f"{kind} 检验缺少 {ref}", f"checks.{ref}")
    form = m.form(spec["form"]) if spec.get("form") else None
    if kind == "pullback":
        mapping = m.chart_map(spec["map"])
        target = m.form(spec["target"])
        return check_pullback(mapping, form, target, m.grid(spec.get("grid"), mapping.source, counts), tol)
    vector = m.vector_field(spec["field"]) if spec.get("field") else None
    chart = form.chart if form is not None else vector.chart
    grid = m.grid(spec.get("grid"), chart, counts)
    fold = m.fold(spec["fold"]) if spec.get("fold") else None
    phi = m.scalar(spec["phi"])[1] if spec.get("phi") else None
    points = [m.point(p) for p in spec.get("points", []) or []]
    if kind == "contact":
        return check_contact(form, grid, tol)
    if kind == "symplectic":
        return check_symplectic(form, grid, tol)
    if kind == "folded":
        return check_folded(form, fold, grid, tol)
    if kind == "positive-contact-type":
        return check_positive_contact_type(form, fold, grid, tol)
    if kind == "liouville":
        return check_liouville(form, grid, vector, tol)
    if kind == "gradient-like":
        return check_gradient_like(vector, phi, points, grid, tol=tol)
    if kind == "contact-vector-field":
        hypersurface = m.scalar(spec["hypersurface"])[1] if spec.get("hypersurface") else None
        return check_contact_vector_field(form, vector, grid, hypersurface, tol)
    return check_folded_weinstein(form, phi, fold, grid, points, tol=tol)


def _label(spec: dict) -> str:
    keys = ("map", "form", "target", "field", "fold", "phi")
    return "/".join(str(spec[k]) for k in keys if spec.get(k)) or spec["kind"]


def cmd_check(args) -> Report:
    m = load_manifest(args)
    kind = args.kind
    counts = parse_grid(args.grid)
    report = Report(f"check {kind}")
    selected = {k: getattr(args, k, None) for k in ("form", "fold", "field", "phi")}
    if any(selected.values()):
        specs = [{"kind": kind, **{k: v for k, v in selected.items() if v}, "points": args.points or []}]
    else:
        specs = [c for c in m.checks if c.get("kind") == kind] or [_implicit_check(m, kind)]
    for spec in specs:
        result = run_check(m, spec, counts, args.tol)
        report.add(_label(spec), kind, result, spec.get("expect"))
    return report


def cmd_verify(m: Manifest, counts: Optional[tuple] = None, tol: Optional[float] = None,
               command: str = "verify") -> Report:
    """
    执行清单中声明的全部检验
    """
    report = Report(command)
    for spec in m.checks:
        report.add(_label(spec), spec["kind"], run_check(m, spec, counts, tol), spec.get("expect"))
    return report


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

def cmd_model(args) -> tuple:
    """
    :return: (Manifest, Report 或 None)
    """
    params = {}
    if args.eps is not None and args.name in ("fold-collar", "dividing-collar"):
        params["eps"] = args.eps
    if args.name == "double" and args.weinstein:
        params["include_minus"] = False
    if args.name == "asymmetric-double" and args.mu:
        params["mu"] = args.mu
    model = build_model(args.name, args.n, **params)
    m = Manifest.from_model(model.contents())
    report = None
    if args.verify:
        report = cmd_verify(m, parse_grid(args.grid), args.tol, f"model {args.name}")
    info(f"模型 {args.name} 已生成: {len(m.forms)} 个形式, {len(m.checks)} 项预期检验")
    return m, report


# ---------------------------------------------------------------------------
# 折叠 <-> 接触芽
# ---------------------------------------------------------------------------

def _germ_manifest(name: str, germ, grid) -> Manifest:
    contents = ModelContents(name, meta={"certified": germ.certified, "normalization": germ.normalization})
    contents.add_chart(germ.chart)
    contents.forms["beta"] = germ.beta
    contents.scalars["f"] = (germ.chart.id, germ.f)
    contents.germs["germ"] = (germ.chart.id, "f", "beta")
    contents.grids["main"] = grid
    if germ.collar is not None:
        contents.add_chart(germ.collar.gamma)
        contents.collars["collar"] = (germ.chart.id, germ.collar, "alpha_gamma")
        contents.forms["alpha_gamma"] = germ.collar.alpha
        contents.scalars["scale"] = (germ.chart.id, germ.scale)
        contents.germs["germ"] = (germ.chart.id, "f", "beta", "scale")
    return Manifest.from_model(contents)


def _folded_manifest(name: str, fp, grid) -> Manifest:
    contents = ModelContents(name, meta={"identities": fp.identities})
    contents.add_chart(fp.chart)
    contents.forms["lam"] = fp.lam
    contents.forms["omega"] = fp.omega
    contents.folds["fold"] = (fp.chart.id, fp.fold)
    contents.grids["main"] = grid
    contents.expect("folded", "pass", form="omega", fold="fold", grid="main")
    contents.expect("positive-contact-type", "pass", form="lam", fold="fold", grid="main")
    return Manifest.from_model(contents)


def cmd_fold_to_germ(args) -> tuple:
    m = load_manifest(args)
    fp = m.folded_presentation(args.form, args.fold)
    grid = m.grid(None, fp.chart, parse_grid(args.grid))
    report = Report("fold-to-germ")
    try:
        germ = fold_to_germ(fp, args.eps, grid, args.tol)
    except CertificationError as e:
        if e.report is not None:
            report.add("alpha", e.report.property, e.report)
        return None, report
    for key, r in fp.reports.items():
        report.add("lam", key, r)
    report.add("alpha", "contact", germ.report)
    report.payload["germ"] = germ.to_dict()
    return _germ_manifest("germ", germ, grid), report


def cmd_germ_to_fold(args) -> tuple:
    m = load_manifest(args)
    germ = m.contact_germ(args.form)
    grid = m.grid(None, germ.chart, parse_grid(args.grid))
    report = Report("germ-to-fold")
    try:
        if not args.raw:
            germ = normalize_contact_pair(germ, args.eps, args.delta, args.eps_prime, grid, args.tol)
            report.add("germ", "contact", germ.report)
        fp = germ_to_fold(germ, grid, args.tol)
    except CertificationError as e:
        if e.report is not None:
            report.add("germ", e.report.property, e.report)
        return None, report
    for key, r in fp.reports.items():
        report.add("lam", key, r)
    report.payload["identities"] = fp.identities
    report.payload["normalization"] = germ.normalization
    return _folded_manifest("folded", fp, grid), report


def cmd_roundtrip(args) -> Report:
    m = load_manifest(args)
    fp = m.folded_presentation(args.form, args.fold)
    grid = m.grid(None, fp.chart, parse_grid(args.grid))
    report = Report("roundtrip")
    try:
        result = roundtrip_fold(fp, args.eps, args.delta, args.eps_prime, grid, args.tol)
    except CertificationError as e:
        if e.report is not None:
            report.add("stage", e.report.property, e.report)
        return report
    report.add(fp.chart.id, "roundtrip", result)
    return report


def cmd_ideal(args) -> Report:
    """
    理想 Liouville 方向与特征叶状结构方向的比较
    """
    m = load_manifest(args)
    germ = m.contact_germ(args.form)
    dots = ideal_alignment(germ, args.count, get_config().seed)
    report = Report("ideal")
    for side, sign in (("plus", 1.0), ("minus", -1.0)):
        values = dots[side]
        if not values.size:
            continue
        worst = float(abs(values - sign).max())
        report.add(side, "ideal-alignment", {"verdict": PASS if worst <= 1e-6 else FAIL, "deviation": worst,
                                             "samples": int(values.size), "expected_sign": sign})
    if not report.entries:
        raise PreconditionError("R₊ 与 R₋ 上都没有可用的采样点")
    return report


# ---------------------------------------------------------------------------
# lefschetz
# ---------------------------------------------------------------------------

def _lefschetz(m: Manifest):
    if m.lefschetz is None:
        raise ManifestError("清单没有 lefschetz 数据", "lefschetz")
    return m.lefschetz


def cmd_lefschetz(args) -> Report:
    m = load_manifest(args)
    section = _lefschetz(m)
    report = Report(f"lefschetz {args.action}")
    if args.action == "check":
        fw = section.folded()
        report.add(section.page.label, "folded-wlf", check_folded_wlf(fw))
    elif args.action == "stabilize":
        if not section.stabilizations:
            raise ManifestError("没有要施加的稳定化", "lefschetz.stabilize")
        w = section.abstract(args.side)
        for i, spec in enumerate(section.stabilizations):
            new = stabilize(w, spec)
            checks = stabilization_consistency(w, new, spec)
            report.add(f"{args.side}[{i}]", "stabilization",
                       {"verdict": PASS if checks["ok"] else FAIL, "checks": checks,
                        "word": new.word, "monodromy": monodromy_h1(new).tolist()})
            w = new
        report.payload["result"] = w.to_dict()
    elif args.action == "search":
        budget = args.budget if args.budget is not None else (section.budget if section.budget is not None else 2)
        found = common_stabilization_search(section.abstract("plus"), section.abstract("minus"), budget)
        if found is None:
            report.add("search", "common-stabilization",
                       {"verdict": "inconclusive", "budget": budget,
                        "notes": ["预算内未找到公共稳定化，这不构成否定"]})
        else:
            report.add("search", "common-stabilization",
                       {"verdict": PASS if found.verdict == EQUAL_ON_HOMOLOGY else FAIL, "budget": budget,
                        "stabilizations": len(found.history), "folded": found.to_dict()})
    else:
        raise ManifestError(f"未知的 lefschetz 操作 {args.action}", "lefschetz")
    return report


def model_names() -> list:
    return list(MODELS)


# ---------------------------------------------------------------------------
# 点云输出（供外部绘图）
# ---------------------------------------------------------------------------

def cmd_samples(args) -> Report:
    """
    输出折叠（分割集）采样点云；清单含接触芽时附带特征叶状结构方向
    """
    m = load_manifest(args)
    counts = parse_grid(args.grid)
    report = Report("samples")
    for name, (chart_id, spec) in m.folds.items():
        if args.fold and name != args.fold:
            continue
        grid = m.grid(None, m.chart(chart_id), counts)
        cloud = fold_samples(spec, grid)
        report.add(name, "fold-locus", {"verdict": PASS, "chart": chart_id,
                                        "points": point_cloud(grid.chart, cloud)})
    for name in m.germs:
        if args.form and name != args.form:
            continue
        germ = m.contact_germ(name)
        grid = m.grid(None, germ.chart, counts)
        env = grid.env()
        unit, singular, signs = characteristic_directions(germ.f, germ.beta, env)
        keep = np.flatnonzero(~singular)[:MAX_CLOUD]
        report.add(name, "characteristic-foliation", {
            "verdict": PASS, "chart": germ.chart.id,
            "points": point_cloud(germ.chart, {k: v[keep] for k, v in env.items()}),
            "directions": unit[keep].tolist(),
            "singular": point_cloud(germ.chart, {k: v[singular] for k, v in env.items()}),
            "singular_signs": signs[singular].tolist(),
        })
    if not report.entries:
        raise ManifestError("清单中没有折叠或接触芽可供采样", "folds")
    return report
