"""
折叠辛流形与竖直不变接触芽之间的对应：
fold_to_germ 由正接触型的折叠 Liouville 形式 λ 构造 α = f dt + λ；
normalize_contact_pair 与 germ_to_fold 由接触芽 (f, β) 构造 λ = e^{-f²}β。
证明中的恒等式作为可检验的残差函数导出。
"""
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from core.errors import CertificationError, DegreeError, PreconditionError
from core.exprcore import ONE, ScalarExpr, as_expr, diff, evaluate, exp, free_vars, power, simplify, to_text, var
from core.forms import (
    Chart, ChartMap, DifferentialForm, d_function, ext_d, nwedge, power_values, pullback, top_coeff, top_value,
    wedge,
)
from core.models import CollarPresentation
from core.profiles import LEMMA41_F, LEMMA42_MU, make_profile
from core.structures import (
    FAIL, PASS, FoldSpec, SampleGrid, StructureReport, _point_at, characteristic_directions, check_contact, check_folded,
    check_positive_contact_type, fold_samples, liouville_values,
)
from core.utils.logger import debug, info, warning
from core.utils.numpy_cconvert import convert_numpy_types
from core.utils.parallel import parallel_map

# 恒等式残差的判定阈值
IDENTITY_TOLERANCE = 1e-9


# ---------------------------------------------------------------------------
# 数据类型
# ---------------------------------------------------------------------------

@dataclass
class FoldedPresentation:
    """
    折叠辛流形的一张坐标卡：dλ = ω 折叠，FoldSpec 给出折叠。
    collar 不为空时表示该卡就是领口，且 λ = (1 - τ²)λ_Γ 的标准型成立
    """
    lam: DifferentialForm
    fold: FoldSpec
    collar: Optional[CollarPresentation] = None
    reports: dict = field(default_factory=dict)
    identities: dict = field(default_factory=dict)

    @property
    def chart(self) -> Chart:
        return self.lam.chart

    @property
    def omega(self) -> DifferentialForm:
        return ext_d(self.lam)

    @property
    def certified(self) -> bool:
        return bool(self.reports) and all(r.passed for r in self.reports.values())

    def certify(self, grid: Optional[SampleGrid] = None, tol: Optional[float] = None) -> dict:
        grid = grid or SampleGrid.default(self.chart)
        self.reports = {
            "folded": check_folded(self.omega, self.fold, grid, tol),
            "positive-contact-type": check_positive_contact_type(self.lam, self.fold, grid, tol),
        }
        return self.reports

    def to_dict(self) -> dict:
        return convert_numpy_types({
            "chart": self.chart.id,
            "lam": self.lam.to_dict()["coeffs"],
            "fold": self.fold.to_dict(),
            "collar": self.collar.to_dict() if self.collar else None,
            "reports": {k: r.to_dict() for k, r in self.reports.items()},
            "identities": self.identities,
        })


@dataclass
class ContactGerm:
    """
    Σ×ℝ_t 上的竖直不变接触形式 α = f dt + β。
    collar 不为空时 Σ 就是领口卡，β = scale·β_Γ，scale 只依赖领口变量
    """
    chart: Chart
    f: ScalarExpr
    beta: DifferentialForm
    certified: bool = False
    collar: Optional[CollarPresentation] = None
    scale: ScalarExpr = ONE
    report: Optional[StructureReport] = None
    normalization: dict = field(default_factory=dict)

    def __post_init__(self):
        self.f = as_expr(self.f)
        self.scale = as_expr(self.scale)
        if self.beta.chart != self.chart or self.beta.degree != 1:
            raise DegreeError("β 必须是 Σ 坐标卡上的 1 形式")
        if self.chart.dim % 2:
            raise DegreeError(f"Σ 必须是偶数维: {self.chart.id} 为 {self.chart.dim} 维")
        if self.collar is not None:
            self._check_collar()

    def _check_collar(self, count: int = 200):
        """
        领口卡上要求 β = scale·β_Γ，且 scale 只依赖领口变量
        :raise PreconditionError: 变量表不一致、scale 依赖其它变量或样本上 β ≠ scale·β_Γ
        """
        collar = self.collar
        if collar.chart().variables != self.chart.variables:
            raise PreconditionError(f"坐标卡 {self.chart.id} 的变量表与领口不一致")
        extra = free_vars(self.scale) - {collar.variable}
        if extra:
            raise PreconditionError(f"scale 只能依赖领口变量 {collar.variable}，实际还依赖 {', '.join(sorted(extra))}")
        env = _random_env(self.chart, count, 0)
        got = self.beta.evaluate(env, strict=False)
        want = collar.lift(self.chart).scale(self.scale).evaluate(env, strict=False)
        worst = 0.0
        for k in set(got) | set(want):
            a = np.broadcast_to(np.asarray(got.get(k, 0.0), dtype=float), (count,))
            b = np.broadcast_to(np.asarray(want.get(k, 0.0), dtype=float), (count,))
            worst = max(worst, float(np.nanmax(np.abs(a - b) / (1.0 + np.abs(b)))))
        if worst > IDENTITY_TOLERANCE:
            raise PreconditionError(f"领口卡上 β ≠ scale·β_Γ，相对偏差 {worst:.3e}")

    @property
    def t(self) -> str:
        return "t" if "t" not in self.chart.variables else "t_"

    def contact_chart(self) -> Chart:
        return Chart(f"{self.chart.id}_t", self.chart.variables + (self.t,), self.chart.box + ((-1.0, 1.0),),
                     self.chart.orientation)

    def contact_form(self) -> DifferentialForm:
        chart = self.contact_chart()
        lifted = pullback(ChartMap.projection(chart, self.chart), self.beta)
        return DifferentialForm.dx(chart, self.t).scale(self.f) + lifted

    def contact_grid(self, grid: Optional[SampleGrid] = None) -> SampleGrid:
        grid = grid or SampleGrid.default(self.chart)
        return SampleGrid(self.contact_chart(), grid.counts + (2,), box=tuple(grid.bounds) + ((-1.0, 1.0),))

    def certify(self, grid: Optional[SampleGrid] = None, tol: Optional[float] = None) -> StructureReport:
        self.report = check_contact(self.contact_form(), self.contact_grid(grid), tol)
        self.certified = self.report.passed
        return self.report

    def to_dict(self) -> dict:
        return convert_numpy_types({
            "chart": self.chart.id,
            "f": to_text(self.f),
            "beta": self.beta.to_dict()["coeffs"],
            "certified": self.certified,
            "collar": self.collar.to_dict() if self.collar else None,
            "scale": to_text(self.scale),
            "normalization": self.normalization,
            "report": self.report.to_dict() if self.report else None,
        })


@dataclass
class IdealPieces:
    """
    R± 上的理想 Liouville 形式 λ± = (1/f)β（同一表达式，按 f 的符号分区使用）
    """
    f: ScalarExpr
    lam_plus: DifferentialForm
    lam_minus: DifferentialForm


@dataclass
class RoundtripReport:
    verdict: str
    hausdorff: float
    bound: float
    sign_mismatches: int
    compared: int
    stages: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def to_dict(self) -> dict:
        return convert_numpy_types({
            "verdict": self.verdict,
            "property": "roundtrip",
            "hausdorff": self.hausdorff,
            "bound": self.bound,
            "sign_mismatches": self.sign_mismatches,
            "compared": self.compared,
            "notes": self.notes,
            "stages": {k: (v.to_dict() if hasattr(v, "to_dict") else v) for k, v in self.stages.items()},
        })


# ---------------------------------------------------------------------------
# 工具
# ---------------------------------------------------------------------------

def _size(env: Mapping[str, np.ndarray]) -> int:
    return len(next(iter(env.values()))) if env else 0


def _random_env(chart: Chart, count: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in chart.box])
    hi = np.array([b[1] for b in chart.box])
    pts = rng.uniform(lo, hi, size=(count, chart.dim))
    return {v: pts[:, i] for i, v in enumerate(chart.variables)}


def _values(e: ScalarExpr, env: Mapping[str, np.ndarray]) -> np.ndarray:
    return np.broadcast_to(np.asarray(evaluate(e, env, strict=False), dtype=float), (_size(env),))


def _top_power(form: DifferentialForm, n: int, env: Mapping[str, np.ndarray]) -> np.ndarray:
    return top_value(power_values(ext_d(form).evaluate(env, strict=False), n), form.chart, _size(env))


def _fail(prop: str, chart: Chart, env: Mapping[str, np.ndarray], margins: np.ndarray, note: str) -> StructureReport:
    idx = int(np.nanargmin(margins))
    return StructureReport(FAIL, prop, float(margins[idx]), _point_at(chart, env, idx), int(margins.size), [note])


def _require_identities(stage: str, chart: Chart, identities: Mapping[str, float]):
    """
    残差超过 IDENTITY_TOLERANCE 的恒等式视为检验失败
    :raise CertificationError: 附带残差最大的那一项
    """
    failed = {k: v for k, v in identities.items() if not v <= IDENTITY_TOLERANCE}
    if not failed:
        return
    name = max(failed, key=lambda k: failed[k] if np.isfinite(failed[k]) else np.inf)
    value = failed[name]
    note = f"{stage} 恒等式 {name} 残差 {value:.3e} 超过 {IDENTITY_TOLERANCE:g}"
    warning(note)
    report = StructureReport(FAIL, f"identity:{name}", float(IDENTITY_TOLERANCE - value), None, 1, [note],
                             {"chart": chart.id, "identities": dict(identities)}, IDENTITY_TOLERANCE)
    raise CertificationError(note, report)


def _collar_base(collar: CollarPresentation, chart: Chart) -> tuple:
    """
    :return: (β_Γ 在 chart 上的拉回, top_coeff(β_Γ∧(dβ_Γ)^{n-1}∧dτ))
    """
    if chart.variables != collar.chart().variables:
        raise PreconditionError(f"坐标卡 {chart.id} 的变量表与领口不一致")
    n = chart.dim // 2
    base = collar.lift(chart)
    eta = base if n == 1 else wedge(base, nwedge(ext_d(base), n - 1))
    return base, top_coeff(wedge(eta, d_function(chart, var(collar.variable))))


# ---------------------------------------------------------------------------
# Ω_f 与领口恒等式
# ---------------------------------------------------------------------------

def omega_f(f, lam: DifferentialForm, omega: DifferentialForm) -> DifferentialForm:
    """
    Ω_f = f·ω^n - n·df∧λ∧ω^{n-1}
    :raise DegreeError: 坐标卡维数为奇数或形式次数不对
    """
    chart = lam.chart
    if chart.dim % 2:
        raise DegreeError(f"Ω_f 需要偶数维坐标卡，{chart.id} 为 {chart.dim} 维")
    if lam.degree != 1 or omega.degree != 2:
        raise DegreeError("Ω_f 需要 1 形式 λ 与 2 形式 ω")
    n = chart.dim // 2
    f = as_expr(f)
    first = nwedge(omega, n).scale(f)
    dfl = wedge(d_function(chart, f), lam)
    second = dfl if n == 1 else wedge(dfl, nwedge(omega, n - 1))
    return first - second.scale(n)


def omega_f_identity_residual(f, collar: CollarPresentation, count: int = 1000, seed: int = 0) -> float:
    """
    领口上 λ = (1 - τ²)λ_Γ 时
    top(Ω_f) = n(1-τ²)^{n-1}(2τf + f′(1-τ²))·coeff(λ_Γ∧ω_Γ^{n-1}∧dτ)
    :param f: 领口变量的函数
    :return: 随机领口样本上的最大绝对残差
    """
    chart = collar.chart()
    n = chart.dim // 2
    tau = var(collar.variable)
    f = as_expr(f)
    lam_gamma, base_top = _collar_base(collar, chart)
    lam = lam_gamma.scale(ONE - power(tau, 2))
    lhs = top_coeff(omega_f(f, lam, ext_d(lam)))
    one_minus = ONE - power(tau, 2)
    bracket = 2 * tau * f + diff(f, collar.variable) * one_minus
    rhs = n * (power(one_minus, n - 1) if n > 1 else ONE) * bracket * base_top
    env = _random_env(chart, count, seed)
    residual = float(np.max(np.abs(_values(lhs, env) - _values(rhs, env))))
    debug(f"Ω_f 领口恒等式残差 {residual:.3e} ({count} 点)")
    return residual


def collar_volume_residual(germ: ContactGerm, count: int = 1000, seed: int = 0) -> float:
    """
    β = b(τ)β_Γ，G = e^{-f²}b 时 top((d(e^{-f²}β))^n) = -n G^{n-1} G′·coeff(β_Γ∧(dβ_Γ)^{n-1}∧dτ)；
    f = τ、b = 1 时右端为 2nf e^{-nf²}·coeff(…)
    :raise PreconditionError: 接触芽没有领口数据
    """
    collar = germ.collar
    if collar is None:
        raise PreconditionError("接触芽没有领口数据")
    chart = germ.chart
    n = chart.dim // 2
    _, base_top = _collar_base(collar, chart)
    lam_out = germ.beta.scale(exp(-power(germ.f, 2)))
    lhs = top_coeff(nwedge(ext_d(lam_out), n))
    G = exp(-power(germ.f, 2)) * germ.scale
    dG = diff(G, collar.variable)
    rhs = -n * (power(G, n - 1) if n > 1 else ONE) * dG * base_top
    env = _random_env(chart, count, seed)
    residual = float(np.max(np.abs(_values(lhs, env) - _values(rhs, env))))
    debug(f"e^(-f²) 领口恒等式残差 {residual:.3e} ({count} 点)")
    return residual


# ---------------------------------------------------------------------------
# 折叠 -> 接触芽
# ---------------------------------------------------------------------------

def fold_to_germ(fp: FoldedPresentation, eps=None, grid: Optional[SampleGrid] = None,
                 tol: Optional[float] = None) -> ContactGerm:
    """
    α = f dt + λ，其中 f = F(±h)，F 为 lemma41-f 剖面，符号取使 R₊ = {f > 0}
    :param fp: 折叠表示
    :param eps: 领口半宽，默认取配置
    :raise PreconditionError: fp 不是折叠辛的或 λ 不是正接触型
    :raise CertificationError: Ω_f 裕度不为正
    """
    chart = fp.chart
    grid = grid or SampleGrid.default(chart)
    info(f"fold_to_germ 开始 [{chart.id}]")
    reports = fp.certify(grid, tol)
    if not reports["folded"].passed:
        raise PreconditionError(f"输入不是折叠辛形式: {'; '.join(reports['folded'].notes) or reports['folded'].verdict}")
    if not reports["positive-contact-type"].passed:
        raise PreconditionError("λ 在折叠上不是正接触型，α = f dt + λ 不可能是接触形式")
    sign = reports["folded"].details["sign_relation"]
    profile = make_profile(LEMMA41_F, variable="tau", **({} if eps is None else {"eps": eps}))
    arg = fp.fold.h if sign > 0 else -fp.fold.h
    f = profile.expr(arg)
    scale = ONE
    if fp.collar is not None:
        scale = ONE - power(var(fp.collar.variable), 2)
    germ = ContactGerm(chart, f, fp.lam, collar=fp.collar, scale=scale)
    report = germ.certify(grid, tol)
    if not report.passed:
        raise CertificationError(f"Ω_f 裕度不为正: {report.min_margin:.3e}", report)
    # 分割集与折叠一致
    identities = {}
    samples = fold_samples(fp.fold, grid)
    if _size(samples):
        identities["dividing_set_residual"] = float(np.max(np.abs(_values(f, samples))))
    if fp.collar is not None:
        identities["omega_f_identity"] = omega_f_identity_residual(profile.expr(var(fp.collar.variable)), fp.collar)
    germ.normalization.update(identities)
    _require_identities("fold_to_germ", chart, identities)
    info(f"fold_to_germ 完成 [{chart.id}]: 接触裕度 {report.min_margin:.6g}")
    return germ


# ---------------------------------------------------------------------------
# 接触芽 -> 折叠
# ---------------------------------------------------------------------------

def normalize_contact_pair(g: ContactGerm, eps=None, delta=None, eps_prime=None,
                           grid: Optional[SampleGrid] = None, tol: Optional[float] = None) -> ContactGerm:
    """
    (f̃, β̃) = (f/μ, β/μ)，μ = M(f)，M 为 lemma42-mu 剖面。检验：
    (1) |f| ≥ ε′ + δ/8 处 df̃ = 0 且 sign(f̃)·(dβ̃)^n > 0；(2) |f| ≤ ε′ - δ/8 处 f̃ = f/ε′；
    (3) f̃ 沿领口变量单调不减
    :raise CertificationError: 任一性质不成立，附带见证点
    """
    chart = g.chart
    grid = grid or SampleGrid.default(chart)
    params = {k: v for k, v in (("eps", eps), ("delta", delta), ("eps_prime", eps_prime)) if v is not None}
    mu_profile = make_profile(LEMMA42_MU, variable="tau", **params)
    p = mu_profile.params
    a = float(p["eps_prime"] - p["delta"] / 8)
    b = float(p["eps_prime"] + p["delta"] / 8)
    mu = mu_profile.expr(g.f)
    f_new = g.f / mu
    beta_new = g.beta.scale(ONE / mu)
    n = chart.dim // 2
    info(f"normalize_contact_pair 开始 [{chart.id}]: ε={p['eps']}, δ={p['delta']}, ε′={p['eps_prime']}")

    env = grid.env()
    fv = _values(g.f, env)
    checks = {}
    # (1)
    off = np.abs(fv) >= b
    if np.any(off):
        sub = {k: v[off] for k, v in env.items()}
        grad = np.stack([_values(diff(f_new, v), sub) for v in chart.variables], axis=1)
        flat = np.max(np.abs(grad), axis=1)
        if np.any(flat > IDENTITY_TOLERANCE):
            raise CertificationError("领口外 df̃ ≠ 0",
                                     _fail("normalize", chart, sub, IDENTITY_TOLERANCE - flat, "领口外 df̃ ≠ 0"))
        signed = np.sign(_values(f_new, sub)) * _top_power(beta_new, n, sub)
        if not np.all(signed > 0):
            raise CertificationError("领口外 ±(dβ̃)^n 不为正",
                                     _fail("normalize", chart, sub, signed, "领口外 ±(dβ̃)^n 不为正"))
        checks["off_collar_samples"] = int(np.count_nonzero(off))
    # (2)
    inner = np.abs(fv) <= a
    if np.any(inner):
        sub = {k: v[inner] for k, v in env.items()}
        dev = np.abs(_values(f_new, sub) - fv[inner] / float(p["eps_prime"]))
        if np.any(dev > IDENTITY_TOLERANCE):
            raise CertificationError("内领口上 f̃ ≠ f/ε′",
                                     _fail("normalize", chart, sub, IDENTITY_TOLERANCE - dev, "内领口上 f̃ ≠ f/ε′"))
        checks["inner_collar_samples"] = int(np.count_nonzero(inner))
    checks["C"] = float(1 / p["eps_prime"])
    # (3) 一维：x/M(x) 单调不减
    x = mu_profile.sample()
    m = mu_profile.evaluate(x)
    slope = (m - x * mu_profile.evaluate_derivative(x)) / m ** 2
    if np.any(slope < -1e-12):
        raise CertificationError("f̃′ < 0", _fail("normalize", Chart("profile", ("x",), ((x[0], x[-1]),)),
                                                 {"x": x}, slope, "f̃′ < 0"))
    checks["slope_min"] = float(np.min(slope))
    if g.collar is not None:
        collar_slope = _values(diff(f_new, g.collar.variable), env)
        if np.any(collar_slope < -1e-12):
            raise CertificationError("沿领口变量 f̃′ < 0",
                                     _fail("normalize", chart, env, collar_slope, "沿领口变量 f̃′ < 0"))
        checks["collar_slope_min"] = float(np.min(collar_slope))

    out = ContactGerm(chart, f_new, beta_new, collar=g.collar, scale=g.scale / mu,
                      normalization={**g.normalization, **checks,
                                     "eps": str(p["eps"]), "delta": str(p["delta"]), "eps_prime": str(p["eps_prime"])})
    report = out.certify(grid, tol)
    if not report.passed:
        raise CertificationError("规范化后的芽不满足接触条件", report)
    info(f"normalize_contact_pair 完成 [{chart.id}]: C = {checks['C']:.6g}")
    return out


def germ_to_fold(g: ContactGerm, grid: Optional[SampleGrid] = None, tol: Optional[float] = None) -> FoldedPresentation:
    """
    λ = e^{-f²}β，ω = dλ 以 {f = 0} 为折叠
    :raise PreconditionError: {f = 0} 在网格上为空
    :raise CertificationError: ω 不是折叠辛的，或 ι*λ 在折叠上不是正接触形式
    """
    chart = g.chart
    grid = grid or SampleGrid.default(chart)
    info(f"germ_to_fold 开始 [{chart.id}]")
    lam_out = g.beta.scale(exp(-power(g.f, 2)))
    fp = FoldedPresentation(lam_out, FoldSpec(g.f))
    reports = fp.certify(grid, tol)
    if not reports["folded"].passed:
        raise CertificationError("dλ 不是折叠辛形式（折叠不横截）", reports["folded"])
    if not reports["positive-contact-type"].passed:
        raise CertificationError("ι*(gβ) 在折叠上不是正接触形式", reports["positive-contact-type"])

    n = chart.dim // 2
    env = grid.env()
    fv = _values(g.f, env)
    # f ≡ ±1 的区域：|f| = 1 且 df = 0
    off = np.abs(np.abs(fv) - 1.0) <= 1e-12
    if np.any(off):
        grad = np.stack([_values(diff(g.f, v), env) for v in chart.variables], axis=1)
        off &= np.max(np.abs(grad), axis=1) <= IDENTITY_TOLERANCE
    if np.any(off):
        sub = {k: v[off] for k, v in env.items()}
        lhs = _top_power(lam_out, n, sub)
        rhs = np.exp(-n) * _top_power(g.beta, n, sub)
        fp.identities["off_collar"] = float(np.max(np.abs(lhs - rhs)))
    samples = fold_samples(fp.fold, grid)
    pulled = lam_out.evaluate(samples, strict=False)
    direct = g.beta.evaluate(samples, strict=False)
    fp.identities["fold_restriction"] = max(
        (float(np.max(np.abs(np.asarray(pulled.get(k, 0.0)) - np.asarray(direct.get(k, 0.0)))))
         for k in set(pulled) | set(direct)), default=0.0)
    if g.collar is not None:
        fp.identities["collar_volume"] = collar_volume_residual(g)
    _require_identities("germ_to_fold", chart, fp.identities)
    info(f"germ_to_fold 完成 [{chart.id}]: 折叠裕度 {reports['folded'].min_margin:.6g}")
    return fp


def ideal_liouville_pieces(g: ContactGerm) -> IdealPieces:
    """
    λ± = (1/f)β 分别在 R± = {±f > 0} 上使用
    """
    inv = simplify(ONE / g.f)
    lam = g.beta if inv.is_one() else g.beta.scale(inv)
    return IdealPieces(g.f, lam, lam)


def ideal_alignment(g: ContactGerm, count: int = 200, seed: int = 0, margin: float = 0.1) -> dict:
    """
    在 R± 的随机点上比较特征叶状结构方向与 X_{λ±} 的方向
    :return: {"plus": R₊ 上的单位向量内积, "minus": R₋ 上的内积}
    :raise PreconditionError: 采样点落在 {f = 0} 上
    """
    chart = g.chart
    pieces = ideal_liouville_pieces(g)
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in chart.box])
    hi = np.array([b[1] for b in chart.box])
    width = hi - lo
    pts = rng.uniform(lo + margin * width, hi - margin * width, size=(4 * count, chart.dim))
    env = {v: pts[:, i] for i, v in enumerate(chart.variables)}
    fv = _values(g.f, env)
    if np.any(fv == 0):
        raise PreconditionError("采样点落在 {f = 0} 上")
    Y, singular, _ = characteristic_directions(g.f, g.beta, env)
    X, x_singular = liouville_values(pieces.lam_plus, env)
    keep = ~singular & ~x_singular & np.all(np.isfinite(Y), axis=1)
    norms = np.linalg.norm(X, axis=1)
    keep &= norms > 0
    with np.errstate(invalid='ignore', divide='ignore'):
        dots = np.einsum('ij,ij->i', Y, X / norms[:, None])
    plus = dots[keep & (fv > 0)][:count]
    minus = dots[keep & (fv < 0)][:count]
    debug(f"理想 Liouville 方向比较: R₊ {plus.size} 点, R₋ {minus.size} 点")
    return {"plus": plus, "minus": minus}


# ---------------------------------------------------------------------------
# 往返
# ---------------------------------------------------------------------------

def _stack(chart: Chart, env: Mapping[str, np.ndarray]) -> np.ndarray:
    return np.stack([env[v] for v in chart.variables], axis=1) if _size(env) else np.zeros((0, chart.dim))


def hausdorff_distance(a: np.ndarray, b: np.ndarray, block: int = 1024) -> float:
    """
    两个点云的 Hausdorff 距离，按块计算避免大矩阵
    """
    if not len(a) and not len(b):
        return 0.0
    if not len(a) or not len(b):
        return float('inf')

    def directed(src, dst):
        blocks = [src[i:i + block] for i in range(0, len(src), block)]
        mins = parallel_map(lambda chunk: np.min(np.linalg.norm(chunk[:, None, :] - dst[None, :, :], axis=2), axis=1),
                            blocks)
        return float(max(float(np.max(m)) for m in mins))

    return max(directed(a, b), directed(b, a))


def roundtrip_fold(fp: FoldedPresentation, eps=None, delta=None, eps_prime=None,
                   grid: Optional[SampleGrid] = None, tol: Optional[float] = None) -> RoundtripReport:
    """
    germ_to_fold(normalize_contact_pair(fold_to_germ(fp)))，比较折叠样本（Hausdorff 距离 < 2 倍网格步长）
    和折叠外的 ω^n 符号
    """
    chart = fp.chart
    grid = grid or SampleGrid.default(chart)
    germ = fold_to_germ(fp, eps, grid, tol)
    normalized = normalize_contact_pair(germ, eps, delta, eps_prime, grid, tol)
    out = germ_to_fold(normalized, grid, tol)

    a = _stack(chart, fold_samples(fp.fold, grid))
    b = _stack(chart, fold_samples(out.fold, grid))
    distance = hausdorff_distance(a, b)
    bound = 2.0 * float(np.max(grid.spacing()))

    env = grid.env()
    n = chart.dim // 2
    h = _values(fp.fold.h, env)
    fo = _values(out.fold.h, env)
    top_in = _top_power(fp.lam, n, env)
    top_out = _top_power(out.lam, n, env)
    mask = (h != 0) & (fo != 0) & (top_in != 0) & (top_out != 0) & np.isfinite(top_in) & np.isfinite(top_out)
    mismatches = int(np.count_nonzero(np.sign(top_in[mask]) != np.sign(top_out[mask])))
    notes = []
    if mismatches:
        notes.append(f"{mismatches} 个折叠外样本的 ω^n 符号改变")
    if distance >= bound:
        notes.append(f"折叠样本的 Hausdorff 距离 {distance:.3e} 超过 {bound:.3e}")
    verdict = PASS if distance < bound and not mismatches else FAIL
    info(f"roundtrip [{chart.id}]: {verdict}, Hausdorff {distance:.3e}, 符号不一致 {mismatches}")
    return RoundtripReport(verdict, distance, bound, mismatches, int(np.count_nonzero(mask)),
                           stages={"fold_to_germ": germ.report, "normalize": normalized.report,
                                   "germ_to_fold": out.reports.get("folded"),
                                   "germ_to_fold_contact_type": out.reports.get("positive-contact-type"),
                                   "identities": out.identities},
                           notes=notes)
