"""
内置模型生成器：Darboux 折叠模型、球面上的标准折叠辛结构、凸球面、理想完备化领口、
Liouville 配边的双倍与非对称双倍的桥区，以及折叠领口和分割集领口的标准型。
每个生成器输出坐标卡、形式、折叠定义和预期的检验结论（contents()），供清单和命令行使用。
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from core.atlas import BAND, LOWER, UPPER, SphereAtlas, band_variables, plane_variables, sphere_atlas
from core.errors import ChartError, PreconditionError, ProfileError
from core.exprcore import ONE, ScalarExpr, ZERO, add, as_expr, const, evaluate, exp, ln, power, simplify, substitute, var
from core.forms import (
    Chart, ChartMap, DifferentialForm, VectorField, d_function, ext_d, interior, nwedge, pullback, top_coeff, wedge,
)
from core.profiles import BRIDGE_F, IDEAL_U, ProfileFn, make_profile, verify_profile
from core.structures import FoldSpec, SampleGrid, StructureReport, characteristic_field, check_contact
from core.utils.logger import debug, info

FOLD_COLLAR = "fold"
LIOUVILLE_COLLAR = "liouville"
DIVIDING_COLLAR = "dividing"
COLLAR_KINDS = (FOLD_COLLAR, LIOUVILLE_COLLAR, DIVIDING_COLLAR)

# 非对称双倍粘合 ψ̄*λ₊ = λ₋ 的允许残差
GLUING_TOLERANCE = 1e-10


# ---------------------------------------------------------------------------
# 公共类型
# ---------------------------------------------------------------------------

@dataclass
class ModelContents:
    """
    模型导出到清单的内容。folds 的值为 (坐标卡 id, FoldSpec)；scalars 为 (坐标卡 id, 表达式)；
    germs 为 (坐标卡 id, f 的标量名, β 的形式名[, scale 的标量名])；collars 为 (领口坐标卡 id, CollarPresentation, α_Γ 的形式名)；
    checks 为预期检验列表
    """
    name: str
    charts: dict = field(default_factory=dict)
    forms: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)
    maps: dict = field(default_factory=dict)
    folds: dict = field(default_factory=dict)
    scalars: dict = field(default_factory=dict)
    germs: dict = field(default_factory=dict)
    collars: dict = field(default_factory=dict)
    profiles: dict = field(default_factory=dict)
    grids: dict = field(default_factory=dict)
    points: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add_chart(self, chart: Chart):
        self.charts[chart.id] = chart

    def expect(self, kind: str, expect: str, **refs):
        self.checks.append({"kind": kind, "expect": expect, **refs})


@dataclass
class CollarPresentation:
    """
    领口标准型：Γ 坐标卡（2n-1 维）上的接触形式 α_Γ，加上一个领口变量。
    fold / dividing 领口的坐标顺序为 (Γ 变量, τ)，liouville 领口为 (s, Γ 变量)。
    """
    gamma: Chart
    alpha: DifferentialForm
    variable: str = "tau"
    interval: tuple = (-0.5, 0.5)
    kind: str = FOLD_COLLAR

    def __post_init__(self):
        if self.gamma.dim % 2 == 0:
            raise ChartError(f"Γ 坐标卡必须是奇数维: {self.gamma.id} 为 {self.gamma.dim} 维")
        if self.alpha.chart != self.gamma or self.alpha.degree != 1:
            raise ChartError("α_Γ 必须是 Γ 坐标卡上的 1 形式")
        if self.variable in self.gamma.variables:
            raise ChartError(f"领口变量 {self.variable} 与 Γ 的变量重名")
        if self.kind not in COLLAR_KINDS:
            raise ChartError(f"未知的领口类型: {self.kind}")
        lo, hi = (float(v) for v in self.interval)
        if not lo < hi:
            raise ChartError(f"领口区间退化: [{lo}, {hi}]")
        self.interval = (lo, hi)

    @property
    def n(self) -> int:
        return (self.gamma.dim + 1) // 2

    def chart(self, chart_id: Optional[str] = None, orientation: int = 1) -> Chart:
        if self.kind == LIOUVILLE_COLLAR:
            variables = (self.variable,) + self.gamma.variables
            box = (self.interval,) + self.gamma.box
        else:
            variables = self.gamma.variables + (self.variable,)
            box = self.gamma.box + (self.interval,)
        return Chart(chart_id or f"{self.gamma.id}_{self.kind}", variables, box, orientation)

    def lift(self, chart: Optional[Chart] = None) -> DifferentialForm:
        """
        α_Γ 沿投影拉回到领口坐标卡
        """
        return pullback(ChartMap.projection(chart or self.chart(), self.gamma), self.alpha)

    def certify(self, grid: Optional[SampleGrid] = None, tol: Optional[float] = None) -> StructureReport:
        return check_contact(self.alpha, grid or SampleGrid.default(self.gamma), tol)

    def to_dict(self) -> dict:
        return {"gamma": self.gamma.id, "variable": self.variable, "interval": list(self.interval), "kind": self.kind}


def standard_contact_chart(n: int, chart_id: str = "gamma", half_width: float = 1.0) -> tuple:
    """
    2n-1 维标准接触坐标卡 (x1, x2, y2, …, xn, yn)，α = dx1 - Σ_{j≥2} y_j dx_j
    :return: (Chart, α)
    """
    if n < 1:
        raise ChartError(f"半维数必须 ≥ 1: {n}")
    variables = ("x1",) + plane_variables(n)[2:]
    chart = Chart(chart_id, variables, tuple((-half_width, half_width) for _ in variables))
    terms = {"x1": "1"}
    for j in range(2, n + 1):
        terms[f"x{j}"] = f"-y{j}"
    return chart, DifferentialForm.from_named(chart, 1, terms)


# ---------------------------------------------------------------------------
# Darboux 折叠模型
# ---------------------------------------------------------------------------

@dataclass
class DarbouxModel:
    n: int
    chart: Chart
    omega: DifferentialForm
    lam_tilde: DifferentialForm
    lam: DifferentialForm
    fold: FoldSpec
    gamma: Chart
    alpha_gamma: DifferentialForm
    inclusion: ChartMap
    liouville_lam: VectorField
    liouville_lam_tilde: VectorField

    def grid(self, points: Optional[int] = None) -> SampleGrid:
        return SampleGrid.default(self.chart, points)

    def contents(self) -> ModelContents:
        out = ModelContents("darboux", meta={"n": self.n})
        out.add_chart(self.chart)
        out.add_chart(self.gamma)
        out.forms.update(omega=self.omega, lam=self.lam, lam_tilde=self.lam_tilde, alpha_gamma=self.alpha_gamma)
        out.fields.update(X_lam=self.liouville_lam, X_lam_tilde=self.liouville_lam_tilde)
        out.maps["inclusion"] = self.inclusion
        out.folds["fold"] = (self.chart.id, self.fold)
        out.grids.update(main=self.grid(), gamma=SampleGrid.default(self.gamma))
        out.expect("folded", "pass", form="omega", fold="fold", grid="main")
        out.expect("positive-contact-type", "pass", form="lam", fold="fold", grid="main")
        out.expect("positive-contact-type", "fail", form="lam_tilde", fold="fold", grid="main")
        out.expect("liouville", "pass", form="lam", field="X_lam", grid="main")
        out.expect("liouville", "pass", form="lam_tilde", field="X_lam_tilde", grid="main")
        out.expect("contact", "pass", form="alpha_gamma", grid="gamma")
        return out


def darboux_folded(n: int = 2) -> DarbouxModel:
    """
    ℝ^{2n} 上的折叠 Darboux 模型 ω = y1 dx1∧dy1 + Σ_{j≥2} dx_j∧dy_j，折叠 {y1 = 0}。
    λ̃ = -(y1²/2)dx1 - Σ y_j dx_j 与 λ = dx1 + λ̃ 都是 ω 的原形式，只有 λ 是正接触型。
    """
    if n < 1:
        raise ChartError(f"半维数必须 ≥ 1: {n}")
    variables = plane_variables(n)
    chart = Chart("darboux", variables, tuple((-1.0, 1.0) for _ in variables))
    omega_terms = {("x1", "y1"): "y1"}
    tilde_terms = {"x1": "-y1^2/2"}
    lam_terms = {"x1": "1 - y1^2/2"}
    for j in range(2, n + 1):
        omega_terms[(f"x{j}", f"y{j}")] = "1"
        tilde_terms[f"x{j}"] = f"-y{j}"
        lam_terms[f"x{j}"] = f"-y{j}"
    omega = DifferentialForm.from_named(chart, 2, omega_terms)
    lam_tilde = DifferentialForm.from_named(chart, 1, tilde_terms)
    lam = DifferentialForm.from_named(chart, 1, lam_terms)

    gamma, alpha_gamma = standard_contact_chart(n, "darboux_gamma")
    inclusion = ChartMap.from_named(gamma, chart, {v: ("0" if v == "y1" else v) for v in variables})

    field_tilde = {"y1": "y1/2"}
    field_lam = {"y1": "(y1^2 - 2)/(2*y1)"}
    for j in range(2, n + 1):
        field_tilde[f"y{j}"] = f"y{j}"
        field_lam[f"y{j}"] = f"y{j}"
    info(f"生成 Darboux 折叠模型 n={n}")
    return DarbouxModel(
        n=n, chart=chart, omega=omega, lam_tilde=lam_tilde, lam=lam, fold=FoldSpec(var("y1")),
        gamma=gamma, alpha_gamma=alpha_gamma, inclusion=inclusion,
        liouville_lam=VectorField.from_named(chart, field_lam),
        liouville_lam_tilde=VectorField.from_named(chart, field_tilde),
    )


# ---------------------------------------------------------------------------
# 领口标准型
# ---------------------------------------------------------------------------

@dataclass
class CollarModel:
    """
    折叠领口：λ = (1 - τ²)λ_Γ，折叠 {τ = 0}；分割集领口：f = τ，β = β_Γ
    """
    collar: CollarPresentation
    chart: Chart
    lam: DifferentialForm
    fold: FoldSpec
    f: ScalarExpr
    beta: DifferentialForm

    def grid(self, points: Optional[int] = None) -> SampleGrid:
        return SampleGrid.default(self.chart, points)

    def contents(self) -> ModelContents:
        out = ModelContents(f"{self.collar.kind}-collar", meta={"n": self.collar.n, "collar": self.collar.to_dict()})
        out.add_chart(self.chart)
        out.add_chart(self.collar.gamma)
        out.forms.update(alpha_gamma=self.collar.alpha, beta=self.beta)
        out.folds["fold"] = (self.chart.id, self.fold)
        out.collars["collar"] = (self.chart.id, self.collar, "alpha_gamma")
        out.grids.update(main=self.grid(), gamma=SampleGrid.default(self.collar.gamma))
        out.expect("contact", "pass", form="alpha_gamma", grid="gamma")
        if self.collar.kind == FOLD_COLLAR:
            out.forms["lam"] = self.lam
            out.forms["omega"] = ext_d(self.lam)
            out.expect("folded", "pass", form="omega", fold="fold", grid="main")
            out.expect("positive-contact-type", "pass", form="lam", fold="fold", grid="main")
        else:
            out.scalars["f"] = (self.chart.id, self.f)
            out.germs["germ"] = (self.chart.id, "f", "beta")
        return out


def _collar_model(n: int, kind: str, eps: float, half: float) -> CollarModel:
    gamma, alpha = standard_contact_chart(n, f"gamma_{kind}")
    collar = CollarPresentation(gamma, alpha, "tau", (-half, half), kind)
    chart = collar.chart(f"collar_{kind}")
    tau = var("tau")
    lam_gamma = collar.lift(chart)
    lam = lam_gamma.scale(ONE - power(tau, 2))
    debug(f"领口模型 {kind}: n={n}, τ ∈ [{-half}, {half}], ε={eps}")
    return CollarModel(collar, chart, lam, FoldSpec(tau), tau, lam_gamma)


def fold_collar(n: int = 2, eps: float = 0.5) -> CollarModel:
    """
    折叠附近的标准型 Γ×(-1, 1)_τ 上 λ = (1 - τ²)λ_Γ，坐标盒 |τ| ≤ 0.9 包含 ε 领口之外的部分
    """
    if not 0 < eps < 0.9:
        raise PreconditionError(f"领口半宽必须在 (0, 0.9) 内: {eps}")
    return _collar_model(n, FOLD_COLLAR, eps, 0.9)


def dividing_collar(n: int = 2, eps: float = 0.5) -> CollarModel:
    """
    分割集附近的接触芽标准型 f = τ，β = β_Γ，|τ| ≤ ε
    """
    if not 0 < eps < 1:
        raise PreconditionError(f"领口半宽必须在 (0, 1) 内: {eps}")
    return _collar_model(n, DIVIDING_COLLAR, eps, eps)


# ---------------------------------------------------------------------------
# 球面
# ---------------------------------------------------------------------------

@dataclass
class FoldedSphere:
    n: int
    atlas: SphereAtlas
    plane_omega: DifferentialForm
    plane_lam: DifferentialForm
    omega: dict
    lam: dict
    fold: FoldSpec
    equator: Chart
    equator_inclusion: ChartMap
    equator_alpha: DifferentialForm

    def grid(self, chart_id: str, points: Optional[int] = None) -> SampleGrid:
        return SampleGrid.default(self.atlas.chart(chart_id), points, inset=0.1)

    def contents(self) -> ModelContents:
        out = ModelContents("sphere", meta={"n": self.n})
        for chart in self.atlas.charts.values():
            out.add_chart(chart)
            out.forms[f"omega_{chart.id}"] = self.omega[chart.id]
            out.forms[f"lam_{chart.id}"] = self.lam[chart.id]
            out.grids[chart.id] = self.grid(chart.id)
            out.maps[f"embed_{chart.id}"] = self.atlas.embeddings[chart.id]
        out.add_chart(self.atlas.ambient)
        out.add_chart(self.equator)
        out.forms["alpha_equator"] = self.equator_alpha
        out.maps["equator_inclusion"] = self.equator_inclusion
        out.grids["equator"] = SampleGrid.default(self.equator, inset=0.1)
        out.folds["fold"] = (BAND, self.fold)
        out.expect("symplectic", "pass", form=f"omega_{UPPER}", grid=UPPER)
        out.expect("symplectic", "pass", form=f"omega_{LOWER}", grid=LOWER)
        out.expect("folded", "pass", form=f"omega_{BAND}", fold="fold", grid=BAND)
        out.expect("positive-contact-type", "pass", form=f"lam_{BAND}", fold="fold", grid=BAND)
        out.expect("contact", "pass", form="alpha_equator", grid="equator")
        return out


def _plane_forms(n: int, plane: Chart) -> tuple:
    omega_terms = {}
    lam_terms = {}
    for j in range(1, n + 1):
        omega_terms[(f"x{j}", f"y{j}")] = "1"
        lam_terms[f"x{j}"] = f"-y{j}/2"
        lam_terms[f"y{j}"] = f"x{j}/2"
    return DifferentialForm.from_named(plane, 2, omega_terms), DifferentialForm.from_named(plane, 1, lam_terms)


def folded_sphere(n: int = 1) -> FoldedSphere:
    """
    S^{2n} ⊂ ℝ^{2n+1} 上的标准折叠辛结构 ω = π*(Σ dx_j∧dy_j)，原形式 λ = π*(½Σ(x dy - y dx))，
    折叠为赤道 {z = 0}（带状卡上 wz = 0）
    """
    atlas = sphere_atlas(n)
    plane_omega, plane_lam = _plane_forms(n, atlas.plane)
    omega = atlas.pullback_from_plane(plane_omega)
    lam = atlas.pullback_from_plane(plane_lam)
    band = atlas.chart(BAND)
    wvars = band_variables(n)
    eq_vars = wvars[:-1]
    provisional = Chart("equator", eq_vars, tuple((-1.0, 1.0) for _ in eq_vars))
    comps = {v: (var(v) if v in eq_vars else ZERO) for v in wvars}
    alpha = pullback(ChartMap.from_named(provisional, band, comps), lam[BAND])
    # 赤道卡取使 ι*λ 为正接触形式的定向
    base_point = {v: np.array([0.1]) for v in eq_vars}
    n_eq = provisional.dim // 2
    eta = alpha if n_eq == 0 else wedge(alpha, nwedge(ext_d(alpha), n_eq))
    sign = float(np.sign(np.broadcast_to(eta.evaluate(base_point).get(tuple(range(provisional.dim)), 0.0), (1,))[0]))
    equator = provisional.with_orientation(-1 if sign < 0 else 1)
    inclusion = ChartMap.from_named(equator, band, comps)
    info(f"生成折叠球面 S^{2 * n}")
    return FoldedSphere(
        n=n, atlas=atlas, plane_omega=plane_omega, plane_lam=plane_lam, omega=omega, lam=lam,
        fold=FoldSpec(atlas.folds[BAND]), equator=equator, equator_inclusion=inclusion,
        equator_alpha=alpha.on_chart(equator),
    )


@dataclass
class ConvexSphere:
    """
    ℝ^{2n+1} 中的凸球面：α = dz + ½Σ(x dy - y dx)，X = z∂_z + ½Σ(x∂_x + y∂_y)。
    germs 给出每张球面卡上的竖直不变芽 (f, β) = (α(X), α|_Σ)
    """
    n: int
    chart: Chart
    alpha: DifferentialForm
    X: VectorField
    hypersurface: ScalarExpr
    atlas: SphereAtlas
    germs: dict
    phi: dict
    critical_points: dict

    def grid(self, chart_id: Optional[str] = None, points: Optional[int] = None) -> SampleGrid:
        if chart_id is None:
            return SampleGrid.default(self.chart, points)
        return SampleGrid.default(self.atlas.chart(chart_id), points, inset=0.1)

    def contents(self) -> ModelContents:
        out = ModelContents("convex-sphere", meta={"n": self.n, "hypersurface": "x^2 + y^2 + z^2 - 1"})
        out.add_chart(self.chart)
        out.forms["alpha"] = self.alpha
        out.fields["X"] = self.X
        out.grids["ambient"] = self.grid()
        for cid, (f, beta) in self.germs.items():
            chart = self.atlas.chart(cid)
            out.add_chart(chart)
            out.forms[f"beta_{cid}"] = beta
            out.grids[cid] = self.grid(cid)
            out.maps[f"embed_{cid}"] = self.atlas.embeddings[cid]
            out.scalars[f"f_{cid}"] = (cid, f)
            out.scalars[f"phi_{cid}"] = (cid, self.phi[cid])
            out.germs[f"germ_{cid}"] = (cid, f"f_{cid}", f"beta_{cid}")
            for k, p in enumerate(self.critical_points.get(cid, ())):
                out.points[f"critical_{cid}_{k}"] = p
        out.add_chart(self.atlas.ambient)
        out.expect("contact", "pass", form="alpha", grid="ambient")
        out.expect("contact-vector-field", "pass", form="alpha", field="X", grid="ambient")
        for cid, points in self.critical_points.items():
            out.fields[f"Y_{cid}"] = characteristic_field(self.germs[cid][1])
            out.expect("gradient-like", "pass", field=f"Y_{cid}", phi=f"phi_{cid}", grid=cid,
                       points=[f"critical_{cid}_{k}" for k in range(len(points))])
        return out


def convex_sphere(n: int = 1) -> ConvexSphere:
    """
    凸球面模型；α(X) = z，分割集为赤道，φ = -z 使特征叶状结构为梯度型
    """
    atlas = sphere_atlas(n)
    amb = atlas.ambient
    chart = Chart("contact", amb.variables, amb.box)
    terms = {"z": "1"}
    field_terms = {"z": "z"}
    for j in range(1, n + 1):
        terms[f"x{j}"] = f"-y{j}/2"
        terms[f"y{j}"] = f"x{j}/2"
        field_terms[f"x{j}"] = f"x{j}/2"
        field_terms[f"y{j}"] = f"y{j}/2"
    alpha = DifferentialForm.from_named(chart, 1, terms)
    X = VectorField.from_named(chart, field_terms)
    H = add(*(power(var(v), 2) for v in amb.variables)) - ONE
    contraction = simplify(interior(X, alpha).coeffs.get((), ZERO))
    alpha_amb = alpha.on_chart(amb)
    germs = {}
    phi = {}
    critical = {}
    for cid, chart_i in atlas.charts.items():
        embed = atlas.embeddings[cid]
        mapping = embed.mapping()
        germs[cid] = (substitute(contraction, mapping), pullback(embed, alpha_amb))
        phi[cid] = -mapping["z"]
        if cid in (UPPER, LOWER):
            critical[cid] = (chart_i.point([0.0] * chart_i.dim),)
    info(f"生成凸球面 S^{2 * n} ⊂ ℝ^{2 * n + 1}")
    return ConvexSphere(n, chart, alpha, X, H, atlas, germs, phi, critical)


# ---------------------------------------------------------------------------
# 理想完备化领口
# ---------------------------------------------------------------------------

@dataclass
class IdealCollar:
    collar: CollarPresentation
    chart: Chart
    u: ProfileFn
    lam: DifferentialForm
    omega: DifferentialForm
    expected_field: VectorField
    expected_top: ScalarExpr

    def grid(self, points: Optional[int] = None) -> SampleGrid:
        return SampleGrid.default(self.chart, points)

    def contents(self) -> ModelContents:
        out = ModelContents("ideal-collar", meta={"n": self.collar.n, "collar": self.collar.to_dict()})
        out.add_chart(self.chart)
        out.add_chart(self.collar.gamma)
        out.profiles[self.u.spline.name] = self.u
        out.forms.update(lam=self.lam, omega=self.omega, alpha0=self.collar.alpha)
        out.fields["X_expected"] = self.expected_field
        out.collars["collar"] = (self.chart.id, self.collar, "alpha0")
        out.grids.update(main=self.grid(), gamma=SampleGrid.default(self.collar.gamma))
        out.expect("symplectic", "pass", form="omega", grid="main")
        out.expect("liouville", "pass", form="lam", field="X_expected", grid="main")
        out.expect("contact", "pass", form="alpha0", grid="gamma")
        return out


def ideal_completion_collar(n: int = 2, u: Optional[ProfileFn] = None,
                            collar: Optional[CollarPresentation] = None) -> IdealCollar:
    """
    理想完备化的领口 (s, Γ) 上 λ = (1/u(s))·e^s α₀，Liouville 场为 u/(u - u′)∂_s。
    坐标盒取 s ∈ [-2ε, -ε/20]，其中 s < -ε 的部分 u ≡ 1 为圆柱端。
    :raise ProfileError: u 不满足 u(0)=0、u(-ε)=1、u′(-ε)=0、u′<0
    """
    u = u or make_profile(IDEAL_U, variable="s")
    if u.kind != IDEAL_U:
        raise ProfileError(f"理想完备化需要 ideal-u 剖面，实际 {u.kind}")
    verify_profile(u)
    eps = float(u.params["eps"])
    if collar is None:
        gamma, alpha0 = standard_contact_chart(n, "gamma_ideal")
        collar = CollarPresentation(gamma, alpha0, u.variable, (-2 * eps, -eps / 20), LIOUVILLE_COLLAR)
    if collar.kind != LIOUVILLE_COLLAR or collar.variable != u.variable:
        raise PreconditionError("理想完备化需要以剖面变量为领口变量的 liouville 领口")
    n = collar.n
    chart = collar.chart("ideal")
    s = var(collar.variable)
    uu = u.expr(s)
    du = u.derivative_expr(s)
    alpha0 = collar.lift(chart)
    lam = alpha0.scale(exp(s) / uu)
    omega = ext_d(lam)
    field_ = VectorField(chart, (uu / (uu - du),) + (ZERO,) * (chart.dim - 1))
    ds = d_function(chart, s)
    base = ds.wedge(alpha0) if n == 1 else wedge(ds.wedge(alpha0), nwedge(ext_d(alpha0), n - 1))
    expected_top = const(n) * exp(const(n) * s) * (uu - du) / power(uu, n + 1) * top_coeff(base)
    info(f"生成理想完备化领口 n={n}, ε={eps}")
    return IdealCollar(collar, chart, u, lam, omega, field_, expected_top)


# ---------------------------------------------------------------------------
# 双倍与非对称双倍
# ---------------------------------------------------------------------------

def _symplectization_chart(gamma: Chart, chart_id: str = "symp") -> Chart:
    if "s" in gamma.variables:
        raise ChartError("Γ 坐标卡不能含有变量 s")
    return Chart(chart_id, ("s",) + gamma.variables, ((-1.0, 1.0),) + gamma.box)


def _bridge_chart(gamma: Chart, profile: ProfileFn, chart_id: str, orientation: int) -> Chart:
    if "z" in gamma.variables:
        raise ChartError("Γ 坐标卡不能含有变量 z")
    lo, hi = (float(v) for v in profile.interval)
    return Chart(chart_id, ("z",) + gamma.variables, ((lo, hi),) + gamma.box, orientation)


def _graph_map(bridge: Chart, symp: Chart, profile: ProfileFn) -> ChartMap:
    """
    图 {s = f(z)}：(z, p) -> (f(z), p)
    """
    return ChartMap(bridge, symp, (profile.expr(var("z")),) + tuple(var(v) for v in bridge.variables[1:]))


@dataclass
class BridgePiece:
    side: str
    chart: Chart
    profile: ProfileFn
    graph: ChartMap
    lam: DifferentialForm
    omega: DifferentialForm
    fold: FoldSpec
    flip: ChartMap

    def grid(self, points: Optional[int] = None) -> SampleGrid:
        return SampleGrid.default(self.chart, points)


@dataclass
class DoubleCobordism:
    gamma: Chart
    alpha: DifferentialForm
    symplectization: Chart
    lam_symp: DifferentialForm
    plus: BridgePiece
    minus: Optional[BridgePiece] = None

    def contents(self) -> ModelContents:
        out = ModelContents("double", meta={"n": (self.gamma.dim + 1) // 2, "weinstein_double": self.minus is None})
        out.add_chart(self.gamma)
        out.add_chart(self.symplectization)
        out.forms.update(alpha=self.alpha, lam_symp=self.lam_symp)
        out.grids["gamma"] = SampleGrid.default(self.gamma)
        out.expect("contact", "pass", form="alpha", grid="gamma")
        for piece in (self.plus, self.minus):
            if piece is None:
                continue
            sfx = piece.side
            out.add_chart(piece.chart)
            out.profiles[piece.profile.spline.name] = piece.profile
            out.forms[f"lam_{sfx}"] = piece.lam
            out.forms[f"omega_{sfx}"] = piece.omega
            out.maps[f"graph_{sfx}"] = piece.graph
            out.maps[f"flip_{sfx}"] = piece.flip
            out.folds[f"fold_{sfx}"] = (piece.chart.id, piece.fold)
            out.grids[f"bridge_{sfx}"] = piece.grid()
            out.expect("folded", "pass", form=f"omega_{sfx}", fold=f"fold_{sfx}", grid=f"bridge_{sfx}")
            out.expect("positive-contact-type", "pass" if sfx == "plus" else "fail",
                       form=f"lam_{sfx}", fold=f"fold_{sfx}", grid=f"bridge_{sfx}")
        return out


def _bridge_piece(side: str, gamma: Chart, symp: Chart, lam_symp: DifferentialForm, profile: ProfileFn,
                  orientation: int) -> BridgePiece:
    chart = _bridge_chart(gamma, profile, f"bridge_{side}", orientation)
    graph = _graph_map(chart, symp, profile)
    lam = pullback(graph, lam_symp)
    flip = ChartMap(chart, chart, (-var("z"),) + tuple(var(v) for v in gamma.variables))
    return BridgePiece(side, chart, profile, graph, lam, ext_d(lam), FoldSpec(var("z")), flip)


def _require_bridge(profile: ProfileFn, mode: str):
    if profile.kind != BRIDGE_F or profile.params.get("mode") != mode:
        raise ProfileError(f"需要 bridge-f 剖面 (mode={mode})，实际 {profile.kind} {profile.params.get('mode')}")
    verify_profile(profile)


def double_cobordism(n: int = 2, f_plus: Optional[ProfileFn] = None, f_minus: Optional[ProfileFn] = None,
                     include_minus: bool = True, collar: Optional[CollarPresentation] = None) -> DoubleCobordism:
    """
    Liouville 配边的双倍在桥区的模型：辛化 (s, Γ) 上 λ = e^s α，桥为图 {s = f±(z)}，折叠 {z = 0}。
    ∂₊ 一侧取定向 -1（R₊ = {z > 0}，λ 为正接触型）；∂₋ 一侧取定向 +1，λ 在其折叠上不是正接触型。
    include_minus=False 给出 Weinstein 域的双倍（负端为空）。
    """
    if collar is None:
        gamma, alpha = standard_contact_chart(n, "gamma_double")
    else:
        gamma, alpha = collar.gamma, collar.alpha
    f_plus = f_plus or make_profile(BRIDGE_F, variable="z", mode="plus", name="fplus")
    _require_bridge(f_plus, "plus")
    symp = _symplectization_chart(gamma)
    lam_symp = pullback(ChartMap.projection(symp, gamma), alpha).scale(exp(var("s")))
    plus = _bridge_piece("plus", gamma, symp, lam_symp, f_plus, -1)
    minus = None
    if include_minus:
        f_minus = f_minus or make_profile(BRIDGE_F, variable="z", mode="minus", name="fminus")
        _require_bridge(f_minus, "minus")
        minus = _bridge_piece("minus", gamma, symp, lam_symp, f_minus, 1)
    info(f"生成双倍桥区模型 n={(gamma.dim + 1) // 2}，负端{'存在' if minus else '为空'}")
    return DoubleCobordism(gamma, alpha, symp, lam_symp, plus, minus)


@dataclass
class AsymmetricDouble:
    gamma: Chart
    alpha_minus: DifferentialForm
    alpha_plus: DifferentialForm
    mu: ScalarExpr
    symplectization: Chart
    lam_plus: DifferentialForm
    lam_minus: DifferentialForm
    shift: ChartMap
    bridge: Chart
    profile: ProfileFn
    graph: ChartMap
    lam0: DifferentialForm
    omega: DifferentialForm
    fold: FoldSpec
    phi: ScalarExpr
    fold_inclusion: ChartMap
    fold_form: DifferentialForm
    gluing: float = float("nan")

    def grid(self, points: Optional[int] = None) -> SampleGrid:
        return SampleGrid.default(self.bridge, points)

    def gluing_residual(self, count: int = 1000, seed: int = 0) -> float:
        """
        ψ̄*λ₊ 与 λ₋ 在辛化坐标卡随机点上的最大系数差
        """
        rng = np.random.default_rng(seed)
        chart = self.symplectization
        lo = np.array([b[0] for b in chart.box])
        hi = np.array([b[1] for b in chart.box])
        pts = rng.uniform(lo, hi, size=(count, chart.dim))
        env = {v: pts[:, i] for i, v in enumerate(chart.variables)}
        pulled = pullback(self.shift, self.lam_plus).evaluate(env)
        direct = self.lam_minus.evaluate(env)
        worst = 0.0
        for key in set(pulled) | set(direct):
            d = np.abs(np.asarray(pulled.get(key, 0.0)) - np.asarray(direct.get(key, 0.0)))
            worst = max(worst, float(np.max(d)))
        return worst

    def contents(self) -> ModelContents:
        out = ModelContents("asymmetric-double", meta={"n": (self.gamma.dim + 1) // 2,
                                                       "gluing_residual": self.gluing})
        for chart in (self.gamma, self.symplectization, self.bridge):
            out.add_chart(chart)
        out.profiles[self.profile.spline.name] = self.profile
        out.forms.update(alpha_minus=self.alpha_minus, alpha_plus=self.alpha_plus, lam_plus=self.lam_plus,
                         lam_minus=self.lam_minus, lam0=self.lam0, omega=self.omega, fold_form=self.fold_form)
        out.maps.update(shift=self.shift, graph=self.graph, fold_inclusion=self.fold_inclusion)
        out.folds["fold"] = (self.bridge.id, self.fold)
        out.scalars["phi"] = (self.bridge.id, self.phi)
        out.grids.update(bridge=self.grid(), gamma=SampleGrid.default(self.gamma),
                         symp=SampleGrid.default(self.symplectization))
        out.expect("contact", "pass", form="alpha_minus", grid="gamma")
        out.expect("pullback", "pass", map="shift", form="lam_plus", target="lam_minus", grid="symp")
        out.expect("folded", "pass", form="omega", fold="fold", grid="bridge")
        out.expect("positive-contact-type", "pass", form="lam0", fold="fold", grid="bridge")
        out.expect("folded-weinstein", "pass", form="lam0", fold="fold", grid="bridge", phi="phi")
        return out


def asymmetric_double(n: int = 2, mu="1", f: Optional[ProfileFn] = None,
                      collar: Optional[CollarPresentation] = None) -> AsymmetricDouble:
    """
    非对称双倍：α₊ = μα₋，平移 ψ̄(s, p) = (s - ln μ, p) 满足 ψ̄*(e^s α₊) = e^s α₋；
    桥区 λ₀ 为 e^s α₋ 沿图 {s = f(z)} 的拉回，f(0) = 1、f′(0) = 0、f″ < 0，折叠上的诱导形式为 e·α₋
    :param mu: Γ 上处处为正的函数（表达式或文本）
    :raise ProfileError: μ 在 Γ 的网格上非正，或 f 不满足条件
    """
    if collar is None:
        gamma, alpha_minus = standard_contact_chart(n, "gamma_asym")
    else:
        gamma, alpha_minus = collar.gamma, collar.alpha
    mu = gamma.parse(mu) if isinstance(mu, str) else as_expr(mu)
    env = SampleGrid.default(gamma).env()
    mu_vals = np.broadcast_to(np.asarray(evaluate(mu, env, strict=False), dtype=float), (len(next(iter(env.values()))),))
    if not np.all(mu_vals > 0):
        raise ProfileError(f"缩放函数 μ 必须处处为正，网格上最小值 {float(np.min(mu_vals)):.3e}")
    f = f or make_profile(BRIDGE_F, variable="z", mode="asymmetric", name="fasym")
    _require_bridge(f, "asymmetric")

    symp = _symplectization_chart(gamma)
    proj = ChartMap.projection(symp, gamma)
    alpha_plus = alpha_minus.scale(mu)
    es = exp(var("s"))
    lam_minus = pullback(proj, alpha_minus).scale(es)
    lam_plus = pullback(proj, alpha_plus).scale(es)
    shift = ChartMap(symp, symp, (simplify(var("s") - ln(mu)),) + tuple(var(v) for v in gamma.variables))

    # 定向 -1 使 R₊ = {z > 0}
    bridge = _bridge_chart(gamma, f, "bridge_asym", -1)
    graph = _graph_map(bridge, symp, f)
    lam0 = pullback(graph, lam_minus)
    inclusion = ChartMap(gamma, bridge, (ZERO,) + tuple(var(v) for v in gamma.variables))
    fold_form = pullback(inclusion, lam0)
    model = AsymmetricDouble(
        gamma=gamma, alpha_minus=alpha_minus, alpha_plus=alpha_plus, mu=mu, symplectization=symp,
        lam_plus=lam_plus, lam_minus=lam_minus, shift=shift, bridge=bridge, profile=f, graph=graph,
        lam0=lam0, omega=ext_d(lam0), fold=FoldSpec(var("z")), phi=-var("z"),
        fold_inclusion=inclusion, fold_form=fold_form,
    )
    model.gluing = model.gluing_residual()
    if not model.gluing <= GLUING_TOLERANCE:
        raise ProfileError(f"粘合 ψ̄*λ₊ = λ₋ 不成立，残差 {model.gluing:.3e}")
    info(f"生成非对称双倍模型 n={(gamma.dim + 1) // 2}, μ = {mu}, 粘合残差 {model.gluing:.3e}")
    return model


# ---------------------------------------------------------------------------
# 注册表
# ---------------------------------------------------------------------------

MODELS: dict = {
    "darboux": darboux_folded,
    "sphere": folded_sphere,
    "convex-sphere": convex_sphere,
    "fold-collar": fold_collar,
    "dividing-collar": dividing_collar,
    "ideal-collar": ideal_completion_collar,
    "double": double_cobordism,
    "asymmetric-double": asymmetric_double,
}


def build_model(name: str, n: int = 2, **params):
    """
    按名称生成模型
    :raise PreconditionError: 未知模型
    """
    builder: Optional[Callable] = MODELS.get(name)
    if builder is None:
        raise PreconditionError(f"未知模型 {name}，可选 {', '.join(MODELS)}")
    return builder(n, **params)
