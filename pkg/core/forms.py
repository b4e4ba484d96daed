"""
坐标卡上的分次外代数：外积、外微分、内乘、李导数、拉回、最高次系数。
系数表只存严格递增的指标元组，插入时做符号规范化。
"""
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from core.errors import ChartError, ChartMismatchError, DegreeError
from core.exprcore import (
    ONE, ZERO, Point, ScalarExpr, as_expr, diff, evaluate, parse_expr, simplify, substitute, to_text, var,
)


@dataclass(frozen=True)
class Chart:
    """
    命名坐标卡：有序变量表、闭坐标盒和定向（+1 表示 dx_1∧…∧dx_n 为正）
    """
    id: str
    variables: tuple
    box: tuple
    orientation: int = 1

    def __post_init__(self):
        object.__setattr__(self, 'variables', tuple(self.variables))
        object.__setattr__(self, 'box', tuple((float(lo), float(hi)) for lo, hi in self.box))
        if not self.variables:
            raise ChartError(f"坐标卡 {self.id} 没有变量")
        if len(set(self.variables)) != len(self.variables):
            raise ChartError(f"坐标卡 {self.id} 的变量名重复: {self.variables}")
        if len(self.box) != len(self.variables):
            raise ChartError(f"坐标卡 {self.id} 的坐标盒维数与变量数不一致")
        for name, (lo, hi) in zip(self.variables, self.box):
            if not lo < hi:
                raise ChartError(f"坐标卡 {self.id} 的变量 {name} 区间退化: [{lo}, {hi}]")
        if self.orientation not in (1, -1):
            raise ChartError(f"坐标卡 {self.id} 的定向必须是 ±1")

    @property
    def dim(self) -> int:
        return len(self.variables)

    def index(self, name: str) -> int:
        try:
            return self.variables.index(name)
        except ValueError:
            raise ChartError(f"坐标卡 {self.id} 没有变量 {name}")

    def coords(self) -> list:
        return [var(v) for v in self.variables]

    def parse(self, text: str, functions=None) -> ScalarExpr:
        return parse_expr(text, self.variables, functions)

    def contains(self, values: Sequence[float], tol: float = 1e-12) -> bool:
        return all(lo - tol <= v <= hi + tol for v, (lo, hi) in zip(values, self.box))

    def point(self, values: Sequence[float]) -> Point:
        values = tuple(float(v) for v in values)
        if len(values) != self.dim:
            raise ChartError(f"点的维数 {len(values)} 与坐标卡 {self.id} 的维数 {self.dim} 不一致")
        if not self.contains(values):
            raise ChartError(f"点 {values} 不在坐标卡 {self.id} 的坐标盒内")
        return Point(self.id, values)

    def with_orientation(self, orientation: int, new_id: Optional[str] = None) -> 'Chart':
        return Chart(new_id or self.id, self.variables, self.box, orientation)

    def to_dict(self) -> dict:
        return {
            "variables": list(self.variables),
            "box": [list(b) for b in self.box],
            "orientation": self.orientation,
        }

    @classmethod
    def from_dict(cls, chart_id: str, data: dict) -> 'Chart':
        return cls(chart_id, tuple(data["variables"]), tuple(tuple(b) for b in data["box"]),
                   int(data.get("orientation", 1)))


def _check_same_chart(*charts):
    first = charts[0]
    for c in charts[1:]:
        if c != first:
            raise ChartMismatchError(f"坐标卡不一致: {first.id} 与 {c.id}")


def sort_with_sign(indices: Sequence[int]):
    """
    把指标排序并返回置换符号；有重复指标时返回 (None, 0)
    """
    idx = list(indices)
    if len(set(idx)) != len(idx):
        return None, 0
    sign = 1
    # 冒泡排序统计逆序数
    for i in range(len(idx)):
        for j in range(len(idx) - 1 - i):
            if idx[j] > idx[j + 1]:
                idx[j], idx[j + 1] = idx[j + 1], idx[j]
                sign = -sign
    return tuple(idx), sign


def wedge_coefficients(a: Mapping[tuple, object], b: Mapping[tuple, object]) -> dict:
    """
    系数表外积。系数可以是 ScalarExpr，也可以是同形状的 ndarray（网格上的数值）
    """
    out = {}
    for I, ca in a.items():
        seen = set(I)
        for J, cb in b.items():
            if seen.intersection(J):
                continue
            merged, sign = sort_with_sign(I + J)
            term = ca * cb
            if sign < 0:
                term = -term
            out[merged] = out[merged] + term if merged in out else term
    return out


def interior_coefficients(components: Sequence[object], a: Mapping[tuple, object]) -> dict:
    """
    系数表内乘：(ι_X a)_{I\\i_m} += (-1)^m X_{i_m} a_I
    """
    out = {}
    for I, c in a.items():
        for m, i in enumerate(I):
            rest = I[:m] + I[m + 1:]
            term = components[i] * c
            if m % 2:
                term = -term
            out[rest] = out[rest] + term if rest in out else term
    return out


class DifferentialForm:
    """
    坐标卡上的 k 次微分形式。coeffs 把严格递增的指标元组映射到 ScalarExpr，缺省为零。
    """
    __slots__ = ('chart', 'degree', 'coeffs')

    def __init__(self, chart: Chart, degree: int, coeffs: Optional[Mapping[tuple, object]] = None):
        if not 0 <= degree <= chart.dim:
            raise DegreeError(f"次数 {degree} 超出坐标卡 {chart.id} 的维数 {chart.dim}")
        normalized = {}
        for indices, c in (coeffs or {}).items():
            indices = tuple(indices)
            if len(indices) != degree:
                raise DegreeError(f"指标 {indices} 与次数 {degree} 不一致")
            if any(not 0 <= i < chart.dim for i in indices):
                raise DegreeError(f"指标 {indices} 超出坐标卡 {chart.id} 的维数")
            key, sign = sort_with_sign(indices)
            if key is None:
                continue
            c = as_expr(c)
            if sign < 0:
                c = -c
            normalized[key] = normalized[key] + c if key in normalized else c
        self.chart = chart
        self.degree = degree
        self.coeffs = {k: v for k, v in normalized.items() if not v.is_zero()}

    # ---- 构造 ----
    @classmethod
    def zero(cls, chart: Chart, degree: int) -> 'DifferentialForm':
        return cls(chart, degree)

    @classmethod
    def function(cls, chart: Chart, expr) -> 'DifferentialForm':
        return cls(chart, 0, {(): as_expr(expr)})

    @classmethod
    def dx(cls, chart: Chart, name: str) -> 'DifferentialForm':
        return cls(chart, 1, {(chart.index(name),): ONE})

    @classmethod
    def from_named(cls, chart: Chart, degree: int, terms: Mapping[object, object], functions=None) -> 'DifferentialForm':
        """
        用变量名构造：键为变量名元组或逗号分隔的字符串，值为表达式或表达式文本
        :param chart: 坐标卡
        :param degree: 次数
        :param terms: {("x", "y"): expr} 或 {"x,y": "expr text"}
        :param functions: 解析文本时的样条注册表
        """
        coeffs = {}
        for key, value in terms.items():
            names = [s.strip() for s in key.split(',') if s.strip()] if isinstance(key, str) else list(key)
            if isinstance(value, str):
                value = parse_expr(value, chart.variables, functions)
            coeffs[tuple(chart.index(n) for n in names)] = value
        return cls(chart, degree, coeffs)

    @classmethod
    def volume(cls, chart: Chart) -> 'DifferentialForm':
        return cls(chart, chart.dim, {tuple(range(chart.dim)): as_expr(chart.orientation)})

    # ---- 查询 ----
    def component(self, indices: Sequence[int]) -> ScalarExpr:
        key, sign = sort_with_sign(indices)
        if key is None:
            return ZERO
        c = self.coeffs.get(key, ZERO)
        return -c if sign < 0 else c

    def component_named(self, names: Sequence[str]) -> ScalarExpr:
        return self.component([self.chart.index(n) for n in names])

    def is_zero(self) -> bool:
        return not self.coeffs

    def names(self, indices: tuple) -> tuple:
        return tuple(self.chart.variables[i] for i in indices)

    # ---- 运算 ----
    def __add__(self, other: 'DifferentialForm') -> 'DifferentialForm':
        _check_same_chart(self.chart, other.chart)
        if self.degree != other.degree:
            raise DegreeError(f"不同次数的形式不能相加: {self.degree} 与 {other.degree}")
        coeffs = dict(self.coeffs)
        for k, v in other.coeffs.items():
            coeffs[k] = coeffs[k] + v if k in coeffs else v
        return DifferentialForm(self.chart, self.degree, coeffs)

    def __neg__(self) -> 'DifferentialForm':
        return DifferentialForm(self.chart, self.degree, {k: -v for k, v in self.coeffs.items()})

    def __sub__(self, other: 'DifferentialForm') -> 'DifferentialForm':
        return self + (-other)

    def scale(self, factor) -> 'DifferentialForm':
        factor = as_expr(factor)
        return DifferentialForm(self.chart, self.degree, {k: factor * v for k, v in self.coeffs.items()})

    def __mul__(self, factor) -> 'DifferentialForm':
        if isinstance(factor, DifferentialForm):
            return wedge(self, factor)
        return self.scale(factor)

    def __rmul__(self, factor) -> 'DifferentialForm':
        return self.scale(factor)

    def wedge(self, other: 'DifferentialForm') -> 'DifferentialForm':
        return wedge(self, other)

    def map_coeffs(self, fn) -> 'DifferentialForm':
        return DifferentialForm(self.chart, self.degree, {k: fn(v) for k, v in self.coeffs.items()})

    def simplified(self) -> 'DifferentialForm':
        return self.map_coeffs(simplify)

    def on_chart(self, chart: Chart) -> 'DifferentialForm':
        """
        换到变量表相同的另一张卡（例如只改定向或坐标盒）
        """
        if chart.variables != self.chart.variables:
            raise ChartMismatchError(f"变量表不同，不能换卡: {self.chart.id} -> {chart.id}")
        return DifferentialForm(chart, self.degree, self.coeffs)

    # ---- 数值 ----
    def evaluate(self, env: Mapping[str, np.ndarray], strict: bool = True) -> dict:
        return {k: evaluate(v, env, strict) for k, v in self.coeffs.items()}

    def evaluate_at(self, point: Point) -> dict:
        env = point.bindings(self.chart.variables)
        return {k: float(evaluate(v, env)) for k, v in self.coeffs.items()}

    # ---- 序列化 ----
    def to_dict(self) -> dict:
        return {
            "chart": self.chart.id,
            "degree": self.degree,
            "coeffs": {",".join(self.names(k)): to_text(v) for k, v in sorted(self.coeffs.items())},
        }

    def __repr__(self):
        if not self.coeffs:
            return f"DifferentialForm({self.chart.id}, {self.degree}, 0)"
        parts = []
        for k, v in sorted(self.coeffs.items()):
            basis = "∧".join(f"d{n}" for n in self.names(k))
            parts.append(f"({to_text(v)}){basis}" if basis else to_text(v))
        return f"DifferentialForm({self.chart.id}: {' + '.join(parts)})"


@dataclass(frozen=True)
class VectorField:
    """
    坐标卡上的向量场，每个坐标一个分量
    """
    chart: Chart
    components: tuple

    def __post_init__(self):
        comps = tuple(as_expr(c) for c in self.components)
        if len(comps) != self.chart.dim:
            raise DegreeError(f"向量场分量数 {len(comps)} 与坐标卡 {self.chart.id} 的维数 {self.chart.dim} 不一致")
        object.__setattr__(self, 'components', comps)

    @classmethod
    def from_named(cls, chart: Chart, components: Mapping[str, object], functions=None) -> 'VectorField':
        comps = [ZERO] * chart.dim
        for name, value in components.items():
            if isinstance(value, str):
                value = parse_expr(value, chart.variables, functions)
            comps[chart.index(name)] = as_expr(value)
        return cls(chart, tuple(comps))

    def component(self, name: str) -> ScalarExpr:
        return self.components[self.chart.index(name)]

    def apply(self, f) -> ScalarExpr:
        """
        方向导数 X(f)
        """
        f = as_expr(f)
        terms = [c * diff(f, v) for c, v in zip(self.components, self.chart.variables) if not c.is_zero()]
        return sum(terms[1:], terms[0]) if terms else ZERO

    def scale(self, factor) -> 'VectorField':
        factor = as_expr(factor)
        return VectorField(self.chart, tuple(factor * c for c in self.components))

    def simplified(self) -> 'VectorField':
        return VectorField(self.chart, tuple(simplify(c) for c in self.components))

    def evaluate(self, env: Mapping[str, np.ndarray], strict: bool = True) -> np.ndarray:
        """
        :return: 形状 (dim, N) 的数组
        """
        return np.stack([evaluate(c, env, strict) for c in self.components])

    def to_dict(self) -> dict:
        return {
            "chart": self.chart.id,
            "components": {v: to_text(c) for v, c in zip(self.chart.variables, self.components)},
        }


@dataclass(frozen=True)
class ChartMap:
    """
    坐标卡之间的光滑映射，每个目标变量一个以源变量表示的分量
    """
    source: Chart
    target: Chart
    components: tuple

    def __post_init__(self):
        comps = tuple(as_expr(c) for c in self.components)
        if len(comps) != self.target.dim:
            raise DegreeError(f"映射分量数 {len(comps)} 与目标坐标卡 {self.target.id} 的维数不一致")
        object.__setattr__(self, 'components', comps)

    @classmethod
    def from_named(cls, source: Chart, target: Chart, components: Mapping[str, object], functions=None) -> 'ChartMap':
        comps = []
        for name in target.variables:
            if name not in components:
                raise ChartError(f"映射缺少目标变量 {name} 的分量")
            value = components[name]
            if isinstance(value, str):
                value = parse_expr(value, source.variables, functions)
            comps.append(as_expr(value))
        return cls(source, target, tuple(comps))

    @classmethod
    def identity(cls, chart: Chart) -> 'ChartMap':
        return cls(chart, chart, tuple(chart.coords()))

    @classmethod
    def projection(cls, source: Chart, target: Chart) -> 'ChartMap':
        """
        按变量名投影到子变量表（例如 Σ×ℝ_t -> Σ）
        """
        for name in target.variables:
            source.index(name)
        return cls(source, target, tuple(var(n) for n in target.variables))

    def mapping(self) -> dict:
        return dict(zip(self.target.variables, self.components))

    def jacobian(self) -> list:
        return [[diff(c, v) for v in self.source.variables] for c in self.components]

    def apply(self, env: Mapping[str, np.ndarray], strict: bool = True) -> dict:
        """
        数值映射：源坐标 -> 目标坐标
        """
        return {name: evaluate(c, env, strict) for name, c in zip(self.target.variables, self.components)}

    def compose(self, inner: 'ChartMap') -> 'ChartMap':
        """
        self ∘ inner
        """
        _check_same_chart(inner.target, self.source)
        mapping = inner.mapping()
        return ChartMap(inner.source, self.target, tuple(substitute(c, mapping) for c in self.components))

    def to_dict(self) -> dict:
        return {
            "source": self.source.id,
            "target": self.target.id,
            "components": {n: to_text(c) for n, c in zip(self.target.variables, self.components)},
        }


# ---------------------------------------------------------------------------
# 运算
# ---------------------------------------------------------------------------

def wedge(a: DifferentialForm, b: DifferentialForm) -> DifferentialForm:
    """
    外积
    :raise ChartMismatchError: 坐标卡不同
    :raise DegreeError: 次数和超过维数
    """
    _check_same_chart(a.chart, b.chart)
    if a.degree + b.degree > a.chart.dim:
        raise DegreeError(f"外积次数 {a.degree}+{b.degree} 超过维数 {a.chart.dim}")
    return DifferentialForm(a.chart, a.degree + b.degree, wedge_coefficients(a.coeffs, b.coeffs))


def nwedge(a: DifferentialForm, k: int) -> DifferentialForm:
    """
    k 次外幂 a∧…∧a
    """
    if k < 1:
        raise DegreeError(f"外幂次数必须为正: {k}")
    if k * a.degree > a.chart.dim:
        raise DegreeError(f"外幂次数 {k}×{a.degree} 超过维数 {a.chart.dim}")
    out = a
    for _ in range(k - 1):
        out = wedge(out, a)
    return out


def ext_d(a: DifferentialForm) -> DifferentialForm:
    """
    外微分。对最高次形式返回同次数的零形式。
    """
    chart = a.chart
    if a.degree == chart.dim:
        return DifferentialForm.zero(chart, chart.dim)
    coeffs = {}
    for I, c in a.coeffs.items():
        for j, v in enumerate(chart.variables):
            if j in I:
                continue
            dc = diff(c, v)
            if dc.is_zero():
                continue
            key, sign = sort_with_sign((j,) + I)
            term = dc if sign > 0 else -dc
            coeffs[key] = coeffs[key] + term if key in coeffs else term
    return DifferentialForm(chart, a.degree + 1, coeffs)


def d_function(chart: Chart, f) -> DifferentialForm:
    return ext_d(DifferentialForm.function(chart, f))


def interior(X: VectorField, a: DifferentialForm) -> DifferentialForm:
    """
    内乘 ι_X a，要求 deg a ≥ 1
    """
    _check_same_chart(X.chart, a.chart)
    if a.degree < 1:
        raise DegreeError("0 次形式没有内乘")
    return DifferentialForm(a.chart, a.degree - 1, interior_coefficients(X.components, a.coeffs))


def lie(X: VectorField, a: DifferentialForm) -> DifferentialForm:
    """
    李导数，按 Cartan 公式 d∘ι_X + ι_X∘d
    """
    _check_same_chart(X.chart, a.chart)
    chart = a.chart
    if a.degree == 0:
        return interior(X, ext_d(a))
    first = ext_d(interior(X, a))
    if a.degree == chart.dim:
        return first
    return first + interior(X, ext_d(a))


def pullback(m: ChartMap, a: DifferentialForm) -> DifferentialForm:
    """
    沿映射拉回。系数做变量替换，dy_i 换成 d(m_i)
    """
    _check_same_chart(m.target, a.chart)
    mapping = m.mapping()
    src = m.source
    dys = [d_function(src, c) for c in m.components]
    if a.degree > src.dim:
        raise DegreeError(f"{a.degree} 次形式不能拉回到 {src.dim} 维坐标卡")
    acc = {}
    for I, c in a.coeffs.items():
        pulled = substitute(c, mapping)
        term = {(): pulled}
        for i in I:
            term = wedge_coefficients(term, dys[i].coeffs)
            if not term:
                break
        for k, v in term.items():
            acc[k] = acc[k] + v if k in acc else v
    return DifferentialForm(src, a.degree, acc)


def top_coeff(a: DifferentialForm) -> ScalarExpr:
    """
    相对坐标卡定向体积形式的系数
    """
    if a.degree != a.chart.dim:
        raise DegreeError(f"最高次系数要求次数等于维数 {a.chart.dim}，实际 {a.degree}")
    c = a.coeffs.get(tuple(range(a.chart.dim)), ZERO)
    return c if a.chart.orientation > 0 else -c


def top_value(values: Mapping[tuple, np.ndarray], chart: Chart, size: int) -> np.ndarray:
    """
    数值系数表的最高次系数（带定向）
    """
    c = values.get(tuple(range(chart.dim)))
    if c is None:
        return np.zeros(size)
    return chart.orientation * np.broadcast_to(np.asarray(c, dtype=float), (size,))


def power_values(values: Mapping[tuple, np.ndarray], k: int) -> dict:
    """
    数值系数表的 k 次外幂
    """
    out = dict(values)
    for _ in range(k - 1):
        out = wedge_coefficients(out, values)
    return out


def skew_matrix(values: Mapping[tuple, np.ndarray], dim: int, size: int) -> np.ndarray:
    """
    2 形式的反对称系数矩阵 W[p, i, j] = ω(∂_i, ∂_j)
    """
    W = np.zeros((size, dim, dim))
    for (i, j), c in values.items():
        c = np.broadcast_to(np.asarray(c, dtype=float), (size,))
        W[:, i, j] = c
        W[:, j, i] = -c
    return W


def one_form_matrix(values: Mapping[tuple, np.ndarray], dim: int, size: int) -> np.ndarray:
    """
    1 形式的数值分量，形状 (size, dim)
    """
    out = np.zeros((size, dim))
    for (i,), c in values.items():
        out[:, i] = np.broadcast_to(np.asarray(c, dtype=float), (size,))
    return out
