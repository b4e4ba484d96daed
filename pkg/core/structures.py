"""
结构检验与导出几何场：接触、辛、折叠辛的判定，Liouville 场、Reeb 场、零叶状结构、
特征叶状结构和梯度型条件。所有判定在采样网格上向量化求值，结果汇总为 StructureReport。
"""
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from core.config_manager import get_config
from core.errors import DegreeError, PreconditionError
from core.exprcore import Point, ScalarExpr, ZERO, as_expr, diff, evaluate, simplify, substitute, to_text
from core.forms import (
    Chart, ChartMap, DifferentialForm, VectorField, ext_d, interior, lie, nwedge, one_form_matrix,
    power_values, pullback, skew_matrix, top_coeff, top_value, wedge, wedge_coefficients,
)
from core.utils.logger import debug, info, warning
from core.utils.numpy_cconvert import convert_numpy_types, restore_float
from core.utils.parallel import chunked_map

PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"

# 符号求解 Liouville 场的维数上限
SYMBOLIC_MAX_DIM = 6
# 折叠样本点云写入报告时的上限
MAX_CLOUD = 2000


# ---------------------------------------------------------------------------
# 数据类型
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SampleGrid:
    """
    坐标卡上的张量积采样网格。
    box 可覆盖坐标卡的坐标盒；excluded 为排除区（坐标盒列表）；inset 为每边内缩比例。
    """
    chart: Chart
    counts: tuple
    box: Optional[tuple] = None
    excluded: tuple = ()
    inset: float = 0.0

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if len(counts) == 1 and self.chart.dim > 1:
            counts = counts * self.chart.dim
        if len(counts) != self.chart.dim:
            raise PreconditionError(f"网格轴数 {len(counts)} 与坐标卡 {self.chart.id} 的维数 {self.chart.dim} 不一致")
        if any(c < 2 for c in counts):
            raise PreconditionError(f"每轴采样点数至少为 2: {counts}")
        object.__setattr__(self, 'counts', counts)
        if self.box is not None:
            box = tuple((float(lo), float(hi)) for lo, hi in self.box)
            if len(box) != self.chart.dim or any(not lo < hi for lo, hi in box):
                raise PreconditionError(f"网格坐标盒不合法: {box}")
            if not all(self.chart.contains(v) for v in zip(*box)):
                raise PreconditionError(f"网格坐标盒超出坐标卡 {self.chart.id}")
            object.__setattr__(self, 'box', box)
        zones = tuple(tuple((float(lo), float(hi)) for lo, hi in z) for z in self.excluded)
        for z in zones:
            if len(z) != self.chart.dim or not all(self.chart.contains(v) for v in zip(*z)):
                raise PreconditionError(f"排除区不在坐标卡 {self.chart.id} 内: {z}")
        object.__setattr__(self, 'excluded', zones)
        if not 0 <= self.inset < 0.5:
            raise PreconditionError(f"inset 必须在 [0, 0.5) 内: {self.inset}")

    @classmethod
    def default(cls, chart: Chart, points: Optional[int] = None, **kwargs) -> 'SampleGrid':
        points = points or get_config().grid_points_for(chart.dim)
        return cls(chart, (points,) * chart.dim, **kwargs)

    @property
    def bounds(self) -> tuple:
        box = self.box or self.chart.box
        if not self.inset:
            return box
        return tuple((lo + self.inset * (hi - lo), hi - self.inset * (hi - lo)) for lo, hi in box)

    def axes(self) -> list:
        return [np.linspace(lo, hi, c) for (lo, hi), c in zip(self.bounds, self.counts)]

    def spacing(self) -> np.ndarray:
        return np.array([(hi - lo) / (c - 1) for (lo, hi), c in zip(self.bounds, self.counts)])

    def full_env(self) -> dict:
        mesh = np.meshgrid(*self.axes(), indexing='ij')
        return {v: m.ravel() for v, m in zip(self.chart.variables, mesh)}

    def excluded_mask(self, env: Mapping[str, np.ndarray]) -> np.ndarray:
        size = len(next(iter(env.values())))
        mask = np.zeros(size, dtype=bool)
        for zone in self.excluded:
            inside = np.ones(size, dtype=bool)
            for v, (lo, hi) in zip(self.chart.variables, zone):
                inside &= (env[v] >= lo) & (env[v] <= hi)
            mask |= inside
        return mask

    def env(self) -> dict:
        full = self.full_env()
        keep = ~self.excluded_mask(full)
        return {k: v[keep] for k, v in full.items()}

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    def to_dict(self) -> dict:
        return {
            "chart": self.chart.id,
            "counts": list(self.counts),
            "box": [list(b) for b in self.box] if self.box else None,
            "excluded": [[list(b) for b in z] for z in self.excluded],
            "inset": self.inset,
        }


@dataclass(frozen=True)
class FoldSpec:
    """
    折叠定义函数 h（Γ = {h = 0}）和横截容差 δ
    """
    h: ScalarExpr
    delta: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, 'h', as_expr(self.h))
        if self.h.is_const:
            raise PreconditionError(f"折叠定义函数是常数: {to_text(self.h)}")
        if self.delta is not None and self.delta <= 0:
            raise PreconditionError(f"横截容差必须为正: {self.delta}")

    @property
    def tolerance(self) -> float:
        return self.delta if self.delta is not None else get_config().fold_delta

    def to_dict(self) -> dict:
        return {"h": to_text(self.h), "delta": self.delta}


@dataclass
class StructureReport:
    """
    一次检验的结论：verdict 为 pass / fail / inconclusive，
    min_margin 为网格上最小的带符号判定量，witness 为取到最小值的网格点
    """
    verdict: str
    property: str
    min_margin: float
    witness: Optional[Point]
    samples: int
    notes: list = field(default_factory=list)
    details: dict = field(default_factory=dict)
    tolerance: float = 0.0

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def to_dict(self) -> dict:
        return convert_numpy_types({
            "verdict": self.verdict,
            "property": self.property,
            "min_margin": float(self.min_margin),
            "witness": self.witness.to_dict() if self.witness else None,
            "samples": int(self.samples),
            "notes": list(self.notes),
            "details": self.details,
            "tolerance": float(self.tolerance),
        })

    @classmethod
    def from_dict(cls, data: dict) -> 'StructureReport':
        witness = data.get("witness")
        return cls(
            verdict=data["verdict"],
            property=data["property"],
            min_margin=float(restore_float(data["min_margin"])),
            witness=Point(witness["chart"], tuple(witness["values"])) if witness else None,
            samples=int(data["samples"]),
            notes=list(data.get("notes", [])),
            details=dict(data.get("details", {})),
            tolerance=float(restore_float(data.get("tolerance", 0.0))),
        )


@dataclass
class Gate:
    """
    判定前提：不满足时结论直接为 fail
    """
    ok: bool
    note: str
    witness: Optional[Point] = None


@dataclass
class FoliationDirection:
    """
    特征叶状结构在一点的方向；奇点时 direction 为 None，sign 为奇点符号
    """
    direction: Optional[np.ndarray]
    singular: bool
    sign: int = 0


# ---------------------------------------------------------------------------
# 公共工具
# ---------------------------------------------------------------------------

def _size(env: Mapping[str, np.ndarray]) -> int:
    return len(next(iter(env.values()))) if env else 0


def _point_at(chart: Chart, env: Mapping[str, np.ndarray], idx: int) -> Point:
    return Point(chart.id, tuple(float(env[v][idx]) for v in chart.variables))


def _single_env(chart: Chart, p) -> dict:
    if isinstance(p, Point):
        if p.chart_id != chart.id:
            warning(f"点属于坐标卡 {p.chart_id}，按 {chart.id} 的变量解释")
        values = p.values
    elif isinstance(p, Mapping):
        values = [p[v] for v in chart.variables]
    else:
        values = list(p)
    if len(values) != chart.dim:
        raise PreconditionError(f"点的维数 {len(values)} 与坐标卡 {chart.id} 不一致")
    return {v: np.array([float(x)]) for v, x in zip(chart.variables, values)}


def _tol(tol: Optional[float]) -> float:
    return get_config().tolerance if tol is None else tol


def _finish(prop: str, chart: Chart, env: Mapping[str, np.ndarray], margins: np.ndarray, tol: float,
            gates: Sequence[Gate] = (), notes: Optional[list] = None, details: Optional[dict] = None,
            samples: Optional[int] = None) -> StructureReport:
    """
    汇总判定量：前提全部成立且最小裕度大于容差时为 pass；前提失败时裕度不超过 0；
    出现无法求值的样本时为 inconclusive
    """
    margins = np.asarray(margins, dtype=float)
    notes = list(notes or [])
    details = dict(details or {})
    finite = np.isfinite(margins)
    witness = None
    if margins.size and np.any(finite):
        idx = int(np.argmin(np.where(finite, margins, np.inf)))
        margin = float(margins[idx])
        witness = _point_at(chart, env, idx)
    else:
        margin = float('nan')
    failed = [g for g in gates if not g.ok]
    for g in failed:
        notes.append(g.note)
    bad = int(np.count_nonzero(~finite))
    if failed:
        verdict = FAIL
        margin = min(margin, 0.0) if np.isfinite(margin) else 0.0
        if failed[0].witness is not None:
            witness = failed[0].witness
    elif not margins.size:
        verdict = INCONCLUSIVE
        notes.append("没有可用的采样点")
    elif bad:
        verdict = INCONCLUSIVE
        notes.append(f"{bad} 个采样点无法求值")
    else:
        verdict = PASS if margin > tol else FAIL
    report = StructureReport(verdict, prop, margin, witness, samples if samples is not None else int(margins.size),
                             notes, details, tol)
    info(f"检验 {prop} [{chart.id}]: {verdict}, 最小裕度 {margin:.6g}, 样本 {report.samples}")
    return report


def _require_degree(form: DifferentialForm, degree: int, what: str):
    if form.degree != degree:
        raise DegreeError(f"{what} 需要 {degree} 次形式，实际 {form.degree} 次")


def _closedness(form: DifferentialForm, env: Mapping[str, np.ndarray]) -> tuple:
    """
    :return: (是否闭, 最大残差, 最坏点下标)
    """
    d = ext_d(form)
    size = _size(env)
    if d.is_zero() or d.degree == form.degree:
        return True, 0.0, None
    vals = d.evaluate(env, strict=False)
    scale = 1.0 + max((float(np.nanmax(np.abs(np.broadcast_to(v, (size,))))) for v in form.evaluate(env, strict=False).values()),
                      default=0.0)
    worst, where = 0.0, None
    for v in vals.values():
        a = np.abs(np.broadcast_to(v, (size,)))
        if a.size and np.nanmax(a) > worst:
            worst, where = float(np.nanmax(a)), int(np.nanargmax(a))
    return worst <= get_config().closed_tolerance * scale, worst, where


def _gradient(e: ScalarExpr, chart: Chart, env: Mapping[str, np.ndarray]) -> np.ndarray:
    size = _size(env)
    return np.stack([np.broadcast_to(evaluate(diff(e, v), env, strict=False), (size,)) for v in chart.variables], axis=1)


def pfaffian(A: np.ndarray) -> np.ndarray:
    """
    批量 Pfaffian，A 形状 (N, m, m)，m 为偶数
    """
    m = A.shape[-1]
    if m == 0:
        return np.ones(A.shape[0])
    if m % 2:
        return np.zeros(A.shape[0])
    if m == 2:
        return A[:, 0, 1]
    out = np.zeros(A.shape[0])
    for j in range(1, m):
        keep = [k for k in range(1, m) if k != j]
        minor = A[:, keep][:, :, keep]
        sign = 1.0 if j % 2 == 1 else -1.0
        out = out + sign * A[:, 0, j] * pfaffian(minor)
    return out


def _det_expr(matrix: Sequence[Sequence[ScalarExpr]]) -> ScalarExpr:
    """
    Laplace 展开求符号行列式，按剩余列记忆化
    """
    size = len(matrix)
    memo = {}

    def det(row, cols):
        if row == size:
            return as_expr(1)
        if cols in memo:
            return memo[cols]
        terms = []
        for pos, c in enumerate(cols):
            entry = matrix[row][c]
            if entry.is_zero():
                continue
            minor = det(row + 1, cols[:pos] + cols[pos + 1:])
            if minor.is_zero():
                continue
            t = entry * minor
            terms.append(-t if pos % 2 else t)
        out = sum(terms[1:], terms[0]) if terms else ZERO
        memo[cols] = out
        return out

    return det(0, tuple(range(size)))


def tangent_basis(grad_h: np.ndarray, outward: np.ndarray, orientation: int) -> np.ndarray:
    """
    ker dh 的正交基，按“外法向在前”的边界定向排列
    :param grad_h: (N, dim) 折叠函数梯度
    :param outward: (N, dim) 外法向
    :param orientation: 坐标卡定向
    :return: (N, dim, dim-1)
    """
    _, _, vt = np.linalg.svd(grad_h[:, None, :])
    basis = np.transpose(vt[:, 1:, :], (0, 2, 1)).copy()
    frame = np.concatenate([outward[:, :, None], basis], axis=2)
    sign = np.sign(np.linalg.det(frame)) * orientation
    basis[:, :, 0] *= np.where(sign < 0, -1.0, 1.0)[:, None]
    return basis


# ---------------------------------------------------------------------------
# 折叠样本
# ---------------------------------------------------------------------------

def fold_samples(fold: FoldSpec, grid: SampleGrid, steps: Optional[int] = None) -> dict:
    """
    沿网格线用二分法定位 h = 0 的点
    :param fold: 折叠定义
    :param grid: 采样网格
    :param steps: 二分步数，默认取配置
    :return: 变量名 -> 一维数组
    :raise PreconditionError: h 在网格上恒为零
    """
    chart = grid.chart
    steps = steps or get_config().bisection_steps
    axes = grid.axes()
    full = grid.full_env()
    H = np.broadcast_to(evaluate(fold.h, full, strict=False), (grid.size,)).reshape(grid.counts)
    if np.all(H == 0):
        raise PreconditionError(f"折叠定义函数 {to_text(fold.h)} 在网格上恒为零")
    found = [[] for _ in chart.variables]
    zero_idx = np.nonzero(H == 0)
    for j, ax in enumerate(axes):
        found[j].append(ax[zero_idx[j]])
    for k in range(chart.dim):
        lo_slice = [slice(None)] * chart.dim
        hi_slice = [slice(None)] * chart.dim
        lo_slice[k] = slice(0, -1)
        hi_slice[k] = slice(1, None)
        Ha, Hb = H[tuple(lo_slice)], H[tuple(hi_slice)]
        idx = np.nonzero(np.isfinite(Ha) & np.isfinite(Hb) & (Ha * Hb < 0))
        if not idx[0].size:
            continue
        base = {v: axes[j][idx[j]] for j, v in enumerate(chart.variables)}
        lo = axes[k][idx[k]].copy()
        hi = axes[k][idx[k] + 1].copy()
        h_lo = Ha[idx]
        var_k = chart.variables[k]
        for _ in range(steps):
            mid = 0.5 * (lo + hi)
            env = dict(base)
            env[var_k] = mid
            h_mid = np.broadcast_to(evaluate(fold.h, env, strict=False), mid.shape)
            same = np.sign(h_mid) == np.sign(h_lo)
            lo = np.where(same, mid, lo)
            h_lo = np.where(same, h_mid, h_lo)
            hi = np.where(same, hi, mid)
        for j, v in enumerate(chart.variables):
            found[j].append(0.5 * (lo + hi) if j == k else base[v])
    env = {v: np.concatenate(found[j]) for j, v in enumerate(chart.variables)}
    if grid.excluded:
        keep = ~grid.excluded_mask(env)
        env = {k: v[keep] for k, v in env.items()}
    debug(f"折叠样本 {to_text(fold.h)} [{chart.id}]: {_size(env)} 点")
    return env


def point_cloud(chart: Chart, env: Mapping[str, np.ndarray]) -> list:
    size = min(_size(env), MAX_CLOUD)
    return [[float(env[v][i]) for v in chart.variables] for i in range(size)]


def _fold_geometry(omega: DifferentialForm, fold: FoldSpec, env: Mapping[str, np.ndarray]) -> dict:
    """
    折叠样本处的几何量：ω^n 最高次系数及其法向导数、h 的梯度、外法向、ω 的反对称矩阵
    """
    chart = omega.chart
    n = chart.dim // 2
    size = _size(env)
    top_expr = top_coeff(nwedge(omega, n))
    top = np.broadcast_to(evaluate(top_expr, env, strict=False), (size,))
    grad_top = _gradient(top_expr, chart, env)
    grad_h = _gradient(fold.h, chart, env)
    norm_h = np.linalg.norm(grad_h, axis=1)
    with np.errstate(invalid='ignore', divide='ignore'):
        normal = np.einsum('ij,ij->i', grad_top, grad_h) / norm_h
    # R₊ 在 h > 0 一侧时，闭包 R₊ 的外法向为 -∇h
    outward = np.where((normal >= 0)[:, None], -grad_h, grad_h)
    W = skew_matrix(omega.evaluate(env, strict=False), chart.dim, size)
    return {"top": top, "normal": normal, "grad_h": grad_h, "norm_h": norm_h, "outward": outward, "W": W,
            "top_expr": top_expr}


# ---------------------------------------------------------------------------
# 判定
# ---------------------------------------------------------------------------

def check_contact(alpha: DifferentialForm, grid: SampleGrid, tol: Optional[float] = None) -> StructureReport:
    """
    接触条件 α∧(dα)^n > 0
    :param alpha: 2n+1 维坐标卡上的 1 形式
    :param grid: 采样网格
    :param tol: 判定容差
    """
    chart = alpha.chart
    _require_degree(alpha, 1, "接触检验")
    if chart.dim % 2 == 0:
        raise DegreeError(f"接触检验需要奇数维坐标卡，{chart.id} 为 {chart.dim} 维")
    n = chart.dim // 2
    dalpha = ext_d(alpha)
    env = grid.env()

    def top_of(chunk):
        size = _size(chunk)
        a = alpha.evaluate(chunk, strict=False)
        if n == 0:
            return top_value(a, chart, size)
        da = dalpha.evaluate(chunk, strict=False)
        return top_value(wedge_coefficients(a, power_values(da, n)), chart, size)

    margins = chunked_map(top_of, env, _size(env))
    return _finish("contact", chart, env, margins, _tol(tol), details={"n": n})


def check_symplectic(omega: DifferentialForm, grid: SampleGrid, tol: Optional[float] = None) -> StructureReport:
    """
    辛条件：dω = 0 且 ω^n 在网格上无零点，裕度为 |ω^n| 的最小值
    """
    chart = omega.chart
    _require_degree(omega, 2, "辛检验")
    if chart.dim % 2:
        raise DegreeError(f"辛检验需要偶数维坐标卡，{chart.id} 为 {chart.dim} 维")
    n = chart.dim // 2
    env = grid.env()

    def top_of(chunk):
        return top_value(power_values(omega.evaluate(chunk, strict=False), n), chart, _size(chunk))

    top = chunked_map(top_of, env, _size(env))
    closed, residual, where = _closedness(omega, env)
    gates = [Gate(closed, f"dω 非零，最大残差 {residual:.3e}",
                  _point_at(chart, env, where) if where is not None else None)]
    finite = top[np.isfinite(top)]
    signs = set(np.sign(finite[finite != 0]).astype(int).tolist())
    if len(signs) > 1:
        gates.append(Gate(False, "ω^n 在网格上变号"))
    sign = signs.pop() if len(signs) == 1 else 0
    return _finish("symplectic", chart, env, np.abs(top), _tol(tol), gates,
                   details={"sign": sign, "closed_residual": residual})


def check_folded(omega: DifferentialForm, fold: FoldSpec, grid: SampleGrid, tol: Optional[float] = None) -> StructureReport:
    """
    折叠辛条件：
    (a) dω = 0；(b) 折叠外 sign(ω^n) 与 sign(h) 保持一致的对应关系；
    (c) 折叠样本处 ω^n 为零且法向导数的绝对值大于 δ；(d) ω 限制到 ker dh 的秩为 2n-2。
    :raise PreconditionError: h 恒为零或没有找到折叠样本
    """
    chart = omega.chart
    _require_degree(omega, 2, "折叠检验")
    if chart.dim % 2:
        raise DegreeError(f"折叠检验需要偶数维坐标卡，{chart.id} 为 {chart.dim} 维")
    cfg = get_config()
    n = chart.dim // 2
    delta = fold.tolerance
    env = grid.env()
    size = _size(env)
    notes = []
    gates = []

    closed, residual, where = _closedness(omega, env)
    gates.append(Gate(closed, f"dω 非零，最大残差 {residual:.3e}",
                      _point_at(chart, env, where) if where is not None else None))

    # (b) 折叠外的符号一致性
    def off_fold(chunk):
        s = _size(chunk)
        top = top_value(power_values(omega.evaluate(chunk, strict=False), n), chart, s)
        h = np.broadcast_to(evaluate(fold.h, chunk, strict=False), (s,))
        return {"top": top, "h": h}

    vals = chunked_map(off_fold, env, size)
    off = np.abs(vals["h"]) > delta
    signed = np.sign(vals["h"][off]) * vals["top"][off]
    orientation_sign = 1
    if signed.size and np.nanmedian(signed) < 0:
        orientation_sign = -1
    off_margin = orientation_sign * signed
    if not signed.size:
        notes.append("网格上没有折叠外的样本")

    # (c)(d) 折叠样本
    samples = fold_samples(fold, grid)
    count = _size(samples)
    if not count:
        raise PreconditionError(f"在坐标卡 {chart.id} 的网格上没有找到折叠 {to_text(fold.h)} 的样本")
    geo = _fold_geometry(omega, fold, samples)
    scale = 1.0 + float(np.nanmax(np.abs(vals["top"]))) if size else 1.0
    vanish = np.abs(geo["top"]) <= 1e-8 * scale
    if not np.all(vanish):
        i = int(np.argmax(~vanish))
        gates.append(Gate(False, f"折叠样本处 ω^n 不为零: {float(geo['top'][i]):.3e}", _point_at(chart, samples, i)))
    transverse = np.abs(geo["normal"]) - delta

    B = tangent_basis(geo["grad_h"], geo["outward"], chart.orientation)
    M = np.einsum('nji,njk,nkl->nil', B, geo["W"], B)
    sv = np.linalg.svd(M, compute_uv=False)
    smax = sv[:, 0]
    ranks = np.where(smax > 0, np.sum(sv > cfg.rank_cutoff * smax[:, None], axis=1), 0)
    bad_rank = ranks != 2 * n - 2
    if np.any(bad_rank):
        i = int(np.argmax(bad_rank))
        gates.append(Gate(False, f"折叠上 ι*ω 的秩为 {int(ranks[i])}，应为 {2 * n - 2}", _point_at(chart, samples, i)))

    margins = np.concatenate([off_margin, transverse])
    witness_env = {v: np.concatenate([env[v][off], samples[v]]) for v in chart.variables}
    details = {
        "fold_count": count,
        "normal_derivative_min": float(np.nanmin(np.abs(geo["normal"]))),
        "normal_derivative_max": float(np.nanmax(np.abs(geo["normal"]))),
        "sign_relation": orientation_sign,
        "closed_residual": residual,
        "fold_samples": point_cloud(chart, samples),
    }
    return _finish("folded", chart, witness_env, margins, _tol(tol), gates, notes, details, samples=size + count)


# ---------------------------------------------------------------------------
# Liouville 场与 Reeb 场
# ---------------------------------------------------------------------------

def _skew_expr(omega: DifferentialForm) -> list:
    dim = omega.chart.dim
    return [[omega.component((i, j)) if i != j else ZERO for j in range(dim)] for i in range(dim)]


def liouville_field(lam: DifferentialForm) -> VectorField:
    """
    符号求解 ι_X dλ = λ，即 W X = -λ（W_ij = dλ(∂_i, ∂_j)），用 Cramer 法则
    :raise PreconditionError: 维数超过符号求解上限或 dλ 恒退化
    """
    chart = lam.chart
    _require_degree(lam, 1, "Liouville 场")
    if chart.dim % 2:
        raise DegreeError(f"Liouville 场需要偶数维坐标卡，{chart.id} 为 {chart.dim} 维")
    if chart.dim > SYMBOLIC_MAX_DIM:
        raise PreconditionError(f"{chart.dim} 维超过符号求解上限，请使用 liouville_values")
    W = _skew_expr(ext_d(lam))
    det = simplify(_det_expr(W))
    if det.is_zero():
        raise PreconditionError("dλ 处处退化，Liouville 场不存在")
    rhs = [-lam.component((i,)) for i in range(chart.dim)]
    comps = []
    for k in range(chart.dim):
        Wk = [[rhs[i] if j == k else W[i][j] for j in range(chart.dim)] for i in range(chart.dim)]
        comps.append(simplify(_det_expr(Wk) / det))
    field_ = VectorField(chart, tuple(comps))
    debug(f"Liouville 场 [{chart.id}]: {[to_text(c) for c in comps]}")
    return field_


def liouville_values(lam: DifferentialForm, env: Mapping[str, np.ndarray], cond_limit: float = 1e12) -> tuple:
    """
    逐点数值求解 Liouville 场
    :return: (values (N, dim)，奇异点掩码)；奇异点处为 NaN
    """
    chart = lam.chart
    size = _size(env)
    W = skew_matrix(ext_d(lam).evaluate(env, strict=False), chart.dim, size)
    rhs = -one_form_matrix(lam.evaluate(env, strict=False), chart.dim, size)
    finite = np.all(np.isfinite(W.reshape(size, -1)), axis=1) & np.all(np.isfinite(rhs), axis=1)
    cond = np.full(size, np.inf)
    if np.any(finite):
        cond[finite] = np.linalg.cond(W[finite])
    singular = ~(cond < cond_limit)
    out = np.full((size, chart.dim), np.nan)
    ok = ~singular
    if np.any(ok):
        out[ok] = np.linalg.solve(W[ok], rhs[ok][:, :, None])[:, :, 0]
    return out, singular


def reeb_field(alpha: DifferentialForm, p) -> np.ndarray:
    """
    数值 Reeb 向量：dα(R, ·) = 0，α(R) = 1
    :raise PreconditionError: 该点不满足接触条件
    """
    chart = alpha.chart
    _require_degree(alpha, 1, "Reeb 场")
    if chart.dim % 2 == 0:
        raise DegreeError(f"Reeb 场需要奇数维坐标卡，{chart.id} 为 {chart.dim} 维")
    env = _single_env(chart, p)
    W = skew_matrix(ext_d(alpha).evaluate(env), chart.dim, 1)[0]
    a = one_form_matrix(alpha.evaluate(env), chart.dim, 1)[0]
    cutoff = get_config().rank_cutoff
    _, s, vt = np.linalg.svd(W)
    if chart.dim > 1 and (s[0] == 0 or s[-2] <= cutoff * s[0]):
        raise PreconditionError(f"点 {list(env.values())} 处 dα 的秩不足，不是接触点")
    k = vt[-1]
    ak = float(a @ k)
    if abs(ak) <= 1e-12 * (1.0 + float(np.linalg.norm(a))):
        raise PreconditionError("α 在 dα 的核上为零，不是接触点")
    return k / ak


def check_liouville(lam: DifferentialForm, grid: SampleGrid, expected: Optional[VectorField] = None,
                    tol: Optional[float] = None) -> StructureReport:
    """
    逐点求解 ι_X dλ = λ 并检验残差；给出 expected 时同时与预期的场比较。
    dλ 退化的点（折叠上）跳过并记入 notes
    """
    chart = lam.chart
    _require_degree(lam, 1, "Liouville 检验")
    env = grid.env()
    size = _size(env)
    Xv, singular = liouville_values(lam, env)
    notes = []
    if np.any(singular):
        notes.append(f"{int(np.count_nonzero(singular))} 个点处 dλ 退化，已跳过")
    keep = ~singular
    W = skew_matrix(ext_d(lam).evaluate(env, strict=False), chart.dim, size)[keep]
    rhs = one_form_matrix(lam.evaluate(env, strict=False), chart.dim, size)[keep]
    X = Xv[keep]
    residual = np.max(np.abs(np.einsum('nij,nj->ni', W, X) + rhs), axis=1) if X.size else np.zeros(0)
    closed_tol = get_config().closed_tolerance
    scale = 1.0 + np.max(np.abs(rhs), axis=1) if X.size else np.zeros(0)
    details = {"singular": int(np.count_nonzero(singular)), "residual_max": float(np.max(residual)) if residual.size else 0.0}
    margins = closed_tol * scale - residual
    if expected is not None:
        if expected.chart != chart:
            raise PreconditionError(f"预期 Liouville 场的坐标卡 {expected.chart.id} 与 λ 的坐标卡不一致")
        sub = {k: v[keep] for k, v in env.items()}
        E = expected.evaluate(sub, strict=False).T
        E = np.broadcast_to(E, X.shape)
        deviation = np.max(np.abs(E - X), axis=1) if X.size else np.zeros(0)
        details["deviation_max"] = float(np.nanmax(deviation)) if deviation.size else 0.0
        margins = np.minimum(margins, 1e-9 * (1.0 + np.max(np.abs(X), axis=1)) - deviation)
    env = {k: v[keep] for k, v in env.items()}
    return _finish("liouville", chart, env, margins, _tol(tol), notes=notes, details=details,
                   samples=size)


# ---------------------------------------------------------------------------
# 叶状结构
# ---------------------------------------------------------------------------

def null_foliation(omega: DifferentialForm, fold: FoldSpec, p) -> np.ndarray:
    """
    折叠上 ι*ω 的核方向（单位向量，坐标卡分量）。
    Γ 取 R₊ 闭包边界的定向；核方向与商空间上 ω_Γ^{n-1} 的定向拼成 Γ 的正定向。
    :raise PreconditionError: p 不在折叠上或核维数不为 1
    """
    chart = omega.chart
    _require_degree(omega, 2, "零叶状结构")
    env = _single_env(chart, p)
    hval = float(evaluate(fold.h, env)[0])
    grad_h = _gradient(fold.h, chart, env)
    if abs(hval) > 1e-8 * (1.0 + float(np.linalg.norm(grad_h))):
        raise PreconditionError(f"点不在折叠上: h = {hval:.3e}")
    cutoff = get_config().rank_cutoff
    if chart.dim % 2 == 0:
        geo = _fold_geometry(omega, fold, env)
        outward = geo["outward"]
        W = geo["W"]
    else:
        outward = -grad_h
        W = skew_matrix(omega.evaluate(env), chart.dim, 1)
    B = tangent_basis(grad_h, outward, chart.orientation)[0]
    M = B.T @ W[0] @ B
    _, s, vt = np.linalg.svd(M)
    rank = int(np.sum(s > cutoff * s[0])) if s[0] > 0 else 0
    kernel_dim = M.shape[0] - rank
    if kernel_dim != 1:
        raise PreconditionError(f"ι*ω 的核维数为 {kernel_dim}，应为 1")
    v = vt[-1]
    C = vt[:-1].T
    frame = np.column_stack([v, C])
    orient = np.sign(np.linalg.det(frame)) * np.sign(pfaffian((C.T @ M @ C)[None])[0])
    if orient < 0:
        v = -v
    k = B @ v
    return k / np.linalg.norm(k)


def characteristic_field(beta: DifferentialForm) -> VectorField:
    """
    特征叶状结构的指向场 Y：ι_Y vol_Σ = β∧(dβ)^{n-1}
    """
    chart = beta.chart
    _require_degree(beta, 1, "特征叶状结构")
    if chart.dim % 2:
        raise DegreeError(f"特征叶状结构需要偶数维超曲面坐标卡，{chart.id} 为 {chart.dim} 维")
    n = chart.dim // 2
    eta = beta if n == 1 else wedge(beta, nwedge(ext_d(beta), n - 1))
    comps = []
    for i in range(chart.dim):
        rest = tuple(j for j in range(chart.dim) if j != i)
        c = eta.component(rest)
        if (i % 2) != (0 if chart.orientation > 0 else 1):
            c = -c
        comps.append(c)
    return VectorField(chart, tuple(comps))


def characteristic_directions(f: ScalarExpr, beta: DifferentialForm, env: Mapping[str, np.ndarray],
                              singular_tol: float = 1e-10) -> tuple:
    """
    向量化的特征叶状结构方向
    :return: (单位方向 (N, dim)，奇点掩码，奇点符号)
    """
    chart = beta.chart
    size = _size(env)
    Y = np.stack([np.broadcast_to(evaluate(c, env, strict=False), (size,))
                  for c in characteristic_field(beta).components], axis=1)
    b = one_form_matrix(beta.evaluate(env, strict=False), chart.dim, size)
    singular = np.linalg.norm(b, axis=1) <= singular_tol
    n = chart.dim // 2
    dbn = top_value(power_values(ext_d(beta).evaluate(env, strict=False), n), chart, size)
    signs = np.where(singular, np.sign(dbn), 0).astype(int)
    norms = np.linalg.norm(Y, axis=1)
    with np.errstate(invalid='ignore', divide='ignore'):
        unit = np.where(singular[:, None], np.nan, Y / norms[:, None])
    return unit, singular, signs


def characteristic_foliation(f: ScalarExpr, beta: DifferentialForm, p) -> FoliationDirection:
    """
    α = f dt + β 在 Σ 上的特征叶状结构在 p 点的方向
    :raise PreconditionError: p 在分割集上
    """
    chart = beta.chart
    env = _single_env(chart, p)
    fval = float(evaluate(as_expr(f), env)[0])
    if abs(fval) <= 1e-12:
        raise PreconditionError("点在分割集 {f = 0} 上")
    unit, singular, signs = characteristic_directions(as_expr(f), beta, env)
    if singular[0]:
        return FoliationDirection(None, True, int(signs[0]))
    return FoliationDirection(unit[0], False, 0)


# ---------------------------------------------------------------------------
# 梯度型、正接触型、接触向量场
# ---------------------------------------------------------------------------

def _critical_mask(chart: Chart, env, critical_points, radius) -> np.ndarray:
    size = _size(env)
    mask = np.zeros(size, dtype=bool)
    for p in critical_points:
        values = p.values if isinstance(p, Point) else tuple(p)
        dist2 = sum((env[v] - x) ** 2 for v, x in zip(chart.variables, values))
        mask |= dist2 < radius ** 2
    return mask


def check_gradient_like(X: VectorField, phi, critical_points: Iterable, grid: SampleGrid,
                        radius: float = 0.1, tol: Optional[float] = None) -> StructureReport:
    """
    梯度型条件：在临界点的 radius 球外，dφ(X) > 0
    :param X: 向量场
    :param phi: Morse 函数
    :param critical_points: 声明的临界点
    :param grid: 采样网格
    :param radius: 临界点排除半径
    :raise PreconditionError: 声明的点不是 dφ 的零点，或网格上出现未声明的零点
    """
    chart = X.chart
    phi = as_expr(phi)
    critical_points = list(critical_points)
    for p in critical_points:
        g = _gradient(phi, chart, _single_env(chart, p))
        if float(np.linalg.norm(g)) > 1e-8:
            raise PreconditionError(f"声明的临界点 {p} 处 dφ ≠ 0: |dφ| = {float(np.linalg.norm(g)):.3e}")
    env = grid.env()
    keep = ~_critical_mask(chart, env, critical_points, radius)
    env = {k: v[keep] for k, v in env.items()}
    grad = _gradient(phi, chart, env)
    gnorm = np.linalg.norm(grad, axis=1)
    if np.any(gnorm <= 1e-10):
        i = int(np.argmax(gnorm <= 1e-10))
        raise PreconditionError(f"网格点 {_point_at(chart, env, i).values} 处发现未声明的 dφ 零点")
    Xv = X.evaluate(env, strict=False).T
    margins = np.einsum('ij,ij->i', grad, Xv)
    return _finish("gradient-like", chart, env, margins, _tol(tol),
                   details={"critical_points": len(critical_points), "radius": radius})


def check_positive_contact_type(lam: DifferentialForm, fold: FoldSpec, grid: SampleGrid,
                                tol: Optional[float] = None) -> StructureReport:
    """
    正接触型：ι*λ 在折叠上是正接触形式，Γ 取 R₊ 闭包的边界定向
    """
    chart = lam.chart
    _require_degree(lam, 1, "正接触型检验")
    if chart.dim % 2:
        raise DegreeError(f"正接触型检验需要偶数维坐标卡，{chart.id} 为 {chart.dim} 维")
    n = chart.dim // 2
    samples = fold_samples(fold, grid)
    count = _size(samples)
    if not count:
        raise PreconditionError(f"在坐标卡 {chart.id} 的网格上没有找到折叠样本")
    omega = ext_d(lam)
    geo = _fold_geometry(omega, fold, samples)
    notes = []
    flat = np.abs(geo["normal"]) <= fold.tolerance
    if np.any(flat):
        notes.append(f"{int(np.count_nonzero(flat))} 个折叠样本的法向导数过小，R₊ 一侧无法确定")
    B = tangent_basis(geo["grad_h"], geo["outward"], chart.orientation)
    lam_vals = one_form_matrix(lam.evaluate(samples, strict=False), chart.dim, count)
    a = np.einsum('ni,nij->nj', lam_vals, B)
    M = np.einsum('nji,njk,nkl->nil', B, geo["W"], B)
    a_coeffs = {(j,): a[:, j] for j in range(chart.dim - 1)}
    if n == 1:
        eta = a_coeffs
    else:
        m_coeffs = {(i, j): M[:, i, j] for i in range(chart.dim - 1) for j in range(i + 1, chart.dim - 1)}
        eta = wedge_coefficients(a_coeffs, power_values(m_coeffs, n - 1))
    top = eta.get(tuple(range(chart.dim - 1)), np.zeros(count))
    top = np.broadcast_to(np.asarray(top, dtype=float), (count,))
    finite = top[np.isfinite(top)]
    sign = int(np.sign(np.median(finite))) if finite.size else 0
    gates = [Gate(not np.any(flat), "折叠不横截，无法确定边界定向")]
    return _finish("positive-contact-type", chart, samples, top, _tol(tol), gates, notes,
                   details={"sign": sign, "fold_count": count, "fold_samples": point_cloud(chart, samples)})


def check_contact_vector_field(alpha: DifferentialForm, X: VectorField, grid: SampleGrid,
                               hypersurface: Optional[ScalarExpr] = None,
                               tol: Optional[float] = None) -> StructureReport:
    """
    接触向量场：ℒ_X α ∧ α = 0（ℒ_X α = g α）；给出超曲面 H = 0 时同时检验 X 与之横截
    """
    chart = alpha.chart
    _require_degree(alpha, 1, "接触向量场检验")
    lx = lie(X, alpha)
    env = grid.env()
    size = _size(env)
    resid_form = wedge(lx, alpha)
    residual = np.zeros(size)
    for v in resid_form.evaluate(env, strict=False).values():
        residual = np.maximum(residual, np.abs(np.broadcast_to(v, (size,))))
    a = one_form_matrix(alpha.evaluate(env, strict=False), chart.dim, size)
    l = one_form_matrix(lx.evaluate(env, strict=False), chart.dim, size)
    pick = np.argmax(np.abs(a), axis=1)
    rows = np.arange(size)
    with np.errstate(invalid='ignore', divide='ignore'):
        factor = l[rows, pick] / a[rows, pick]
    closed_tol = get_config().closed_tolerance
    scale = 1.0 + float(np.nanmax(np.abs(a))) * (1.0 + float(np.nanmax(np.abs(l)))) if size else 1.0
    worst = int(np.nanargmax(residual)) if size else None
    gates = [Gate(bool(np.nanmax(residual) <= closed_tol * scale) if size else True,
                  f"ℒ_X α 与 α 不成比例，最大残差 {float(np.nanmax(residual)) if size else 0.0:.3e}",
                  _point_at(chart, env, worst) if worst is not None else None)]
    details = {
        "conformal_factor_min": float(np.nanmin(factor)) if size else None,
        "conformal_factor_max": float(np.nanmax(factor)) if size else None,
        "residual_max": float(np.nanmax(residual)) if size else 0.0,
    }
    if hypersurface is None:
        margins = closed_tol * scale - residual
        return _finish("contact-vector-field", chart, env, margins, _tol(tol), gates, details=details)
    H = as_expr(hypersurface)
    samples = fold_samples(FoldSpec(H), grid)
    grad = _gradient(H, chart, samples)
    Xv = X.evaluate(samples, strict=False).T
    margins = np.abs(np.einsum('ij,ij->i', grad, Xv))
    details["hypersurface_samples"] = _size(samples)
    return _finish("contact-vector-field", chart, samples, margins, _tol(tol), gates, details=details)


def check_pullback(m: ChartMap, form: DifferentialForm, target: DifferentialForm, grid: SampleGrid,
                   tol: Optional[float] = None) -> StructureReport:
    """
    m*form = target：在 m 的源坐标卡上逐系数比较，
    裕度为 closed_tolerance·(1 + |target|) 减去最大系数偏差
    """
    chart = m.source
    if target.chart != chart or target.degree != form.degree:
        raise DegreeError(f"拉回比较需要 {chart.id} 上的 {form.degree} 次形式，"
                          f"实际为 {target.chart.id} 上的 {target.degree} 次形式")
    env = grid.env()
    size = _size(env)
    got = pullback(m, form).evaluate(env, strict=False)
    want = target.evaluate(env, strict=False)
    residual = np.zeros(size)
    magnitude = np.zeros(size)
    for k in set(got) | set(want):
        a = np.broadcast_to(np.asarray(got.get(k, 0.0), dtype=float), (size,))
        b = np.broadcast_to(np.asarray(want.get(k, 0.0), dtype=float), (size,))
        residual = np.maximum(residual, np.abs(a - b))
        magnitude = np.maximum(magnitude, np.abs(b))
    margins = get_config().closed_tolerance * (1.0 + magnitude) - residual
    details = {"residual_max": float(np.nanmax(residual)) if size else 0.0}
    return _finish("pullback", chart, env, margins, _tol(tol), details=details)


def dividing_set_samples(alpha: DifferentialForm, X: VectorField, embedding: ChartMap, grid: SampleGrid) -> dict:
    """
    超曲面 Σ（由 embedding 参数化）上的分割集 Γ = Σ ∩ {α(X) = 0} 的样本
    :return: {"chart": Σ 坐标样本, "ambient": 环境坐标样本, "f": Σ 上的 α(X)}
    """
    if X.chart != alpha.chart or embedding.target != alpha.chart:
        raise PreconditionError("α、X 与嵌入的目标坐标卡必须一致")
    contraction = interior(X, alpha).coeffs.get((), ZERO)
    f = simplify(substitute(contraction, embedding.mapping()))
    samples = fold_samples(FoldSpec(f), grid)
    return {"chart": samples, "ambient": embedding.apply(samples), "f": f}


def check_folded_weinstein(lam: DifferentialForm, phi, fold: FoldSpec, grid: SampleGrid,
                           critical_points: Iterable = (), radius: float = 0.1,
                           tol: Optional[float] = None) -> StructureReport:
    """
    折叠 Weinstein 条件：dλ 折叠辛，λ 正接触型，Γ = φ⁻¹(0) 为正则水平集，
    X_λ 在 R₊ 上对 φ、在 R₋ 上对 -φ 为梯度型
    """
    chart = lam.chart
    phi = as_expr(phi)
    tol = _tol(tol)
    omega = ext_d(lam)
    folded = check_folded(omega, fold, grid, tol)
    pct = check_positive_contact_type(lam, fold, grid, tol)
    notes = [f"folded: {folded.verdict}", f"positive-contact-type: {pct.verdict}"]
    gates = [Gate(folded.passed, "dλ 不是折叠辛形式", folded.witness),
             Gate(pct.passed, "λ 不是正接触型", pct.witness)]

    samples = fold_samples(fold, grid)
    phi_on_fold = np.abs(np.broadcast_to(evaluate(phi, samples, strict=False), (_size(samples),)))
    grad_on_fold = np.linalg.norm(_gradient(phi, chart, samples), axis=1)
    gates.append(Gate(bool(np.all(phi_on_fold <= 1e-8)), "φ 在折叠上不为零"))
    gates.append(Gate(bool(np.all(grad_on_fold > 1e-8)), "Γ 不是 φ 的正则水平集"))

    # 折叠附近 X_λ 奇异，只取离开折叠至少半个网格步长的点
    env = grid.env()
    keep = ~_critical_mask(chart, env, critical_points, radius)
    h = np.broadcast_to(evaluate(fold.h, env, strict=False), (_size(env),))
    grad_h_scale = float(np.nanmax(np.linalg.norm(_gradient(fold.h, chart, env), axis=1)))
    keep &= np.abs(h) > 0.5 * float(np.min(grid.spacing())) * grad_h_scale
    env = {k: v[keep] for k, v in env.items()}
    size = _size(env)
    n = chart.dim // 2
    top = top_value(power_values(omega.evaluate(env, strict=False), n), chart, size)
    Xv, singular = liouville_values(lam, env)
    dphi = np.einsum('ij,ij->i', _gradient(phi, chart, env), Xv)
    margins = np.sign(top) * dphi
    if np.any(singular):
        notes.append(f"{int(np.count_nonzero(singular))} 个点处 dλ 退化，已跳过")
        margins = margins[~singular]
        env = {k: v[~singular] for k, v in env.items()}
    report = _finish("folded-weinstein", chart, env, margins, tol, gates, notes,
                     details={"folded_margin": folded.min_margin, "contact_type_margin": pct.min_margin,
                              "fold_count": _size(samples)})
    return report
