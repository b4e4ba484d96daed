"""
偶数维球面 S^{2n} ⊂ ℝ^{2n+1} 的坐标图册：
上下两张图像卡 z = ±sqrt(1 - r²)，以及一张覆盖赤道的带状卡（从 x1 = -1 出发的球极投影）。
"""
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from core.errors import ChartError
from core.exprcore import ONE, add, const, diff, evaluate, mul, power, sqrt, var
from core.forms import Chart, ChartMap, DifferentialForm, pullback
from core.utils.logger import debug

UPPER = "upper"
LOWER = "lower"
BAND = "band"


def plane_variables(n: int) -> tuple:
    names = []
    for j in range(1, n + 1):
        names += [f"x{j}", f"y{j}"]
    return tuple(names)


def ambient_variables(n: int) -> tuple:
    return plane_variables(n) + ("z",)


def band_variables(n: int) -> tuple:
    return tuple("w" + v for v in ambient_variables(n)[1:])


@dataclass
class SphereAtlas:
    """
    球面图册。embeddings 把每张卡嵌入 ℝ^{2n+1}，inverses 是从 ℝ^{2n+1} 回到各卡的坐标公式。
    """
    n: int
    charts: dict
    ambient: Chart
    plane: Chart
    embeddings: dict
    inverses: dict
    projection: ChartMap
    folds: dict = field(default_factory=dict)

    def chart(self, chart_id: str) -> Chart:
        if chart_id not in self.charts:
            raise ChartError(f"图册中没有坐标卡 {chart_id}")
        return self.charts[chart_id]

    def transition(self, source: str, target: str) -> ChartMap:
        """
        坐标变换 source -> target（仅在重叠区有意义）
        """
        return self.inverses[target].compose(self.embeddings[source])

    def plane_map(self, chart_id: str) -> ChartMap:
        """
        π ∘ 嵌入：卡坐标 -> ℝ^{2n}
        """
        return self.projection.compose(self.embeddings[chart_id])

    def pullback_from_plane(self, form: DifferentialForm) -> dict:
        return {cid: pullback(self.plane_map(cid), form) for cid in self.charts}

    def pullback_from_ambient(self, form: DifferentialForm) -> dict:
        return {cid: pullback(self.embeddings[cid], form) for cid in self.charts}

    def in_domain(self, chart_id: str, ambient_env: Mapping[str, np.ndarray]) -> np.ndarray:
        """
        判断 ℝ^{2n+1} 中的球面点是否落在该卡的坐标盒内（留 10% 边距）
        """
        chart = self.charts[chart_id]
        z = ambient_env["z"]
        if chart_id == BAND:
            x1 = ambient_env["x1"]
            ok = x1 > -0.5
            coords = self.inverses[BAND].apply({k: np.where(ok, v, 0.0) for k, v in ambient_env.items()})
        else:
            ok = z > 0 if chart_id == UPPER else z < 0
            coords = {v: ambient_env[v] for v in chart.variables}
        for name, (lo, hi) in zip(chart.variables, chart.box):
            pad = 0.1 * (hi - lo) / 2
            ok = ok & (coords[name] >= lo + pad) & (coords[name] <= hi - pad)
        return ok

    def overlap_consistency(self, forms: Mapping[str, DifferentialForm], count: int = 100,
                            seed: int = 0) -> dict:
        """
        在重叠区随机点上比较各卡上的形式：把目标卡的形式沿坐标变换拉回，与源卡的形式逐系数比较。
        :param forms: chart_id -> 该卡上的形式
        :param count: 每对卡的采样点数
        :param seed: 随机种子
        :return: {"source->target": 最大绝对误差}，没有重叠点的卡对不列出
        """
        rng = np.random.default_rng(seed)
        errors = {}
        for a, fa in forms.items():
            chart = self.charts[a]
            lo = np.array([b[0] for b in chart.box])
            hi = np.array([b[1] for b in chart.box])
            pts = rng.uniform(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo), size=(20 * count, chart.dim))
            env = {v: pts[:, i] for i, v in enumerate(chart.variables)}
            amb = self.embeddings[a].apply(env)
            for b, fb in forms.items():
                if a == b:
                    continue
                mask = self.in_domain(b, amb)
                if not np.any(mask):
                    continue
                sel = {k: v[mask][:count] for k, v in env.items()}
                pulled = pullback(self.transition(a, b), fb).evaluate(sel)
                direct = fa.evaluate(sel)
                worst = 0.0
                for key in set(pulled) | set(direct):
                    diff = np.abs(np.asarray(pulled.get(key, 0.0)) - np.asarray(direct.get(key, 0.0)))
                    worst = max(worst, float(np.max(diff)) if np.size(diff) else 0.0)
                errors[f"{a}->{b}"] = worst
                debug(f"重叠一致性 {a}->{b}: {len(sel[chart.variables[0]])} 点, 最大误差 {worst:.3e}")
        return errors


def _graph_chart(chart_id: str, n: int, orientation: int) -> Chart:
    half = 0.9 / np.sqrt(2 * n)
    return Chart(chart_id, plane_variables(n), tuple((-half, half) for _ in range(2 * n)), orientation)


def sphere_atlas(n: int) -> SphereAtlas:
    """
    构造 S^{2n} 的三卡图册
    :param n: 半维数，n ≥ 1
    """
    if n < 1:
        raise ChartError(f"球面半维数必须 ≥ 1: {n}")
    plane_vars = plane_variables(n)
    amb_vars = ambient_variables(n)
    ambient = Chart("ambient", amb_vars, tuple((-1.5, 1.5) for _ in amb_vars))
    plane = Chart("plane", plane_vars, tuple((-1.5, 1.5) for _ in plane_vars))
    projection = ChartMap.projection(ambient, plane)

    r2 = add(*(power(var(v), 2) for v in plane_vars))
    height = sqrt(ONE - r2)

    charts = {}
    embeddings = {}
    inverses = {}
    for chart_id, sign in ((UPPER, 1), (LOWER, -1)):
        chart = _graph_chart(chart_id, n, sign)
        charts[chart_id] = chart
        z = height if sign > 0 else -height
        embeddings[chart_id] = ChartMap(chart, ambient, tuple(var(v) for v in plane_vars) + (z,))
        inverses[chart_id] = ChartMap(ambient, chart, tuple(var(v) for v in plane_vars))

    # 带状卡：w = (除 x1 外的坐标) / (1 + x1)
    wvars = band_variables(n)
    rho = add(*(power(var(w), 2) for w in wvars))
    denom = ONE + rho
    x1 = (ONE - rho) / denom
    rest = tuple(mul(const(2), var(w)) / denom for w in wvars)
    provisional = Chart(BAND, wvars, tuple((-1.0, 1.0) for _ in wvars))
    band_embed = ChartMap(provisional, ambient, (x1,) + rest)
    band_inverse = ChartMap(ambient, provisional, tuple(var(v) / (ONE + var("x1")) for v in amb_vars[1:]))

    # 定向取自与上半卡的坐标变换在 z > 0 处的雅可比行列式符号
    upper_from_band = band_embed.components[:2 * n]
    base_point = {w: 0.1 for w in wvars}
    base_point[wvars[-1]] = 0.3
    jac = np.array([[float(evaluate(diff(c, w), base_point)) for w in wvars] for c in upper_from_band])
    orientation = 1 if np.linalg.det(jac) > 0 else -1
    band = provisional.with_orientation(orientation)
    charts[BAND] = band
    embeddings[BAND] = ChartMap(band, ambient, band_embed.components)
    inverses[BAND] = ChartMap(ambient, band, band_inverse.components)

    return SphereAtlas(
        n=n,
        charts=charts,
        ambient=ambient,
        plane=plane,
        embeddings=embeddings,
        inverses=inverses,
        projection=projection,
        folds={UPPER: None, LOWER: None, BAND: var(wvars[-1])},
    )
