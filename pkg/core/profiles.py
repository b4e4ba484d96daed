"""
一元剖面函数：折叠到接触芽的 f、接触芽规范化用的 μ、理想完备化的 u、双倍构造的桥剖面。
全部实现为有理系数的分段多项式，端点条件精确验证，单调性与凹凸性在一维网格上验证。
"""
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from core.config_manager import get_config
from core.errors import ProfileError
from core.exprcore import PiecewisePoly, ScalarExpr, var
from core.utils.logger import debug, info

LEMMA41_F = "lemma41-f"
LEMMA42_MU = "lemma42-mu"
IDEAL_U = "ideal-u"
BRIDGE_F = "bridge-f"
KINDS = (LEMMA41_F, LEMMA42_MU, IDEAL_U, BRIDGE_F)

# 一维验证网格的点数
VERIFY_POINTS = 10_000


@dataclass
class ProfileFn:
    """
    剖面函数：样条、自变量名、定义区间、构造参数，以及已经验证过的条件说明
    """
    kind: str
    spline: PiecewisePoly
    variable: str
    interval: tuple
    params: dict = field(default_factory=dict)
    conditions: list = field(default_factory=list)

    def expr(self, arg=None) -> ScalarExpr:
        return self.spline(var(self.variable) if arg is None else arg)

    def derivative_expr(self, arg=None) -> ScalarExpr:
        return self.spline.derivative()(var(self.variable) if arg is None else arg)

    def value(self, x, side: str = 'right') -> Fraction:
        return self.spline.exact(x, side)

    def slope(self, x, side: str = 'right') -> Fraction:
        return self.spline.derivative().exact(x, side)

    def evaluate(self, x) -> np.ndarray:
        return self.spline.evaluate(x)

    def evaluate_derivative(self, x, order: int = 1) -> np.ndarray:
        poly = self.spline
        for _ in range(order):
            poly = poly.derivative()
        return poly.evaluate(x)

    def sample(self, points: int = VERIFY_POINTS) -> np.ndarray:
        lo, hi = (float(v) for v in self.interval)
        return np.linspace(lo, hi, points)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "variable": self.variable,
            "interval": [str(v) for v in self.interval],
            "params": {k: str(v) for k, v in self.params.items()},
            "spline": self.spline.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'ProfileFn':
        return cls(
            kind=data["kind"],
            spline=PiecewisePoly.from_dict(data["spline"]),
            variable=data.get("variable", "tau"),
            interval=tuple(Fraction(v) for v in data["interval"]),
            params={k: Fraction(v) if _is_number(v) else v for k, v in data.get("params", {}).items()},
        )


def _is_number(text) -> bool:
    try:
        Fraction(text)
        return True
    except (TypeError, ValueError):
        return False


# ---------------------------------------------------------------------------
# 有理多项式工具（升幂系数列表）
# ---------------------------------------------------------------------------

def _poly_mul(p: list, q: list) -> list:
    out = [Fraction(0)] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        for j, b in enumerate(q):
            out[i + j] += a * b
    return out


def _compose_affine(coeffs: list, scale: Fraction, shift: Fraction) -> tuple:
    """
    p(scale·τ + shift) 的升幂系数
    """
    out = [Fraction(0)]
    for c in reversed(coeffs):
        out = _poly_mul(out, [shift, scale])
        out[0] += c
    while len(out) > 1 and out[-1] == 0:
        out.pop()
    return tuple(out)


def _frac(value, name: str) -> Fraction:
    try:
        return Fraction(value).limit_denominator(10 ** 12) if isinstance(value, float) else Fraction(value)
    except (TypeError, ValueError):
        raise ProfileError(f"参数 {name} 不是数值: {value!r}")


# ---------------------------------------------------------------------------
# 各类剖面
# ---------------------------------------------------------------------------

def _fold_f(params: dict) -> tuple:
    eps = params["eps"]
    if not 0 < eps < 1:
        raise ProfileError(f"领口半宽 ε 必须在 (0, 1) 内: {eps}")
    # x = τ/ε 时 f = (15x - 10x³ + 3x⁵)/8
    quintic = (Fraction(0), Fraction(15, 8) / eps, Fraction(0), Fraction(-10, 8) / eps ** 3,
               Fraction(0), Fraction(3, 8) / eps ** 5)
    spline = PiecewisePoly(params.get("name", "fprof"), (-eps, eps), ((Fraction(-1),), quintic, (Fraction(1),)))
    return spline, (-eps, eps)


def _rescaling_mu(params: dict) -> tuple:
    eps, delta, eps_prime = params["eps"], params["delta"], params["eps_prime"]
    a = eps_prime - delta / 8
    b = eps_prime + delta / 8
    if not 0 < delta:
        raise ProfileError(f"δ 必须为正: {delta}")
    if a < delta or b >= eps or not 0 < eps < 1:
        raise ProfileError(f"参数不可行: 需要 9δ/8 ≤ ε′ < ε - δ/8 且 ε < 1，实际 ε={eps}, δ={delta}, ε′={eps_prime}")
    width = b - a
    # S(x) = x⁶ - 3x⁵ + 5x⁴/2，S(0)=S′(0)=0，S(1)=1/2，S′(1)=1，S″ ≥ 0
    s_poly = [Fraction(0), Fraction(0), Fraction(0), Fraction(0), Fraction(5, 2), Fraction(-3), Fraction(1)]
    blend = [c * width for c in s_poly]
    blend[0] += eps_prime
    right = _compose_affine(blend, 1 / width, -a / width)
    left = _compose_affine(blend, -1 / width, -a / width)
    pieces = ((Fraction(0), Fraction(-1)), left, (eps_prime,), right, (Fraction(0), Fraction(1)))
    spline = PiecewisePoly(params.get("name", "muprof"), (-b, -a, a, b), pieces)
    return spline, (-eps, eps)


def _ideal_u(params: dict) -> tuple:
    eps = params["eps"]
    if not eps > 0:
        raise ProfileError(f"ε 必须为正: {eps}")
    # s ≥ -ε 时 u = 1 - ((s + ε)/ε)³
    cubic = _compose_affine([Fraction(1), Fraction(0), Fraction(0), Fraction(-1)], 1 / eps, Fraction(1))
    spline = PiecewisePoly(params.get("name", "uprof"), (-eps,), ((Fraction(1),), cubic))
    return spline, (-eps, Fraction(0))


def _bridge_f(params: dict) -> tuple:
    mode = params.get("mode", "plus")
    c = params["c"]
    half = params["half_width"]
    slope = params.get("slope", Fraction(0))
    if not 0 < half < 1:
        raise ProfileError(f"桥区截断半宽必须在 (0, 1) 内: {half}")
    if c <= 0:
        raise ProfileError(f"桥剖面系数必须为正: {c}")
    if slope != 0:
        raise ProfileError(f"f′(0) = {slope} ≠ 0 与严格凹且折叠位于 f′ 的零点不相容")
    if mode == "plus":
        coeffs = (Fraction(0), Fraction(0), -c)
    elif mode == "minus":
        coeffs = (Fraction(0), Fraction(0), c)
    elif mode == "asymmetric":
        coeffs = (Fraction(1), Fraction(0), -c)
    else:
        raise ProfileError(f"未知的桥剖面模式: {mode}")
    spline = PiecewisePoly(params.get("name", f"fb{mode[0]}"), (), (coeffs,))
    return spline, (-half, half)


_BUILDERS: dict = {
    LEMMA41_F: _fold_f,
    LEMMA42_MU: _rescaling_mu,
    IDEAL_U: _ideal_u,
    BRIDGE_F: _bridge_f,
}


def _defaults(kind: str, params: dict) -> dict:
    eps = _frac(params.get("eps", get_config().collar_epsilon), "eps")
    out = {"eps": eps}
    if kind == LEMMA42_MU:
        out["delta"] = _frac(params.get("delta", eps / 4), "delta")
        out["eps_prime"] = _frac(params.get("eps_prime", eps / 2), "eps_prime")
    if kind == BRIDGE_F:
        mode = params.get("mode", "plus")
        out["mode"] = mode
        out["c"] = _frac(params.get("c", 1 if mode == "asymmetric" else eps), "c")
        out["half_width"] = _frac(params.get("half_width", Fraction(9, 10)), "half_width")
        out["slope"] = _frac(params.get("slope", 0), "slope")
    if "name" in params:
        out["name"] = params["name"]
    return out


# ---------------------------------------------------------------------------
# 验证
# ---------------------------------------------------------------------------

def _checks(profile: ProfileFn) -> list:
    """
    :return: [(条件说明, 是否成立)]
    """
    p = profile.params
    x = profile.sample()
    v = profile.evaluate(x)
    d1 = profile.evaluate_derivative(x, 1)
    d2 = profile.evaluate_derivative(x, 2)
    tiny = 1e-12
    out = []
    if profile.kind == LEMMA41_F:
        eps = p["eps"]
        out += [
            ("f(0) = 0", profile.value(0) == 0),
            ("f(±ε) = ±1", profile.value(eps, 'left') == 1 and profile.value(-eps, 'right') == -1),
            ("f′(±ε) = 0", profile.slope(eps, 'left') == 0 and profile.slope(-eps, 'right') == 0),
            ("f 为奇函数", bool(np.allclose(profile.evaluate(-x), -v, atol=1e-14))),
            ("f′ > 0 于 (-ε, ε)", bool(np.all(d1[1:-1] > 0))),
            ("2τf + f′(1-τ²) > 0", bool(np.all(2 * x * v + d1 * (1 - x ** 2) > 0))),
        ]
    elif profile.kind == LEMMA42_MU:
        eps, delta, eps_prime = p["eps"], p["delta"], p["eps_prime"]
        inner = np.abs(x) <= float(delta)
        out += [
            ("μ ≡ ε′ 于 [-δ, δ]", bool(np.all(np.abs(v[inner] - float(eps_prime)) <= tiny))
             and profile.value(delta, 'left') == eps_prime and profile.value(-delta) == eps_prime),
            ("μ(±ε) = ε", profile.value(eps, 'left') == eps and profile.value(-eps) == eps),
            ("μ′(±ε) = ±1", profile.slope(eps, 'left') == 1 and profile.slope(-eps) == -1),
            ("μ 为偶函数", bool(np.allclose(profile.evaluate(-x), v, atol=1e-14))),
            ("0 ≤ μ′ ≤ 1 于 (δ, ε)", bool(np.all((d1[x > 0] >= -tiny) & (d1[x > 0] <= 1 + tiny)))),
            ("μ ≥ |τ|", bool(np.all(v >= np.abs(x) - tiny))),
            ("d(τ/μ)/dτ ≥ 0", bool(np.all((v - x * d1) / v ** 2 >= -tiny))),
        ]
    elif profile.kind == IDEAL_U:
        eps = p["eps"]
        out += [
            ("u(0) = 0", profile.value(0) == 0),
            ("u(-ε) = 1", profile.value(-eps) == 1 and profile.value(-eps, 'left') == 1),
            ("u′(-ε) = 0", profile.slope(-eps) == 0),
            ("u′ < 0 于 (-ε, 0]", bool(np.all(d1[1:] < 0))),
        ]
    elif profile.kind == BRIDGE_F:
        mode = p["mode"]
        f0 = 1 if mode == "asymmetric" else 0
        out += [
            (f"f(0) = {f0}", profile.value(0) == f0),
            ("f′(0) = 0", profile.slope(0) == 0),
            ("f 为偶函数", bool(np.allclose(profile.evaluate(-x), v, atol=1e-14))),
        ]
        if mode == "minus":
            out.append(("f″ > 0", bool(np.all(d2 > 0))))
        else:
            out.append(("f″ < 0", bool(np.all(d2 < 0))))
    return out


def verify_profile(profile: ProfileFn) -> ProfileFn:
    """
    重新验证剖面的全部条件
    :raise ProfileError: 任一条件不成立
    """
    checks = _checks(profile)
    failed = [desc for desc, ok in checks if not ok]
    if failed:
        raise ProfileError(f"剖面 {profile.kind} 不满足: {', '.join(failed)}")
    profile.conditions = [desc for desc, _ in checks]
    return profile


def make_profile(kind: str, variable: str = "tau", **params) -> ProfileFn:
    """
    构造并验证剖面函数
    :param kind: lemma41-f / lemma42-mu / ideal-u / bridge-f
    :param variable: 自变量名
    :param params: eps、delta、eps_prime、mode、c、half_width、slope、name
    :return: ProfileFn
    :raise ProfileError: 参数不可行或条件验证失败
    """
    if kind not in _BUILDERS:
        raise ProfileError(f"未知的剖面类型: {kind}，可选 {', '.join(KINDS)}")
    full = _defaults(kind, params)
    spline, interval = _BUILDERS[kind](full)
    profile = ProfileFn(kind, spline, variable, interval, {k: v for k, v in full.items() if k != "name"})
    verify_profile(profile)
    info(f"构造剖面 {kind} ({spline.name}): 区间 [{interval[0]}, {interval[1]}]，{len(profile.conditions)} 项条件通过")
    debug(f"剖面 {spline.name}: {spline.to_dict()}")
    return profile
