"""
标量表达式核心：抽象语法树、文本解析、精确求导、化简和向量化数值求值。
所有微分形式的系数都是 ScalarExpr。
"""
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from core.errors import ArityError, EvalDomainError, ExprError, ParseError, UnknownIdentifierError

# 节点类型
CONST = 'const'
VAR = 'var'
ADD = 'add'
MUL = 'mul'
DIV = 'div'
POW = 'pow'
NEG = 'neg'
EXP = 'exp'
LN = 'ln'
SQRT = 'sqrt'
SIN = 'sin'
COS = 'cos'
SPLINE = 'spline'

FUNCTIONS = {'exp': EXP, 'ln': LN, 'sqrt': SQRT, 'sin': SIN, 'cos': COS}
UNARY_KINDS = (EXP, LN, SQRT, SIN, COS)

Number = Union[int, float, Fraction]


class ScalarExpr:
    """
    不可变的标量表达式节点。
    kind 为节点类型，args 为子节点元组，value 存放常数值、变量名、整数指数或样条对象。
    结构相等，哈希在构造时缓存。
    """
    __slots__ = ('kind', 'args', 'value', '_hash', '_text', '_vars')

    def __init__(self, kind: str, args: tuple = (), value=None):
        object.__setattr__(self, 'kind', kind)
        object.__setattr__(self, 'args', tuple(args))
        object.__setattr__(self, 'value', value)
        object.__setattr__(self, '_hash', hash((kind, value, self.args)))
        object.__setattr__(self, '_text', None)
        object.__setattr__(self, '_vars', None)

    def __setattr__(self, key, value):
        raise AttributeError("ScalarExpr 不可修改")

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, ScalarExpr) or self._hash != other._hash:
            return False
        return self.kind == other.kind and self.value == other.value and self.args == other.args

    def __repr__(self):
        return f"ScalarExpr({to_text(self)})"

    def __str__(self):
        return to_text(self)

    # 运算符重载走轻量构造器，只做常数折叠和 0/1 消去
    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return add(self, neg(as_expr(other)))

    def __rsub__(self, other):
        return add(as_expr(other), neg(self))

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        if not isinstance(exponent, int):
            raise ExprError("只支持整数次幂")
        return power(self, exponent)

    @property
    def is_const(self) -> bool:
        return self.kind == CONST

    def is_zero(self) -> bool:
        return self.kind == CONST and self.value == 0

    def is_one(self) -> bool:
        return self.kind == CONST and self.value == 1


# ---------------------------------------------------------------------------
# 分段多项式（样条）
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PiecewisePoly:
    """
    命名的一元分段多项式。knots 升序，pieces 比 knots 多一段，
    每段是按升幂排列的有理系数。第 i 段作用于 [knots[i-1], knots[i])。
    """
    name: str
    knots: tuple
    pieces: tuple

    def __post_init__(self):
        if not re.fullmatch(r'[A-Za-z_][A-Za-z_0-9]*', self.name) or self.name in FUNCTIONS:
            raise ExprError(f"样条名称不合法: {self.name}")
        if len(self.pieces) != len(self.knots) + 1:
            raise ExprError(f"样条 {self.name} 的段数必须比节点数多一")
        if any(b <= a for a, b in zip(self.knots, self.knots[1:])):
            raise ExprError(f"样条 {self.name} 的节点必须严格递增")

    def __call__(self, arg) -> ScalarExpr:
        return ScalarExpr(SPLINE, (as_expr(arg),), self)

    @property
    def degree(self) -> int:
        return max(len(p) for p in self.pieces) - 1

    def derivative(self) -> 'PiecewisePoly':
        return _spline_derivative(self)

    def piece_index(self, x: Fraction, side: str = 'right') -> int:
        idx = 0
        for k in self.knots:
            if x > k or (side == 'right' and x == k):
                idx += 1
        return idx

    def exact(self, x, side: str = 'right') -> Fraction:
        """
        精确求值；side 决定落在节点上时取左段还是右段
        """
        x = Fraction(x)
        coeffs = self.pieces[self.piece_index(x, side)]
        return sum((c * x ** k for k, c in enumerate(coeffs)), Fraction(0))

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        knots = np.array([float(k) for k in self.knots])
        idx = np.searchsorted(knots, x, side='right')
        out = np.empty_like(x)
        for i, coeffs in enumerate(self.pieces):
            mask = idx == i
            if np.any(mask):
                out[mask] = np.polynomial.polynomial.polyval(x[mask], [float(c) for c in coeffs])
        return out

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "knots": [str(k) for k in self.knots],
            "pieces": [[str(c) for c in p] for p in self.pieces],
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'PiecewisePoly':
        return cls(
            name=data["name"],
            knots=tuple(Fraction(k) for k in data["knots"]),
            pieces=tuple(tuple(Fraction(c) for c in p) for p in data["pieces"]),
        )


@lru_cache(maxsize=None)
def _spline_derivative(poly: PiecewisePoly) -> PiecewisePoly:
    m = re.fullmatch(r'(.*)_d(\d+)', poly.name)
    name = f"{m.group(1)}_d{int(m.group(2)) + 1}" if m else f"{poly.name}_d1"
    pieces = []
    for coeffs in poly.pieces:
        d = tuple(k * c for k, c in enumerate(coeffs))[1:]
        pieces.append(d or (Fraction(0),))
    return PiecewisePoly(name, poly.knots, tuple(pieces))


# ---------------------------------------------------------------------------
# 轻量构造器
# ---------------------------------------------------------------------------

def const(value: Number) -> ScalarExpr:
    if isinstance(value, bool):
        value = int(value)
    if isinstance(value, int):
        value = Fraction(value)
    elif isinstance(value, float):
        if not math.isfinite(value):
            raise ExprError(f"常数必须有限: {value}")
    elif not isinstance(value, Fraction):
        raise ExprError(f"无法作为常数: {value!r}")
    return ScalarExpr(CONST, (), value)


def var(name: str) -> ScalarExpr:
    return ScalarExpr(VAR, (), name)


ZERO = const(0)
ONE = const(1)


def as_expr(value) -> ScalarExpr:
    if isinstance(value, ScalarExpr):
        return value
    if isinstance(value, (int, float, Fraction)):
        return const(value)
    if isinstance(value, (np.integer, np.floating)):
        return const(value.item())
    raise ExprError(f"无法转换为表达式: {value!r}")


def add(*terms) -> ScalarExpr:
    flat = []
    total = Fraction(0)
    for t in terms:
        t = as_expr(t)
        parts = t.args if t.kind == ADD else (t,)
        for p in parts:
            if p.kind == CONST:
                total = total + p.value
            else:
                flat.append(p)
    if total != 0:
        flat.append(const(total))
    if not flat:
        return ZERO
    if len(flat) == 1:
        return flat[0]
    return ScalarExpr(ADD, tuple(flat))


def mul(*factors) -> ScalarExpr:
    flat = []
    coeff = Fraction(1)
    for f in factors:
        f = as_expr(f)
        parts = f.args if f.kind == MUL else (f,)
        for p in parts:
            if p.kind == CONST:
                coeff = coeff * p.value
            else:
                flat.append(p)
    if coeff == 0:
        return ZERO
    if coeff != 1:
        flat.insert(0, const(coeff))
    if not flat:
        return ONE
    if len(flat) == 1:
        return flat[0]
    return ScalarExpr(MUL, tuple(flat))


def neg(e) -> ScalarExpr:
    e = as_expr(e)
    if e.kind == CONST:
        return const(-e.value)
    if e.kind == NEG:
        return e.args[0]
    return ScalarExpr(NEG, (e,))


def sub(a, b) -> ScalarExpr:
    return add(a, neg(b))


def div(a, b) -> ScalarExpr:
    a, b = as_expr(a), as_expr(b)
    if b.kind == CONST:
        if b.value == 0:
            return ScalarExpr(DIV, (a, b))
        return mul(const(1 / Fraction(b.value) if isinstance(b.value, Fraction) else 1.0 / b.value), a)
    if a.kind == CONST and a.value == 0:
        return ZERO
    return ScalarExpr(DIV, (a, b))


def power(b, n: int) -> ScalarExpr:
    b = as_expr(b)
    if n == 0:
        return ONE
    if n == 1:
        return b
    if b.kind == CONST and (b.value != 0 or n > 0):
        return const(b.value ** n)
    if b.kind == POW:
        return power(b.args[0], b.value * n)
    return ScalarExpr(POW, (b,), int(n))


def _unary(kind: str, a) -> ScalarExpr:
    a = as_expr(a)
    if a.kind == CONST and a.value == 0:
        if kind in (EXP, COS):
            return ONE
        if kind == SIN:
            return ZERO
    if a.kind == CONST and a.value == 1 and kind == LN:
        return ZERO
    return ScalarExpr(kind, (a,))


def exp(a) -> ScalarExpr:
    return _unary(EXP, a)


def ln(a) -> ScalarExpr:
    return _unary(LN, a)


def sqrt(a) -> ScalarExpr:
    return ScalarExpr(SQRT, (as_expr(a),))


def sin(a) -> ScalarExpr:
    return _unary(SIN, a)


def cos(a) -> ScalarExpr:
    return _unary(COS, a)


def rebuild(kind: str, args: Sequence[ScalarExpr], value=None) -> ScalarExpr:
    """
    用轻量构造器按节点类型重建，供替换、化简等递归改写使用
    """
    if kind == CONST:
        return const(value)
    if kind == VAR:
        return var(value)
    if kind == ADD:
        return add(*args)
    if kind == MUL:
        return mul(*args)
    if kind == DIV:
        return div(args[0], args[1])
    if kind == POW:
        return power(args[0], value)
    if kind == NEG:
        return neg(args[0])
    if kind == SPLINE:
        return value(args[0])
    if kind == SQRT:
        return sqrt(args[0])
    return _unary(kind, args[0])


# ---------------------------------------------------------------------------
# 遍历工具
# ---------------------------------------------------------------------------

def free_vars(e: ScalarExpr) -> frozenset:
    if e._vars is None:
        if e.kind == VAR:
            fv = frozenset((e.value,))
        elif not e.args:
            fv = frozenset()
        else:
            fv = frozenset().union(*(free_vars(a) for a in e.args))
        object.__setattr__(e, '_vars', fv)
    return e._vars


def collect_splines(exprs: Iterable[ScalarExpr]) -> dict:
    """
    收集表达式中出现的全部样条（含导数样条），按名称返回
    """
    found = {}
    seen = set()
    stack = list(exprs)
    while stack:
        e = stack.pop()
        if id(e) in seen:
            continue
        seen.add(id(e))
        if e.kind == SPLINE:
            poly = e.value
            if poly.name in found and found[poly.name] != poly:
                raise ExprError(f"样条名称冲突: {poly.name}")
            found[poly.name] = poly
        stack.extend(e.args)
    return found


def substitute(e: ScalarExpr, mapping: Mapping[str, ScalarExpr]) -> ScalarExpr:
    """
    同时替换变量
    """
    mapping = {k: as_expr(v) for k, v in mapping.items()}
    memo = {}

    def walk(node):
        if node in memo:
            return memo[node]
        if node.kind == VAR:
            out = mapping.get(node.value, node)
        elif not node.args or not (free_vars(node) & mapping.keys()):
            out = node
        else:
            out = rebuild(node.kind, [walk(a) for a in node.args], node.value)
        memo[node] = out
        return out

    return walk(e)


def node_count(e: ScalarExpr) -> int:
    return 1 + sum(node_count(a) for a in e.args)


# ---------------------------------------------------------------------------
# 求导
# ---------------------------------------------------------------------------

def diff(e: ScalarExpr, v: str) -> ScalarExpr:
    """
    对变量 v 的精确符号导数
    :param e: 表达式
    :param v: 变量名
    :return: 导数表达式
    """
    memo = {}

    def d(node):
        if v not in free_vars(node):
            return ZERO
        if node in memo:
            return memo[node]
        k = node.kind
        a = node.args
        if k == VAR:
            out = ONE
        elif k == ADD:
            out = add(*(d(t) for t in a))
        elif k == MUL:
            terms = []
            for i, f in enumerate(a):
                df = d(f)
                if not df.is_zero():
                    terms.append(mul(*a[:i], df, *a[i + 1:]))
            out = add(*terms)
        elif k == DIV:
            num, den = a
            dn, dd = d(num), d(den)
            if dd.is_zero():
                out = div(dn, den)
            else:
                out = div(sub(mul(dn, den), mul(num, dd)), power(den, 2))
        elif k == POW:
            out = mul(const(node.value), power(a[0], node.value - 1), d(a[0]))
        elif k == NEG:
            out = neg(d(a[0]))
        elif k == EXP:
            out = mul(node, d(a[0]))
        elif k == LN:
            out = div(d(a[0]), a[0])
        elif k == SQRT:
            out = div(d(a[0]), mul(const(2), node))
        elif k == SIN:
            out = mul(cos(a[0]), d(a[0]))
        elif k == COS:
            out = neg(mul(sin(a[0]), d(a[0])))
        elif k == SPLINE:
            out = mul(node.value.derivative()(a[0]), d(a[0]))
        else:
            raise ExprError(f"未知节点类型: {k}")
        memo[node] = out
        return out

    return d(e)


# ---------------------------------------------------------------------------
# 数值求值
# ---------------------------------------------------------------------------

def evaluate(e: ScalarExpr, env: Mapping[str, object], strict: bool = True) -> np.ndarray:
    """
    在一组采样点上向量化求值。
    :param e: 表达式
    :param env: 变量名 -> 标量或一维数组
    :param strict: True 时定义域错误抛出 EvalDomainError；False 时对应点记为 NaN
    :return: 与采样数组同形状的 ndarray
    """
    arrays = {k: np.asarray(v, dtype=float) for k, v in env.items()}
    shape = np.broadcast_shapes(*(a.shape for a in arrays.values())) if arrays else ()
    memo = {}

    def bad(mask, message):
        if np.any(mask):
            if strict:
                raise EvalDomainError(message)
            return True
        return False

    def ev(node):
        if node in memo:
            return memo[node]
        k = node.kind
        if k == CONST:
            out = float(node.value)
        elif k == VAR:
            if node.value not in arrays:
                raise ExprError(f"变量未绑定: {node.value}")
            out = arrays[node.value]
        elif k == ADD:
            out = ev(node.args[0])
            for t in node.args[1:]:
                out = out + ev(t)
        elif k == MUL:
            out = ev(node.args[0])
            for t in node.args[1:]:
                out = out * ev(t)
        elif k == DIV:
            num, den = ev(node.args[0]), ev(node.args[1])
            zero = np.asarray(den) == 0
            if bad(zero, f"除零: {to_text(node.args[1])}"):
                with np.errstate(divide='ignore', invalid='ignore'):
                    out = np.where(zero, np.nan, num / np.where(zero, 1.0, den))
            else:
                out = num / den
        elif k == POW:
            base = ev(node.args[0])
            if node.value < 0:
                zero = np.asarray(base) == 0
                if bad(zero, f"除零: {to_text(node)}"):
                    with np.errstate(divide='ignore', invalid='ignore'):
                        out = np.where(zero, np.nan, np.where(zero, 1.0, base) ** float(node.value))
                else:
                    out = np.asarray(base, dtype=float) ** float(node.value)
            else:
                out = base ** node.value
        elif k == NEG:
            out = -ev(node.args[0])
        elif k == EXP:
            out = np.exp(ev(node.args[0]))
        elif k in (LN, SQRT):
            x = ev(node.args[0])
            invalid = np.asarray(x) <= 0
            fn = np.log if k == LN else np.sqrt
            name = 'ln' if k == LN else 'sqrt'
            if bad(invalid, f"{name} 的参数非正: {to_text(node.args[0])}"):
                out = np.where(invalid, np.nan, fn(np.where(invalid, 1.0, x)))
            else:
                out = fn(x)
        elif k == SIN:
            out = np.sin(ev(node.args[0]))
        elif k == COS:
            out = np.cos(ev(node.args[0]))
        elif k == SPLINE:
            out = node.value.evaluate(ev(node.args[0]))
        else:
            raise ExprError(f"未知节点类型: {k}")
        memo[node] = out
        return out

    result = ev(e)
    return np.broadcast_to(np.asarray(result, dtype=float), shape).copy()


def evaluate_at(e: ScalarExpr, bindings: Mapping[str, float]) -> float:
    return float(evaluate(e, bindings))


# ---------------------------------------------------------------------------
# 打印
# ---------------------------------------------------------------------------

_PREC = {ADD: 1, MUL: 2, DIV: 2, NEG: 3, POW: 4}


def _is_atom(e: ScalarExpr) -> bool:
    if e.kind == CONST:
        return isinstance(e.value, Fraction) and e.value.denominator == 1 and e.value >= 0
    return e.kind in (VAR, SPLINE) or e.kind in UNARY_KINDS


def _const_text(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def _wrap(text: str) -> str:
    return f"({text})"


def to_text(e: ScalarExpr) -> str:
    """
    按文法打印，parse(to_text(e)) 与 e 求值一致
    """
    if e._text is not None:
        return e._text
    k = e.kind
    if k == CONST:
        out = _const_text(e.value)
    elif k == VAR:
        out = e.value
    elif k == ADD:
        pieces = [_add_term(e.args[0], first=True)]
        for t in e.args[1:]:
            pieces.append(_add_term(t, first=False))
        out = "".join(pieces)
    elif k == MUL:
        parts = []
        for i, f in enumerate(e.args):
            txt = to_text(f)
            if f.kind == ADD or f.kind == MUL or (f.kind == DIV and i > 0):
                txt = _wrap(txt)
            elif f.kind == CONST and i > 0 and not _is_atom(f):
                txt = _wrap(txt)
            parts.append(txt)
        out = "*".join(parts)
    elif k == DIV:
        num, den = e.args
        nt = to_text(num)
        if num.kind == ADD:
            nt = _wrap(nt)
        dt = to_text(den)
        if not _is_atom(den) and den.kind not in (POW, NEG):
            dt = _wrap(dt)
        elif den.kind == NEG:
            dt = _wrap(dt)
        out = f"{nt}/{dt}"
    elif k == POW:
        b = e.args[0]
        bt = to_text(b)
        if not _is_atom(b):
            bt = _wrap(bt)
        out = f"{bt}^{e.value}"
    elif k == NEG:
        a = e.args[0]
        at = to_text(a)
        if not _is_atom(a):
            at = _wrap(at)
        out = f"-{at}"
    elif k in UNARY_KINDS:
        out = f"{k}({to_text(e.args[0])})"
    elif k == SPLINE:
        out = f"{e.value.name}({to_text(e.args[0])})"
    else:
        raise ExprError(f"未知节点类型: {k}")
    object.__setattr__(e, '_text', out)
    return out


def _add_term(t: ScalarExpr, first: bool) -> str:
    if first:
        txt = to_text(t)
        return _wrap(txt) if t.kind == ADD else txt
    if t.kind == NEG:
        inner = t.args[0]
        txt = to_text(inner)
        return f" - {_wrap(txt) if inner.kind == ADD else txt}"
    if t.kind == CONST and t.value < 0:
        return f" - {_const_text(-t.value)}"
    txt = to_text(t)
    return f" + {_wrap(txt) if t.kind == ADD else txt}"


# ---------------------------------------------------------------------------
# 解析
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"无法识别的字符 {text[pos]!r}", pos)
        start = m.start(m.lastgroup)
        tokens.append((m.lastgroup, m.group(m.lastgroup), start))
        pos = m.end()
    tokens.append(('end', '', len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, variables: Iterable[str], functions: Mapping[str, PiecewisePoly]):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.vars = set(variables)
        self.functions = dict(functions or {})

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, op):
        kind, val, pos = self.take()
        if kind != 'op' or val != op:
            raise ParseError(f"此处应为 {op!r}", pos)

    def parse(self) -> ScalarExpr:
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != 'end':
            raise ParseError(f"多余的输入 {val!r}", pos)
        return e

    def expr(self) -> ScalarExpr:
        terms = [self.term()]
        while self.peek()[0] == 'op' and self.peek()[1] in '+-':
            op = self.take()[1]
            t = self.term()
            if op == '-':
                t = const(-t.value) if t.kind == CONST else ScalarExpr(NEG, (t,))
            terms.append(t)
        if len(terms) == 1:
            return terms[0]
        return ScalarExpr(ADD, tuple(terms))

    def term(self) -> ScalarExpr:
        factors = [self.factor()]
        while self.peek()[0] == 'op' and self.peek()[1] in '*/':
            op, pos = self.take()[1], self.tokens[self.i - 1][2]
            f = self.factor()
            if op == '*':
                factors.append(f)
                continue
            left = factors[0] if len(factors) == 1 else ScalarExpr(MUL, tuple(factors))
            if left.kind == CONST and f.kind == CONST and isinstance(left.value, Fraction) \
                    and isinstance(f.value, Fraction) and f.value != 0:
                factors = [const(left.value / f.value)]
            else:
                factors = [ScalarExpr(DIV, (left, f))]
        if len(factors) == 1:
            return factors[0]
        return ScalarExpr(MUL, tuple(factors))

    def factor(self) -> ScalarExpr:
        b = self.base()
        if self.peek()[0] == 'op' and self.peek()[1] == '^':
            self.take()
            sign = 1
            if self.peek()[0] == 'op' and self.peek()[1] == '-':
                self.take()
                sign = -1
            kind, val, pos = self.take()
            if kind != 'num' or not val.isdigit():
                raise ParseError("'^' 后必须是整数", pos)
            b = ScalarExpr(POW, (b,), sign * int(val))
        return b

    def base(self) -> ScalarExpr:
        kind, val, pos = self.take()
        if kind == 'num':
            return const(Fraction(val))
        if kind == 'op' and val == '-':
            # -x^2 = -(x^2)
            inner = self.factor()
            if inner.kind == CONST:
                return const(-inner.value)
            return ScalarExpr(NEG, (inner,))
        if kind == 'op' and val == '(':
            e = self.expr()
            self.expect(')')
            return e
        if kind == 'ident':
            is_call = self.peek()[0] == 'op' and self.peek()[1] == '('
            if val in FUNCTIONS or val in self.functions:
                if not is_call:
                    raise ArityError(f"函数 {val} 缺少参数", pos)
                args = self.call_args(pos, val)
                if val in FUNCTIONS:
                    return ScalarExpr(FUNCTIONS[val], (args[0],))
                return ScalarExpr(SPLINE, (args[0],), self.functions[val])
            if val in self.vars:
                if is_call:
                    raise ArityError(f"变量 {val} 不能作为函数调用", pos)
                return var(val)
            raise UnknownIdentifierError(f"未知标识符 {val!r}", pos)
        if kind == 'end':
            raise ParseError("表达式不完整", pos)
        raise ParseError(f"意外的符号 {val!r}", pos)

    def call_args(self, pos, name):
        self.expect('(')
        if self.peek()[0] == 'op' and self.peek()[1] == ')':
            raise ArityError(f"函数 {name} 需要 1 个参数，实际 0 个", pos)
        args = [self.expr()]
        while self.peek()[0] == 'op' and self.peek()[1] == ',':
            self.take()
            args.append(self.expr())
        self.expect(')')
        if len(args) != 1:
            raise ArityError(f"函数 {name} 需要 1 个参数，实际 {len(args)} 个", pos)
        return args


def parse_expr(text: str, variables: Iterable[str], functions: Optional[Mapping[str, PiecewisePoly]] = None) -> ScalarExpr:
    """
    解析表达式文本。
    文法：expr := term (('+'|'-') term)*；term := factor (('*'|'/') factor)*；
    factor := base ('^' integer)?；base := number | ident | ident '(' expr ')' | '(' expr ')' | '-' base
    :param text: 表达式文本
    :param variables: 允许的变量名
    :param functions: 额外的样条函数注册表（名称 -> PiecewisePoly）
    :return: ScalarExpr
    """
    return _Parser(text, variables, functions).parse()


# ---------------------------------------------------------------------------
# 化简
# ---------------------------------------------------------------------------

def _sort_key(e: ScalarExpr):
    return (e.kind != CONST, to_text(e))


def _split_coeff(t: ScalarExpr):
    """
    把一项拆成 (常系数, 单项式)
    """
    if t.kind == CONST:
        return t.value, ONE
    if t.kind == NEG:
        c, rest = _split_coeff(t.args[0])
        return -c, rest
    if t.kind == MUL and t.args[0].kind == CONST:
        rest = t.args[1:]
        return t.args[0].value, rest[0] if len(rest) == 1 else ScalarExpr(MUL, rest)
    return Fraction(1), t


def _factorize(e: ScalarExpr):
    """
    乘积 -> (常系数, {底: 指数})
    """
    coeff = Fraction(1)
    powers = {}
    sign_parts = [e]
    items = []
    while sign_parts:
        x = sign_parts.pop()
        if x.kind == NEG:
            coeff = -coeff
            sign_parts.append(x.args[0])
        elif x.kind == MUL:
            sign_parts.extend(x.args)
        else:
            items.append(x)
    for x in items:
        if x.kind == CONST:
            coeff = coeff * x.value
        elif x.kind == POW:
            powers[x.args[0]] = powers.get(x.args[0], 0) + x.value
        else:
            powers[x] = powers.get(x, 0) + 1
    return coeff, powers


def _from_factors(coeff, powers) -> ScalarExpr:
    items = sorted(((b, k) for b, k in powers.items() if k != 0), key=lambda bk: _sort_key(bk[0]))
    num = [power(b, k) for b, k in items if k > 0]
    den = [power(b, -k) for b, k in items if k < 0]
    n = mul(const(coeff), *num)
    if den:
        return ScalarExpr(DIV, (n, mul(*den))) if n.kind != CONST or n.value != 0 else ZERO
    return n


def _simplify_add(args) -> ScalarExpr:
    queue = list(args)
    groups = {}
    order = []
    while queue:
        t = queue.pop(0)
        if t.kind == ADD:
            queue[0:0] = list(t.args)
            continue
        if t.kind == NEG and t.args[0].kind == ADD:
            queue[0:0] = [neg(a) for a in t.args[0].args]
            continue
        if t.kind == MUL and len(t.args) == 2 and t.args[0].kind == CONST and t.args[1].kind == ADD:
            c = t.args[0]
            queue[0:0] = [_simplify_node(mul(c, a)) for a in t.args[1].args]
            continue
        c, rest = _split_coeff(t)
        if rest not in groups:
            groups[rest] = c
            order.append(rest)
        else:
            groups[rest] = groups[rest] + c
    terms = []
    for rest in sorted(order, key=_sort_key):
        c = groups[rest]
        if c == 0:
            continue
        if rest.is_one():
            terms.append(const(c))
        elif c == 1:
            terms.append(rest)
        elif c == -1:
            terms.append(neg(rest))
        else:
            terms.append(mul(const(c), rest))
    return add(*terms)


def _simplify_mul(args) -> ScalarExpr:
    nums, dens = [], []
    for a in args:
        if a.kind == DIV:
            nums.append(a.args[0])
            dens.append(a.args[1])
        else:
            nums.append(a)
    if dens:
        return _simplify_div(mul(*nums), mul(*dens))
    coeff, powers = _factorize(mul(*nums))
    if coeff == 0:
        return ZERO
    return _from_factors(coeff, powers)


def _simplify_div(num: ScalarExpr, den: ScalarExpr) -> ScalarExpr:
    if num.is_zero():
        return ZERO
    if den.kind == CONST:
        if den.value == 0:
            return ScalarExpr(DIV, (num, den))
        return _simplify_node(mul(const(1 / Fraction(den.value) if isinstance(den.value, Fraction) else 1.0 / den.value), num))
    if num.kind == DIV:
        return _simplify_div(num.args[0], mul(num.args[1], den))
    if den.kind == DIV:
        return _simplify_div(mul(num, den.args[1]), den.args[0])
    if num == den:
        return ONE
    cn, pn = _factorize(num)
    cd, pd = _factorize(den)
    merged = dict(pn)
    for b, k in pd.items():
        merged[b] = merged.get(b, 0) - k
    coeff = cn / cd
    return _from_factors(coeff, merged)


def _simplify_node(e: ScalarExpr) -> ScalarExpr:
    k = e.kind
    a = e.args
    if k == ADD:
        return _simplify_add(a)
    if k == MUL:
        return _simplify_mul(a)
    if k == DIV:
        return _simplify_div(a[0], a[1])
    if k == NEG:
        inner = a[0]
        if inner.kind == ADD:
            return _simplify_add([neg(t) for t in inner.args])
        if inner.kind in (MUL, CONST, NEG):
            return _simplify_mul([const(-1), inner])
        return neg(inner)
    if k == POW:
        b, n = a[0], e.value
        if b.kind == NEG:
            out = power(b.args[0], n)
            return out if n % 2 == 0 else neg(out)
        if b.kind == MUL:
            return _simplify_mul([power(f, n) for f in b.args])
        if b.kind == DIV:
            return _simplify_div(power(b.args[0], n), power(b.args[1], n))
        if n < 0:
            return _simplify_div(ONE, power(b, -n))
        return power(b, n)
    if k == EXP:
        x = a[0]
        if x.kind == LN:
            return x.args[0]
        if x.kind == ADD:
            logs = [t for t in x.args if t.kind == LN or (t.kind == NEG and t.args[0].kind == LN)]
            if logs:
                rest = [t for t in x.args if t not in logs]
                ups = [t.args[0] for t in logs if t.kind == LN]
                downs = [t.args[0].args[0] for t in logs if t.kind == NEG]
                body = mul(exp(add(*rest)), *ups)
                return _simplify_div(body, mul(*downs)) if downs else _simplify_mul([body])
        return exp(x)
    if k == LN:
        x = a[0]
        if x.kind == EXP:
            return x.args[0]
        return ln(x)
    if k in (SIN, COS, SQRT, SPLINE, CONST, VAR):
        return rebuild(k, a, e.value)
    raise ExprError(f"未知节点类型: {k}")


@lru_cache(maxsize=200000)
def _simplify_once(e: ScalarExpr) -> ScalarExpr:
    if not e.args:
        return e
    args = tuple(_simplify_once(x) for x in e.args)
    node = e if args == e.args else ScalarExpr(e.kind, args, e.value)
    return _simplify_node(node)


def simplify(e: ScalarExpr) -> ScalarExpr:
    """
    保持语义的化简：常数折叠、0/1 消去、同类项合并、同底幂合并、约分。
    迭代到不动点；改写出现环时返回环上的规范代表（从环上任一点出发结果相同），因此幂等。
    """
    order = [e]
    index = {e: 0}
    while True:
        nxt = _simplify_once(order[-1])
        if nxt == order[-1]:
            return nxt
        if nxt in index:
            cycle = order[index[nxt]:]
            return min(cycle, key=lambda x: (len(to_text(x)), to_text(x)))
        index[nxt] = len(order)
        order.append(nxt)


def expand(e: ScalarExpr, max_power: int = 8) -> ScalarExpr:
    """
    展开乘积对和式的分配以及和式的正整数次幂，然后化简
    """
    memo = {}

    def terms_of(x):
        return x.args if x.kind == ADD else (x,)

    def ex(node):
        if node in memo:
            return memo[node]
        k = node.kind
        if k == ADD:
            out = add(*(ex(t) for t in node.args))
        elif k == NEG:
            out = add(*(neg(t) for t in terms_of(ex(node.args[0]))))
        elif k == MUL:
            acc = [ONE]
            for f in node.args:
                parts = terms_of(ex(f))
                acc = [mul(x, y) for x in acc for y in parts]
            out = add(*acc)
        elif k == POW and node.value > 1 and node.value <= max_power:
            base = ex(node.args[0])
            acc = [ONE]
            for _ in range(node.value):
                acc = [mul(x, y) for x in acc for y in terms_of(base)]
            out = add(*acc)
        elif k == DIV:
            num = ex(node.args[0])
            den = ex(node.args[1])
            out = add(*(div(t, den) for t in terms_of(num)))
        elif node.args:
            out = rebuild(k, [ex(x) for x in node.args], node.value)
        else:
            out = node
        memo[node] = out
        return out

    return simplify(ex(e))


# ---------------------------------------------------------------------------
# 采样点
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Point:
    """
    坐标卡上的一个点，维数与取值范围由 Chart.point 校验
    """
    chart_id: str
    values: tuple

    def bindings(self, variables: Sequence[str]) -> dict:
        if len(variables) != len(self.values):
            raise ExprError(f"点 {self.values} 的维数与变量表 {list(variables)} 不一致")
        return dict(zip(variables, (float(v) for v in self.values)))

    def to_dict(self) -> dict:
        return {"chart": self.chart_id, "values": [float(v) for v in self.values]}
