from fractions import Fraction

import numpy as np
import pytest

from core.errors import ArityError, EvalDomainError, ParseError, UnknownIdentifierError
from core.exprcore import (
    PiecewisePoly, collect_splines, diff, evaluate, expand, parse_expr, simplify, substitute, to_text, var,
)

XY = ("x", "y")

SAMPLES = [
    "x^2 + 2*x*y - 3/4",
    "-x^2 + y",
    "exp(x*y) + ln(1 + x^2) - sin(y)/(2 + cos(x))",
    "sqrt(2 + x*y)^3 - x/(1 + y^2)",
    "(x - y)^-2 * (x + y)",
    "-(x + 1)*(y - 2)/3",
    "2.5e-1*x - .5*y^3",
]


def _env(rng, count=200):
    return {"x": rng.uniform(0.2, 0.9, count), "y": rng.uniform(-0.9, -0.1, count)}


def test_precedence():
    e = parse_expr("-x^2 + 2*x*y - 3/4", XY)
    assert float(evaluate(e, {"x": 2.0, "y": 1.0})) == pytest.approx(-0.75)
    assert float(evaluate(parse_expr("-x^2", XY), {"x": 3.0})) == -9.0
    assert float(evaluate(parse_expr("2^-1 * x", XY), {"x": 4.0})) == 2.0
    assert float(evaluate(parse_expr("x/y/2", XY), {"x": 8.0, "y": 2.0})) == 2.0


@pytest.mark.parametrize("text,error", [
    ("x +", ParseError),
    ("q + x", UnknownIdentifierError),
    ("exp(x, y)", ArityError),
    ("exp()", ArityError),
    ("x(2)", ArityError),
    ("ln", ArityError),
    ("x ^ 1.5", ParseError),
    ("x $ y", ParseError),
    ("(x + y", ParseError),
])
def test_parse_errors(text, error):
    with pytest.raises(error):
        parse_expr(text, XY)


def test_parse_error_position():
    with pytest.raises(ParseError) as info:
        parse_expr("x + $", XY)
    assert info.value.position == 4


@pytest.mark.parametrize("text", SAMPLES)
def test_printing_reparses_to_same_values(text, rng):
    e = parse_expr(text, XY)
    again = parse_expr(to_text(e), XY)
    env = _env(rng)
    assert np.allclose(evaluate(e, env), evaluate(again, env), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("text", SAMPLES)
@pytest.mark.parametrize("v", XY)
def test_diff_matches_central_difference(text, v, rng):
    e = parse_expr(text, XY)
    env = _env(rng, 50)
    h = 1e-6
    up = dict(env)
    down = dict(env)
    up[v] = env[v] + h
    down[v] = env[v] - h
    numeric = (evaluate(e, up) - evaluate(e, down)) / (2 * h)
    assert np.allclose(evaluate(diff(e, v), env), numeric, rtol=1e-5, atol=1e-6)


@pytest.mark.parametrize("text", SAMPLES)
def test_simplify_keeps_values(text, rng):
    e = parse_expr(text, XY)
    env = _env(rng)
    assert np.allclose(evaluate(simplify(e), env), evaluate(e, env), rtol=1e-10, atol=1e-12)


def test_simplify_cancels():
    assert simplify(parse_expr("x - x", XY)).is_zero()
    assert simplify(parse_expr("x*y/(y*x)", XY)).is_one()
    five_x = simplify(parse_expr("2*x + 3*x", XY))
    assert float(evaluate(five_x, {"x": 1.5})) == pytest.approx(7.5)


@pytest.mark.parametrize("text", SAMPLES)
def test_simplify_is_idempotent(text):
    once = simplify(parse_expr(text, XY))
    assert simplify(once) == once


def test_simplify_settles_rewrite_cycle(monkeypatch):
    x, y = var("x"), var("y")
    monkeypatch.setattr("core.exprcore._simplify_once", lambda e: y if e == x else x)
    assert simplify(x) == x
    assert simplify(y) == x
    assert simplify(simplify(y)) == simplify(y)


def test_expand_polynomial_identity(rng):
    lhs = expand(parse_expr("(x + y)^3", XY))
    rhs = parse_expr("x^3 + 3*x^2*y + 3*x*y^2 + y^3", XY)
    assert lhs.kind == "add"
    env = _env(rng)
    assert np.allclose(evaluate(lhs, env), evaluate(rhs, env), rtol=1e-12)


def test_substitute_is_simultaneous():
    e = parse_expr("x - 2*y", XY)
    swapped = substitute(e, {"x": var("y"), "y": var("x")})
    assert float(evaluate(swapped, {"x": 1.0, "y": 5.0})) == pytest.approx(3.0)


def test_domain_errors():
    e = parse_expr("ln(x) + 1/y", XY)
    with pytest.raises(EvalDomainError):
        evaluate(e, {"x": np.array([1.0, -1.0]), "y": np.array([1.0, 1.0])})
    with pytest.raises(EvalDomainError):
        evaluate(e, {"x": 1.0, "y": 0.0})
    lenient = evaluate(e, {"x": np.array([1.0, -1.0]), "y": np.array([1.0, 1.0])}, strict=False)
    assert lenient[0] == pytest.approx(1.0)
    assert np.isnan(lenient[1])


def test_spline_node():
    ramp = PiecewisePoly("ramp", (Fraction(0),), ((Fraction(0),), (Fraction(0), Fraction(1))))
    e = parse_expr("ramp(x) + 1", XY, {"ramp": ramp})
    assert np.allclose(evaluate(e, {"x": np.array([-1.0, 0.5])}), [1.0, 1.5])
    slope = diff(e, "x")
    assert np.allclose(evaluate(slope, {"x": np.array([-1.0, 0.5])}), [0.0, 1.0])
    assert to_text(e).startswith("ramp(x)")
    found = collect_splines([slope])
    assert "ramp_d1" in found
    again = parse_expr(to_text(slope), XY, found)
    assert np.allclose(evaluate(again, {"x": np.array([-1.0, 0.5])}), [0.0, 1.0])
    assert PiecewisePoly.from_dict(ramp.to_dict()) == ramp
