from itertools import combinations

import numpy as np
import pytest

from core.errors import ChartError, ChartMismatchError, DegreeError
from core.exprcore import add, const, evaluate
from core.forms import (
    Chart, ChartMap, DifferentialForm, VectorField, ext_d, interior, lie, nwedge, pullback, top_coeff, wedge,
)

DIMS = (2, 3, 4, 5)
# 每个次数的随机形式个数
TRIALS = 100


def _chart(dim, name=None, orientation=1):
    return Chart(name or f"R{dim}", tuple(f"u{i}" for i in range(dim)), ((-1.0, 1.0),) * dim, orientation)


def _scalar(chart, rng):
    vs = chart.coords()
    terms = [const(float(rng.normal()))]
    for _ in range(2):
        i, j = rng.integers(0, chart.dim, 2)
        terms.append(const(float(rng.normal())) * vs[i] * vs[j])
    k = rng.integers(0, chart.dim)
    terms.append(const(float(rng.normal())) * vs[k] ** 3)
    return add(*terms)


def _form(chart, degree, rng, terms=3):
    keys = list(combinations(range(chart.dim), degree))
    picked = rng.choice(len(keys), size=min(terms, len(keys)), replace=False)
    return DifferentialForm(chart, degree, {keys[i]: _scalar(chart, rng) for i in picked})


def _field(chart, rng):
    return VectorField(chart, tuple(_scalar(chart, rng) for _ in range(chart.dim)))


def _is_zero(form, env, tol=1e-9):
    size = len(next(iter(env.values())))
    for c in form.evaluate(env).values():
        assert np.max(np.abs(np.broadcast_to(c, (size,)))) <= tol


@pytest.mark.parametrize("dim", DIMS)
def test_d_squared_vanishes(dim, rng, sample_env):
    chart = _chart(dim)
    env = sample_env(chart, 20)
    for degree in range(dim - 1):
        for _ in range(TRIALS):
            _is_zero(ext_d(ext_d(_form(chart, degree, rng))), env)


@pytest.mark.parametrize("dim", DIMS)
def test_graded_commutativity(dim, rng, sample_env, forms_close):
    chart = _chart(dim)
    env = sample_env(chart, 20)
    for p in range(1, dim):
        for q in range(1, dim - p + 1):
            for _ in range(TRIALS):
                a, b = _form(chart, p, rng), _form(chart, q, rng)
                ab = wedge(a, b)
                ba = wedge(b, a)
                forms_close(ab, ba if (p * q) % 2 == 0 else -ba, env)


@pytest.mark.parametrize("dim", DIMS)
def test_leibniz_rule(dim, rng, sample_env, forms_close):
    chart = _chart(dim)
    env = sample_env(chart, 20)
    for p in range(dim):
        for q in range(dim - p):
            for _ in range(TRIALS):
                a, b = _form(chart, p, rng), _form(chart, q, rng)
                sign = 1 if p % 2 == 0 else -1
                rhs = wedge(ext_d(a), b) + wedge(a, ext_d(b)).scale(sign)
                forms_close(ext_d(wedge(a, b)), rhs, env)


@pytest.mark.parametrize("dim", DIMS)
def test_lie_derivative_identities(dim, rng, sample_env, forms_close):
    chart = _chart(dim)
    env = sample_env(chart, 20)
    for degree in range(dim):
        for _ in range(TRIALS):
            a = _form(chart, degree, rng)
            X = _field(chart, rng)
            forms_close(lie(X, ext_d(a)), ext_d(lie(X, a)), env, 1e-8)
            if degree == 0:
                f = a.coeffs.get((), const(0))
                expected = DifferentialForm.function(chart, X.apply(f))
                forms_close(lie(X, a), expected, env)
            if degree >= 2:
                _is_zero(interior(X, interior(X, a)), env)


@pytest.mark.parametrize("dim", DIMS)
def test_lie_derivative_of_wedge(dim, rng, sample_env, forms_close):
    chart = _chart(dim)
    env = sample_env(chart, 20)
    for p in range(1, dim):
        q = dim - p
        for _ in range(TRIALS):
            a, b = _form(chart, p, rng), _form(chart, q, rng)
            X = _field(chart, rng)
            forms_close(lie(X, wedge(a, b)), wedge(lie(X, a), b) + wedge(a, lie(X, b)), env, 1e-8)


@pytest.mark.parametrize("dim", DIMS)
def test_pullback_naturality(dim, rng, sample_env, forms_close):
    source = _chart(dim, "src")
    target = _chart(dim, "dst")
    env = sample_env(source, 20)
    for degree in range(dim):
        for _ in range(TRIALS):
            m = ChartMap(source, target, tuple(_scalar(source, rng) for _ in range(dim)))
            a = _form(target, degree, rng)
            forms_close(pullback(m, ext_d(a)), ext_d(pullback(m, a)), env, 1e-8)
            if degree + 1 <= dim:
                b = _form(target, 1, rng)
                forms_close(pullback(m, wedge(a, b)), wedge(pullback(m, a), pullback(m, b)), env, 1e-8)


def test_pullback_of_top_form_is_jacobian_determinant(sample_env):
    plane = Chart("polar", ("r", "t"), ((0.1, 1.0), (0.0, 3.0)))
    xy = Chart("xy", ("x", "y"), ((-2.0, 2.0), (-2.0, 2.0)))
    m = ChartMap.from_named(plane, xy, {"x": "r*cos(t)", "y": "r*sin(t)"})
    area = pullback(m, DifferentialForm.volume(xy))
    env = sample_env(plane, 50)
    assert np.allclose(evaluate(top_coeff(area), env), env["r"], atol=1e-12)


def test_nwedge_and_top_coeff():
    chart = Chart("R4", ("x", "y", "z", "w"), ((-1.0, 1.0),) * 4)
    omega = DifferentialForm.from_named(chart, 2, {"x,y": "1", "z,w": "1"})
    assert float(evaluate(top_coeff(nwedge(omega, 2)), {})) == 2.0
    flipped = chart.with_orientation(-1, "R4m")
    omega_m = DifferentialForm.from_named(flipped, 2, {"x,y": "1", "z,w": "1"})
    assert float(evaluate(top_coeff(nwedge(omega_m, 2)), {})) == -2.0
    one = DifferentialForm.from_named(chart, 1, {"x": "y", "z": "1"})
    assert nwedge(one, 2).simplified().is_zero()
    with pytest.raises(DegreeError):
        nwedge(omega, 3)
    with pytest.raises(DegreeError):
        top_coeff(omega)


def test_chart_validation():
    with pytest.raises(ChartError):
        Chart("bad", ("x", "x"), ((0, 1), (0, 1)))
    with pytest.raises(ChartError):
        Chart("bad", ("x",), ((1, 0),))
    chart = _chart(2)
    with pytest.raises(ChartError):
        chart.point([0.0, 2.0])
    assert chart.point([0.5, -0.5]).values == (0.5, -0.5)
    assert Chart.from_dict(chart.id, chart.to_dict()) == chart


def test_mixed_charts_rejected():
    a = DifferentialForm.dx(_chart(2, "A"), "u0")
    b = DifferentialForm.dx(_chart(2, "B"), "u1")
    with pytest.raises(ChartMismatchError):
        wedge(a, b)
    with pytest.raises(DegreeError):
        wedge(DifferentialForm.volume(_chart(2, "A")), a)


def test_from_named_uses_antisymmetry():
    chart = _chart(3)
    form = DifferentialForm.from_named(chart, 2, {("u1", "u0"): "u2"})
    assert float(evaluate(form.component((0, 1)), {"u2": 2.0})) == -2.0
    assert float(evaluate(form.component((1, 0)), {"u2": 2.0})) == 2.0
    assert list(form.to_dict()["coeffs"]) == ["u0,u1"]


def test_chart_map_identity_and_jacobian(rng, sample_env, forms_close):
    chart = _chart(3)
    a = _form(chart, 2, rng)
    env = sample_env(chart, 50)
    forms_close(pullback(ChartMap.identity(chart), a), a, env)
    plane = Chart("polar", ("r", "t"), ((0.1, 1.0), (0.0, 3.0)))
    xy = Chart("xy", ("x", "y"), ((-2.0, 2.0), (-2.0, 2.0)))
    jac = ChartMap.from_named(plane, xy, {"x": "r*cos(t)", "y": "r*sin(t)"}).jacobian()
    env = sample_env(plane, 50)
    det = evaluate(jac[0][0], env) * evaluate(jac[1][1], env) - evaluate(jac[0][1], env) * evaluate(jac[1][0], env)
    assert np.allclose(det, env["r"], atol=1e-12)


def test_component_named_follows_permutation_sign():
    chart = Chart("R4", ("x", "y", "z", "w"), ((-1.0, 1.0),) * 4)
    omega = DifferentialForm.from_named(chart, 2, {"x,y": "1", "z,w": "x"})
    assert float(evaluate(omega.component_named(["y", "x"]), {})) == -1.0
    assert float(evaluate(omega.component_named(["w", "z"]), {"x": 0.5})) == -0.5
    assert float(evaluate(omega.component_named(["x", "x"]), {})) == 0.0
    with pytest.raises(ChartError):
        omega.component_named(["x", "q"])
