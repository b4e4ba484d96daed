import math

import numpy as np
import pytest

from core.errors import PreconditionError, ProfileError
from core.exprcore import evaluate
from core.forms import ext_d, nwedge, top_coeff
from core.models import (
    GLUING_TOLERANCE, MODELS, AsymmetricDouble, asymmetric_double, build_model, dividing_collar, double_cobordism,
    fold_collar, ideal_completion_collar,
)
from core.profiles import BRIDGE_F, make_profile
from core.structures import (
    FAIL, PASS, SampleGrid, check_contact, check_folded, check_folded_weinstein, check_positive_contact_type,
    check_pullback, check_symplectic, liouville_values,
)


@pytest.mark.parametrize("name", sorted(MODELS))
def test_every_model_exports_consistent_contents(name):
    contents = build_model(name, 1).contents()
    assert contents.checks
    for form in contents.forms.values():
        assert form.chart.id in contents.charts
    for chart_id, _ in contents.folds.values():
        assert chart_id in contents.charts
    named = set(contents.forms) | set(contents.fields) | set(contents.folds) | set(contents.scalars) | set(contents.maps)
    for check in contents.checks:
        for key in ("form", "field", "fold", "phi", "map", "target"):
            if key in check:
                assert check[key] in named
        assert check.get("grid") in contents.grids


def test_unknown_model():
    with pytest.raises(PreconditionError):
        build_model("klein-bottle")


def test_ideal_collar_liouville_field(sample_env):
    model = ideal_completion_collar(2)
    env = sample_env(model.chart, 1000)
    X, singular = liouville_values(model.lam, env)
    assert not np.any(singular)
    expected = model.expected_field.evaluate(env).T
    assert np.max(np.abs(X - expected)) <= 1e-9
    top = evaluate(top_coeff(nwedge(model.omega, 2)), env)
    assert np.allclose(top, evaluate(model.expected_top, env), rtol=1e-9, atol=1e-12)
    assert np.all(top > 0)


def test_ideal_collar_is_symplectic():
    model = ideal_completion_collar(2)
    report = check_symplectic(model.omega, model.grid(5))
    assert report.verdict == PASS
    assert report.min_margin > 0


def test_ideal_collar_rejects_wrong_profile():
    with pytest.raises(ProfileError):
        ideal_completion_collar(2, u=make_profile(BRIDGE_F, variable="s"))


@pytest.mark.parametrize("mu", ["1", "2 + x1^2", "exp(y2)"])
def test_asymmetric_double_gluing(mu, sample_env, forms_close):
    model = asymmetric_double(2, mu=mu)
    assert model.gluing_residual(1000) <= 1e-10
    env = sample_env(model.gamma, 200)
    forms_close(model.fold_form, model.alpha_minus.scale(math.e), env, 1e-12)


def test_asymmetric_double_structures():
    model = asymmetric_double(2, mu="2 + x1^2")
    grid = model.grid(5)
    assert check_contact(model.alpha_minus, SampleGrid.default(model.gamma, 5)).verdict == PASS
    assert check_folded(model.omega, model.fold, grid).verdict == PASS
    assert check_positive_contact_type(model.lam0, model.fold, grid).verdict == PASS
    assert check_folded_weinstein(model.lam0, model.phi, model.fold, grid).verdict == PASS


def test_asymmetric_double_requires_positive_scaling():
    with pytest.raises(ProfileError):
        asymmetric_double(2, mu="x1 - 2")


def test_asymmetric_double_declares_gluing_check():
    model = asymmetric_double(2, mu="2 + x1^2")
    assert model.gluing <= GLUING_TOLERANCE
    contents = model.contents()
    assert contents.meta["gluing_residual"] == model.gluing
    assert {"kind": "pullback", "expect": "pass", "map": "shift", "form": "lam_plus", "target": "lam_minus",
            "grid": "symp"} in contents.checks
    grid = SampleGrid.default(model.symplectization, 5)
    assert check_pullback(model.shift, model.lam_plus, model.lam_minus, grid).verdict == PASS
    # ψ̄*λ₊ = λ₋ = λ₊/μ，μ ≥ 2 时与 λ₊ 不同
    wrong = check_pullback(model.shift, model.lam_plus, model.lam_plus, grid)
    assert wrong.verdict == FAIL
    assert wrong.details["residual_max"] > 0.1


def test_asymmetric_double_rejects_broken_gluing(monkeypatch):
    monkeypatch.setattr(AsymmetricDouble, "gluing_residual", lambda self, count=1000, seed=0: 1e-3)
    with pytest.raises(ProfileError):
        asymmetric_double(2, mu="2")


def test_double_bridge_sides():
    model = double_cobordism(2)
    for piece, contact_type in ((model.plus, PASS), (model.minus, FAIL)):
        grid = piece.grid(5)
        assert check_folded(piece.omega, piece.fold, grid).verdict == PASS
        assert check_positive_contact_type(piece.lam, piece.fold, grid).verdict == contact_type


def test_weinstein_double_has_no_negative_end():
    model = double_cobordism(2, include_minus=False)
    assert model.minus is None
    assert model.contents().meta["weinstein_double"] is True
    with pytest.raises(ProfileError):
        double_cobordism(2, f_plus=make_profile(BRIDGE_F, variable="z", mode="minus"))


def test_collar_widths():
    with pytest.raises(PreconditionError):
        fold_collar(2, eps=0.95)
    with pytest.raises(PreconditionError):
        dividing_collar(2, eps=1.5)
    model = fold_collar(2)
    grid = model.grid(5)
    assert check_folded(ext_d(model.lam), model.fold, grid).verdict == PASS
    assert check_positive_contact_type(model.lam, model.fold, grid).verdict == PASS
