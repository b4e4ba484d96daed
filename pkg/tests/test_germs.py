import numpy as np
import pytest

from core.atlas import BAND
from core.errors import CertificationError, DegreeError, PreconditionError, ProfileError
from core.exprcore import ONE, evaluate, power, var
from core.forms import Chart, DifferentialForm, top_coeff
from core.germs import (
    ContactGerm, FoldedPresentation, collar_volume_residual, fold_to_germ, germ_to_fold, hausdorff_distance,
    ideal_alignment, ideal_liouville_pieces, normalize_contact_pair, omega_f, omega_f_identity_residual, roundtrip_fold,
)
from core.models import darboux_folded, dividing_collar, fold_collar, folded_sphere
from core.profiles import LEMMA41_F, make_profile
from core.structures import FAIL, FoldSpec, fold_samples


@pytest.fixture(scope="module")
def collar_model():
    return fold_collar(2)


@pytest.fixture(scope="module")
def dividing():
    return dividing_collar(2)


@pytest.fixture
def dividing_germ(dividing):
    return ContactGerm(dividing.chart, dividing.f, dividing.beta, collar=dividing.collar)


def test_omega_f_collar_identity(collar_model):
    f = make_profile(LEMMA41_F, eps=0.5).expr(var("tau"))
    assert omega_f_identity_residual(f, collar_model.collar, count=1000) <= 1e-9


def test_fold_to_germ_on_collar(collar_model):
    fp = FoldedPresentation(collar_model.lam, collar_model.fold, collar_model.collar)
    germ = fold_to_germ(fp, grid=collar_model.grid(5))
    assert germ.certified
    assert germ.report.min_margin > 0
    assert germ.normalization["omega_f_identity"] <= 1e-9
    assert germ.normalization["dividing_set_residual"] <= 1e-9
    assert fp.certified


def test_fold_to_germ_rejects_wrong_primitive():
    model = darboux_folded(2)
    with pytest.raises(PreconditionError):
        fold_to_germ(FoldedPresentation(model.lam_tilde, model.fold), grid=model.grid(5))


def test_collar_volume_identity(dividing_germ):
    assert collar_volume_residual(dividing_germ, count=1000) <= 1e-9
    with pytest.raises(PreconditionError):
        collar_volume_residual(ContactGerm(dividing_germ.chart, dividing_germ.f, dividing_germ.beta))


def test_normalize_then_fold(dividing, dividing_germ):
    grid = dividing.grid(5)
    normalized = normalize_contact_pair(dividing_germ, grid=grid)
    checks = normalized.normalization
    assert checks["slope_min"] >= 0
    assert checks["collar_slope_min"] >= 0
    assert checks["C"] == pytest.approx(4.0)
    assert normalized.certified

    fp = germ_to_fold(normalized, grid)
    assert fp.certified
    assert fp.identities["fold_restriction"] <= 1e-12
    assert fp.identities["collar_volume"] <= 1e-9
    fold = fold_samples(fp.fold, grid)
    assert np.max(np.abs(fold["tau"])) <= 1e-9


def test_germ_to_fold_without_dividing_set(dividing):
    positive = ContactGerm(dividing.chart, ONE + power(var("tau"), 2), dividing.beta)
    with pytest.raises(PreconditionError):
        germ_to_fold(positive, dividing.grid(4))


def test_normalize_rejects_infeasible_parameters(dividing_germ):
    with pytest.raises(ProfileError):
        normalize_contact_pair(dividing_germ, eps=0.5, delta=0.2, eps_prime=0.2)


def test_germ_requires_even_dimension():
    chart = Chart("odd", ("a", "b", "c"), ((-1.0, 1.0),) * 3)
    with pytest.raises(DegreeError):
        ContactGerm(chart, var("a"), DifferentialForm.dx(chart, "b"))


def test_ideal_alignment(dividing_germ):
    dots = ideal_alignment(dividing_germ, count=200)
    assert dots["plus"].size == 200
    assert dots["minus"].size == 200
    assert np.max(np.abs(dots["plus"] - 1.0)) <= 1e-6
    assert np.max(np.abs(dots["minus"] + 1.0)) <= 1e-6


def test_roundtrip_darboux():
    model = darboux_folded(2)
    report = roundtrip_fold(FoldedPresentation(model.lam, model.fold), grid=model.grid(5))
    assert report.passed
    assert report.hausdorff < report.bound
    assert report.sign_mismatches == 0
    assert report.compared > 0


def test_roundtrip_folded_sphere():
    model = folded_sphere(1)
    fp = FoldedPresentation(model.lam[BAND], model.fold)
    report = roundtrip_fold(fp, grid=model.grid(BAND, 9))
    assert report.passed
    assert report.sign_mismatches == 0


def test_hausdorff_distance():
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    b = np.array([[0.0, 0.0], [1.0, 0.0], [4.0, 4.0]])
    assert hausdorff_distance(a, a) == 0.0
    assert hausdorff_distance(a, b) == pytest.approx(5.0)
    assert hausdorff_distance(np.zeros((0, 2)), np.zeros((0, 2))) == 0.0
    assert hausdorff_distance(a, np.zeros((0, 2))) == float('inf')


def test_fold_spec_of_germ_matches_dividing_set(dividing_germ, dividing):
    fp = germ_to_fold(dividing_germ, dividing.grid(5))
    assert fp.fold == FoldSpec(dividing_germ.f)
    assert fp.identities["fold_restriction"] <= 1e-12


def test_omega_f_on_plane(sample_env):
    chart = Chart("xy", ("x", "y"), ((-1.0, 1.0),) * 2)
    lam = DifferentialForm.from_named(chart, 1, {"x": "-y/2", "y": "x/2"})
    omega = DifferentialForm.from_named(chart, 2, {"x,y": "1"})
    env = sample_env(chart, 100)
    top = evaluate(top_coeff(omega_f(var("x"), lam, omega)), env)
    assert np.allclose(top, env["x"] / 2, atol=1e-12)
    with pytest.raises(DegreeError):
        omega_f(var("x"), lam, lam)


def test_ideal_pieces_rescale_beta(dividing_germ, sample_env, forms_close):
    pieces = ideal_liouville_pieces(dividing_germ)
    env = sample_env(dividing_germ.chart, 200, 0.05)
    forms_close(pieces.lam_plus.scale(dividing_germ.f), dividing_germ.beta, env, 1e-9)
    assert pieces.lam_minus is pieces.lam_plus


def test_collar_germ_requires_matching_scale(dividing):
    bump = ONE + power(var("tau"), 2)
    with pytest.raises(PreconditionError):
        ContactGerm(dividing.chart, dividing.f, dividing.beta, collar=dividing.collar, scale=bump)
    tilted = ONE + var("x1") / 2
    with pytest.raises(PreconditionError):
        ContactGerm(dividing.chart, dividing.f, dividing.beta.scale(tilted), collar=dividing.collar, scale=tilted)
    scaled = ContactGerm(dividing.chart, dividing.f, dividing.beta.scale(bump), collar=dividing.collar, scale=bump)
    assert collar_volume_residual(scaled) <= 1e-9


def test_germ_to_fold_rejects_failed_collar_identity(dividing, dividing_germ):
    # 构造之后改写 scale，β = scale·β_Γ 不再成立
    dividing_germ.scale = ONE + power(var("tau"), 2)
    with pytest.raises(CertificationError) as info:
        germ_to_fold(dividing_germ, dividing.grid(5))
    report = info.value.report
    assert report.verdict == FAIL
    assert report.property == "identity:collar_volume"
    assert report.min_margin < 0
    assert report.details["identities"]["collar_volume"] > 0.1
