import numpy as np
import pytest

from core.atlas import BAND, LOWER, UPPER
from core.errors import DegreeError, PreconditionError
from core.exprcore import evaluate, var
from core.forms import Chart, DifferentialForm, VectorField, ext_d, interior, lie, nwedge, top_coeff
from core.models import convex_sphere, darboux_folded, standard_contact_chart
from core.structures import (
    FAIL, INCONCLUSIVE, PASS, FoldSpec, SampleGrid, StructureReport, characteristic_field, characteristic_foliation,
    check_contact, check_contact_vector_field, check_folded, check_gradient_like, check_liouville,
    check_positive_contact_type, check_symplectic, dividing_set_samples, fold_samples, liouville_field, null_foliation,
    pfaffian, reeb_field,
)


@pytest.fixture(scope="module")
def darboux():
    return darboux_folded(2)


@pytest.fixture(scope="module")
def convex():
    return convex_sphere(1)


@pytest.fixture
def xyz():
    return Chart("xyz", ("x", "y", "z"), ((-1.0, 1.0),) * 3)


def test_darboux_top_power(darboux, sample_env):
    env = sample_env(darboux.chart, 1000)
    top = evaluate(top_coeff(nwedge(darboux.omega, 2)), env)
    assert np.max(np.abs(top - 2 * env["y1"])) <= 1e-12


def test_darboux_folded(darboux):
    report = check_folded(darboux.omega, darboux.fold, SampleGrid.default(darboux.chart, 6))
    assert report.verdict == PASS
    assert report.details["normal_derivative_min"] == pytest.approx(2.0, abs=1e-9)
    assert report.details["normal_derivative_max"] == pytest.approx(2.0, abs=1e-9)
    assert report.details["fold_count"] > 0
    assert report.min_margin > 0


def test_darboux_primitives(darboux, sample_env, forms_close):
    env = sample_env(darboux.chart, 200)
    forms_close(ext_d(darboux.lam), darboux.omega, env)
    forms_close(ext_d(darboux.lam_tilde), darboux.omega, env)


@pytest.mark.parametrize("form,field", [("lam", "liouville_lam"), ("lam_tilde", "liouville_lam_tilde")])
def test_darboux_liouville_fields(darboux, form, field):
    grid = SampleGrid.default(darboux.chart, 6)
    report = check_liouville(getattr(darboux, form), grid, getattr(darboux, field))
    assert report.verdict == PASS
    assert report.details["deviation_max"] <= 1e-9


def test_liouville_skips_fold_points(darboux):
    # 奇数点数的网格含 y1 = 0
    report = check_liouville(darboux.lam, SampleGrid.default(darboux.chart, 5), darboux.liouville_lam)
    assert report.details["singular"] == 5 ** 3
    assert report.verdict == PASS
    assert report.notes


def test_symbolic_liouville_field(darboux, sample_env):
    X = liouville_field(darboux.lam_tilde)
    env = sample_env(darboux.chart, 100)
    got = X.evaluate(env)
    want = darboux.liouville_lam_tilde.evaluate(env)
    assert np.allclose(np.broadcast_to(got, want.shape), want, atol=1e-12)


def test_positive_contact_type(darboux):
    grid = SampleGrid.default(darboux.chart, 6)
    assert check_positive_contact_type(darboux.lam, darboux.fold, grid).verdict == PASS
    tilde = check_positive_contact_type(darboux.lam_tilde, darboux.fold, grid)
    assert tilde.verdict == FAIL
    assert tilde.min_margin <= 0


def test_null_foliation_direction(darboux):
    k = null_foliation(darboux.omega, darboux.fold, [0.0, 0.0, 0.2, -0.3])
    assert np.allclose(np.abs(k), [1.0, 0.0, 0.0, 0.0], atol=1e-12)
    with pytest.raises(PreconditionError):
        null_foliation(darboux.omega, darboux.fold, [0.0, 0.5, 0.0, 0.0])


def test_reeb_field():
    gamma, alpha = standard_contact_chart(2)
    assert np.allclose(reeb_field(alpha, [0.1, 0.2, -0.3]), [1.0, 0.0, 0.0])


def test_convex_sphere_contact(convex):
    grid = SampleGrid.default(convex.chart, 9)
    assert check_contact(convex.alpha, grid).verdict == PASS
    report = check_contact_vector_field(convex.alpha, convex.X, grid, hypersurface=convex.hypersurface)
    assert report.verdict == PASS
    assert report.details["conformal_factor_min"] == pytest.approx(1.0)
    assert report.details["conformal_factor_max"] == pytest.approx(1.0)


def test_convex_sphere_identities(convex, sample_env, forms_close):
    env = sample_env(convex.chart, 200)
    forms_close(lie(convex.X, convex.alpha), convex.alpha, env)
    contraction = interior(convex.X, convex.alpha).coeffs[()]
    assert np.allclose(evaluate(contraction, env), env["z"], atol=1e-12)


@pytest.mark.parametrize("cid", [UPPER, LOWER])
def test_convex_sphere_gradient_like(convex, cid):
    beta = convex.germs[cid][1]
    report = check_gradient_like(characteristic_field(beta), convex.phi[cid], convex.critical_points[cid],
                                 convex.grid(cid, 9))
    assert report.verdict == PASS


def test_dividing_set_is_equator(convex):
    amb = convex.atlas.ambient
    band = convex.atlas.chart(BAND)
    embedding = convex.atlas.embeddings[BAND]
    grid = SampleGrid.default(band, 9)
    out = dividing_set_samples(convex.alpha.on_chart(amb), VectorField(amb, convex.X.components), embedding, grid)
    assert out["chart"][band.variables[0]].size > 0
    assert np.max(np.abs(out["ambient"]["z"])) <= 1e-9
    with pytest.raises(PreconditionError):
        dividing_set_samples(convex.alpha, convex.X, embedding, grid)


def test_characteristic_foliation_singular_point(convex):
    f, beta = convex.germs[UPPER]
    at_pole = characteristic_foliation(f, beta, [0.0, 0.0])
    assert at_pole.singular and at_pole.direction is None
    assert at_pole.sign == 1
    off = characteristic_foliation(f, beta, [0.3, 0.2])
    assert not off.singular
    assert np.linalg.norm(off.direction) == pytest.approx(1.0)


def test_gradient_like_rejects_undeclared_critical_point(convex):
    beta = convex.germs[UPPER][1]
    with pytest.raises(PreconditionError):
        check_gradient_like(characteristic_field(beta), convex.phi[UPPER], (), convex.grid(UPPER, 9))
    with pytest.raises(PreconditionError):
        check_gradient_like(characteristic_field(beta), convex.phi[UPPER], ([0.2, 0.2],), convex.grid(UPPER, 9))


def test_degenerate_contact_form_fails(xyz):
    report = check_contact(DifferentialForm.dx(xyz, "z"), SampleGrid.default(xyz, 5))
    assert report.verdict == FAIL
    assert report.min_margin <= 0
    assert report.witness is not None and report.witness.chart_id == "xyz"


def test_undefined_samples_are_inconclusive(xyz):
    alpha = DifferentialForm.from_named(xyz, 1, {"z": "1", "y": "sqrt(x + 1/2)"})
    report = check_contact(alpha, SampleGrid.default(xyz, 5))
    assert report.verdict == INCONCLUSIVE


def test_symplectic_detects_sign_change(darboux):
    plane = Chart("plane", ("x", "y"), ((-1.0, 1.0),) * 2)
    std = DifferentialForm.from_named(plane, 2, {"x,y": "1"})
    assert check_symplectic(std, SampleGrid.default(plane, 5)).verdict == PASS
    report = check_symplectic(darboux.omega, SampleGrid.default(darboux.chart, 4))
    assert report.verdict == FAIL


def test_degree_and_dimension_errors(xyz, darboux):
    with pytest.raises(DegreeError):
        check_contact(darboux.lam, SampleGrid.default(darboux.chart, 3))
    with pytest.raises(DegreeError):
        check_symplectic(darboux.lam, SampleGrid.default(darboux.chart, 3))
    with pytest.raises(DegreeError):
        check_folded(DifferentialForm.from_named(xyz, 2, {"x,y": "z"}), FoldSpec(var("z")), SampleGrid.default(xyz, 3))


def test_fold_preconditions(darboux):
    with pytest.raises(PreconditionError):
        FoldSpec(3)
    with pytest.raises(PreconditionError):
        FoldSpec(var("y1"), delta=0.0)
    far = FoldSpec(var("y1") + 5)
    with pytest.raises(PreconditionError):
        check_folded(darboux.omega, far, SampleGrid.default(darboux.chart, 4))


def test_fold_samples_bisection(darboux):
    grid = SampleGrid.default(darboux.chart, 4)
    samples = fold_samples(FoldSpec(var("y1") - var("x1") / 3), grid)
    assert samples["y1"].size > 0
    assert np.max(np.abs(samples["y1"] - samples["x1"] / 3)) <= 1e-9


def test_sample_grid():
    chart = Chart("sq", ("a", "b"), ((0.0, 1.0), (0.0, 2.0)))
    grid = SampleGrid(chart, (5,))
    assert grid.counts == (5, 5)
    assert grid.size == 25
    assert np.allclose(grid.spacing(), [0.25, 0.5])
    cut = SampleGrid(chart, (5, 5), excluded=(((0.0, 0.3), (0.0, 0.6)),))
    assert len(cut.env()["a"]) == 25 - 4
    inset = SampleGrid(chart, (3, 3), inset=0.1)
    assert np.allclose(inset.bounds, ((0.1, 0.9), (0.2, 1.8)))
    with pytest.raises(PreconditionError):
        SampleGrid(chart, (1, 4))
    with pytest.raises(PreconditionError):
        SampleGrid(chart, (3, 3, 3))
    with pytest.raises(PreconditionError):
        SampleGrid(chart, (3, 3), box=((0.0, 2.0), (0.0, 1.0)))


def test_pfaffian_squares_to_determinant(rng):
    A = rng.normal(size=(20, 6, 6))
    A = A - np.transpose(A, (0, 2, 1))
    assert np.allclose(pfaffian(A) ** 2, np.linalg.det(A), rtol=1e-9)
    J = np.array([[[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]]], dtype=float)
    assert pfaffian(J)[0] == 1.0


def test_report_round_trip(darboux):
    report = check_folded(darboux.omega, darboux.fold, SampleGrid.default(darboux.chart, 4))
    again = StructureReport.from_dict(report.to_dict())
    assert again.verdict == report.verdict
    assert again.min_margin == pytest.approx(report.min_margin)
    assert again.witness == report.witness
