from fractions import Fraction

import numpy as np
import pytest

from core.errors import ProfileError
from core.exprcore import PiecewisePoly
from core.profiles import BRIDGE_F, IDEAL_U, LEMMA41_F, LEMMA42_MU, ProfileFn, make_profile, verify_profile


def test_fold_profile():
    f = make_profile(LEMMA41_F, eps=0.5)
    assert f.params["eps"] == Fraction(1, 2)
    assert f.value(0) == 0
    assert f.value(Fraction(1, 2), 'left') == 1
    assert f.value(Fraction(-1, 2)) == -1
    assert f.slope(Fraction(1, 2), 'left') == 0
    assert len(f.conditions) == 6
    x = np.linspace(-0.9, 0.9, 101)
    assert np.allclose(f.evaluate(x)[np.abs(x) >= 0.5], np.sign(x[np.abs(x) >= 0.5]))


def test_rescaling_profile():
    mu = make_profile(LEMMA42_MU, eps=Fraction(1, 2), delta=Fraction(1, 8), eps_prime=Fraction(1, 4))
    assert mu.value(0) == Fraction(1, 4)
    assert mu.value(Fraction(1, 2), 'left') == Fraction(1, 2)
    assert mu.slope(Fraction(1, 2), 'left') == 1
    assert mu.slope(Fraction(-1, 2)) == -1
    x = mu.sample(2001)
    assert np.all(mu.evaluate(x) >= np.abs(x) - 1e-12)


def test_default_rescaling_parameters():
    mu = make_profile(LEMMA42_MU)
    assert mu.params["delta"] == mu.params["eps"] / 4
    assert mu.params["eps_prime"] == mu.params["eps"] / 2


def test_ideal_profile():
    u = make_profile(IDEAL_U, variable="s", eps=0.5)
    assert u.value(0) == 0
    assert u.value(Fraction(-1, 2)) == 1
    assert u.slope(Fraction(-1, 2)) == 0
    assert u.interval == (Fraction(-1, 2), Fraction(0))
    assert np.all(u.evaluate_derivative(np.linspace(-0.45, 0, 50)) < 0)


@pytest.mark.parametrize("mode,f0,concave", [("plus", 0, True), ("minus", 0, False), ("asymmetric", 1, True)])
def test_bridge_profiles(mode, f0, concave):
    f = make_profile(BRIDGE_F, variable="z", mode=mode)
    assert f.value(0) == f0
    assert f.slope(0) == 0
    d2 = f.evaluate_derivative(f.sample(11), 2)
    assert np.all(d2 < 0) if concave else np.all(d2 > 0)


@pytest.mark.parametrize("kind,params", [
    (LEMMA41_F, {"eps": 1.5}),
    (LEMMA42_MU, {"eps": 0.5, "delta": 0.2, "eps_prime": 0.2}),
    (LEMMA42_MU, {"eps": 0.5, "delta": 0.1, "eps_prime": 0.49}),
    (IDEAL_U, {"eps": -1}),
    (BRIDGE_F, {"mode": "plus", "slope": 0.1}),
    (BRIDGE_F, {"mode": "sideways"}),
    (BRIDGE_F, {"mode": "plus", "c": -1}),
    ("no-such-kind", {}),
])
def test_infeasible_parameters(kind, params):
    with pytest.raises(ProfileError):
        make_profile(kind, **params)


def test_verify_rejects_broken_spline():
    broken = ProfileFn(IDEAL_U, PiecewisePoly("bad", (), ((Fraction(1), Fraction(-1)),)), "s",
                       (Fraction(-1, 2), Fraction(0)), {"eps": Fraction(1, 2)})
    with pytest.raises(ProfileError) as info:
        verify_profile(broken)
    assert "u(0) = 0" in str(info.value)


def test_dict_round_trip():
    f = make_profile(BRIDGE_F, variable="z", mode="minus", name="fm")
    again = ProfileFn.from_dict(f.to_dict())
    assert again.spline == f.spline
    assert again.params == f.params
    assert again.interval == f.interval
    verify_profile(again)
