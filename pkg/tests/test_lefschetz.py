import numpy as np
import pytest

from core.errors import LefschetzError
from core.lefschetz import (
    DISTINCT, EQUAL_ON_HOMOLOGY, GENUS, HANDLE, INCONCLUSIVE, AbstractWLF, FoldedWLF, Page, StabilizationSpec,
    VanishingCycle, check_folded_wlf, common_stabilization_search, inverse_twist_matrix, monodromy_h1, stabilize,
    stabilization_consistency, standard_page, twist_matrix,
)

PAGES = [(0, 2), (0, 5), (1, 1), (1, 3), (2, 1), (2, 4), (3, 1), (3, 3), (4, 1)]


@pytest.fixture
def torus():
    return standard_page(1)


@pytest.fixture
def a():
    return VanishingCycle("a", [1, 0])


@pytest.fixture
def b():
    return VanishingCycle("b", [0, 1])


def _random_primitive(rng, rank):
    while True:
        v = rng.integers(-3, 4, rank)
        if np.any(v) and np.gcd.reduce(np.abs(v)) == 1:
            return v


@pytest.mark.parametrize("genus,boundary", PAGES)
def test_transvections_preserve_intersection_form(genus, boundary, rng):
    page = standard_page(genus, boundary)
    assert page.rank <= 8
    for k in range(100 // len(PAGES) + 1):
        c = VanishingCycle(f"c{k}", _random_primitive(rng, page.rank))
        T = twist_matrix(page, c)
        assert np.array_equal(T.T @ page.form @ T, page.form)
        assert np.array_equal(T @ inverse_twist_matrix(page, c), np.eye(page.rank, dtype=np.int64))


def test_torus_twist_convention(torus, a):
    assert twist_matrix(torus, a).tolist() == [[1, -1], [0, 1]]
    x = np.array([0, 1])
    # T_c(x) = x + <x, c>c
    assert (twist_matrix(torus, a) @ x).tolist() == (x + torus.pairing(x, a.vector) * a.vector).tolist()


def test_monodromy_order(torus, a, b):
    w = AbstractWLF(torus, [a, b])
    assert np.array_equal(monodromy_h1(w), twist_matrix(torus, b) @ twist_matrix(torus, a))


def test_braid_relation(torus, a, b):
    report = check_folded_wlf(FoldedWLF(torus, [a, b, a], [b, a, b]))
    assert report.verdict == EQUAL_ON_HOMOLOGY
    assert report.to_dict()["necessary_condition_only"] is True


@pytest.mark.parametrize("word", [["a"], ["a", "b"], ["b", "a", "a", "b"], []])
def test_doubled_word_is_equal(torus, a, b, word):
    cycles = {"a": a, "b": b}
    seq = [cycles[k] for k in word]
    assert check_folded_wlf(FoldedWLF(torus, seq, list(seq))).verdict == EQUAL_ON_HOMOLOGY


def test_distinct_single_twists(torus, a, b):
    fw = FoldedWLF(torus, [a], [b])
    report = check_folded_wlf(fw)
    assert report.verdict == DISTINCT
    assert fw.verdict == DISTINCT
    assert report.notes


def test_non_primitive_cycle_is_inconclusive(torus, a):
    doubled = VanishingCycle("2a", [2, 0])
    assert doubled.primitive is False
    assert check_folded_wlf(FoldedWLF(torus, [a], [doubled])).verdict == INCONCLUSIVE
    with pytest.raises(LefschetzError):
        VanishingCycle("2a", [2, 0], primitive=True)


def test_page_validation():
    with pytest.raises(LefschetzError):
        Page("bad", 2, [[0, 1], [1, 0]])
    with pytest.raises(LefschetzError):
        standard_page(-1)
    with pytest.raises(LefschetzError):
        AbstractWLF(standard_page(1), [VanishingCycle("c", [1, 0, 0])])
    page = standard_page(2, 3)
    assert page.rank == 6
    assert page.basis == ("a1", "b1", "a2", "b2", "d1", "d2")
    assert Page.from_dict(page.to_dict()).same_as(page)


@pytest.mark.parametrize("spec", [
    StabilizationSpec(HANDLE, (1, 0, 1), label="L"),
    StabilizationSpec(HANDLE, (0, -1, -1), pairings=(1, 0), boundary_delta=0, label="L"),
    StabilizationSpec(GENUS, (1, 0, 1, 0), label="L"),
])
def test_stabilization_consistency(torus, a, b, spec):
    old = AbstractWLF(torus, [a, b])
    new = stabilize(old, spec)
    assert new.word == ["L", "a", "b"]
    checks = stabilization_consistency(old, new, spec)
    assert checks["ok"], checks


@pytest.mark.parametrize("spec", [
    StabilizationSpec(HANDLE, (1, 0, 2)),
    StabilizationSpec(HANDLE, (1, 0, 1), pairings=(1,)),
    StabilizationSpec(GENUS, (1, 0, 2, 0)),
    StabilizationSpec("sphere", (1, 0, 1)),
    StabilizationSpec(HANDLE, (1, 1)),
])
def test_invalid_stabilizations(torus, a, spec):
    with pytest.raises(LefschetzError):
        stabilize(AbstractWLF(torus, [a]), spec)


def test_stabilization_spec_round_trip():
    spec = StabilizationSpec(HANDLE, (1, 0, 1), (1, -1), 0, "L1")
    assert StabilizationSpec.from_dict(spec.to_dict()) == spec


def test_search_returns_immediately_when_equal(torus, a, b):
    found = common_stabilization_search(AbstractWLF(torus, [a, b, a]), AbstractWLF(torus, [b, a, b]), budget=2)
    assert found is not None
    assert found.history == []
    assert found.verdict == EQUAL_ON_HOMOLOGY


def test_search_exhausts_budget(torus, a, b):
    assert common_stabilization_search(AbstractWLF(torus, [a]), AbstractWLF(torus, [b]), budget=1) is None


def test_search_requires_same_page(torus, a):
    other = standard_page(1, 2)
    with pytest.raises(LefschetzError):
        common_stabilization_search(AbstractWLF(torus, [a]), AbstractWLF(other, []), budget=1)
