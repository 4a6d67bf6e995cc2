import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rlimits import graph_core as gc
from rlimits import operator_core as oc
from rlimits import spectral as spc
from rlimits import tree_spherical as ts
from rlimits.operator_core import HalfLineJacobi

SQ2, SQ3 = np.sqrt(2), np.sqrt(3)


# ------------------------------------------------------------ decomposition


def test_decompose_example():
    plan = ts.decompose(ts.SphericalSymbol.constant(3, 2), 2)
    (s1, s2, s3) = plan.blocks
    assert (s1.length, s1.multiplicity) == (3, 1)
    assert np.allclose(s1.S.a, [SQ3, SQ2])
    assert (s2.length, s2.multiplicity) == (2, 2)
    assert np.allclose(s2.S.a, [SQ2])
    assert (s3.length, s3.multiplicity) == (1, 3)
    assert plan.dimension == 1 * 3 + 2 * 2 + 3 * 1 == 10 == gc.tree_size(3, 2)


def test_multiplicities():
    assert [ts.multiplicity(3, n) for n in (1, 2, 3, 4)] == [1, 2, 3, 6]
    assert [ts.multiplicity(4, n) for n in (1, 2, 3, 4)] == [1, 3, 8, 24]
    with pytest.raises(ValueError):
        ts.multiplicity(3, 0)


def test_decompose_radius_zero():
    sym = ts.SphericalSymbol(3, [1.0], [0.7, 0.0], 1)
    plan = ts.decompose(sym, 0)
    assert len(plan.blocks) == 1
    assert np.array_equal(plan.blocks[0].matrix(), [[0.7]])
    assert ts.verify_equivalence(sym, 0)["discrepancy"] == 0.0


def test_decompose_errors():
    sym = ts.SphericalSymbol.constant(3, 3)
    with pytest.raises(ValueError):
        ts.decompose(sym, 4)
    with pytest.raises(ValueError):
        ts.decompose(sym, -1)
    with pytest.raises(ValueError):
        ts.SphericalSymbol(3, [1.0, -1.0], [0, 0, 0], 2)
    with pytest.raises(ValueError):
        ts.SphericalSymbol(2, [1.0], [0, 0], 1)
    with pytest.raises(ValueError):
        ts.SphericalSymbol(3, [1.0], [0.0], 1)


def test_sector_coefficients_are_tails_of_the_first():
    sym = ts.SphericalSymbol.random(3, 7, seed=11)
    plan = ts.decompose(sym, 7)
    S1 = plan.blocks[0]
    for blk in plan.blocks[1:]:
        n = blk.n
        # beyond the root coupling S_n and the tail of S_1 agree entrywise
        assert np.allclose(blk.S.a, S1.S.a[n - 1:n - 1 + blk.length - 1])
        assert np.allclose(blk.S.b, S1.S.b[n - 1:n - 1 + blk.length])


def test_verify_equivalence_examples():
    assert ts.verify_equivalence(ts.SphericalSymbol.constant(3, 2), 2)["discrepancy"] <= 1e-8
    rep = ts.verify_equivalence(ts.SphericalSymbol.random(3, 6, seed=7), 6)
    assert rep["discrepancy"] <= 1e-8 and rep["dimension_identity"]


@given(st.integers(3, 5), st.integers(0, 4), st.integers(0, 2 ** 31))
def test_decomposition_matches_direct_eigensolve(d, R, seed):
    sym = ts.SphericalSymbol.random(d, R, seed)
    plan = ts.decompose(sym, R)
    # oracle: dense eigensolve of the whole truncated tree
    tree = np.linalg.eigvalsh(sym.operator(R).dense())
    blocks = np.sort(np.concatenate([np.repeat(np.linalg.eigvalsh(b.matrix()), b.multiplicity)
                                     for b in plan.blocks]))
    assert tree.size == blocks.size
    assert np.max(np.abs(tree - blocks)) <= 1e-8


@pytest.mark.parametrize("d", [3, 4, 5, 6])
def test_dimension_identity(d):
    for R in range(9):
        lhs, rhs = ts.dimension_identity(d, R)
        assert isinstance(lhs, int) and lhs == rhs == gc.tree_size(d, R)
        assert ts.tree_size_check(d, R)


def test_symbol_json_roundtrip_and_seeding():
    sym = ts.SphericalSymbol.random(4, 5, seed=3)
    again = ts.SphericalSymbol.random(4, 5, seed=3)
    assert np.array_equal(sym.A, again.A) and np.array_equal(sym.B, again.B)
    back = ts.SphericalSymbol.from_json(json.loads(json.dumps(sym.to_json())))
    assert np.array_equal(back.A, sym.A) and back.d == 4
    plan = json.loads(json.dumps(ts.decompose(sym, 3).to_json()))
    assert [b["multiplicity"] for b in plan["blocks"]] == [1, 3, 8, 24]


def test_first_sector_of_the_free_tree():
    S1 = ts.SphericalSymbol.constant(3, 6).halfline()
    assert S1.period == 1
    M = S1.matrix(4)
    assert np.allclose(np.diag(M, 1), [SQ3, SQ2, SQ2])
    assert np.allclose(np.diag(M), 0)


# ------------------------------------------------------------ tails


def test_tail_examples():
    j = HalfLineJacobi(np.arange(1.0, 11.0), np.arange(10.0))
    t0 = ts.tail(j, 0)
    assert np.array_equal(t0.matrix(5), j.matrix(5))
    t = ts.tail(ts.tail(j, 1), 2)
    assert t.shift == 3
    assert np.array_equal(t.matrix(4), ts.tail(j, 3).matrix(4))
    assert t.b_at(0) == 3.0 and t.window == 7
    with pytest.raises(ValueError):
        ts.tail(j, -1)


@given(st.integers(0, 5), st.integers(0, 5), st.integers(1, 4))
def test_tail_composition(k, m, size):
    j = HalfLineJacobi(np.linspace(1, 2, 20), np.linspace(-1, 1, 20))
    a = ts.tail(ts.tail(j, k), m).matrix(size)
    b = ts.tail(j, k + m).matrix(size)
    c = j.matrix(size, start=k + m)
    assert np.array_equal(a, b) and np.array_equal(b, c)


def test_tail_of_periodic_materialises():
    j = HalfLineJacobi([2.0, 1.0, 1.0], [5.0, 0.0, 1.0], period=2)
    t = ts.tail(j, 3).materialize()
    assert t.period == 2
    assert list(t.b_at(np.arange(4))) == [0, 1, 0, 1]


# ------------------------------------------------------------ 1-D limits


def test_right_limits_examples():
    free = ts.right_limits_1d(oc.free_halfline(), 10)
    assert free.exact and len(free) == 1
    assert np.allclose(free[0].a, 1) and np.allclose(free[0].b, 0)
    per = ts.right_limits_1d(HalfLineJacobi([1.0, 1.0], [0.0, 1.0], period=2), 10)
    assert per.exact and len(per) == 2
    assert {tuple(w.b[:2]) for w in per} == {(0.0, 1.0), (1.0, 0.0)}
    S1 = ts.right_limits_1d(ts.SphericalSymbol.constant(3, 6).halfline(), 10)
    assert len(S1) == 1 and np.allclose(S1[0].a, SQ2)


def test_right_limits_heuristic_probe():
    n = 400
    j = HalfLineJacobi(np.ones(n - 1), np.where(np.arange(n) % 3 == 0, 1.0, 0.0))
    rls = ts.right_limits_1d(j, 10)
    assert not rls.exact
    assert len(rls) == 3


def test_strong_limit_examples():
    n = 2000
    decay = HalfLineJacobi(np.ones(n - 1), 1.0 / np.arange(1, n + 1))
    lim = ts.strong_limit_tails(decay, window=50, tol=1e-4)
    assert not lim.exact and len(lim) == 1
    assert np.max(np.abs(lim[0].b)) < 1e-3 and np.allclose(lim[0].a, 1)
    const = ts.strong_limit_tails(oc.free_halfline())
    assert len(const) == 1 and np.array_equal(const[0].matrix(3), oc.free_halfline().matrix(3))
    per = ts.strong_limit_tails(HalfLineJacobi([1.0, 1.0], [0.0, 1.0], period=2))
    assert per.exact and len(per) == 2


def test_prop_a_free_and_tree():
    free = ts.ess_spectrum_prop_a(oc.free_halfline())
    assert free.exact
    assert spc.hausdorff_to_intervals(free.values, [(-2, 2)]) <= 0.1
    S1 = ts.SphericalSymbol.constant(3, 8).halfline()
    res = ts.ess_spectrum_prop_a(S1)
    edge = 2 * SQ2
    assert spc.hausdorff_to_intervals(res.values, [(-edge, edge)]) <= 0.1


def test_prop_a_discards_an_impurity():
    j = HalfLineJacobi([1.0, 1.0], [5.0, 0.0], period=1)
    # oracle: the truncated operator itself has the bound state 5 + 1/5
    top = np.linalg.eigvalsh(j.matrix(400))[-1]
    assert np.isclose(top, 5.2, atol=1e-10)
    res = ts.ess_spectrum_prop_a(j)
    assert np.all(np.abs(res.values) <= 2 + 0.05)
    assert spc.hausdorff_to_intervals(res.values, [(-2, 2)]) <= 0.1


def test_prop_a_json():
    res = ts.ess_spectrum_prop_a(oc.free_halfline(), W=50, radius=20, size=100)
    data = json.loads(json.dumps(res.to_json()))
    assert data["exact"] and data["meta"]["W"] == 50


def test_prop_b_free_is_empty():
    j = HalfLineJacobi(np.ones(999), np.zeros(1000))
    assert ts.sigma_set_prop_b(j, range(0, 400, 40)) == []


def test_prop_b_detects_recurring_wells():
    n = 2000
    b = np.zeros(n)
    subseq = list(range(100, 1000, 100))
    for s in subseq:
        b[s + 5] = -5.0
    j = HalfLineJacobi(np.ones(n - 1), b)
    sigma = ts.sigma_set_prop_b(j, subseq)
    # oracle: lowest eigenvalue of each truncated tail
    lows = [np.linalg.eigvalsh(ts.tail(j, s).matrix(40))[0] for s in subseq]
    assert np.allclose(lows, -np.sqrt(29), atol=1e-8)
    assert len(sigma) == 1 and np.isclose(sigma[0], -np.sqrt(29), atol=1e-6)


def test_prop_b_periodic_values_are_phase_eigenvalues():
    j = HalfLineJacobi([1.0, 1.0, 1.0], [3.0, 0.0, 1.0], period=2)
    sigma = ts.sigma_set_prop_b(j, range(0, 200, 2))
    phases = ts.strong_limit_tails(j)
    ev = np.concatenate([np.linalg.eigvalsh(h.matrix(200)) for h in phases])
    for s in sigma:
        assert np.min(np.abs(ev - s)) <= 0.05
