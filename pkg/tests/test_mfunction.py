import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rlimits import graph_core as gc
from rlimits import mfunction as mf
from rlimits import operator_core as oc

upper = st.builds(complex, st.floats(-8, 8), st.floats(1e-3, 8))


def test_halfline_examples():
    assert abs(mf.m_halfline(6) - (-3 + 2 * np.sqrt(2))) <= 1e-12
    assert abs(mf.m_halfline(-6) - (3 - 2 * np.sqrt(2))) <= 1e-12
    z = 1e6 + 1e6j
    assert abs(z * mf.m_halfline(z) + 1) <= 1e-9


def test_tree_examples():
    assert abs(mf.m_tree(6, 6) - (-5 / 24)) <= 1e-12
    z = 1e6j
    for d in (3, 4, 6):
        assert abs(z * mf.m_tree(z, d) + 1) <= 1e-9


def test_on_band_real_input_raises():
    with pytest.raises(ValueError):
        mf.m_halfline(1.5)
    with pytest.raises(ValueError):
        mf.m_tree(2.5, 3)
    with pytest.raises(ValueError):
        mf.m_tree(5.0, 2)
    # just outside the band is fine
    assert np.isfinite(mf.m_tree(2 * np.sqrt(2) + 1e-6, 3))


@given(upper, st.integers(3, 7))
def test_herglotz(z, d):
    for m in (mf.m_halfline(z), mf.m_tree(z, d), mf.m_glued(z, d)):
        assert m.imag > 0
    assert abs(mf.m_halfline(z)) <= 1 + 1e-12


@given(st.builds(complex, st.floats(-4, 4), st.floats(0.5, 3)))
def test_halfline_matches_truncated_resolvent(z):
    H = oc.adjacency_operator(gc.build_half_line(300))
    assert abs(mf.m_halfline(z) - mf.resolvent_element(H, 0, z)) <= 1e-8


# depth-9 truncation error is about 1e-6 at Im z = 2 and shrinks away from the band
@given(st.builds(complex, st.floats(-5, 5), st.floats(2.5, 4)))
def test_tree_matches_truncated_resolvent(z):
    H = oc.adjacency_operator(gc.build_regular_tree(3, 9))
    assert abs(mf.m_tree(z, 3) - mf.resolvent_element(H, 0, z)) <= 1e-6


def test_glued_matches_truncated_resolvent():
    z = 4 + 0.5j
    H = oc.adjacency_operator(gc.build_glued_tree(3, 9, 200))
    assert abs(mf.m_glued(z, 3) - mf.resolvent_element(H, 0, z)) <= 1e-6


def test_glued_denominator_and_pole_warning(monkeypatch):
    z = 5 + 0.1j
    assert np.isclose(mf.glued_denominator(z, 3), 1 - mf.m_tree(z, 3) * mf.m_halfline(z))
    monkeypatch.setattr(mf, "m_tree", lambda z, d: 1 / mf.m_halfline(z))
    with pytest.warns(RuntimeWarning, match="pole"):
        assert mf.m_glued(z, 3) == complex(np.inf, 0)


def test_truncation_checks():
    rep = mf.truncation_checks()
    assert rep["halfline_error"] <= 1e-6 and rep["tree_error"] <= 1e-6


def test_default_depth():
    assert [mf.default_depth(d) for d in (3, 4, 5, 6)] == [10, 6, 5, 4]
    for d in (3, 4, 5, 6):
        k = mf.default_depth(d)
        assert gc.tree_size(d, k) <= 4000 < gc.tree_size(d, k + 1)


@pytest.mark.parametrize("d", [3, 6])
def test_gap_certificate(d):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rep = mf.gap_certificate(d)
    assert rep["ok"], rep["checks"]
    assert rep["table"][-1]["eps"] == 1e-6 and rep["table"][-1]["im"] < 1e-4
    assert rep["truncation"]["violations"] == []


def test_gap_certificate_input_validation():
    with pytest.raises(ValueError):
        mf.gap_certificate(3, [1e-3, 1e-2])
    with pytest.raises(ValueError):
        mf.gap_certificate(3, [1e-2, 0.0])


def test_gap_table_csv():
    rep = mf.gap_certificate(4, [0.1, 0.01], cross_check=False)
    lines = mf.gap_table_csv(rep).splitlines()
    assert lines[0] == "eps,re_m,im_m,abs_denominator" and len(lines) == 3
    assert float(lines[1].split(",")[2]) == rep["table"][0]["im"]


@pytest.mark.parametrize("d", [3, 4, 5])
def test_no_eigenvalue_outside_the_band(d):
    rep = mf.remark_probe(d, points=500)
    assert rep["min_abs_denominator"] > 0.1
