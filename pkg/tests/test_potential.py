import dataclasses
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from achlab import build_double_well, build_product_triple_well, evaluate
from achlab.errors import DegenerateMinima
from achlab.potential import Potential, critical_exponent, from_text, load, save, to_text, verify_class


# ---------------------------------------------------------------------------
# symbolic oracle for the product well, built independently of the package

_x, _y = sp.symbols("x y", real=True)


def _product_oracle(p1, p2):
    a1, a2 = p1
    b1, b2 = p2
    expr = sp.expand(((_x - a1) ** 2 + (_y - a2) ** 2) * ((_x - b1) ** 2 + (_y - b2) ** 2) * (_x ** 2 + _y ** 2))
    grad = [sp.diff(expr, v) for v in (_x, _y)]
    hess = [[sp.diff(gk, v) for v in (_x, _y)] for gk in grad]
    f = sp.lambdify((_x, _y), expr)
    g = sp.lambdify((_x, _y), grad)
    h = sp.lambdify((_x, _y), hess)
    return f, g, h


ORACLE = _product_oracle((1, 0), (0, 1))


def test_double_well_vanishes_at_wells(dw):
    w, g, _ = evaluate(dw, np.array([[0.0], [1.0]]))
    assert np.all(w == 0.0)
    assert np.all(g == 0.0)


def test_double_well_midpoint(dw):
    w, g, h = evaluate(dw, 0.5)
    assert w == pytest.approx(1 / 16, abs=1e-15)
    assert abs(float(np.squeeze(g))) < 1e-15
    assert float(np.squeeze(h)) == pytest.approx(-1.0)


def test_double_well_hessian_at_zero_is_two(dw):
    _, _, h = evaluate(dw, 0.0)
    assert float(np.linalg.eigvalsh(np.atleast_2d(np.squeeze(h))).min()) == pytest.approx(2.0)


def test_double_well_at_one_triple(dw):
    w, g, h = evaluate(dw, 1.0)
    assert (float(w), float(np.squeeze(g)), float(np.squeeze(h))) == (0.0, 0.0, 2.0)


def test_triple_well_minimum_and_hessian(tw):
    w, g, h = evaluate(tw, np.array([1.0, 0.0]))
    assert float(w) == 0.0
    np.testing.assert_allclose(h, 4.0 * np.eye(2), atol=1e-12)


def test_triple_well_centre_value(tw):
    assert float(evaluate(tw, np.array([0.5, 0.5]), order=0)[0]) == pytest.approx(1 / 8, abs=1e-15)


def test_triple_well_matches_symbolic_expansion_at_2_2(tw):
    f, g, h = ORACLE
    w, gw, hw = evaluate(tw, np.array([2.0, 2.0]))
    assert float(w) == pytest.approx(f(2.0, 2.0), rel=1e-14)
    assert float(w) == pytest.approx(200.0, rel=1e-14)
    np.testing.assert_allclose(gw, np.array(g(2.0, 2.0), dtype=float), rtol=1e-13)
    np.testing.assert_allclose(hw, np.array(h(2.0, 2.0), dtype=float), rtol=1e-13)


@given(x=st.floats(-3, 3), y=st.floats(-3, 3))
def test_triple_well_agrees_with_symbolic_oracle(x, y, tw):
    f, g, h = ORACLE
    w, gw, hw = evaluate(tw, np.array([x, y]))
    scale = 1.0 + abs(f(x, y))
    assert abs(float(w) - f(x, y)) <= 1e-12 * scale
    np.testing.assert_allclose(gw, np.array(g(x, y), dtype=float), atol=1e-10 * (1 + np.abs(g(x, y)).max()))
    np.testing.assert_allclose(hw, np.array(h(x, y), dtype=float), atol=1e-10 * (1 + np.abs(h(x, y)).max()))


@given(x=st.floats(-3, 3), y=st.floats(-3, 3))
def test_triple_well_nonnegative(x, y, tw):
    assert float(evaluate(tw, np.array([x, y]), order=0)[0]) >= 0.0


def test_batched_evaluation_matches_pointwise(tw):
    pts = np.random.default_rng(1).normal(size=(5, 7, 2))
    w, g, h = evaluate(tw, pts)
    assert w.shape == (5, 7) and g.shape == (5, 7, 2) and h.shape == (5, 7, 2, 2)
    w0, g0, h0 = evaluate(tw, pts[3, 4])
    assert float(w0) == w[3, 4]
    np.testing.assert_array_equal(g0, g[3, 4])


def test_spliced_gradient_matches_finite_differences():
    P = build_product_triple_well([1, 0], [0, 1], splice=True)
    rng = np.random.default_rng(3)
    for r in (1.0, 3.2, 4.1, 5.5, 9.0):
        d = rng.normal(size=2)
        z = r * d / np.linalg.norm(d)
        _, g, h = evaluate(P, z)
        t = 1e-6 * max(1.0, r)
        fd = np.array([(evaluate(P, z + t * e, 0)[0] - evaluate(P, z - t * e, 0)[0]) / (2 * t) for e in np.eye(2)])
        np.testing.assert_allclose(g, fd.reshape(-1), rtol=1e-6, atol=1e-6)
        fdh = np.array([(evaluate(P, z + t * e, 1)[1] - evaluate(P, z - t * e, 1)[1]) / (2 * t) for e in np.eye(2)])
        np.testing.assert_allclose(h, fdh, rtol=1e-5, atol=1e-5 * (1 + np.abs(h).max()))


@pytest.mark.parametrize("p1,p2", [([1, 0], [2, 0]), ([0, 0], [0, 1]), ([-1, 0], [0, 1])])
def test_bad_wells_rejected(p1, p2):
    with pytest.raises(DegenerateMinima):
        build_product_triple_well(p1, p2)


def test_critical_exponent():
    assert critical_exponent(2) == 3.0
    assert critical_exponent(3) == 2.5
    assert math.isinf(critical_exponent(1))


def test_verify_class_double_well_passes(dw):
    rep = verify_class(dw, 400, 3.0)
    assert rep.all_sampled_pass
    assert rep.status("W0") == "pending"
    assert rep.status("W3_subcritical") == "info"


@pytest.mark.parametrize("splice", [False, True])
def test_verify_class_triple_well_records_exponents(splice):
    P = build_product_triple_well([1, 0], [0, 1], splice=splice)
    rep = verify_class(P, 400, 3.0)
    assert rep.all_sampled_pass
    expected = 6.0 if not splice else 2.5
    assert rep.exponents["p1"] == expected
    # sampled extreme values on shells grow at the stored rate
    assert abs(rep.exponents["p1_fit"] - expected) < 0.6
    assert abs(rep.exponents["p2_fit"] - expected) < 0.6


def test_verify_class_flags_a_nonvanishing_minimum(dw):
    # the double-well formula is fixed, so a shifted well no longer vanishes
    shifted = dataclasses.replace(dw, minima=np.array([[1.0 + 0.0316], [0.0]]))
    assert float(shifted(shifted.minima[0])) > 1e-4
    rep = verify_class(shifted, 200, 3.0)
    assert rep.status("minima") == "fail"
    assert not rep.all_sampled_pass


def test_verify_class_flags_understated_growth(tw):
    low = dataclasses.replace(tw, growth=dataclasses.replace(tw.growth, p1=3.0, p2=3.0))
    rep = verify_class(low, 400, 3.0)
    assert rep.status("W1") == "fail"
    assert rep.status("W3") == "fail"


def test_verify_class_rejects_tiny_samples(dw):
    with pytest.raises(ValueError):
        verify_class(dw, 50, 1.0)


@pytest.mark.parametrize("P", [build_double_well(), build_product_triple_well([1, 0], [0, 1]),
                               build_product_triple_well([2, 0.5], [0.3, 1], splice=True, splice_radius=6.0)])
def test_text_round_trip(P, tmp_path):
    again = from_text(to_text(P))
    assert again.form == P.form and again.N == P.N
    np.testing.assert_array_equal(again.minima, P.minima)
    assert again.growth == P.growth and again.splice == P.splice
    path = tmp_path / "w.txt"
    save(P, path)
    assert to_text(load(path)) == to_text(P)


def test_potential_rejects_unknown_form():
    with pytest.raises(ValueError):
        Potential(m=1, N=2, minima=np.array([[1.0], [0.0]]), form="quartic",
                  growth=build_double_well().growth)
