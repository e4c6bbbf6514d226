import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from achlab import build_double_well, evaluate
from achlab.cluster import Cluster
from achlab.errors import GridMismatch, NonConvergence, ShapeError
from achlab.field import (ConformalMetric, Field, FlowOptions, TorusGrid, b_inner, constrained_flow,
                          degeneracy_scan, energy, energy_gradient, field_from_text, field_to_text, hunt,
                          linearized_apply, load_field, nondegeneracy_check, project_volume, save_field,
                          second_variation_apply, torus_laplacian_eigenvalues, volume)
from achlab.field.flow import aligned_distance
from achlab.recovery import modica_baldo


def random_field(rng, grid, m, lo=-0.3, hi=1.3):
    return Field(grid, rng.uniform(lo, hi, size=(m,) + grid.shape))


def bumped(grid, amp=0.2):
    return ConformalMetric.from_expression(grid, f"bump:{amp},0.1")


# ---------------------------------------------------------------------------
# grid and metric


def test_grid_geometry():
    grid = TorusGrid((16, 32), (2.0, 1.0))
    assert grid.spacing == (0.125, 1 / 32)
    assert grid.volume == 2.0
    assert grid.cell_volume * grid.size == pytest.approx(2.0)
    assert grid.distance([0.1, 0.1], [1.9, 0.95]) == pytest.approx(math.hypot(0.2, 0.15))


@pytest.mark.parametrize("shape,lengths", [((4,), None), ((16,), (1.0, 1.0)), ((8, 8, 8), None), ((16,), (0.0,))])
def test_grid_rejects_bad_shapes(shape, lengths):
    with pytest.raises(ShapeError):
        TorusGrid(shape, lengths)


def test_metric_weights_and_volume():
    grid = TorusGrid((64, 64))
    g = bumped(grid)
    np.testing.assert_allclose(g.b, g.rho**2)
    np.testing.assert_allclose(g.a, 1.0)
    # the cosine product integrates to zero over whole periods
    assert g.volume == pytest.approx(1.0 + 0.04 / 4, rel=1e-12)
    assert not g.flat and ConformalMetric.flat_metric(grid).flat


def test_metric_rejects_nonpositive_rho():
    grid = TorusGrid((16,))
    with pytest.raises(ValueError):
        ConformalMetric(grid, np.zeros(16))
    with pytest.raises(ValueError):
        ConformalMetric.from_expression(grid, "ripple:1")


def test_field_shape_checks():
    grid = TorusGrid((16, 16))
    with pytest.raises(ShapeError):
        Field(grid, np.zeros((16, 8)))
    with pytest.raises(ValueError):
        Field(grid, np.full((16, 16), np.nan))


def test_grid_mismatch(dw):
    u = Field.constant(TorusGrid((16,)), 0.5)
    with pytest.raises(GridMismatch):
        energy(u, 0.1, dw, ConformalMetric.flat_metric(TorusGrid((32,))))


# ---------------------------------------------------------------------------
# energy and volume


def test_energy_at_a_well_is_zero(dw, flat):
    g = flat(32, 32)
    for eps in (0.01, 0.3):
        assert energy(Field.constant(g.grid, 1.0), eps, dw, g) == 0.0


@pytest.mark.parametrize("c", [0.2, 0.5, 1.7])
def test_energy_of_a_constant(dw, flat, c):
    g = flat(32, 32)
    W = float(evaluate(dw, c, order=0)[0])
    assert energy(Field.constant(g.grid, c), 0.05, dw, g) == pytest.approx(W / 0.05, rel=1e-13)
    gb = bumped(g.grid)
    assert energy(Field.constant(g.grid, c), 0.05, dw, gb) == pytest.approx(W / 0.05 * gb.volume, rel=1e-13)


def test_energy_rejects_nonpositive_eps(dw, flat):
    g = flat(16)
    with pytest.raises(ValueError):
        energy(Field.constant(g.grid, 0.5), 0.0, dw, g)


def test_volume_of_constants_and_halves(flat):
    g = flat(32, 32)
    np.testing.assert_allclose(volume(Field.constant(g.grid, [0.3, 0.2]), g), [0.3, 0.2], rtol=1e-14)
    assert np.all(volume(Field.constant(g.grid, [0.0, 0.0]), g) == 0.0)
    vals = np.zeros((2, 32, 32))
    vals[0, :16] = 1.0
    np.testing.assert_allclose(volume(Field(g.grid, vals), g), [0.5, 0.0], atol=1e-15)


# ---------------------------------------------------------------------------
# gradient


def test_gradient_at_a_well_vanishes(tw, flat):
    g = flat(16, 16)
    G = energy_gradient(Field.constant(g.grid, [1.0, 0.0]), 0.1, tw, g)
    assert np.all(G.values == 0.0)


def test_gradient_of_a_constant(tw, flat):
    g = flat(16, 16)
    c = np.array([0.3, 0.6])
    G = energy_gradient(Field.constant(g.grid, c), 0.1, tw, g)
    gw = evaluate(tw, c, order=1)[1]
    np.testing.assert_allclose(G.values[:, 3, 5], gw / 0.1, rtol=1e-13)
    np.testing.assert_allclose(G.values, G.values[:, :1, :1] * np.ones((1, 16, 16)), rtol=1e-14)


def fd_relative_error(u, w, eps, P, g, t=1e-4):
    G = energy_gradient(u, eps, P, g)
    exact = b_inner(G.values, w.values, g)
    fd = (energy(u + t * w.values, eps, P, g) - energy(u - t * w.values, eps, P, g)) / (2 * t)
    return abs(exact - fd) / max(abs(exact), 1e-300)


@settings(max_examples=20)
@given(seed=st.integers(0, 2**32 - 1), bump=st.booleans(), triple=st.booleans())
def test_gradient_matches_finite_differences(seed, bump, triple, dw, tw):
    rng = np.random.default_rng(seed)
    grid = TorusGrid((32, 32))
    g = bumped(grid) if bump else ConformalMetric.flat_metric(grid)
    P = tw if triple else dw
    u = random_field(rng, grid, P.m)
    w = random_field(rng, grid, P.m, -1.0, 1.0)
    assert fd_relative_error(u, w, 0.05, P, g) <= 1e-6


# ---------------------------------------------------------------------------
# projection


def test_projection_leaves_feasible_fields_alone(dw, flat):
    g = flat(32)
    u = Field(g.grid, np.linspace(0, 1, 32))
    out = project_volume(u, volume(u, g), g)
    np.testing.assert_allclose(out.values, u.values, atol=1e-15)


def test_projection_of_zero(flat):
    g = flat(32, 32)
    out = project_volume(Field.constant(g.grid, 0.0), [0.3], g)
    np.testing.assert_allclose(out.values, 0.3, rtol=1e-15)


@given(seed=st.integers(0, 2**32 - 1), target=st.floats(-2.0, 2.0), bump=st.booleans())
def test_projection_is_exact(seed, target, bump):
    grid = TorusGrid((24, 24))
    g = bumped(grid, 0.4) if bump else ConformalMetric.flat_metric(grid)
    u = random_field(np.random.default_rng(seed), grid, 2, -5, 5)
    v = np.array([target, -0.5 * target])
    assert np.all(np.abs(volume(project_volume(u, v, g), g) - v) <= 1e-14)


def test_projection_checks_components(flat):
    g = flat(16)
    with pytest.raises(ValueError):
        project_volume(Field.constant(g.grid, 0.0), [0.1, 0.2], g)


# ---------------------------------------------------------------------------
# constrained flow


def test_constant_states_are_critical(tw, flat):
    g = flat(32, 32)
    c = np.array([0.2, 0.25])
    cp = constrained_flow(Field.constant(g.grid, [0.0, 0.0]), 0.05, c, tw, g)
    np.testing.assert_allclose(cp.u.values, c.reshape(2, 1, 1) * np.ones((2, 32, 32)), atol=1e-14)
    np.testing.assert_allclose(cp.lam, evaluate(tw, c, order=1)[1] / 0.05, rtol=1e-12)
    assert cp.iterations == 0 and cp.converged


def droplet_cluster(n=1024, half=0.15, center=0.5):
    grid = TorusGrid((n,))
    x = grid.axis_coordinates(0)
    return Cluster(grid, np.where(np.abs(x - center) < half, 1, 2), 2)


def test_droplet_flow_reaches_the_interface_energy(dw, dw_tension):
    c = droplet_cluster()
    g = ConformalMetric.flat_metric(c.grid)
    seed = modica_baldo(c, dw, dw_tension, 0.02, 0.02, g)
    cp = constrained_flow(seed, 0.02, [0.3], dw, g)
    assert abs(cp.energy - 2 / 3) / (2 / 3) <= 0.05
    assert cp.residual_norm <= 1e-8
    assert abs(cp.volume[0] - 0.3) <= 1e-10
    assert cp.energy <= energy(seed, 0.02, dw, g)


@settings(max_examples=8)
@given(seed=st.integers(0, 2**32 - 1))
def test_flow_postconditions(seed, dw):
    grid = TorusGrid((64,))
    g = ConformalMetric.flat_metric(grid)
    u0 = random_field(np.random.default_rng(seed), grid, 1, 0.0, 1.0)
    cp = constrained_flow(u0, 0.1, [0.4], dw, g, FlowOptions(tol=1e-9))
    assert cp.residual_norm <= 1e-9
    assert abs(cp.volume[0] - 0.4) <= 1e-10
    assert cp.energy <= energy(project_volume(u0, [0.4], g), 0.1, dw, g) + 1e-12


def test_flow_reports_partial_result(dw):
    grid = TorusGrid((64,))
    g = ConformalMetric.flat_metric(grid)
    u0 = Field(grid, np.sin(2 * np.pi * grid.axis_coordinates(0)) * 0.4 + 0.5)
    with pytest.raises(NonConvergence) as info:
        constrained_flow(u0, 0.05, [0.5], dw, g, FlowOptions(max_iter=2))
    assert info.value.partial.iterations == 2


def test_unpreconditioned_flow_agrees(dw):
    grid = TorusGrid((64,))
    g = ConformalMetric.flat_metric(grid)
    u0 = Field(grid, 0.5 + 0.3 * np.cos(2 * np.pi * grid.axis_coordinates(0)))
    a = constrained_flow(u0, 0.1, [0.5], dw, g)
    b = constrained_flow(u0, 0.1, [0.5], dw, g, FlowOptions(precondition=False))
    assert a.energy == pytest.approx(b.energy, rel=1e-9)


# ---------------------------------------------------------------------------
# second variation


def test_linearization_on_constant_direction(tw, flat):
    g = flat(16, 16)
    e = np.array([0.3, -0.7])
    u = Field.constant(g.grid, [1.0, 0.0])
    w = Field.constant(g.grid, e)
    H = evaluate(tw, np.array([1.0, 0.0]))[2]
    for op in (linearized_apply, second_variation_apply):
        out = op(u, w, 0.05, tw, g)
        np.testing.assert_allclose(out.values[:, 4, 9], H @ e / 0.05, rtol=1e-13)


def test_linearization_of_zero(tw, flat):
    g = flat(16, 16)
    u = random_field(np.random.default_rng(0), g.grid, 2)
    assert np.all(linearized_apply(u, Field.constant(g.grid, [0.0, 0.0]), 0.1, tw, g).values == 0.0)


@settings(max_examples=20)
@given(seed=st.integers(0, 2**32 - 1), bump=st.booleans(), triple=st.booleans(), hessian=st.booleans())
def test_second_variation_is_symmetric(seed, bump, triple, hessian, dw, tw):
    rng = np.random.default_rng(seed)
    grid = TorusGrid((32, 32))
    g = bumped(grid) if bump else ConformalMetric.flat_metric(grid)
    P = tw if triple else dw
    u, w1, w2 = (random_field(rng, grid, P.m) for _ in range(3))
    op = second_variation_apply if hessian else linearized_apply
    lhs = b_inner(op(u, w1, 0.05, P, g).values, w2.values, g)
    rhs = b_inner(w1.values, op(u, w2, 0.05, P, g).values, g)
    scale = math.sqrt(b_inner(w1.values, w1.values, g) * b_inner(w2.values, w2.values, g))
    assert abs(lhs - rhs) <= 1e-10 * scale


def test_second_variation_is_the_derivative_of_the_gradient(tw):
    rng = np.random.default_rng(5)
    grid = TorusGrid((24, 24))
    g = bumped(grid)
    u, w = random_field(rng, grid, 2), random_field(rng, grid, 2, -1, 1)
    t = 1e-5
    fd = (energy_gradient(u + t * w.values, 0.1, tw, g).values
          - energy_gradient(u - t * w.values, 0.1, tw, g).values) / (2 * t)
    exact = second_variation_apply(u, w, 0.1, tw, g).values
    assert np.max(np.abs(fd - exact)) <= 1e-6 * np.max(np.abs(exact))


# ---------------------------------------------------------------------------
# spectra


def constant_point(P, g, c, eps):
    return constrained_flow(Field.constant(g.grid, c), eps, np.atleast_1d(c) * g.volume, P, g)


def test_well_constant_is_nondegenerate(dw, flat):
    g = flat(32, 32)
    for eps in (0.05, 0.2):
        res = nondegeneracy_check(constant_point(dw, g, 1.0, eps), dw, g)
        assert res.nondegenerate
        assert res.sigma_min >= 2.0 / eps * (1 - 1e-10)


def test_half_constant_is_degenerate_at_the_critical_eps(dw, flat):
    g = flat(64, 64)
    eps = 1 / (2 * math.pi)
    res = nondegeneracy_check(constant_point(dw, g, 0.5, eps), dw, g)
    assert res.sigma_min <= 1e-3 / eps
    assert not nondegeneracy_check(constant_point(dw, g, 0.5, eps), dw, g, floor=1e-3 / eps).nondegenerate
    away = nondegeneracy_check(constant_point(dw, g, 0.5, 0.9 * eps), dw, g)
    assert away.sigma_min > 10 * res.sigma_min


def test_flat_droplet_is_degenerate_and_bump_pins_it(dw, dw_tension):
    eps = 0.05
    sig = {}
    for expr in ("1", "wave:0.2,0"):
        c = droplet_cluster(256)
        g = ConformalMetric.from_expression(c.grid, expr)
        seed = modica_baldo(c, dw, dw_tension, eps, eps, g)
        cp = constrained_flow(seed, eps, volume(seed, g), dw, g)
        sig[expr] = nondegeneracy_check(cp, dw, g, operator="hessian")
    assert not sig["1"].nondegenerate
    assert sig["wave:0.2,0"].nondegenerate
    assert sig["wave:0.2,0"].sigma_min > 1e4 * sig["1"].sigma_min


def test_unknown_operator(dw, flat):
    g = flat(16)
    with pytest.raises(ValueError):
        nondegeneracy_check(constant_point(dw, g, 1.0, 0.1), dw, g, operator="mixed")


def test_laplacian_eigenvalues():
    vals = torus_laplacian_eigenvalues((1.0, 2.0), 1)
    assert len(vals) == 8
    assert vals[0][0] == pytest.approx(math.pi**2)


def test_degeneracy_scan_on_the_unit_square(dw, flat):
    g = flat(32, 32)
    found = degeneracy_scan(dw, 0.5, g, modes=3)
    expected = sorted({1 / (2 * math.pi * math.sqrt(a * a + b * b))
                       for a in range(4) for b in range(4) if 0 < a * a + b * b}, reverse=True)
    assert len(found) == len(expected)
    np.testing.assert_allclose(found, expected, rtol=0, atol=1e-12)
    assert found[0] == pytest.approx(0.15915494309189535, abs=1e-15)


def test_degeneracy_scan_at_a_well_is_empty(dw, flat):
    assert degeneracy_scan(dw, 1.0, flat(32, 32)) == []


def test_degeneracy_scan_on_the_circle(dw, flat):
    found = degeneracy_scan(dw, 0.5, flat(64), modes=3)
    np.testing.assert_allclose(found, [1 / (2 * math.pi), 1 / (4 * math.pi), 1 / (6 * math.pi)], atol=1e-15)


def test_degeneracy_scan_range_and_metric(dw, flat):
    g = flat(64)
    assert degeneracy_scan(dw, 0.5, g, eps_range=(0.06, 0.1)) == [1 / (4 * math.pi)]
    with pytest.raises(ValueError):
        degeneracy_scan(dw, 0.5, bumped(TorusGrid((16, 16))))


# ---------------------------------------------------------------------------
# hunt


def test_hunt_with_a_constant_seed(dw, flat):
    g = flat(32, 32)
    rep = hunt(dw, g, 0.1, [0.3], [Field.constant(g.grid, 0.7)])
    assert rep.eta == 1 and rep.dropped == 0
    assert rep.seed_to_point == [0]


def test_hunt_merges_translated_droplets(dw, dw_tension):
    c = droplet_cluster(256)
    g = ConformalMetric.flat_metric(c.grid)
    seed = modica_baldo(c, dw, dw_tension, 0.05, 0.05, g)
    rep = hunt(dw, g, 0.05, [0.3], [seed, seed.roll(37), Field.constant(c.grid, 0.3)])
    assert rep.eta == 2
    assert rep.seed_to_point[0] == rep.seed_to_point[1]
    energies = [p.energy for p in rep.points]
    assert energies == sorted(energies)


def test_hunt_needs_seeds(dw, flat):
    g = flat(16)
    with pytest.raises(ValueError):
        hunt(dw, g, 0.1, [0.3], [])


def test_aligned_distance_sees_through_shifts(flat):
    g = flat(32, 32)
    rng = np.random.default_rng(2)
    u = rng.random((1, 32, 32))
    w = np.roll(u, (5, -3), axis=(1, 2))
    assert aligned_distance(u, w, g, align=True) < 1e-6
    assert aligned_distance(u, w, g, align=False) > 0.1


# ---------------------------------------------------------------------------
# snapshots


def test_field_text_round_trip(tmp_path):
    grid = TorusGrid((8, 12), (1.0, 1.5))
    u = random_field(np.random.default_rng(3), grid, 2)
    again = field_from_text(field_to_text(u))
    assert again.grid == grid
    np.testing.assert_array_equal(again.values, u.values)
    save_field(u, tmp_path / "u.achf")
    np.testing.assert_array_equal(load_field(tmp_path / "u.achf").values, u.values)


def test_field_text_rejects_garbage():
    with pytest.raises(ValueError):
        field_from_text("hello\n")
    with pytest.raises(ValueError):
        field_from_text("ACHF 1\nn=1 shape=8 lengths=1.0 m=1\n1 2 3\n")
