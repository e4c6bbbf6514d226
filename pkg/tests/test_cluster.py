import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from achlab.cluster import (Cluster, MBOOptions, chamber_perimeters, cluster_from_text, cluster_to_text,
                            euclidean_isoperimetric_constant, flat_distance, from_field, interface_measure,
                            interior_diameter, interior_diameter_report, isoperimetric_bounds,
                            isotropic_multi_perimeter, isotropic_perimeter, large_subdomain_report, load_cluster,
                            mbo_minimize, mbo_run, multi_perimeter, periodic_components, restore_volumes,
                            save_cluster, volumes)
from achlab.errors import EmptyInterior, NegativeVolume, NonConvergence, ShapeError
from achlab.field import ConformalMetric, Field, TorusGrid
from achlab.recovery import build_profile, modica_baldo
from achlab.tension import TensionMatrix

from helpers import disk_labels


def bands(n=64):
    grid = TorusGrid((n, n))
    labels = np.full(grid.shape, 2)
    labels[: n // 2] = 1
    return Cluster(grid, labels, 2)


def cap_area(r, a):
    return r * r * math.acos(a / r) - a * math.sqrt(r * r - a * a)


def equal_double_bubble_length(area):
    """Brute-force scan over two equal circles joined by a straight wall.

    For each centre distance d = q r the radius follows from the area, and
    the total boundary length (two outer arcs plus the wall) is minimized
    over q without assuming the junction angles.
    """
    best = math.inf
    for q in np.linspace(1e-3, 2 - 1e-3, 20001):
        r = math.sqrt(area / (math.pi - cap_area(1.0, q / 2)))
        length = 2 * (2 * math.pi - 2 * math.acos(q / 2)) * r + 2 * math.sqrt(r * r - (q * r / 2) ** 2)
        best = min(best, length)
    return best


def test_double_bubble_oracle_matches_the_closed_form():
    # the scan lands on the 120-degree configuration, where each bubble is
    # r^2 (2 pi / 3 + sqrt(3) / 4) and the length is (8 pi / 3 + sqrt 3) r
    r = math.sqrt(0.03 / (2 * math.pi / 3 + math.sqrt(3) / 4))
    assert equal_double_bubble_length(0.03) == pytest.approx((8 * math.pi / 3 + math.sqrt(3)) * r, rel=1e-6)


# ---------------------------------------------------------------------------
# construction


def test_cluster_validates_labels():
    grid = TorusGrid((8, 8))
    with pytest.raises(ShapeError):
        Cluster(grid, np.zeros((8, 8), dtype=int), 2)
    with pytest.raises(ShapeError):
        Cluster(grid, np.full((8, 8), 1.5), 2)
    with pytest.raises(ShapeError):
        Cluster(grid, np.ones((8, 4), dtype=int), 2)
    assert Cluster(grid, np.ones((8, 8)), 2).labels.dtype == np.int64


# ---------------------------------------------------------------------------
# volumes


def test_all_exterior(flat):
    g = flat(16, 16)
    c = Cluster(g.grid, np.full((16, 16), 3), 3)
    np.testing.assert_array_equal(volumes(c, g), [0.0, 0.0, 1.0])


def test_half_and_half(flat):
    g = flat(16, 16)
    np.testing.assert_allclose(volumes(bands(16), g), [0.5, 0.5])
    labels = np.where(np.arange(16)[:, None] < 8, 1, 2) * np.ones((1, 16), dtype=int)
    np.testing.assert_allclose(volumes(Cluster(g.grid, labels, 3), g), [0.5, 0.5, 0.0])


@given(seed=st.integers(0, 2**32 - 1), N=st.integers(2, 5), bump=st.booleans())
def test_volumes_partition_the_torus(seed, N, bump):
    grid = TorusGrid((24, 24))
    g = ConformalMetric.from_expression(grid, "bump:0.3,0.2") if bump else ConformalMetric.flat_metric(grid)
    labels = np.random.default_rng(seed).integers(1, N + 1, size=grid.shape)
    assert abs(volumes(Cluster(grid, labels, N), g).sum() - g.volume) <= 1e-12


# ---------------------------------------------------------------------------
# interfaces


def test_two_bands(flat):
    g = flat(64, 64)
    H = interface_measure(bands(), g)
    assert H[0, 1] == pytest.approx(2.0)
    assert H[1, 0] == H[0, 1]
    assert multi_perimeter(bands(), [[0, 0.25], [0.25, 0]], g) == pytest.approx(4 * 0.25)


def test_single_label(flat):
    g = flat(32, 32)
    c = Cluster(g.grid, np.ones((32, 32), dtype=int), 3)
    assert np.all(interface_measure(c, g) == 0.0)
    assert multi_perimeter(c, TensionMatrix.unit(3), g) == 0.0


@pytest.mark.parametrize("side", [4, 10, 17])
def test_square_boundary(flat, side):
    g = flat(64, 64)
    labels = np.full((64, 64), 2)
    labels[5:5 + side, 40:40 + side] = 1
    H = interface_measure(Cluster(g.grid, labels, 2), g)
    assert H[0, 1] == pytest.approx(4 * side / 64)


@settings(max_examples=25)
@given(seed=st.integers(0, 2**32 - 1), N=st.integers(2, 4))
def test_unit_weights_sum_chamber_perimeters(seed, N):
    grid = TorusGrid((16, 16))
    g = ConformalMetric.flat_metric(grid)
    rng = np.random.default_rng(seed)
    coarse = rng.integers(1, N + 1, size=(4, 4))
    c = Cluster(grid, np.kron(coarse, np.ones((4, 4), dtype=int)), N)
    assert multi_perimeter(c, TensionMatrix.unit(N), g) == pytest.approx(chamber_perimeters(c, g).sum(), rel=1e-13)


def test_tension_shape_is_checked(flat):
    with pytest.raises(ShapeError):
        multi_perimeter(bands(), TensionMatrix.unit(3), flat(64, 64))


def test_isotropic_estimator_on_a_disk(flat):
    g = flat(256, 256)
    r = 0.2
    mask = disk_labels(g.grid, (0.5, 0.5), r) == 1
    assert isotropic_perimeter(mask, g) == pytest.approx(2 * math.pi * r, rel=0.01)
    # face counting overestimates a round boundary by about 4/pi
    face = interface_measure(Cluster(g.grid, np.where(mask, 1, 2), 2), g)[0, 1]
    assert face / (2 * math.pi * r) == pytest.approx(4 / math.pi, rel=0.02)


def test_isotropic_pair_measure_matches_single_set(flat):
    g = flat(128, 128)
    c = Cluster(g.grid, disk_labels(g.grid, (0.3, 0.6), 0.15), 2)
    pair = isotropic_multi_perimeter(c, TensionMatrix.unit(2), g)
    assert pair / 2 == pytest.approx(isotropic_perimeter(c.chamber(1), g), rel=1e-10)


# ---------------------------------------------------------------------------
# flat distance


def test_flat_distance_cases(flat):
    g = flat(100, 100)
    a = Cluster(g.grid, np.full((100, 100), 3), 3)
    assert flat_distance(a, a, g) == 0.0
    lab = a.labels.copy()
    lab[:10] = 1  # a patch of measure 0.1
    b = Cluster(g.grid, lab, 3)
    assert flat_distance(a, b, g) == pytest.approx(0.1)
    lab2 = lab.copy()
    lab2[:10] = 2  # same cells, other chamber
    assert flat_distance(b, Cluster(g.grid, lab2, 3), g) == pytest.approx(0.2)


def test_flat_distance_needs_matching_chamber_counts(flat):
    g = flat(16, 16)
    with pytest.raises(ShapeError):
        flat_distance(Cluster(g.grid, np.ones((16, 16)), 2), Cluster(g.grid, np.ones((16, 16)), 3), g)


# ---------------------------------------------------------------------------
# diameters and components


@pytest.mark.parametrize("r", [0.05, 0.12])
def test_disk_diameter(r):
    grid = TorusGrid((128, 128))
    d = interior_diameter(Cluster(grid, disk_labels(grid, (0.9, 0.1), r), 2))
    h = 1 / 128
    assert abs(d - 2 * r) <= 2 * h


def test_single_cell_and_two_cells():
    grid = TorusGrid((64, 64))
    lab = np.full((64, 64), 2)
    lab[3, 3] = 1
    assert interior_diameter(Cluster(grid, lab, 2)) == 0.0
    lab[3, 60] = 1  # seven cells away through the seam
    h = 1 / 64
    assert abs(interior_diameter(Cluster(grid, lab, 2)) - 7 * h) <= h


def test_boundary_only_diameter_is_exact_for_compact_sets():
    grid = TorusGrid((256, 256))
    c = Cluster(grid, disk_labels(grid, (0.5, 0.5), 0.2), 2)
    d_fast, exact = interior_diameter_report(c, exact_limit=100)
    d_full, _ = interior_diameter_report(c, exact_limit=10**9)
    assert exact and d_fast == pytest.approx(d_full)


def test_empty_interior():
    grid = TorusGrid((16,))
    with pytest.raises(EmptyInterior):
        interior_diameter(Cluster(grid, np.full(16, 2), 2))


def test_components_wrap_around():
    mask = np.zeros((16, 16), dtype=bool)
    mask[0, 3:6] = mask[15, 3:6] = True
    mask[8, 8] = True
    _, count = periodic_components(mask)
    assert count == 2
    assert periodic_components(np.zeros((8, 8), dtype=bool))[1] == 0


def test_large_subdomain_ratio(flat):
    g = flat(256, 256)
    r = math.sqrt(0.05 / math.pi)
    rep = large_subdomain_report(Cluster(g.grid, disk_labels(g.grid, (0.5, 0.5), r), 2), g)
    assert rep["ratio"] == pytest.approx(2 / math.sqrt(math.pi), rel=0.02)
    assert rep["components"] == 1
    two = np.minimum(disk_labels(g.grid, (0.25, 0.25), 0.05), disk_labels(g.grid, (0.75, 0.7), 0.05))
    rep2 = large_subdomain_report(Cluster(g.grid, two, 2), g)
    assert rep2["components"] == 2
    assert rep2["ratio"] > 3 * rep["ratio"]


# ---------------------------------------------------------------------------
# isoperimetric bounds


def test_euclidean_constants():
    assert euclidean_isoperimetric_constant(2) == pytest.approx(2 * math.sqrt(math.pi))
    assert euclidean_isoperimetric_constant(1) == pytest.approx(2.0)
    assert euclidean_isoperimetric_constant(3) == pytest.approx((36 * math.pi) ** (1 / 3))


def test_bounds_for_a_single_disk():
    b = isoperimetric_bounds([0.01], TensionMatrix.unit(2), 2)
    assert b.upper == pytest.approx(2 * math.sqrt(math.pi * 0.01))
    assert b.lower == pytest.approx(b.upper)
    assert b.c_n == pytest.approx(3.5449077018, rel=1e-10)


def test_bounds_at_zero_volume():
    b = isoperimetric_bounds([0.0, 0.0], TensionMatrix.unit(3), 2)
    assert (b.lower, b.upper) == (0.0, 0.0)


def test_bounds_reject_negative_volume():
    with pytest.raises(NegativeVolume):
        isoperimetric_bounds([-0.1], TensionMatrix.unit(2), 2)


@given(v1=st.floats(0.0, 0.2), v2=st.floats(0.0, 0.2))
def test_bounds_are_ordered(v1, v2, tw_tension):
    b = isoperimetric_bounds([v1, v2], tw_tension, 2)
    assert 0.0 <= b.lower <= b.upper + 1e-15


# ---------------------------------------------------------------------------
# labeling fields


def test_from_field_at_a_well(tw):
    grid = TorusGrid((16, 16))
    c = from_field(Field.constant(grid, [0.0, 1.0]), tw)
    assert np.all(c.labels == 2)


def test_from_field_tie_prefers_the_smaller_index(dw):
    grid = TorusGrid((16,))
    assert np.all(from_field(Field.constant(grid, 0.5), dw).labels == 1)


def test_from_field_centre_of_the_triple_well(tw):
    # the origin well is strictly nearer than either axis well here
    grid = TorusGrid((16, 16))
    assert np.all(from_field(Field.constant(grid, [0.5, 0.5]), tw).labels == 3)


def test_from_field_needs_matching_components(dw):
    grid = TorusGrid((16, 16))
    with pytest.raises(ShapeError):
        from_field(Field.constant(grid, [0.5, 0.5]), dw)


def test_from_field_recovers_a_cluster(tw, tw_tension, quiet):
    grid = TorusGrid((128, 128))
    g = ConformalMetric.flat_metric(grid)
    lab = disk_labels(grid, (0.35, 0.5), 0.18, inside=1, outside=3)
    lab[(disk_labels(grid, (0.62, 0.5), 0.15) == 1) & (lab == 3)] = 2
    c = Cluster(grid, lab, 3)
    eps = 0.02
    res = modica_baldo(c, tw, tw_tension, eps, eps, g)
    back = from_field(res, tw, tw_tension)
    C1 = build_profile(tw, tw_tension, eps, eps).C1
    iface = float(np.sum(np.triu(interface_measure(c, g), 1)))
    assert flat_distance(back, c, g) <= C1 * eps * iface


# ---------------------------------------------------------------------------
# threshold dynamics


def test_restore_volumes_hits_each_target_within_a_cell():
    grid = TorusGrid((64, 64))
    g = ConformalMetric.from_expression(grid, "bump:0.2,0")
    rng = np.random.default_rng(0)
    psi = rng.random((3,) + grid.shape)
    v = np.array([0.1, 0.25])
    labels = restore_volumes(psi, v, g)
    got = volumes(Cluster(grid, labels, 3), g)[:-1]
    assert np.all(np.abs(got - v) <= 0.5 * g.b.max() * grid.cell_volume + 1e-15)


def test_mbo_double_bubble(flat):
    g = flat(256, 256)
    run = mbo_run([0.03, 0.03], TensionMatrix.unit(3), g)
    assert run.converged
    c = run.cluster
    length = isotropic_multi_perimeter(c, TensionMatrix.unit(3), g) / 2  # every wall counted once
    assert abs(length - equal_double_bubble_length(0.03)) / equal_double_bubble_length(0.03) <= 0.05
    assert np.all(np.abs(volumes(c, g)[:-1] - 0.03) <= g.grid.cell_volume)
    assert min(h["perimeter"] for h in run.history) <= run.initial_perimeter


def test_mbo_empty_chamber(flat):
    g = flat(64, 64)
    c = mbo_minimize([0.1, 0.0], TensionMatrix.unit(3), g)
    assert not np.any(c.labels == 2)


def test_mbo_small_volume_is_connected(flat):
    g = flat(128, 128)
    c = mbo_minimize([0.04], TensionMatrix.unit(2), g)
    assert large_subdomain_report(c, g)["components"] == 1


def test_mbo_input_checks(flat):
    g = flat(32, 32)
    with pytest.raises(ShapeError):
        mbo_run([0.1, 0.1, 0.1, 0.1], TensionMatrix.unit(3), g)
    with pytest.raises(ValueError):
        mbo_run([0.7, 0.4], TensionMatrix.unit(3), g)


def test_mbo_reports_nonconvergence(flat):
    g = flat(64, 64)
    with pytest.raises(NonConvergence) as info:
        mbo_minimize([0.2], TensionMatrix.unit(2), g, MBOOptions(max_sweeps=1))
    assert isinstance(info.value.partial, Cluster)


# ---------------------------------------------------------------------------
# snapshots


def test_cluster_text_round_trip(tmp_path):
    grid = TorusGrid((8, 16), (1.0, 2.0))
    c = Cluster(grid, np.random.default_rng(1).integers(1, 4, size=grid.shape), 3)
    assert cluster_from_text(cluster_to_text(c)) == c
    save_cluster(c, tmp_path / "c.achc")
    assert load_cluster(tmp_path / "c.achc") == c


def test_cluster_text_rejects_short_data():
    with pytest.raises(ValueError):
        cluster_from_text("ACHC 1\nn=1 shape=8 lengths=1.0 N=2\n1 1 2\n")
