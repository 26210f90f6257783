import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fundom import fixtures
from fundom.geometry import EuclideanPlane, GraphPoint, PoincareDisk, Window, cross_graph
from fundom.netting import (AUDIT_LIMIT, Box, NotFreeError, StreamTooSmallError, invariant_net, maximal_net,
                            perturb_net, perturbation_radii)
from fundom.voronoi import Net, band_fraction

from conftest import scene_window


def assert_maximal(space, net):
    """Every pair satisfies ``d(x, y) >= min(phi(x), phi(y)) / 2``, by a full scan."""
    D = space.pairwise(net.points, net.points)
    bound = 0.5 * np.minimum(net.phi[:, None], net.phi[None, :])
    np.fill_diagonal(D, np.inf)
    assert np.all(D >= bound - 1e-12)


@pytest.fixture(scope="module")
def torus_net():
    return invariant_net(fixtures.torus(), scene_window("torus"), seed=1)


@pytest.fixture(scope="module")
def schottky_net():
    return invariant_net(fixtures.schottky(), scene_window("schottky"), seed=1)


def test_box_net_is_maximal_and_covers():
    net = maximal_net(EuclideanPlane(), Box((0, 0), (1, 1)), 0.3, seed=1)
    assert_maximal(net.space, net)
    assert net.flags["coverage_ratio"] <= 1.05
    assert net.gap >= 0.15


def test_disk_and_graph_nets():
    disk = maximal_net(PoincareDisk(), Window((0.0, 0.0), 1.5), 0.4, seed=3)
    assert_maximal(disk.space, disk)
    cross = cross_graph()
    gnet = maximal_net(cross, Window(GraphPoint(0, 0.0), 5.0), 0.5, seed=4)
    assert_maximal(cross, gnet)
    assert gnet.flags["coverage_ratio"] <= 1.05


def test_variable_phi_is_respected():
    phi = lambda P: 0.1 + 0.2 * np.abs(np.asarray(P)[:, 0])
    net = maximal_net(EuclideanPlane(), Box((0, 0), (1, 1)), phi, seed=5)
    assert_maximal(net.space, net)
    assert np.allclose(net.phi, phi(net.points))


def test_stream_too_small():
    with pytest.raises(StreamTooSmallError) as err:
        maximal_net(EuclideanPlane(), Box((0, 0), (10, 10)), 0.3, stream=np.array([[5.0, 5.0]]), seed=1)
    assert len(err.value.witness) == 2


def test_phi_must_be_positive():
    with pytest.raises(ValueError):
        maximal_net(EuclideanPlane(), Box((0, 0), (1, 1)), 0.0, seed=1)


def test_perturbation_radii_respect_constraints():
    net = maximal_net(EuclideanPlane(), Box((0, 0), (2, 2)), 0.3, seed=6)
    eps = perturbation_radii(net.space, net.points, net.phi)
    d, _ = net.nearest_two(net.points)
    assert np.all(eps <= 1e-2 * np.minimum(net.phi, d[:, 1]) / 2 + 1e-15)
    assert np.all(eps < net.phi)
    rank = np.sqrt(1.0 + np.arange(len(eps)))
    assert np.all(eps <= 1e-2 * np.minimum(net.phi, d[:, 1]) / 2 / rank + 1e-15)


def test_perturbed_lattice_passes_audit():
    sp = EuclideanPlane()
    pts = np.array([(a, b) for a in range(-4, 5) for b in range(-4, 5)], float) * 0.3
    lattice = Net.from_points(sp, pts)
    lattice.phi = np.full(len(pts), 0.6)
    w = Window((0.15, 0.15), 0.9)
    assert band_fraction(sp, lattice, w, 20000, 1) >= 0  # cocircular corners before
    out = perturb_net(sp, lattice, seed=2, audit_window=w)
    assert out.flags["thin_boundary"] and out.flags["band_fraction"] < AUDIT_LIMIT
    moved = sp.rowwise(out.points, lattice.points)
    assert np.all(moved <= 1e-2 * 0.3 / 2 + 1e-12)
    assert_maximal(sp, out)


def test_single_point_perturbation():
    sp = EuclideanPlane()
    net = Net.from_points(sp, [(1.0, 2.0)])
    net.phi = np.array([0.5])
    out = perturb_net(sp, net, seed=1)
    assert sp.distance((1.0, 2.0), tuple(out.points[0])) <= 1e-2 * 0.5 / 2


def test_graph_audit_failure_is_flagged():
    sp = cross_graph()
    net = Net.from_points(sp, [GraphPoint(0, 1.0), GraphPoint(2, 1.0)])
    net.phi = np.array([1.0, 1.0])
    out = perturb_net(sp, net, seed=1, audit_window=Window(GraphPoint(0, 0.0), 10.0))
    assert "thin_boundary" in out.flags


def test_torus_invariant_net(torus_net):
    net = torus_net
    assert np.allclose(net.phi, 1 / 16)
    assert net.flags["invariance_defect"] <= 1e-9
    assert net.gap >= 0.5 / 16
    assert net.flags["thin_boundary"]
    # lattice periodic: generator translates of inner points are net points
    inner = net.points[np.hypot(*net.points.T) <= 2.0]
    for shift in ([1, 0], [-1, 0], [0, 1], [0, -1]):
        d, _ = net.index.query(inner + shift, 1)
        assert d.max() <= 1e-9


def test_no_two_same_orbit_tiles_share_points(torus_net, schottky_net):
    for net, center, radius in ((torus_net, (0.0, 0.0), 3.0), (schottky_net, (0.0, 0.0), 1.8)):
        Y = net.space.sample_ball(center, radius, 10000, 9).points
        d, i = net.index.query(Y, 4)
        tied = d <= d[:, :1] + 1e-9
        orbits = net.orbit[i]
        for a in range(1, 4):
            both = tied[:, 0] & tied[:, a]
            assert not np.any(both & (orbits[:, 0] == orbits[:, a]))


def test_schottky_invariant_net(schottky_net):
    net = schottky_net
    assert not net.flags["enumeration_complete"]
    assert net.flags["invariance_defect"] <= 1e-9
    assert net.gap >= 0.5 * net.phi.min()


def test_trivial_invariant_net_is_a_maximal_net():
    action = fixtures.trivial()
    net = invariant_net(action, Window((0.0, 0.0), 1.0), seed=1)
    assert len(np.unique(net.orbit)) == len(net)
    assert_maximal(net.space, net)


def test_non_free_action_is_rejected():
    action = fixtures.cross()
    with pytest.raises(NotFreeError, match="fixed"):
        invariant_net(action, Window(GraphPoint(0, 0.0), 3.0), seed=1)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.15, 0.6), st.floats(0.5, 2.0))
def test_random_boxes_give_maximal_covering_nets(seed, phi, side):
    sp = EuclideanPlane()
    net = maximal_net(sp, Box((0, 0), (side, side)), phi, seed=seed)
    assert_maximal(sp, net)
    Y = Box((0, 0), (side, side)).sample(2000, seed + 1)
    d, _ = net.index.query(Y, 1)
    assert d.max() <= phi * 1.05
