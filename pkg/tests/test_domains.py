import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fundom import fixtures
from fundom.geometry import GraphPoint, Window
from fundom.domains import (DisconnectedGraphError, build_fundamental_domain, dirichlet_margins,
                            dirichlet_membership, dirichlet_oracle, incidence_graph, orbits_from_permutations,
                            spanning_tree_lift, verify_fundamental_set)
from fundom.quotient import NotFreeError
from fundom.voronoi import BAND, INTERIOR, OUTSIDE, Net

from conftest import scene_window

EAST, NORTH, WEST = 0, 1, 2


@pytest.fixture(scope="module")
def torus_fd(torus):
    return build_fundamental_domain(torus, scene_window("torus"), seed=1, samples=4000, probe_balls=4)


def lattice_orbit_net(action, base=(0.3, 0.2), radius=6.0):
    X = np.array([base])
    idx = action.candidates(radius)
    P = action.images(X, idx)[:, 0, :]
    return Net.from_points(action.space, P, phi=np.full(len(P), 0.5), orbit=np.zeros(len(P), int),
                           element=np.asarray(idx, int))


def test_lattice_dirichlet_examples(torus):
    assert dirichlet_membership(torus, (0.0, 0.0), (0.49, 0.0)).verdict == INTERIOR
    assert dirichlet_membership(torus, (0.0, 0.0), (0.5, 0.0)).verdict == BAND
    assert dirichlet_membership(torus, (0.0, 0.0), (0.51, 0.0)).verdict == OUTSIDE


def test_cross_dirichlet_examples(cross):
    p = GraphPoint(EAST, 1.0)
    assert dirichlet_membership(cross, p, GraphPoint(NORTH, 5.0)).verdict == BAND
    assert dirichlet_membership(cross, p, GraphPoint(EAST, 0.2)).verdict == INTERIOR
    assert dirichlet_membership(cross, p, GraphPoint(WEST, 0.2)).verdict == OUTSIDE


def test_trivial_dirichlet_is_everything(trivial):
    Y = np.random.default_rng(0).normal(size=(50, 2)) * 10
    assert np.all(np.isinf(dirichlet_margins(trivial, (0.0, 0.0), Y)))


def test_unit_square_is_a_fundamental_set(torus):
    oracle = dirichlet_oracle(torus, (0.0, 0.0), extent=1.0)
    rep = verify_fundamental_set(torus, oracle, Window((0.0, 0.0), 2.0), 1000, seed=3, extent=1.0)
    assert rep.coverage == 1.0 and rep.missed == 0
    assert all(0 < c <= 9 for c in rep.probe_counts)
    assert rep.passed


def test_half_square_covers_a_quarter(torus):
    oracle = lambda Y: np.max(np.abs(np.asarray(Y)), axis=1) <= 0.25
    rep = verify_fundamental_set(torus, oracle, Window((0.0, 0.0), 2.0), 4000, seed=4, extent=1.0)
    assert abs(rep.coverage - 0.25) < 0.03
    assert not rep.passed


def test_whole_space_with_trivial_group(trivial):
    rep = verify_fundamental_set(trivial, lambda Y: np.ones(len(Y), bool), Window((0.0, 0.0), 1.0), 500, seed=1)
    assert rep.coverage == 1.0 and rep.passed


def test_four_cycle_lift():
    edges, perm = fixtures.four_cycle_half_turn()
    G = nx.Graph(edges)
    vo, eo = orbits_from_permutations(G, [perm])
    lift = spanning_tree_lift(G, vo, eo)
    assert lift.subdivision.number_of_nodes() == 8 and nx.is_isomorphic(lift.subdivision, nx.cycle_graph(8))
    assert nx.is_isomorphic(lift.quotient, nx.cycle_graph(4))
    assert lift.tree.number_of_edges() == 3
    assert nx.is_isomorphic(lift.lift, nx.path_graph(4))
    assert lift.check()["bad_orbits"] == 0 and lift.strict
    assert len({vo[v] for v in lift.S}) == len(lift.S) == 2


def test_trivial_lift_takes_everything():
    G = nx.petersen_graph()
    lift = spanning_tree_lift(G, {v: v for v in G}, {frozenset(e): k for k, e in enumerate(G.edges)})
    assert lift.S == sorted(G.nodes)
    assert nx.is_tree(lift.lift) and lift.lift.number_of_nodes() == lift.subdivision.number_of_nodes()


def test_disconnected_graph_is_rejected():
    G = nx.Graph([(0, 1), (2, 3)])
    with pytest.raises(DisconnectedGraphError):
        spanning_tree_lift(G, {v: v for v in G}, {frozenset(e): 0 for e in G.edges})


def test_permutation_must_preserve_edges():
    with pytest.raises(ValueError):
        orbits_from_permutations(nx.path_graph(3), [[1, 0, 2]])


def test_lattice_incidence_is_a_grid(torus):
    net = lattice_orbit_net(torus)
    inc = incidence_graph(torus, net, Window((0.0, 0.0), 2.0))
    facets = inc.facet_graph()
    inner = [v for v in inc.graph if np.hypot(*net.points[v]) <= 2.0]
    assert inner and all(facets.degree(v) == 4 for v in inner)
    for v in inner:
        for w in facets[v]:
            assert np.isclose(np.abs(net.points[v] - net.points[w]).sum(), 1.0)
    assert nx.is_connected(inc.graph)
    # one edge orbit per direction up to inversion: horizontal, vertical and the two diagonals
    assert len(set(inc.edge_orbits.values())) == 4


def test_lattice_lift_picks_one_center_per_orbit(torus):
    net = lattice_orbit_net(torus)
    inc = incidence_graph(torus, net, Window((0.0, 0.0), 2.0))
    lift = spanning_tree_lift(inc.graph, inc.vertex_orbits, inc.edge_orbits)
    assert len(lift.S) == 1 and lift.strict


def test_two_point_net_single_edge(plane):
    from fundom.netting import Box
    action = fixtures.trivial()
    net = Net.from_points(plane, [(-0.5, 0.0), (0.5, 0.0)], phi=np.array([1.0, 1.0]),
                          orbit=np.array([0, 1]), element=np.array([0, 0]))
    inc = incidence_graph(action, net, Window((0.0, 0.0), 1.0))
    assert sorted(inc.graph.edges) == [(0, 1)]
    assert inc.graph.edges[0, 1]["contact"] > 0


def test_torus_fundamental_domain(torus_fd):
    rep = torus_fd.report
    assert rep.disjointness_violations == 0 and rep.missed == 0 and rep.coverage == 1.0
    assert rep.f_connected and rep.strict and rep.density >= 0.99
    assert rep.passed and not rep.caveats


def test_strictness_of_S(torus_fd):
    inc = torus_fd.incidence
    orbit = torus_fd.net.orbit
    present = {int(orbit[v]) for v in inc.graph}
    chosen = [int(orbit[v]) for v in torus_fd.S]
    assert sorted(chosen) == sorted(present)


def test_open_region_inside_closed_domain(torus_fd):
    Y = np.random.default_rng(5).uniform(-1.5, 1.5, size=(20000, 2))
    R, F = torus_fd.region(Y), torus_fd.domain(Y)
    assert R.any() and not np.any(R & ~F)


def test_torus_domain_has_unit_area(torus_fd):
    Y = np.random.default_rng(6).uniform(-3, 3, size=(60000, 2))
    area = torus_fd.domain(Y).mean() * 36
    assert abs(area - 1.0) < 0.05


def test_non_free_domain_is_rejected(cross):
    with pytest.raises(NotFreeError):
        build_fundamental_domain(cross, Window(GraphPoint(0, 0.0), 3.0), seed=1)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(["torus", "klein"]), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1),
       st.floats(-1, 1), st.integers(1, 8))
def test_dirichlet_equivariance(name, x0, x1, y0, y1, k):
    action = fixtures.load(name)
    X, Y = np.array([[x0, x1]]), np.array([[y0, y1]])
    g = int(action.candidates(3.0)[k])
    gX, gY = action.images(X, [g])[0], action.images(Y, [g])[0]
    m = dirichlet_margins(action, tuple(X[0]), Y)[0]
    gm = dirichlet_margins(action, tuple(gX[0]), gY)[0]
    assert abs(m - gm) <= 1e-9
