"""Dirichlet domains, fundamental-set checks, incidence graphs, tree lifts and fundamental domains."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import networkx as nx
import numpy as np
from scipy.optimize import minimize_scalar

from .action import ActionSystem
from .geometry import TOL, EuclideanPlane, MetricGraph, PoincareDisk, Window, _mobius_from_origin, _mobius_to_origin
from .netting import invariant_net, jitter
from .voronoi import BAND, INTERIOR, OUTSIDE, Net, TileMembership, verdicts

TAU_ADJ = 1e-3
DENSITY_RADIUS = 1e-3
DENSITY_TARGET = 0.99


class LiftError(RuntimeError):
    pass


class DisconnectedGraphError(RuntimeError):
    """The incidence graph of a connected window came out disconnected."""


# -- Dirichlet domains ------------------------------------------------------

def dirichlet_margins(action: ActionSystem, x, Y, horizon: float = 1.0) -> np.ndarray:
    """``min_{g != 1} d(y, g x) - d(y, x)`` for the rows of ``Y``.

    A competitor ``g x`` closer to ``y`` than ``x`` has ``d(x, g x) <= 2 d(x, y)``,
    so enumerating ``d(x, g x) <= 2 max d(x, y) + horizon`` makes every
    margin below ``horizon`` exact; larger margins are lower bounds.
    """
    space = action.space
    X = space.to_array([space.coerce(x)])
    Y = np.asarray(Y, float).reshape(-1, 2)
    dx = space.distances_to(Y, X[0])
    if not action.letters:
        return np.full(len(Y), np.inf)
    orbit = action.orbit_in_ball(space.from_array(X)[0], 2 * float(dx.max()) + horizon)
    d_orb = space.distances_to(orbit.points, X[0])
    others = orbit.points[d_orb > TOL]
    if not len(others):
        return np.full(len(Y), np.inf)
    return space.pairwise(Y, others).min(axis=1) - dx


def dirichlet_membership(action: ActionSystem, x, y, band: float = TOL) -> TileMembership:
    space = action.space
    m = float(dirichlet_margins(action, x, space.to_array([space.coerce(y)]))[0])
    return TileMembership.from_margin(m, band)


def dirichlet_oracle(action: ActionSystem, x, band: float = TOL, extent: float | None = None) -> Callable:
    """Closed Dirichlet domain of ``x`` as a vectorized predicate.

    With ``extent`` the predicate is restricted to ``B(x, extent)``, which
    bounds the orbit search for far-away queries.
    """
    space = action.space
    X = space.to_array([space.coerce(x)])[0]

    def oracle(Y):
        Y = np.asarray(Y, float).reshape(-1, 2)
        out = np.zeros(len(Y), bool)
        near = np.ones(len(Y), bool) if extent is None else space.distances_to(Y, X) <= extent
        if near.any():
            out[near] = dirichlet_margins(action, x, Y[near]) >= -band
        return out

    return oracle


# -- fundamental sets -------------------------------------------------------

@dataclass
class DomainReport:
    samples: int
    coverage: float
    missed: int
    probe_counts: list
    disjointness_violations: int | None = None
    disjointness_samples: int = 0
    f_connected: bool | None = None
    density: float | None = None
    strict: bool | None = None
    caveats: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        ok = self.missed == 0
        if self.disjointness_violations is not None:
            ok &= self.disjointness_violations == 0
        if self.f_connected is not None:
            ok &= self.f_connected
        if self.strict is not None:
            ok &= self.strict
        if self.density is not None:
            ok &= self.density >= DENSITY_TARGET
        return bool(ok)

    def to_json(self):
        return {"samples": self.samples, "coverage": self.coverage, "missed": self.missed,
                "probe_counts": list(self.probe_counts),
                "disjointness_violations": self.disjointness_violations,
                "disjointness_samples": self.disjointness_samples, "f_connected": self.f_connected,
                "density": self.density, "strict": self.strict, "passed": self.passed,
                "caveats": list(self.caveats)}


def _reach(action, window, extent):
    c = action.space.to_array([action.space.coerce(window.center)])
    return 2 * (window.radius + float(action.dist_to_base(c)[0])) + extent


def covered_by_translates(action: ActionSystem, oracle: Callable, Y, reach: float,
                          chunk: int = 64) -> tuple[np.ndarray, list]:
    """Per sample, whether some enumerated ``g`` has ``g^-1 y`` in the set; plus the hitting elements."""
    idx = action.candidates(reach)
    hit = np.zeros(len(Y), bool)
    who = [set() for _ in range(len(Y))]
    for s in range(0, len(idx), chunk):
        part = idx[s:s + chunk]
        pre = action.preimages(Y, part)  # (k, N, 2)
        inside = oracle(pre.reshape(-1, 2)).reshape(len(part), len(Y))
        hit |= inside.any(axis=0)
        for a, b in zip(*np.nonzero(inside)):
            who[b].add(int(part[a]))
    return hit, who


def verify_fundamental_set(action: ActionSystem, oracle: Callable, window: Window, samples: int, seed: int,
                           probe_balls: int = 10, probe_radius: float = 1.0, probe_samples: int = 300,
                           extent: float | None = None) -> DomainReport:
    """Check that translates of a closed set cover the window and are locally finite.

    ``extent`` bounds ``d(o, y)`` over the set, which limits the elements
    that can carry a set point onto a window point.
    """
    space = action.space
    extent = window.radius + 1.0 if extent is None else extent
    Y = space.sample_ball(window.center, window.radius, samples, seed).points
    hit, _ = covered_by_translates(action, oracle, Y, _reach(action, window, extent))
    counts = _probe_counts(action, oracle, window, probe_balls, probe_radius, probe_samples, seed,
                           _reach(action, window, extent + probe_radius))
    caveats = [] if action.complete else ["enumeration is heuristic: coverage is a lower bound"]
    return DomainReport(samples, float(hit.mean()), int((~hit).sum()), counts, caveats=caveats)


def _probe_counts(action, oracle, window, balls, radius, n, seed, reach):
    space = action.space
    centers = space.sample_ball(window.center, window.radius, balls, seed + 1).points
    counts = []
    for k, c in enumerate(space.from_array(centers)):
        Z = space.sample_ball(c, radius, n, seed + 2 + k).points
        _, who = covered_by_translates(action, oracle, Z, reach)
        counts.append(len(set().union(*who)))
    return counts


# -- incidence graphs -------------------------------------------------------

def _midpoints(space, X, Y):
    if isinstance(space, EuclideanPlane):
        return (X + Y) / 2
    if isinstance(space, PoincareDisk):
        x, y = space.as_complex(X), space.as_complex(Y)
        w = _mobius_to_origin(y, x)
        r = np.abs(w)
        d = 2 * np.arctanh(np.minimum(r, 1 - 1e-16))
        u = np.where(r > 0, w / np.where(r > 0, r, 1), 0)
        return space.from_complex(_mobius_from_origin(np.tanh(d / 4) * u, x))
    out = []
    for p, q in zip(space.from_array(X), space.from_array(Y)):
        c = space.geodesic(p, q)
        out.append(c.points_at([c.length / 2])[0])
    return np.array(out)


def _bisector_points(space, x, y, m, s):
    """Points at signed distance ``s`` from the midpoint ``m`` along the bisector of ``x, y``."""
    if isinstance(space, EuclideanPlane):
        v = y - x
        n = np.array([-v[1], v[0]]) / np.hypot(*v)
        return m + s[:, None] * n
    zm = complex(*m)
    tx = _mobius_to_origin(complex(*x), zm)
    u = 1j * tx / abs(tx)
    w = np.tanh(np.asarray(s) / 2) * u
    return PoincareDisk.from_complex(_mobius_from_origin(w, zm))


@dataclass
class IncidenceGraph:
    """Adjacency of closed tiles among net points inside a region.

    Node attributes: ``orbit``. Edge attributes: ``orbit`` (edge orbit id)
    and ``contact`` (approximate length of the shared boundary; zero for
    tiles meeting in a point).
    """

    graph: nx.Graph
    net: Net
    flags: dict = field(default_factory=dict)

    @property
    def vertex_orbits(self):
        return nx.get_node_attributes(self.graph, "orbit")

    @property
    def edge_orbits(self):
        return {frozenset(e): o for *e, o in self.graph.edges(data="orbit")}

    def facet_graph(self, min_contact: float = 1e-6) -> nx.Graph:
        """Subgraph of pairs sharing a boundary piece of positive length."""
        keep = [(a, b) for a, b, c in self.graph.edges(data="contact") if c > min_contact]
        return self.graph.edge_subgraph(keep).copy()

    def to_json(self):
        g = self.graph
        return {"vertices": [{"id": int(v), "orbit": int(g.nodes[v]["orbit"])} for v in sorted(g.nodes)],
                "edges": [{"u": int(a), "v": int(b), "orbit": int(o), "contact": float(c)}
                          for a, b, o, c in sorted((min(a, b), max(a, b), d["orbit"], d["contact"])
                                                   for a, b, d in g.edges(data=True))],
                "flags": dict(sorted(self.flags.items()))}


def _rep_edges(space, net: Net, rep: int, reach: float, probes: int, tau: float, seed: int):
    """Neighbours of net point ``rep`` whose closed tiles meet its own, with contact lengths.

    ``reach`` bounds the distance from a tile center to its tile, so only
    points within ``2 reach`` can be neighbours and only bisector points
    within ``reach`` of the midpoint need probing.
    """
    x = net.points[rep]
    local = net.index.within(x, 2 * reach + 2 * reach)
    local = local[local != rep]
    if not len(local):
        return []
    Lp = np.vstack([x[None, :], net.points[local]])  # column 0 is rep
    if isinstance(space, MetricGraph):
        return _rep_edges_graph(space, net, rep, local, Lp, reach, probes, seed)
    cand = np.nonzero(space.distances_to(net.points[local], x) <= 2 * reach)[0]
    if not len(cand):
        return []
    n = len(cand)
    M = _midpoints(space, np.broadcast_to(x, (n, 2)), net.points[local[cand]])
    s = np.linspace(-reach, reach, probes)
    P = np.concatenate([np.vstack([M[j][None, :], _bisector_points(space, x, net.points[local[c]], M[j], s)])
                        for j, c in enumerate(cand)])
    D = space.pairwise(P, Lp).reshape(n, probes + 1, len(Lp))
    dx = D[:, :, 0].copy()
    D[:, :, 0] = np.inf
    D[np.arange(n), :, cand + 1] = np.inf
    H = D.min(axis=2) - dx if len(Lp) > 2 else np.full((n, probes + 1), np.inf)
    out = []
    for j, c in enumerate(cand):
        h = H[j]
        best = int(np.argmax(h))
        if h[best] < -tau:
            continue
        if h[best] < -TOL:
            y = net.points[local[c]]
            if _refine(space, x, y, M[j], Lp, c + 1, s, best - 1, reach) < -TOL:
                continue
        contact = float(np.sum(h[1:] >= -TOL) * (s[1] - s[0])) if probes > 1 else 0.0
        out.append((int(local[c]), contact))
    return out


def _clearance(space, P, Lp, col):
    """``min_{w != x, y} d(p, w) - d(p, x)`` with ``x`` in column 0 and ``y`` in column ``col``."""
    D = space.pairwise(P, Lp)
    dx = D[:, 0].copy()
    D[:, 0] = np.inf
    D[:, col] = np.inf
    return D.min(axis=1) - dx if D.shape[1] > 2 else np.full(len(P), np.inf)


def _refine(space, x, y, m, Lp, col, s, k, half):
    lo = s[max(k - 1, 0)] if k >= 0 else -half
    hi = s[min(k + 1, len(s) - 1)] if k >= 0 else half
    f = lambda t: -float(_clearance(space, _bisector_points(space, x, y, m, np.array([t])), Lp, col)[0])
    r = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
    return -float(r.fun)


def _rep_edges_graph(space, net, rep, local, Lp, phi_max, probes, seed):
    """Graph version: probe the midpoint, nearby vertices and random points near it."""
    x = net.points[rep]
    vert = np.array([space.vertex_point(v) for v in range(space.n_vertices)], float)
    out = []
    for j, i in enumerate(local):
        y = net.points[i]
        m = _midpoints(space, x[None, :], y[None, :])[0]
        mp = space.from_array(m)[0]
        rnd = space.sample_ball(mp, 2 * phi_max, probes, seed + int(i)).points
        near_v = vert[space.distances_to(vert, m) <= 2 * phi_max]
        P = np.vstack([m[None, :], near_v, rnd])
        dxy = space.distances_to(P, x) - space.distances_to(P, y)
        h = np.where(np.abs(dxy) <= TOL, _clearance(space, P, Lp, j + 1), -np.inf)
        if h.max() >= -TOL:
            out.append((int(i), float(np.mean(h >= -TOL) * 4 * phi_max)))
    return out


class _UnionFind:
    """Disjoint sets over hashable keys; the earliest-seen key of a class is its root."""

    def __init__(self):
        self.parent = {}
        self.order = {}

    def find(self, a):
        if a not in self.parent:
            self.parent[a] = a
            self.order[a] = len(self.order)
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            if self.order[ra] > self.order[rb]:
                ra, rb = rb, ra
            self.parent[rb] = ra


def tile_reach(net: Net) -> float:
    """Bound on the distance from a net point to any point of its tile.

    Covering at radius phi gives ``2 max(phi)``. When the net records a
    measured covering ratio the bound uses it with 50% headroom instead.
    """
    phi_max = float(np.max(net.phi)) if net.phi is not None else net.gap
    ratio = net.flags.get("coverage_ratio")
    if ratio is None:
        return 2 * phi_max
    return min(2.0, 1.5 * ratio) * phi_max


def incidence_graph(action: ActionSystem, net: Net, window: Window, probes: int = 32, seed: int = 0,
                    tau: float = TAU_ADJ, margin: float | None = None) -> IncidenceGraph:
    """Tile adjacency for a group-invariant net, computed once per orbit and carried by the group.

    Vertices are net points within ``window.radius + margin`` of the window
    center (default margin ``2 max(phi)``, so every tile meeting the window
    is present).
    """
    space = action.space
    if net.orbit is None or net.element is None:
        raise ValueError("incidence graphs need a net with orbit labels")
    phi_max = float(np.max(net.phi)) if net.phi is not None else net.gap
    margin = 2 * phi_max if margin is None else margin
    reach = tile_reach(net)
    c = space.to_array([space.coerce(window.center)])[0]
    in_region = space.distances_to(net.points, c) <= window.radius + margin
    G = nx.Graph()
    for v in np.nonzero(in_region)[0]:
        G.add_node(int(v), orbit=int(net.orbit[v]))
    reps = {}
    for v in np.nonzero(net.element == 0)[0]:
        reps.setdefault(int(net.orbit[v]), int(v))
    uf = _UnionFind()
    rep_edges = {}
    for k, r in sorted(reps.items()):
        rep_edges[k] = _rep_edges(space, net, r, reach, probes, tau, seed)
    # carry each representative's edges to every vertex of its orbit
    verts = np.array(sorted(G.nodes))
    for g in np.unique(net.element[verts]):
        src, tgt, lab, con = [], [], [], []
        for v in verts[net.element[verts] == g]:
            k = int(net.orbit[v])
            for j, contact in rep_edges.get(k, []):
                src.append(int(v))
                tgt.append(j)
                lab.append(("e", k, j))
                con.append(contact)
        if not src:
            continue
        imgs = net.points[tgt] if g == 0 else action.images(net.points[tgt], [int(g)])[0]
        d, found = net.index.query(imgs, 1)
        for v, w, dd, label, contact in zip(src, found[:, 0].tolist(), d[:, 0], lab, con):
            if dd > 1e-7 or w not in G or w == v:
                continue
            if G.has_edge(v, w):
                uf.union(G.edges[v, w]["label"], label)
                G.edges[v, w]["contact"] = max(G.edges[v, w]["contact"], contact)
            else:
                G.add_edge(v, w, label=label, contact=contact)
    roots = {}
    for a, b, lab in G.edges(data="label"):
        G.edges[a, b]["orbit"] = roots.setdefault(uf.find(lab), len(roots))
    for a, b in G.edges:
        del G.edges[a, b]["label"]
    flags = {"probes": probes, "tau_adj": tau, "region_radius": window.radius + margin, "tile_reach": reach}
    return IncidenceGraph(G, net, flags)


# -- tree lifting -----------------------------------------------------------

@dataclass
class TreeLift:
    subdivision: nx.Graph
    quotient: nx.Graph
    tree: nx.Graph
    lift: nx.Graph
    S: list
    orbit_of: dict

    def check(self) -> dict:
        """Exhaustive audit: lift is a tree meeting every orbit of the subdivision once."""
        counts = {}
        for v in self.lift.nodes:
            counts[self.orbit_of[v]] = counts.get(self.orbit_of[v], 0) + 1
        orbits = set(self.orbit_of[v] for v in self.subdivision.nodes)
        bad = [o for o in orbits if counts.get(o, 0) != 1]
        return {"is_tree": bool(nx.is_tree(self.lift)), "orbits": len(orbits), "bad_orbits": len(bad),
                "tree_spans_quotient": bool(nx.is_tree(self.tree)
                                            and self.tree.number_of_nodes() == self.quotient.number_of_nodes())}

    @property
    def strict(self) -> bool:
        c = self.check()
        return c["is_tree"] and c["bad_orbits"] == 0 and c["tree_spans_quotient"]


def barycentric_subdivision(graph: nx.Graph, vertex_orbit: dict, edge_orbit: dict):
    """Subdivide each edge at its midpoint; returns the graph and the orbit label of every node."""
    sub = nx.Graph()
    orbit_of = {}
    for v in graph.nodes:
        sub.add_node(("v", v))
        orbit_of[("v", v)] = ("v", vertex_orbit[v])
    for a, b in graph.edges:
        e = ("e", frozenset((a, b)))
        sub.add_edge(("v", a), e)
        sub.add_edge(e, ("v", b))
        orbit_of[e] = ("e", edge_orbit[frozenset((a, b))])
    return sub, orbit_of


def spanning_tree_lift(graph: nx.Graph, vertex_orbit: dict, edge_orbit: dict, root=None) -> TreeLift:
    """Lift a breadth-first maximal tree of ``Gamma'/G`` to a subtree of ``Gamma'``.

    Breadth-first search in the subdivision that enters each orbit once.
    When the subdivision covers its quotient, an orbit is first reached at
    its quotient distance from the root, so the projected tree is a
    breadth-first maximal tree and the searched tree is its lift.
    """
    if graph.number_of_nodes() == 0:
        raise LiftError("empty graph")
    if not nx.is_connected(graph):
        raise DisconnectedGraphError("incidence graph is disconnected")
    sub, orbit_of = barycentric_subdivision(graph, vertex_orbit, edge_orbit)
    quotient = nx.Graph()
    quotient.add_nodes_from(set(orbit_of.values()))
    for a, b in sub.edges:
        quotient.add_edge(orbit_of[a], orbit_of[b])
    root = ("v", min(graph.nodes) if root is None else root)
    lift = nx.Graph()
    lift.add_node(root)
    tree = nx.Graph()
    tree.add_node(orbit_of[root])
    seen = {orbit_of[root]}
    frontier = [root]
    while frontier:
        nxt = []
        for u in frontier:
            for w in sorted(sub.neighbors(u), key=_node_key):
                o = orbit_of[w]
                if o in seen:
                    continue
                seen.add(o)
                lift.add_edge(u, w)
                tree.add_edge(orbit_of[u], o)
                nxt.append(w)
        frontier = nxt
    S = sorted(v for kind, v in lift.nodes if kind == "v")
    return TreeLift(sub, quotient, tree, lift, S, orbit_of)


def _node_key(n):
    kind, v = n
    return (0, v, 0) if kind == "v" else (1,) + tuple(sorted(v))


def orbits_from_permutations(graph: nx.Graph, perms) -> tuple[dict, dict]:
    """Vertex and edge orbits of a graph under the group generated by vertex permutations."""
    gens = [dict(enumerate(p)) if not isinstance(p, dict) else p for p in perms]
    vuf, euf = _UnionFind(), _UnionFind()
    for v in graph.nodes:
        vuf.find(v)
        for g in gens:
            vuf.union(v, g[v])
    for a, b in graph.edges:
        e = frozenset((a, b))
        euf.find(e)
        for g in gens:
            ge = frozenset((g[a], g[b]))
            if not graph.has_edge(*ge):
                raise ValueError(f"permutation does not preserve edge {tuple(e)}")
            euf.union(e, ge)
    vlab, elab = {}, {}
    vo = {v: vlab.setdefault(vuf.find(v), len(vlab)) for v in sorted(graph.nodes)}
    eo = {frozenset(e): elab.setdefault(euf.find(frozenset(e)), len(elab))
          for e in sorted(tuple(sorted(e)) for e in graph.edges)}
    return vo, eo


def central_vertex(inc: IncidenceGraph, window: Window) -> int:
    """Graph vertex nearest the window center.

    Rooting the lift here keeps it away from the rim, where the window cuts
    orbits short and the graph stops being equivariant.
    """
    space = inc.net.space
    c = space.to_array([space.coerce(window.center)])[0]
    verts = np.array(sorted(inc.graph.nodes))
    return int(verts[np.argmin(space.distances_to(inc.net.points[verts], c))])


# -- the fundamental domain -------------------------------------------------

@dataclass
class FundamentalDomain:
    net: Net
    incidence: IncidenceGraph
    lift: TreeLift
    S: list
    report: DomainReport | None = None

    def _hull(self):
        # a ball holding every tile of S; tiles lie within 2 max(phi) of their centers
        if not hasattr(self, "_hull_cache"):
            space = self.net.space
            P = self.net.points[self.S]
            c = P[0]
            phi = float(np.max(self.net.phi)) if self.net.phi is not None else self.net.gap
            self._hull_cache = (c, float(space.distances_to(P, c).max()) + 2 * phi)
        return self._hull_cache

    def _tiles(self, Y, band):
        Y = np.asarray(Y, float).reshape(-1, 2)
        k = min(len(self.net), 6)
        d = np.full((len(Y), k), np.inf)
        i = np.full((len(Y), k), -1, dtype=int)
        c, r = self._hull()
        near = self.net.space.distances_to(Y, c) <= r + band
        if near.any():
            d[near], i[near] = self.net.index.query(Y[near], k)
        return d, i

    def region(self, Y, band: float = TOL) -> np.ndarray:
        """Open region: ``y`` lies strictly inside the tile of some point of ``S``."""
        d, i = self._tiles(Y, band)
        inS = np.isin(i[:, 0], self.S)
        gap = np.full(len(d), np.inf)
        if d.shape[1] > 1:
            np.subtract(d[:, 1], d[:, 0], out=gap, where=np.isfinite(d[:, 0]))
        return inS & (gap > band) & self._known(Y, d)

    def domain(self, Y, band: float = TOL) -> np.ndarray:
        """Closed domain: ``y`` lies in the closed tile of some point of ``S``."""
        d, i = self._tiles(Y, band)
        tied = d <= d[:, :1] + band
        inS = np.isin(i, self.S) & tied
        return inS.any(axis=1) & self._known(Y, d)

    def _known(self, Y, d):
        # tiles are only trusted where the net is complete around y
        c = self.net.flags.get("region_center")
        r = self.net.flags.get("closure_radius")
        if c is None or r is None:
            return np.ones(len(Y), bool)
        space = self.net.space
        return space.distances_to(Y, np.asarray(c, float)) + 2 * d[:, 0] <= r

    def to_json(self):
        space = self.net.space
        S_pts = self.net.points[self.S]
        return {"S": [{"index": int(i), "point": list(map(float, p)), "orbit": int(self.net.orbit[i])}
                      for i, p in zip(self.S, S_pts)],
                "incidence": self.incidence.to_json(), "lift": self.lift.check(),
                "report": None if self.report is None else self.report.to_json(),
                "model": space.model}


def build_fundamental_domain(action: ActionSystem, window: Window, seed: int, samples: int = 10000,
                             probes: int = 32, stream_size: int | None = None,
                             probe_balls: int = 10, report: bool = True) -> FundamentalDomain:
    """Net, incidence graph, tree lift and the resulting open region and closed domain."""
    space = action.space
    net = invariant_net(action, window, seed, stream_size=stream_size, closure_factor=8)
    net.flags["region_center"] = space.to_array([space.coerce(window.center)])[0].tolist()
    inc = incidence_graph(action, net, window, probes=probes, seed=seed)
    G = inc.graph
    if not nx.is_connected(G):
        inc = incidence_graph(action, net, window, probes=4 * probes, seed=seed + 1)
        inc.flags["escalated"] = True
        G = inc.graph
        if not nx.is_connected(G):
            raise DisconnectedGraphError(
                f"incidence graph has {nx.number_connected_components(G)} components after escalation")
    lift = spanning_tree_lift(G, inc.vertex_orbits, inc.edge_orbits, root=central_vertex(inc, window))
    fd = FundamentalDomain(net, inc, lift, lift.S)
    if report:
        fd.report = domain_report(action, fd, window, samples, seed, probe_balls=probe_balls)
    return fd


def domain_report(action: ActionSystem, fd: FundamentalDomain, window: Window, samples: int, seed: int,
                  probe_balls: int = 10, probe_radius: float = 1.0, probe_samples: int = 200) -> DomainReport:
    space = action.space
    net = fd.net
    S = np.array(fd.S)
    phi = net.phi
    c = np.asarray(net.flags["region_center"])
    extent = float(space.distances_to(net.points[S], c).max() + 2 * phi[S].max())
    reach = _reach(action, window, extent)
    # open-region disjointness, sampled around the chosen tiles
    rng = np.random.default_rng(seed + 11)
    which = rng.integers(len(S), size=samples)
    seeds = rng.integers(2**31, size=len(S))
    Y = np.empty((samples, 2))
    for k, s_idx in enumerate(S):
        sel = np.nonzero(which == k)[0]
        if len(sel):
            p = space.from_array(net.points[s_idx])[0]
            Y[sel] = space.sample_ball(p, 2 * phi[s_idx], len(sel), int(seeds[k])).points
    inR = fd.region(Y)
    YR = Y[inR]
    idx = action.candidates(2 * extent)
    idx = idx[idx != 0]
    violations = 0
    for s in range(0, len(idx), 64):
        part = idx[s:s + 64]
        imgs = action.images(YR, part).reshape(-1, 2)
        violations += int(fd.region(imgs).sum())
    # coverage of the window by translates of the closed domain
    W = space.sample_ball(window.center, window.radius, samples, seed + 13).points
    hit, _ = covered_by_translates(action, fd.domain, W, reach)
    counts = _probe_counts(action, fd.domain, window, probe_balls, probe_radius, probe_samples, seed + 17,
                           reach + 2 * probe_radius)
    # connectedness of the union of chosen closed tiles, read off the incidence graph
    f_conn = bool(nx.is_connected(fd.incidence.graph.subgraph(fd.S)))
    density = _closed_density(space, fd, Y[fd.domain(Y)], seed + 19)
    caveats = []
    if not action.complete:
        caveats.append("heuristic enumeration: group elements beyond the search depth are not checked")
    if not net.flags.get("thin_boundary", True):
        caveats.append("tile boundaries failed the thinness audit")
    if fd.incidence.flags.get("escalated"):
        caveats.append("incidence probing was escalated after a disconnected first pass")
    lift = fd.lift.check()
    return DomainReport(samples, float(hit.mean()), int((~hit).sum()), counts, violations, int(inR.sum()),
                        f_conn, density, lift["is_tree"] and lift["bad_orbits"] == 0, caveats)


def _closed_density(space, fd, YF, seed, tries: int = 8):
    """Fraction of closed-domain samples with an open-region point within ``1e-3``."""
    if not len(YF):
        return None
    ok = fd.region(YF)
    if isinstance(space, MetricGraph):
        return float(ok.mean())
    rng = np.random.default_rng(seed)
    for _ in range(tries):
        todo = np.nonzero(~ok)[0]
        if not len(todo):
            break
        moved = jitter(space, YF[todo], np.full(len(todo), DENSITY_RADIUS), int(rng.integers(2**31)))
        ok[todo] = fd.region(moved)
    return float(ok.mean())
