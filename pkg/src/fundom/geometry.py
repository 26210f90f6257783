"""Proper geodesic metric spaces: Euclidean plane, Poincare disk, metric graphs.

Every backend works on two representations of points. Public calls take
named tuples (``PlanePoint``, ``DiskPoint``, ``GraphPoint``); the bulk
routines take ``(N, 2)`` float arrays. For graphs the array columns are
``(edge id, offset)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.spatial import cKDTree

TOL = 1e-9
DISK_EDGE = 1e-12


class GeometryError(ValueError):
    pass


class ModelMismatchError(GeometryError, TypeError):
    """A point or map from one space model was handed to another."""


class InvalidPointError(GeometryError):
    pass


class DegenerateGeodesicError(GeometryError):
    pass


class PlanePoint(NamedTuple):
    x: float
    y: float


class DiskPoint(NamedTuple):
    u: float
    v: float


class GraphPoint(NamedTuple):
    edge: int
    offset: float


@dataclass(frozen=True)
class Window:
    """Finite ball standing in for a compact set."""

    center: tuple
    radius: float

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise GeometryError(f"window radius must be finite and positive, got {self.radius}")


@dataclass
class BallSample:
    points: np.ndarray
    clipped: bool = False


class Geodesic:
    """Unit-speed geodesic segment ``c: [0, length] -> X``."""

    def __init__(self, space, start, end, length, evaluator):
        self.space = space
        self.start = start
        self.end = end
        self.length = float(length)
        self._evaluator = evaluator

    def points_at(self, ts) -> np.ndarray:
        ts = np.clip(np.asarray(ts, dtype=float), 0.0, self.length)
        return self._evaluator(ts)

    def __call__(self, t):
        return self.space.from_array(self.points_at([t]))[0]

    def __repr__(self):
        return f"Geodesic({self.start!r} -> {self.end!r}, length={self.length:.6g})"


class Space:
    model = "abstract"
    point_type: type = tuple

    # -- conversions ---------------------------------------------------
    def coerce(self, p):
        raise NotImplementedError

    def to_array(self, points) -> np.ndarray:
        if isinstance(points, np.ndarray):
            arr = np.asarray(points, dtype=float)
            return arr.reshape(-1, 2)
        if isinstance(points, tuple) and len(points) == 2 and not isinstance(points[0], (tuple, list)):
            points = [points]
        return np.array([tuple(self.coerce(p)) for p in points], dtype=float).reshape(-1, 2)

    def from_array(self, arr) -> list:
        arr = np.asarray(arr, dtype=float).reshape(-1, 2)
        return [self.point_type(*row) for row in arr.tolist()]

    # -- metric --------------------------------------------------------
    def pairwise(self, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def rowwise(self, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
        """Distances between matching rows of ``P`` and ``Q``."""
        raise NotImplementedError

    def distance(self, p, q) -> float:
        P = self.to_array([self.coerce(p)])
        Q = self.to_array([self.coerce(q)])
        return float(self.rowwise(P, Q)[0])

    def distances_to(self, P, q) -> np.ndarray:
        """Distances from every row of ``P`` to the single point ``q``."""
        P = np.asarray(P, dtype=float).reshape(-1, 2)
        if isinstance(q, np.ndarray):
            q = q.reshape(1, 2)
        else:
            q = self.to_array([self.coerce(q)])
        return self.rowwise(P, np.broadcast_to(q, P.shape))

    def equal(self, p, q) -> bool:
        return self.distance(p, q) <= TOL

    def geodesic(self, p, q) -> Geodesic:
        raise NotImplementedError

    def sample_ball(self, center, radius: float, n: int, seed: int) -> BallSample:
        raise NotImplementedError

    def ball_measure(self, radius: float) -> float:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"model": self.model}

    def _check_ball_args(self, radius, n):
        if not radius > 0:
            raise GeometryError(f"radius must be positive, got {radius}")
        if n < 1:
            raise GeometryError(f"sample count must be >= 1, got {n}")


def _two_floats(p, expected, space):
    if hasattr(p, "_fields") and type(p) is not expected:
        raise ModelMismatchError(f"{type(p).__name__} is not a point of {space.model}")
    try:
        a, b = (float(c) for c in p)
    except (TypeError, ValueError) as exc:
        raise InvalidPointError(f"cannot read {p!r} as a point of {space.model}") from exc
    if not (math.isfinite(a) and math.isfinite(b)):
        raise InvalidPointError(f"non-finite coordinates {p!r}")
    return a, b


class EuclideanPlane(Space):
    model = "euclidean"
    point_type = PlanePoint

    def coerce(self, p) -> PlanePoint:
        return PlanePoint(*_two_floats(p, PlanePoint, self))

    def pairwise(self, P, Q):
        P = np.asarray(P, float).reshape(-1, 2)
        Q = np.asarray(Q, float).reshape(-1, 2)
        return np.sqrt(((P[:, None, :] - Q[None, :, :]) ** 2).sum(-1))

    def rowwise(self, P, Q):
        d = np.asarray(P, float) - np.asarray(Q, float)
        return np.hypot(d[..., 0], d[..., 1])

    def geodesic(self, p, q):
        p, q = self.coerce(p), self.coerce(q)
        length = math.hypot(q.x - p.x, q.y - p.y)
        if length <= TOL:
            raise DegenerateGeodesicError("geodesic endpoints coincide")
        a = np.array(p)
        u = (np.array(q) - a) / length
        return Geodesic(self, p, q, length, lambda ts: a + ts[:, None] * u)

    def sample_ball(self, center, radius, n, seed):
        self._check_ball_args(radius, n)
        c = np.array(self.coerce(center))
        rng = np.random.default_rng(seed)
        r = radius * np.sqrt(rng.random(n))
        th = rng.random(n) * 2 * np.pi
        pts = c + np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
        return BallSample(pts)

    def ball_measure(self, radius):
        return math.pi * radius * radius


def _mobius_to_origin(z, w):
    """Disk isometry sending ``w`` to 0, applied to ``z``."""
    return (z - w) / (1 - np.conj(w) * z)


def _mobius_from_origin(z, w):
    return (z + w) / (1 + np.conj(w) * z)


class PoincareDisk(Space):
    """Unit disk with curvature -1 metric ``2|dz| / (1 - |z|^2)``."""

    model = "disk"
    point_type = DiskPoint

    def coerce(self, p) -> DiskPoint:
        u, v = _two_floats(p, DiskPoint, self)
        if u * u + v * v >= (1 - DISK_EDGE) ** 2:
            raise InvalidPointError(f"{(u, v)} is not inside the unit disk")
        return DiskPoint(u, v)

    @staticmethod
    def as_complex(P) -> np.ndarray:
        P = np.asarray(P, float)
        return P[..., 0] + 1j * P[..., 1]

    @staticmethod
    def from_complex(z) -> np.ndarray:
        z = np.asarray(z, complex)
        return np.stack([z.real, z.imag], axis=-1)

    @staticmethod
    def _dist(z, w):
        num = np.abs(z - w)
        den = np.sqrt(np.maximum((1 - np.abs(z) ** 2) * (1 - np.abs(w) ** 2), 1e-300))
        return 2 * np.arcsinh(num / den)

    def pairwise(self, P, Q):
        z = self.as_complex(np.asarray(P, float).reshape(-1, 2))
        w = self.as_complex(np.asarray(Q, float).reshape(-1, 2))
        return self._dist(z[:, None], w[None, :])

    def rowwise(self, P, Q):
        return self._dist(self.as_complex(P), self.as_complex(Q))

    def geodesic(self, p, q):
        p, q = self.coerce(p), self.coerce(q)
        zp, zq = complex(*p), complex(*q)
        length = float(self._dist(zp, zq))
        if length <= TOL:
            raise DegenerateGeodesicError("geodesic endpoints coincide")
        w = _mobius_to_origin(zq, zp)
        direction = w / abs(w)

        def evaluate(ts):
            return self.from_complex(_mobius_from_origin(np.tanh(ts / 2) * direction, zp))

        return Geodesic(self, p, q, length, evaluate)

    def sample_ball(self, center, radius, n, seed):
        self._check_ball_args(radius, n)
        c = complex(*self.coerce(center))
        rng = np.random.default_rng(seed)
        # hyperbolic area inside radius r is 2*pi*(cosh r - 1)
        r = np.arccosh(1 + rng.random(n) * (math.cosh(radius) - 1))
        th = rng.random(n) * 2 * np.pi
        z = np.tanh(r / 2) * np.exp(1j * th)
        return BallSample(self.from_complex(_mobius_from_origin(z, c)))

    def ball_measure(self, radius):
        return 2 * math.pi * (math.cosh(radius) - 1)


class MetricGraph(Space):
    """Finite connected graph with positive edge lengths and the path metric.

    Points are ``GraphPoint(edge, offset)`` with ``0 <= offset <= length``;
    offset 0 is the edge's first vertex. Points sitting on a shared vertex
    are identified (their distance is zero).
    """

    model = "graph"
    point_type = GraphPoint

    def __init__(self, n_vertices: int, edges: Sequence[tuple], vertex_names: Sequence[str] | None = None):
        self.n_vertices = int(n_vertices)
        self.edges = [(int(u), int(v), float(length)) for u, v, length in edges]
        if not self.edges:
            raise GeometryError("metric graph needs at least one edge")
        for u, v, length in self.edges:
            if not (0 <= u < self.n_vertices and 0 <= v < self.n_vertices):
                raise GeometryError(f"edge ({u}, {v}) references a missing vertex")
            if u == v:
                raise GeometryError("loops are not supported")
            if not length > 0:
                raise GeometryError(f"edge lengths must be positive, got {length}")
        self.vertex_names = list(vertex_names) if vertex_names else [str(i) for i in range(self.n_vertices)]
        self.eu = np.array([e[0] for e in self.edges])
        self.ev = np.array([e[1] for e in self.edges])
        self.elen = np.array([e[2] for e in self.edges])
        # parallel edges: keep the shortest for the vertex metric
        w = {}
        for (u, v, length) in self.edges:
            key = (min(u, v), max(u, v))
            w[key] = min(w.get(key, math.inf), length)
        r, c, d = [], [], []
        for (u, v), length in w.items():
            r += [u, v]
            c += [v, u]
            d += [length, length]
        adj = csr_matrix((d, (r, c)), shape=(self.n_vertices, self.n_vertices))
        ncomp, _ = connected_components(adj, directed=False)
        if ncomp != 1:
            raise GeometryError("metric graph must be connected")
        self.vdist = dijkstra(adj, directed=False)
        self.degree = np.bincount(np.concatenate([self.eu, self.ev]), minlength=self.n_vertices)
        self.incident = [[] for _ in range(self.n_vertices)]
        for i, (u, v, _) in enumerate(self.edges):
            self.incident[u].append(i)
            self.incident[v].append(i)

    def describe(self):
        return {"model": self.model, "vertices": list(self.vertex_names),
                "edges": [[u, v, length] for u, v, length in self.edges]}

    def coerce(self, p) -> GraphPoint:
        if isinstance(p, (PlanePoint, DiskPoint)):
            raise ModelMismatchError(f"{type(p).__name__} is not a point of a metric graph")
        try:
            e, t = p
            e_int = int(e)
            t = float(t)
        except (TypeError, ValueError) as exc:
            raise InvalidPointError(f"cannot read {p!r} as (edge, offset)") from exc
        if e_int != e or not 0 <= e_int < len(self.edges):
            raise InvalidPointError(f"no edge {e!r}")
        length = self.edges[e_int][2]
        if not (-TOL <= t <= length + TOL):
            raise InvalidPointError(f"offset {t} outside [0, {length}] on edge {e_int}")
        return GraphPoint(e_int, min(max(t, 0.0), length))

    def from_array(self, arr) -> list:
        arr = np.asarray(arr, dtype=float).reshape(-1, 2)
        return [GraphPoint(int(round(e)), t) for e, t in arr.tolist()]

    def vertex_point(self, v: int) -> GraphPoint:
        e = min(self.incident[v])
        return GraphPoint(e, 0.0 if self.edges[e][0] == v else self.edges[e][2])

    def canonical(self, p) -> GraphPoint:
        """Representative used for serialization: vertices go to their lowest incident edge."""
        p = self.coerce(p)
        u, v, length = self.edges[p.edge]
        if p.offset <= TOL:
            return self.vertex_point(u)
        if p.offset >= length - TOL:
            return self.vertex_point(v)
        return p

    def _ends(self, P):
        e = P[..., 0].astype(int)
        t = P[..., 1]
        return e, self.eu[e], self.ev[e], t, self.elen[e] - t

    def rowwise(self, P, Q):
        P = np.asarray(P, float)
        Q = np.asarray(Q, float)
        e, pu, pv, pa, pb = self._ends(P)
        f, qu, qv, qa, qb = self._ends(Q)
        D = self.vdist
        best = np.minimum.reduce([
            pa + D[pu, qu] + qa, pa + D[pu, qv] + qb,
            pb + D[pv, qu] + qa, pb + D[pv, qv] + qb,
        ])
        same = e == f
        return np.where(same, np.minimum(best, np.abs(pa - qa)), best)

    def pairwise(self, P, Q):
        P = np.asarray(P, float).reshape(-1, 2)
        Q = np.asarray(Q, float).reshape(-1, 2)
        return self.rowwise(P[:, None, :], Q[None, :, :])

    def distances_from_point_to_vertices(self, p) -> np.ndarray:
        p = self.coerce(p)
        u, v, length = self.edges[p.edge]
        return np.minimum(p.offset + self.vdist[u], length - p.offset + self.vdist[v])

    def _vertex_path(self, s: int, t: int) -> list[tuple[int, int]]:
        """Shortest vertex path as (edge id, next vertex) steps, lowest edge id on ties."""
        D = self.vdist
        steps = []
        cur = t
        while cur != s:
            candidates = []
            for ei in self.incident[cur]:
                u, v, length = self.edges[ei]
                other = v if u == cur else u
                if abs(D[s, other] + length - D[s, cur]) <= TOL * max(1.0, D[s, cur]):
                    candidates.append(ei)
            ei = min(candidates)
            u, v, _ = self.edges[ei]
            other = v if u == cur else u
            steps.append((ei, cur))
            cur = other
        return steps[::-1]

    def geodesic(self, p, q):
        p, q = self.coerce(p), self.coerce(q)
        length = self.distance(p, q)
        if length <= TOL:
            raise DegenerateGeodesicError("geodesic endpoints coincide")
        segments = []  # (edge, offset_from, offset_to)
        if p.edge == q.edge and abs(p.offset - q.offset) <= length + TOL:
            segments.append((p.edge, p.offset, q.offset))
        else:
            pu, pv, plen = self.edges[p.edge]
            qu, qv, qlen = self.edges[q.edge]
            options = [
                (p.offset, pu, 0.0, qu, q.offset),
                (p.offset, pu, 0.0, qv, qlen - q.offset),
                (plen - p.offset, pv, plen, qu, q.offset),
                (plen - p.offset, pv, plen, qv, qlen - q.offset),
            ]
            best = None
            for i, (cp, a, a_off, b, cq) in enumerate(options):
                total = cp + self.vdist[a, b] + cq
                if best is None or total < best[0] - TOL:
                    best = (total, i)
            cp, a, a_off, b, cq = options[best[1]]
            segments.append((p.edge, p.offset, a_off))
            cur = a
            for ei, nxt in self._vertex_path(a, b):
                u, v, elen = self.edges[ei]
                segments.append((ei, 0.0, elen) if u == cur else (ei, elen, 0.0))
                cur = nxt
            b_off = 0.0 if qu == b else qlen
            segments.append((q.edge, b_off, q.offset))
        segments = [s for s in segments if abs(s[2] - s[1]) > 0]
        seg_len = np.array([abs(b - a) for _, a, b in segments])
        cum = np.concatenate([[0.0], np.cumsum(seg_len)])

        def evaluate(ts):
            idx = np.clip(np.searchsorted(cum, ts, side="right") - 1, 0, len(segments) - 1)
            out = np.empty((len(ts), 2))
            for k, (i, t) in enumerate(zip(idx, ts)):
                ei, a, b = segments[i]
                s = min(t - cum[i], seg_len[i])
                out[k] = (ei, a + s if b >= a else a - s)
            return out

        return Geodesic(self, p, q, length, evaluate)

    def _ball_intervals(self, center, radius):
        c = self.coerce(center)
        dv = self.distances_from_point_to_vertices(c)
        intervals = []
        for ei, (u, v, length) in enumerate(self.edges):
            parts = []
            if radius - dv[u] > 0:
                parts.append((0.0, min(length, radius - dv[u])))
            if radius - dv[v] > 0:
                parts.append((max(0.0, length - (radius - dv[v])), length))
            if ei == c.edge:
                parts.append((max(0.0, c.offset - radius), min(length, c.offset + radius)))
            parts.sort()
            merged = []
            for a, b in parts:
                if merged and a <= merged[-1][1]:
                    merged[-1] = (merged[-1][0], max(merged[-1][1], b))
                else:
                    merged.append((a, b))
            intervals += [(ei, a, b) for a, b in merged if b > a]
        leaves = [v for v in range(self.n_vertices) if self.degree[v] == 1]
        clipped = any(dv[v] < radius for v in leaves)
        return intervals, clipped

    def sample_ball(self, center, radius, n, seed):
        self._check_ball_args(radius, n)
        intervals, clipped = self._ball_intervals(center, radius)
        lens = np.array([b - a for _, a, b in intervals])
        cum = np.concatenate([[0.0], np.cumsum(lens)])
        rng = np.random.default_rng(seed)
        s = rng.random(n) * cum[-1]
        idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(intervals) - 1)
        out = np.empty((n, 2))
        for k, (i, si) in enumerate(zip(idx, s)):
            ei, a, b = intervals[i]
            out[k] = (ei, min(a + (si - cum[i]), b))
        return BallSample(out, clipped)

    def ball_measure(self, radius, center=None):
        if center is None:
            return float(self.elen.sum())
        intervals, _ = self._ball_intervals(center, radius)
        return float(sum(b - a for _, a, b in intervals))


def cross_graph(ray_length: float = 10.0) -> MetricGraph:
    """Union of the two coordinate axes (truncated) with the l1 path metric.

    Vertex 0 is the origin; vertices 1..4 are the ray ends East, North,
    West, South. Edge ``i`` runs from the origin along ray ``i``.
    """
    names = ["O", "E", "N", "W", "S"]
    edges = [(0, k, ray_length) for k in range(1, 5)]
    return MetricGraph(5, edges, names)


EAST, NORTH, WEST, SOUTH = 0, 1, 2, 3


# -- module-level conveniences -------------------------------------------

def distance(space: Space, p, q) -> float:
    return space.distance(p, q)


def geodesic(space: Space, p, q) -> Geodesic:
    return space.geodesic(p, q)


def sample_ball(space: Space, center, radius: float, n: int, seed: int) -> BallSample:
    return space.sample_ball(center, radius, n, seed)


class NearestIndex:
    """k-nearest-neighbour queries against a fixed point set.

    On the disk the hyperbolic metric is at least twice the Euclidean one,
    so a Euclidean KD-tree queried at half the hyperbolic radius returns a
    superset of the true neighbours, which are then ranked exactly.
    """

    def __init__(self, space: Space, points: np.ndarray, chunk: int = 2048):
        self.space = space
        self.points = np.asarray(points, float).reshape(-1, 2)
        self.chunk = chunk
        flat = isinstance(space, (EuclideanPlane, PoincareDisk))
        self._tree = cKDTree(self.points) if flat and len(self.points) else None
        self._scale = 1.0 if isinstance(space, EuclideanPlane) else 0.5

    def __len__(self):
        return len(self.points)

    def query(self, Y, k: int = 1):
        """Return ``(dist, idx)`` of shape ``(len(Y), k)``, sorted by distance."""
        Y = np.asarray(Y, float).reshape(-1, 2)
        n = len(self.points)
        kk = min(k, n)
        if self._tree is not None and self._scale == 1.0:
            d, i = self._tree.query(Y, k=kk)
            d = np.asarray(d).reshape(len(Y), kk)
            i = np.asarray(i).reshape(len(Y), kk)
        elif self._tree is not None:
            d, i = self._query_disk(Y, kk)
        else:
            d = np.empty((len(Y), kk))
            i = np.empty((len(Y), kk), dtype=int)
            for s in range(0, len(Y), self.chunk):
                M = self.space.pairwise(Y[s:s + self.chunk], self.points)
                if kk < n:
                    part = np.argpartition(M, kk - 1, axis=1)[:, :kk]
                else:
                    part = np.tile(np.arange(n), (len(M), 1))
                pd = np.take_along_axis(M, part, 1)
                order = np.argsort(pd, axis=1, kind="stable")
                d[s:s + self.chunk] = np.take_along_axis(pd, order, 1)
                i[s:s + self.chunk] = np.take_along_axis(part, order, 1)
        if kk < k:
            d = np.hstack([d, np.full((len(Y), k - kk), np.inf)])
            i = np.hstack([i, np.full((len(Y), k - kk), -1)])
        return d, i

    def _query_disk(self, Y, kk):
        d = np.empty((len(Y), kk))
        i = np.empty((len(Y), kk), dtype=int)
        for s in range(0, len(Y), self.chunk):
            d[s:s + self.chunk], i[s:s + self.chunk] = self._query_disk_chunk(Y[s:s + self.chunk], kk)
        return d, i

    def _query_disk_chunk(self, Y, kk):
        # the kk Euclidean nearest bound the hyperbolic kk-th distance from above
        _, seed = self._tree.query(Y, k=kk)
        seed = np.asarray(seed).reshape(len(Y), kk)
        bound = self.space.rowwise(np.repeat(Y, kk, axis=0), self.points[seed.ravel()]).reshape(len(Y), kk).max(axis=1)
        cand = self._tree.query_ball_point(Y, self._scale * bound + TOL)
        width = max(len(c) for c in cand)
        if width * 4 > len(self.points):
            M = self.space.pairwise(Y, self.points)
            part = np.argpartition(M, kk - 1, axis=1)[:, :kk] if kk < len(self.points) else \
                np.tile(np.arange(len(self.points)), (len(Y), 1))
            pd = np.take_along_axis(M, part, 1)
            order = np.argsort(pd, axis=1, kind="stable")
            return np.take_along_axis(pd, order, 1), np.take_along_axis(part, order, 1)
        C = np.full((len(Y), width), -1, dtype=int)
        for r, c in enumerate(cand):
            C[r, :len(c)] = c
        valid = C >= 0
        D = np.full(C.shape, np.inf)
        rows = np.nonzero(valid)[0]
        D[valid] = self.space.rowwise(Y[rows], self.points[C[valid]])
        order = np.argsort(D, axis=1, kind="stable")[:, :kk]
        return np.take_along_axis(D, order, 1), np.take_along_axis(C, order, 1)

    def within(self, y, r: float) -> np.ndarray:
        y = np.asarray(y, float).reshape(1, 2)
        if self._tree is not None:
            cand = np.array(sorted(self._tree.query_ball_point(y[0], self._scale * r + TOL)), dtype=int)
            if self._scale == 1.0 or not len(cand):
                return cand
            d = self.space.rowwise(self.points[cand], np.broadcast_to(y, (len(cand), 2)))
            return cand[d <= r + TOL]
        d = self.space.pairwise(y, self.points)[0]
        return np.nonzero(d <= r + TOL)[0]
