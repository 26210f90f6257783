"""Group elements acting by isometries; orbit and transporter enumeration in balls."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize

from .geometry import (TOL, EuclideanPlane, GeometryError, MetricGraph, ModelMismatchError,
                       PoincareDisk, Space, Window)


class ActionError(ValueError):
    pass


class NotAnIsometryError(ActionError):
    pass


# -- maps --------------------------------------------------------------------

class PlaneMap:
    """Affine map ``p -> A p + t`` of the plane."""

    model = "euclidean"

    def __init__(self, A, t=(0.0, 0.0)):
        self.A = np.asarray(A, float).reshape(2, 2)
        self.t = np.asarray(t, float).reshape(2)

    @classmethod
    def translation(cls, dx, dy):
        return cls(np.eye(2), (dx, dy))

    @classmethod
    def identity(cls):
        return cls(np.eye(2))

    @property
    def orientation(self) -> int:
        return 1 if np.linalg.det(self.A) > 0 else -1

    def is_isometry(self) -> bool:
        return np.allclose(self.A.T @ self.A, np.eye(2), atol=TOL)

    def apply(self, P):
        return np.asarray(P, float) @ self.A.T + self.t

    def compose(self, other: "PlaneMap") -> "PlaneMap":
        return PlaneMap(self.A @ other.A, self.A @ other.t + self.t)

    def inverse(self) -> "PlaneMap":
        Ai = np.linalg.inv(self.A)
        return PlaneMap(Ai, -Ai @ self.t)

    def fixed_point(self):
        M = self.A - np.eye(2)
        sol, *_ = np.linalg.lstsq(M, -self.t, rcond=None)
        if np.linalg.norm(M @ sol + self.t) <= 1e-9:
            return sol
        return None

    def to_json(self):
        return {"matrix": self.A.tolist(), "translation": self.t.tolist()}

    @staticmethod
    def stack(maps):
        return _PlaneStack(np.stack([m.A for m in maps]), np.stack([m.t for m in maps]))


class _PlaneStack:
    def __init__(self, A, t):
        self.A, self.t = A, t

    def apply_each(self, P):
        """``(n_maps, N, 2)`` images of every point under every map."""
        P = np.asarray(P, float).reshape(-1, 2)
        return np.einsum("kij,nj->kni", self.A, P) + self.t[:, None, :]

    def inverse_apply_each(self, P):
        P = np.asarray(P, float).reshape(-1, 2)
        # inverse of an orthogonal part is its transpose; general case uses inv
        Ai = np.linalg.inv(self.A)
        return np.einsum("kij,knj->kni", Ai, P[None, :, :] - self.t[:, None, :])


class MobiusMap:
    """Disk isometry ``z -> (a w + b) / (c w + d)`` with ``w = conj(z)`` if ``conjugate``.

    The coefficient matrix is normalized to unit determinant.
    """

    model = "disk"

    def __init__(self, a, b, c, d, conjugate: bool = False):
        M = np.array([[a, b], [c, d]], dtype=complex)
        det = np.linalg.det(M)
        if abs(det) < 1e-14:
            raise ActionError("singular Mobius matrix")
        self.M = M / np.sqrt(det)
        self.conjugate = bool(conjugate)

    @classmethod
    def identity(cls):
        return cls(1, 0, 0, 1)

    @classmethod
    def hyperbolic(cls, length: float, angle: float = 0.0):
        """Translation of hyperbolic length ``length`` along the diameter at ``angle``."""
        ch, sh = math.cosh(length / 2), math.sinh(length / 2)
        e = complex(math.cos(angle), math.sin(angle))
        return cls(ch, sh * e, sh * e.conjugate(), ch)

    @classmethod
    def rotation(cls, angle: float):
        e = complex(math.cos(angle / 2), math.sin(angle / 2))
        return cls(e, 0, 0, e.conjugate())

    @property
    def orientation(self) -> int:
        return -1 if self.conjugate else 1

    def is_isometry(self) -> bool:
        (a, b), (c, d) = self.M
        scale = max(1.0, abs(a))
        for sign in (1, -1):
            if (abs(c - sign * np.conj(b)) <= 1e-9 * scale and abs(d - sign * np.conj(a)) <= 1e-9 * scale
                    and abs(abs(a) ** 2 - abs(b) ** 2 - sign) <= 1e-9 * scale ** 2):
                return True
        return False

    def key(self):
        M = self.M.ravel()
        k = int(np.argmax(np.abs(M) > 1e-9))
        M = M if (M[k].real, M[k].imag) > (0, 0) else -M
        return tuple(np.round(np.concatenate([M.real, M.imag]), 7).tolist()) + (self.conjugate,)

    def apply_complex(self, z):
        (a, b), (c, d) = self.M
        z = np.conj(z) if self.conjugate else z
        return (a * z + b) / (c * z + d)

    def apply(self, P):
        P = np.asarray(P, float)
        w = self.apply_complex(P[..., 0] + 1j * P[..., 1])
        return np.stack([w.real, w.imag], axis=-1)

    def compose(self, other: "MobiusMap") -> "MobiusMap":
        Mo = np.conj(other.M) if self.conjugate else other.M
        M = self.M @ Mo
        return MobiusMap(*M.ravel(), conjugate=self.conjugate ^ other.conjugate)

    def inverse(self) -> "MobiusMap":
        (a, b), (c, d) = self.M
        Mi = np.array([[d, -b], [-c, a]])
        if self.conjugate:
            Mi = np.conj(Mi)
        return MobiusMap(*Mi.ravel(), conjugate=self.conjugate)

    def fixed_point(self):
        if self.conjugate:
            return _numeric_fixed_point(self)
        (a, b), (c, d) = self.M
        if abs(c) < 1e-14:
            if abs(d - a) < 1e-14:
                return np.zeros(2) if abs(b) < 1e-14 else None
            roots = [b / (d - a)]
        else:
            roots = np.roots([c, d - a, -b])
        for z in roots:
            if abs(z) < 1 - 1e-9:
                return np.array([z.real, z.imag])
        return None

    def to_json(self):
        return {"matrix": [[[v.real, v.imag] for v in row] for row in self.M], "conjugate": self.conjugate}

    @staticmethod
    def stack(maps):
        return _MobiusStack(np.stack([m.M for m in maps]), np.array([m.conjugate for m in maps]))


def _numeric_fixed_point(g):
    best = None
    for start in [(0, 0), (0.5, 0), (0, 0.5), (-0.5, 0), (0, -0.5)]:
        res = minimize(lambda p: float(np.sum((g.apply(np.clip(p, -0.999, 0.999)) - p) ** 2)),
                       np.array(start, float), method="Nelder-Mead",
                       options={"xatol": 1e-13, "fatol": 1e-26, "maxiter": 4000})
        if best is None or res.fun < best.fun:
            best = res
    if best.fun < 1e-18 and np.hypot(*best.x) < 1 - 1e-9:
        return best.x
    return None


class _MobiusStack:
    def __init__(self, M, conj):
        self.M, self.conj = M, conj

    def _apply(self, M, conj, P):
        P = np.asarray(P, float).reshape(-1, 2)
        z = P[:, 0] + 1j * P[:, 1]
        zz = np.where(conj[:, None], np.conj(z)[None, :], z[None, :])
        a, b, c, d = (M[:, i, j][:, None] for i, j in ((0, 0), (0, 1), (1, 0), (1, 1)))
        w = (a * zz + b) / (c * zz + d)
        return np.stack([w.real, w.imag], axis=-1)

    def apply_each(self, P):
        return self._apply(self.M, self.conj, P)

    def inverse_apply_each(self, P):
        a, b, c, d = self.M[:, 0, 0], self.M[:, 0, 1], self.M[:, 1, 0], self.M[:, 1, 1]
        Mi = np.stack([np.stack([d, -b], -1), np.stack([-c, a], -1)], 1)
        Mi = np.where(self.conj[:, None, None], np.conj(Mi), Mi)
        return self._apply(Mi, self.conj, P)


class GraphAutomorphism:
    """Automorphism of a metric graph given by a vertex permutation."""

    model = "graph"

    def __init__(self, graph: MetricGraph, perm):
        self.graph = graph
        self.perm = tuple(int(v) for v in perm)
        n = graph.n_vertices
        if sorted(self.perm) != list(range(n)):
            raise NotAnIsometryError(f"{perm} is not a permutation of {n} vertices")
        used = set()
        edge_map, flip = [], []
        for ei, (u, v, length) in enumerate(graph.edges):
            pu, pv = self.perm[u], self.perm[v]
            match = None
            for ej in sorted(set(graph.incident[pu]) & set(graph.incident[pv])):
                if ej in used or graph.edges[ej][2] != length:
                    continue
                match = ej
                break
            if match is None:
                raise NotAnIsometryError(f"edge {ei} has no image of equal length under {perm}")
            used.add(match)
            edge_map.append(match)
            flip.append(graph.edges[match][0] != pu)
        self.edge_map = np.array(edge_map)
        self.flip = np.array(flip)

    orientation = 1

    @classmethod
    def identity(cls, graph):
        return cls(graph, range(graph.n_vertices))

    def is_isometry(self) -> bool:
        return True

    def apply(self, P):
        P = np.asarray(P, float)
        e = P[..., 0].astype(int)
        t = P[..., 1]
        e2 = self.edge_map[e]
        t2 = np.where(self.flip[e], self.graph.elen[e] - t, t)
        return np.stack([e2.astype(float), t2], axis=-1)

    def compose(self, other):
        return GraphAutomorphism(self.graph, [self.perm[other.perm[v]] for v in range(len(self.perm))])

    def inverse(self):
        inv = [0] * len(self.perm)
        for v, pv in enumerate(self.perm):
            inv[pv] = v
        return GraphAutomorphism(self.graph, inv)

    def fixed_point(self):
        for v, pv in enumerate(self.perm):
            if v == pv:
                return self.graph.to_array([self.graph.vertex_point(v)])[0]
        for ei, ej in enumerate(self.edge_map):
            if ei == ej and self.flip[ei]:
                return np.array([ei, self.graph.elen[ei] / 2])
        return None

    def to_json(self):
        return {"permutation": list(self.perm)}

    @staticmethod
    def stack(maps):
        return _ListStack(list(maps))


class _ListStack:
    def __init__(self, maps):
        self.maps = maps
        self.inverses = None

    def apply_each(self, P):
        P = np.asarray(P, float).reshape(-1, 2)
        return np.stack([m.apply(P) for m in self.maps])

    def inverse_apply_each(self, P):
        if self.inverses is None:
            self.inverses = [m.inverse() for m in self.maps]
        P = np.asarray(P, float).reshape(-1, 2)
        return np.stack([m.apply(P) for m in self.inverses])


# -- group elements ------------------------------------------------------------

def _reduce(word):
    out = []
    for letter in word:
        if out and out[-1] == -letter:
            out.pop()
        else:
            out.append(letter)
    return tuple(out)


@dataclass(frozen=True)
class GroupElement:
    """A generator word and the map it produces.

    Letters are ``+k`` for generator ``k-1`` and ``-k`` for its inverse.
    """

    word: tuple
    map: object = field(compare=False, repr=False)

    @property
    def is_identity(self) -> bool:
        return not self.word

    def __mul__(self, other: "GroupElement") -> "GroupElement":
        return GroupElement(_reduce(self.word + other.word), self.map.compose(other.map))

    def inverse(self) -> "GroupElement":
        return GroupElement(tuple(-x for x in reversed(self.word)), self.map.inverse())

    def __call__(self, p):
        return self.map.apply(p)

    def word_string(self, names=None) -> str:
        if not self.word:
            return "1"
        names = names or [chr(ord("a") + i) for i in range(26)]
        return "".join(names[abs(x) - 1] + ("" if x > 0 else "^-1") for x in self.word)


@dataclass(frozen=True)
class Exact:
    """Complete ball enumeration.

    For infinite groups the Cayley graph search only expands elements that
    move the base point at most ``R + slack``; ``slack`` defaults to twice
    the largest generator displacement.
    """

    slack: float | None = None


@dataclass(frozen=True)
class HeuristicDepth:
    depth: int = 12


@dataclass
class OrbitBall:
    elements: list
    points: np.ndarray
    complete: bool

    def __len__(self):
        return len(self.elements)


_MAP_TYPES = {"euclidean": PlaneMap, "disk": MobiusMap, "graph": GraphAutomorphism}


class ActionSystem:
    """A group given by generators acting on a space, with orbit enumeration.

    Enumeration is cached around the base point ``o``: for an isometric
    action every element with ``d(gx, x) <= R`` satisfies
    ``d(go, o) <= R + 2 d(x, o)``, so one list serves every query point.
    """

    def __init__(self, space: Space, generators, base_point, enumeration=None,
                 isometric: bool = True, names=None, check_seed: int = 0):
        self.space = space
        self.generators = list(generators)
        for g in self.generators:
            if g.model != space.model:
                raise ModelMismatchError(f"{type(g).__name__} does not act on {space.model}")
        self.base_point = space.coerce(base_point)
        self._o = space.to_array([self.base_point])
        if enumeration is None:
            enumeration = Exact() if isinstance(space, MetricGraph) else HeuristicDepth()
        self.enumeration = enumeration
        self.isometric = isometric
        self.names = names
        self.letters = []  # (letter, map)
        for k, g in enumerate(self.generators, start=1):
            self.letters.append((k, g))
            self.letters.append((-k, g.inverse()))
        if isometric:
            self._check_isometries(check_seed)
        self._identity_map = (GraphAutomorphism.identity(space) if isinstance(space, MetricGraph)
                              else _MAP_TYPES[space.model].identity())
        self._probe = self._probe_points()
        self._cache_radius = -1.0
        self._elements: list[GroupElement] = []
        self._disp = np.zeros(0)
        self._stack = None

    # -- construction helpers -----------------------------------------------
    def _check_isometries(self, seed, pairs=100):
        if isinstance(self.space, MetricGraph):
            return  # automorphisms verified exactly at construction
        sample = self.space.sample_ball(self.base_point, 2.0, 2 * pairs, seed).points
        P, Q = sample[:pairs], sample[pairs:]
        d0 = self.space.rowwise(P, Q)
        for k, g in enumerate(self.generators):
            d1 = self.space.rowwise(g.apply(P), g.apply(Q))
            dev = float(np.max(np.abs(d1 - d0)))
            if dev > 1e-9:
                raise NotAnIsometryError(f"generator {k} changes distances by up to {dev:.3g}")

    def _probe_points(self):
        if isinstance(self.space, MetricGraph):
            return self._o
        o = self._o[0]
        if isinstance(self.space, PoincareDisk):
            eps = 0.05 * (1 - np.hypot(*o))
        else:
            eps = 0.137
        return np.array([o, o + [eps, 0.0], o + [0.0, 0.61 * eps]])

    def _key(self, g_map):
        if isinstance(g_map, GraphAutomorphism):
            return g_map.perm
        if isinstance(g_map, MobiusMap):
            # probe images crowd together near the ideal boundary; use coefficients
            return g_map.key()
        img = g_map.apply(self._probe)
        return tuple(np.round(img.ravel(), 7).tolist())

    # -- enumeration ----------------------------------------------------------
    @property
    def complete(self) -> bool:
        return isinstance(self.enumeration, Exact) and self.isometric

    def max_generator_displacement(self, x=None) -> float:
        X = self._o if x is None else np.asarray(x, float).reshape(1, 2)
        if not self.letters:
            return 0.0
        return max(float(self.space.rowwise(m.apply(X), X)[0]) for _, m in self.letters)

    def _enumerate(self, R):
        identity = GroupElement((), self._identity_map)
        seen = {self._key(identity.map): identity}
        order = [identity]
        if not self.letters:
            return order
        D = self.max_generator_displacement()
        if isinstance(self.space, MetricGraph) and isinstance(self.enumeration, Exact):
            queue = deque([identity])
            while queue:
                g = queue.popleft()
                for letter, m in self.letters:
                    h = GroupElement(_reduce(g.word + (letter,)), g.map.compose(m))
                    k = self._key(h.map)
                    if k not in seen:
                        seen[k] = h
                        order.append(h)
                        queue.append(h)
            return order
        if isinstance(self.enumeration, Exact):
            slack = self.enumeration.slack if self.enumeration.slack is not None else 2 * D
            limit, depth_cap = R + slack, None
        else:
            limit, depth_cap = None, self.enumeration.depth
        return self._enumerate_levels(R, D, limit, depth_cap)

    def _enumerate_levels(self, R, D, limit, depth_cap):
        """Breadth-first word search, one word length at a time, on stacked maps."""
        model = self.space.model
        letters = [k for k, _ in self.letters]
        L_arr, L_flag = _pack([m for _, m in self.letters])
        I_arr, I_flag = _pack([self._identity_map])
        seen = {k for k in _batch_keys(model, I_arr, I_flag, self._probe)}
        words = [()]
        arrs, flags = [I_arr], [I_flag]
        frontier_words, F_arr, F_flag = [()], I_arr, I_flag
        n = 0
        while len(frontier_words) and (depth_cap is None or n < depth_cap):
            new_words, new_idx, new_j = [], [], []
            kids = []
            for j, letter in enumerate(letters):
                C_arr, C_flag = _batch_compose(model, F_arr, F_flag, L_arr[j:j + 1], L_flag[j:j + 1])
                ok = np.array([not (w and w[-1] == -letter) for w in frontier_words])
                if self.isometric:
                    img = _batch_apply(model, C_arr, C_flag, self._o)
                    dh = self.space.rowwise(img, np.broadcast_to(self._o, img.shape))
                    if limit is not None:
                        ok &= dh <= limit
                    if depth_cap is not None:
                        ok &= dh <= R + D * (depth_cap - n - 1)
                kids.append((j, np.nonzero(ok)[0], C_arr, C_flag))
            keep_arr, keep_flag = [], []
            for j, idx, C_arr, C_flag in kids:
                if not len(idx):
                    continue
                keys = _batch_keys(model, C_arr[idx], C_flag[idx], self._probe)
                for i, k in zip(idx, keys):
                    if k in seen:
                        continue
                    seen.add(k)
                    new_words.append(frontier_words[i] + (letters[j],))
                    keep_arr.append(C_arr[i])
                    keep_flag.append(C_flag[i])
            if not new_words:
                break
            F_arr, F_flag = np.stack(keep_arr), np.array(keep_flag)
            frontier_words = new_words
            words += new_words
            arrs.append(F_arr)
            flags.append(F_flag)
            n += 1
        all_arr, all_flag = np.concatenate(arrs), np.concatenate(flags)
        if self.isometric:
            img = _batch_apply(model, all_arr, all_flag, self._o)
            disp = self.space.rowwise(img, np.broadcast_to(self._o, img.shape))
            keep = disp <= R + TOL
            keep[0] = True
        else:
            keep = np.ones(len(words), bool)
        return [GroupElement(w, _unpack(model, a, f))
                for w, a, f, k in zip(words, all_arr, all_flag, keep) if k]

    def ensure_radius(self, R: float):
        """Make the cache hold every enumerable element with ``d(go, o) <= R``."""
        if R <= self._cache_radius:
            return
        R = max(R, 1.25 * self._cache_radius, 1e-3)
        elems = self._enumerate(R)
        imgs = np.concatenate([g.map.apply(self._o) for g in elems])
        disp = self.space.rowwise(imgs, np.broadcast_to(self._o, imgs.shape))
        if self.isometric and not isinstance(self.space, MetricGraph):
            keep = disp <= R + TOL
            keep[0] = True
            elems = [g for g, k in zip(elems, keep) if k]
            disp = disp[keep]
        self._elements = elems
        self._disp = disp
        self._stack = type(self._identity_map).stack([g.map for g in elems])
        self._cache_radius = R if not isinstance(self.space, MetricGraph) else math.inf

    def candidates(self, R: float):
        """Indices of cached elements moving the base point at most ``R``."""
        if not self.isometric:
            self.ensure_radius(1.0)
            return np.arange(len(self._elements))
        self.ensure_radius(R)
        return np.nonzero(self._disp <= R + TOL)[0]

    @property
    def elements(self) -> list:
        return self._elements

    def element(self, i) -> GroupElement:
        return self._elements[i]

    def images(self, P, idx=None) -> np.ndarray:
        """``(n_elements, N, 2)`` images of ``P`` under cached elements ``idx``."""
        stack = self._stack if idx is None else self._substack(idx)
        return stack.apply_each(P)

    def preimages(self, P, idx=None) -> np.ndarray:
        stack = self._stack if idx is None else self._substack(idx)
        return stack.inverse_apply_each(P)

    def _substack(self, idx):
        idx = np.asarray(idx, dtype=int)
        s = self._stack
        if isinstance(s, _PlaneStack):
            return _PlaneStack(s.A[idx], s.t[idx])
        if isinstance(s, _MobiusStack):
            return _MobiusStack(s.M[idx], s.conj[idx])
        return _ListStack([s.maps[i] for i in idx])

    def dist_to_base(self, P) -> np.ndarray:
        P = np.asarray(P, float).reshape(-1, 2)
        return self.space.rowwise(P, np.broadcast_to(self._o, P.shape))

    # -- operations -----------------------------------------------------------
    def apply(self, g: GroupElement, p):
        if g.map.model != self.space.model:
            raise ModelMismatchError("element and point live in different models")
        return self.space.from_array(g.map.apply(self.space.to_array([self.space.coerce(p)])))[0]

    def orbit_in_ball(self, x, R: float) -> OrbitBall:
        if not R > 0:
            raise ActionError(f"radius must be positive, got {R}")
        X = self.space.to_array([self.space.coerce(x)])
        idx = self.candidates(R + 2 * float(self.dist_to_base(X)[0]))
        imgs = self.images(X, idx)[:, 0, :]
        d = self.space.rowwise(imgs, np.broadcast_to(X, imgs.shape))
        keep = d <= R + TOL
        return OrbitBall([self._elements[i] for i in idx[keep]], imgs[keep], self.complete)

    def transporter(self, A: Window, B: Window) -> tuple[list, bool]:
        """Elements g with ``g A`` meeting ``B`` for balls ``A`` and ``B``."""
        ca = self.space.to_array([self.space.coerce(A.center)])
        cb = self.space.to_array([self.space.coerce(B.center)])
        if self.isometric:
            reach = A.radius + B.radius + float(self.dist_to_base(ca)[0] + self.dist_to_base(cb)[0])
            idx = self.candidates(reach)
            imgs = self.images(ca, idx)[:, 0, :]
            d = self.space.rowwise(imgs, np.broadcast_to(cb, imgs.shape))
            hit = idx[d <= A.radius + B.radius + TOL]
            return [self._elements[i] for i in hit], self.complete
        if not isinstance(self.space, EuclideanPlane):
            raise ActionError("non-isometric transporters are only supported on the plane")
        idx = self.candidates(0)
        hits = [self._elements[i] for i in idx
                if _affine_ball_hits(self._elements[i].map, ca[0], A.radius, cb[0], B.radius)]
        return hits, False

    def stabilizer(self, x, R_search: float = 1.0) -> list:
        orbit = self.orbit_in_ball(x, R_search)
        X = self.space.to_array([self.space.coerce(x)])
        d = self.space.rowwise(orbit.points, np.broadcast_to(X, orbit.points.shape))
        return [g for g, di in zip(orbit.elements, d) if di <= TOL]

    def describe(self) -> dict:
        enum = ({"mode": "exact"} if isinstance(self.enumeration, Exact)
                else {"mode": "heuristic", "depth": self.enumeration.depth})
        return {"space": self.space.describe(), "generators": [g.to_json() for g in self.generators],
                "enumeration": enum, "isometric": self.isometric}


def _pack(maps):
    m0 = maps[0]
    if isinstance(m0, PlaneMap):
        H = np.zeros((len(maps), 3, 3))
        for i, m in enumerate(maps):
            H[i, :2, :2] = m.A
            H[i, :2, 2] = m.t
            H[i, 2, 2] = 1.0
        return H, np.zeros(len(maps), bool)
    return np.stack([m.M for m in maps]), np.array([m.conjugate for m in maps])


def _unpack(model, arr, flag):
    if model == "euclidean":
        return PlaneMap(arr[:2, :2], arr[:2, 2])
    return MobiusMap(*arr.ravel(), conjugate=bool(flag))


def _batch_compose(model, X, XF, Y, YF):
    """Stacked ``x o y`` for maps in packed form (``Y`` broadcasts)."""
    if model == "euclidean":
        return X @ Y, XF
    Yc = np.where(XF[:, None, None], np.conj(Y), Y)
    M = X @ Yc
    det = np.sqrt(M[:, 0, 0] * M[:, 1, 1] - M[:, 0, 1] * M[:, 1, 0])
    return M / det[:, None, None], XF ^ YF


def _batch_apply(model, X, XF, P):
    P = np.asarray(P, float).reshape(-1, 2)
    if model == "euclidean":
        return np.einsum("kij,j->ki", X[:, :2, :2], P[0]) + X[:, :2, 2]
    return _MobiusStack(X, XF).apply_each(P[:1])[:, 0, :]


def _batch_keys(model, X, XF, probe):
    if model == "euclidean":
        img = np.einsum("kij,nj->kni", X[:, :2, :2], probe) + X[:, None, :2, 2]
        R = np.round(img.reshape(len(X), -1), 7)
        return [r.tobytes() for r in R + 0.0]
    M = X.reshape(len(X), 4)
    k = np.argmax(np.abs(M) > 1e-9, axis=1)
    lead = M[np.arange(len(M)), k]
    flip = (lead.real < 0) | ((lead.real == 0) & (lead.imag < 0))
    M = np.where(flip[:, None], -M, M)
    R = np.round(np.concatenate([M.real, M.imag], axis=1), 7) + 0.0
    return [r.tobytes() + bytes([int(f)]) for r, f in zip(R, XF)]


def ellipse_distance(A, t, ca, ra, cb) -> float:
    """Distance from ``cb`` to the image of the disk ``B(ca, ra)`` under ``u -> A u + t``.

    With ``u = ca + ra w`` this is least squares over the unit disk; outside
    the disk the minimizer is ``w(lam) = (M^T M + lam I)^-1 M^T q`` with
    ``|w(lam)| = 1``, and ``|w(lam)|`` decreases in ``lam``.
    """
    M = ra * np.asarray(A, float)
    q = np.asarray(cb, float) - (np.asarray(A, float) @ np.asarray(ca, float) + np.asarray(t, float))
    U, sv, Vt = np.linalg.svd(M)
    c = U.T @ q
    pos = sv > 1e-15 * max(sv[0], 1e-300)
    norm2 = lambda lam: float(np.sum((sv[pos] * c[pos] / (sv[pos] ** 2 + lam)) ** 2))
    if not pos.any() or norm2(0.0) <= 1.0:
        w_s = np.where(pos, c / np.where(pos, sv, 1.0), 0.0)
    else:
        hi = 1.0
        while norm2(hi) > 1.0:
            hi *= 4.0
        lam = brentq(lambda x: norm2(x) - 1.0, 0.0, hi, xtol=1e-15, rtol=1e-15)
        w_s = np.where(pos, sv * c / (sv ** 2 + lam), 0.0)
    return float(np.linalg.norm(sv * w_s - c))


def _affine_ball_hits(g: PlaneMap, ca, ra, cb, rb) -> bool:
    """Does the affine image of the disk B(ca, ra) meet B(cb, rb)?"""
    return ellipse_distance(g.A, g.t, ca, ra, cb) <= rb + TOL


def apply(g: GroupElement, p, space: Space | None = None):
    if space is None:
        return g.map.apply(np.asarray(p, float))
    return space.from_array(g.map.apply(space.to_array([space.coerce(p)])))[0]
