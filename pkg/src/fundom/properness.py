"""Numerical tests of proper discontinuity: transporter growth, dynamical relations, slices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .action import ActionError, ActionSystem, GroupElement
from .geometry import TOL, EuclideanPlane, Window

BOUNDED = "BoundedObserved"
GROWTH = "GrowthObserved"
CONSECUTIVE_LEVELS = 5


class NotWanderingError(ActionError):
    """Nontrivial elements move the point arbitrarily little."""


@dataclass
class TransporterGrowth:
    table: list  # (radius, count)
    verdict: str
    caveats: list = field(default_factory=list)

    def to_json(self):
        return {"table": [{"radius": r, "count": c} for r, c in self.table],
                "verdict": self.verdict, "caveats": list(self.caveats)}


@dataclass
class DynamicalWitness:
    """Elements ``g_n`` and points ``x_n`` with ``x_n -> x`` and ``g_n x_n -> y``."""

    x: tuple
    y: tuple
    steps: list  # (level, GroupElement, point x_n, image g_n x_n, residual)
    residual: float

    def to_json(self, names=None):
        return {"x": list(self.x), "y": list(self.y), "residual": self.residual,
                "steps": [{"level": n, "element": g.word_string(names), "x_n": list(p),
                           "image": list(q), "residual": r} for n, g, p, q, r in self.steps]}


def _nested(space, windows):
    for a, b in zip(windows, windows[1:]):
        if not b.radius > a.radius:
            return False
        if space.distance(a.center, b.center) + a.radius > b.radius + TOL:
            return False
    return True


def _converging(radii) -> bool:
    """Radius steps at least halve, so the windows stay inside a fixed bounded set."""
    a, b, c = radii
    return c - b <= 0.5 * (b - a) + TOL


def check_transporter_finiteness(action: ActionSystem, windows) -> TransporterGrowth:
    """Count ``(K|K)_G`` over nested windows ``K``.

    Counts always rise on an expanding schedule, so growth is reported only
    when the last three counts strictly increase while the radius steps at
    least halve: the windows then converge to a bounded set and the counts
    still climb.
    """
    windows = list(windows)
    if not windows:
        raise ValueError("at least one window is required")
    if not _nested(action.space, windows):
        raise ValueError("windows must be nested with strictly increasing radii")
    table = []
    for w in windows:
        hits, _ = action.transporter(w, w)
        table.append((float(w.radius), len(hits)))
    counts = [c for _, c in table]
    radii = [r for r, _ in table]
    growing = (len(counts) >= 3 and counts[-3] < counts[-2] < counts[-1]
               and _converging(radii[-3:]))
    caveats = []
    if not action.complete:
        caveats.append("enumeration is heuristic: counts are lower bounds on the transporter sets")
    if not action.isometric:
        caveats.append("action is not isometric: ball images tested by numerical optimization")
    return TransporterGrowth(table, GROWTH if growing else BOUNDED, caveats)


def _pair_residual(space, g_map, x, y, x_prime):
    P = np.asarray(x_prime, float).reshape(1, 2)
    a = float(space.rowwise(P, x)[0])
    b = float(space.rowwise(g_map.apply(P), y)[0])
    return max(a, b)


def _residual_lower_bound(action, g: GroupElement, X, Y) -> float:
    # |gx - y| <= |g x' - y| + |A| |x - x'| for an affine g
    gx = g.map.apply(X)
    norm = np.linalg.norm(g.map.A, 2)
    return float(np.linalg.norm(gx - Y)) / (1.0 + norm)


def _best_source(action, g: GroupElement, X, Y):
    """A point ``x'`` minimizing ``max(d(x', x), d(g x', y))`` and that value."""
    space = action.space
    if action.isometric:
        # the midpoint of a geodesic from x to g^-1 y is optimal
        q = g.map.inverse().apply(Y)
        px, pq = space.from_array(np.vstack([X, q]))
        if space.distance(px, pq) <= TOL:
            return X[0].copy(), 0.0
        c = space.geodesic(px, pq)
        xp = c.points_at([c.length / 2])[0]
        return xp, float(c.length / 2)
    if not isinstance(space, EuclideanPlane):
        raise ActionError("non-isometric actions are only supported on the plane")
    f = lambda p: _pair_residual(space, g.map, X, Y, p)
    starts = [X[0], g.map.inverse().apply(Y)[0]]
    starts.append((starts[0] + starts[1]) / 2)
    best_p, best_v = None, np.inf
    for s in starts:
        r = minimize(f, s, method="Nelder-Mead",
                     options={"xatol": 1e-15, "fatol": 1e-15, "maxiter": 4000, "initial_simplex":
                              s + np.array([[0, 0], [1, 0], [0, 1]]) * max(f(s), 1e-12) * 0.5})
        for p in (r.x, s):
            v = f(p)
            if v < best_v:
                best_p, best_v = np.asarray(p, float), v
    return best_p, best_v


def find_dynamical_relation(action: ActionSystem, x, y, depth: int, scale: float = 1.0):
    """Search for ``g_n`` and ``x_n`` realizing a dynamical relation from ``x`` to ``y``.

    At level ``n`` a fresh element must move some point within ``2^(2-n) scale``
    of ``x`` to within the same distance of ``y``. A witness is declared only
    when the last ``CONSECUTIVE_LEVELS`` levels up to ``depth`` all succeed.
    Returning ``None`` means no witness was found at this depth; it does not
    prove properness.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    space = action.space
    x, y = space.coerce(x), space.coerce(y)
    X, Y = space.to_array([x]), space.to_array([y])
    used = set()
    run = []
    reach = float(action.dist_to_base(X)[0] + action.dist_to_base(Y)[0])
    for n in range(1, depth + 1):
        tol = 2.0 ** (2 - n) * scale
        idx = action.candidates(reach + 2 * tol)
        if action.isometric:
            imgs = action.images(X, idx)[:, 0, :]
            close = space.rowwise(imgs, np.broadcast_to(Y, imgs.shape)) <= 2 * tol + TOL
            idx = idx[close]
        order = sorted((i for i in idx.tolist() if i not in used),
                       key=lambda i: len(action.element(i).word))
        chosen = None
        for i in order:
            if chosen is not None and len(action.element(i).word) > len(action.element(chosen[0]).word):
                break
            if not action.isometric and _residual_lower_bound(action, action.element(i), X, Y) > tol:
                continue
            xp, r = _best_source(action, action.element(i), X, Y)
            if r <= tol and (chosen is None or r < chosen[2]):
                chosen = (i, xp, r)
        if chosen is None:
            run = []
            continue
        i, xp, r = chosen
        used.add(i)
        img = action.element(i).map.apply(xp.reshape(1, 2))[0]
        run.append((n, action.element(i), tuple(xp.tolist()), tuple(img.tolist()), r))
    if len(run) < CONSECUTIVE_LEVELS or run[-1][0] != depth:
        return None
    return DynamicalWitness(tuple(x), tuple(y), run, max(s[4] for s in run[-CONSECUTIVE_LEVELS:]))


def verify_witness(action: ActionSystem, witness: DynamicalWitness, scale: float = 1.0) -> bool:
    """Re-evaluate every step of a witness from scratch."""
    space = action.space
    words = [g.word for _, g, _, _, _ in witness.steps]
    if len(set(words)) != len(words):
        return False
    for n, g, p, _, _ in witness.steps:
        tol = 2.0 ** (2 - n) * scale
        gp = action.apply(g, space.coerce(p))
        if space.distance(p, witness.x) > tol + TOL or space.distance(gp, witness.y) > tol + TOL:
            return False
    return True


def free_margin(action: ActionSystem, x, max_doublings: int = 12) -> float:
    """``min d(gx, x)`` over enumerated elements that move ``x``."""
    space = action.space
    x = space.coerce(x)
    if not action.letters:
        return np.inf
    X = space.to_array([x])
    R = max(action.max_generator_displacement(X), 1e-3)
    for _ in range(max_doublings + 1):
        orbit = action.orbit_in_ball(x, R)
        d = space.rowwise(orbit.points, np.broadcast_to(X, orbit.points.shape))
        moved = d[d > TOL]
        if len(moved):
            return float(moved.min())
        R *= 2
    raise NotWanderingError(f"no element moves {tuple(x)} within distance {R / 2:.3g}")


def wandering_radius(action: ActionSystem, x) -> float:
    """Radius ``r`` with ``(B|B)_G`` inside the stabilizer of ``x`` for ``B = B(x, r)``."""
    x = action.space.coerce(x)
    margin = free_margin(action, x)
    if margin <= TOL:
        raise NotWanderingError(f"elements move {tuple(x)} by only {margin:.3g}")
    r = margin / 2 if np.isfinite(margin) else 1.0
    # open ball: translates at distance exactly 2r only touch its boundary
    ball = Window(x, r - 2 * TOL)
    hits, _ = action.transporter(ball, ball)
    stab = {g.word for g in action.stabilizer(x, R_search=max(r, 1e-3))}
    extra = [g for g in hits if g.word not in stab]
    if extra:
        raise NotWanderingError(f"{extra[0].word_string(action.names)} moves B({tuple(x)}, {r:.3g}) onto itself")
    return r
