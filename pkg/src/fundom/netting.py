"""Construction of metrically proper nets: greedy maximal nets, perturbation, invariant nets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .action import ActionSystem
from .geometry import TOL, EuclideanPlane, MetricGraph, NearestIndex, PoincareDisk, Space, Window, _mobius_from_origin
from .quotient import NotFreeError, rho_many
from .voronoi import Net, band_fraction

COVER_SLACK = 0.05
AUDIT_BAND = 1e-4
AUDIT_LIMIT = 0.01
AUDIT_RETRIES = 5
PERTURB_SCALE = 1e-2
MIN_PHI = 1e-6


class StreamTooSmallError(RuntimeError):
    """A validation point was not covered; the greedy stream was too sparse."""

    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


class ThinBoundaryError(RuntimeError):
    """Perturbation did not bring the boundary-band occupancy under the limit."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle of the plane, used as a sampling region."""

    lo: tuple
    hi: tuple

    def sample(self, n: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        return lo + rng.random((n, 2)) * (hi - lo)

    @property
    def measure(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))


def sample_region(space: Space, region, n: int, seed: int) -> np.ndarray:
    if isinstance(region, Box):
        if not isinstance(space, EuclideanPlane):
            raise ValueError("box regions are only defined on the plane")
        return region.sample(n, seed)
    return space.sample_ball(region.center, region.radius, n, seed).points


def region_measure(space: Space, region) -> float:
    if isinstance(region, Box):
        return region.measure
    if isinstance(space, MetricGraph):
        return space.ball_measure(region.radius, region.center)
    return space.ball_measure(region.radius)


def default_stream_size(space: Space, region, per_unit: float = 1e4,
                        lo: int = 2000, hi: int = 30000) -> int:
    return int(np.clip(per_unit * region_measure(space, region), lo, hi))


def phi_values(phi, P) -> np.ndarray:
    P = np.asarray(P, float).reshape(-1, 2)
    if callable(phi):
        return np.asarray(phi(P), float).reshape(-1)
    return np.full(len(P), float(phi))


class _GrowingNeighbors:
    """Radius queries against a point set that grows during a greedy pass.

    Points are indexed in batches; a KD-tree over the flat coordinates
    covers older points, recent additions are scanned directly. On the disk
    hyperbolic distance is at least twice the Euclidean one, so a Euclidean
    query at half the radius is a superset.
    """

    def __init__(self, space: Space):
        self.space = space
        self._buf = np.zeros((1024, 2))
        self._val = np.zeros(1024)
        self.n = 0
        self.tree = None
        self.indexed = 0
        if isinstance(space, EuclideanPlane):
            self.shrink = 1.0
        elif isinstance(space, PoincareDisk):
            self.shrink = 0.5
        else:
            self.shrink = None

    @property
    def points(self):
        return self._buf[:self.n]

    @property
    def values(self):
        return self._val[:self.n]

    def add(self, P, value):
        P = np.asarray(P, float).reshape(-1, 2)
        while self.n + len(P) > len(self._buf):
            self._buf = np.vstack([self._buf, np.zeros_like(self._buf)])
            self._val = np.concatenate([self._val, np.zeros_like(self._val)])
        self._buf[self.n:self.n + len(P)] = P
        self._val[self.n:self.n + len(P)] = value
        self.n += len(P)

    def reindex(self):
        if self.shrink is not None and self.n:
            self.tree = cKDTree(self.points)
            self.indexed = self.n

    def near(self, y, r):
        """Indices of points within distance ``r`` of ``y`` (exact) and their distances."""
        if self.shrink is None or self.tree is None:
            cand = np.arange(self.n)
        else:
            old = self.tree.query_ball_point(y, self.shrink * r + TOL)
            cand = np.concatenate([np.asarray(old, int), np.arange(self.indexed, self.n)])
        if not len(cand):
            return cand, np.zeros(0)
        d = self.space.rowwise(self._buf[cand], np.broadcast_to(y, (len(cand), 2)))
        keep = d < r
        return cand[keep], d[keep]


def _greedy(space, stream, phi_stream, images=None, chunk=256):
    """Greedy admission under ``d(x, y) >= min(phi(x), phi(y)) / 2``.

    ``images(y)`` returns the points to insert when ``y`` is admitted (the
    point itself first) plus an element index per point.
    """
    nb = _GrowingNeighbors(space)
    reps, elems, admitted = [], [], []
    for s in range(0, len(stream), chunk):
        nb.reindex()
        for k in range(s, min(s + chunk, len(stream))):
            y, fy = stream[k], phi_stream[k]
            idx, d = nb.near(y, 0.5 * fy)
            if len(idx) and (d < 0.5 * np.minimum(nb._val[idx], fy)).any():
                continue
            if images is None:
                pts, el = y[None, :], np.array([0])
            else:
                pts, el = images(y)
            nb.add(pts, fy)
            reps.extend([len(admitted)] * len(pts))
            elems.extend(el.tolist())
            admitted.append(k)
    return (nb.points.copy(), nb.values.copy(), np.array(reps, int), np.array(elems, int),
            np.array(admitted, int))


def check_covering(space, points, phi, region, n, seed, slack=COVER_SLACK):
    """Largest ``d(z, E) / phi(z)`` over a fresh validation stream, with the worst ``z``."""
    Z = sample_region(space, region, n, seed)
    net = Net(space, points)
    d, _ = net.index.query(Z, 1)
    ratio = d[:, 0] / phi_values(phi, Z)
    j = int(np.argmax(ratio))
    return float(ratio[j]), Z[j], float(np.max(d[:, 0]))


def maximal_net(space: Space, window, phi, stream_size: int | None = None, seed: int = 0,
                stream=None) -> Net:
    """Greedy net: every stream point is admitted unless an admitted point is too close.

    The result is checked on an independent validation stream: each
    validation point must lie within ``phi(z) (1 + 0.05)`` of the net.
    """
    if stream_size is None:
        stream_size = default_stream_size(space, window)
    Y = sample_region(space, window, stream_size, seed) if stream is None else np.asarray(stream, float)
    fY = phi_values(phi, Y)
    if np.any(~(fY >= MIN_PHI)):
        raise ValueError(f"phi must be at least {MIN_PHI} on the window")
    pts, phis, _, _, admitted = _greedy(space, Y, fY)
    ratio, z, radius = check_covering(space, pts, phi, window, max(stream_size // 4, 500), seed + 104729)
    if ratio > 1 + COVER_SLACK:
        raise StreamTooSmallError(f"validation point {z.tolist()} is {ratio:.3f} phi from the net", z.tolist())
    net = Net(space, pts, phi=phis)
    net.gap = net.min_gap()
    net.flags["coverage_ratio"] = ratio
    net.flags["coverage_radius"] = radius
    net.flags["stream_size"] = int(len(Y))
    return net


def admission_slack(space, points, phis, k: int = 12) -> np.ndarray:
    """Per point, ``min_y d(x, y) - min(phi(x), phi(y)) / 2`` over its nearest neighbours."""
    n = len(points)
    if n < 2:
        return np.full(n, np.inf)
    d, i = NearestIndex(space, points).query(points, min(k, n))
    d, i = d[:, 1:], i[:, 1:]
    return (d - 0.5 * np.minimum(phis[:, None], phis[i])).min(axis=1)


def perturbation_radii(space, points, phis) -> np.ndarray:
    """``eps_x = 1e-2 min(phi(x), gap(x)) / 2``, decaying with rank, capped by half the slack.

    The cap keeps every pair admissible after both points move.
    """
    n = len(points)
    if n > 1:
        d, _ = NearestIndex(space, points).query(points, 2)
        gaps = d[:, 1]
    else:
        gaps = np.full(n, np.inf)
    phi = phis if phis is not None else np.full(n, np.inf)
    base = np.minimum(phi, gaps)
    base = np.where(np.isfinite(base), base, 1.0)
    eps = PERTURB_SCALE * base / 2 / np.sqrt(1.0 + np.arange(n))
    if phis is not None:
        eps = np.minimum(eps, np.maximum(admission_slack(space, points, phi), 0.0) / 2)
    return eps


def jitter(space, P, eps, seed: int) -> np.ndarray:
    """Uniform random points in the balls ``B(P[k], eps[k])``."""
    P = np.asarray(P, float).reshape(-1, 2)
    rng = np.random.default_rng(seed)
    if isinstance(space, MetricGraph):
        out = np.empty_like(P)
        seeds = rng.integers(2**31, size=len(P))
        for k, (p, e) in enumerate(zip(space.from_array(P), eps)):
            out[k] = space.sample_ball(p, e, 1, int(seeds[k])).points[0] if e > 0 else P[k]
        return out
    theta = rng.random(len(P)) * 2 * np.pi
    u = rng.random(len(P))
    if isinstance(space, PoincareDisk):
        # hyperbolic radius with the area law of the ball, then moved to P
        t = np.arccosh(1 + u * (np.cosh(eps) - 1))
        z = np.tanh(t / 2) * np.exp(1j * theta)
        w = PoincareDisk.as_complex(P)
        return PoincareDisk.from_complex(_mobius_from_origin(z, w))
    r = eps * np.sqrt(u)
    return P + np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def perturb_offsets(space, net: Net, seed: int):
    """Move each point inside a small ball; the radii shrink with the point's rank."""
    if not len(net):
        return net.points.copy(), np.zeros(0)
    eps = perturbation_radii(space, net.points, net.phi)
    return jitter(space, net.points, eps, seed), eps


def _balls_disjoint(space, points, eps) -> bool:
    if len(points) < 2:
        return True
    net = Net(space, points)
    d, i = net.nearest_two(points)
    return bool(np.all(d[:, 1] > eps + eps[i[:, 1]]))


def perturb_net(space: Space, net: Net, seed: int, audit_window=None, audit_samples: int = 20000) -> Net:
    """Randomly displace net points so tile boundaries become thin.

    After each attempt the fraction of window samples within ``1e-4`` of a
    tile boundary is measured; up to five seeds are tried. Graph backends
    may keep fat bisectors, so there a failed audit is flagged, not raised.
    """
    audit_window = audit_window or _bounding_window(space, net)
    last = None
    for attempt in range(AUDIT_RETRIES):
        s = seed + 7919 * attempt
        pts, eps = perturb_offsets(space, net, s)
        if not _balls_disjoint(space, pts, eps):
            continue
        out = Net(space, pts, phi=None if net.phi is None else net.phi.copy(),
                  orbit=net.orbit, element=net.element, reps=net.reps, flags=dict(net.flags))
        out.gap = out.min_gap()
        frac = band_fraction(space, out, audit_window, audit_samples, s)
        out.flags.update({"band_fraction": frac, "perturb_attempts": attempt + 1,
                          "max_perturbation": float(eps.max())})
        last = out
        if frac < AUDIT_LIMIT:
            out.flags["thin_boundary"] = True
            return out
    if last is not None and isinstance(space, MetricGraph):
        last.flags["thin_boundary"] = False
        return last
    raise ThinBoundaryError(f"boundary band occupies {last.flags['band_fraction'] if last else 1:.3%} "
                            f"of the window after {AUDIT_RETRIES} perturbations")


def _bounding_window(space, net):
    if isinstance(space, MetricGraph):
        c = space.from_array(net.points[0])[0]
        return Window(c, float(space.distances_to(net.points, net.points[0]).max()) + 1.0)
    c = net.points.mean(axis=0)
    center = space.from_array(c)[0]
    return Window(center, float(space.distances_to(net.points, c).max()) + 1e-3)


# -- invariant nets ---------------------------------------------------------

def _check_free(action: ActionSystem, window: Window, Y, rho_Y):
    space = action.space
    reach = window.radius + 2 * float(action.dist_to_base(space.to_array([space.coerce(window.center)]))[0])
    for i in action.candidates(2 * reach)[1:]:
        fp = action.element(i).map.fixed_point()
        if fp is None:
            continue
        if space.distance(fp, window.center) <= window.radius + TOL:
            raise NotFreeError(f"{tuple(float(v) for v in fp)} is fixed by {action.element(i).word_string(action.names)}")
    j = int(np.argmin(rho_Y))
    if rho_Y[j] <= MIN_PHI:
        raise NotFreeError(f"margin at {Y[j].tolist()} is {rho_Y[j]:.3g}; the action is not free there")


def _orbit_images(action: ActionSystem, center: np.ndarray, radius: float):
    """``images(y)``: every enumerated ``g y`` inside ``B(center, radius)``, identity first."""
    space = action.space
    c_off = float(action.dist_to_base(center)[0])

    def images(y):
        Y = y.reshape(1, 2)
        idx = action.candidates(radius + c_off + float(action.dist_to_base(Y)[0]))
        imgs = action.images(Y, idx)[:, 0, :]
        keep = space.distances_to(imgs, center[0]) <= radius
        keep[0] = True  # the point itself is always in the window
        return imgs[keep], idx[keep]

    return images


def invariant_net(action: ActionSystem, window: Window, seed: int, stream_size: int | None = None,
                  phi=None, closure_factor: float = 4.0) -> Net:
    """A net closed under the enumerated group inside the window.

    Representatives are admitted greedily with ``phi = rho / 16``; each
    admitted point brings its whole orbit inside the window enlarged by
    ``closure_factor * max(phi)``; the default 4 keeps tiles of window
    points exact.
    """
    space = action.space
    if stream_size is None:
        stream_size = default_stream_size(space, window)
    Y = sample_region(space, window, stream_size, seed)
    rho_Y = rho_many(action, Y)
    _check_free(action, window, Y, rho_Y)
    flags = {}
    if phi is None:
        if np.all(np.isfinite(rho_Y)):
            phi = lambda P: rho_many(action, P) / 16
            fY = rho_Y / 16
        else:
            phi = window.radius / 8
            fY = phi_values(phi, Y)
            flags["phi"] = "window/8 (margin is infinite)"
    else:
        fY = phi_values(phi, Y)
    if np.any(~(fY >= MIN_PHI)):
        raise ValueError(f"phi must be at least {MIN_PHI} on the window")
    closure = window.radius + closure_factor * float(fY.max())
    center = space.to_array([space.coerce(window.center)])
    images = _orbit_images(action, center, closure)
    pts, phis, reps, elems, admitted = _greedy(space, Y, fY, images)
    ratio, z, radius = check_covering(space, pts, phi, window, max(stream_size // 4, 500), seed + 104729)
    if ratio > 1 + COVER_SLACK:
        raise StreamTooSmallError(f"validation point {z.tolist()} is {ratio:.3f} phi from the net", z.tolist())
    rep_points = Y[admitted]
    E, thin = _perturb_invariant(action, pts, phis, reps, elems, rep_points, window, seed)
    net = Net(space, E, phi=phis, orbit=reps, element=elems, reps=E[_first_of_each(reps)],
              flags={**thin, **flags, "coverage_ratio": ratio, "coverage_radius": radius,
                     "closure_radius": closure, "region_center": center[0].tolist(),
                     "enumeration_complete": action.complete,
                     "stream_size": int(len(Y))})
    net.gap = net.min_gap()
    net.flags["invariance_defect"] = invariance_defect(action, net, window)
    return net


def _first_of_each(reps):
    _, first = np.unique(reps, return_index=True)
    return first


def _perturb_invariant(action, E, phis, reps, elems, rep_points, window, seed, samples=20000):
    """Jitter representatives and carry the moves along their orbits.

    Each representative's radius is the smallest radius any of its images
    would get on its own, so separation holds across the whole closed net.
    """
    space = action.space
    eps_E = perturbation_radii(space, E, phis)
    eps = np.full(len(rep_points), np.inf)
    np.minimum.at(eps, reps, eps_E)
    flags = {}
    for attempt in range(AUDIT_RETRIES):
        s = seed + 7919 * attempt
        moved = jitter(space, rep_points, eps, s)
        out = _close_orbits(action, moved, reps, elems)
        frac = band_fraction(space, Net(space, out), window, samples, s)
        flags = {"band_fraction": frac, "perturb_attempts": attempt + 1,
                 "max_perturbation": float(eps.max()) if len(eps) else 0.0}
        if frac < AUDIT_LIMIT:
            flags["thin_boundary"] = True
            return out, flags
    if isinstance(space, MetricGraph):
        flags["thin_boundary"] = False
        return out, flags
    raise ThinBoundaryError(f"boundary band occupies {flags['band_fraction']:.3%} of the window "
                            f"after {AUDIT_RETRIES} perturbations")


def _close_orbits(action, reps_pts, reps, elems):
    out = np.empty((len(reps), 2))
    for e in np.unique(elems):
        sel = elems == e
        out[sel] = action.images(reps_pts[reps[sel]], [e])[0]
    return out


def invariance_defect(action: ActionSystem, net: Net, window: Window, max_elements: int = 50) -> float:
    """Largest distance from ``g x`` to the net over net points ``x`` and ``g x`` in the window."""
    space = action.space
    c = space.to_array([space.coerce(window.center)])
    inside = space.distances_to(net.points, c[0]) <= window.radius
    P = net.points[inside]
    if not len(P):
        return 0.0
    idx = action.candidates(2 * window.radius + 2 * float(action.dist_to_base(c)[0]))[:max_elements]
    worst = 0.0
    for g in idx:
        imgs = action.images(P, [g])[0]
        keep = space.distances_to(imgs, c[0]) <= window.radius
        if keep.any():
            d, _ = net.index.query(imgs[keep], 1)
            worst = max(worst, float(d.max()))
    return worst
