"""Voronoi tessellations of metrically proper nets and verifiers for tile properties."""

from __future__ import annotations

import base64
import colorsys
import io
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from PIL import Image
from scipy.optimize import brentq

from .geometry import (TOL, DegenerateGeodesicError, EuclideanPlane, MetricGraph, NearestIndex, PoincareDisk,
                       Space, Window, _mobius_from_origin, _mobius_to_origin)

INTERIOR = "Interior"
BAND = "BoundaryBand"
OUTSIDE = "Outside"


class EmptyNetError(ValueError):
    pass


@dataclass
class TileMembership:
    verdict: str
    margin: float

    @property
    def in_closed_tile(self) -> bool:
        return self.verdict != OUTSIDE

    @classmethod
    def from_margin(cls, margin: float, band: float = TOL) -> "TileMembership":
        if margin > band:
            return cls(INTERIOR, margin)
        if margin < -band:
            return cls(OUTSIDE, margin)
        return cls(BAND, margin)


def verdicts(margins: np.ndarray, band: float = TOL) -> np.ndarray:
    out = np.full(margins.shape, BAND, dtype=object)
    out[margins > band] = INTERIOR
    out[margins < -band] = OUTSIDE
    return out


@dataclass
class Net:
    """A discrete point set with its observed separation.

    ``orbit`` and ``element`` are filled for nets closed under a group
    action: point ``k`` is ``element[k] . reps[orbit[k]]``.
    """

    space: Space
    points: np.ndarray
    gap: float = np.inf
    proper: bool = True
    phi: np.ndarray | None = None
    orbit: np.ndarray | None = None
    element: np.ndarray | None = None
    reps: np.ndarray | None = None
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, float).reshape(-1, 2)
        self._index = None

    @classmethod
    def from_points(cls, space: Space, points, **kw) -> "Net":
        if not isinstance(points, np.ndarray):
            points = space.to_array(list(points))
        net = cls(space, points, **kw)
        net.gap = net.min_gap()
        if net.gap <= TOL:
            raise ValueError("net contains duplicate points")
        return net

    def __len__(self):
        return len(self.points)

    @property
    def index(self) -> NearestIndex:
        if self._index is None:
            if not len(self.points):
                raise EmptyNetError("net has no points")
            self._index = NearestIndex(self.space, self.points)
        return self._index

    def min_gap(self) -> float:
        if len(self.points) < 2:
            return np.inf
        d, _ = self.index.query(self.points, 2)
        return float(d[:, 1].min())

    def nearest_two(self, Y):
        """Distances and indices of the two closest net points to each row of ``Y``."""
        return self.index.query(np.asarray(Y, float).reshape(-1, 2), 2)

    def margins(self, centers, Y) -> np.ndarray:
        """``min_{x' != x} d(y, x') - d(y, x)`` for center ``centers[i]`` at ``Y[i]``."""
        Y = np.asarray(Y, float).reshape(-1, 2)
        centers = np.broadcast_to(np.asarray(centers, int), (len(Y),))
        d, i = self.nearest_two(Y)
        dx = self.space.rowwise(Y, self.points[centers])
        own_nearest = i[:, 0] == centers
        return np.where(own_nearest, d[:, 1] - dx, d[:, 0] - dx)

    def to_json(self) -> dict:
        space = self.space
        pts = ([list(space.canonical(p)) for p in space.from_array(self.points)]
               if isinstance(space, MetricGraph) else self.points.tolist())
        out = {"model": space.model, "points": pts, "gap": self.gap, "proper": self.proper}
        if self.phi is not None:
            out["phi"] = np.asarray(self.phi).tolist()
        if self.orbit is not None:
            out["orbit"] = np.asarray(self.orbit).tolist()
        if self.flags:
            out["flags"] = dict(sorted(self.flags.items()))
        return out

    @classmethod
    def from_json(cls, space: Space, data: dict) -> "Net":
        if data.get("model", space.model) != space.model:
            raise ValueError(f"net was built on {data['model']}, not {space.model}")
        net = cls.from_points(space, [tuple(p) for p in data["points"]])
        if "phi" in data:
            net.phi = np.array(data["phi"], float)
        if "orbit" in data:
            net.orbit = np.array(data["orbit"], int)
        return net


def tile_membership(space: Space, net: Net, center: int, y, band: float = TOL) -> TileMembership:
    if not len(net):
        raise EmptyNetError("net has no points")
    Y = space.to_array([space.coerce(y)])
    if len(net) == 1:
        return TileMembership(INTERIOR, np.inf)
    return TileMembership.from_margin(float(net.margins(center, Y)[0]), band)


def closed_tiles(net: Net, Y, band: float = TOL):
    """Per sample: nearest center, its margin, and the count of closed tiles containing it."""
    d, i = net.index.query(np.asarray(Y, float).reshape(-1, 2), min(len(net), 4))
    within = d <= d[:, :1] + band
    gap = d[:, 1] - d[:, 0] if d.shape[1] > 1 else np.full(len(d), np.inf)
    return i[:, 0], gap, within.sum(axis=1), d, i


@dataclass
class Report:
    """Generic verification outcome: counts plus witnesses of failure."""

    name: str
    checked: int
    violations: int
    passed: bool
    details: dict = field(default_factory=dict)

    def to_json(self):
        return {"name": self.name, "checked": self.checked, "violations": self.violations,
                "passed": self.passed, "details": _jsonable(self.details)}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in sorted(x.items())}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def _tile_scale(net: Net, center: int) -> float:
    if len(net) == 1:
        return 1.0
    d, _ = net.index.query(net.points[center:center + 1], 2)
    return float(d[0, 1])


def sample_closed_tile(net: Net, center: int, n: int, seed: int, radius: float | None = None,
                       band: float = TOL, max_rounds: int = 20) -> np.ndarray:
    """Rejection-sample ``n`` points of the closed tile around ``center``."""
    space = net.space
    c = space.from_array(net.points[center])[0]
    radius = radius or 1.5 * _tile_scale(net, center)
    got = []
    total = 0
    for r in range(max_rounds):
        pts = space.sample_ball(c, radius, max(4 * n, 64), seed + 7919 * r).points
        m = net.margins(center, pts) if len(net) > 1 else np.full(len(pts), np.inf)
        keep = pts[m >= -band]
        got.append(keep)
        total += len(keep)
        if total >= n:
            break
    pts = np.concatenate(got)[:n] if got else np.zeros((0, 2))
    return pts


def _rays(space: Space, x, Z, ts):
    """Points at fractions ``ts`` along geodesics from ``x`` to each row of ``Z``, shape (k, len(ts), 2)."""
    x = np.asarray(x, float)
    Z = np.asarray(Z, float).reshape(-1, 2)
    if isinstance(space, EuclideanPlane):
        return x + ts[None, :, None] * (Z - x)[:, None, :], [list(map(float, z)) for z in Z]
    if isinstance(space, PoincareDisk):
        zx = complex(*x)
        w = _mobius_to_origin(PoincareDisk.as_complex(Z), zx)  # x moved to the origin
        r = np.abs(w)
        u = np.where(r > 0, w / np.where(r > 0, r, 1), 0)
        along = np.tanh(ts[None, :] * np.arctanh(np.minimum(r, 1 - 1e-16))[:, None]) * u[:, None]
        P = PoincareDisk.from_complex(_mobius_from_origin(along.ravel(), zx))
        return P.reshape(len(Z), len(ts), 2), [list(map(float, z)) for z in Z]
    px = space.from_array(x)[0]
    rays, ends = [], []
    for z in space.from_array(Z):
        try:
            c = space.geodesic(px, z)
        except DegenerateGeodesicError:
            continue
        rays.append(c.points_at(ts * c.length))
        ends.append(list(z))
    return np.array(rays).reshape(len(rays), len(ts), 2), ends


def verify_starlike(space: Space, net: Net, center: int, trials: int, seed: int,
                    points_per_ray: int = 50, targets=None, band: float = TOL) -> Report:
    """Walk geodesics from ``center`` to closed-tile points; none may leave the tile."""
    if targets is None:
        Z = sample_closed_tile(net, center, trials, seed, band=band)
    else:
        Z = space.to_array(list(targets))
    x = space.from_array(net.points[center])[0]
    ts = np.linspace(0.0, 1.0, points_per_ray)
    rays, ends = _rays(space, net.points[center], Z, ts)
    if not len(rays):
        return Report("starlike", 0, 0, True, {"rays": 0, "min_margin": np.inf, "witnesses": []})
    # one nearest-neighbour pass over every ray point
    P = rays.reshape(-1, 2)
    m = net.margins(center, P) if len(net) > 1 else np.full(len(P), np.inf)
    m = m.reshape(len(rays), points_per_ray)
    bad = (m < -band).sum(axis=1)
    violations = int(bad.sum())
    witnesses = [ends[k] for k in np.nonzero(bad)[0][:5]]
    checked, worst = int(m.size), float(m.min())
    return Report("starlike", checked, violations, violations == 0,
                  {"rays": len(rays), "min_margin": worst, "witnesses": witnesses})


def _phi_values(phi, P):
    if callable(phi):
        return np.asarray(phi(P), float).reshape(-1)
    return np.full(len(P), float(phi))


def verify_covering_radius(space: Space, net: Net, phi, samples: int, seed: int,
                           window: Window, band: float = TOL) -> Report:
    """Closed tiles lie in ``B(x, 2 phi(x))`` whenever ``phi``-balls always meet the net."""
    Y = space.sample_ball(window.center, window.radius, samples, seed).points
    d, i = net.index.query(Y, 1)
    phiY = _phi_values(phi, Y)
    miss = d[:, 0] >= phiY
    if miss.any():
        z = Y[np.argmax(miss)]
        return Report("covering_radius", samples, int(miss.sum()), False,
                      {"precondition_failed": True, "witness": z.tolist()})
    nearest, gap, count, D, I = closed_tiles(net, Y, band)
    phiC = _phi_values(phi, net.points)
    violations = 0
    worst = 0.0
    for k in range(D.shape[1]):
        member = D[:, k] <= D[:, 0] + band
        ratio = D[:, k] - 2 * phiC[I[:, k]]
        violations += int((member & (ratio > TOL)).sum())
        if member.any():
            worst = max(worst, float(np.max(np.where(member, D[:, k] / (2 * phiC[I[:, k]]), 0))))
    return Report("covering_radius", samples, violations, violations == 0,
                  {"precondition_failed": False, "max_ratio_to_2phi": worst,
                   "max_tile_radius": float(np.max(D[:, 0]))})


def bisector_sampler(space: Space, x, y, window: Window, band: float = TOL):
    """Sampler of points on ``Bis(x, y)`` inside ``window``.

    Points already equidistant are kept (graphs have fat bisectors); the
    rest come from root-finding along geodesics between the two sides.
    """
    X = space.to_array([space.coerce(x)])
    Yp = space.to_array([space.coerce(y)])

    def f_rows(P):
        return space.rowwise(P, np.broadcast_to(X, P.shape)) - space.rowwise(P, np.broadcast_to(Yp, P.shape))

    def sample(n, seed):
        pts = space.sample_ball(window.center, window.radius, 8 * n, seed).points
        f = f_rows(pts)
        on = pts[np.abs(f) <= band]
        neg, pos = pts[f < -band], pts[f > band]
        out = [on]
        m = min(len(neg), len(pos), max(n - len(on), 0))
        found = []
        for u, v in zip(space.from_array(neg[:m]), space.from_array(pos[:m])):
            c = space.geodesic(u, v)
            g = lambda t: float(f_rows(c.points_at([t]))[0])
            t = brentq(g, 0.0, c.length, xtol=1e-14, rtol=1e-15)
            found.append(c.points_at([t])[0])
        if found:
            out.append(np.array(found))
        return np.concatenate(out)[:n]

    sample.membership = lambda P: np.abs(f_rows(np.asarray(P, float).reshape(-1, 2))) <= band
    return sample


def verify_quasiconvexity(space: Space, sampler: Callable, lam: float, trials: int, seed: int,
                          per_geodesic: int = 20, membership: Callable | None = None,
                          set_size: int = 400) -> Report:
    """Geodesics between sampled set points stay within ``lam`` of the set.

    Distance to the set is measured against the sampled set points, except
    that points accepted by ``membership`` count as distance zero.
    """
    membership = membership or getattr(sampler, "membership", None)
    S = sampler(max(set_size, 2 * trials), seed)
    if len(S) < 2:
        return Report("quasiconvexity", 0, 0, False, {"inconclusive": True, "set_points": len(S)})
    idx = NearestIndex(space, S)
    rng = np.random.default_rng(seed)
    worst = -np.inf
    checked = 0
    ts = np.linspace(0.0, 1.0, per_geodesic)
    for _ in range(trials):
        a, b = rng.choice(len(S), 2, replace=False)
        p, q = space.from_array(S[[a, b]])
        try:
            c = space.geodesic(p, q)
        except DegenerateGeodesicError:
            continue
        P = c.points_at(ts * c.length)
        dist, _ = idx.query(P, 1)
        dist = dist[:, 0]
        if membership is not None:
            dist = np.where(membership(P), 0.0, dist)
        worst = max(worst, float(np.max(dist - lam)))
        checked += len(P)
    ok = worst <= 1e-6
    return Report("quasiconvexity", checked, 0 if ok else 1, ok,
                  {"lambda": lam, "max_excess": worst, "set_points": len(S)})


def verify_closure(space: Space, net: Net, center: int, trials: int, seed: int,
                   eps: float = 1e-3, targets=None, band: float = TOL) -> Report:
    """Check that closed-tile points are limits of open-tile points.

    Each sampled closed-tile point ``z`` is approached along the geodesic
    from the center; the point at distance ``eps`` before ``z`` must be
    strictly inside. Holds with nonbranching geodesics.
    """
    if targets is None:
        Z = sample_closed_tile(net, center, trials, seed, band=band)
    else:
        Z = space.to_array(list(targets))
    x = space.from_array(net.points[center])[0]
    bad = []
    for z in space.from_array(Z):
        try:
            c = space.geodesic(x, z)
        except DegenerateGeodesicError:
            continue
        P = c.points_at([max(c.length - eps, 0.0)])
        if net.margins(center, P)[0] <= band:
            bad.append(list(z))
    return Report("closure_of_open_tile", len(Z), len(bad), not bad, {"witnesses": bad[:5]})


def verify_local_finiteness(space: Space, net: Net, phi_max: float, window: Window,
                            balls: int, samples: int, seed: int, ball_radius: float = 1.0,
                            band: float = TOL) -> Report:
    """Count tiles meeting probe balls against the net points that could reach them."""
    centers = space.sample_ball(window.center, max(window.radius - ball_radius, 1e-6), balls, seed).points
    violations = 0
    counts = []
    for k, c in enumerate(space.from_array(centers)):
        Y = space.sample_ball(c, ball_radius, samples, seed + 1 + k).points
        _, _, _, D, I = closed_tiles(net, Y, band)
        tiles = set(I[D <= D[:, :1] + band].tolist())
        bound = len(net.index.within(space.to_array([c])[0], ball_radius + 2 * phi_max))
        counts.append([len(tiles), bound])
        violations += int(len(tiles) > bound)
    return Report("local_finiteness", balls, violations, violations == 0, {"tiles_vs_bound": counts})


def verify_partition(space: Space, net: Net, window: Window, samples: int, seed: int,
                     band: float = TOL) -> Report:
    """Closed tiles cover every sample; open tiles contain each sample at most once."""
    Y = space.sample_ball(window.center, window.radius, samples, seed).points
    _, gap, count, _, _ = closed_tiles(net, Y, band)
    # a second Interior tile would need two strictly nearest points, so only coverage can fail
    uncovered = int((count < 1).sum())
    return Report("partition", samples, uncovered, uncovered == 0,
                  {"interior_fraction": float(np.mean(gap > band))})


def band_fraction(space: Space, net: Net, window: Window, samples: int, seed: int,
                  band: float = 1e-4) -> float:
    """Fraction of window samples within ``band`` of some tile boundary."""
    if len(net) < 2:
        return 0.0
    Y = space.sample_ball(window.center, window.radius, samples, seed).points
    d, _ = net.nearest_two(Y)
    return float(np.mean(d[:, 1] - d[:, 0] <= band))


def _trusted(net: Net):
    """Mask of points whose nearby net is complete, from the net's closure flags."""
    c, r = net.flags.get("region_center"), net.flags.get("closure_radius")
    if c is None or r is None:
        return lambda Y: np.ones(len(Y), bool)
    margin = net.flags.get("trust_margin")
    if margin is None:
        margin = 4 * float(np.max(net.phi)) if net.phi is not None else r / 2
    return lambda Y: net.space.distances_to(Y, np.asarray(c, float)) <= r - margin


def verify_equivariance(action, net: Net, window: Window, samples: int, seed: int,
                        tol: float | None = None, elements: int = 8) -> Report:
    """Membership of ``y`` in the tile of ``x`` matches that of ``g y`` in the tile of ``g x``.

    Only pairs whose image center ``g x`` is itself a net point are compared.
    The default tolerance allows for the net's recorded invariance defect.
    """
    space = net.space
    if tol is None:
        tol = 2 * float(net.flags.get("invariance_defect", 0.0)) + 1e-9
    Y = space.sample_ball(window.center, window.radius, samples, seed).points
    centers = net.index.query(Y, 1)[1][:, 0]
    margins = net.margins(centers, Y)
    base = space.to_array([space.coerce(window.center)])
    reach = window.radius + 2 * action.max_generator_displacement(base)
    trusted = _trusted(net)
    inner = trusted(Y)
    checked, violations, worst, bad = 0, 0, 0.0, []
    for g in action.candidates(reach)[1:1 + elements].tolist():
        gx = action.images(net.points[centers], [g])[0]
        gy = action.images(Y, [g])[0]
        d, j = net.index.query(gx, 1)
        ok = (d[:, 0] <= 1e-7) & trusted(gy) & inner
        if not ok.any():
            continue
        dev = np.abs(net.margins(j[ok, 0], gy[ok]) - margins[ok])
        checked += int(ok.sum())
        violations += int((dev > tol).sum())
        worst = max(worst, float(dev.max()))
        for k in np.nonzero(dev > tol)[0][:max(0, 5 - len(bad))]:
            bad.append({"element": action.element(g).word_string(action.names), "y": Y[ok][k].tolist()})
    return Report("equivariance", checked, violations, violations == 0,
                  {"max_deviation": worst, "tolerance": tol, "vacuous": checked == 0, "witnesses": bad})


# -- figures ----------------------------------------------------------------

SVG_GRID = 600


def _window_box(space: Space, window: Window):
    """Axis-aligned box of flat coordinates containing the window."""
    c = np.asarray(space.to_array([space.coerce(window.center)])[0], float)
    if isinstance(space, EuclideanPlane):
        return c - window.radius, c + window.radius
    t = np.linspace(0, 2 * np.pi, 721)
    rim = _mobius_from_origin(np.tanh(window.radius / 2) * np.exp(1j * t), complex(*c))
    pts = np.column_stack([rim.real, rim.imag])
    return pts.min(axis=0), pts.max(axis=0)


def raster_points(space: Space, window: Window, grid: int = SVG_GRID):
    """Pixel centers over the window's box, row-major from the top, and the in-window mask."""
    if not isinstance(space, (EuclideanPlane, PoincareDisk)):
        raise ValueError(f"figures are only drawn for plane and disk spaces, not {space.model}")
    lo, hi = _window_box(space, window)
    side = float(max(hi - lo))
    mid = (lo + hi) / 2
    step = side / grid
    u = mid[0] - side / 2 + (np.arange(grid) + 0.5) * step
    v = mid[1] + side / 2 - (np.arange(grid) + 0.5) * step
    X, Yv = np.meshgrid(u, v)
    P = np.column_stack([X.ravel(), Yv.ravel()])
    if isinstance(space, PoincareDisk):
        inside = np.hypot(P[:, 0], P[:, 1]) < 1 - 1e-12
    else:
        inside = np.ones(len(P), bool)
    c = space.to_array([space.coerce(window.center)])[0]
    inside[inside] = space.distances_to(P[inside], c) <= window.radius
    return P, inside, (mid[0] - side / 2, mid[1] - side / 2, side)


def _palette(labels: np.ndarray) -> np.ndarray:
    keys = np.unique(labels)
    table = {}
    for k in keys.tolist():
        h = (k * 0.6180339887498949) % 1.0
        table[k] = [int(255 * c) for c in colorsys.hsv_to_rgb(h, 0.45, 0.95)]
    return np.array([table[k] for k in labels.tolist()], dtype=np.uint8).reshape(-1, 3)


def _edge_pixels(mask: np.ndarray) -> np.ndarray:
    edge = np.zeros_like(mask)
    edge[:-1] |= mask[:-1] != mask[1:]
    edge[1:] |= mask[:-1] != mask[1:]
    edge[:, :-1] |= mask[:, :-1] != mask[:, 1:]
    edge[:, 1:] |= mask[:, :-1] != mask[:, 1:]
    return edge & mask


def render_svg(net: Net, window: Window, grid: int = SVG_GRID, band: float | None = None,
               shade: Callable | None = None, outline: Callable | None = None, title: str = "tiles") -> str:
    """Tiles rasterized by nearest center, one color per tile, band pixels black.

    ``shade`` and ``outline`` are point-set oracles: pixels outside ``shade``
    are washed out and the boundary of ``outline`` is drawn dark red. The
    default band is one pixel wide so that tile boundaries are visible.
    """
    space = net.space
    P, inside, (x0, y0, side) = raster_points(space, window, grid)
    if band is None:
        band = side / grid
    rgba = np.zeros((len(P), 4), dtype=np.uint8)
    Q = P[inside]
    if len(net) > 1:
        d, i = net.nearest_two(Q)
        near, gap = i[:, 0], d[:, 1] - d[:, 0]
    else:
        near, gap = np.zeros(len(Q), int), np.full(len(Q), np.inf)
    rgb = _palette(near).astype(float)
    if shade is not None:
        faded = ~np.asarray(shade(Q), bool)
        rgb[faded] = 255 - 0.3 * (255 - rgb[faded])
    rgb[gap <= band] = 0
    rgba[inside, :3] = rgb.astype(np.uint8)
    rgba[inside, 3] = 255
    img = rgba.reshape(grid, grid, 4)
    if outline is not None:
        mask = np.zeros(len(P), bool)
        mask[inside] = np.asarray(outline(Q), bool)
        img[_edge_pixels(mask.reshape(grid, grid))] = (160, 0, 0, 255)
    buf = io.BytesIO()
    Image.fromarray(img, "RGBA").save(buf, format="PNG")
    data = base64.b64encode(buf.getvalue()).decode("ascii")
    ET.register_namespace("", "http://www.w3.org/2000/svg")
    ET.register_namespace("xlink", "http://www.w3.org/1999/xlink")
    root = ET.Element("{http://www.w3.org/2000/svg}svg", {
        "version": "1.1", "width": str(grid), "height": str(grid), "viewBox": f"0 0 {grid} {grid}"})
    ET.SubElement(root, "{http://www.w3.org/2000/svg}title").text = title
    ET.SubElement(root, "{http://www.w3.org/2000/svg}desc").text = (
        f"{space.model} window center {list(map(float, space.to_array([space.coerce(window.center)])[0]))} "
        f"radius {window.radius}; box x0={x0} y0={y0} side={side}; band {band}")
    ET.SubElement(root, "{http://www.w3.org/2000/svg}image", {
        "x": "0", "y": "0", "width": str(grid), "height": str(grid),
        "{http://www.w3.org/1999/xlink}href": "data:image/png;base64," + data})
    return ET.tostring(root, encoding="unicode", xml_declaration=True) + "\n"
