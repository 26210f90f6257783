"""Command-line driver: read a scene, run one analysis, write a JSON report and optional SVG."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .action import ActionError
from .domains import build_fundamental_domain, dirichlet_margins, dirichlet_oracle, verify_fundamental_set
from .geometry import TOL, GeometryError, MetricGraph, Window
from .netting import NotFreeError, invariant_net
from .properness import (GROWTH, NotWanderingError, check_transporter_finiteness, find_dynamical_relation,
                         wandering_radius)
from .quotient import quotient_distance, rho, verify_local_isometry
from .scene import SceneError, build_action, load_scene, point, window
from .voronoi import (BAND, INTERIOR, OUTSIDE, Net, _jsonable, render_svg, verdicts, verify_closure,
                      verify_equivariance, verify_partition, verify_starlike)

EXIT_PASS = 0
EXIT_INPUT = 1
EXIT_FAIL = 2
EXIT_INCONCLUSIVE = 3

COMMANDS = ("check-properness", "quotient-dist", "voronoi", "dirichlet", "fundamental-domain")


class Outcome:
    """A command's report payload plus its verdict."""

    def __init__(self, payload: dict, failed: bool, caveats: list, svg: str | None = None):
        self.payload = payload
        self.failed = failed
        self.caveats = list(caveats)
        self.svg = svg

    @property
    def exit_code(self) -> int:
        if self.failed:
            return EXIT_FAIL
        return EXIT_INCONCLUSIVE if self.caveats else EXIT_PASS

    @property
    def verdict(self) -> str:
        return {EXIT_PASS: "pass", EXIT_FAIL: "fail", EXIT_INCONCLUSIVE: "inconclusive"}[self.exit_code]


def _param(scene, args, flag, key, default):
    value = getattr(args, flag, None) if flag else None
    if value is not None:
        return value
    return scene.get("params", {}).get(key, default)


def _window(action, scene, args) -> Window:
    return window(action.space, scene, args.window_radius)


def _pair(action, scene, args):
    pts = scene.get("params", {}).get("points")
    if args.x is not None:
        pts = [args.x, args.y if args.y is not None else args.x]
    if not pts or len(pts) < 2:
        base = scene["base_point"]
        pts = [base, base]
    return point(action.space, pts[0]), point(action.space, pts[1])


def _pt(space, p) -> list:
    """Scene-style coordinates of a point."""
    if isinstance(space, MetricGraph):
        e, t = space.canonical(p)
        return [int(e), float(t)]
    return [float(v) for v in p]


def _enum_caveat(action):
    return [] if action.complete else ["heuristic enumeration: results cover only the enumerated elements"]


# -- commands ---------------------------------------------------------------

def run_check_properness(action, scene, args) -> Outcome:
    space = action.space
    w = _window(action, scene, args)
    radii = _param(scene, args, None, "radii", None) or [w.radius * k / 5 for k in range(1, 6)]
    windows = [Window(w.center, float(r)) for r in radii]
    growth = check_transporter_finiteness(action, windows)
    x, y = _pair(action, scene, args)
    depth = int(_param(scene, args, "depth", "depth", 20))
    witness = find_dynamical_relation(action, x, y, depth)
    payload = {"transporter": growth.to_json(), "depth": depth,
               "points": [_pt(space, x), _pt(space, y)],
               "witness": None if witness is None else witness.to_json(action.names)}
    if witness is None:
        payload["witness_note"] = f"no witness found at depth {depth}; this is not a proof of properness"
    else:
        payload["witness_note"] = "distinct words only; leaving every finite subset is not certified"
    if action.isometric:
        try:
            payload["wandering_radius"] = wandering_radius(action, space.coerce(scene["base_point"]))
        except NotWanderingError as exc:
            payload["wandering_radius"] = None
            payload["wandering_error"] = str(exc)
    failed = witness is not None or growth.verdict == GROWTH
    caveats = list(growth.caveats)
    return Outcome(payload, failed, caveats)


def run_quotient_dist(action, scene, args) -> Outcome:
    space = action.space
    if not action.isometric:
        raise ActionError("quotient distances need an isometric action")
    x, y = _pair(action, scene, args)
    trials = int(_param(scene, args, "samples", "pairs", 1000))
    seed = args.seed
    payload = {"points": [_pt(space, x), _pt(space, y)],
               "distance": quotient_distance(action, x, y), "ambient_distance": space.distance(x, y)}
    margins = []
    for p in (x, y):
        m = rho(action, p)
        margins.append({"value": m.value,
                        "element": None if m.element is None else m.element.word_string(action.names)})
    payload["margin"] = margins
    failed = False
    try:
        rep = verify_local_isometry(action, x, trials, seed)
        payload["local_isometry"] = rep.to_json()
        failed = not rep.passed
    except NotFreeError as exc:
        payload["local_isometry"] = None
        payload["local_isometry_error"] = str(exc)
    return Outcome(payload, failed, _enum_caveat(action))


def _orbit_net(action, center, radius) -> Net:
    orbit = action.orbit_in_ball(center, radius)
    net = Net.from_points(action.space, orbit.points)
    # tiles near the rim of the ball miss competitors outside it
    net.flags.update(region_center=action.space.to_array([center])[0].tolist(), closure_radius=float(radius), trust_margin=float(radius) / 2)
    return net


def run_voronoi(action, scene, args) -> Outcome:
    space = action.space
    w = _window(action, scene, args)
    seed = args.seed
    samples = int(_param(scene, args, "samples", "samples", 10000))
    trials = int(_param(scene, args, None, "trials", 100))
    band = args.band_width if args.band_width is not None else TOL
    if args.net == "invariant":
        net = invariant_net(action, w, seed)
    else:
        base = space.coerce(scene["base_point"])
        net = _orbit_net(action, base, w.radius + 2 * space.distance(base, w.center))
    c = space.to_array([space.coerce(w.center)])
    center = int(net.index.query(c, 1)[1][0, 0])
    reports = [verify_partition(space, net, w, samples, seed, band),
               verify_starlike(space, net, center, trials, seed + 1),
               verify_closure(space, net, center, trials, seed + 2),
               verify_equivariance(action, net, w, min(samples, 2000), seed + 3)]
    payload = {"net": {"kind": args.net, "points": len(net), "gap": net.gap, "center": center,
                       "flags": _jsonable(net.flags)},
               "checks": [r.to_json() for r in reports]}
    failed = not all(r.passed for r in reports)
    svg = None
    if args.svg:
        svg = render_svg(net, w, args.grid, args.band_width, title=f"{scene['name']} tiles")
    return Outcome(payload, failed, _enum_caveat(action), svg)


def _graph_rays(action, x, band):
    """Verdict of each edge of a graph for the Dirichlet domain of ``x``, sampled along the edge."""
    space = action.space
    out = []
    for e, (a, b, length) in enumerate(space.edges):
        offs = np.linspace(0.0, length, 41)[1:-1]
        P = space.to_array([(e, float(t)) for t in offs])
        v = verdicts(dirichlet_margins(action, x, P), band)
        kinds = sorted(set(v.tolist()))
        out.append({"edge": e, "ends": [space.vertex_names[a], space.vertex_names[b]],
                    "verdict": kinds[0] if len(kinds) == 1 else "mixed"})
    return out


def run_dirichlet(action, scene, args) -> Outcome:
    space = action.space
    w = _window(action, scene, args)
    seed = args.seed
    samples = int(_param(scene, args, "samples", "samples", 10000))
    trials = int(_param(scene, args, None, "trials", 100))
    band = args.band_width if args.band_width is not None else TOL
    x = space.coerce(scene["base_point"])
    Y = space.sample_ball(w.center, w.radius, samples, seed).points
    v = verdicts(dirichlet_margins(action, x, Y), band)
    payload = {"center": _pt(space, x),
               "verdict_fractions": {k: float(np.mean(v == k)) for k in (INTERIOR, BAND, OUTSIDE)}}
    if isinstance(space, MetricGraph):
        payload["edges"] = _graph_rays(action, x, band)
    # a window point's nearest orbit representative lies within ``reach`` of x
    reach = w.radius + space.distance(x, w.center)
    fs = verify_fundamental_set(action, dirichlet_oracle(action, x, band, reach), w,
                                min(samples, 2000), seed + 1, extent=reach)
    payload["fundamental_set"] = fs.to_json()
    net = _orbit_net(action, x, 2 * reach)
    center = int(net.index.query(space.to_array([x]), 1)[1][0, 0])
    closure = verify_closure(space, net, center, trials, seed + 2)
    payload["closure"] = closure.to_json()
    payload["closure_note"] = ("every closed-domain sample lies near the open domain" if closure.passed else
                               "the closed domain is larger than the closure of the open domain")
    failed = fs.missed > 0 or not closure.passed
    svg = None
    if args.svg:
        shade = dirichlet_oracle(action, x, band, reach)
        svg = render_svg(net, w, args.grid, args.band_width, shade=shade, title=f"{scene['name']} Dirichlet domain")
    return Outcome(payload, failed, fs.caveats, svg)


def run_fundamental_domain(action, scene, args) -> Outcome:
    w = _window(action, scene, args)
    samples = int(_param(scene, args, "samples", "samples", 10000))
    try:
        fd = build_fundamental_domain(action, w, args.seed, samples=samples)
    except NotFreeError as exc:
        return Outcome({"precondition": "free action", "error": str(exc)}, True, [])
    rep = fd.report
    payload = {"report": rep.to_json(), "representatives": len(fd.S),
               "incidence": {"vertices": fd.incidence.graph.number_of_nodes(),
                             "edges": fd.incidence.graph.number_of_edges()},
               "lift": _jsonable(fd.lift.check())}
    if args.domain_json:
        Path(args.domain_json).write_text(json.dumps(_jsonable(fd.to_json()), indent=2, sort_keys=True) + "\n")
    svg = None
    if args.svg:
        svg = render_svg(fd.net, w, args.grid, args.band_width, shade=fd.domain, outline=fd.region,
                         title=f"{scene['name']} fundamental domain")
    return Outcome(payload, not rep.passed, rep.caveats, svg)


HELP = {
    "check-properness": "transporter growth, dynamical-relation search and wandering radius",
    "quotient-dist": "quotient distance, margins and the local isometry check",
    "voronoi": "tessellate a net and run the tile checks",
    "dirichlet": "classify the Dirichlet domain of the base point and check it",
    "fundamental-domain": "build an open fundamental region and closed connected domain",
}

RUNNERS = {
    "check-properness": run_check_properness,
    "quotient-dist": run_quotient_dist,
    "voronoi": run_voronoi,
    "dirichlet": run_dirichlet,
    "fundamental-domain": run_fundamental_domain,
}


# -- entry point ------------------------------------------------------------

def _coords(text: str):
    try:
        a, b = (float(t) for t in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}") from exc
    return [a, b]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fundom", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("scene", help="scene JSON file")
        p.add_argument("--seed", type=int, help="override the scene seed")
        p.add_argument("--samples", type=int, help="sample count for sampled checks")
        p.add_argument("--depth", type=int, help="witness search depth")
        p.add_argument("--window-radius", type=float, help="override the scene window radius")
        p.add_argument("--band-width", type=float, help="boundary band width for verdicts and figures")
        p.add_argument("--svg", help="write a figure to this path (plane and disk only)")
        p.add_argument("--grid", type=int, default=600, help="figure raster size in pixels")
        p.add_argument("--out", help="write the JSON report here instead of stdout")
        p.add_argument("--x", type=_coords, help="first point as 'a,b' (graph: 'edge,offset')")
        p.add_argument("--y", type=_coords, help="second point as 'a,b'")
        if name == "voronoi":
            p.add_argument("--net", choices=("orbit", "invariant"), default="orbit",
                           help="tessellate the base point's orbit or an invariant net")
        if name == "fundamental-domain":
            p.add_argument("--domain-json", help="write the chosen tiles and incidence graph here")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        scene = load_scene(args.scene)
        action = build_action(scene)
        if args.seed is None:
            args.seed = scene["seed"]
        if args.svg and isinstance(action.space, MetricGraph):
            raise SceneError("figures are only drawn for plane and disk spaces")
        outcome = RUNNERS[args.command](action, scene, args)
    except (SceneError, GeometryError, ActionError, ValueError) as exc:
        print(f"fundom {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    report = {"command": args.command, "scene": scene["name"], "seed": args.seed, "version": __version__,
              "verdict": outcome.verdict, "exit_code": outcome.exit_code, "caveats": outcome.caveats,
              **outcome.payload}
    text = json.dumps(_finite(_jsonable(report)), indent=2, sort_keys=True, allow_nan=False) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if outcome.svg is not None:
        Path(args.svg).write_text(outcome.svg)
    return outcome.exit_code


def _finite(x):
    """Replace infinite or undefined floats by strings so the report stays strict JSON."""
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_finite(v) for v in x]
    if isinstance(x, float) and not np.isfinite(x):
        return str(x)
    return x


if __name__ == "__main__":
    sys.exit(main())
