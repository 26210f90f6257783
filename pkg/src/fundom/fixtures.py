"""Reference scenes used by the tests, the CLI and the shipped ``scenes/`` directory."""

from __future__ import annotations

import math

from .action import ActionSystem
from .scene import SCENE_VERSION, build_action

# translation length making the two Schottky axes' isometric circles disjoint
SCHOTTKY_LENGTH = 2 * math.acosh(2.0)


def _scene(name, space, generators, base_point, enumeration, window, seed=1, **extra):
    scene = {"version": SCENE_VERSION, "name": name, "space": space, "generators": generators,
             "base_point": list(base_point), "enumeration": enumeration, "window": window, "seed": seed}
    scene.update(extra)
    return scene


def _translation(dx, dy):
    return {"type": "affine", "matrix": [[1.0, 0.0], [0.0, 1.0]], "translation": [dx, dy]}


def torus_scene() -> dict:
    """Integer translations of the plane."""
    return _scene("torus", {"model": "euclidean"}, [_translation(1.0, 0.0), _translation(0.0, 1.0)],
                  (0.0, 0.0), {"mode": "exact"}, {"center": [0.0, 0.0], "radius": 3.0},
                  names=["a", "b"],
                  params={"pairs": 1000, "samples": 10000, "trials": 100,
                          "points": [[0.9, 0.2], [0.1, 0.1]], "radii": [1, 2, 3, 4, 5]})


def klein_scene() -> dict:
    """Translation along x and a glide reflection along y; the quotient is a Klein bottle."""
    glide = {"type": "affine", "matrix": [[-1.0, 0.0], [0.0, 1.0]], "translation": [0.0, 1.0]}
    return _scene("klein", {"model": "euclidean"}, [_translation(1.0, 0.0), glide],
                  (0.3, 0.2), {"mode": "exact"}, {"center": [0.0, 0.0], "radius": 3.0},
                  names=["a", "b"],
                  params={"pairs": 1000, "samples": 10000, "trials": 100,
                          "points": [[0.3, 0.2], [0.7, 0.9]], "radii": [1, 2, 3, 4, 5]})


def schottky_scene() -> dict:
    """Free group on two hyperbolic translations with perpendicular axes."""
    gens = [{"type": "hyperbolic", "length": SCHOTTKY_LENGTH, "angle": 0.0},
            {"type": "hyperbolic", "length": SCHOTTKY_LENGTH, "angle": math.pi / 2}]
    return _scene("schottky", {"model": "disk"}, gens, (0.0, 0.0), {"mode": "heuristic", "depth": 12},
                  {"center": [0.0, 0.0], "radius": 1.8}, names=["a", "b"],
                  params={"pairs": 1000, "samples": 10000, "trials": 100,
                          "points": [[0.0, 0.0], [0.3, 0.1]], "radii": [1, 2, 4, 6, 8, 10]})


def cross_scene() -> dict:
    """Half-turn of the coordinate cross; fixes the origin, so the action is not free."""
    space = {"model": "graph", "vertices": ["O", "E", "N", "W", "S"],
             "edges": [[0, k, 10.0] for k in range(1, 5)]}
    return _scene("cross", space, [{"type": "automorphism", "permutation": [0, 3, 4, 1, 2]}],
                  (0, 1.0), {"mode": "exact"}, {"center": [0, 0.0], "radius": 3.0}, names=["s"],
                  params={"samples": 10000, "trials": 100, "points": [[0, 1.0], [0, 1.0]],
                          "radii": [1, 2, 3, 4, 5]})


def ex1_scene() -> dict:
    """The hyperbolic linear map ``(x, y) -> (2x, y/2)`` on the punctured plane.

    Orbits are discrete but points on different axes are dynamically related.
    """
    gen = {"type": "affine", "matrix": [[2.0, 0.0], [0.0, 0.5]], "translation": [0.0, 0.0]}
    return _scene("ex1", {"model": "euclidean"}, [gen], (1.0, 1.0), {"mode": "heuristic", "depth": 24},
                  {"center": [1.0, 1.0], "radius": 0.5}, isometric=False, names=["g"],
                  params={"points": [[1.0, 0.0], [0.0, 1.0]], "depth": 20,
                          "radii": [1 - 2.0 ** -m for m in range(1, 9)]})


def trivial_scene() -> dict:
    return _scene("trivial", {"model": "euclidean"}, [], (0.0, 0.0), {"mode": "exact"},
                  {"center": [0.0, 0.0], "radius": 1.0},
                  params={"samples": 2000, "points": [[0.0, 0.0], [0.5, 0.5]], "radii": [0.5, 1.0, 1.5]})


SCENES = {
    "torus": torus_scene,
    "klein": klein_scene,
    "schottky": schottky_scene,
    "cross": cross_scene,
    "ex1": ex1_scene,
    "trivial": trivial_scene,
}


def load(name: str) -> ActionSystem:
    """A fresh action system for the named reference scene."""
    return build_action(SCENES[name]())


def torus() -> ActionSystem:
    return load("torus")


def klein() -> ActionSystem:
    return load("klein")


def schottky() -> ActionSystem:
    return load("schottky")


def cross() -> ActionSystem:
    return load("cross")


def ex1() -> ActionSystem:
    return load("ex1")


def trivial() -> ActionSystem:
    return load("trivial")


def four_cycle_half_turn():
    """Square graph with the half-turn ``v -> v + 2``: edges and vertex permutation."""
    return [(0, 1), (1, 2), (2, 3), (3, 0)], [2, 3, 0, 1]
