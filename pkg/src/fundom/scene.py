"""Scene files: JSON descriptions of a space, a group action and run parameters."""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema
from jsonschema.exceptions import best_match

from .action import ActionSystem, Exact, GraphAutomorphism, HeuristicDepth, MobiusMap, PlaneMap
from .geometry import EuclideanPlane, MetricGraph, PoincareDisk, Space, Window

SCENE_VERSION = 1

_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_COMPLEX = _POINT

SCENE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "fundom scene",
    "type": "object",
    "required": ["version", "name", "space", "generators", "base_point", "enumeration", "window", "seed"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": SCENE_VERSION},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "space": {
            "type": "object",
            "required": ["model"],
            "additionalProperties": False,
            "properties": {
                "model": {"enum": ["euclidean", "disk", "graph"]},
                "vertices": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                "edges": {"type": "array", "items": {
                    "type": "array", "prefixItems": [{"type": "integer", "minimum": 0},
                                                     {"type": "integer", "minimum": 0},
                                                     {"type": "number", "exclusiveMinimum": 0}],
                    "minItems": 3, "maxItems": 3}},
            },
            "if": {"properties": {"model": {"const": "graph"}}},
            "then": {"required": ["vertices", "edges"]},
        },
        "generators": {"type": "array", "items": {"oneOf": [
            {"type": "object", "additionalProperties": False, "required": ["type", "matrix", "translation"],
             "properties": {"type": {"const": "affine"},
                            "matrix": {"type": "array", "items": _POINT, "minItems": 2, "maxItems": 2},
                            "translation": _POINT}},
            {"type": "object", "additionalProperties": False, "required": ["type", "length", "angle"],
             "properties": {"type": {"const": "hyperbolic"},
                            "length": {"type": "number", "exclusiveMinimum": 0},
                            "angle": {"type": "number"}}},
            {"type": "object", "additionalProperties": False, "required": ["type", "coefficients"],
             "properties": {"type": {"const": "mobius"},
                            "coefficients": {"type": "array", "items": _COMPLEX, "minItems": 4, "maxItems": 4},
                            "conjugate": {"type": "boolean"}}},
            {"type": "object", "additionalProperties": False, "required": ["type", "permutation"],
             "properties": {"type": {"const": "automorphism"},
                            "permutation": {"type": "array", "items": {"type": "integer", "minimum": 0}}}},
        ]}},
        "names": {"type": "array", "items": {"type": "string"}},
        "isometric": {"type": "boolean"},
        "base_point": _POINT,
        "enumeration": {"oneOf": [
            {"type": "object", "additionalProperties": False, "required": ["mode"],
             "properties": {"mode": {"const": "exact"}, "slack": {"type": "number", "minimum": 0}}},
            {"type": "object", "additionalProperties": False, "required": ["mode", "depth"],
             "properties": {"mode": {"const": "heuristic"}, "depth": {"type": "integer", "minimum": 1}}},
        ]},
        "window": {"type": "object", "additionalProperties": False, "required": ["center", "radius"],
                   "properties": {"center": _POINT, "radius": {"type": "number", "exclusiveMinimum": 0}}},
        "seed": {"type": "integer", "minimum": 0},
        "params": {"type": "object"},
    },
}


class SceneError(ValueError):
    """A scene file is unreadable or does not match the schema."""


def validate_scene(data) -> dict:
    validator = jsonschema.Draft202012Validator(SCENE_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for e in errors:
            e = best_match([e])  # descend into oneOf branches to the most specific field
            where = "/".join(str(p) for p in e.absolute_path) or "<root>"
            lines.append(f"{where}: {e.message}")
        raise SceneError("scene does not match schema:\n  " + "\n  ".join(lines))
    return data


def load_scene(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SceneError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return validate_scene(data)


def dump_scene(scene: dict) -> str:
    return json.dumps(validate_scene(scene), indent=2, sort_keys=True) + "\n"


def build_space(desc: dict) -> Space:
    model = desc["model"]
    if model == "euclidean":
        return EuclideanPlane()
    if model == "disk":
        return PoincareDisk()
    return MetricGraph(len(desc["vertices"]), [tuple(e) for e in desc["edges"]], desc["vertices"])


def build_generator(space: Space, desc: dict):
    kind = desc["type"]
    if kind == "affine":
        return PlaneMap(desc["matrix"], desc["translation"])
    if kind == "hyperbolic":
        return MobiusMap.hyperbolic(desc["length"], desc["angle"])
    if kind == "mobius":
        a, b, c, d = (complex(*z) for z in desc["coefficients"])
        return MobiusMap(a, b, c, d, conjugate=desc.get("conjugate", False))
    return GraphAutomorphism(space, desc["permutation"])


def _check_models(space, gens):
    want = {"affine": "euclidean", "hyperbolic": "disk", "mobius": "disk", "automorphism": "graph"}
    for k, g in enumerate(gens):
        if want[g["type"]] != space.model:
            raise SceneError(f"generators/{k}: {g['type']} generator cannot act on a {space.model} space")


def build_action(scene: dict) -> ActionSystem:
    """Construct the space and action a validated scene describes."""
    space = build_space(scene["space"])
    _check_models(space, scene["generators"])
    gens = [build_generator(space, g) for g in scene["generators"]]
    enum = scene["enumeration"]
    enumeration = (Exact(enum.get("slack")) if enum["mode"] == "exact" else HeuristicDepth(enum["depth"]))
    return ActionSystem(space, gens, point(space, scene["base_point"]), enumeration,
                        isometric=scene.get("isometric", True), names=scene.get("names"),
                        check_seed=scene["seed"])


def point(space: Space, value):
    """Scene points are ``[x, y]`` pairs; on graphs ``[edge, offset]``."""
    if isinstance(space, MetricGraph):
        return space.coerce((int(value[0]), float(value[1])))
    return space.coerce(tuple(value))


def window(space: Space, scene: dict, radius: float | None = None) -> Window:
    w = scene["window"]
    return Window(point(space, w["center"]), float(radius if radius is not None else w["radius"]))
