"""The margin function and the quotient metric ``d_G``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .action import ActionError, ActionSystem, GroupElement
from .geometry import TOL

_CHUNK = 4096


class InconclusiveMarginError(ActionError):
    pass


class NotFreeError(ActionError):
    """The action has a nontrivial stabilizer where a free action is required."""


@dataclass
class MarginValue:
    value: float
    element: GroupElement | None
    complete: bool = True

    def __float__(self):
        return self.value


def _as_array(action, points):
    if isinstance(points, np.ndarray):
        return np.asarray(points, float).reshape(-1, 2)
    return action.space.to_array([action.space.coerce(points)])


def _generator_displacement(action, X):
    """Smallest displacement of ``X`` by a nonidentity generator letter, rowwise."""
    if not action.letters:
        return np.full(len(X), np.inf)
    imgs = np.stack([m.apply(X) for _, m in action.letters])
    d = action.space.rowwise(imgs, np.broadcast_to(X, imgs.shape))
    return d.min(axis=0)


def rho(action: ActionSystem, x, initial: float | None = None, max_doublings: int = 12) -> MarginValue:
    """Minimal displacement ``min d(gx, x)`` over enumerated ``g != 1``."""
    X = _as_array(action, x)
    if not action.letters:
        return MarginValue(np.inf, None, True)
    d0 = float(action.dist_to_base(X)[0])
    R = initial if initial is not None else max(float(_generator_displacement(action, X)[0]), 1e-3)
    for _ in range(max_doublings + 1):
        idx = action.candidates(R + 2 * d0)
        idx = idx[idx != 0]  # element 0 is the identity
        if len(idx):
            imgs = action.images(X, idx)[:, 0, :]
            d = action.space.rowwise(imgs, np.broadcast_to(X, imgs.shape))
            j = int(np.argmin(d))
            if d[j] <= R + TOL:
                return MarginValue(float(d[j]), action.element(idx[j]), action.complete)
        R *= 2
    raise InconclusiveMarginError(f"no nontrivial element moves {x} less than {R / 2:.3g}")


def rho_many(action: ActionSystem, X) -> np.ndarray:
    """Vectorized margin values for the rows of ``X``."""
    X = np.asarray(X, float).reshape(-1, 2)
    out = np.empty(len(X))
    for s in range(0, len(X), _CHUNK):
        Xc = X[s:s + _CHUNK]
        R = _generator_displacement(action, Xc)
        d0 = action.dist_to_base(Xc)
        idx = action.candidates(float(np.max(R + 2 * d0)))
        idx = idx[idx != 0]  # element 0 is the identity
        if not len(idx):
            out[s:s + _CHUNK] = np.inf
            continue
        imgs = action.images(Xc, idx)
        d = action.space.rowwise(imgs, np.broadcast_to(Xc, imgs.shape))
        out[s:s + _CHUNK] = d.min(axis=0)
    return out


def quotient_distance(action: ActionSystem, x, y) -> float:
    """``d_G([x], [y]) = min_g d(x, g y)``.

    Any minimizer satisfies ``d(x, gy) <= d(x, y)``, so only elements moving
    ``y`` into ``B(x, d(x, y))`` are inspected.
    """
    X, Y = _as_array(action, x), _as_array(action, y)
    return float(quotient_distance_rows(action, X, Y)[0])


def quotient_distance_rows(action: ActionSystem, X, Y) -> np.ndarray:
    X = np.asarray(X, float).reshape(-1, 2)
    Y = np.asarray(Y, float).reshape(-1, 2)
    out = np.empty(len(X))
    for s in range(0, len(X), _CHUNK):
        Xc, Yc = X[s:s + _CHUNK], Y[s:s + _CHUNK]
        reach = action.space.rowwise(Xc, Yc) + action.dist_to_base(Xc) + action.dist_to_base(Yc)
        idx = action.candidates(float(np.max(reach)))
        imgs = action.images(Yc, idx)
        d = action.space.rowwise(imgs, np.broadcast_to(Xc, imgs.shape))
        out[s:s + _CHUNK] = d.min(axis=0)
    return out


class QuotientMetric:
    """Distances on ``X/G`` evaluated through representatives.

    ``distances_to(P, q, cutoff)`` is exact wherever the true value is at
    most ``cutoff``; larger values are reported as some number above it.
    """

    def __init__(self, action: ActionSystem):
        self.action = action
        self.space = action.space

    def distances_to(self, P, q, cutoff: float) -> np.ndarray:
        P = np.asarray(P, float).reshape(-1, 2)
        q = np.asarray(q, float).reshape(1, 2)
        reach = cutoff + float(np.max(self.action.dist_to_base(P))) + float(self.action.dist_to_base(q)[0])
        idx = self.action.candidates(reach)
        imgs = self.action.images(q, idx)[:, 0, :]
        return self.space.pairwise(P, imgs).min(axis=1)


@dataclass
class LocalIsometryReport:
    center: tuple
    radius: float
    trials: int
    max_deviation: float
    passed: bool
    complete: bool

    def to_json(self):
        return {"center": list(self.center), "radius": self.radius, "trials": self.trials,
                "max_deviation": self.max_deviation, "passed": self.passed, "complete": self.complete}


def verify_local_isometry(action: ActionSystem, x, trials: int, seed: int,
                          tolerance: float = 1e-9) -> LocalIsometryReport:
    """Check that ``d_G`` equals ``d`` on the ball ``B(x, rho(x)/8)``."""
    x = action.space.coerce(x)
    nontrivial = [g for g in action.stabilizer(x) if not g.is_identity]
    if nontrivial:
        raise NotFreeError(f"{x} is fixed by {nontrivial[0].word_string(action.names)}")
    margin = rho(action, x)
    if margin.value <= 1e-6:
        raise NotFreeError(f"margin at {x} is {margin.value:.3g}")
    radius = margin.value / 8
    if trials == 0:
        return LocalIsometryReport(tuple(x), radius, 0, 0.0, True, action.complete)
    # with no nontrivial elements every ball is isometric; sample a unit ball
    sample_radius = radius if np.isfinite(radius) else 1.0
    pts = action.space.sample_ball(x, sample_radius, 2 * trials, seed).points
    Y, Z = pts[:trials], pts[trials:]
    dq = quotient_distance_rows(action, Y, Z)
    d = action.space.rowwise(Y, Z)
    dev = float(np.max(np.abs(dq - d)))
    return LocalIsometryReport(tuple(x), radius, trials, dev, dev <= tolerance, action.complete)
