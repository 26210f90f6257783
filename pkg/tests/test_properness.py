import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fundom import fixtures
from fundom.geometry import GraphPoint, Window
from fundom.properness import (BOUNDED, GROWTH, NotWanderingError, check_transporter_finiteness,
                               find_dynamical_relation, verify_witness, wandering_radius)


def lattice_count(r):
    n = int(r) + 1
    return sum(1 for a in range(-n, n + 1) for b in range(-n, n + 1) if math.hypot(a, b) <= r + 1e-9)


def ex1_windows():
    return [Window((1.0, 1.0), 1 - 2.0 ** -m) for m in range(1, 9)]


def test_torus_transporter_counts_are_lattice_disks(torus):
    res = check_transporter_finiteness(torus, [Window((0.0, 0.0), r) for r in range(1, 6)])
    assert [c for _, c in res.table] == [lattice_count(2 * r) for r in range(1, 6)]
    assert res.verdict == BOUNDED
    assert not res.caveats


def test_torus_bounded_up_to_radius_ten(torus):
    res = check_transporter_finiteness(torus, [Window((0.5, 0.5), r) for r in (2, 4, 6, 8, 10)])
    assert res.verdict == BOUNDED


def test_schottky_bounded_up_to_radius_ten(schottky):
    res = check_transporter_finiteness(schottky, [Window((0.0, 0.0), r) for r in (2, 4, 6, 8, 10)])
    assert res.verdict == BOUNDED
    assert any("heuristic" in c for c in res.caveats)


def test_ex1_growth(ex1):
    res = check_transporter_finiteness(ex1, ex1_windows())
    counts = [c for _, c in res.table]
    assert counts[-3] < counts[-2] < counts[-1]
    assert res.verdict == GROWTH


def test_trivial_counts_one(trivial):
    res = check_transporter_finiteness(trivial, [Window((0.0, 0.0), r) for r in (1, 2, 3)])
    assert [c for _, c in res.table] == [1, 1, 1]


def test_windows_must_nest(torus):
    with pytest.raises(ValueError):
        check_transporter_finiteness(torus, [Window((0.0, 0.0), 2.0), Window((0.0, 0.0), 1.0)])
    with pytest.raises(ValueError):
        check_transporter_finiteness(torus, [Window((0.0, 0.0), 1.0), Window((5.0, 0.0), 1.5)])


def test_ex1_witness(ex1):
    w = find_dynamical_relation(ex1, (1.0, 0.0), (0.0, 1.0), 20)
    assert w is not None
    assert w.residual <= 1e-4
    assert verify_witness(ex1, w)
    words = [g.word for _, g, _, _, _ in w.steps]
    assert len(set(words)) == len(words)
    # the witnesses are inverse powers of the generator, with residuals shrinking
    assert all(set(word) <= {-1} for word in words)
    residuals = [r for _, _, _, _, r in w.steps]
    assert residuals == sorted(residuals, reverse=True)
    for n, _, xn, gxn, r in w.steps:
        tol = 2.0 ** (2 - n)
        assert r <= tol
        assert ex1.space.distance(xn, (1.0, 0.0)) <= tol + 1e-9
        assert ex1.space.distance(gxn, (0.0, 1.0)) <= tol + 1e-9


def test_no_witness_for_lattice(torus):
    assert find_dynamical_relation(torus, (0.1, 0.2), (0.7, 0.3), 20) is None


def test_no_witness_for_finite_group(cross):
    p = GraphPoint(0, 1.0)
    assert find_dynamical_relation(cross, p, p, 20) is None


def test_depth_must_be_positive(torus):
    with pytest.raises(ValueError):
        find_dynamical_relation(torus, (0, 0), (0, 0), 0)


def test_tampered_witness_is_rejected(ex1):
    w = find_dynamical_relation(ex1, (1.0, 0.0), (0.0, 1.0), 12)
    n, g, xn, gxn, r = w.steps[-1]
    w.steps[-1] = (n, g, (xn[0] + 1.0, xn[1]), gxn, r)
    assert not verify_witness(ex1, w)


def test_wandering_radius_examples(torus, cross, ex1):
    assert wandering_radius(torus, (0.3, 0.9)) == pytest.approx(0.5)
    assert wandering_radius(cross, GraphPoint(0, 1.0)) == pytest.approx(1.0)
    assert wandering_radius(ex1, (1.0, 0.0)) > 0
    with pytest.raises(NotWanderingError):
        wandering_radius(cross, GraphPoint(0, 0.0))


@settings(max_examples=15, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_wandering_ball_meets_only_stabilizer(x, y):
    torus = fixtures.torus()
    r = wandering_radius(torus, (x, y))
    hits, _ = torus.transporter(Window((x, y), r - 1e-6), Window((x, y), r - 1e-6))
    assert [g.word for g in hits] == [()]


@settings(max_examples=15, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.lists(st.floats(0.1, 1.0), min_size=2, max_size=4))
def test_transporter_counts_are_nondecreasing(x, y, steps):
    torus = fixtures.torus()
    radii = np.cumsum(steps)
    res = check_transporter_finiteness(torus, [Window((x, y), float(r)) for r in radii])
    counts = [c for _, c in res.table]
    assert counts == sorted(counts)
