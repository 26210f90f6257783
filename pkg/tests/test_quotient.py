import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fundom import fixtures
from fundom.geometry import GraphPoint
from fundom.quotient import (NotFreeError, QuotientMetric, quotient_distance, quotient_distance_rows, rho, rho_many,
                             verify_local_isometry)

seeds = st.integers(0, 2**31 - 1)


def torus_oracle(x, y):
    # minimum over the 25 nearest translates of y
    return min(math.hypot(x[0] - y[0] - a, x[1] - y[1] - b) for a in range(-2, 3) for b in range(-2, 3))


def test_torus_example(torus):
    assert quotient_distance(torus, (0.9, 0.2), (0.1, 0.1)) == pytest.approx(math.sqrt(0.05), abs=1e-12)


def test_same_orbit_is_zero(torus, klein):
    assert quotient_distance(torus, (0.3, 0.4), (2.3, -1.6)) == pytest.approx(0.0, abs=1e-12)
    glide = klein.element(klein.candidates(1.0)[1])
    y = klein.apply(glide, (0.3, 0.2))
    assert quotient_distance(klein, (0.3, 0.2), y) == pytest.approx(0.0, abs=1e-12)


def test_cross_example(cross):
    assert quotient_distance(cross, GraphPoint(0, 1.0), GraphPoint(2, 0.5)) == pytest.approx(0.5)


def test_rho_examples(torus, cross, trivial):
    m = rho(torus, (0.3, 0.7))
    assert m.value == pytest.approx(1.0)
    assert not m.element.is_identity
    assert rho(cross, GraphPoint(0, 0.0)).value == pytest.approx(0.0)
    assert rho(cross, GraphPoint(0, 0.25)).value == pytest.approx(0.5)
    assert rho(trivial, (0.0, 0.0)).value == math.inf


def test_rho_attaining_element(schottky):
    x = (0.2, -0.1)
    m = rho(schottky, x)
    gx = schottky.apply(m.element, x)
    assert schottky.space.distance(gx, x) == pytest.approx(m.value, abs=1e-9)


def test_rho_many_matches_rho(klein):
    P = klein.space.sample_ball((0.0, 0.0), 2.0, 50, 3).points
    many = rho_many(klein, P)
    assert np.allclose(many, [rho(klein, tuple(p)).value for p in P])


def test_local_isometry_torus(torus):
    rep = verify_local_isometry(torus, (0.5, 0.5), 1000, 1)
    assert rep.passed and rep.max_deviation <= 1e-9
    assert rep.radius == pytest.approx(1 / 8)


def test_local_isometry_schottky(schottky):
    rep = verify_local_isometry(schottky, (0.0, 0.0), 500, 2)
    assert rep.passed
    assert not rep.complete


def test_local_isometry_vacuous_and_non_free(torus, cross):
    assert verify_local_isometry(torus, (0.0, 0.0), 0, 1).passed
    with pytest.raises(NotFreeError):
        verify_local_isometry(cross, GraphPoint(0, 0.0), 10, 1)


def test_quotient_metric_cutoff(torus):
    qm = QuotientMetric(torus)
    P = torus.space.sample_ball((0, 0), 3.0, 100, 4).points
    d = qm.distances_to(P, np.array([0.25, 0.5]), cutoff=1.0)
    exact = np.array([torus_oracle(p - np.floor(p), (0.25, 0.5)) for p in P])
    assert np.allclose(d, exact)


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_torus_matches_translate_oracle(seed):
    torus = fixtures.torus()
    P = torus.space.sample_ball((0, 0), 3.0, 100, seed).points
    Q = torus.space.sample_ball((0.5, 0.5), 3.0, 100, seed + 1).points
    got = quotient_distance_rows(torus, P, Q)
    want = [torus_oracle(p - np.floor(p), q - np.floor(q)) for p, q in zip(P, Q)]
    assert np.allclose(got, want, atol=1e-9)


@settings(max_examples=10, deadline=None)
@given(seeds, st.sampled_from(["torus", "klein", "schottky"]))
def test_pseudometric_properties(seed, name):
    action = fixtures.load(name)
    sp = action.space
    P, Q, R = (sp.sample_ball((0.0, 0.0), 1.5, 60, seed + k).points for k in range(3))
    dpq = quotient_distance_rows(action, P, Q)
    dqp = quotient_distance_rows(action, Q, P)
    dpr = quotient_distance_rows(action, P, R)
    dqr = quotient_distance_rows(action, Q, R)
    assert np.allclose(dpq, dqp, atol=1e-9)
    assert np.all(dpr <= dpq + dqr + 1e-9)
    assert np.all(dpq <= sp.rowwise(P, Q) + 1e-9)


@settings(max_examples=10, deadline=None)
@given(seeds, st.sampled_from(["torus", "klein", "schottky"]))
def test_margin_is_two_lipschitz(seed, name):
    action = fixtures.load(name)
    sp = action.space
    P = sp.sample_ball((0.0, 0.0), 1.5, 100, seed).points
    Q = sp.sample_ball((0.0, 0.0), 1.5, 100, seed + 1).points
    dq = quotient_distance_rows(action, P, Q)
    assert np.all(np.abs(rho_many(action, P) - rho_many(action, Q)) <= 2 * dq + 1e-9)


@settings(max_examples=10, deadline=None)
@given(seeds, st.sampled_from(["torus", "klein", "schottky"]))
def test_quotient_distance_is_invariant(seed, name):
    action = fixtures.load(name)
    sp = action.space
    P = sp.sample_ball((0.0, 0.0), 1.0, 40, seed).points
    Q = sp.sample_ball((0.0, 0.0), 1.0, 40, seed + 1).points
    base = quotient_distance_rows(action, P, Q)
    for g in action.candidates(2 * action.max_generator_displacement())[1:4]:
        gP = action.images(P, [g])[0]
        assert np.allclose(quotient_distance_rows(action, gP, Q), base, atol=1e-9)
