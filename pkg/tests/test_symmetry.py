from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import circle_loop
from hamdelay.core import Loop, TimeGrid
from hamdelay.exceptions import InvalidArgumentError
from hamdelay.pair import action, critical_residual, mean_value
from hamdelay.solver import SolveConfig
from hamdelay.symmetry import (
    IDENTITY,
    MonoidElement,
    act,
    compose,
    proposition_check,
    pullback_pair,
    solve_pulled_back,
)
from hamdelay.systems import example2_harmonic

nonzero = st.integers(-4, 4).filter(bool)
fractions = st.fractions(0, 1, max_denominator=50)


def elements(r=fractions):
    return st.builds(MonoidElement, nonzero, r)


def rough_loop(N, seed=0):
    rng = np.random.default_rng(seed)
    t = TimeGrid(N).nodes
    k = np.arange(1, 4)
    a = rng.standard_normal((3, 2))
    return Loop(N, np.cos(2 * np.pi * np.outer(t, k)) @ a + np.sin(2 * np.pi * np.outer(t, 2 * k)) @ a)


def test_compose_example():
    g = compose(MonoidElement(2, 0.1), MonoidElement(3, 0.2))
    assert g.n == 6 and np.isclose(float(g.r), 0.5)
    assert compose(IDENTITY, MonoidElement(5, 0.25)) == MonoidElement(5, 0.25)


def test_invalid_element():
    with pytest.raises(InvalidArgumentError):
        MonoidElement(0, 0.1)
    with pytest.raises(InvalidArgumentError):
        MonoidElement(1.5, 0.1)


def test_shift_normalized():
    assert MonoidElement(1, Fraction(5, 4)).r == Fraction(1, 4)
    assert MonoidElement(2, -0.25).r == 0.75


@settings(max_examples=100, deadline=None)
@given(elements(), elements(), elements())
def test_associativity_exact(a, b, c):
    assert compose(compose(a, b), c) == compose(a, compose(b, c))


@settings(max_examples=50, deadline=None)
@given(elements(st.floats(0, 1, exclude_max=True)), elements(st.floats(0, 1, exclude_max=True)),
       elements(st.floats(0, 1, exclude_max=True)))
def test_associativity_float(a, b, c):
    left, right = compose(compose(a, b), c), compose(a, compose(b, c))
    assert left.n == right.n
    d = abs(float(left.r) - float(right.r))
    assert min(d, 1 - d) <= 1e-12


def test_identity_action():
    u = rough_loop(32)
    assert np.allclose(act(IDENTITY, u).samples, u.samples, atol=1e-13)


def test_doubling_action():
    u = circle_loop(64)
    assert np.allclose(act(MonoidElement(2, 0.0), u).samples, circle_loop(64, winding=2).samples, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(elements(), elements())
def test_action_composes(a, b):
    u = rough_loop(64, seed=3)
    lhs = act(a, act(b, u)).samples
    rhs = act(compose(b, a), u).samples
    assert np.allclose(lhs, rhs, atol=1e-10)


def test_linear_fallback_is_rough():
    u = rough_loop(256)
    g = MonoidElement(2, 0.3)
    err = np.max(np.abs(act(g, u, method="linear").samples - act(g, u).samples))
    assert 0 < err < 1e-2
    with pytest.raises(InvalidArgumentError):
        act(g, u, method="cubic")


@settings(max_examples=20, deadline=None)
@given(elements())
def test_mean_and_action_invariance(g):
    pair = example2_harmonic().pair
    u = rough_loop(64, seed=7)
    v = act(g, u)
    assert np.allclose(mean_value(pair, v).value, mean_value(pair, u).value, atol=1e-10)
    # the area scales by n while the pulled-back f is divided by n
    assert np.isclose(action(pair, v), g.n * action(pullback_pair(g, pair), u), atol=1e-8)


def test_pullback_scaling():
    pair = example2_harmonic().pair
    assert pullback_pair(MonoidElement(1, 0.4), pair) is pair
    half = pullback_pair(MonoidElement(2, 0.0), pair)
    x = np.array([3.0])
    assert np.isclose(half.f(x), pair.f(x) / 2)
    assert np.allclose(half.f_grad(x), pair.f_grad(x) / 2)


def test_time_shift_preserves_criticality(example2_cp):
    rep = proposition_check(example2_cp.pair, MonoidElement(1, 0.37), example2_cp.loop)
    assert rep.critical_pullback and rep.critical_acted and rep.agreement


def test_non_critical_loops_agree():
    pair = example2_harmonic().pair
    for seed in range(5):
        rep = proposition_check(pair, MonoidElement(2, 0.3), rough_loop(64, seed))
        assert not rep.critical_pullback and not rep.critical_acted and rep.agreement


def test_equivariance_of_solution():
    system = example2_harmonic()
    g = MonoidElement(3, 0.1)
    cp = solve_pulled_back(system, g, config=SolveConfig(N=64))
    acted = critical_residual(system.pair, act(g, cp.loop)).sup_norm()
    assert acted <= max(10 * cp.residual_norm, 1e-9)
    assert np.isclose(cp.mean.value[0], 2 * np.pi * 3, atol=1e-8)


def test_reversal_reported():
    system = example2_harmonic()
    cp = solve_pulled_back(system, MonoidElement(2, 0.3), config=SolveConfig(N=64))
    rep = proposition_check(system.pair, MonoidElement(-1, 0.0), cp.loop)
    assert set(rep.to_dict()) >= {"residual_pullback", "residual_acted", "agreement"}
