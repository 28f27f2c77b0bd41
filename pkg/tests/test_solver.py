from dataclasses import replace

import numpy as np
import pytest
from sklearn.base import clone

from hamdelay.core import complex_structure
from hamdelay.exceptions import DomainExitError, InvalidArgumentError, SolverFailure
from hamdelay.pair import action, critical_residual, frozen_field, frozen_jacobian, mean_value
from hamdelay.solver import (
    SelfConsistentSolver,
    SolveConfig,
    bov_second_order_residual,
    bov_solve,
    loop_radius,
    periodic_orbit,
    self_consistent_solve,
    solve_system,
)
from hamdelay.systems import (
    bov_radius,
    example1_linear,
    example2_harmonic,
    example3_helium,
    example5_coupled_oscillators,
)

J = complex_structure(1)


def test_periodic_orbit_of_rotation():
    c = 2 * np.pi
    loop = periodic_orbit(lambda t, x: c * J @ x, lambda t, x: c * J, [3.5, 0.0], SolveConfig(N=64))
    assert np.allclose(np.linalg.norm(loop.samples, axis=1), 3.5, atol=1e-8)


def test_periodic_orbit_trivial_cases():
    loop = periodic_orbit(lambda t, x: 0 * x, lambda t, x: np.zeros((2, 2)), [1.0, 2.0], SolveConfig(N=16))
    assert np.allclose(loop.samples, [1.0, 2.0])
    # frequency 1: the only 1-periodic orbit is the origin
    loop = periodic_orbit(lambda t, x: J @ x, lambda t, x: J.astype(float), [0.3, 0.1], SolveConfig(N=16))
    assert np.allclose(loop.samples, 0.0, atol=1e-10)


def test_example2_from_nearby_start():
    cp = self_consistent_solve(example2_harmonic().pair, SolveConfig(N=64, mu0=(6.0,), guess=(np.sqrt(12.0), 0.0)))
    assert abs(cp.mean.value[0] - 2 * np.pi) <= 1e-8
    assert abs(loop_radius(cp) - 2 * np.sqrt(np.pi)) <= 1e-6
    assert np.isclose(action(cp.pair, cp.loop), 2 * np.pi**2, atol=1e-8)


def test_example5_means(example5_cp):
    expected = np.linalg.solve([[1.0, 0.1], [0.1, 1.0]], 2 * np.pi * np.ones(2))
    assert np.allclose(example5_cp.mean.value, expected, atol=1e-8)


def test_mean_is_self_consistent(example2_cp):
    cp = example2_cp
    assert np.array_equal(mean_value(cp.pair, cp.loop).value, cp.mean.value)
    assert critical_residual(cp.pair, cp.loop).sup_norm() <= 1e-8


def test_bov_radius_and_domain():
    cp = bov_solve(2, SolveConfig(N=64))
    assert abs(loop_radius(cp, positions_only=True) - bov_radius(2)) <= 1e-6
    assert cp.mean.value[0] > 0
    assert bov_second_order_residual(cp) <= 1e-8
    with pytest.raises(InvalidArgumentError):
        bov_solve(0)


def test_fixed_point_method_on_linear_f():
    cfg = SolveConfig(N=64, method="fixed-point")
    cp = solve_system(example1_linear(c=5.0, beta=0.5), 1, cfg)
    ref = solve_system(example1_linear(c=5.0, beta=0.5), 1, SolveConfig(N=64))
    assert np.allclose(cp.mean.value, ref.mean.value, atol=1e-9)


def test_fixed_point_collapses_on_example2():
    # the damped iteration drifts to the trivial critical point at the origin
    cp = solve_system(example2_harmonic(), 1, SolveConfig(N=64, method="fixed-point"))
    assert abs(cp.mean.value[0]) < 1e-8


def test_failure_carries_history():
    cfg = SolveConfig(N=64, max_outer=1, mu0=(2.0,), guess=(2.0, 0.0))
    with pytest.raises(SolverFailure) as info:
        self_consistent_solve(example2_harmonic().pair, cfg)
    assert np.isfinite(info.value.residual)
    assert info.value.history


def test_domain_exit():
    pair = replace(example2_harmonic().pair, in_W=lambda x: bool(x[0] < 6.0))
    with pytest.raises(DomainExitError):
        self_consistent_solve(pair, SolveConfig(N=64, mu0=(5.9,), guess=(np.sqrt(11.8), 0.0)))
    with pytest.raises(DomainExitError):
        self_consistent_solve(pair, SolveConfig(N=64, mu0=(7.0,), guess=(1.0, 0.0)))


def test_helium_collision_orbit_reports_failure():
    with pytest.raises(SolverFailure):
        solve_system(example3_helium(), 1, SolveConfig(N=64, max_outer=20))


def test_bad_initial_data():
    with pytest.raises(InvalidArgumentError):
        self_consistent_solve(example2_harmonic().pair, SolveConfig(N=32))
    with pytest.raises(InvalidArgumentError):
        self_consistent_solve(example2_harmonic().pair, SolveConfig(N=32, mu0=(1.0, 2.0), guess=(1.0, 0.0)))


def test_determinism():
    a = solve_system(example5_coupled_oscillators(), 1, SolveConfig(N=32))
    b = solve_system(example5_coupled_oscillators(), 1, SolveConfig(N=32))
    assert np.array_equal(a.loop.samples, b.loop.samples)


def test_frozen_field_is_hamiltonian(example2_cp):
    field = frozen_field(example2_cp.pair, example2_cp.covector)
    jac = frozen_jacobian(example2_cp.pair, example2_cp.covector)
    x = example2_cp.loop.samples[:3]
    # J times a symmetric matrix is infinitesimally symplectic
    for m in jac(0.0, x):
        assert np.allclose(m.T @ J + J @ m, 0.0)
    assert field(0.0, x).shape == x.shape


def test_estimator_interface():
    est = SelfConsistentSolver(N=64)
    assert clone(est).get_params()["N"] == 64
    est.fit(example2_harmonic())
    assert abs(est.mean_[0] - 2 * np.pi) <= 1e-8
    assert est.residual_ <= 1e-8
    est2 = SelfConsistentSolver(N=64, mu0=6.0, guess=(np.sqrt(12.0), 0.0)).fit(example2_harmonic().pair)
    assert np.allclose(est2.loop_.samples.shape, (64, 2))
