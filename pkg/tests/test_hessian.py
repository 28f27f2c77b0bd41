import numpy as np
import pytest
from sklearn.base import clone

from conftest import circle_loop
from hamdelay.core import flow_with_variations, omega
from hamdelay.exceptions import PreconditionError
from hamdelay.hessian import (
    CriticalPoint,
    NullityAnalyzer,
    direct_hessian,
    kernel_fields,
    make_critical_point,
    nullity_report,
    reduce_to_operator,
    residual_jacobian,
    untwist,
)
from hamdelay.operator import apply, operator_nullity
from hamdelay.pair import critical_residual, frozen_field, frozen_jacobian
from hamdelay.solver import SolveConfig, solve_system
from hamdelay.systems import example1_linear, example2_harmonic


@pytest.fixture(scope="module")
def anharmonic_cp():
    return solve_system(example1_linear(c=5.0, beta=0.5), 1, SolveConfig(N=64))


def test_rejects_non_critical_loop():
    with pytest.raises(PreconditionError):
        make_critical_point(example2_harmonic().pair, circle_loop(32, radius=1.0))
    with pytest.raises(PreconditionError):
        direct_hessian("not a critical point")


def test_residual_jacobian_matches_finite_differences(rng):
    pair = example2_harmonic().pair
    u = circle_loop(32, radius=3.0, phase=0.4)
    M = residual_jacobian(pair, u)
    v = rng.standard_normal(u.samples.shape)
    eps = 1e-6
    from hamdelay.core import Loop

    rp = critical_residual(pair, Loop(32, u.samples + eps * v)).samples
    rm = critical_residual(pair, Loop(32, u.samples - eps * v)).samples
    assert np.allclose(M @ v.ravel(), ((rp - rm) / (2 * eps)).ravel(), atol=1e-5)


def test_direct_hessian_zero_field(example2_cp):
    M = direct_hessian(example2_cp)
    assert np.allclose(M @ np.zeros(M.shape[1]), 0.0)


def test_time_derivative_in_kernel(example2_cp):
    M = direct_hessian(example2_cp)
    udot = example2_cp.loop.derivative()
    assert np.max(np.abs(M @ udot.ravel())) <= 1e-6 * np.max(np.abs(udot))


def test_example1_matches_monodromy_oracle(anharmonic_cp):
    cp = anharmonic_cp
    c = cp.covector
    _, _, psi = flow_with_variations(frozen_field(cp.pair, c), frozen_jacobian(cp.pair, c),
                                     cp.loop.samples[0], steps=4096, sample_every=4096)
    s = np.linalg.svd(psi[-1] - np.eye(2), compute_uv=False)
    oracle = int(np.sum(s < 1e-6))
    rep = nullity_report(cp)
    assert oracle == 1
    assert rep.nullity_direct == rep.nullity_reduced == oracle


def test_example1_no_orbit_branch():
    # c not a multiple of 2 pi and beta = 0: only the constant loop at the origin
    pair = example1_linear(c=5.0).pair
    from hamdelay.core import Loop

    cp = make_critical_point(pair, Loop(32, np.zeros((32, 2))))
    assert nullity_report(cp).nullity == 0


def test_reduced_commuting_structure(example5_cp):
    spec = reduce_to_operator(example5_cp)
    drift = np.max(np.abs(spec.Ys - spec.Ys[:, :1, :]))
    assert drift <= 1e-6
    Y0 = spec.Ys[:, 0, :]
    assert max(abs(omega(Y0[i], Y0[j])) for i in range(spec.m) for j in range(spec.m)) <= 1e-6


def test_linear_f_has_no_nonlocal_term(anharmonic_cp):
    spec = reduce_to_operator(anharmonic_cp)
    assert np.all(spec.A == 0)
    s = np.linalg.svd(spec.Phi - np.eye(2), compute_uv=False)
    assert operator_nullity(spec).nullity == int(np.sum(s < 1e-6))


@pytest.mark.parametrize("name", ["example2_cp", "bov_cp", "example5_cp"])
def test_report_bounds_and_agreement(name, request):
    rep = nullity_report(request.getfixturevalue(name))
    assert rep.routes_agree and rep.passed
    assert rep.bound_general_satisfied and rep.bound_commuting_satisfied is not False
    d = rep.to_dict()
    assert d["nullity_direct"] == rep.nullity_direct


def test_kernel_fields_untwist(bov_cp):
    red = reduce_to_operator(bov_cp, return_flow=True)
    etas = kernel_fields(bov_cp)
    assert len(etas) == nullity_report(bov_cp).nullity
    for eta in etas:
        xi = untwist(red, eta)
        assert np.allclose(xi[0], eta[0], atol=1e-14)  # Psi(0) = I
        image = apply(red.spec, xi).samples
        assert np.sqrt(np.mean(np.sum(image**2, axis=1))) <= 1e-5


def test_nullity_analyzer(example2_cp):
    est = NullityAnalyzer(refine=False)
    assert clone(est).get_params()["refine"] is False
    est.fit(example2_cp)
    assert est.nullity_ == 1
    assert isinstance(example2_cp, CriticalPoint)
