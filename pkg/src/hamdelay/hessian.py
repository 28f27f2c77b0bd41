"""Hessian of the action at a critical point, computed two independent ways.

The direct route linearizes the critical equation on periodic fields with
Fourier collocation. The reduced route untwists periodic fields by the
linearized flow, ``xi(t) = Psi(t)^{-1} eta(t)``, which turns the kernel
problem into a twisted-loop operator (see :mod:`hamdelay.operator`).
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from .core import FieldAlongLoop, Loop, TimeGrid, apply_J, flow_with_variations, fourier_diff_matrix, symplectic_inverse
from .exceptions import DomainError, NumericalError, PreconditionError
from .operator import OperatorSpec, default_atol, numerical_nullity, operator_nullity
from .pair import MeanValue, critical_residual, frozen_field, frozen_jacobian, is_commuting, mean_value

DEFAULT_TOL = 1e-8


@dataclass(frozen=True)
class CriticalPoint:
    pair: object
    loop: Loop
    mean: MeanValue
    residual_norm: float
    covector: np.ndarray

    @property
    def hessian_f(self):
        return np.atleast_2d(self.pair.f_hess(self.mean.value))


def make_critical_point(pair, loop, tol=DEFAULT_TOL):
    """Validate ``loop`` as a critical point of ``pair`` and wrap it.

    Raises :class:`PreconditionError` when the sup-norm critical residual
    exceeds ``tol``.
    """
    mean = mean_value(pair, loop)
    if not mean.in_domain:
        raise DomainError(f"mean value {mean.value} lies outside W")
    res = critical_residual(pair, loop).sup_norm()
    if not res <= tol:
        raise PreconditionError(f"loop is not critical: residual {res:.3e} > {tol:.1e}")
    return CriticalPoint(pair, loop, mean, res, np.atleast_1d(pair.f_grad(mean.value)))


def residual_jacobian(pair, loop):
    """Jacobian of the collocated critical residual at ``loop``.

    Acts on periodic fields flattened as ``(N, 2n)`` row-major:

        eta' - J sum_i c_i Hess H_i(u) eta - sum_ij a_ij delta_j(eta) J grad H_i(u)

    with ``delta_j(eta) = int <grad H_j(u), eta>``. No criticality check.
    """
    u = loop.samples
    N, d = u.shape
    mean = mean_value(pair, loop).value
    c = np.atleast_1d(pair.f_grad(mean))
    a = np.atleast_2d(pair.f_hess(mean))
    local = frozen_jacobian(pair, c)(0.0, u)
    M = np.kron(fourier_diff_matrix(N), np.eye(d))
    for k in range(N):
        M[k * d:(k + 1) * d, k * d:(k + 1) * d] -= local[k]
    grads = pair.H_grad(u)
    fields = apply_J(grads)
    left = np.einsum("ij,kid->kdj", a, fields).reshape(N * d, -1)
    right = grads.transpose(1, 0, 2).reshape(pair.m, N * d) / N
    return M - left @ right


def direct_hessian(cp):
    """Dense direct Hessian matrix on periodic fields; see :func:`residual_jacobian`."""
    if not isinstance(cp, CriticalPoint):
        raise PreconditionError("direct_hessian needs a validated CriticalPoint")
    return residual_jacobian(cp.pair, cp.loop)


@dataclass(frozen=True)
class ReducedOperator:
    """A reduced operator plus the linearized flow used to build it.

    ``psi_nodes[k]`` is ``Psi(k/N)`` for ``k = 0..N`` (the last entry is the
    monodromy).
    """

    spec: OperatorSpec
    psi_nodes: np.ndarray


def _reduce(cp, N, substeps):
    pair = cp.pair
    c = cp.covector
    x0 = cp.loop.samples[0]
    steps = 2 * N * substeps
    times, traj, psi = flow_with_variations(
        frozen_field(pair, c), frozen_jacobian(pair, c), x0, steps=steps, sample_every=substeps
    )
    mono = psi[-1]
    Phi = symplectic_inverse(mono)
    mid_psi_inv = symplectic_inverse(psi[1::2])
    fields = apply_J(pair.H_grad(traj[1::2]))  # (N, m, 2n)
    Ys = apply_J(np.einsum("kab,kib->kia", mid_psi_inv, fields)).transpose(1, 0, 2)
    A = cp.hessian_f
    A = 0.5 * (A + A.T)
    return ReducedOperator(OperatorSpec(Phi, Ys, A, TimeGrid(N), symplectic_atol=1e-6), psi[0::2])


def reduce_to_operator(cp, N=None, substeps=2, return_flow=False):
    """Reduced twisted-loop operator at a critical point.

    ``Phi = Psi(1)^{-1}``, ``A = d^2 f(mean)`` and
    ``Y_i(t) = J Psi(t)^{-1} X_{H_i}(u(t))``, with ``Psi`` the linearized flow
    of the frozen field from ``u(0)`` integrated by RK4 with ``2 N substeps``
    steps. ``Y_i`` is sampled at cell midpoints. The returned spec carries a
    ``resample`` hook for grid refinement.
    """
    N = cp.loop.grid.N if N is None else int(N)
    red = _reduce(cp, N, substeps)
    if not np.all(np.isfinite(red.spec.Phi)):
        raise NumericalError("monodromy is not finite")
    spec = red.spec
    object.__setattr__(spec, "resample", lambda N2: _reduce(cp, N2, substeps).spec)
    return red if return_flow else spec


@dataclass
class NullityReport:
    nullity_direct: int
    nullity_reduced: int
    bound_general: int
    bound_commuting: Optional[int]
    commuting: bool
    spectra: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    refinement: Optional[dict] = None

    @property
    def routes_agree(self):
        return self.nullity_direct == self.nullity_reduced

    @property
    def nullity(self):
        return self.nullity_direct

    @property
    def bound_general_satisfied(self):
        return max(self.nullity_direct, self.nullity_reduced) <= self.bound_general

    @property
    def bound_commuting_satisfied(self):
        if self.bound_commuting is None:
            return None
        return max(self.nullity_direct, self.nullity_reduced) <= self.bound_commuting

    @property
    def passed(self):
        return self.routes_agree and self.bound_general_satisfied and self.bound_commuting_satisfied is not False

    def to_dict(self):
        return {
            "nullity_direct": self.nullity_direct,
            "nullity_reduced": self.nullity_reduced,
            "routes_agree": self.routes_agree,
            "bound_general": self.bound_general,
            "bound_general_satisfied": self.bound_general_satisfied,
            "bound_commuting": self.bound_commuting,
            "bound_commuting_satisfied": self.bound_commuting_satisfied,
            "commuting": self.commuting,
            "tolerances": self.tolerances,
            "smallest_singular_values": {k: [float(s) for s in np.sort(v)[:8]] for k, v in self.spectra.items()},
            "refinement": self.refinement,
        }


def _refined_count(coarse, fine, tol, loose, ratio):
    """Kernel count that also accepts discretization-limited directions.

    A singular value counts when it is below ``tol``, or when it is below
    ``loose`` and its counterpart on the refined grid is at least ``ratio``
    times smaller (it converges to zero rather than to a positive limit).
    """
    coarse, fine = np.sort(coarse), np.sort(fine)
    count = 0
    for i, s in enumerate(coarse[: len(fine)]):
        if s < tol or (s < loose and fine[i] <= s / ratio):
            count += 1
        else:
            break
    return count


def nullity_report(cp, N=None, atol=None, rtol=1e-10, refine=True, loose=1e-2, ratio=3.0, substeps=2):
    """Nullity of the Hessian by both routes, with the general and commuting bounds attached.

    The direct route is a full SVD of :func:`direct_hessian`. The reduced
    route is the box-scheme operator from :func:`reduce_to_operator`; when
    the pair does not commute, its ``Y_i`` depend on time and kernel
    directions carry an ``O(N^-2)`` discretization error, so ``refine``
    re-runs at ``2N`` and counts singular values that shrink accordingly.
    """
    pair = cp.pair
    N_loop = cp.loop.grid.N
    atol_direct = default_atol(N_loop) if atol is None else atol
    direct = numerical_nullity(direct_hessian(cp), atol_direct, rtol)
    spec = reduce_to_operator(cp, N, substeps)
    reduced = operator_nullity(spec, atol, rtol)
    commuting = bool(is_commuting(pair))
    dim_M = pair.dim
    refinement = None
    n_reduced = reduced.nullity
    if refine:
        fine = operator_nullity(spec.resample(2 * spec.N), atol, rtol)
        n_refined = _refined_count(reduced.singular_values, fine.singular_values, reduced.tolerance_used, loose, ratio)
        refinement = {
            "N_fine": 2 * spec.N,
            "nullity_fine_strict": fine.nullity,
            "nullity_refined": n_refined,
            "smallest_coarse": [float(s) for s in np.sort(reduced.singular_values)[:8]],
            "smallest_fine": [float(s) for s in np.sort(fine.singular_values)[:8]],
        }
        n_reduced = n_refined
    return NullityReport(
        nullity_direct=direct.nullity,
        nullity_reduced=n_reduced,
        bound_general=dim_M + pair.m,
        bound_commuting=dim_M if commuting else None,
        commuting=commuting,
        spectra={"direct": direct.singular_values, "reduced": reduced.singular_values},
        tolerances={"direct": direct.tolerance_used, "reduced": reduced.tolerance_used},
        refinement=refinement,
    )


def kernel_fields(cp, atol=None, rtol=1e-10):
    """Orthonormal kernel basis of the direct Hessian as ``(k, N, 2n)`` fields."""
    M = direct_hessian(cp)
    N, d = cp.loop.samples.shape
    _, s, vt = np.linalg.svd(M)
    tol = max(default_atol(N) if atol is None else atol, rtol * s[0])
    return vt[s < tol].reshape(-1, N, d)


def untwist(red, eta):
    """``xi(t_k) = Psi(t_k)^{-1} eta(t_k)`` for a periodic field ``eta``."""
    eta = eta.samples if isinstance(eta, FieldAlongLoop) else np.asarray(eta, float)
    inv = symplectic_inverse(red.psi_nodes[:-1])
    return np.einsum("kab,kb->ka", inv, eta)


class NullityAnalyzer(BaseEstimator):
    """Estimator wrapper around :func:`nullity_report`.

    Parameters
    ----------
    N : int or None
        Grid of the reduced operator; defaults to the loop's grid.
    atol, rtol : float
        Rank thresholds; ``atol=None`` means ``1e-8 sqrt(N)``.
    refine : bool
        Grid-doubling check on the reduced route.
    """

    def __init__(self, N=None, atol=None, rtol=1e-10, refine=True):
        self.N = N
        self.atol = atol
        self.rtol = rtol
        self.refine = refine

    def fit(self, cp, y=None):
        self.report_ = nullity_report(cp, self.N, self.atol, self.rtol, self.refine)
        self.nullity_ = self.report_.nullity
        return self
