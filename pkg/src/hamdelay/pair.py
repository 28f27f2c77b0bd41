"""Pairs ``(f, H)``: mean values, the action functional and its critical residual.

A pair couples a vector-valued Hamiltonian ``H: R^{2n} -> R^m`` with a
scalar function ``f`` on an open set ``W`` of R^m. Critical points of

    A(u) = area(u) - f(mean_t H(u(t)))

are loops solving ``u' = X_{c.H}(u)`` with covector ``c = df(mean H(u))``.
All callbacks are vectorized over leading axes.
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from ._validation import check_random_state
from .core import Loop, FieldAlongLoop, apply_J, quadrature
from .exceptions import DomainError, InvalidArgumentError


def _always(_x):
    return True


def _default_sampler(rng, count, dim):
    return rng.standard_normal((count, dim))


@dataclass(frozen=True)
class PairSpec:
    """A pair ``F = (f, H)`` with analytic first and second derivatives.

    Parameters
    ----------
    n : int
        Half the phase-space dimension.
    m : int
        Dimension of the value space ``V``.
    H, H_grad, H_hess : callable
        ``(..., 2n) -> (..., m)``, ``(..., m, 2n)`` and ``(..., m, 2n, 2n)``.
    f, f_grad, f_hess : callable
        ``(m,) -> float``, ``(m,)`` and ``(m, m)``.
    in_W : callable
        Membership predicate of the open set ``W``.
    commuting : bool or None
        ``True`` when the pair is commuting by construction.
    sampler : callable or None
        ``(rng, count) -> (count, 2n)`` points inside the phase space, used by
        the randomized self-checks. Defaults to standard normal samples.
    """

    n: int
    m: int
    H: Callable
    H_grad: Callable
    H_hess: Callable
    f: Callable
    f_grad: Callable
    f_hess: Callable
    in_W: Callable = _always
    name: str = ""
    commuting: Optional[bool] = None
    sampler: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    @property
    def dim(self):
        return 2 * self.n

    def sample_points(self, rng, count):
        if self.sampler is not None:
            return np.asarray(self.sampler(rng, count), dtype=float)
        return _default_sampler(rng, count, self.dim)

    def scaled(self, factor, name=None):
        """Pair ``(factor * f, H)`` on the same ``W``."""
        f, g, hs = self.f, self.f_grad, self.f_hess
        return replace(
            self,
            f=lambda x: factor * f(x),
            f_grad=lambda x: factor * np.asarray(g(x)),
            f_hess=lambda x: factor * np.asarray(hs(x)),
            name=name or self.name,
        )


@dataclass(frozen=True)
class MeanValue:
    value: np.ndarray
    in_domain: bool


@dataclass(frozen=True)
class CommutingReport:
    commuting: bool
    max_bracket: float
    by_construction: bool = False

    def __bool__(self):
        return self.commuting


def _loop_dim_check(pair, u):
    if u.dim != pair.dim:
        raise InvalidArgumentError(f"loop lives in R^{u.dim}, pair expects R^{pair.dim}")


def mean_value(pair, u):
    """Componentwise periodic quadrature of ``H(u(t))``."""
    _loop_dim_check(pair, u)
    value = quadrature(pair.H(u.samples))
    return MeanValue(value=np.atleast_1d(value), in_domain=bool(pair.in_W(value)))


def _checked_mean(pair, u):
    mean = mean_value(pair, u)
    if not mean.in_domain:
        raise DomainError(f"mean value {mean.value} lies outside W")
    return mean.value


def symplectic_area(u):
    """``1/2 int omega(u, u')`` which equals the integral over any filling disk."""
    du = u.derivative()
    return 0.5 * float(quadrature(np.sum(apply_J(u.samples) * du, axis=1)))


def action(pair, u):
    mu = _checked_mean(pair, u)
    return symplectic_area(u) - float(pair.f(mu))


def frozen_field(pair, c):
    """Autonomous field ``X_{c.H}(x) = J sum_i c_i grad H_i(x)``."""
    c = np.asarray(c, dtype=float)

    def X(_t, x):
        return apply_J(np.einsum("i,...ij->...j", c, pair.H_grad(x)))

    return X


def frozen_jacobian(pair, c):
    """Derivative of :func:`frozen_field`, ``J sum_i c_i Hess H_i(x)``."""
    c = np.asarray(c, dtype=float)
    n = pair.n

    def DX(_t, x):
        hess = np.einsum("i,...ijk->...jk", c, pair.H_hess(x))
        return np.concatenate([-hess[..., n:, :], hess[..., :n, :]], axis=-2)

    return DX


def critical_residual(pair, u):
    """``u' - X_{df(mean H(u)).H}(u)`` sampled on the loop's grid."""
    mu = _checked_mean(pair, u)
    c = pair.f_grad(mu)
    r = u.derivative() - frozen_field(pair, c)(0.0, u.samples)
    return FieldAlongLoop(u.grid, r)


def classical_residual(grad_G, u):
    """Residual ``u' - J grad G(u)`` of an ordinary Hamiltonian ``G``."""
    return FieldAlongLoop(u.grid, u.derivative() - apply_J(grad_G(u.samples)))


def action_gradient_pairing(pair, u, v):
    """Directional derivative of the action predicted by the residual.

    Equals ``-int omega(r, v)`` with ``r`` the critical residual.
    """
    r = critical_residual(pair, u).samples
    return -float(quadrature(np.sum(apply_J(r) * np.asarray(v.samples if isinstance(v, Loop) else v), axis=1)))


def poisson_bracket_matrix(pair, x):
    """Matrix of brackets ``{H_i, H_j}(x) = omega(X_{H_i}, X_{H_j})``."""
    g = pair.H_grad(x)
    return np.einsum("...ia,...ja->...ij", apply_J(apply_J(g)), apply_J(g))


def is_commuting(pair, sample_count=200, seed=0, atol=1e-8):
    """Randomized test that all component Hamiltonians Poisson commute.

    Checking the basis components suffices by bilinearity. Pairs flagged
    commuting by construction short-circuit the sampling.
    """
    if pair.commuting:
        return CommutingReport(True, 0.0, by_construction=True)
    if pair.m == 1:
        return CommutingReport(True, 0.0)
    rng = check_random_state(seed)
    points = pair.sample_points(rng, sample_count)
    brackets = poisson_bracket_matrix(pair, points)
    worst = float(np.max(np.abs(brackets)))
    return CommutingReport(worst <= atol, worst)


def check_pair(pair, seed=0, count=5, step=1e-6, atol=1e-5):
    """Finite-difference self-check of ``H_grad``, ``H_hess`` and ``f_hess`` symmetry.

    Returns the worst deviations as a dict; raises nothing.
    """
    rng = check_random_state(seed)
    pts = pair.sample_points(rng, count)
    d = pair.dim
    eye = np.eye(d)
    grad_err = hess_err = 0.0
    for x in pts:
        fd_grad = np.stack([(pair.H(x + step * e) - pair.H(x - step * e)) / (2 * step) for e in eye], axis=-1)
        grad_err = max(grad_err, float(np.max(np.abs(fd_grad - pair.H_grad(x)))))
        fd_hess = np.stack(
            [(pair.H_grad(x + step * e) - pair.H_grad(x - step * e)) / (2 * step) for e in eye], axis=-1
        )
        hess_err = max(hess_err, float(np.max(np.abs(fd_hess - pair.H_hess(x)))))
    mu = np.atleast_1d(pair.H(pts).mean(axis=0))
    A = np.atleast_2d(pair.f_hess(mu))
    return {
        "grad_error": grad_err,
        "hess_error": hess_err,
        "f_hess_asymmetry": float(np.max(np.abs(A - A.T))),
        "ok": grad_err <= atol and hess_err <= atol,
    }


def product_pair(factors, f, f_grad, f_hess, in_W=_always, name="product"):
    """Product construction: ``H(x_1..x_m) = (H_1(x_1), ..., H_m(x_m))``.

    Each factor is a pair with ``m = 1`` on its own R^{2 n_j}. The product
    phase space keeps the global ``(q, p)`` ordering: all positions of all
    factors first, then all momenta. The result is commuting by construction.
    """
    factors = list(factors)
    if not factors:
        raise InvalidArgumentError("product_pair needs at least one factor")
    for fac in factors:
        if fac.m != 1:
            raise InvalidArgumentError("every factor must have a scalar Hamiltonian (m=1)")
    ns = [fac.n for fac in factors]
    n = sum(ns)
    offsets = np.concatenate([[0], np.cumsum(ns)])
    index = [
        np.concatenate([np.arange(o, o + k), n + np.arange(o, o + k)])
        for o, k in zip(offsets[:-1], ns)
    ]
    m = len(factors)

    def H(x):
        return np.stack([fac.H(x[..., idx])[..., 0] for fac, idx in zip(factors, index)], axis=-1)

    def H_grad(x):
        out = np.zeros(x.shape[:-1] + (m, 2 * n))
        for j, (fac, idx) in enumerate(zip(factors, index)):
            out[..., j, idx] = fac.H_grad(x[..., idx])[..., 0, :]
        return out

    def H_hess(x):
        out = np.zeros(x.shape[:-1] + (m, 2 * n, 2 * n))
        for j, (fac, idx) in enumerate(zip(factors, index)):
            out[..., j, idx[:, None], idx[None, :]] = fac.H_hess(x[..., idx])[..., 0, :, :]
        return out

    def sampler(rng, count):
        out = np.zeros((count, 2 * n))
        for fac, idx in zip(factors, index):
            out[:, idx] = fac.sample_points(rng, count)
        return out

    return PairSpec(
        n=n, m=m, H=H, H_grad=H_grad, H_hess=H_hess, f=f, f_grad=f_grad, f_hess=f_hess,
        in_W=in_W, name=name, commuting=True, sampler=sampler,
    )
