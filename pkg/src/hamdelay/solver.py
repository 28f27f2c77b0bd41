"""Critical points of the action: periodic orbits of a self-consistent frozen field.

A loop ``u`` is critical when it is a 1-periodic orbit of
``X_{c.H}`` with ``c = df(mu)`` and ``mu = mean_t H(u(t))``. The default
solver treats ``(u(0), mu)`` as joint unknowns of a shooting Newton method
and then polishes the sampled loop by Newton on the collocated residual.
The literal damped iteration on ``mu`` is available as
``method="fixed-point"``; it only works when the frozen field has a
1-periodic orbit for every ``mu`` near the solution.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from .core import Loop, TimeGrid, apply_J, flow_with_variations, integrate_flow
from .exceptions import DomainExitError, InvalidArgumentError, SolverFailure
from .hessian import make_critical_point, residual_jacobian
from .pair import critical_residual, frozen_field, frozen_jacobian, mean_value
from .systems import System, bov_circle, example4_bov

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolveConfig:
    """Numerical settings for :func:`self_consistent_solve`.

    ``damping`` is the outer relaxation factor of the fixed-point method and
    the backtracking factor of the Newton method. Shooting stops at
    ``inner_tol``; when it stagnates earlier (the RK4 map only has the
    time-shift symmetry up to its truncation error) a residual below
    ``handoff_tol`` is good enough for the collocation polish.
    """

    N: int = 256
    inner_tol: float = 1e-10
    outer_tol: float = 1e-10
    damping: float = 0.5
    max_outer: int = 200
    max_inner: int = 50
    substeps: int = 4
    residual_tol: float = 1e-8
    polish_tol: float = 1e-12
    handoff_tol: float = 1e-5
    method: str = "newton"
    mu0: Optional[tuple] = None
    guess: Optional[tuple] = None

    def __post_init__(self):
        if not 0 < self.damping <= 1:
            raise InvalidArgumentError(f"damping must lie in (0, 1], got {self.damping}")
        if self.method not in ("newton", "fixed-point"):
            raise InvalidArgumentError(f"unknown method {self.method!r}")
        TimeGrid(self.N)
        if self.substeps < 1:
            raise InvalidArgumentError("substeps must be >= 1")

    @property
    def steps(self):
        return self.N * self.substeps


@dataclass
class SolveInfo:
    n_iter: int = 0
    history: list = field(default_factory=list)
    shooting_residual: float = float("nan")
    polish_iterations: int = 0


def _loop_from_flow(field_fn, x0, config):
    _, states = integrate_flow(field_fn, x0, steps=config.steps, sample_every=config.substeps)
    return Loop(config.N, states[:-1]), states[-1]


def periodic_orbit(field_fn, jacobian, guess, config=None):
    """1-periodic orbit of an autonomous field near ``guess``.

    Newton on ``phi^1(x) - x`` with the phase condition
    ``<x - guess, field(guess)> = 0`` appended; steps are minimum-norm
    least-squares solves, so families of periodic orbits are handled.
    """
    config = config or SolveConfig()
    guess = np.asarray(guess, float)
    x = guess.copy()
    d = x.size
    anchor = np.asarray(field_fn(0.0, guess), float)
    scale = np.linalg.norm(anchor)
    phase = anchor / scale if scale > 0 else np.zeros(d)
    res = prev = np.inf
    for it in range(config.max_inner):
        _, traj, psi = flow_with_variations(field_fn, jacobian, x, steps=config.steps, sample_every=config.steps)
        F = np.concatenate([traj[-1] - x, [phase @ (x - guess)]])
        res = float(np.max(np.abs(F)))
        log.debug("periodic_orbit it=%d residual=%.3e", it, res)
        # RK4 truncation can floor the residual above inner_tol; polish handles the rest
        if res <= config.inner_tol or (res <= config.handoff_tol and res >= 0.5 * prev):
            loop, _ = _loop_from_flow(field_fn, x, config)
            return loop
        prev = res
        jac = np.vstack([psi[-1] - np.eye(d), phase[None, :]])
        # a coarse cutoff keeps steps off near-null directions along an orbit family
        x = x - np.linalg.lstsq(jac, F, rcond=1e-6)[0]
    raise SolverFailure(f"periodic orbit did not converge: residual {res:.3e}", residual=res)


# ---------------------------------------------------------------- shooting


def _shoot(pair, x0, mu, config):
    """Integrate trajectory, monodromy and mean-derivative sensitivities.

    Returns residual ``F``, Jacobian blocks and the sampled states.
    """
    d, m = pair.dim, pair.m
    c = np.atleast_1d(pair.f_grad(mu))
    A = np.atleast_2d(pair.f_hess(mu))
    X = frozen_field(pair, c)
    DX = frozen_jacobian(pair, c)

    def rhs(_t, z):
        u = z[:d]
        psi = z[d:d + d * d].reshape(d, d)
        S = z[d + d * d:].reshape(d, m)
        Ju = DX(0.0, u)
        dmu = apply_J((A.T @ pair.H_grad(u))).T  # d x m: dX/dmu_j
        return np.concatenate([X(0.0, u), (Ju @ psi).ravel(), (Ju @ S + dmu).ravel()])

    z0 = np.concatenate([x0, np.eye(d).ravel(), np.zeros(d * m)])
    _, states = integrate_flow(rhs, z0, steps=config.steps, sample_every=config.substeps)
    u = states[:, :d]
    psi = states[:, d:d + d * d].reshape(-1, d, d)
    S = states[:, d + d * d:].reshape(-1, d, m)
    samples = u[:-1]
    grads = pair.H_grad(samples)  # N x m x d
    mean = np.atleast_1d(pair.H(samples).mean(axis=0))
    dmean_dx = np.einsum("kid,kde->ie", grads, psi[:-1]) / config.N
    dmean_dmu = np.einsum("kid,kdj->ij", grads, S[:-1]) / config.N
    F = np.concatenate([u[-1] - x0, mean - mu])
    jac = np.block([[psi[-1] - np.eye(d), S[-1]], [dmean_dx, dmean_dmu - np.eye(m)]])
    return F, jac, samples, X(0.0, x0)


def _check_W(pair, mu, history):
    if not pair.in_W(mu):
        raise DomainExitError(f"mean {mu} left W", history=history)


def _newton_shooting(pair, x0, mu, config, info):
    d = pair.dim
    F, jac, samples, xdot = _shoot(pair, x0, mu, config)
    res = float(np.max(np.abs(F)))
    for it in range(config.max_outer):
        info.history.append({"mu": mu.tolist(), "residual": res})
        log.debug("shooting it=%d residual=%.3e mu=%s", it, res, mu)
        if res <= config.inner_tol:
            info.n_iter = it
            info.shooting_residual = res
            return samples
        nrm = np.linalg.norm(xdot)
        phase = np.concatenate([xdot / nrm, np.zeros(pair.m)]) if nrm > 0 else np.zeros(d + pair.m)
        step = np.linalg.lstsq(np.vstack([jac, phase]), np.concatenate([F, [0.0]]), rcond=1e-10)[0]
        t = 1.0
        while True:
            x_try, mu_try = x0 - t * step[:d], mu - t * step[d:]
            if pair.in_W(mu_try):
                try:
                    trial = _shoot(pair, x_try, mu_try, config)
                except ArithmeticError:
                    trial = None
                if trial is not None:
                    r_try = float(np.max(np.abs(trial[0])))
                    if r_try < res:
                        break
            if t < 1e-3:
                _check_W(pair, mu_try, info.history)
                if res <= config.handoff_tol:
                    info.n_iter = it
                    info.shooting_residual = res
                    return samples
                raise SolverFailure("shooting line search failed", residual=res, history=info.history)
            t *= config.damping
        x0, mu = x_try, mu_try
        F, jac, samples, xdot = trial
        res = r_try
    if res <= config.handoff_tol:
        info.n_iter = config.max_outer
        info.shooting_residual = res
        return samples
    raise SolverFailure(f"shooting did not converge: residual {res:.3e}", residual=res, history=info.history)


def _fixed_point(pair, x0, mu, config, info):
    theta = config.damping
    loop = None
    for it in range(config.max_outer):
        c = np.atleast_1d(pair.f_grad(mu))
        loop = periodic_orbit(frozen_field(pair, c), frozen_jacobian(pair, c), x0, config)
        new = (1 - theta) * mu + theta * mean_value(pair, loop).value
        info.history.append({"mu": new.tolist(), "update": float(np.max(np.abs(new - mu)))})
        _check_W(pair, new, info.history)
        if np.max(np.abs(new - mu)) < config.outer_tol:
            info.n_iter = it + 1
            return loop.samples
        mu, x0 = new, loop.samples[0]
    raise SolverFailure("fixed-point iteration did not converge", history=info.history)


def polish(pair, samples, config, info=None):
    """Newton on the collocated critical residual (minimum-norm steps)."""
    loop = Loop(config.N, samples)
    best = critical_residual(pair, loop).sup_norm()
    for it in range(config.max_inner):
        if best <= config.polish_tol:
            break
        r = critical_residual(pair, loop).samples.ravel()
        step = np.linalg.lstsq(residual_jacobian(pair, loop), r, rcond=1e-10)[0]
        trial = Loop(config.N, loop.samples - step.reshape(loop.samples.shape))
        try:
            res = critical_residual(pair, trial).sup_norm()
        except ValueError:
            break
        if not res < best:
            break
        loop, best = trial, res
        if info is not None:
            info.polish_iterations = it + 1
    return loop, best


def self_consistent_solve(pair, config=None, return_info=False):
    """Find a critical point of the action from ``config.mu0`` / ``config.guess``.

    Returns a validated :class:`~hamdelay.hessian.CriticalPoint`; with
    ``return_info=True`` also a :class:`SolveInfo`.
    """
    config = config or SolveConfig()
    if config.mu0 is None or config.guess is None:
        raise InvalidArgumentError("config needs mu0 and guess")
    mu = np.atleast_1d(np.asarray(config.mu0, float))
    x0 = np.asarray(config.guess, float)
    if mu.size != pair.m or x0.size != pair.dim:
        raise InvalidArgumentError(f"mu0 must have {pair.m} entries and guess {pair.dim}")
    info = SolveInfo()
    _check_W(pair, mu, info.history)
    if config.method == "newton":
        samples = _newton_shooting(pair, x0, mu, config, info)
    else:
        samples = _fixed_point(pair, x0, mu, config, info)
    loop, res = polish(pair, samples, config, info)
    if not res <= config.residual_tol:
        raise SolverFailure(f"critical residual {res:.3e} above {config.residual_tol:.1e}",
                            residual=res, history=info.history)
    cp = make_critical_point(pair, loop, config.residual_tol)
    return (cp, info) if return_info else cp


def solve_system(system, k=1, config=None, return_info=False):
    """Solve a registered :class:`~hamdelay.systems.System` on branch ``k``."""
    config = config or SolveConfig()
    if config.mu0 is None or config.guess is None:
        mu0, x0 = system.guess(k)
        config = replace(config, mu0=tuple(np.atleast_1d(mu0)), guess=tuple(x0))
    return self_consistent_solve(system.pair, config, return_info)


def bov_second_order_residual(cp):
    """Sup norm of the second-order residual of the position part ``z``."""
    from .kepler import PlanarLoop, bov_residual

    z = PlanarLoop(cp.loop.grid, cp.loop.samples[:, :2])
    return bov_residual(z).sup_norm()


def loop_radius(cp, positions_only=False):
    """Root mean square radius ``sqrt(mean |u|^2)`` of the loop.

    With ``positions_only`` only the first ``n`` coordinates enter.
    """
    x = cp.loop.samples[:, : cp.pair.n] if positions_only else cp.loop.samples
    return float(np.sqrt(np.mean(np.sum(x**2, axis=1))))


def bov_solve(k=1, config=None, return_info=False):
    """Circular critical point of the BOV pair with winding ``k``.

    Seeds the general solver with the circular ansatz and checks the
    second-order equation for ``z`` as an independent residual.
    """
    if int(k) != k or k < 1:
        raise InvalidArgumentError("winding number k must be a positive integer")
    config = config or SolveConfig()
    pair = example4_bov().pair
    x0 = bov_circle(k, np.array([0.0]))[0]
    config = replace(config, mu0=tuple(pair.H(bov_circle(k, TimeGrid(config.N).nodes)).mean(axis=0)),
                     guess=tuple(x0))
    cp, info = self_consistent_solve(pair, config, return_info=True)
    second = bov_second_order_residual(cp)
    if not second <= config.residual_tol:
        raise SolverFailure(f"second-order residual {second:.3e} above tolerance", residual=second)
    return (cp, info) if return_info else cp


class SelfConsistentSolver(BaseEstimator):
    """Estimator front end for :func:`self_consistent_solve`.

    ``fit`` accepts a :class:`~hamdelay.systems.System` (initial data from its
    branch guess for winding ``k``) or a bare pair together with ``mu0`` and
    ``guess``. Fitted attributes: ``critical_point_``, ``loop_``, ``mean_``,
    ``n_iter_``, ``residual_``.
    """

    def __init__(self, N=256, k=1, damping=0.5, inner_tol=1e-10, outer_tol=1e-10, max_iter=200,
                 method="newton", mu0=None, guess=None):
        self.N = N
        self.k = k
        self.damping = damping
        self.inner_tol = inner_tol
        self.outer_tol = outer_tol
        self.max_iter = max_iter
        self.method = method
        self.mu0 = mu0
        self.guess = guess

    def _config(self):
        return SolveConfig(
            N=self.N, damping=self.damping, inner_tol=self.inner_tol, outer_tol=self.outer_tol,
            max_outer=self.max_iter, method=self.method,
            mu0=None if self.mu0 is None else tuple(np.atleast_1d(self.mu0)),
            guess=None if self.guess is None else tuple(self.guess),
        )

    def fit(self, problem, y=None):
        config = self._config()
        if isinstance(problem, System):
            cp, info = solve_system(problem, self.k, config, return_info=True)
        else:
            cp, info = self_consistent_solve(problem, config, return_info=True)
        self.critical_point_ = cp
        self.loop_ = cp.loop
        self.mean_ = cp.mean.value
        self.residual_ = cp.residual_norm
        self.n_iter_ = info.n_iter
        return self
