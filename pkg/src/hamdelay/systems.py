"""Built-in pairs, keyed by name, with branch-selecting initial guesses."""

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .exceptions import InvalidArgumentError
from .pair import PairSpec, product_pair


@dataclass(frozen=True)
class System:
    """A registered pair plus a guess ``(mu0, x0)`` for winding number ``k``."""

    name: str
    pair: PairSpec
    guess: Callable


def anharmonic_oscillator(beta=0.0, name="oscillator"):
    """Scalar pair on R^2 with ``H = rho/2 + beta rho^2/4`` and ``f`` unset.

    Used as a factor for products and by the linear-``f`` example.
    """

    def H(x):
        rho = np.sum(x**2, axis=-1)
        return (0.5 * rho + 0.25 * beta * rho**2)[..., None]

    def H_grad(x):
        rho = np.sum(x**2, axis=-1)[..., None]
        return ((1.0 + beta * rho) * x)[..., None, :]

    def H_hess(x):
        rho = np.sum(x**2, axis=-1)[..., None, None]
        eye = np.eye(2)
        return ((1.0 + beta * rho) * eye + 2.0 * beta * x[..., :, None] * x[..., None, :])[..., None, :, :]

    return PairSpec(
        n=1, m=1, H=H, H_grad=H_grad, H_hess=H_hess,
        f=lambda x: float(x[0]), f_grad=lambda x: np.ones(1), f_hess=lambda x: np.zeros((1, 1)),
        name=name, params={"beta": beta},
    )


def example1_linear(c=5.0, beta=0.0):
    """Linear ``f(x) = c x``: the classical action of ``c H``."""
    osc = anharmonic_oscillator(beta)
    pair = PairSpec(
        n=1, m=1, H=osc.H, H_grad=osc.H_grad, H_hess=osc.H_hess,
        f=lambda x: c * float(np.asarray(x)[0]),
        f_grad=lambda x: np.array([c]),
        f_hess=lambda x: np.zeros((1, 1)),
        name="example1-linear", params={"c": c, "beta": beta},
    )

    def guess(k=1):
        # frequency of c.H on the circle of radius r is c (1 + beta r^2)
        if beta > 0 and 2 * np.pi * k > c:
            r2 = (2 * np.pi * k / c - 1.0) / beta
            x0 = np.array([np.sqrt(r2) * 0.98, 0.0])
        else:
            x0 = np.array([0.1, 0.05])
        return np.atleast_1d(osc.H(x0)), x0

    return System("example1-linear", pair, guess)


def example2_harmonic():
    """``f(x) = x^2 / 2`` with the harmonic oscillator: period equals energy."""
    osc = anharmonic_oscillator(0.0)
    pair = PairSpec(
        n=1, m=1, H=osc.H, H_grad=osc.H_grad, H_hess=osc.H_hess,
        f=lambda x: 0.5 * float(np.asarray(x)[0]) ** 2,
        f_grad=lambda x: np.array([float(np.asarray(x)[0])]),
        f_hess=lambda x: np.ones((1, 1)),
        name="example2-harmonic",
    )

    def guess(k=1):
        mu0 = 0.95 * 2 * np.pi * k
        return np.array([mu0]), np.array([np.sqrt(2 * mu0), 0.0])

    return System("example2-harmonic", pair, guess)


def example3_helium(mu=2.0):
    """Two electrons on half-lines coupled through their mean positions.

    Coordinates ``(q1, q2, p1, p2)``, ``H = (E, q1, q2)`` and
    ``f(x) = x0 + 1/(x2 - x1)`` on ``W = {x2 > x1}``. Provided for residual
    and action evaluation; its critical points are collision orbits.
    """
    if mu <= 1:
        raise InvalidArgumentError("nuclear charge mu must exceed 1")

    def H(x):
        q1, q2, p1, p2 = np.moveaxis(x, -1, 0)
        energy = 0.5 * (p1**2 + p2**2) - mu / q1 - mu / q2
        return np.stack([energy, q1, q2], axis=-1)

    def H_grad(x):
        q1, q2, p1, p2 = np.moveaxis(x, -1, 0)
        out = np.zeros(x.shape[:-1] + (3, 4))
        out[..., 0, 0] = mu / q1**2
        out[..., 0, 1] = mu / q2**2
        out[..., 0, 2] = p1
        out[..., 0, 3] = p2
        out[..., 1, 0] = 1.0
        out[..., 2, 1] = 1.0
        return out

    def H_hess(x):
        q1, q2 = x[..., 0], x[..., 1]
        out = np.zeros(x.shape[:-1] + (3, 4, 4))
        out[..., 0, 0, 0] = -2 * mu / q1**3
        out[..., 0, 1, 1] = -2 * mu / q2**3
        out[..., 0, 2, 2] = 1.0
        out[..., 0, 3, 3] = 1.0
        return out

    def f(x):
        return float(x[0] + 1.0 / (x[2] - x[1]))

    def f_grad(x):
        d = x[2] - x[1]
        return np.array([1.0, 1.0 / d**2, -1.0 / d**2])

    def f_hess(x):
        d = x[2] - x[1]
        a = 2.0 / d**3
        return np.array([[0.0, 0.0, 0.0], [0.0, a, -a], [0.0, -a, a]])

    def sampler(rng, count):
        q = rng.uniform(0.5, 3.0, (count, 2))
        p = rng.standard_normal((count, 2))
        return np.concatenate([q, p], axis=1)

    pair = PairSpec(
        n=2, m=3, H=H, H_grad=H_grad, H_hess=H_hess, f=f, f_grad=f_grad, f_hess=f_hess,
        in_W=lambda x: bool(x[2] > x[1]), name="example3-helium", sampler=sampler, params={"mu": mu},
    )

    def guess(k=1):
        x0 = np.array([1.0, 2.0, 0.0, 0.0])
        return H(x0), x0

    return System("example3-helium", pair, guess)


def bov_radius(k=1):
    """Radius of the circular solution ``z = R exp(2 pi i k t)``."""
    return (16 * np.pi**2 * k**2) ** (-1.0 / 6.0)


def example4_bov():
    """``H(z, w) = (|z|^2, |w|^2)`` on T*C and ``f(x) = (x2 - 8) / (8 x1)``.

    Coordinates ``(z1, z2, w1, w2)`` with ``z`` the positions.
    """

    def H(x):
        return np.stack([np.sum(x[..., :2] ** 2, axis=-1), np.sum(x[..., 2:] ** 2, axis=-1)], axis=-1)

    def H_grad(x):
        out = np.zeros(x.shape[:-1] + (2, 4))
        out[..., 0, :2] = 2 * x[..., :2]
        out[..., 1, 2:] = 2 * x[..., 2:]
        return out

    hess = np.zeros((2, 4, 4))
    hess[0, :2, :2] = 2 * np.eye(2)
    hess[1, 2:, 2:] = 2 * np.eye(2)

    def H_hess(x):
        return np.broadcast_to(hess, x.shape[:-1] + (2, 4, 4)).copy()

    def f(x):
        return float((x[1] - 8.0) / (8.0 * x[0]))

    def f_grad(x):
        return np.array([-(x[1] - 8.0) / (8.0 * x[0] ** 2), 1.0 / (8.0 * x[0])])

    def f_hess(x):
        off = -1.0 / (8.0 * x[0] ** 2)
        return np.array([[(x[1] - 8.0) / (4.0 * x[0] ** 3), off], [off, 0.0]])

    pair = PairSpec(
        n=2, m=2, H=H, H_grad=H_grad, H_hess=H_hess, f=f, f_grad=f_grad, f_hess=f_hess,
        in_W=lambda x: bool(x[0] != 0.0), name="example4-bov",
    )

    def guess(k=1):
        x0 = bov_circle(k, np.array([0.0]))[0]
        return H(x0), x0

    return System("example4-bov", pair, guess)


def bov_circle(k, t):
    """Circular critical loop of the BOV pair sampled at times ``t``.

    ``z = R exp(2 pi i k t)`` and ``w = -4 R^2 z'`` (the first-order equation
    in this package's sign convention).
    """
    R = bov_radius(k)
    theta = 2 * np.pi * k * np.asarray(t, float)
    z = R * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    dz = 2 * np.pi * k * R * np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
    return np.concatenate([z, -4 * R**2 * dz], axis=-1)


def example5_coupled_oscillators(eps=0.1, m=2):
    """Product of ``m`` harmonic oscillators with ``f = |x|^2/2 + eps sum_{i<j} x_i x_j``."""
    if m < 1:
        raise InvalidArgumentError("need at least one oscillator")
    coupling = np.full((m, m), eps)
    np.fill_diagonal(coupling, 1.0)

    def f(x):
        x = np.asarray(x, float)
        return float(0.5 * x @ coupling @ x)

    pair = product_pair(
        [anharmonic_oscillator(0.0) for _ in range(m)],
        f=f,
        f_grad=lambda x: coupling @ np.asarray(x, float),
        f_hess=lambda x: coupling.copy(),
        name="example5-coupled-oscillators",
    )
    pair = replace(pair, params={"eps": eps, "m": m})

    def guess(k=1):
        ks = np.broadcast_to(np.atleast_1d(k), (m,)).astype(float)
        means = np.linalg.solve(coupling, 2 * np.pi * ks)
        mu0 = 0.97 * means
        radii = np.sqrt(2 * mu0)
        x0 = np.concatenate([radii, np.zeros(m)])
        return mu0, x0

    return System("example5-coupled-oscillators", pair, guess)


REGISTRY = {
    "example1-linear": example1_linear,
    "example2-harmonic": example2_harmonic,
    "example3-helium": example3_helium,
    "example4-bov": example4_bov,
    "example5-coupled-oscillators": example5_coupled_oscillators,
}


def get_system(name, **params):
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise InvalidArgumentError(f"unknown system {name!r}; choose from {sorted(REGISTRY)}") from None
    return factory(**params)
