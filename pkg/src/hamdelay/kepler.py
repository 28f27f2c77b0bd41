"""From BOV critical loops to planar Kepler orbits.

A loop ``z`` solving the second-order BOV equation is reparametrized by the
normalized mass-distribution time ``t_z(tau) = int_0^tau |z|^2 / int_0^1 |z|^2``
and squared in the complex sense: ``x(t) = z(tau_z(t))^2``. The result is a
1-periodic Kepler orbit with gravitational parameter ``mu = 1``.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .core import FieldAlongLoop, Loop, TimeGrid, quadrature, trig_interpolate
from .exceptions import DomainError, InvalidArgumentError

KEPLER_MU = 1.0


class PlanarLoop(Loop):
    """Sampled periodic loop in R^2, identified with the complex plane."""

    __slots__ = ()

    def __init__(self, grid, samples):
        super().__init__(grid, samples)
        if self.dim != 2:
            raise InvalidArgumentError(f"planar loop needs 2 columns, got {self.dim}")

    @classmethod
    def from_complex(cls, values, grid=None):
        values = np.asarray(values, complex)
        grid = grid or TimeGrid(values.size)
        return cls(grid, np.stack([values.real, values.imag], axis=1))

    @property
    def complex(self):
        return self.samples[:, 0] + 1j * self.samples[:, 1]

    def min_modulus(self):
        return float(np.min(np.abs(self.complex)))


def _guard(loop, what):
    if not loop.min_modulus() > 0:
        raise DomainError(f"{what} passes through the origin")


def bov_residual(z):
    """``z'' - (int |z'|^2 / int |z|^2 - 1 / (2 (int |z|^2)^3)) z`` on the grid."""
    dz = z.derivative()
    mass = quadrature(np.sum(z.samples**2, axis=1))
    kinetic = quadrature(np.sum(dz**2, axis=1))
    coeff = kinetic / mass - 0.5 / mass**3
    return FieldAlongLoop(z.grid, z.derivative(2) - coeff * z.samples)


def _antiderivative(g):
    """Mean and periodic part ``P`` (with ``P' = g - mean``) of periodic samples."""
    N = g.shape[0]
    coeffs = np.fft.rfft(g)
    k = np.fft.rfftfreq(N, d=1.0 / N)
    mean = coeffs[0].real / N
    integ = np.zeros_like(coeffs)
    integ[1:] = coeffs[1:] / (2j * np.pi * k[1:])
    if N % 2 == 0:
        integ[-1] = 0.0
    return mean, np.fft.irfft(integ, n=N)


@dataclass(frozen=True)
class TimeTransform:
    """``t_z`` sampled at ``tau_k`` and its inverse ``tau_z`` sampled at ``t_k``.

    Both arrays include the endpoint, so they have ``N + 1`` entries with
    ``forward[0] = inverse[0] = 0`` and ``forward[-1] = inverse[-1] = 1``.
    """

    grid: TimeGrid
    forward: np.ndarray
    inverse: np.ndarray
    mean_mass: float
    periodic_part: np.ndarray

    def t_of_tau(self, tau):
        """Evaluate ``t_z`` anywhere on ``[0, 1]`` by spectral interpolation."""
        tau = np.asarray(tau, float)
        p = trig_interpolate(self.periodic_part, tau.ravel()) - self.periodic_part[0]
        return (tau.ravel() + p / self.mean_mass).reshape(tau.shape)

    def round_trip_error(self):
        t = np.append(self.grid.nodes, 1.0)
        return float(np.max(np.abs(self.t_of_tau(self.inverse) - t)))

    def is_monotone(self):
        return bool(np.all(np.diff(self.forward) > 0) and np.all(np.diff(self.inverse) > 0))


def time_transform(z, tol=1e-14, max_iter=60):
    """Spectral ``t_z`` and its inverse by safeguarded Newton iteration.

    ``|z|^2`` is integrated exactly in Fourier space; the inverse solves
    ``t_z(tau) = t`` per node with bisection whenever a Newton step leaves the
    current bracket.
    """
    _guard(z, "z")
    mass = np.sum(z.samples**2, axis=1)
    mean, periodic = _antiderivative(mass)
    tt = TimeTransform(z.grid, np.empty(0), np.empty(0), mean, periodic)
    taus = np.append(z.grid.nodes, 1.0)
    forward = tt.t_of_tau(taus)
    forward[0], forward[-1] = 0.0, 1.0

    targets = taus
    lo, hi = np.zeros_like(targets), np.ones_like(targets)
    tau = targets.copy()
    for _ in range(max_iter):
        g = tt.t_of_tau(tau) - targets
        lo = np.where(g <= 0, tau, lo)
        hi = np.where(g >= 0, tau, hi)
        rate = trig_interpolate(mass, tau) / mean
        step = tau - g / rate
        outside = (step <= lo) | (step >= hi) | ~np.isfinite(step)
        step = np.where(outside, 0.5 * (lo + hi), step)
        done = np.max(np.abs(step - tau)) <= tol
        tau = step
        if done:
            break
    tau[0], tau[-1] = 0.0, 1.0
    return TimeTransform(z.grid, forward, tau, mean, periodic)


def levi_civita_orbit(z, transform=None):
    """``x(t_k) = z(tau_z(t_k))^2`` on the grid of ``z``."""
    transform = transform or time_transform(z)
    zc = trig_interpolate(z.samples, transform.inverse[:-1])
    values = (zc[:, 0] + 1j * zc[:, 1]) ** 2
    return PlanarLoop.from_complex(values, z.grid)


def kepler_residual(x, mu=KEPLER_MU):
    """``max_t |x'' + mu x / |x|^3|`` with a spectral second derivative."""
    _guard(x, "x")
    r3 = np.sum(x.samples**2, axis=1) ** 1.5
    res = x.derivative(2) + mu * x.samples / r3[:, None]
    return float(np.max(np.linalg.norm(res, axis=1)))


def kepler_energy(x, mu=KEPLER_MU):
    """Samples of ``|x'|^2 / 2 - mu / |x|``."""
    _guard(x, "x")
    v = x.derivative()
    return 0.5 * np.sum(v**2, axis=1) - mu / np.linalg.norm(x.samples, axis=1)


def kepler_pipeline(cp, N=512):
    """Residual and invariant summary for a BOV critical point, resampled to ``N``."""
    z = PlanarLoop(TimeGrid(N), cp.loop.resample(N).samples[:, :2])
    tt = time_transform(z)
    x = levi_civita_orbit(z, tt)
    energy = kepler_energy(x)
    return {
        "N": N,
        "bov_residual": bov_residual(z).sup_norm(),
        "min_modulus_z": z.min_modulus(),
        "transform_monotone": tt.is_monotone(),
        "transform_endpoints": [float(tt.forward[0]), float(tt.forward[-1])],
        "round_trip_error": tt.round_trip_error(),
        "mu": KEPLER_MU,
        "kepler_residual": kepler_residual(x),
        "energy_drift": float(np.max(energy) - np.min(energy)),
    }, x


class KeplerTransform(BaseEstimator, TransformerMixin):
    """``fit`` builds the time transform of ``z``; ``transform`` returns ``x``."""

    def __init__(self, mu=KEPLER_MU):
        self.mu = mu

    def fit(self, z, y=None):
        self.time_transform_ = time_transform(z)
        return self

    def transform(self, z):
        return levi_civita_orbit(z, self.time_transform_)

    def score(self, z, y=None):
        """Negative Kepler residual of the transformed loop."""
        return -kepler_residual(self.transform(z), self.mu)
