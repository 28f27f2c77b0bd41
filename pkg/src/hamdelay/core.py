"""Symplectic linear algebra on R^{2n}, periodic quadrature and fixed-step flows.

Conventions
-----------
Coordinates are ordered ``(q_1..q_n, p_1..p_n)``. The complex structure is
``J(q, p) = (-p, q)``, the inner product is Euclidean, the symplectic form is
``omega(x, y) = <Jx, y>`` and Hamiltonian vector fields are ``X_G = J grad G``.
With these choices ``dG = omega(., X_G)`` and ``omega(., J .) = <., .>``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from ._validation import check_even_vector, check_samples
from .exceptions import IntegrationBlowupError, InvalidArgumentError

MIN_GRID = 8


def complex_structure(n):
    """Integer matrix of ``J`` on R^{2n}."""
    if n < 1:
        raise InvalidArgumentError("half-dimension n must be >= 1")
    eye = np.eye(n, dtype=int)
    zero = np.zeros((n, n), dtype=int)
    return np.block([[zero, -eye], [eye, zero]])


def apply_J(v):
    """Apply ``J`` along the last axis of ``v`` without forming the matrix."""
    v = np.asarray(v)
    n = v.shape[-1] // 2
    return np.concatenate([-v[..., n:], v[..., :n]], axis=-1)


def omega(x, y):
    x = check_even_vector(x, "x")
    y = check_even_vector(y, "y")
    if x.shape != y.shape:
        raise InvalidArgumentError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(apply_J(x) @ y)


def ham_vector_field(grad):
    """Hamiltonian vector field ``J grad`` for a gradient (or stack of gradients)."""
    grad = np.asarray(grad, dtype=float)
    if grad.shape[-1] % 2:
        raise InvalidArgumentError("gradient must have even length")
    return apply_J(grad)


def symplectic_inverse(psi):
    """Inverse of a symplectic matrix via ``-J psi^T J``; works on stacks."""
    psi = np.asarray(psi, dtype=float)
    n = psi.shape[-1] // 2
    J = complex_structure(n)
    return -J @ np.swapaxes(psi, -1, -2) @ J


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = (k + offset) / N`` on the circle ``[0, 1)``.

    ``offset=0.5`` gives cell midpoints, used by the twisted operator.
    """

    N: int
    offset: float = 0.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < MIN_GRID:
            raise InvalidArgumentError(f"grid size must be an integer >= {MIN_GRID}, got {self.N}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def h(self):
        return 1.0 / self.N

    @property
    def nodes(self):
        return (np.arange(self.N) + self.offset) / self.N

    @property
    def weights(self):
        return np.full(self.N, 1.0 / self.N)

    def midpoints(self):
        return TimeGrid(self.N, offset=self.offset + 0.5)


def quadrature(samples):
    """Periodic rectangle rule over one period; exact for constants.

    Integrates along axis 0, so ``(N, ...)`` arrays give componentwise means.
    """
    samples = np.asarray(samples, dtype=float)
    return samples.mean(axis=0)


def partial_integral(samples, t, endpoint_value):
    """Trapezoid values of ``int_0^{t_k} g`` at the nodes ``t_k`` and at ``t=1``.

    ``samples`` holds ``g(t_k)`` on the nodes of a grid with zero offset and
    ``endpoint_value`` is ``g(1)`` (which differs from ``g(0)`` for
    non-periodic integrands).
    """
    full = np.concatenate([np.asarray(samples, float), np.asarray(endpoint_value, float)[None]], axis=0)
    tt = np.concatenate([np.asarray(t, float), [1.0]])
    return cumulative_trapezoid(full, tt, axis=0, initial=0.0)


class _GridSamples:
    __slots__ = ("grid", "samples")

    def __init__(self, grid, samples):
        if not isinstance(grid, TimeGrid):
            grid = TimeGrid(int(grid))
        samples = check_samples(samples)
        if samples.shape[0] != grid.N:
            raise InvalidArgumentError(f"expected {grid.N} samples, got {samples.shape[0]}")
        samples.setflags(write=False)
        self.grid = grid
        self.samples = samples

    @property
    def dim(self):
        return self.samples.shape[1]

    @property
    def n(self):
        return self.dim // 2

    def __repr__(self):
        return f"{type(self).__name__}(N={self.grid.N}, dim={self.dim})"


class Loop(_GridSamples):
    """Sampled 1-periodic loop ``u(t_k)`` in R^{2n}."""

    __slots__ = ()

    def derivative(self, order=1):
        return spectral_derivative(self.samples, order)

    def at(self, t):
        return trig_interpolate(self.samples, t, offset=self.grid.offset)

    def resample(self, N):
        grid = TimeGrid(N)
        return Loop(grid, self.at(grid.nodes))


class FieldAlongLoop(_GridSamples):
    """Sampled vector field ``xi(t_k)`` along a loop or on a twisted interval."""

    __slots__ = ()

    def sup_norm(self):
        return float(np.max(np.abs(self.samples)))

    def l2_norm(self):
        return float(np.sqrt(quadrature(np.sum(self.samples**2, axis=1))))


def _wavenumbers(N):
    return np.fft.rfftfreq(N, d=1.0 / N)


def spectral_derivative(samples, order=1):
    """Fourier derivative of periodic samples along axis 0 (period 1)."""
    samples = np.asarray(samples, dtype=float)
    N = samples.shape[0]
    k = _wavenumbers(N)
    symbol = (2j * np.pi * k) ** order
    if N % 2 == 0 and order % 2 == 1:
        symbol[-1] = 0.0
    coeffs = np.fft.rfft(samples, axis=0)
    shape = (-1,) + (1,) * (samples.ndim - 1)
    return np.fft.irfft(coeffs * symbol.reshape(shape), n=N, axis=0)


def fourier_diff_matrix(N):
    """Dense first-order Fourier differentiation matrix on ``N`` periodic nodes."""
    return spectral_derivative(np.eye(N), 1)


def trig_interpolate(samples, t, offset=0.0):
    """Evaluate the trigonometric interpolant of periodic samples at times ``t``."""
    samples = np.asarray(samples, dtype=float)
    N = samples.shape[0]
    coeffs = np.fft.rfft(samples, axis=0) / N
    k = _wavenumbers(N)
    w = np.full(k.shape, 2.0)
    w[0] = 1.0
    if N % 2 == 0:
        w[-1] = 1.0
    t = np.atleast_1d(np.asarray(t, dtype=float)) - offset / N
    phase = np.exp(2j * np.pi * np.outer(t, k))
    return np.real((phase * w) @ coeffs)


def _rk4_step(field, t, x, h):
    k1 = field(t, x)
    k2 = field(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = field(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = field(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_flow(field, x0, t_span=(0.0, 1.0), steps=1024, sample_every=1):
    """Classical fixed-step RK4 for ``x' = field(t, x)``.

    Returns ``(times, states)`` with one row every ``sample_every`` steps,
    including both endpoints. ``x0`` may have any shape; the field receives
    and returns arrays of that shape.
    """
    if steps < 1 or steps % sample_every:
        raise InvalidArgumentError("steps must be a positive multiple of sample_every")
    t0, t1 = map(float, t_span)
    h = (t1 - t0) / steps
    x = np.array(x0, dtype=float)
    out = [x.copy()]
    times = [t0]
    for i in range(steps):
        t = t0 + i * h
        x = _rk4_step(field, t, x, h)
        if not np.all(np.isfinite(x)):
            raise IntegrationBlowupError(t + h)
        if (i + 1) % sample_every == 0:
            out.append(x.copy())
            times.append(t0 + (i + 1) * h)
    return np.array(times), np.array(out)


def linearized_flow(jacobian, dim, t_span=(0.0, 1.0), steps=1024, sample_every=1):
    """Solve ``Psi' = jacobian(t) Psi``, ``Psi(0) = I`` with the same RK4 scheme."""

    def rhs(t, psi):
        return jacobian(t) @ psi

    return integrate_flow(rhs, np.eye(dim), t_span, steps, sample_every)


def flow_with_variations(field, jacobian, x0, t_span=(0.0, 1.0), steps=1024, sample_every=1):
    """Integrate a trajectory and its linearization together.

    ``field(t, x)`` is the vector field and ``jacobian(t, x)`` its derivative.
    Returns ``(times, trajectory, psi)`` where ``psi[k]`` is the linearized
    flow from the start to ``times[k]``.
    """
    x0 = np.asarray(x0, dtype=float)
    d = x0.size

    def rhs(t, z):
        x = z[:d]
        psi = z[d:].reshape(d, d)
        return np.concatenate([field(t, x), (jacobian(t, x) @ psi).ravel()])

    z0 = np.concatenate([x0, np.eye(d).ravel()])
    times, states = integrate_flow(rhs, z0, t_span, steps, sample_every)
    return times, states[:, :d], states[:, d:].reshape(-1, d, d)
