"""Input validation helpers shared by the public functions and estimators."""

import numpy as np

from .exceptions import InvalidArgumentError, PreconditionError


def check_even_vector(x, name="x"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2 or x.size % 2:
        raise InvalidArgumentError(f"{name} must be a vector of even length >= 2, got shape {x.shape}")
    return x


def check_samples(samples, dim=None, name="samples"):
    """Return ``samples`` as a finite float array of shape (N, dim)."""
    arr = np.asarray(samples, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InvalidArgumentError(f"{name} must be 2-D (N, dim), got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise InvalidArgumentError(f"{name} must have {dim} columns, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite values")
    return arr


def check_square(matrix, name="matrix"):
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgumentError(f"{name} must be square, got shape {a.shape}")
    return a


def check_symmetric(matrix, atol=0.0, name="matrix"):
    a = check_square(matrix, name)
    if np.max(np.abs(a - a.T), initial=0.0) > atol:
        raise PreconditionError(f"{name} is not symmetric")
    return a


def check_symplectic(matrix, atol=1e-8, name="matrix"):
    from .core import complex_structure

    a = check_square(matrix, name)
    if a.shape[0] % 2:
        raise InvalidArgumentError(f"{name} must have even size")
    J = complex_structure(a.shape[0] // 2)
    defect = np.max(np.abs(a.T @ J @ a - J))
    if defect > atol:
        raise PreconditionError(f"{name} is not symplectic (defect {defect:.3e})")
    return a


def check_random_state(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
