"""Twisted-loop operators ``D xi = J xi' + sum_ij a_ij (int <Y_i, xi>) Y_j``.

The domain is paths on ``[0, 1]`` with ``xi(1) = Phi xi(0)`` for a linear
symplectomorphism ``Phi``. The discretization is the box (midpoint) scheme:
unknowns are ``xi(t_k)`` at ``t_k = k/N``, equations live at the cell
midpoints ``t_{k+1/2}``, the wrap uses ``xi(t_N) := Phi xi(t_0)`` and
midpoint values are node averages. Unlike central differences on the nodes,
this has no spurious alternating kernel mode, and its kernel is an exact
discrete copy of the continuous kernel equation.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ._validation import check_random_state, check_square, check_symmetric, check_symplectic
from .core import FieldAlongLoop, TimeGrid, apply_J, complex_structure, omega
from .exceptions import InvalidArgumentError, NumericalError, PreconditionError


@dataclass(frozen=True)
class OperatorSpec:
    """Data ``(Phi, Y_1..Y_m, A)`` of a twisted-loop operator on an ``N`` grid.

    ``Ys`` has shape ``(m, N, 2n)`` and holds ``Y_j`` at the cell midpoints
    ``(k + 1/2) / N``. ``resample``, when given, rebuilds the same operator
    on another grid size (used by refinement checks).
    """

    Phi: np.ndarray
    Ys: np.ndarray
    A: np.ndarray
    grid: TimeGrid
    symplectic_atol: float = 1e-8
    resample: Optional[Callable] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        Phi = check_symplectic(self.Phi, self.symplectic_atol, "Phi")
        A = check_symmetric(np.atleast_2d(np.asarray(self.A, float)) if np.size(self.A) else np.zeros((0, 0)),
                            name="A")
        Ys = np.asarray(self.Ys, float)
        m = A.shape[0]
        if Ys.size == 0:
            Ys = np.zeros((m, self.grid.N, Phi.shape[0]))
        if Ys.shape != (m, self.grid.N, Phi.shape[0]):
            raise InvalidArgumentError(f"Ys must have shape {(m, self.grid.N, Phi.shape[0])}, got {Ys.shape}")
        for arr in (Phi, A, Ys):
            arr.setflags(write=False)
        object.__setattr__(self, "Phi", Phi)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "Ys", Ys)

    @property
    def n(self):
        return self.Phi.shape[0] // 2

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def N(self):
        return self.grid.N

    @property
    def size(self):
        return 2 * self.n * self.N

    @property
    def kernel_bound(self):
        return 2 * self.n + self.m


def make_operator(Phi, Y_funcs, A, N, **kwargs):
    """Build an :class:`OperatorSpec` from callables ``Y_j(t) -> (len(t), 2n)``."""
    Phi = np.asarray(Phi, float)
    A = np.atleast_2d(np.asarray(A, float)) if len(Y_funcs) else np.zeros((0, 0))
    grid = TimeGrid(N)
    mids = grid.midpoints().nodes
    Ys = np.array([np.broadcast_to(Y(mids), (N, Phi.shape[0])) for Y in Y_funcs]).reshape(len(Y_funcs), N, Phi.shape[0])

    def resample(N2):
        return make_operator(Phi, Y_funcs, A, N2, **kwargs)

    return OperatorSpec(Phi, Ys, A, grid, resample=resample, **kwargs)


def _shifted(spec, xi):
    """``xi(t_{k+1})`` for each node, with the twisted wrap."""
    nxt = np.roll(xi, -1, axis=0)
    nxt[-1] = spec.Phi @ xi[0]
    return nxt


def nonlocal_coefficients(spec, xi):
    """``s_i = int <Y_i, xi>`` by midpoint quadrature of node averages."""
    avg = 0.5 * (xi + _shifted(spec, xi))
    return spec.grid.h * np.einsum("jkd,kd->j", spec.Ys, avg)


def _field(spec, xi):
    if isinstance(xi, FieldAlongLoop):
        if xi.grid.N != spec.N:
            raise InvalidArgumentError(f"field has N={xi.grid.N}, operator has N={spec.N}")
        xi = xi.samples
    xi = np.asarray(xi, float)
    if xi.shape != (spec.N, 2 * spec.n):
        raise InvalidArgumentError(f"field must have shape {(spec.N, 2 * spec.n)}, got {xi.shape}")
    return xi


def apply(spec, xi):
    """Apply the discrete operator; the result lives on the midpoint grid."""
    xi = _field(spec, xi)
    diff = (_shifted(spec, xi) - xi) / spec.grid.h
    out = apply_J(diff)
    if spec.m:
        s = nonlocal_coefficients(spec, xi)
        out = out + np.einsum("i,ij,jkd->kd", s, spec.A, spec.Ys)
    return FieldAlongLoop(spec.grid.midpoints(), out)


def operator_factors(spec):
    """Sparse local part ``L`` and low-rank factors with ``M = L + P Q^T``."""
    N, d2 = spec.N, 2 * spec.n
    h = spec.grid.h
    J = complex_structure(spec.n).astype(float)
    diag = sp.kron(sp.identity(N), -J / h)
    upper = sp.kron(sp.eye(N, k=1), J / h)
    wrap = sp.kron(sp.csr_matrix(([1.0], ([N - 1], [0])), shape=(N, N)), J @ spec.Phi / h)
    L = (diag + upper + wrap).tocsr()
    m = spec.m
    if m == 0:
        return L, np.zeros((N * d2, 0)), np.zeros((N * d2, 0))
    Y = spec.Ys
    P = np.einsum("ij,jkd->ikd", spec.A, Y).reshape(m, -1).T
    Q = np.zeros((m, N, d2))
    Q[:, :, :] += 0.5 * h * Y
    Q[:, 1:, :] += 0.5 * h * Y[:, :-1, :]
    Q[:, 0, :] += 0.5 * h * Y[:, -1, :] @ spec.Phi
    return L, P, Q.reshape(m, -1).T


def assemble_matrix(spec):
    """Dense ``(2nN) x (2nN)`` matrix; row blocks are midpoints, columns nodes."""
    L, P, Q = operator_factors(spec)
    return L.toarray() + P @ Q.T


def local_matrix(spec):
    return operator_factors(spec)[0].toarray()


# ---------------------------------------------------------------- symmetry


def _twisted_test_field(spec, rng, modes=2):
    """Smooth twisted field ``zeta(t) + t (Phi - I) zeta(0)`` with band-limited zeta.

    Returns a callable of ``t`` normalized to unit L2 norm on ``[0, 1]``.
    """
    d2 = 2 * spec.n
    k = np.arange(1, modes + 1)
    a0 = rng.standard_normal(d2)
    a = rng.standard_normal((modes, d2)) / (1 + k[:, None] ** 2)
    b = rng.standard_normal((modes, d2)) / (1 + k[:, None] ** 2)
    jump = (spec.Phi - np.eye(d2)) @ (a0 + a.sum(axis=0))

    def raw(t):
        t = np.asarray(t, float)[:, None]
        zeta = a0 + np.cos(2 * np.pi * t * k) @ a + np.sin(2 * np.pi * t * k) @ b
        return zeta + t * jump

    fine = (np.arange(4096) + 0.5) / 4096
    scale = 1.0 / np.sqrt(np.mean(np.sum(raw(fine) ** 2, axis=1)))
    return lambda t: scale * raw(t)


def l2_pairing(spec, image, field_fn):
    """Midpoint-rule ``<image, eta>`` with ``eta`` evaluated exactly at midpoints."""
    mids = spec.grid.midpoints().nodes
    return spec.grid.h * float(np.sum(image.samples * field_fn(mids)))


def symmetry_defect(spec, trials=8, seed=0, modes=2):
    """Largest ``|<D xi, eta> - <xi, D eta>|`` over random smooth twisted pairs.

    The pairing is the L2 product on ``[0, 1]`` (midpoint rule with exact
    field values), so the defect measures how far the discrete operator is
    from the symmetric continuum operator; it decays like ``N^-2``.
    """
    rng = check_random_state(seed)
    nodes = spec.grid.nodes
    worst = 0.0
    for _ in range(trials):
        xi = _twisted_test_field(spec, rng, modes)
        eta = _twisted_test_field(spec, rng, modes)
        lhs = l2_pairing(spec, apply(spec, xi(nodes)), eta)
        rhs = l2_pairing(spec, apply(spec, eta(nodes)), xi)
        worst = max(worst, abs(lhs - rhs))
    return worst


def defect_decay_order(build, grids=(64, 128, 256, 512), trials=8, seed=0):
    """Least-squares slope of ``-log(defect)`` against ``log N``."""
    defects = np.array([symmetry_defect(build(N), trials, seed) for N in grids])
    slope = np.polyfit(np.log(grids), np.log(defects), 1)[0]
    return -slope, defects


# ---------------------------------------------------------------- nullity


@dataclass
class SpectralReport:
    singular_values: np.ndarray
    nullity: int
    tolerance_used: float
    symmetry_defect: float = float("nan")
    bound: Optional[int] = None
    bound_satisfied: Optional[bool] = None
    method: str = "dense"
    refinement: Optional[dict] = None

    def __post_init__(self):
        if self.bound is not None:
            self.bound_satisfied = self.nullity <= self.bound

    def to_dict(self):
        return {
            "nullity": int(self.nullity),
            "tolerance_used": float(self.tolerance_used),
            "bound": self.bound,
            "bound_satisfied": self.bound_satisfied,
            "symmetry_defect": float(self.symmetry_defect),
            "method": self.method,
            "smallest_singular_values": [float(s) for s in np.sort(self.singular_values)[:12]],
            "largest_singular_value": float(np.max(self.singular_values)) if self.singular_values.size else 0.0,
            "refinement": self.refinement,
        }


def default_atol(N):
    return 1e-8 * np.sqrt(N)


def numerical_nullity(matrix, atol=1e-8, rtol=1e-10, bound=None):
    """Nullity of a square matrix from its full singular value decomposition."""
    a = check_square(matrix)
    try:
        s = sla.svdvals(a)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"SVD failed: {exc}") from exc
    tol = max(atol, rtol * (s[0] if s.size else 0.0))
    return SpectralReport(s, int(np.sum(s < tol)), tol, bound=bound)


def _largest_singular_value(L, P, Q, iters=60):
    rng = np.random.default_rng(12345)
    x = rng.standard_normal(L.shape[1])
    s = 0.0
    for _ in range(iters):
        y = L @ x + P @ (Q.T @ x)
        x = L.T @ y + Q @ (P.T @ y)
        s = np.sqrt(np.linalg.norm(x))
        x /= np.linalg.norm(x)
    return s


def smallest_singular_values(L, P, Q, count, shift=1e-6, max_iter=40, rtol=1e-9, floor=0.0, ceiling=np.inf):
    """Smallest ``count`` singular values of ``M = L + P Q^T`` (L sparse).

    Block inverse iteration with ``(M^T M + shift^2 I)^{-1}``, applied through
    a sparse LU of a bordered system that never forms ``M``, followed by a
    Rayleigh-Ritz step on ``M X`` so the reported values carry the accuracy
    of ``M`` itself rather than of ``M^T M``. Ritz values bound the true
    singular values from above. Iteration stops once every Ritz value is
    stable to ``rtol``, lies below ``floor`` (a kernel direction whatever its
    exact size) or lies above ``ceiling`` (irrelevant to the rank decision).
    Returns ``(values ascending, right singular vectors)``.
    """
    d = L.shape[0]
    m = P.shape[1]
    eye = sp.identity(d, format="csr")
    Im = sp.identity(m, format="csr")
    Ps, Qs = sp.csr_matrix(P), sp.csr_matrix(Q)
    Z = None
    K = sp.bmat(
        [
            [-L, eye, -Ps, Z],
            [shift**2 * eye, L.T, Z, Qs],
            [Qs.T, Z, -Im, Z],
            [Z, Ps.T, Z, -Im],
        ]
        if m
        else [[-L, eye], [shift**2 * eye, L.T]],
        format="csc",
    )
    lu = splu(K)

    def solve(B):
        rhs = np.zeros((K.shape[0], B.shape[1]))
        rhs[d:2 * d] = B
        return lu.solve(rhs)[:d]

    def matvec(X):
        return L @ X + P @ (Q.T @ X)

    rng = np.random.default_rng(2024)
    X = np.linalg.qr(rng.standard_normal((d, count)))[0]
    prev = None
    for _ in range(max_iter):
        X = np.linalg.qr(solve(X))[0]
        _, s, vt = np.linalg.svd(matvec(X), full_matrices=False)
        X = X @ vt.T
        s = s[::-1]
        X = X[:, ::-1]
        if prev is not None and np.all((np.abs(s - prev) <= rtol * np.maximum(1.0, s)) | (s < floor) | (s > ceiling)):
            break
        prev = s
    return s, X


def operator_nullity(spec, atol=None, rtol=1e-10, method="auto", extra=4, symmetry_trials=0, seed=0):
    """Nullity of the assembled operator with the ``2n + m`` bound attached.

    ``method="dense"`` runs a full SVD of :func:`assemble_matrix`;
    ``"sparse"`` computes only the ``2n + m + extra`` smallest singular values
    and falls back to dense when all of them fall below the threshold.
    """
    atol = default_atol(spec.N) if atol is None else atol
    bound = spec.kernel_bound
    if method == "auto":
        method = "dense" if spec.size <= 512 else "sparse"
    if method == "dense":
        rep = numerical_nullity(assemble_matrix(spec), atol, rtol, bound)
    elif method == "sparse":
        L, P, Q = operator_factors(spec)
        count = min(bound + extra, spec.size)
        smax = _largest_singular_value(L, P, Q)
        tol = max(atol, rtol * smax)
        small, _ = smallest_singular_values(L, P, Q, count, floor=0.01 * tol, ceiling=1e3 * tol)
        nullity = int(np.sum(small < tol))
        if nullity == count:
            return operator_nullity(spec, atol, rtol, "dense", extra, symmetry_trials, seed)
        values = np.concatenate([[smax], small[::-1]])
        rep = SpectralReport(values, nullity, tol, bound=bound, method="sparse")
    else:
        raise InvalidArgumentError(f"unknown method {method!r}")
    if symmetry_trials:
        rep.symmetry_defect = symmetry_defect(spec, symmetry_trials, seed)
    return rep


def refined_nullity(spec, atol=None, rtol=1e-10, method="auto", ratio=2):
    """Nullity at ``N`` and at ``ratio * N``; kernel counts must agree.

    Discretization noise shrinks under refinement while true kernel
    directions stay at round-off level, so a stable count separates them.
    """
    if spec.resample is None:
        raise PreconditionError("operator has no resample hook; cannot refine")
    coarse = operator_nullity(spec, atol, rtol, method)
    fine = operator_nullity(spec.resample(ratio * spec.N), atol, rtol, method)
    coarse.refinement = {
        "N_fine": ratio * spec.N,
        "nullity_fine": fine.nullity,
        "confirmed": coarse.nullity == fine.nullity,
        "smallest_fine": [float(s) for s in np.sort(fine.singular_values)[:8]],
    }
    return coarse


def kernel_basis(spec, atol=None, rtol=1e-10):
    """Orthonormal basis of the numerical kernel as ``(k, N, 2n)`` node fields."""
    atol = default_atol(spec.N) if atol is None else atol
    M = assemble_matrix(spec)
    _, s, vt = sla.svd(M)
    tol = max(atol, rtol * s[0])
    null = vt[s < tol]
    return null.reshape(-1, spec.N, 2 * spec.n) * np.sqrt(spec.N)


# ---------------------------------------------------------------- Gamma


def gamma_embedding(spec, xi):
    """``(xi(0), int <Y_1, xi>, ..., int <Y_m, xi>)`` in R^{2n + m}."""
    xi = _field(spec, xi)
    s = nonlocal_coefficients(spec, xi) if spec.m else np.zeros(0)
    return np.concatenate([xi[0], s])


def reconstruct_from_gamma(spec, gamma):
    """Rebuild a kernel element from its image under the Gamma map.

    Discrete form of ``xi(t) = xi(0) + sum a_ij s_i int_0^t J Y_j``: the
    cumulative integral is the midpoint sum matching the scheme.
    """
    d2 = 2 * spec.n
    gamma = np.asarray(gamma, float)
    xi0, s = gamma[:d2], gamma[d2:]
    out = np.tile(xi0, (spec.N, 1))
    if spec.m:
        drift = np.einsum("i,ij,jkd->kd", s, spec.A, apply_J(spec.Ys))
        cum = spec.grid.h * np.concatenate([np.zeros((1, d2)), np.cumsum(drift, axis=0)[:-1]])
        out = out + cum
    return FieldAlongLoop(spec.grid, out)


# ---------------------------------------------------------------- commuting


@dataclass(frozen=True)
class CommutingKernel:
    dimension: int
    initial_values: np.ndarray
    basis: np.ndarray
    singular_values: np.ndarray


def check_commuting_assumptions(spec, atol=1e-10):
    """Raise :class:`PreconditionError` naming the violated assumption."""
    if spec.m == 0:
        return
    scale = max(1.0, float(np.max(np.abs(spec.Ys))))
    variation = float(np.max(np.abs(spec.Ys - spec.Ys[:, :1, :])))
    if variation > atol * scale:
        raise PreconditionError(f"assumption (i) violated: Y_j vary in time by {variation:.3e}")
    Y = spec.Ys[:, 0, :]
    for i in range(spec.m):
        for j in range(i + 1, spec.m):
            w = abs(omega(Y[i], Y[j]))
            if w > atol * scale**2:
                raise PreconditionError(f"assumption (ii) violated: omega(Y_{i + 1}, Y_{j + 1}) = {w:.3e}")


def commuting_twist_matrix(spec):
    """``Phi - I - B`` with ``B = sum_ij a_ij (J Y_j) Y_i^T`` for constant ``Y``."""
    d2 = 2 * spec.n
    B = np.zeros((d2, d2))
    if spec.m:
        Y = spec.Ys[:, 0, :]
        B = np.einsum("ij,jd,ie->de", spec.A, apply_J(Y), Y)
    return spec.Phi - np.eye(d2) - B, B


def commuting_kernel(spec, atol=1e-8, assumption_atol=1e-10):
    """Closed-form kernel for time-independent, pairwise omega-orthogonal ``Y``.

    Kernel elements are ``xi(t) = xi0 + t B xi0`` with ``(Phi - I - B) xi0 = 0``.
    """
    check_commuting_assumptions(spec, assumption_atol)
    T, B = commuting_twist_matrix(spec)
    _, s, vt = np.linalg.svd(T)
    init = vt[s < atol]
    t = spec.grid.nodes
    basis = init[:, None, :] + t[None, :, None] * (init @ B.T)[:, None, :]
    return CommutingKernel(len(init), init, basis, s)


# ---------------------------------------------------------------- ensembles


def random_symplectic(n, rng, scale=1.0):
    """``expm(J S)`` for a random symmetric ``S``."""
    S = rng.standard_normal((2 * n, 2 * n)) * scale / np.sqrt(2 * n)
    S = 0.5 * (S + S.T)
    return sla.expm(complex_structure(n) @ S)


def random_instance(n, m, seed, commuting=False, N=256, twist="random", modes=2):
    """Random :class:`OperatorSpec`, deterministic in ``seed``.

    ``twist`` is ``"random"`` (``Phi = expm(J S)``) or ``"identity"``; the
    identity twist makes kernels non-trivial, which random twists almost never
    are. Commuting instances draw constant ``Y_j`` from a random Lagrangian
    subspace, so they are pairwise omega-orthogonal.
    """
    if n < 1 or m < 0:
        raise InvalidArgumentError("need n >= 1 and m >= 0")
    rng = check_random_state(seed)
    d2 = 2 * n
    Phi = random_symplectic(n, rng) if twist == "random" else np.eye(d2)
    if twist not in ("random", "identity"):
        raise InvalidArgumentError(f"unknown twist {twist!r}")
    G = rng.standard_normal((m, m))
    A = 0.5 * (G + G.T)
    if commuting:
        frame = random_symplectic(n, rng)[:, :n]
        Y = (frame @ rng.standard_normal((n, m))).T

        def make_Y(j):
            return lambda t: np.broadcast_to(Y[j], (len(t), d2))
    else:
        k = np.arange(1, modes + 1)
        coef = [
            (rng.standard_normal(d2), rng.standard_normal((modes, d2)) / (1 + k[:, None] ** 2),
             rng.standard_normal((modes, d2)) / (1 + k[:, None] ** 2))
            for _ in range(m)
        ]

        def make_Y(j):
            a0, a, b = coef[j]
            return lambda t: a0 + np.cos(2 * np.pi * np.outer(t, k)) @ a + np.sin(2 * np.pi * np.outer(t, k)) @ b

    return make_operator(Phi, [make_Y(j) for j in range(m)], A, N)
