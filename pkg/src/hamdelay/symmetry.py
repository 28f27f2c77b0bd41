"""Iteration and time shift: the monoid of pairs ``(n, r)``, ``n`` a nonzero integer.

Elements compose as ``(n1, r1)(n2, r2) = (n1 n2, n1 r2 + r1 mod 1)`` and act
on loops by ``u -> u(n t + r)``. With that action,
``act(g1, act(g2, u)) = act(compose(g2, g1), u)``: loops carry a right
action. On pairs the monoid acts by ``f -> f / n``, and a loop is critical
for the pulled-back pair exactly when its image is critical for the original.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Real

import numpy as np

from .core import Loop, trig_interpolate
from .exceptions import InvalidArgumentError
from .pair import critical_residual


@dataclass(frozen=True)
class MonoidElement:
    """``(n, r)`` with ``n != 0`` and ``r`` reduced to ``[0, 1)``.

    ``r`` may be a :class:`fractions.Fraction`, in which case composition is exact.
    """

    n: int
    r: Real = 0.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n == 0:
            raise InvalidArgumentError(f"n must be a nonzero integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        r = self.r if isinstance(self.r, Fraction) else float(self.r)
        r = r - math.floor(r)
        if r == 1:  # float rounding of tiny negatives
            r = 0.0
        object.__setattr__(self, "r", r)


IDENTITY = MonoidElement(1, 0)


def compose(g1, g2):
    return MonoidElement(g1.n * g2.n, g1.n * g2.r + g1.r)


def act(g, u, method="trig"):
    """Resample ``u`` at ``n t_k + r``.

    ``method="trig"`` evaluates the trigonometric interpolant (exact for
    band-limited loops); ``"linear"`` uses periodic linear interpolation for
    rough data.
    """
    times = np.mod(g.n * u.grid.nodes + float(g.r), 1.0)
    if method == "trig":
        values = trig_interpolate(u.samples, times, offset=u.grid.offset)
    elif method == "linear":
        N = u.grid.N
        pos = (times * N - u.grid.offset) % N
        lo = np.floor(pos).astype(int)
        w = (pos - lo)[:, None]
        values = (1 - w) * u.samples[lo % N] + w * u.samples[(lo + 1) % N]
    else:
        raise InvalidArgumentError(f"unknown method {method!r}")
    return Loop(u.grid, values)


def pullback_pair(g, pair):
    """Pair ``(f / n, H)`` on the same ``W``."""
    if g.n == 1:
        return pair
    return pair.scaled(1.0 / g.n, name=f"{pair.name}/{g.n}" if pair.name else "")


@dataclass(frozen=True)
class PropositionReport:
    residual_pullback: float
    residual_acted: float
    tol: float

    @property
    def critical_pullback(self):
        return self.residual_pullback <= self.tol

    @property
    def critical_acted(self):
        return self.residual_acted <= self.tol

    @property
    def agreement(self):
        return self.critical_pullback == self.critical_acted

    def to_dict(self):
        return {
            "residual_pullback": self.residual_pullback,
            "residual_acted": self.residual_acted,
            "tol": self.tol,
            "critical_pullback": self.critical_pullback,
            "critical_acted": self.critical_acted,
            "agreement": self.agreement,
        }


def proposition_check(pair, g, u, tol=1e-7):
    """Compare criticality of ``u`` for ``g^* pair`` with that of ``g_* u`` for ``pair``."""
    rho_pull = critical_residual(pullback_pair(g, pair), u).sup_norm()
    rho_act = critical_residual(pair, act(g, u)).sup_norm()
    return PropositionReport(rho_pull, rho_act, tol)


def solve_pulled_back(system, g, k=1, config=None):
    """Critical point of ``g^* F`` on branch ``k``.

    If ``v`` is critical for the pulled-back pair with winding ``k``, its image
    ``act(g, v)`` is critical for the original pair with winding ``k |n|`` and
    the same mean, so the original branch guess at ``k |n|`` seeds the solve.
    """
    from dataclasses import replace

    from .solver import SolveConfig, self_consistent_solve

    config = config or SolveConfig()
    mu0, x0 = system.guess(k * abs(g.n))
    config = replace(config, mu0=tuple(np.atleast_1d(mu0)), guess=tuple(x0))
    return self_consistent_solve(pullback_pair(g, system.pair), config)
