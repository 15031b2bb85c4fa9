"""Randomized-subspace gradient steps: accelerated (convex and strongly
convex) and plain.

Each step evaluates one sketched direction ``P P^T grad f(y)`` and returns a
new state; states are never mutated. Passing ``P=None`` means the identity
sketch, i.e. the full gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Optional

import numpy as np

from rsnag.problems import Objective

__all__ = [
    "Method",
    "DivergenceError",
    "ConvexState",
    "StrongState",
    "GdState",
    "a_next",
    "init_convex",
    "init_strong",
    "init_gd",
    "init_state",
    "rs_nag_c_step",
    "rs_nag_sc_step",
    "rs_gd_step",
    "step",
    "sketched_direction",
    "theoretical_bound",
    "bound_from_scalars",
]

Oracle = Callable[[np.ndarray, Optional[np.ndarray]], np.ndarray]


class Method(str, Enum):
    RS_NAG_C = "rs_nag_c"
    RS_NAG_SC = "rs_nag_sc"
    RS_GD_CONVEX = "rs_gd_convex"
    RS_GD_SC = "rs_gd_sc"

    @property
    def strongly_convex(self) -> bool:
        return self in (Method.RS_NAG_SC, Method.RS_GD_SC)


class DivergenceError(ArithmeticError):
    """A step produced a non-finite iterate."""

    def __init__(self, iteration: int, state, trace=None):
        super().__init__(f"non-finite iterate at iteration {iteration}")
        self.iteration = iteration
        self.state = state
        self.trace = trace


@dataclass(frozen=True)
class ConvexState:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    A: float
    m: float
    omega: float
    ell: float
    L: float
    k: int = 0
    a: float = 0.0


@dataclass(frozen=True)
class StrongState:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    theta: float
    L: float
    mu: float
    ell: float
    k: int = 0


@dataclass(frozen=True)
class GdState:
    x: np.ndarray
    eta: float
    k: int = 0


def sketched_direction(obj: Objective, y: np.ndarray, P: Optional[np.ndarray]) -> np.ndarray:
    """``P P^T grad f(y)``, or the full gradient when ``P`` is ``None``."""
    if P is None:
        return obj.grad(y)
    return P @ obj.sketched_grad(y, P)


def a_next(A: float, m: float, omega: float) -> float:
    """Positive root ``a`` of ``(omega/2) a^2 - m a - m A = 0``."""
    if m <= 0 or omega <= 0:
        raise ValueError(f"need m > 0 and omega > 0, got m={m}, omega={omega}")
    if A < 0:
        raise ValueError(f"A must be nonnegative, got {A}")
    return (m + math.sqrt(m * m + 2.0 * omega * m * A)) / omega


def init_convex(x0, L: float, omega: float, ell: float) -> ConvexState:
    x0 = np.array(x0, dtype=float)
    if not (L > 0 and omega > 0 and ell > 0):
        raise ValueError("L, omega and ell must be positive")
    return ConvexState(x=x0, y=x0, z=x0, A=0.0, m=1.0 / (2.0 * L * ell), omega=omega, ell=ell, L=L)


def init_strong(x0, L: float, mu: float, omega: float, ell: float) -> StrongState:
    x0 = np.array(x0, dtype=float)
    if not mu > 0:
        raise ValueError(f"strongly convex method needs mu > 0, got {mu}")
    # both hold for any valid problem and sketch; failure means a bad constant
    assert mu <= L * (1 + 1e-12), f"mu={mu} exceeds L={L}"
    assert omega * ell >= 1 - 1e-12, f"omega*ell={omega * ell} < 1"
    theta = min(1.0, math.sqrt(mu / (L * omega * ell)))
    return StrongState(x=x0, y=x0, z=x0, theta=theta, L=L, mu=mu, ell=ell)


def init_gd(x0, L: float, omega: float, ell: float, strongly_convex: bool) -> GdState:
    eta = 1.0 / (ell * L) if strongly_convex else 1.0 / (2.0 * omega * L)
    return GdState(x=np.array(x0, dtype=float), eta=eta)


def init_state(method, x0, obj: Objective, omega: float, ell: float):
    method = Method(method)
    L = obj.L
    if method is Method.RS_NAG_C:
        return init_convex(x0, L, omega, ell)
    if method is Method.RS_NAG_SC:
        return init_strong(x0, L, obj.mu, omega, ell)
    if method is Method.RS_GD_SC and not obj.mu > 0:
        raise ValueError("strongly convex RS-GD needs mu > 0")
    return init_gd(x0, L, omega, ell, method.strongly_convex)


def _finite(state, *vecs):
    for v in vecs:
        if not np.all(np.isfinite(v)):
            raise DivergenceError(state.k, state)


def rs_nag_c_step(state: ConvexState, obj: Objective, P, oracle: Oracle | None = None) -> ConvexState:
    a = a_next(state.A, state.m, state.omega)
    A_new = state.A + a
    y = (state.A / A_new) * state.x + (a / A_new) * state.z
    u = oracle(y, P) if oracle else sketched_direction(obj, y, P)
    x = y - u / (state.L * state.ell)
    z = state.z - a * u
    new = replace(state, x=x, y=y, z=z, A=A_new, a=a, k=state.k + 1)
    _finite(new, x, z)
    return new


def rs_nag_sc_step(state: StrongState, obj: Objective, P, oracle: Oracle | None = None) -> StrongState:
    th = state.theta
    y = state.x / (1 + th) + (th / (1 + th)) * state.z
    u = oracle(y, P) if oracle else sketched_direction(obj, y, P)
    x = y - u / (state.L * state.ell)
    z = (1 - th) * state.z + th * y - (th / state.mu) * u
    new = replace(state, x=x, y=y, z=z, k=state.k + 1)
    _finite(new, x, z)
    return new


def rs_gd_step(state: GdState, obj: Objective, P, oracle: Oracle | None = None) -> GdState:
    u = oracle(state.x, P) if oracle else sketched_direction(obj, state.x, P)
    x = state.x - state.eta * u
    new = replace(state, x=x, k=state.k + 1)
    _finite(new, x)
    return new


def step(state, obj: Objective, P, oracle: Oracle | None = None):
    if isinstance(state, ConvexState):
        return rs_nag_c_step(state, obj, P, oracle)
    if isinstance(state, StrongState):
        return rs_nag_sc_step(state, obj, P, oracle)
    return rs_gd_step(state, obj, P, oracle)


def theoretical_bound(method, obj: Objective, consts, N: int, R0_or_Delta0: float) -> float:
    """Expected-gap bound after ``N`` iterations.

    ``consts`` is any object with ``omega`` and ``ell`` attributes (see
    :class:`rsnag.sketches.SketchConstants`). The last argument is
    ``R0 = ||x0 - x*||`` for the convex methods and ``f(x0) - f*`` for the
    strongly convex ones.
    """
    return bound_from_scalars(method, obj.L, obj.mu, consts.omega, consts.ell, N, R0_or_Delta0)


def bound_from_scalars(method, L, mu, omega, ell, N, R0_or_Delta0) -> float:
    method = Method(method)
    if N < 0 or (N < 1 and not method.strongly_convex):
        raise ValueError(f"invalid iteration count N={N}")
    if method is Method.RS_NAG_C:
        return 2.0 * L * omega * ell * R0_or_Delta0**2 / N**2
    if method is Method.RS_GD_CONVEX:
        return 2.0 * omega * L * R0_or_Delta0**2 / N
    if method is Method.RS_NAG_SC:
        theta = min(1.0, math.sqrt(mu / (L * omega * ell)))
        return 2.0 * (1.0 - theta) ** N * R0_or_Delta0
    return (1.0 - mu / (ell * L)) ** N * R0_or_Delta0
