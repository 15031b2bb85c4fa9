"""Objectives with full and sketched gradient queries, plus problem builders."""

from __future__ import annotations

from enum import Enum

import numpy as np
from scipy.special import expit

from rsnag.smoothness import (
    DiagonalModel,
    DiagPlusLowRankModel,
    GramPlusRidgeModel,
    SmoothnessModel,
)

__all__ = [
    "Objective",
    "QuadraticObjective",
    "LogisticObjective",
    "QuadraticKind",
    "quadratic_instance",
    "logistic_from_data",
    "reference_value",
    "newton_reference",
]


class Objective:
    """A differentiable objective certified by a smoothness model.

    Attributes:
        d: Dimension.
        smoothness: The matrix-smoothness model for ``f``.
        optimum_value: ``f*`` when known in closed form, else ``None``.
        optimum_point: ``x*`` when known in closed form, else ``None``.
    """

    kind = "abstract"

    def __init__(self, smoothness: SmoothnessModel, optimum_value=None, optimum_point=None):
        self.smoothness = smoothness
        self.d = smoothness.d
        self.optimum_value = optimum_value
        self.optimum_point = optimum_point
        self._reference: float | None = None

    @property
    def mu(self) -> float:
        return self.smoothness.mu

    @property
    def L(self) -> float:
        return self.smoothness.L

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise ValueError(f"expected a vector of length {self.d}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("objective evaluated at a non-finite point")
        return x

    def value(self, x) -> float:
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def sketched_grad(self, x, P) -> np.ndarray:
        """Return ``P^T grad f(x)``.

        Billed as ``r`` directional-derivative queries by the runner; here it
        is evaluated through the full gradient.
        """
        P = np.asarray(P, dtype=float)
        if P.ndim != 2 or P.shape[0] != self.d:
            raise ValueError(f"sketch must have {self.d} rows, got shape {P.shape}")
        return P.T @ self.grad(x)


class QuadraticObjective(Objective):
    """``f(x) = 1/2 x^T Lam x`` with ``f* = 0`` attained at ``x* = 0``."""

    kind = "quadratic"

    def __init__(self, smoothness: SmoothnessModel, name: str = "quadratic"):
        super().__init__(smoothness, 0.0, np.zeros(smoothness.d))
        self.name = name

    def value(self, x):
        x = self._check(x)
        return 0.5 * float(x @ self.smoothness.matvec(x))

    def grad(self, x):
        return self.smoothness.matvec(self._check(x))

    def __repr__(self):
        return f"QuadraticObjective({self.name}, d={self.d})"


class LogisticObjective(Objective):
    """``(1/n) sum_i log(1 + exp(-y_i a_i^T x)) + (mu/2) ||x||^2``."""

    kind = "logistic"

    def __init__(self, A, y, mu: float, name: str = "logistic"):
        A = np.asarray(A, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        if A.ndim != 2 or A.shape[0] < 1:
            raise ValueError(f"data matrix must be n x d with n >= 1, got shape {A.shape}")
        if y.size != A.shape[0]:
            raise ValueError(f"{y.size} labels for {A.shape[0]} rows")
        if not np.all((y == 1.0) | (y == -1.0)):
            raise ValueError("labels must be in {-1, +1}")
        if not mu > 0:
            raise ValueError(f"logistic ridge mu must be positive, got {mu}")
        super().__init__(GramPlusRidgeModel(A, mu))
        self.A = A
        self.y = y
        self.n = A.shape[0]
        self.name = name

    def value(self, x):
        x = self._check(x)
        t = self.y * (self.A @ x)
        # log(1 + exp(-t)) without overflow
        loss = np.log1p(np.exp(-np.abs(t))) + np.maximum(-t, 0.0)
        return float(loss.mean() + 0.5 * self.mu * (x @ x))

    def grad(self, x):
        x = self._check(x)
        t = self.y * (self.A @ x)
        w = self.y * expit(-t)
        return -(self.A.T @ w) / self.n + self.mu * x

    def hessian(self, x) -> np.ndarray:
        x = self._check(x)
        s = expit(self.y * (self.A @ x))
        return (self.A.T * (s * (1 - s))) @ self.A / self.n + self.mu * np.eye(self.d)

    def __repr__(self):
        return f"LogisticObjective({self.name}, n={self.n}, d={self.d}, mu={self.mu:g})"


class QuadraticKind(str, Enum):
    CONVEX_DIAG = "ConvexDiag"
    CONVEX_DENSE = "ConvexDense"
    SC_DIAG = "SCDiag"
    SC_DENSE = "SCDense"


def quadratic_instance(kind, d: int) -> QuadraticObjective:
    """Build one of the four benchmark quadratics.

    All four have ``L = 1`` and effective rank 2. The diagonal ones have
    diagonal ratio 1, the dense ones ``2/d``; the strongly convex ones have
    ``mu = 1/(d-1)``.
    """
    kind = QuadraticKind(kind)
    d = int(d)
    if d < 4:
        raise ValueError(f"quadratic instances need d >= 4, got {d}")
    ones = np.full(d, 1.0 / np.sqrt(d))
    if kind is QuadraticKind.CONVEX_DIAG:
        diag = np.full(d, 1.0 / (d - 2))
        diag[0], diag[-1] = 1.0, 0.0
        model = DiagonalModel(diag)
    elif kind is QuadraticKind.CONVEX_DENSE:
        if d % 2:
            raise ValueError(f"ConvexDense needs an even dimension, got d={d}")
        u = np.tile([1.0, -1.0], d // 2) / np.sqrt(d)
        c = 1.0 / (d - 2)
        model = DiagPlusLowRankModel(np.full(d, c), [(1.0 - c, u), (-c, ones)])
    elif kind is QuadraticKind.SC_DIAG:
        diag = np.full(d, 1.0 / (d - 1))
        diag[0] = 1.0
        model = DiagonalModel(diag, mu=1.0 / (d - 1))
    else:
        model = DiagPlusLowRankModel(
            np.full(d, 1.0 / (d - 1)), [((d - 2) / (d - 1), ones)], mu=1.0 / (d - 1)
        )
    return QuadraticObjective(model, name=f"{kind.value}(d={d})")


def logistic_from_data(A, y, mu: float, name: str = "logistic") -> LogisticObjective:
    return LogisticObjective(A, y, mu, name=name)


def reference_value(obj: Objective, tol: float = 1e-10, max_iter: int = 1_000_000) -> float:
    """Return ``f*`` if known, else a tight upper estimate of it.

    The estimate runs full-gradient constant-momentum NAG from the origin
    until ``||grad f|| <= tol``. For a ``mu``-strongly convex ``f`` the
    returned value exceeds ``f*`` by at most ``tol**2 / (2 mu)``. Cached on
    the objective.
    """
    if obj.optimum_value is not None:
        return float(obj.optimum_value)
    if obj._reference is not None:
        return obj._reference
    mu = obj.mu
    if not mu > 0:
        raise ValueError("reference value undefined: optimum unknown and mu = 0")
    L = obj.L
    beta = (np.sqrt(L) - np.sqrt(mu)) / (np.sqrt(L) + np.sqrt(mu))
    x = np.zeros(obj.d)
    y = x.copy()
    for _ in range(max_iter):
        g = obj.grad(y)
        if np.linalg.norm(g) <= tol:
            x = y
            break
        x_new = y - g / L
        y = x_new + beta * (x_new - x)
        x = x_new
    else:
        raise RuntimeError(f"reference solver did not reach ||grad|| <= {tol:g}")
    obj._reference = obj.value(x)
    return obj._reference


def newton_reference(obj: LogisticObjective, tol: float = 1e-12, max_iter: int = 100) -> float:
    """Damped-Newton estimate of ``f*`` for a small logistic problem.

    Used to cross-check :func:`reference_value`; forms the ``d x d``
    Hessian, so keep ``d`` small.
    """
    if obj.d > 2000:
        raise ValueError(f"Newton cross-check forms a d x d Hessian; d={obj.d} is too large")
    x = np.zeros(obj.d)
    for _ in range(max_iter):
        g = obj.grad(x)
        if np.linalg.norm(g) <= tol:
            return obj.value(x)
        step = np.linalg.solve(obj.hessian(x), g)
        t, f0, slope = 1.0, obj.value(x), float(g @ step)
        # Armijo backtracking
        while obj.value(x - t * step) > f0 - 0.25 * t * slope and t > 1e-12:
            t *= 0.5
        x = x - t * step
    raise RuntimeError(f"Newton did not reach ||grad|| <= {tol:g} in {max_iter} iterations")
