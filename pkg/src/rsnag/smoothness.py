"""Matrix-smoothness operators and the scalars derived from them.

A smoothness model is a PSD matrix ``Lam`` bounding the curvature of an
objective,

    f(y) <= f(x) + <grad f(x), y - x> + 1/2 (y - x)^T Lam (y - x),

stored in one of four structured forms so that the matrix-vector action,
trace and diagonal never require a dense ``d x d`` array.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "SmoothnessModel",
    "DenseModel",
    "DiagonalModel",
    "DiagPlusLowRankModel",
    "GramPlusRidgeModel",
    "PowerIterationError",
    "spectral_norm",
    "effective_rank",
    "diag_ratio",
    "apply",
    "quad_form",
]

POWER_MAX_ITER = 10_000
POWER_EIG_TOL = 1e-12
POWER_RESIDUAL_TOL = 1e-10
POWER_SEED = 20240917


class PowerIterationError(RuntimeError):
    pass


class SmoothnessModel:
    """Base class for the structured forms of ``Lam``.

    Subclasses implement :meth:`matvec`, :meth:`trace` and :meth:`diagonal`.
    ``mu`` is the strong-convexity constant of the objective this model
    certifies (0 for merely convex problems).
    """

    form = "abstract"

    def __init__(self, d: int, mu: float = 0.0):
        d = int(d)
        if d < 2:
            raise ValueError(f"ambient dimension must be >= 2, got {d}")
        if mu < 0 or not np.isfinite(mu):
            raise ValueError(f"mu must be a finite nonnegative number, got {mu}")
        self.d = d
        self.mu = float(mu)
        self._L: float | None = None

    def matvec(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def trace(self) -> float:
        raise NotImplementedError

    def diagonal(self) -> np.ndarray:
        raise NotImplementedError

    def materialize(self) -> np.ndarray:
        """Return ``Lam`` as a dense array (columns are ``Lam e_i``)."""
        return self.matvec(np.eye(self.d))

    @property
    def L(self) -> float:
        if self._L is None:
            spectral_norm(self)
        return self._L

    def _check(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.d:
            raise ValueError(
                f"dimension mismatch: {self.form} model has d={self.d}, "
                f"vector has length {v.shape[0]}"
            )
        return v

    def __repr__(self):
        return f"{type(self).__name__}(d={self.d}, mu={self.mu})"


class DenseModel(SmoothnessModel):
    form = "dense"

    def __init__(self, matrix, mu: float = 0.0, check: bool = True):
        matrix = np.array(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"dense model needs a square matrix, got {matrix.shape}")
        if check and not np.allclose(matrix, matrix.T, rtol=1e-12, atol=1e-14):
            raise ValueError("dense model matrix is not symmetric")
        super().__init__(matrix.shape[0], mu)
        self.matrix = 0.5 * (matrix + matrix.T)

    def matvec(self, v):
        return self.matrix @ self._check(v)

    def trace(self):
        return float(np.trace(self.matrix))

    def diagonal(self):
        return np.diag(self.matrix).copy()

    def materialize(self):
        return self.matrix.copy()


class DiagonalModel(SmoothnessModel):
    form = "diagonal"

    def __init__(self, diag, mu: float = 0.0):
        diag = np.array(diag, dtype=float).ravel()
        if np.any(diag < 0):
            raise ValueError("diagonal model entries must be nonnegative")
        super().__init__(diag.size, mu)
        self.diag = diag

    def matvec(self, v):
        v = self._check(v)
        if v.ndim == 1:
            return self.diag * v
        return self.diag[:, None] * v

    def trace(self):
        return float(self.diag.sum())

    def diagonal(self):
        return self.diag.copy()


class DiagPlusLowRankModel(SmoothnessModel):
    """``diag(D) + sum_j c_j u_j u_j^T`` with unit vectors ``u_j``.

    Coefficients may be negative as long as the total stays PSD.
    """

    form = "diag_plus_low_rank"

    def __init__(self, diag, terms, mu: float = 0.0):
        diag = np.array(diag, dtype=float).ravel()
        super().__init__(diag.size, mu)
        self.diag = diag
        self.coefs = np.array([float(c) for c, _ in terms])
        vecs = [np.asarray(u, dtype=float).ravel() for _, u in terms]
        for u in vecs:
            if u.size != self.d:
                raise ValueError("low-rank vector length does not match diagonal")
            if abs(np.linalg.norm(u) - 1.0) > 1e-12:
                raise ValueError("low-rank vectors must have unit norm")
        self.vecs = np.array(vecs).reshape(len(vecs), self.d)

    def matvec(self, v):
        v = self._check(v)
        if v.ndim == 1:
            return self.diag * v + self.vecs.T @ (self.coefs * (self.vecs @ v))
        return self.diag[:, None] * v + self.vecs.T @ (self.coefs[:, None] * (self.vecs @ v))

    def trace(self):
        return float(self.diag.sum() + self.coefs.sum())

    def diagonal(self):
        return self.diag + (self.coefs[:, None] * self.vecs**2).sum(axis=0)


class GramPlusRidgeModel(SmoothnessModel):
    """``A^T A / (4n) + ridge * I`` for an ``n x d`` data matrix ``A``.

    This is the logistic-regression curvature bound; ``ridge`` doubles as
    the strong-convexity constant.
    """

    form = "gram_plus_ridge"

    def __init__(self, A, ridge: float):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] < 1:
            raise ValueError(f"data matrix must be n x d with n >= 1, got {A.shape}")
        super().__init__(A.shape[1], ridge)
        self.A = A
        self.n = A.shape[0]
        self.ridge = float(ridge)
        self.scale = 1.0 / (4.0 * self.n)

    def matvec(self, v):
        v = self._check(v)
        return self.scale * (self.A.T @ (self.A @ v)) + self.ridge * v

    def trace(self):
        return float(self.scale * np.sum(self.A**2) + self.ridge * self.d)

    def diagonal(self):
        return self.scale * np.sum(self.A**2, axis=0) + self.ridge

    def materialize(self):
        return self.scale * (self.A.T @ self.A) + self.ridge * np.eye(self.d)


def apply(model: SmoothnessModel, v) -> np.ndarray:
    """Return ``Lam @ v`` without materializing ``Lam``."""
    return model.matvec(v)


def quad_form(model: SmoothnessModel, v) -> float:
    v = model._check(v)
    return float(v @ model.matvec(v))


def spectral_norm(
    model: SmoothnessModel,
    max_iter: int = POWER_MAX_ITER,
    seed: int = POWER_SEED,
) -> float:
    """Largest eigenvalue of ``Lam`` by power iteration; cached on the model.

    Iterates until the Rayleigh quotient changes by less than 1e-12
    (relative) and the residual ``||Lam v - L v|| / L`` is below 1e-10.
    """
    if model._L is not None:
        return model._L
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(model.d)
    v /= np.linalg.norm(v)
    w = model.matvec(v)
    lam = float(v @ w)
    for _ in range(max_iter):
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            raise PowerIterationError(f"{model.form} model is the zero matrix")
        v = w / norm_w
        w = model.matvec(v)
        lam_new = float(v @ w)
        if lam_new <= 0.0:
            raise PowerIterationError(f"{model.form} model is the zero matrix")
        resid = np.linalg.norm(w - lam_new * v) / lam_new
        if abs(lam_new - lam) <= POWER_EIG_TOL * lam_new and resid <= POWER_RESIDUAL_TOL:
            model._L = lam_new
            return lam_new
        lam = lam_new
    raise PowerIterationError(
        f"power iteration on {model.form} model (d={model.d}) did not converge "
        f"in {max_iter} iterations"
    )


def effective_rank(model: SmoothnessModel) -> float:
    """``tr(Lam) / ||Lam||``."""
    L = model.L
    if L == 0:
        raise ValueError("effective rank undefined for L = 0")
    return model.trace() / L


def diag_ratio(model: SmoothnessModel) -> float:
    """``max_i Lam_ii / ||Lam||``."""
    L = model.L
    if L == 0:
        raise ValueError("diagonal ratio undefined for L = 0")
    return float(np.max(model.diagonal())) / L
