"""Random subspace sketches and their moment constants.

Four families of ``d x r`` sketch matrices ``P`` with ``E[P P^T] = I``:

* ``haar``: ``sqrt(d/r)`` times the first ``r`` columns of a Haar orthogonal matrix
* ``coordinate``: ``sqrt(d/r)`` times ``r`` distinct columns of ``I_d``
* ``gaussian``: i.i.d. ``N(0, 1/r)`` entries
* ``identity``: ``P = I_d`` (``r = d``), which turns every method into its
  full-gradient counterpart
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from rsnag.smoothness import SmoothnessModel, diag_ratio, effective_rank

__all__ = [
    "Family",
    "SketchDistribution",
    "SketchConstants",
    "sample",
    "sample_many",
    "omega",
    "ell",
    "beta",
    "constants",
    "oracle_factor",
    "q_at_one",
    "optimal_r",
    "second_moment",
    "exact_interaction_moment",
    "enumerate_coordinate_moment",
]

MATERIALIZE_MAX_D = 200


class Family(str, Enum):
    HAAR = "haar"
    COORDINATE = "coordinate"
    GAUSSIAN = "gaussian"
    IDENTITY = "identity"


@dataclass(frozen=True)
class SketchDistribution:
    """Law of a ``d x r`` sketch.

    ``scale`` overrides the ``sqrt(d/r)`` column scaling of the Haar and
    coordinate families; it exists only to inject faults in verification.
    """

    family: Family
    d: int
    r: int
    scale: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.d < 2:
            raise ValueError(f"sketch dimension d must be >= 2, got {self.d}")
        if self.family is Family.IDENTITY and self.r != self.d:
            raise ValueError("identity sketch requires r = d")
        if not 1 <= self.r <= self.d:
            raise ValueError(f"need 1 <= r <= d, got r={self.r}, d={self.d}")

    @classmethod
    def identity(cls, d: int) -> "SketchDistribution":
        return cls(Family.IDENTITY, d, d)

    @property
    def column_scale(self) -> float:
        if self.scale is not None:
            return self.scale
        return math.sqrt(self.d / self.r)

    @property
    def oracle_cost(self) -> int:
        """Directional-derivative queries per sketched gradient."""
        return self.d if self.family is Family.IDENTITY else self.r


@dataclass(frozen=True)
class SketchConstants:
    omega: float
    ell: float
    beta: float | None
    oracle_factor: float


def sample(dist: SketchDistribution, rng: np.random.Generator) -> np.ndarray:
    """Draw one ``d x r`` sketch matrix."""
    return sample_many(dist, rng, 1)[0]


def sample_many(dist: SketchDistribution, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` i.i.d. sketches as an array of shape ``(n, d, r)``."""
    if not isinstance(rng, np.random.Generator):
        raise TypeError(f"expected a numpy Generator, got {type(rng).__name__}")
    d, r = dist.d, dist.r
    fam = dist.family
    if fam is Family.IDENTITY:
        return np.broadcast_to(np.eye(d), (n, d, d)).copy()
    if fam is Family.GAUSSIAN:
        return rng.standard_normal((n, d, r)) / math.sqrt(r)
    if fam is Family.HAAR:
        G = rng.standard_normal((n, d, r))
        if r == 1:
            # sign-corrected thin QR of one column is its normalization
            return G / np.linalg.norm(G, axis=1, keepdims=True) * dist.column_scale
        Q, R = np.linalg.qr(G)
        # sign fix makes Q exactly Haar on the Stiefel manifold
        signs = np.sign(np.diagonal(R, axis1=1, axis2=2))
        signs[signs == 0] = 1.0
        return Q * signs[:, None, :] * dist.column_scale
    idx = _partial_shuffle(rng, d, r, n)
    out = np.zeros((n, d, r))
    out[np.arange(n)[:, None], idx, np.arange(r)[None, :]] = dist.column_scale
    return out


def _partial_shuffle(rng: np.random.Generator, d: int, r: int, n: int) -> np.ndarray:
    # first r steps of Fisher-Yates, run on n rows at once
    perm = np.tile(np.arange(d), (n, 1))
    rows = np.arange(n)
    for i in range(r):
        j = rng.integers(i, d, size=n)
        perm[rows, i], perm[rows, j] = perm[rows, j], perm[rows, i].copy()
    return perm[:, :r]


def omega(dist: SketchDistribution) -> float:
    d, r = dist.d, dist.r
    if dist.family is Family.IDENTITY:
        return 1.0
    if dist.family is Family.GAUSSIAN:
        return (d + r + 1) / r
    return d / r


def beta(dist: SketchDistribution) -> float | None:
    """Haar mixing weight ``d(d-r) / ((d+2)(d-1))``; ``None`` for other families."""
    if dist.family is not Family.HAAR:
        return None
    d, r = dist.d, dist.r
    return d * (d - r) / ((d + 2) * (d - 1))


def _ell(family: Family, d: int, r: int, r_eff: float, delta: float) -> float:
    if family is Family.IDENTITY:
        return 1.0
    if family is Family.HAAR:
        b = d * (d - r) / ((d + 2) * (d - 1))
        return (d / r) * (1.0 - b + b * r_eff / d)
    if family is Family.COORDINATE:
        return (d / r) * ((r - 1) / (d - 1) + (d - r) / (d - 1) * delta)
    return (r + 1 + r_eff) / r


def ell(dist: SketchDistribution, model: SmoothnessModel) -> float:
    if model.d != dist.d:
        raise ValueError(f"model dimension {model.d} != sketch dimension {dist.d}")
    return _ell(dist.family, dist.d, dist.r, effective_rank(model), diag_ratio(model))


def oracle_factor(dist: SketchDistribution, model: SmoothnessModel) -> float:
    """``sqrt(omega * ell) * r``; equals ``d`` for the identity sketch."""
    if dist.family is Family.IDENTITY:
        return float(dist.d)
    return math.sqrt(omega(dist) * ell(dist, model)) * dist.r


def constants(dist: SketchDistribution, model: SmoothnessModel) -> SketchConstants:
    return SketchConstants(
        omega=omega(dist),
        ell=ell(dist, model),
        beta=beta(dist),
        oracle_factor=oracle_factor(dist, model),
    )


def q_at_one(family, d: int, model: SmoothnessModel) -> float:
    """The ``r = 1`` oracle factor of a family, in closed form."""
    family = Family(family)
    if d < 2:
        raise ValueError("d must be >= 2")
    if family is Family.HAAR:
        return d * math.sqrt((effective_rank(model) + 2) / (d + 2))
    if family is Family.COORDINATE:
        return d * math.sqrt(diag_ratio(model))
    if family is Family.GAUSSIAN:
        return math.sqrt((d + 2) * (effective_rank(model) + 2))
    return float(d)


def optimal_r(family, d: int, model: SmoothnessModel) -> int:
    """Smallest ``r`` minimizing the oracle factor over ``1..d``.

    Every ``r`` is evaluated; ties resolve to the smaller ``r``.
    """
    family = Family(family)
    if family is Family.IDENTITY:
        return d
    r_eff, delta = effective_rank(model), diag_ratio(model)
    best_r, best = 1, math.inf
    for r in range(1, d + 1):
        om = (d + r + 1) / r if family is Family.GAUSSIAN else d / r
        f = math.sqrt(om * _ell(family, d, r, r_eff, delta)) * r
        # relative slack so rounding cannot break a mathematical tie
        if f < best * (1 - 1e-12):
            best_r, best = r, f
    return best_r


def second_moment(dist: SketchDistribution) -> np.ndarray:
    """Closed-form ``E[(P P^T)^2]``."""
    return omega(dist) * np.eye(dist.d)


def exact_interaction_moment(dist: SketchDistribution, model: SmoothnessModel) -> np.ndarray:
    """Closed-form ``E[P P^T Lam P P^T]`` as a dense matrix."""
    d, r = dist.d, dist.r
    if d > MATERIALIZE_MAX_D:
        raise ValueError(f"refusing to materialize a {d} x {d} moment (limit {MATERIALIZE_MAX_D})")
    Lam = model.materialize()
    tr = np.trace(Lam)
    fam = dist.family
    if fam is Family.IDENTITY:
        return Lam
    if fam is Family.HAAR:
        b = beta(dist)
        return (d / r) * (1 - b) * Lam + (b / r) * tr * np.eye(d)
    if fam is Family.COORDINATE:
        return (d / r) * ((r - 1) / (d - 1) * Lam + (d - r) / (d - 1) * np.diag(np.diag(Lam)))
    return ((r + 1) * Lam + tr * np.eye(d)) / r


def enumerate_coordinate_moment(d: int, r: int, Lam: np.ndarray) -> np.ndarray:
    """``E[P P^T Lam P P^T]`` for the coordinate sketch by averaging all subsets."""
    total = np.zeros((d, d))
    count = 0
    for subset in itertools.combinations(range(d), r):
        idx = list(subset)
        M = np.zeros((d, d))
        M[np.ix_(idx, idx)] = Lam[np.ix_(idx, idx)]
        total += M
        count += 1
    return (d / r) ** 2 * total / count
