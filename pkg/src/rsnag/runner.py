"""Budgeted optimization runs under the directional-derivative oracle model.

Every run is driven by one integer seed. The starting point and each
iteration's sketch come from independent child streams of that seed, so a
run is reproducible bit for bit and its iterates do not depend on how often
the trace is sampled.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from rsnag.optimizers import DivergenceError, Method, Oracle, init_state, step
from rsnag.problems import Objective, reference_value
from rsnag.sketches import Family, SketchConstants, SketchDistribution, constants, sample

__all__ = [
    "RunConfig",
    "RunTrace",
    "AggregateCurve",
    "oracle_cost",
    "initial_point",
    "sketch_rng",
    "make_distribution",
    "trajectory",
    "run_seed",
    "run",
    "aggregate",
    "default_record_every",
]

log = logging.getLogger(__name__)

X0_STREAM = 0
SKETCH_STREAM = 1
REFERENCE_TOL = 1e-10


def default_record_every(d: int, budget: int) -> int:
    return 1 if d <= 1000 and budget <= 100_000 else 10


@dataclass
class RunConfig:
    """One (method, sketch) cell of an experiment.

    ``r`` is ignored for the identity family, whose sketch dimension is
    always ``d``. ``record_every=None`` picks a default from the problem
    size.
    """

    method: Method
    family: Family
    r: int
    oracle_budget: int
    seeds: list[int] = field(default_factory=lambda: [0])
    record_every: Optional[int] = None
    epsilon: Optional[float] = None

    def __post_init__(self):
        self.method = Method(self.method)
        self.family = Family(self.family)
        self.r = int(self.r)
        self.oracle_budget = int(self.oracle_budget)
        self.seeds = [int(s) for s in self.seeds]
        if self.oracle_budget < 1:
            raise ValueError(f"oracle budget must be positive, got {self.oracle_budget}")
        if self.r < 1:
            raise ValueError(f"sketch dimension must be positive, got {self.r}")
        if self.record_every is not None and int(self.record_every) < 1:
            raise ValueError("record_every must be a positive integer")
        for s in self.seeds:
            if not 0 <= s < 2**64:
                raise ValueError(f"seed {s} is not a 64-bit unsigned integer")

    @property
    def label(self) -> str:
        if self.family is Family.IDENTITY:
            return f"{self.method.value}/identity"
        return f"{self.method.value}/{self.family.value}/r={self.r}"


@dataclass
class RunTrace:
    method: Method
    family: Family
    d: int
    r: int
    seed: int
    iters: np.ndarray
    oracle_calls: np.ndarray
    gaps: np.ndarray
    final_x: np.ndarray
    f_ref: float
    record_every: int
    completed: bool = True

    @property
    def final_gap(self) -> float:
        return float(self.gaps[-1])


@dataclass
class AggregateCurve:
    method: Method
    family: Family
    r: int
    iters: np.ndarray
    oracle_calls: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    n_seeds: int

    @property
    def stderr(self) -> np.ndarray:
        return self.std / np.sqrt(self.n_seeds)


def oracle_cost(method, family, d: int, r: int) -> int:
    """Directional-derivative queries charged per iteration.

    Every method evaluates one sketched gradient per iteration, so the cost
    depends only on the sketch.
    """
    Method(method)
    if Family(family) is Family.IDENTITY:
        return d
    if not 1 <= r <= d:
        raise ValueError(f"need 1 <= r <= d, got r={r}, d={d}")
    return r


def make_distribution(family, d: int, r: int, scale: float | None = None) -> SketchDistribution:
    family = Family(family)
    if family is Family.IDENTITY:
        return SketchDistribution.identity(d)
    return SketchDistribution(family, d, r, scale)


def initial_point(seed: int, d: int) -> np.ndarray:
    """``x0 ~ N(0, I_d)`` from the seed's starting-point stream."""
    ss = np.random.SeedSequence(seed, spawn_key=(X0_STREAM,))
    return np.random.default_rng(ss).standard_normal(d)


def sketch_rng(seed: int, k: int) -> np.random.Generator:
    """Generator for the sketch of iteration ``k``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(SKETCH_STREAM, k)))


def draw_sketch(dist: SketchDistribution, seed: int, k: int):
    if dist.family is Family.IDENTITY:
        return None
    return sample(dist, sketch_rng(seed, k))


def trajectory(
    method,
    dist: SketchDistribution,
    obj: Objective,
    seed: int,
    n_iters: int,
    oracle: Oracle | None = None,
    consts: SketchConstants | None = None,
    x0: np.ndarray | None = None,
) -> Iterator:
    """Yield the optimizer state at ``k = 0, 1, ..., n_iters``.

    ``oracle(y, P)`` replaces the single-machine ``P P^T grad f(y)``.
    """
    if dist.d != obj.d:
        raise ValueError(f"sketch dimension {dist.d} does not match objective dimension {obj.d}")
    if consts is None:
        consts = constants(dist, obj.smoothness)
    if x0 is None:
        x0 = initial_point(seed, obj.d)
    state = init_state(method, x0, obj, consts.omega, consts.ell)
    yield state
    for k in range(n_iters):
        state = step(state, obj, draw_sketch(dist, seed, k), oracle)
        yield state


def _gap_reference(obj: Objective) -> float:
    if obj.optimum_value is not None:
        return float(obj.optimum_value)
    return reference_value(obj, REFERENCE_TOL)


def run_seed(config: RunConfig, obj: Objective, seed: int, oracle: Oracle | None = None) -> RunTrace:
    method = config.method
    if method.strongly_convex and not obj.mu > 0:
        raise ValueError(f"{method.value} requires a strongly convex objective (mu > 0)")
    dist = make_distribution(config.family, obj.d, config.r)
    cost = dist.oracle_cost
    if config.oracle_budget < cost:
        raise ValueError(
            f"oracle budget {config.oracle_budget} is below the cost of one iteration ({cost})"
        )
    n_iters = config.oracle_budget // cost
    every = config.record_every or default_record_every(obj.d, config.oracle_budget)
    f_ref = _gap_reference(obj)

    iters, gaps = [], []
    state = None
    try:
        for state in trajectory(method, dist, obj, seed, n_iters, oracle):
            k = state.k
            gap = None
            if k % every == 0 or k == n_iters or config.epsilon is not None:
                gap = obj.value(state.x) - f_ref
            if k % every == 0 or k == n_iters:
                iters.append(k)
                gaps.append(gap)
            if config.epsilon is not None and gap <= config.epsilon:
                if iters[-1] != k:
                    iters.append(k)
                    gaps.append(gap)
                break
    except DivergenceError as exc:
        exc.trace = _make_trace(config, dist, seed, iters, gaps, exc.state, f_ref, every, cost, False)
        log.error("run %s seed %d diverged at iteration %d", config.label, seed, exc.iteration)
        raise
    return _make_trace(config, dist, seed, iters, gaps, state, f_ref, every, cost, True)


def _make_trace(config, dist, seed, iters, gaps, state, f_ref, every, cost, completed):
    iters = np.asarray(iters, dtype=np.int64)
    return RunTrace(
        method=config.method,
        family=config.family,
        d=dist.d,
        r=dist.r,
        seed=seed,
        iters=iters,
        oracle_calls=iters * cost,
        gaps=np.asarray(gaps, dtype=float),
        final_x=None if state is None else np.array(state.x),
        f_ref=f_ref,
        record_every=every,
        completed=completed,
    )


def run(config: RunConfig, obj: Objective) -> list[RunTrace]:
    """Run every seed of ``config``; one trace per seed."""
    return [run_seed(config, obj, seed) for seed in config.seeds]


def aggregate(traces: list[RunTrace]) -> AggregateCurve:
    """Pointwise mean and sample standard deviation over seeds."""
    if not traces:
        raise ValueError("cannot aggregate an empty list of traces")
    first = traces[0]
    for t in traces[1:]:
        if (t.method, t.family, t.r, t.record_every) != (first.method, first.family, first.r, first.record_every):
            raise ValueError("traces come from different run configurations")
        if not np.array_equal(t.oracle_calls, first.oracle_calls):
            raise ValueError("traces are recorded on different oracle grids")
    G = np.vstack([t.gaps for t in traces])
    std = G.std(axis=0, ddof=1) if len(traces) > 1 else np.zeros(G.shape[1])
    return AggregateCurve(
        method=first.method,
        family=first.family,
        r=first.r,
        iters=first.iters.copy(),
        oracle_calls=first.oracle_calls.copy(),
        mean=G.mean(axis=0),
        std=std,
        n_seeds=len(traces),
    )
