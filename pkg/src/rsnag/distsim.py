"""In-process simulation of the shared-sketch distributed protocol.

Each round the server broadcasts the seed of ``P_k``; worker ``i`` uplinks
the ``r``-vector ``s_i = P_k^T grad f_i(y_k)``; the server averages the
messages in fixed worker order and steps with ``g_k = P_k mean(s_i)``. By
linearity ``g_k = P_k P_k^T grad f(y_k)``, so the iterates match the
single-machine run with the same seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rsnag.problems import QuadraticObjective
from rsnag.runner import RunConfig, make_distribution, run_seed, trajectory
from rsnag.smoothness import DenseModel, DiagonalModel

__all__ = [
    "WorkerSet",
    "CommLedger",
    "partition_quadratic",
    "dist_run",
    "max_iterate_deviation",
]

MATERIALIZE_MAX_D = 2000


@dataclass
class WorkerSet:
    """Local objectives ``f_i`` with ``f = (1/n) sum_i f_i``.

    ``objective`` is the global ``f``; its smoothness model supplies the
    step-size constants.
    """

    objective: QuadraticObjective
    workers: list

    @property
    def n(self) -> int:
        return len(self.workers)

    @property
    def d(self) -> int:
        return self.objective.d

    def averaged_gradient(self, x) -> np.ndarray:
        return np.sum([w.grad(x) for w in self.workers], axis=0) / self.n

    def averaged_smoothness(self) -> np.ndarray:
        return np.sum([w.smoothness.materialize() for w in self.workers], axis=0) / self.n


@dataclass
class CommLedger:
    n: int
    scalars_per_message: int
    bits_per_scalar: int = 64
    uplink: list = field(default_factory=list)
    seed_broadcasts: int = 0

    def __post_init__(self):
        if self.bits_per_scalar not in (32, 64):
            raise ValueError("bits_per_scalar must be 32 or 64")

    @property
    def rounds(self) -> int:
        return len(self.uplink)

    @property
    def total_uplink_scalars(self) -> int:
        return int(sum(sum(r) for r in self.uplink))

    @property
    def uplink_bits(self) -> int:
        return self.total_uplink_scalars * self.bits_per_scalar

    @property
    def downlink_bits(self) -> int:
        # one 64-bit seed per round, whatever the scalar width
        return 64 * self.seed_broadcasts

    def to_dict(self) -> dict:
        return {
            "n_workers": self.n,
            "rounds": self.rounds,
            "uplink_scalars_per_worker_per_round": self.scalars_per_message,
            "total_uplink_scalars": self.total_uplink_scalars,
            "bits_per_scalar": self.bits_per_scalar,
            "uplink_bits": self.uplink_bits,
            "seed_broadcasts": self.seed_broadcasts,
            "downlink_bits": self.downlink_bits,
        }


def partition_quadratic(obj, n: int, rng: np.random.Generator) -> WorkerSet:
    """Split a quadratic over ``n`` workers.

    Each spectral component of ``Lam`` (each coordinate, for diagonal
    models) is given to one random worker and scaled by ``n``, so the
    local matrices average back to ``Lam``.
    """
    if not isinstance(obj, QuadraticObjective):
        raise TypeError("partition_quadratic only supports quadratic objectives")
    n = int(n)
    if n < 1:
        raise ValueError(f"need at least one worker, got n={n}")
    if n == 1:
        return WorkerSet(obj, [obj])
    model = obj.smoothness
    d = obj.d
    if isinstance(model, DiagonalModel):
        owner = rng.integers(n, size=d)
        workers = [
            QuadraticObjective(DiagonalModel(np.where(owner == i, n * model.diag, 0.0)), name=f"worker{i}")
            for i in range(n)
        ]
        return WorkerSet(obj, workers)
    if d > MATERIALIZE_MAX_D:
        raise ValueError(f"dense partition limited to d <= {MATERIALIZE_MAX_D}")
    w, V = np.linalg.eigh(model.materialize())
    owner = rng.integers(n, size=d)
    workers = []
    for i in range(n):
        S = owner == i
        local = (V[:, S] * (n * w[S])) @ V[:, S].T
        workers.append(QuadraticObjective(DenseModel(local, check=False), name=f"worker{i}"))
    return WorkerSet(obj, workers)


def _protocol_oracle(workers: WorkerSet, ledger: CommLedger):
    def oracle(y, P):
        if P is None:
            # full-gradient protocol: d scalars per worker, no seed to share
            msgs = [w.grad(y) for w in workers.workers]
        else:
            msgs = [P.T @ w.grad(y) for w in workers.workers]
            ledger.seed_broadcasts += 1
        ledger.uplink.append([m.size for m in msgs])
        s_bar = msgs[0].copy()
        for m in msgs[1:]:
            s_bar += m
        s_bar /= workers.n
        return s_bar if P is None else P @ s_bar

    return oracle


def dist_run(workers: WorkerSet, config: RunConfig, seed: int | None = None, bits_per_scalar: int = 64):
    """Run ``config`` through the protocol; returns ``(trace, ledger)``."""
    obj = workers.objective
    for i, w in enumerate(workers.workers):
        if w.d != obj.d:
            raise ValueError(f"worker {i} has dimension {w.d}, expected {obj.d}")
    seed = config.seeds[0] if seed is None else seed
    dist = make_distribution(config.family, obj.d, config.r)
    ledger = CommLedger(workers.n, dist.oracle_cost, bits_per_scalar)
    trace = run_seed(config, obj, seed, oracle=_protocol_oracle(workers, ledger))
    return trace, ledger


def max_iterate_deviation(workers: WorkerSet, config: RunConfig, seed: int | None = None) -> float:
    """Largest ``|x_k - x_k^single|`` over every iteration of the budget."""
    obj = workers.objective
    seed = config.seeds[0] if seed is None else seed
    dist = make_distribution(config.family, obj.d, config.r)
    rounds = config.oracle_budget // dist.oracle_cost
    ledger = CommLedger(workers.n, dist.oracle_cost)
    dist_states = trajectory(config.method, dist, obj, seed, rounds, oracle=_protocol_oracle(workers, ledger))
    single_states = trajectory(config.method, dist, obj, seed, rounds)
    dev = 0.0
    for a, b in zip(dist_states, single_states):
        dev = max(dev, float(np.abs(a.x - b.x).max()))
    return dev
