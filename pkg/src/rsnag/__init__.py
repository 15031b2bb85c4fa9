"""Randomized-subspace Nesterov accelerated gradient methods.

Only ``P^T grad f`` is ever consumed, so each iteration costs ``r``
directional derivatives instead of ``d``. The package provides the
optimizers, the sketch families and their constants, a budgeted runner,
a shared-sketch distributed simulator and a verification suite.
"""

from rsnag.optimizers import DivergenceError, Method
from rsnag.problems import LogisticObjective, QuadraticKind, QuadraticObjective, quadratic_instance
from rsnag.runner import RunConfig, RunTrace, aggregate, run, run_seed
from rsnag.sketches import Family, SketchDistribution, constants
from rsnag.smoothness import DenseModel, DiagonalModel

__version__ = "0.1.0"

__all__ = [
    "DenseModel",
    "DiagonalModel",
    "DivergenceError",
    "Family",
    "LogisticObjective",
    "Method",
    "QuadraticKind",
    "QuadraticObjective",
    "RunConfig",
    "RunTrace",
    "SketchDistribution",
    "aggregate",
    "constants",
    "quadratic_instance",
    "run",
    "run_seed",
]
