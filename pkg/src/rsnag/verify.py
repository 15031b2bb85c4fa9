"""Checkers for the sketch assumptions, the Lyapunov contractions, the
reduction to classical Nesterov, and the convergence bounds.

Every checker is deterministic given its seed and returns a report carrying
the sample counts and standard errors it used. Monte-Carlo comparisons use
5 standard errors for moments and 3 for Lyapunov probes and seed means;
with the seeds fixed, the chance that a correct build trips a single check
is below 1e-5.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from rsnag.optimizers import (
    ConvexState,
    Method,
    StrongState,
    a_next,
    bound_from_scalars,
)
from rsnag.problems import Objective, QuadraticObjective
from rsnag.runner import initial_point, make_distribution, trajectory
from rsnag.sketches import (
    Family,
    SketchDistribution,
    constants,
    enumerate_coordinate_moment,
    exact_interaction_moment,
    omega,
    ell,
    optimal_r,
    q_at_one,
    sample_many,
    second_moment,
)
from rsnag.smoothness import DenseModel, SmoothnessModel

__all__ = [
    "MomentReport",
    "LyapunovProbe",
    "CheckResult",
    "RateReport",
    "EnvelopeReport",
    "random_psd",
    "check_moments",
    "check_coordinate_enumeration",
    "probe_states",
    "check_lyapunov",
    "textbook_nag",
    "textbook_nag_sc",
    "check_reduction",
    "check_constants",
    "check_rate",
    "check_envelope",
]

MOMENT_SE = 5.0
LYAPUNOV_SE = 3.0
MIN_MOMENT_SAMPLES = 1000

UNBIASED = "unbiasedness E[P P^T] = I"
SECOND = "second moment E[(P P^T)^2] <= omega I"
INTERACTION = "interaction moment E[P P^T Lam P P^T] <= ell L I"
CONVEX_LYAP = "convex Lyapunov contraction E[A_{k+1}(f(x_{k+1})-f*) + |z_{k+1}-x*|^2/2 | F_k] <= A_k(f(x_k)-f*) + |z_k-x*|^2/2"
SC_LYAP = "strongly convex Lyapunov contraction E[f(x_{k+1})-f* + mu/2 |z_{k+1}-x*|^2 | F_k] <= (1-theta)(f(x_k)-f* + mu/2 |z_k-x*|^2)"


@dataclass
class MomentReport:
    family: str
    d: int
    r: int
    n_samples: int
    dev_unbiased: float
    dev_second: float
    dev_interaction: float
    se_unbiased: float
    se_second: float
    se_interaction: float
    passed: bool
    violations: list[str] = field(default_factory=list)
    threshold_se: float = MOMENT_SE

    @property
    def message(self) -> str:
        if self.passed:
            return f"{self.family} d={self.d} r={self.r}: moments consistent at {self.threshold_se:g} SE"
        return f"{self.family} d={self.d} r={self.r}: violated " + "; ".join(self.violations)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["check"] = "moments"
        out["message"] = self.message
        return out


@dataclass
class LyapunovProbe:
    method: str
    k: int
    n_samples: int
    mean_next: float
    stderr: float
    target: float
    passed: bool
    threshold_se: float = LYAPUNOV_SE

    @property
    def message(self) -> str:
        cond = CONVEX_LYAP if self.method == Method.RS_NAG_C.value else SC_LYAP
        verdict = "holds" if self.passed else "violated"
        return (
            f"{cond} {verdict} at k={self.k}: mean {self.mean_next:.6g} "
            f"+/- {self.stderr:.3g} vs target {self.target:.6g}"
        )

    def to_dict(self) -> dict:
        out = asdict(self)
        out["check"] = "lyapunov"
        out["message"] = self.message
        return out


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return {"check": "constants", **asdict(self)}


@dataclass
class RateReport:
    method: str
    family: str
    N: list[int]
    mean_gap: list[float]
    stderr: list[float]
    mean_bound: list[float]
    n_seeds: int
    passed: bool

    def to_dict(self) -> dict:
        return {"check": "rate", **asdict(self)}


@dataclass
class EnvelopeReport:
    method: str
    n_seeds: int
    n_iters: int
    eta: float
    violations: int
    fraction: float
    limit: float
    passed: bool

    def to_dict(self) -> dict:
        return {"check": "envelope", **asdict(self)}


def random_psd(d: int, rng: np.random.Generator, mu: float = 0.0, rank: int | None = None) -> DenseModel:
    """Random PSD model with a random eigenbasis and a spread-out spectrum.

    The spectrum decays geometrically at a random rate so effective ranks
    cover the whole range ``[1, d]``. With ``mu > 0`` the smallest
    eigenvalue is exactly ``mu``.
    """
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    decay = rng.uniform(0.0, 1.5)
    eig = np.exp(-decay * np.arange(d)) * rng.uniform(0.5, 2.0)
    if rank is not None:
        eig[rank:] = 0.0
    if mu > 0:
        eig = eig - eig.min() + mu
    return DenseModel((Q * eig) @ Q.T, mu=mu)


def _accumulate(samples: np.ndarray, sums: dict, key: str):
    sums[key] = sums.get(key, 0.0) + samples.sum(axis=0)
    sums["sq_" + key] = sums.get("sq_" + key, 0.0) + (samples**2).sum(axis=0)


def _mean_se(sums: dict, key: str, n: int):
    mean = sums[key] / n
    var = np.maximum(sums["sq_" + key] / n - mean**2, 0.0) * n / (n - 1)
    return mean, np.sqrt(var / n)


def check_moments(
    dist: SketchDistribution,
    model: SmoothnessModel,
    n_samples: int,
    seed: int = 0,
    chunk: int = 20_000,
) -> MomentReport:
    """Monte-Carlo check of the three sketch moment conditions.

    Compares sample means of ``P P^T``, ``(P P^T)^2`` and
    ``P P^T Lam P P^T`` entrywise against ``I``, the closed-form second
    moment, and :func:`exact_interaction_moment`.
    """
    if n_samples < MIN_MOMENT_SAMPLES:
        raise ValueError(f"n_samples={n_samples} is too small (need >= {MIN_MOMENT_SAMPLES})")
    d = dist.d
    if d > 50:
        raise ValueError(f"moment check materializes d x d matrices; d={d} > 50")
    Lam = model.materialize()
    rng = np.random.default_rng(seed)
    sums: dict = {}
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        P = sample_many(dist, rng, m)
        S = P @ P.transpose(0, 2, 1)
        _accumulate(S, sums, "S")
        _accumulate(S @ S, sums, "S2")
        _accumulate(S @ Lam @ S, sums, "M")
        done += m

    expected = {
        "S": np.eye(d),
        "S2": second_moment(dist),
        "M": exact_interaction_moment(dist, model),
    }
    names = {"S": UNBIASED, "S2": SECOND, "M": INTERACTION}
    devs, ses, violations = {}, {}, []
    for key, target in expected.items():
        mean, se = _mean_se(sums, key, n_samples)
        err = np.abs(mean - target)
        # zero-variance entries (exact identities) only get rounding slack
        slack = 1e-10 * max(1.0, float(np.abs(target).max()))
        devs[key], ses[key] = float(err.max()), float(se.max())
        if np.any(err > MOMENT_SE * se + slack):
            worst = tuple(int(i) for i in np.unravel_index(np.argmax(err - MOMENT_SE * se), err.shape))
            violations.append(
                f"{names[key]} (entry {worst}: |dev|={err[worst]:.3g} > {MOMENT_SE:g}*SE={MOMENT_SE * se[worst]:.3g})"
            )
    return MomentReport(
        family=dist.family.value,
        d=d,
        r=dist.r,
        n_samples=n_samples,
        dev_unbiased=devs["S"],
        dev_second=devs["S2"],
        dev_interaction=devs["M"],
        se_unbiased=ses["S"],
        se_second=ses["S2"],
        se_interaction=ses["M"],
        passed=not violations,
        violations=violations,
    )


def check_coordinate_enumeration(d: int, r: int, Lam: np.ndarray) -> float:
    """Max deviation between the coordinate closed form and subset enumeration."""
    dist = SketchDistribution(Family.COORDINATE, d, r)
    exact = exact_interaction_moment(dist, DenseModel(Lam))
    return float(np.abs(exact - enumerate_coordinate_moment(d, r, Lam)).max())


def _values(obj: Objective, X: np.ndarray) -> np.ndarray:
    if isinstance(obj, QuadraticObjective):
        return 0.5 * np.einsum("ij,ij->i", X, obj.smoothness.matvec(X.T).T)
    return np.array([obj.value(x) for x in X])


def probe_states(method, dist: SketchDistribution, obj: Objective, ks, seed: int = 0) -> list:
    """Reachable states: run ``method`` from the seeded start and keep iteration ``k`` for each ``k``."""
    ks = sorted(set(int(k) for k in ks))
    keep = []
    for state in trajectory(method, dist, obj, seed, ks[-1]):
        if state.k in ks:
            keep.append(state)
    return keep


def check_lyapunov(
    method,
    probe_state,
    obj: Objective,
    dist: SketchDistribution,
    n_samples: int,
    seed: int = 0,
) -> LyapunovProbe:
    """Estimate ``E[Phi_{k+1} | state_k]`` over fresh sketches and compare it
    with ``Phi_k`` (convex) or ``(1 - theta) Phi_k`` (strongly convex)."""
    method = Method(method)
    if obj.optimum_point is None or obj.optimum_value is None:
        raise ValueError("Lyapunov probes need a known optimum")
    xs, fs = obj.optimum_point, obj.optimum_value
    st = probe_state
    if not (np.all(np.isfinite(st.x)) and np.all(np.isfinite(st.z))):
        raise ValueError("probe state is not finite")
    rng = np.random.default_rng(seed)
    P = sample_many(dist, rng, n_samples)

    if method is Method.RS_NAG_C:
        if not isinstance(st, ConvexState):
            raise TypeError("convex probe needs a ConvexState")
        a = a_next(st.A, st.m, st.omega)
        A1 = st.A + a
        y = (st.A / A1) * st.x + (a / A1) * st.z
        U = _directions(P, obj.grad(y))
        X = y - U / (st.L * st.ell)
        Z = st.z - a * U
        nxt = A1 * (_values(obj, X) - fs) + 0.5 * np.sum((Z - xs) ** 2, axis=1)
        target = st.A * (obj.value(st.x) - fs) + 0.5 * np.sum((st.z - xs) ** 2)
    elif method is Method.RS_NAG_SC:
        if not isinstance(st, StrongState):
            raise TypeError("strongly convex probe needs a StrongState")
        if not st.mu > 0:
            raise ValueError("strongly convex probe needs mu > 0")
        th = st.theta
        y = st.x / (1 + th) + (th / (1 + th)) * st.z
        U = _directions(P, obj.grad(y))
        X = y - U / (st.L * st.ell)
        Z = (1 - th) * st.z + th * y - (th / st.mu) * U
        nxt = _values(obj, X) - fs + 0.5 * st.mu * np.sum((Z - xs) ** 2, axis=1)
        phi = obj.value(st.x) - fs + 0.5 * st.mu * np.sum((st.z - xs) ** 2)
        target = (1 - th) * phi
    else:
        raise ValueError(f"no Lyapunov probe for {method.value}")

    mean = float(nxt.mean())
    se = float(nxt.std(ddof=1) / math.sqrt(n_samples))
    slack = 1e-12 * max(1.0, abs(target))
    return LyapunovProbe(
        method=method.value,
        k=st.k,
        n_samples=n_samples,
        mean_next=mean,
        stderr=se,
        target=float(target),
        passed=bool(mean <= target + LYAPUNOV_SE * se + slack),
    )


def _directions(P: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Rows ``P_i P_i^T g`` for a batch of sketches."""
    s = np.einsum("ndr,d->nr", P, g)
    return np.einsum("ndr,nr->nd", P, s)


def textbook_nag(obj: Objective, x0: np.ndarray, L: float, steps: int):
    """Two-sequence Nesterov for convex problems with the ``t_k`` schedule.

    Returns the arrays of ``x_k`` and ``y_k`` for ``k = 0..steps``.
    """
    x = np.array(x0, dtype=float)
    y = x.copy()
    t = 1.0
    xs, ys = [x], [y]
    for _ in range(steps):
        x_new = y - obj.grad(y) / L
        t_new = (1 + math.sqrt(1 + 4 * t * t)) / 2
        y = x_new + (t - 1) / t_new * (x_new - x)
        x, t = x_new, t_new
        xs.append(x)
        ys.append(y)
    return np.array(xs), np.array(ys)


def textbook_nag_sc(obj: Objective, x0: np.ndarray, L: float, mu: float, steps: int):
    """Constant-momentum Nesterov for ``mu``-strongly convex problems."""
    x = np.array(x0, dtype=float)
    y = x.copy()
    b = (math.sqrt(L) - math.sqrt(mu)) / (math.sqrt(L) + math.sqrt(mu))
    xs, ys = [x], [y]
    for _ in range(steps):
        x_new = y - obj.grad(y) / L
        y = x_new + b * (x_new - x)
        x = x_new
        xs.append(x)
        ys.append(y)
    return np.array(xs), np.array(ys)


def check_reduction(obj: Objective, strongly_convex: bool = False, steps: int = 50, seed: int = 0) -> float:
    """Max ``|x_k - x_k^N|`` and ``|y_k - y_k^N|`` between the randomized
    method with a full-rank coordinate sketch and textbook Nesterov."""
    d = obj.d
    if d > 200:
        raise ValueError(f"reduction check limited to d <= 200, got d={d}")
    method = Method.RS_NAG_SC if strongly_convex else Method.RS_NAG_C
    dist = SketchDistribution(Family.COORDINATE, d, d)
    x0 = initial_point(seed, d)
    states = list(trajectory(method, dist, obj, seed, steps, x0=x0))
    X = np.array([s.x for s in states])
    # the state after step k+1 carries y_k
    Y = np.array([s.y for s in states[1:]])
    if strongly_convex:
        Xn, Yn = textbook_nag_sc(obj, x0, obj.L, obj.mu, steps)
    else:
        Xn, Yn = textbook_nag(obj, x0, obj.L, steps)
    dev = float(np.abs(X - Xn).max())
    if steps > 0:
        dev = max(dev, float(np.abs(Y - Yn[:-1]).max()))
    return dev


def check_constants(family, d_range, model_samples: int = 5, seed: int = 0) -> list[CheckResult]:
    """Ordering of the sketch constants and the r = 1 factor relations.

    For each ``d`` in ``d_range`` and each of ``model_samples`` random PSD
    models, every ``1 <= r <= d`` is checked for ``omega >= d/r``,
    ``1 <= ell <= omega`` and ``omega*ell >= 1``; for ``d <= 12`` the closed
    moments are also checked to be dominated by ``omega I`` and ``ell L I``.
    """
    family = Family(family)
    rng = np.random.default_rng(seed)
    tol = 1e-12
    results = []
    for d in d_range:
        models = [random_psd(d, rng) for _ in range(model_samples)]
        bad = []
        rs = [d] if family is Family.IDENTITY else range(1, d + 1)
        for model in models:
            for r in rs:
                dist = SketchDistribution(family, d, r)
                om, el = omega(dist), ell(dist, model)
                if family is not Family.IDENTITY and om < d / r * (1 - tol):
                    bad.append(f"omega={om:.6g} < d/r at r={r}")
                if not (1 - tol <= el <= om * (1 + tol)):
                    bad.append(f"ell={el:.6g} outside [1, omega={om:.6g}] at r={r}")
                if om * el < 1 - tol:
                    bad.append(f"omega*ell={om * el:.6g} < 1 at r={r}")
                if d <= 12:
                    L = model.L
                    top = np.linalg.eigvalsh(exact_interaction_moment(dist, model))[-1]
                    if top > el * L * (1 + 1e-10):
                        bad.append(f"lambda_max(E[PP^T Lam PP^T])={top:.6g} > ell L={el * L:.6g} at r={r}")
                    if np.linalg.eigvalsh(second_moment(dist))[-1] > om * (1 + 1e-12):
                        bad.append(f"second moment exceeds omega at r={r}")
        results.append(
            CheckResult(
                f"{family.value} constant ordering d={d}",
                not bad,
                "; ".join(bad[:5]) or f"{len(models)} models x {len(list(rs))} values of r",
            )
        )
        if family is not Family.IDENTITY:
            results.append(_q_checks(family, d, models))
    return results


def _q_checks(family: Family, d: int, models) -> CheckResult:
    bad = []
    for model in models:
        qh, qc, qg = (q_at_one(f, d, model) for f in (Family.HAAR, Family.COORDINATE, Family.GAUSSIAN))
        if abs(qg - (1 + 2 / d) * qh) > 1e-12 * qg:
            bad.append(f"Q_G={qg:.15g} != (1+2/d) Q_H={(1 + 2 / d) * qh:.15g}")
        if qh > math.sqrt(3) * qc + 1e-12:
            bad.append(f"Q_H={qh:.6g} > sqrt(3) Q_C={math.sqrt(3) * qc:.6g}")
        if not (math.sqrt(d) * (1 - 1e-12) <= qc <= d * (1 + 1e-12)):
            bad.append(f"Q_C={qc:.6g} outside [sqrt(d), d]")
        if not (d * math.sqrt(3 / (d + 2)) * (1 - 1e-12) <= qh <= d * (1 + 1e-12)):
            bad.append(f"Q_H={qh:.6g} outside [d sqrt(3/(d+2)), d]")
        if not (math.sqrt(3 * (d + 2)) * (1 - 1e-12) <= qg <= (d + 2) * (1 + 1e-12)):
            bad.append(f"Q_G={qg:.6g} outside [sqrt(3(d+2)), d+2]")
        dist = SketchDistribution(family, d, 1)
        q = q_at_one(family, d, model)
        if abs(constants(dist, model).oracle_factor - q) > 1e-10 * q:
            bad.append("r=1 oracle factor disagrees with closed-form Q")
        if optimal_r(family, d, model) != 1:
            bad.append(f"optimal r = {optimal_r(family, d, model)} != 1")
    return CheckResult(f"{family.value} Q-factor relations d={d}", not bad, "; ".join(bad[:5]))


def check_rate(
    method,
    family,
    obj: Objective,
    seeds,
    Ns,
    r: int = 1,
) -> RateReport:
    """Seed-mean gap at each ``N`` versus the expected-gap bound, with
    3-standard-error slack on the mean."""
    method = Method(method)
    dist = make_distribution(family, obj.d, r)
    consts = constants(dist, obj.smoothness)
    Ns = sorted(int(n) for n in Ns)
    fs = obj.optimum_value
    xs = obj.optimum_point
    if fs is None or xs is None:
        raise ValueError("rate checks need a known optimum")
    gaps = np.zeros((len(seeds), len(Ns)))
    bounds = np.zeros_like(gaps)
    for i, seed in enumerate(seeds):
        x0 = initial_point(seed, obj.d)
        scale = obj.value(x0) - fs if method.strongly_convex else float(np.linalg.norm(x0 - xs))
        j = 0
        for state in trajectory(method, dist, obj, seed, Ns[-1], consts=consts, x0=x0):
            if state.k == Ns[j]:
                gaps[i, j] = obj.value(state.x) - fs
                bounds[i, j] = bound_from_scalars(method, obj.L, obj.mu, consts.omega, consts.ell, Ns[j], scale)
                j += 1
                if j == len(Ns):
                    break
    mean = gaps.mean(axis=0)
    se = gaps.std(axis=0, ddof=1) / math.sqrt(len(seeds))
    mb = bounds.mean(axis=0)
    return RateReport(
        method=method.value,
        family=Family(family).value,
        N=Ns,
        mean_gap=mean.tolist(),
        stderr=se.tolist(),
        mean_bound=mb.tolist(),
        n_seeds=len(seeds),
        passed=bool(np.all(mean <= mb + LYAPUNOV_SE * se)),
    )


def check_envelope(
    method,
    family,
    obj: Objective,
    seeds,
    n_iters: int,
    eta: float = 0.1,
    slack: float = 0.03,
    r: int = 1,
) -> EnvelopeReport:
    """Fraction of runs that ever leave the maximal-inequality envelope.

    Convex: ``A_k (f(x_k) - f*) <= Phi_0 / eta`` for all ``k``, with
    ``Phi_0 = |x_0 - x*|^2 / 2``. Strongly convex:
    ``f(x_k) - f* <= (Phi_0 / eta) (1 - theta)^k`` with
    ``Phi_0 = f(x_0) - f* + mu/2 |x_0 - x*|^2``. The fraction should not
    exceed ``eta + slack``.
    """
    method = Method(method)
    if method not in (Method.RS_NAG_C, Method.RS_NAG_SC):
        raise ValueError("envelopes are defined for the accelerated methods")
    dist = make_distribution(family, obj.d, r)
    consts = constants(dist, obj.smoothness)
    fs, xs = obj.optimum_value, obj.optimum_point
    violations = 0
    for seed in seeds:
        x0 = initial_point(seed, obj.d)
        if method is Method.RS_NAG_C:
            phi0 = 0.5 * float(np.sum((x0 - xs) ** 2))
        else:
            phi0 = obj.value(x0) - fs + 0.5 * obj.mu * float(np.sum((x0 - xs) ** 2))
        for state in trajectory(method, dist, obj, seed, n_iters, consts=consts, x0=x0):
            gap = obj.value(state.x) - fs
            if method is Method.RS_NAG_C:
                out = state.A * gap > phi0 / eta
            else:
                out = gap > phi0 / eta * (1 - state.theta) ** state.k
            if out:
                violations += 1
                break
    frac = violations / len(seeds)
    return EnvelopeReport(
        method=method.value,
        n_seeds=len(seeds),
        n_iters=n_iters,
        eta=eta,
        violations=violations,
        fraction=frac,
        limit=eta + slack,
        passed=bool(frac <= eta + slack),
    )
