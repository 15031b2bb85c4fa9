"""Command-line harness: experiments, r sweeps, verification, the
distributed simulator and the dataset constant table.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 divergence. All outputs go under ``--out``.

Examples:
    rsnag run --config desk-sc-diag --out out/
    rsnag sweep-r --config desk-convex-dense --r-grid 1,10,100
    rsnag verify --families haar,coordinate,gaussian
    rsnag distsim --config desk-sc-diag --workers 4
    rsnag constants --dataset splice.libsvm
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from rsnag import dataio
from rsnag.dataio import ConfigError, ExperimentConfig, ProblemSpec
from rsnag.distsim import dist_run, max_iterate_deviation, partition_quadratic
from rsnag.optimizers import DivergenceError, Method, bound_from_scalars
from rsnag.problems import Objective, QuadraticKind, QuadraticObjective, logistic_from_data, quadratic_instance
from rsnag.runner import RunConfig, aggregate, initial_point, make_distribution, run_seed
from rsnag.sketches import Family, SketchDistribution, constants, optimal_r, q_at_one
from rsnag.smoothness import diag_ratio, effective_rank
from rsnag import verify

log = logging.getLogger("rsnag")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3
DEFAULT_CONFIG = "desk-sc-diag"
MOMENT_GRID = ((10, 1), (10, 3), (20, 5))


def builtin_configs() -> list[str]:
    root = resources.files("rsnag") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_experiment(name_or_path: str) -> ExperimentConfig:
    """Read a config file, or a shipped config by name (e.g. ``desk-sc-diag``)."""
    path = Path(name_or_path)
    if not path.exists() and name_or_path in builtin_configs():
        with resources.as_file(resources.files("rsnag") / "configs" / f"{name_or_path}.json") as p:
            return dataio.read_experiment(p)
    if not path.exists():
        raise ConfigError(f"config {name_or_path!r} not found (shipped: {', '.join(builtin_configs())})")
    return dataio.read_experiment(path)


def build_objective(spec: ProblemSpec) -> Objective:
    if spec.kind == "quadratic":
        try:
            return quadratic_instance(spec.instance, spec.d)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    path = Path(spec.dataset)
    if not path.exists():
        raise ConfigError(f"dataset {path} not found")
    try:
        data = dataio.load_libsvm(path)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    mu = 1.0 / data.n if spec.mu == "1/n" else float(spec.mu)
    return logistic_from_data(data.A, data.y, mu, name=path.stem)


def _override(cfg: RunConfig, args) -> RunConfig:
    if args.seeds is not None and args.seeds < 1:
        raise ConfigError("--seeds must be positive")
    try:
        if args.seeds is not None:
            cfg = replace(cfg, seeds=list(range(args.seeds)))
        if args.budget is not None:
            cfg = replace(cfg, oracle_budget=args.budget)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def _normalize_identity(cfg: RunConfig, d: int) -> RunConfig:
    return replace(cfg, r=d) if cfg.family is Family.IDENTITY else cfg


def _check_cfg(cfg: RunConfig, obj: Objective) -> None:
    if cfg.family is not Family.IDENTITY and cfg.r > obj.d:
        raise ConfigError(f"{cfg.label}: r={cfg.r} exceeds d={obj.d}")
    if cfg.method.strongly_convex and not obj.mu > 0:
        raise ConfigError(f"{cfg.label}: method needs a strongly convex problem")
    cost = obj.d if cfg.family is Family.IDENTITY else cfg.r
    if cfg.oracle_budget < cost:
        raise ConfigError(f"{cfg.label}: budget {cfg.oracle_budget} is below one iteration ({cost})")


def _bound_summary(cfg: RunConfig, obj: Objective, traces) -> dict:
    """Theoretical bound at the final iteration, averaged over seeds."""
    dist = make_distribution(cfg.family, obj.d, cfg.r)
    c = constants(dist, obj.smoothness)
    out = {"omega": c.omega, "ell": c.ell, "oracle_factor": c.oracle_factor, "theoretical_bound": None}
    N = int(traces[0].iters[-1])
    if N < 1:
        return out
    vals = []
    for t in traces:
        x0 = initial_point(t.seed, obj.d)
        if cfg.method.strongly_convex:
            scale = obj.value(x0) - t.f_ref
        elif obj.optimum_point is not None:
            scale = float(np.linalg.norm(x0 - obj.optimum_point))
        else:
            # no known minimizer to measure R0 against
            return out
        vals.append(bound_from_scalars(cfg.method, obj.L, obj.mu, c.omega, c.ell, N, scale))
    out["theoretical_bound"] = float(np.mean(vals))
    return out


def _run_cells(cells, obj: Objective, out: Path, stem: str):
    """Run every (config) cell; on divergence write what exists and re-raise."""
    traces, curves, summary = [], [], []
    try:
        for cfg in cells:
            cell = []
            for seed in cfg.seeds:
                try:
                    cell.append(run_seed(cfg, obj, seed))
                except DivergenceError as exc:
                    traces.extend(cell)
                    if exc.trace is not None:
                        traces.append(exc.trace)
                    raise
            traces.extend(cell)
            curve = aggregate(cell)
            curves.append(curve)
            summary.append(
                {
                    "label": cfg.label,
                    "method": cfg.method.value,
                    "sketch": cfg.family.value,
                    "r": cell[0].r,
                    "n_seeds": len(cell),
                    "final_iter": int(curve.iters[-1]),
                    "final_oracle_calls": int(curve.oracle_calls[-1]),
                    "final_mean_gap": float(curve.mean[-1]),
                    "final_std_gap": float(curve.std[-1]),
                    "f_ref": cell[0].f_ref,
                    **_bound_summary(cfg, obj, cell),
                }
            )
    finally:
        dataio.write_trace_csv(traces, out / f"{stem}_traces.csv")
        dataio.write_curve_csv(curves, out / f"{stem}_curves.csv")
    return traces, curves, summary


def cmd_run(args) -> int:
    exp = load_experiment(args.config)
    obj = build_objective(exp.problem)
    cells = [_normalize_identity(_override(c, args), obj.d) for c in exp.runs]
    for c in cells:
        _check_cfg(c, obj)
    out = Path(args.out)
    _, _, summary = _run_cells(cells, obj, out, "run")
    doc = {"schema_version": dataio.SCHEMA_VERSION, "problem": exp.problem.to_dict(), "d": obj.d, "cells": summary}
    dataio.write_json(doc, out / "run_summary.json")
    for s in summary:
        bound = "n/a" if s["theoretical_bound"] is None else f"{s['theoretical_bound']:.4e}"
        print(f"{s['label']:<32} final gap {s['final_mean_gap']:.4e}  bound {bound}")
    return EXIT_OK


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of integers, got {text!r}") from None


def cmd_sweep_r(args) -> int:
    exp = load_experiment(args.config)
    obj = build_objective(exp.problem)
    grid = _parse_int_list(args.r_grid) if args.r_grid else (exp.r_grid or [1])
    for r in grid:
        if not 1 <= r <= obj.d:
            raise ConfigError(f"r={r} outside [1, d={obj.d}]")
    cells = []
    for base in exp.runs:
        base = _override(base, args)
        if base.family is Family.IDENTITY:
            continue
        for r in grid:
            cells.append(replace(base, r=r))
    if not cells:
        raise ConfigError("sweep needs at least one sketched run")
    for c in cells:
        _check_cfg(c, obj)
    out = Path(args.out)
    _, _, summary = _run_cells(cells, obj, out, "sweep")
    best = {}
    for fam in sorted({c.family for c in cells}, key=lambda f: f.value):
        rows = [s for s in summary if s["sketch"] == fam.value]
        best[fam.value] = {
            "argmin_oracle_factor_in_grid": min(rows, key=lambda s: s["oracle_factor"])["r"],
            "argmin_oracle_factor_all_r": optimal_r(fam, obj.d, obj.smoothness),
        }
    doc = {
        "schema_version": dataio.SCHEMA_VERSION,
        "problem": exp.problem.to_dict(),
        "r_grid": grid,
        "cells": summary,
        "argmin": best,
    }
    dataio.write_json(doc, out / "sweep_summary.json")
    for s in summary:
        print(f"{s['label']:<32} oracle factor {s['oracle_factor']:.4f}  final gap {s['final_mean_gap']:.4e}")
    return EXIT_OK


def verify_suite(
    families,
    moment_samples: int = 200_000,
    lyapunov_samples: int = 20_000,
    haar_scale: float | None = None,
    seed: int = 0,
) -> list:
    """Moments, constants, reduction and Lyapunov probes over the standard grid."""
    rng = np.random.default_rng(seed)
    reports = []
    for fam in families:
        grid = [(d, d) for d in (10, 20)] if fam is Family.IDENTITY else MOMENT_GRID
        for d, r in grid:
            scale = haar_scale if fam is Family.HAAR else None
            dist = SketchDistribution(fam, d, r, scale)
            reports.append(verify.check_moments(dist, verify.random_psd(d, rng), moment_samples, seed=seed))
        if fam is Family.COORDINATE:
            for d, r in ((6, 2), (8, 3)):
                Lam = verify.random_psd(d, rng).materialize()
                dev = verify.check_coordinate_enumeration(d, r, Lam)
                reports.append(
                    verify.CheckResult(f"coordinate subset enumeration d={d} r={r}", dev <= 1e-12, f"max dev {dev:.3g}")
                )
        reports.extend(verify.check_constants(fam, range(2, 41), model_samples=3, seed=seed))
    for d in (10, 50):
        for sc in (False, True):
            obj = QuadraticObjective(verify.random_psd(d, rng, mu=0.05 if sc else 0.0))
            dev = verify.check_reduction(obj, strongly_convex=sc, seed=seed)
            tag = "strongly convex" if sc else "convex"
            reports.append(
                verify.CheckResult(
                    f"{tag} reduction to textbook Nesterov d={d}", dev <= 1e-10, f"max iterate dev {dev:.3g}"
                )
            )
    ks = (1, 5, 20, 100, 400)
    for method, kind in ((Method.RS_NAG_C, QuadraticKind.CONVEX_DENSE), (Method.RS_NAG_SC, QuadraticKind.SC_DENSE)):
        obj = quadratic_instance(kind, 50)
        for fam in families:
            dist = make_distribution(fam, 50, 1, haar_scale if fam is Family.HAAR else None)
            for st in verify.probe_states(method, dist, obj, ks, seed=seed):
                reports.append(verify.check_lyapunov(method, st, obj, dist, lyapunov_samples, seed=seed + st.k))
    return reports


def _report_message(rep) -> str:
    msg = getattr(rep, "message", None)
    if msg:
        return msg
    return f"{getattr(rep, 'name', 'check')}: {getattr(rep, 'detail', '')}"


def _parse_families(text: str) -> list[Family]:
    try:
        return [Family(t.strip()) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"unknown sketch family in {text!r}") from None


def cmd_verify(args) -> int:
    families = _parse_families(args.families)
    if not families:
        raise ConfigError("--families is empty")
    reports = verify_suite(families, args.moment_samples, args.lyapunov_samples, args.inject_haar_scale)
    doc = dataio.write_report(reports, Path(args.out) / "verify_report.json", {"families": [f.value for f in families]})
    failed = [r for r in reports if not r.passed]
    for r in failed:
        print(f"FAIL {_report_message(r)}", file=sys.stderr)
    print(f"{len(reports) - len(failed)}/{len(reports)} checks passed")
    return EXIT_OK if doc["pass"] else EXIT_VERIFY


def cmd_distsim(args) -> int:
    exp = load_experiment(args.config)
    if exp.problem.kind != "quadratic":
        raise ConfigError("the distributed simulator supports quadratic problems only")
    obj = build_objective(exp.problem)
    if args.workers < 1:
        raise ConfigError("--workers must be positive")
    workers = partition_quadratic(obj, args.workers, np.random.default_rng(args.partition_seed))
    traces, rows = [], []
    for base in exp.runs:
        cfg = _normalize_identity(_override(base, args), obj.d)
        _check_cfg(cfg, obj)
        for seed in cfg.seeds:
            trace, ledger = dist_run(workers, cfg, seed, bits_per_scalar=args.bits)
            traces.append(trace)
            single = run_seed(cfg, obj, seed)
            rows.append(
                {
                    "label": cfg.label,
                    "seed": seed,
                    "final_gap": trace.final_gap,
                    "max_gap_deviation": float(np.abs(trace.gaps - single.gaps).max()),
                    "max_iterate_deviation": max_iterate_deviation(workers, cfg, seed),
                    "ledger": ledger.to_dict(),
                }
            )
    out = Path(args.out)
    dataio.write_trace_csv(traces, out / "distsim_traces.csv")
    doc = {"schema_version": dataio.SCHEMA_VERSION, "problem": exp.problem.to_dict(), "n_workers": workers.n, "runs": rows}
    dataio.write_json(doc, out / "distsim_summary.json")
    for row in rows:
        led = row["ledger"]
        print(
            f"{row['label']:<32} seed {row['seed']}: dev {row['max_iterate_deviation']:.2e}, "
            f"uplink {led['total_uplink_scalars']} scalars over {led['rounds']} rounds"
        )
    return EXIT_OK


def constants_row(model, n: int | None, name: str) -> dict:
    """``d, n, L, r_eff, delta_diag, Q_H, Q_G, Q_C`` for one smoothness model."""
    d = model.d
    return {
        "name": name,
        "d": d,
        "n": n,
        "L": model.L,
        "r_eff": effective_rank(model),
        "delta_diag": diag_ratio(model),
        "Q_H": q_at_one(Family.HAAR, d, model),
        "Q_G": q_at_one(Family.GAUSSIAN, d, model),
        "Q_C": q_at_one(Family.COORDINATE, d, model),
    }


CONSTANT_FIELDS = ["name", "d", "n", "L", "r_eff", "delta_diag", "Q_H", "Q_G", "Q_C"]


def cmd_constants(args) -> int:
    rows = []
    if args.dataset:
        for path in args.dataset:
            spec = ProblemSpec("logistic", dataset=path, mu=args.mu)
            obj = build_objective(spec)
            rows.append(constants_row(obj.smoothness, obj.n, Path(path).stem))
    if args.instance:
        if args.d is None:
            raise ConfigError("--instance needs --d")
        obj = build_objective(ProblemSpec("quadratic", instance=args.instance, d=args.d))
        rows.append(constants_row(obj.smoothness, None, obj.name))
    if args.config:
        exp = load_experiment(args.config)
        obj = build_objective(exp.problem)
        rows.append(constants_row(obj.smoothness, getattr(obj, "n", None), getattr(obj, "name", "problem")))
    if not rows:
        raise ConfigError("constants needs --dataset, --instance or --config")
    out = Path(args.out)
    dataio.write_json({"schema_version": dataio.SCHEMA_VERSION, "rows": rows}, out / "constants.json")
    with dataio._open_out(out / "constants.csv") as fh:
        fh.write(",".join(CONSTANT_FIELDS) + "\n")
        for row in rows:
            vals = [row[k] for k in CONSTANT_FIELDS]
            fh.write(",".join("" if v is None else (format(v, ".17g") if isinstance(v, float) else str(v)) for v in vals) + "\n")
    print(f"{'name':<24}{'d':>6}{'n':>8}{'L':>12}{'r_eff':>10}{'delta':>10}{'Q_H':>11}{'Q_G':>11}{'Q_C':>11}")
    for row in rows:
        n = "-" if row["n"] is None else row["n"]
        print(
            f"{row['name']:<24}{row['d']:>6}{n:>8}{row['L']:>12.6g}{row['r_eff']:>10.4f}"
            f"{row['delta_diag']:>10.4f}{row['Q_H']:>11.4f}{row['Q_G']:>11.4f}{row['Q_C']:>11.4f}"
        )
    return EXIT_OK


def _shared(sp: argparse.ArgumentParser, config_default: str | None = DEFAULT_CONFIG) -> None:
    sp.add_argument("--config", default=config_default, help="experiment JSON, or a shipped config name")
    sp.add_argument("--out", default="out", help="output directory")
    sp.add_argument("--seeds", type=int, default=None, help="use seeds 0..N-1 instead of the config's")
    sp.add_argument("--budget", type=int, default=None, help="override the oracle budget")
    sp.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rsnag", description="Randomized-subspace Nesterov experiments and checks.")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("run", help="run every (method, sketch) cell of a config")
    _shared(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep-r", help="sweep the sketch dimension")
    _shared(sp)
    sp.add_argument("--r-grid", default=None, help="comma-separated r values (default: config r_grid)")
    sp.set_defaults(func=cmd_sweep_r)

    sp = sub.add_parser("verify", help="run the assumption and identity checks")
    _shared(sp)
    sp.add_argument("--families", default="haar,coordinate,gaussian")
    sp.add_argument("--moment-samples", type=int, default=200_000)
    sp.add_argument("--lyapunov-samples", type=int, default=20_000)
    sp.add_argument("--inject-haar-scale", type=float, default=None, help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("distsim", help="simulate the shared-sketch protocol")
    _shared(sp)
    sp.add_argument("--workers", type=int, default=4)
    sp.add_argument("--bits", type=int, choices=(32, 64), default=64)
    sp.add_argument("--partition-seed", type=int, default=0)
    sp.set_defaults(func=cmd_distsim)

    sp = sub.add_parser("constants", help="tabulate L, r_eff, delta_diag and Q factors")
    _shared(sp, config_default=None)
    sp.add_argument("--dataset", action="append", help="LIBSVM file (repeatable)")
    sp.add_argument("--mu", default="1/n", help="ridge: '1/n' or a number")
    sp.add_argument("--instance", choices=[k.value for k in QuadraticKind])
    sp.add_argument("--d", type=int)
    sp.set_defaults(func=cmd_constants)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"error: {exc}; partial outputs written to {args.out}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
