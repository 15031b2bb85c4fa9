"""LIBSVM ingestion and the CSV/JSON artifact formats.

Traces and aggregate curves are CSV with LF line endings and floats written
to 17 significant digits, so they read back bit for bit. Configurations and
reports are JSON carrying ``"schema_version": 1``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from rsnag.runner import AggregateCurve, RunConfig, RunTrace

__all__ = [
    "SCHEMA_VERSION",
    "TRACE_HEADER",
    "CURVE_HEADER",
    "Dataset",
    "ProblemSpec",
    "ExperimentConfig",
    "ConfigError",
    "parse_libsvm",
    "load_libsvm",
    "format_libsvm",
    "write_trace_csv",
    "read_trace_csv",
    "write_curve_csv",
    "config_to_dict",
    "config_from_dict",
    "read_config",
    "write_config",
    "read_experiment",
    "write_experiment",
    "write_report",
    "write_json",
]

SCHEMA_VERSION = 1
TRACE_HEADER = ["method", "sketch", "d", "r", "seed", "iter", "oracle_calls", "gap"]
CURVE_HEADER = ["method", "sketch", "r", "iter", "oracle_calls", "mean", "std", "n_seeds"]

PathLike = Union[str, Path]


class ConfigError(ValueError):
    """A configuration file is malformed or inconsistent."""


@dataclass
class Dataset:
    A: np.ndarray
    y: np.ndarray
    d: int
    source: Optional[str] = None

    @property
    def n(self) -> int:
        return self.A.shape[0]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def parse_libsvm(text: str, expected_d: int | None = None, source: str | None = None) -> Dataset:
    """Parse LIBSVM text into a dense dataset.

    Each nonblank line is ``label idx:val idx:val ...`` with 1-based,
    strictly increasing indices. Labels must be in {-1, +1} or {0, 1};
    0 maps to -1. No feature scaling is applied.

    Raises:
        ValueError: on any malformed line; the message names the line.
    """
    if not text or not text.strip():
        raise ValueError("empty LIBSVM input")
    labels, rows = [], []
    max_idx = 0
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        where = f"line {lineno}"
        try:
            label = float(tokens[0])
        except ValueError:
            raise ValueError(f"{where}: bad label {tokens[0]!r}") from None
        if label not in (-1.0, 0.0, 1.0):
            raise ValueError(f"{where}: label {tokens[0]!r} is not in {{-1, +1}} or {{0, 1}}")
        seen.add(label)
        entries = {}
        last = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise ValueError(f"{where}: malformed feature token {tok!r}")
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ValueError(f"{where}: malformed feature token {tok!r}") from None
            if idx < 1:
                raise ValueError(f"{where}: feature index {idx} is not 1-based")
            if idx <= last:
                raise ValueError(f"{where}: feature indices must be strictly increasing ({last} then {idx})")
            if not math.isfinite(val):
                raise ValueError(f"{where}: non-finite value in {tok!r}")
            last = idx
            entries[idx] = val
        max_idx = max(max_idx, last)
        if expected_d is not None and last > expected_d:
            raise ValueError(f"{where}: feature index {last} exceeds expected d={expected_d}")
        labels.append(label)
        rows.append(entries)
    if not rows:
        raise ValueError("LIBSVM input has no data lines")
    if {0.0, -1.0} <= seen:
        raise ValueError("labels mix 0 and -1; cannot tell which convention is meant")
    d = int(expected_d) if expected_d is not None else max_idx
    A = np.zeros((len(rows), d))
    for i, entries in enumerate(rows):
        for idx, val in entries.items():
            A[i, idx - 1] = val
    y = np.where(np.asarray(labels) == 1.0, 1.0, -1.0)
    return Dataset(A=A, y=y, d=d, source=source)


def load_libsvm(path: PathLike, expected_d: int | None = None) -> Dataset:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read dataset {path}: {exc}") from exc
    try:
        return parse_libsvm(text, expected_d, source=str(path))
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def format_libsvm(A, y) -> str:
    """Inverse of :func:`parse_libsvm`; zero entries are omitted."""
    A = np.asarray(A, dtype=float)
    lines = []
    for row, label in zip(A, y):
        toks = ["+1" if label > 0 else "-1"]
        toks += [f"{j + 1}:{_fmt(v)}" for j, v in enumerate(row) if v != 0.0]
        lines.append(" ".join(toks))
    return "\n".join(lines) + "\n"


def _open_out(path: PathLike):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path.open("w", encoding="utf-8", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def write_trace_csv(traces: list[RunTrace], path: PathLike) -> None:
    with _open_out(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for t in traces:
            for k, calls, gap in zip(t.iters, t.oracle_calls, t.gaps):
                w.writerow([t.method.value, t.family.value, t.d, t.r, t.seed, int(k), int(calls), _fmt(gap)])


def read_trace_csv(path: PathLike) -> list[dict]:
    """Rows of a trace CSV with numeric fields converted."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != TRACE_HEADER:
        raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
    rows = []
    for row in reader:
        for key in ("d", "r", "seed", "iter", "oracle_calls"):
            row[key] = int(row[key])
        row["gap"] = float(row["gap"])
        rows.append(row)
    return rows


def write_curve_csv(curves: list[AggregateCurve], path: PathLike) -> None:
    with _open_out(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_HEADER)
        for c in curves:
            for k, calls, m, s in zip(c.iters, c.oracle_calls, c.mean, c.std):
                w.writerow([c.method.value, c.family.value, c.r, int(k), int(calls), _fmt(m), _fmt(s), c.n_seeds])


def config_to_dict(config: RunConfig) -> dict:
    return {
        "method": config.method.value,
        "family": config.family.value,
        "r": config.r,
        "oracle_budget": config.oracle_budget,
        "seeds": list(config.seeds),
        "record_every": config.record_every,
        "epsilon": config.epsilon,
    }


_RUN_KEYS = {"method", "family", "r", "oracle_budget", "seeds", "record_every", "epsilon"}


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"run entry must be an object, got {type(data).__name__}")
    unknown = set(data) - _RUN_KEYS - {"schema_version"}
    if unknown:
        raise ConfigError(f"unknown run fields: {sorted(unknown)}")
    missing = {"method", "family", "oracle_budget"} - set(data)
    if missing:
        raise ConfigError(f"missing run fields: {sorted(missing)}")
    try:
        return RunConfig(
            method=data["method"],
            family=data["family"],
            r=data.get("r", 1),
            oracle_budget=data["oracle_budget"],
            seeds=data.get("seeds", [0]),
            record_every=data.get("record_every"),
            epsilon=data.get("epsilon"),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _load_json(path: PathLike):
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{path}: unsupported schema_version {version!r}")
    return data


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(data: dict, path: PathLike) -> None:
    with _open_out(path) as fh:
        json.dump(data, fh, indent=2, default=_json_default)
        fh.write("\n")


def read_config(path: PathLike) -> RunConfig:
    return config_from_dict({k: v for k, v in _load_json(path).items() if k != "schema_version"})


def write_config(config: RunConfig, path: PathLike) -> None:
    write_json({"schema_version": SCHEMA_VERSION, **config_to_dict(config)}, path)


@dataclass
class ProblemSpec:
    """Where the objective comes from.

    ``kind`` is ``"quadratic"`` (with ``instance`` and ``d``) or
    ``"logistic"`` (with ``dataset`` and ``mu``). ``mu`` is the string
    ``"1/n"`` or a positive number.
    """

    kind: str
    instance: Optional[str] = None
    d: Optional[int] = None
    dataset: Optional[str] = None
    mu: Union[str, float] = "1/n"

    def __post_init__(self):
        if self.kind == "quadratic":
            if self.instance is None or self.d is None:
                raise ConfigError("quadratic problem needs 'instance' and 'd'")
            self.d = int(self.d)
        elif self.kind == "logistic":
            if not self.dataset:
                raise ConfigError("logistic problem needs a 'dataset' path")
            if self.mu != "1/n":
                try:
                    self.mu = float(self.mu)
                except (TypeError, ValueError):
                    raise ConfigError(f"mu must be '1/n' or a number, got {self.mu!r}") from None
                if not self.mu > 0:
                    raise ConfigError(f"mu must be positive, got {self.mu}")
        else:
            raise ConfigError(f"unknown problem kind {self.kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "quadratic":
            return {"kind": self.kind, "instance": self.instance, "d": self.d}
        return {"kind": self.kind, "dataset": self.dataset, "mu": self.mu}


@dataclass
class ExperimentConfig:
    problem: ProblemSpec
    runs: list[RunConfig]
    r_grid: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "problem": self.problem.to_dict(),
            "runs": [config_to_dict(c) for c in self.runs],
        }
        if self.r_grid:
            out["r_grid"] = list(self.r_grid)
        return out


def read_experiment(path: PathLike) -> ExperimentConfig:
    """Read an experiment file; a relative dataset path is taken from the file's folder."""
    path = Path(path)
    data = _load_json(path)
    unknown = set(data) - {"schema_version", "problem", "runs", "r_grid"}
    if unknown:
        raise ConfigError(f"{path}: unknown fields {sorted(unknown)}")
    prob = data.get("problem")
    if not isinstance(prob, dict):
        raise ConfigError(f"{path}: missing 'problem' object")
    try:
        spec = ProblemSpec(**prob)
    except TypeError as exc:
        raise ConfigError(f"{path}: bad problem fields ({exc})") from None
    if spec.dataset and not Path(spec.dataset).is_absolute():
        spec.dataset = str(path.parent / spec.dataset)
    runs = data.get("runs")
    if not isinstance(runs, list) or not runs:
        raise ConfigError(f"{path}: 'runs' must be a nonempty list")
    r_grid = data.get("r_grid", [])
    if not isinstance(r_grid, list) or not all(isinstance(r, int) for r in r_grid):
        raise ConfigError(f"{path}: 'r_grid' must be a list of integers")
    return ExperimentConfig(spec, [config_from_dict(r) for r in runs], r_grid)


def write_experiment(exp: ExperimentConfig, path: PathLike) -> None:
    write_json(exp.to_dict(), path)


def _report_entry(rep) -> dict:
    entry = dict(rep.to_dict() if hasattr(rep, "to_dict") else rep)
    if "passed" in entry:
        entry["pass"] = bool(entry.pop("passed"))
    return entry


def write_report(reports: list, path: PathLike, meta: dict | None = None) -> dict:
    """Write a verification report; returns the JSON document."""
    entries = [_report_entry(r) for r in reports]
    doc = {
        "schema_version": SCHEMA_VERSION,
        "pass": all(e.get("pass", True) for e in entries),
        **(meta or {}),
        "reports": entries,
    }
    write_json(doc, path)
    return doc
