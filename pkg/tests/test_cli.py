import csv
import json
import math

import numpy as np
import pytest

from rsnag.cli import constants_row, main
from rsnag.dataio import format_libsvm
from rsnag.smoothness import DenseModel, DiagonalModel


def _curves(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def _final(rows, sketch, r=None):
    sel = [x for x in rows if x["sketch"] == sketch and (r is None or int(x["r"]) == r)]
    return float(sel[-1]["mean"])


def test_run_cardinality(tmp_path):
    assert main(["run", "--config", "desk-convex-diag", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "run_traces.csv") as fh:
        groups = {(r["method"], r["sketch"], r["seed"]) for r in csv.DictReader(fh)}
    assert len(groups) == 40
    summary = json.loads((tmp_path / "run_summary.json").read_text())
    assert len(summary["cells"]) == 4
    assert all(c["theoretical_bound"] is not None for c in summary["cells"])
    assert len({(r["method"], r["sketch"]) for r in _curves(tmp_path / "run_curves.csv")}) == 4


def test_run_sc_diag_desk_ordering(tmp_path):
    assert main(["run", "--config", "desk-sc-diag", "--out", str(tmp_path)]) == 0
    rows = _curves(tmp_path / "run_curves.csv")
    worst_random = max(_final(rows, "haar"), _final(rows, "gaussian"))
    assert worst_random < min(_final(rows, "coordinate"), _final(rows, "identity"))


def test_run_is_reproducible(tmp_path):
    args = ["run", "--config", "desk-sc-dense", "--seeds", "2", "--budget", "400"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("run_traces.csv", "run_curves.csv", "run_summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def _write_logistic_config(tmp_path, dataset):
    cfg = {
        "schema_version": 1,
        "problem": {"kind": "logistic", "dataset": dataset, "mu": "1/n"},
        "runs": [{"method": "rs_nag_sc", "family": "haar", "r": 1, "oracle_budget": 50, "seeds": [0]}],
    }
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return p


def test_run_missing_dataset_exit_2(tmp_path, capsys):
    p = _write_logistic_config(tmp_path, "nowhere.svm")
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "not found" in capsys.readouterr().err


def test_run_logistic(tmp_path):
    rng = np.random.default_rng(0)
    A = rng.standard_normal((30, 4))
    y = np.sign(A @ np.ones(4) + 0.1)
    (tmp_path / "d.svm").write_text(format_libsvm(A, y))
    p = _write_logistic_config(tmp_path, "d.svm")
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "run_summary.json").read_text())
    assert summary["cells"][0]["final_mean_gap"] < 0.05


def test_run_bad_config_exit_2(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"schema_version": 1, "problem": {"kind": "quadratic", "instance": "SCDiag", "d": 10}, "runs": []}))
    assert main(["run", "--config", str(p), "--out", str(tmp_path)]) == 2
    assert main(["run", "--config", "no-such-config", "--out", str(tmp_path)]) == 2
    assert main(["run", "--budget", "0", "--out", str(tmp_path)]) == 2


def test_run_divergence_exit_3(tmp_path, monkeypatch):
    from rsnag import cli
    from rsnag.optimizers import DivergenceError

    def boom(cfg, obj, seed, oracle=None):
        raise DivergenceError(4, None)

    monkeypatch.setattr(cli, "run_seed", boom)
    assert main(["run", "--seeds", "1", "--out", str(tmp_path)]) == 3
    assert (tmp_path / "run_traces.csv").exists()


def test_sweep_haar_dense_deteriorates_with_r(tmp_path):
    assert main(["sweep-r", "--config", "desk-convex-dense", "--r-grid", "1,10,100", "--out", str(tmp_path)]) == 0
    rows = _curves(tmp_path / "sweep_curves.csv")
    gaps = [_final(rows, "haar", r) for r in (1, 10, 100)]
    assert gaps[0] <= gaps[1] <= gaps[2]
    summary = json.loads((tmp_path / "sweep_summary.json").read_text())
    assert summary["argmin"]["haar"]["argmin_oracle_factor_in_grid"] == 1


def test_sweep_coordinate_factor_constant_on_sc_diag(tmp_path):
    assert main(["sweep-r", "--config", "desk-sc-diag", "--r-grid", "1,10,100", "--seeds", "1", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "sweep_summary.json").read_text())
    facs = [c["oracle_factor"] for c in summary["cells"] if c["sketch"] == "coordinate"]
    np.testing.assert_allclose(facs, 200.0, rtol=1e-12)
    assert summary["argmin"]["coordinate"]["argmin_oracle_factor_all_r"] == 1


def test_sweep_single_r_and_bad_r(tmp_path):
    assert main(["sweep-r", "--r-grid", "1", "--seeds", "1", "--budget", "20", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "sweep_summary.json").read_text())
    assert len({c["sketch"] for c in summary["cells"]}) == len(summary["cells"]) == 3
    assert main(["sweep-r", "--r-grid", "1,201", "--out", str(tmp_path)]) == 2


def test_verify_default_passes(tmp_path):
    assert main(["verify", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "verify_report.json").read_text())
    assert doc["pass"] is True and doc["schema_version"] == 1


def test_verify_detects_wrong_haar_scale(tmp_path, capsys):
    code = main(
        ["verify", "--families", "haar", "--inject-haar-scale", "1", "--moment-samples", "5000",
         "--lyapunov-samples", "2000", "--out", str(tmp_path)]
    )
    assert code == 1
    assert "unbiasedness E[P P^T] = I" in capsys.readouterr().err


def test_verify_identity_trivial(tmp_path):
    assert main(["verify", "--families", "identity", "--moment-samples", "1000", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "verify_report.json").read_text())
    moments = [r for r in doc["reports"] if r["check"] == "moments"]
    assert moments and all(r["dev_unbiased"] == 0.0 and r["dev_second"] == 0.0 for r in moments)


def test_verify_unknown_family(tmp_path):
    assert main(["verify", "--families", "fourier", "--out", str(tmp_path)]) == 2


def test_distsim_outputs(tmp_path):
    assert main(["distsim", "--seeds", "1", "--budget", "200", "--workers", "4", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "distsim_summary.json").read_text())
    haar = [r for r in doc["runs"] if "haar" in r["label"]][0]
    assert haar["ledger"]["total_uplink_scalars"] == 800
    assert haar["max_iterate_deviation"] <= 1e-12


def test_distsim_rejects_logistic(tmp_path):
    p = _write_logistic_config(tmp_path, "d.svm")
    assert main(["distsim", "--config", str(p), "--out", str(tmp_path)]) == 2


def test_constants_rank_one_structure():
    d = 40
    e1 = np.zeros(d)
    e1[0] = 1.0
    row = constants_row(DenseModel(np.outer(e1, e1)), None, "rank-one")
    assert row["Q_C"] == pytest.approx(d)
    assert row["Q_H"] == pytest.approx(d * math.sqrt(3 / (d + 2)), rel=1e-12)


def test_constants_duke_shape_ratio():
    d = 7129
    diag = np.full(d, 20.0 / (d - 1))
    diag[0] = 1.0
    row = constants_row(DiagonalModel(diag), 44, "duke-like")
    assert row["Q_G"] / row["Q_H"] == pytest.approx(1 + 2 / d, rel=1e-12)


def test_constants_sc_dense_instance(tmp_path):
    assert main(["constants", "--instance", "SCDense", "--d", "1000", "--out", str(tmp_path)]) == 0
    row = json.loads((tmp_path / "constants.json").read_text())["rows"][0]
    assert row["delta_diag"] == pytest.approx(0.002, rel=1e-10)
    assert row["r_eff"] == pytest.approx(2.0, rel=1e-10)


def test_constants_needs_a_source(tmp_path):
    assert main(["constants", "--out", str(tmp_path)]) == 2
    assert main(["constants", "--instance", "SCDense", "--out", str(tmp_path)]) == 2
    assert main(["constants", "--dataset", str(tmp_path / "none.svm"), "--out", str(tmp_path)]) == 2


def test_exactly_one_subcommand():
    with pytest.raises(SystemExit):
        main([])
