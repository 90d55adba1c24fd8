import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from quasi2d.cli import EXIT_BUDGET, EXIT_OK, EXIT_ORACLE, EXIT_VALIDATION, main
from quasi2d.timeseries import read_csv

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

IBM = """
[experiment]
name = ibm-benchmark
total_time = 2 ps
[system]
initial = coherent
[bath]
spectral_density = parametric
alpha = 0.05
s = 3
omega_c = 2 ps^-1
cutoff_form = 2
temperature = 77 K
n_c = 20
[numerics]
dt = 0.05 ps
"""

QUASI = """
[experiment]
name = quasi2d
total_time = 3 ps
[bath]
spectral_density = parametric
alpha = 0.1435
s = 3
omega_c = 7 ps^-1
cutoff_form = 2
temperature = 4 K
n_c = 3
[feedback]
Gamma = 0.9 ps^-1
tau = 0.6 ps
n_d = 2
phi = 1.17
[numerics]
dt = 0.3 ps
"""


def _write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_ibm_oracle_assertion_passes(tmp_path):
    cfg = _write(tmp_path, IBM)
    assert main(["--config", str(cfg), "--out", str(tmp_path / "o"), "--assert-oracle"]) == EXIT_OK
    data = read_csv(tmp_path / "o" / "ibm-benchmark.csv")
    assert len(data["time"]) == 41
    assert np.max(np.abs(data["im_rho01"] - data["ref_im_rho01"])) < 1e-3
    summary = json.loads((tmp_path / "o" / "ibm-benchmark_summary.json").read_text())
    assert summary["all_checks_passed"]
    run = summary["runs"][0]
    assert {"final", "max_trace_defect", "peak_link_dim", "wall_time_s"} <= set(run)


def test_oracle_failure_exit_code(tmp_path):
    # two bins per round trip are too coarse for the delay-equation reference
    shutil.copy(CONFIGS / "feedback.ini", tmp_path / "fb.ini")
    args = ["--config", str(tmp_path / "fb.ini"), "--out", str(tmp_path / "o")]
    args += ["--override", "feedback.n_d=2", "--override", "numerics.dt=0.6 ps"]
    assert main(args + ["--assert-oracle"]) == EXIT_ORACLE
    # without the flag the run still succeeds
    assert main(args) == EXIT_OK


def test_validation_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, QUASI.replace("n_d = 2", "n_d = 3"))
    assert main(["--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_VALIDATION
    err = capsys.readouterr().err
    assert "numerics.dt" in err and "feedback.tau" in err
    assert main(["--config", str(tmp_path / "missing.ini")]) == EXIT_VALIDATION


def test_unknown_experiment_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["--config", str(_write(tmp_path, QUASI)), "--experiment", "nope"])
    assert exc.value.code == EXIT_VALIDATION


def test_budget_exit_code_and_override(tmp_path):
    cfg = _write(tmp_path, QUASI)
    args = ["--config", str(cfg), "--out", str(tmp_path / "o"), "--override", "bath.n_c=18"]
    assert main(args) == EXIT_BUDGET
    short = args + ["--override", "experiment.total_time=0.6 ps", "--budget-override"]
    assert main(short) == EXIT_OK


def test_quasi2d_writes_link_dimension(tmp_path):
    out = tmp_path / "o"
    assert main(["--config", str(_write(tmp_path, QUASI)), "--out", str(out)]) == EXIT_OK
    data = read_csv(out / "quasi2d.csv")
    assert "link_dim" in data and "link_dim_half_step" in data
    assert data["link_dim"].max() > 1
    assert np.all(np.abs(np.abs(data["rho00"] + data["rho11"] - 1) - data["trace_defect"]) <= 1e-12)


def test_rerun_is_byte_identical(tmp_path):
    cfg = _write(tmp_path, QUASI)
    main(["--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["--config", str(cfg), "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "quasi2d.csv").read_bytes() == (tmp_path / "b" / "quasi2d.csv").read_bytes()


def test_convergence_dcut_outputs(tmp_path):
    cfg = _write(tmp_path, QUASI)
    out = tmp_path / "o"
    assert main(["--config", str(cfg), "--experiment", "convergence-dcut", "--out", str(out)]) == EXIT_OK
    csvs = sorted(p.name for p in out.glob("*.csv"))
    assert len(csvs) == 3
    summary = json.loads((out / "convergence-dcut_summary.json").read_text())
    (check,) = summary["checks"]
    assert check["name"] == "dcut_tightest" and check["passed"]


def test_sweep_with_jobs_matches_sequential(tmp_path):
    text = QUASI + "[sweep]\nfeedback.phi = 1, 1.17\n"
    cfg = _write(tmp_path, text)
    assert main(["--config", str(cfg), "--out", str(tmp_path / "seq")]) == EXIT_OK
    assert main(["--config", str(cfg), "--out", str(tmp_path / "par"), "--jobs", "2"]) == EXIT_OK
    names = sorted(p.name for p in (tmp_path / "seq").glob("*.csv"))
    assert len(names) == 2
    for name in names:
        assert (tmp_path / "seq" / name).read_bytes() == (tmp_path / "par" / name).read_bytes()


@pytest.mark.parametrize("name", ["feedback.ini", "spin-boson.ini", "ibm-benchmark.ini"])
def test_shipped_configs_pass_their_oracles(tmp_path, name):
    shutil.copy(CONFIGS / name, tmp_path / name)
    assert main(["--config", str(tmp_path / name), "--out", str(tmp_path / "o"), "--assert-oracle"]) == EXIT_OK
