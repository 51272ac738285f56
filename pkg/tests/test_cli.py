import csv
import json

import numpy as np
import pytest

from eqmarma.cli import CONFIG_KEYS, UsageError, main, read_config, read_series, sweep_config
from eqmarma.eqm import complete_data_mle
from eqmarma.harness import SweepConfig
from eqmarma.model import ArmaParams, simulate_arma


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "simulate" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [[], ["bogus"], ["simulate"], ["estimate", "x.csv", "--orders", "1"],
                                  ["simulate", "--n", "5", "--p", "2", "--phi", "0.5"]])
def test_usage_errors_exit_one(argv):
    assert main(argv) == 1


def test_simulate_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert main(["simulate", "--p", "1", "--phi", "0.5", "--n", "10", "--seed", "7",
                     "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()
    vals = np.array([float(x) for x in a.read_text().split()])
    np.testing.assert_allclose(vals, simulate_arma(ArmaParams([0.5], [], 1.0), 10, 7), rtol=1e-11)


def test_simulate_random_params_to_stdout(capsys):
    assert main(["simulate", "--p", "2", "--q", "1", "--n", "5", "--seed", "1"]) == 0
    assert len(capsys.readouterr().out.split()) == 5


def test_read_series_formats(tmp_path):
    f = tmp_path / "s.csv"
    f.write_text("# header\n1.5\n\n-2\n# note\n3e-1\n")
    rec = read_series(f)
    assert rec.values == [1.5, None, -2.0, 0.3]


def test_malformed_input_reports_line(tmp_path, capsys):
    f = tmp_path / "bad.csv"
    f.write_text("1.0\n2.0\nabc\n")
    assert main(["estimate", str(f), "--orders", "1,0"]) == 2
    assert ":3:" in capsys.readouterr().err


def test_missing_input_is_runtime_error(tmp_path):
    assert main(["estimate", str(tmp_path / "none.csv"), "--orders", "1,0"]) == 2


def test_estimate_eqm_passthrough(tmp_path, capsys):
    y = simulate_arma(ArmaParams([-0.6], [], 1.0), 200, 3)
    f = tmp_path / "y.csv"
    f.write_text("".join(f"{v:.17g}\n" for v in y))
    assert main(["estimate", str(f), "--algorithm", "eqm", "--orders", "1,0"]) == 0
    out = capsys.readouterr().out
    phi_line = next(line for line in out.splitlines() if line.startswith("phi = "))
    assert float(phi_line.split("=")[1]) == pytest.approx(complete_data_mle(y, (1, 0)).phi[0],
                                                          rel=1e-11)
    assert "termination = no_missing" in out


@pytest.mark.parametrize("alg", ["em", "naive", "eqm"])
def test_estimate_with_missing(tmp_path, alg):
    y = simulate_arma(ArmaParams([-0.6], [0.2], 1.0), 120, 4)
    lines = ["" if i % 7 == 3 else f"{v:.17g}" for i, v in enumerate(y)]
    f = tmp_path / "y.csv"
    f.write_text("\n".join(lines) + "\n")
    trace = tmp_path / "trace.csv"
    assert main(["estimate", str(f), "--algorithm", alg, "--orders", "1,1", "--max-iters", "5",
                 "--out", str(trace)]) == 0
    if alg != "naive":
        rows = list(csv.reader(trace.open()))
        assert rows[0][:3] == ["iteration", "observed_loglik", "wall_time_s"]
        assert 2 <= len(rows) - 1 <= 6


def test_case_study_row_count(tmp_path):
    out = tmp_path / "case.csv"
    assert main(["case-study", "--fractions", "0.1,0.3", "--runs", "5", "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert len(rows) - 1 == 2 * 5 * 3
    assert (tmp_path / "case_aggregate.csv").exists()


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text("# small sweep\nsweep.n_processes = 2\nsweep.series_length = 90\n"
                   "sweep.order_max = 2  # inline comment\nsweep.missing_fractions = 0, 0.2\n"
                   "eqm.max_iters = 10\nem.max_iters = 4\n")
    values = read_config(cfg)
    sc = sweep_config(SweepConfig.ar_sweep(), values)
    assert sc.n_processes == 2 and sc.order_range == (1, 2)
    assert sc.missing_fractions == (0.0, 0.2)
    assert sc.eqm_policy.max_iters == 10 and sc.em_policy.max_iters == 4
    out = tmp_path / "r.json"
    assert main(["sweep", "--config", str(cfg), "--processes", "1", "--format", "json",
                 "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["config"]["n_processes"] == 1
    assert len(doc["rows"]) == 1 * 2 * 3


def test_config_rejects_unknown_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("sweep.bogus = 1\n")
    with pytest.raises(UsageError):
        read_config(cfg)
    assert main(["sweep", "--config", str(cfg)]) == 1


def test_config_keys_are_namespaced():
    assert all(k.split(".")[0] in ("sweep", "eqm", "em") for k in CONFIG_KEYS)
