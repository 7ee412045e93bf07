import pandas as pd
import pytest

from ldgcouple import driver
from ldgcouple.driver import REPORT_FIELDS
from ldgcouple.main import build_parser, cli_entry_point

REST_CONFIG = """
run.scenario = "rest"
run.end_time = 0.0
mesh.x_max = 4.0
mesh.columns = 4
mesh.layers = 2
mesh.darcy_layers = 2
mesh.z_bottom = -2.0
mesh.bed_slope = 0.0
freeflow.rest_level = 1.0
mesh.inflow_side = "none"
"""


@pytest.fixture
def rest_config(tmp_path):
    path = tmp_path / "rest.toml"
    path.write_text(REST_CONFIG, encoding="utf-8")
    return path


def test_help_exits_cleanly(capsys):
    assert cli_entry_point(["--help"]) == 0
    assert "converge" in capsys.readouterr().out


def test_unknown_command_is_a_usage_error():
    assert cli_entry_point(["simulate"]) == 2


def test_orders_parsing():
    args = build_parser().parse_args(["converge", "--orders", "1,2", "--levels", "4"])
    assert args.orders == [1, 2]
    assert args.levels == 4
    with pytest.raises(SystemExit):
        build_parser().parse_args(["converge", "--orders", "one"])


def test_run_writes_outputs(rest_config, tmp_path, capsys):
    out = tmp_path / "out"
    assert cli_entry_point(["run", "--config", str(rest_config), "--output-dir", str(out)]) == 0
    assert len(pd.read_csv(out / "energy.csv")) == 1
    assert "t=0 steps=0" in capsys.readouterr().out


def test_missing_config_file_fails(tmp_path):
    assert cli_entry_point(["run", "--config", str(tmp_path / "missing.toml")]) == 1


def test_invalid_configuration_fails(rest_config, tmp_path):
    assert cli_entry_point(["run", "--config", str(rest_config), "--end-time", "0.013", "--output-dir", str(tmp_path)]) == 1


def test_converge_with_one_level_fails(tmp_path):
    assert cli_entry_point(["converge", "--levels", "1", "--output-dir", str(tmp_path)]) == 1


def test_converge_prints_table(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(driver, "_run_level", lambda cfg: ({name: 2.0 ** -(2 * cfg.refinement) for name in REPORT_FIELDS}, 0.0))
    assert cli_entry_point(["converge", "--levels", "2", "--output-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "EOC" in out
    assert "2.00" in out
    assert (tmp_path / "errors.csv").exists()


def test_selftest_subset(capsys):
    assert cli_entry_point(["selftest", "--only", "fluxes"]) == 0
    assert "3/3 checks passed" in capsys.readouterr().out


def test_selftest_with_no_matching_checks_fails():
    assert cli_entry_point(["selftest", "--only", "nonexistent"]) == 1
