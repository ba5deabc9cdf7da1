import subprocess
import sys

import pytest

import thz_hybrid.cli as cli
from thz_hybrid.harness import parse_results
from thz_hybrid.validation import CheckResult

SMALL = """n_subcarriers = 4
m_t = 2
n_t = 2
m_r = 2
n_r = 2
n_rf = 2
n_realizations = 2
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL)
    return path


def test_simulate_writes_csv_and_script(tmp_path, small_config, capsys, monkeypatch):
    monkeypatch.delenv("SEED", raising=False)
    out = tmp_path / "sim.csv"
    code = cli.main(["simulate", "--config", str(small_config), "--output", str(out),
                     "--schemes", "fully_digital,eigen"])
    assert code == 0
    rows = parse_results(out)
    assert {r.scheme for r in rows} == {"fully_digital", "eigen"} and len(rows) == 4
    assert (tmp_path / "sim_plot.py").exists()
    assert "mean rate" in capsys.readouterr().out


def test_sweep_uses_the_config_spec(tmp_path, small_config):
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text(SMALL + "sweep_variable = d\nsweep_values = 1, 5\nsweep_schemes = codebook\n")
    out = tmp_path / "sweep.csv"
    assert cli.main(["sweep", "--config", str(cfg), "--output", str(out)]) == 0
    rows = parse_results(out)
    assert {(r.variable, r.value) for r in rows} == {("d", 1.0), ("d", 5.0)}


def test_sweep_without_spec_is_an_error(small_config, capsys):
    assert cli.main(["sweep", "--config", str(small_config)]) == 2
    assert "sweep_variable" in capsys.readouterr().err


def test_seed_precedence(tmp_path, small_config, monkeypatch):
    def rates(*extra):
        out = tmp_path / "s.csv"
        cli.main(["simulate", "--config", str(small_config), "--output", str(out),
                  "--schemes", "fully_digital", *extra])
        return [r.avg_rate_bps for r in parse_results(out)]

    monkeypatch.delenv("SEED", raising=False)
    base = rates()
    assert rates("--seed", "2024") == base  # config default master seed
    monkeypatch.setenv("SEED", "99")
    env = rates()
    assert env != base
    assert rates("--seed", "2024") == base  # flag beats environment


def test_bad_seed_and_missing_config_are_reported(tmp_path, capsys):
    with pytest.raises(SystemExit):
        cli.main(["simulate", "--seed", "-3"])
    assert cli.main(["simulate", "--config", str(tmp_path / "absent.cfg")]) == 2
    assert "absent.cfg" in capsys.readouterr().err


def test_validate_exit_code_follows_the_checks(monkeypatch, capsys):
    good = [CheckResult(1, "a", True, ["fine"]), CheckResult(2, "b", True, ["fine"])]
    monkeypatch.setattr(cli, "run_all", lambda **kw: good)
    assert cli.main(["validate", "--realizations", "3"]) == 0
    out = capsys.readouterr().out
    assert "[PASS] 1. a: fine" in out and "2/2 checks passed" in out
    monkeypatch.setattr(cli, "run_all", lambda **kw: good + [CheckResult(3, "c", False, ["no"])])
    assert cli.main(["validate"]) == 1
    assert "[FAIL] 3. c: no" in capsys.readouterr().out


def test_scale_choices():
    parser = cli.build_parser()
    for scale in ("desk", "full", "paper"):
        assert parser.parse_args(["simulate", "--scale", scale]).scale == scale
    with pytest.raises(SystemExit):
        parser.parse_args(["simulate", "--scale", "huge"])


def test_module_entry_point_prints_help():
    proc = subprocess.run([sys.executable, "-m", "thz_hybrid.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    for sub in ("simulate", "sweep", "validate"):
        assert sub in proc.stdout
