import csv
import subprocess
import sys

import pytest

from hybrid_mpem.cli import EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, main


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as e:
        main([])
    assert e.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as e:
        main(["simulate", "--scenario", "hev"])
    assert e.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == EXIT_USAGE
    assert main(["sweep-gamma", "--scenario", "hev", "--cycle", "nycc", "--gammas", "1,x", "--out", "o"]) == EXIT_USAGE
    assert main(["simulate", "--scenario", "hev", "--cycle", "nycc", "--gamma", "-1"]) == EXIT_USAGE


def test_input_errors(tmp_path, capsys):
    assert main(["simulate", "--scenario", "hev", "--cycle", str(tmp_path / "none.csv")]) == EXIT_INPUT
    bad = tmp_path / "bad.csv"
    bad.write_text("0,0\n1,x\n")
    assert main(["simulate", "--scenario", "hev", "--cycle", str(bad)]) == EXIT_INPUT
    assert ":2:" in capsys.readouterr().err
    scn = tmp_path / "s.toml"
    scn.write_text("[vehicle]\nkind = 'road'\n")
    assert main(["simulate", "--scenario", str(scn), "--cycle", "nycc"]) == EXIT_INPUT
    assert main(["campaign", "--scenario", "hev", "--cycles", str(tmp_path / "nodir"), "--runs", "1",
                 "--hours", "1", "--gammas", "1", "--out", str(tmp_path / "o"), "--seed", "1"]) == EXIT_INPUT


def test_simulate_writes_outputs(tmp_path, capsys):
    out = tmp_path / "sim"
    assert main(["simulate", "--scenario", "hev", "--cycle", "nycc", "--gamma", "100", "--out", str(out), "--seed", "5"]) == EXIT_OK
    rows = list(csv.DictReader((out / "summary.csv").open()))
    assert len(rows) == 1 and float(rows[0]["gamma"]) == 100.0
    assert len((out / "ticks.csv").read_text().splitlines()) == 599


def test_sweep_gamma(tmp_path, capsys):
    out = tmp_path / "sweep"
    assert main(["sweep-gamma", "--scenario", "hev", "--cycle", "nycc", "--gammas", "0,1000", "--out", str(out)]) == EXIT_OK
    assert (out / "ticks_gamma_0.csv").exists() and (out / "ticks_gamma_1000.csv").exists()
    assert len((out / "summary.csv").read_text().splitlines()) == 3


def test_campaign(tmp_path, capsys):
    cyc = tmp_path / "cycles"
    cyc.mkdir()
    (cyc / "flat.csv").write_text("t_s,speed_mps\n0,0\n600,10\n")
    out = tmp_path / "camp"
    args = ["campaign", "--scenario", "hev", "--cycles", str(cyc), "--runs", "2", "--hours", "1",
            "--gammas", "1,100", "--out", str(out), "--seed", "4"]
    assert main(args) == EXIT_OK
    assert len((out / "soh.csv").read_text().splitlines()) == 1 + 2 * 2
    assert len((out / "summary.csv").read_text().splitlines()) == 1 + 2 * 2
    first = (out / "soh.csv").read_bytes()
    assert main(args) == EXIT_OK
    assert (out / "soh.csv").read_bytes() == first


def test_numerical_failure_exit(tmp_path, capsys):
    from importlib import resources

    text = resources.files("hybrid_mpem.data.scenarios").joinpath("hev.toml").read_text()
    text = text.replace('rho = "auto"', "rho = 0.1").replace("max_iters = 500", "max_iters = 2")
    scn = tmp_path / "stuck.toml"
    scn.write_text(text)
    assert main(["simulate", "--scenario", str(scn), "--cycle", "us06"]) == EXIT_NUMERICAL
    assert "numerical failure" in capsys.readouterr().err


def test_verify_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hybrid_mpem.cli", "verify"], capture_output=True, text=True)
    assert proc.returncode == EXIT_OK, proc.stdout + proc.stderr
    assert proc.stdout.count("PASS") == 3
