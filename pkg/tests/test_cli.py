import csv
import json
import subprocess
import sys

import pytest

from artifact.cli import build_parser, main


def rows(text):
    return list(csv.reader(text.strip().splitlines()))


def test_scott(capsys, tmp_path):
    out = tmp_path / "shells.csv"
    assert main(["scott", "--kappa", "0.5", "--shells", "3", "--csv", str(out)]) == 0
    lines = dict(r[:2] for r in rows(capsys.readouterr().out))
    assert float(lines["c_scott"]) == pytest.approx(0.0664498566, abs=1e-9)
    table = rows(out.read_text())
    assert table[0] == ["n", "d_n"] and len(table) == 4
    assert float(table[1][1]) == pytest.approx(-0.0179492, abs=1e-7)


def test_tf(capsys):
    assert main(["tf", "--grid-size", "1000"]) == 0
    lines = dict(rows(capsys.readouterr().out))
    assert float(lines["energy"]) == pytest.approx(float(lines["ode_energy"]), rel=1e-4)


def test_tf_domain_error_exit_code(caplog):
    assert main(["tf", "--lambda", "0.5"]) == 2
    assert "DomainError" in caplog.text


def test_spectrum(capsys):
    assert main(["spectrum", "--kappa", "0.5", "--kmax", "1", "--grid-size", "2000", "--r-max", "200"]) == 0
    table = rows(capsys.readouterr().out)
    assert table[0] == ["k", "index", "eigenvalue"]
    ground = [float(r[2]) for r in table[1:] if r[0] == "-1" and r[1] == "0"][0]
    assert ground == pytest.approx(0.8660254, abs=1e-6)


def test_scf_with_checkpoint_and_restart(capsys, tmp_path):
    ck, trace = tmp_path / "state.json", tmp_path / "trace.csv"
    args = ["scf", "--kappa", "0.5", "--n-electrons", "2", "--grid-size", "600", "--scheme", "anderson"]
    assert main(args + ["--checkpoint", str(ck), "--trace", str(trace)]) == 0
    first = capsys.readouterr().out
    energy = float(dict(r[:2] for r in rows(first) if len(r) == 2)["energy"])
    assert energy < 0
    assert json.loads(ck.read_text())["converged"]
    assert rows(trace.read_text())[0][0] == "iteration"
    assert main(args + ["--restart", str(ck)]) == 0
    again = dict(r[:2] for r in rows(capsys.readouterr().out) if len(r) == 2)
    assert float(again["energy"]) == pytest.approx(energy, abs=1e-12)
    assert int(again["iterations"]) <= 2


def test_scf_projected(capsys):
    assert main(["scf", "--kappa", "0.5", "--n-electrons", "2", "--grid-size", "600", "--projected"]) == 0
    assert "energy," in capsys.readouterr().out


def test_nu0_with_oracle(capsys):
    assert main(["nu0", "--kappa", "0.5", "--k-scan", "1", "--density", "gaussian:1", "--oracle"]) == 0
    table = rows(capsys.readouterr().out)
    assert table[0][0] == "kappa" and len(table) == 2
    nu0, oracle = float(table[1][2]), float(table[1][5])
    assert nu0 == pytest.approx(oracle, rel=1e-5)


def test_gap_cert(capsys):
    assert main(["gap-cert", "--kappa", "0.5", "--nu", "0.3", "--k-scan", "1", "--density", "exponential:1"]) == 0
    table = rows(capsys.readouterr().out)
    assert table[1][-1] == "ok"
    assert float(table[1][3]) >= float(table[1][4])


def test_tix(capsys):
    assert main(["tix", "--kappa", "0.5", "--k-scan", "1"]) == 0
    table = rows(capsys.readouterr().out)
    assert float(table[1][1]) >= 0.5 - 1e-4


def test_proj_diff(capsys):
    assert main(["proj-diff", "--kappa", "0.5", "--k-scan", "1", "--scales", "1,0.5"]) == 0
    table = rows(capsys.readouterr().out)
    assert len(table) == 3
    assert float(table[1][5]) > float(table[2][5]) > 0


def test_sweep_with_config(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kappa": 0.5, "n_list": [2, 4], "policy": {"min_nodes": 600},
                               "tf_grid_size": 1000}))
    out = tmp_path / "report.json"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "trend_ok=True" in text
    assert out.exists() and out.with_suffix(".csv").exists()


def test_bad_density_tag_rejected(capsys):
    with pytest.raises(SystemExit):
        main(["nu0", "--density", "cubic:1"])
    assert "unknown density family" in capsys.readouterr().err


def test_parser_requires_subcommand():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "artifact", "scott", "--kappa", "0.3", "--shells", "1"],
                         capture_output=True, text=True, check=True)
    assert res.stdout.startswith("c_scott,")
