import json

import numpy as np
import pytest

from traceext import cli
from traceext.experiments import SuiteReport
from traceext.simplicial import SimplicialComplex, Subcomplex, dump_complex


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"m": 2, "p": 1.5, "kappas": [0.25, 0.125], "h_per_axis": 2,
                                "boundary": {"kind": "linear"}, "theta": 100.0}))
    return path


def test_scan_writes_named_report(tmp_path, config, capsys):
    assert cli.main(["scan", "--config", str(config), "--seed", "4", "--out", str(tmp_path / "o")]) == 0
    data = json.loads((tmp_path / "o" / "scan_4.json").read_text())
    assert data["config"]["seed"] == 4 and len(data["rows"]) == 4
    assert "admissible_fraction" in capsys.readouterr().out


def test_scan_json_byte_identical(tmp_path, config):
    runs = []
    for _ in range(2):
        assert cli.main(["scan", "--config", str(config), "--out", str(tmp_path)]) == 0
        runs.append((tmp_path / "scan_0.json").read_bytes())
    assert runs[0] == runs[1]


def test_reconstruct_and_energy_csv(tmp_path, config):
    out = tmp_path / "o"
    assert cli.main(["reconstruct", "--config", str(config), "--out", str(out), "--format", "csv"]) == 0
    lines = (out / "reconstruct_0.csv").read_text().splitlines()
    assert lines[0].startswith("scenario,seed,kappa,h1,scan_energy") and len(lines) == 3
    assert cli.main(["energy", "--config", str(config), "--out", str(out), "--format", "csv"]) == 0
    assert (out / "energy_0.csv").read_text().startswith("kappa,step,extension_energy,boundary_energy")


def test_density_writes_samples(tmp_path, config):
    out = tmp_path / "o"
    assert cli.main(["density", "--config", str(config), "--out", str(out), "--kernel", "qual_kernel"]) == 0
    rep = json.loads((out / "density_0.json").read_text())
    assert rep["ok"] and rep["rows"][0]["kernel"] == "qual_kernel"
    assert (out / "density_0_density.csv").exists()


def test_config_errors_exit_3(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"m": 2, "p": 2.5}))
    assert cli.main(["scan", "--config", str(bad)]) == 3
    assert cli.main(["scan", "--config", str(tmp_path / "missing.json")]) == 3
    bad.write_text("[1, 2]")
    assert cli.main(["energy", "--config", str(bad)]) == 3
    assert "config error" in capsys.readouterr().err


def test_reconstruct_without_admissible_shift_exits_2(tmp_path):
    cfg = tmp_path / "v.json"
    cfg.write_text(json.dumps({"m": 3, "p": 2.5, "kappas": [0.25], "h_per_axis": 1,
                               "boundary": {"kind": "vortex"}, "theta": 1.0}))
    assert cli.main(["reconstruct", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_verify_exit_codes(tmp_path, monkeypatch):
    assert cli.main(["verify", "--suite", "kernel_mass", "--count", "5", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "verify_kernel_mass_0.json").exists()
    failing = SuiteReport("chain", 0, [{"instance": 0, "lhs": 2.0, "rhs": 1.0, "margin": -1.0, "ok": False,
                                         "detail": ""}])
    monkeypatch.setattr(cli, "verify_suite", lambda name, seed, count: failing)
    assert cli.main(["verify", "--suite", "chain", "--out", str(tmp_path)]) == 2


def test_gamma_command(tmp_path, capsys):
    cx = SimplicialComplex.from_simplices([[0, 1], [0, 2]])
    path = tmp_path / "star.json"
    dump_complex(path, cx, Subcomplex(cx, np.array([[0]])))
    assert cli.main(["gamma", "--complex", str(path), "--lam", "2", "4", "--out", str(tmp_path)]) == 0
    rows = json.loads((tmp_path / "gamma_0.json").read_text())["rows"]
    assert [r["gamma"] for r in rows] == [4.0, 8.0]
    assert cli.main(["gamma", "--complex", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 3
    assert cli.main(["gamma", "--complex", str(path), "--lam", "1.0"]) == 3
