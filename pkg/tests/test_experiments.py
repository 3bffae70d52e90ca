import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from traceext.experiments import (
    SUITES,
    ConfigError,
    ExperimentConfig,
    NoAdmissibleShift,
    ScanResult,
    boundary_displacement,
    boundary_map,
    condition_iii_scan,
    emit_report,
    energy_table,
    reconstruct_from_scan,
    verify_suite,
)
from traceext.fields import save_samples


def linear_cfg(**kw):
    base = dict(m=2, p=1.5, kappas=[0.25, 0.125], h_per_axis=2, boundary={"kind": "linear"}, theta=100.0)
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def linear_scan():
    cfg = linear_cfg()
    return cfg, condition_iii_scan(boundary_map(cfg), cfg)


@pytest.mark.parametrize("bad", [
    dict(p=1.0), dict(p=3.0), dict(m=2, p=2.0), dict(lam=1.0), dict(kappas=[0.125, 0.25]),
    dict(kappas=[0.25, 0.25]), dict(kappas=[]), dict(n=3), dict(boundary={"kind": "spiral"}),
    dict(m=2, p=1.5, boundary={"kind": "vortex"}), dict(boundary={"kind": "file"}),
])
def test_config_invariants(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig(**bad)


def test_config_json_roundtrip(tmp_path):
    cfg = linear_cfg(seed=7)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.from_json(path) == cfg
    path.write_text(json.dumps({"m": 3, "colour": 1}))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(path)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(tmp_path / "missing.json")


def test_boundary_maps(tmp_path):
    x = np.array([[0.25, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, -0.3, 0.0]])
    lin = boundary_map(ExperimentConfig(boundary={"kind": "linear", "frequency": 1}))(x)
    assert np.allclose(lin[0], [0.0, 1.0])
    vort = boundary_map(ExperimentConfig(boundary={"kind": "vortex", "degree": 2}))(x)
    assert np.allclose(vort, [[1, 0], [1, 0], [-1, 0]], atol=1e-15)
    const = boundary_map(ExperimentConfig(boundary={"kind": "constant", "value": [0, 3]}))(x)
    assert np.allclose(const, [0, 1])
    ts = np.linspace(-1, 1, 201)[:, None]
    save_samples(tmp_path / "u.csv", ts, np.c_[np.cos(ts[:, 0]), np.sin(ts[:, 0])], {"kind": "curve"})
    fu = boundary_map(ExperimentConfig(m=2, p=1.5, boundary={"kind": "file", "path": str(tmp_path / "u.csv")}))
    y = np.array([[0.3, 0.0], [-0.77, 0.0]])
    assert np.allclose(fu(y), np.c_[np.cos(y[:, 0]), np.sin(y[:, 0])], atol=1e-4)


def test_constant_scan_rows_and_csv(tmp_path):
    cfg = ExperimentConfig(m=3, p=1.5, kappas=[0.25, 0.125, 0.0625], h_per_axis=4, theta=1e-9)
    res = condition_iii_scan(boundary_map(cfg), cfg)
    assert len(res.rows) == 48
    assert all(r["normalized_energy"] == 0.0 for r in res.rows)
    assert all(f == 1.0 for f in res.fractions().values()) and res.liminf() == 1.0
    with open(emit_report(res, "csv", tmp_path)) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == res.csv_header() and len(rows) == 49


def test_empty_scan_gives_header_only(tmp_path):
    cfg = linear_cfg()
    path = emit_report(ScanResult(cfg.to_dict(), [], 1.0), "csv", tmp_path)
    assert path.name == "scan_0.csv"
    assert path.read_text().splitlines() == [",".join(ScanResult(cfg.to_dict(), [], 1.0).csv_header())]


def test_scan_is_deterministic(tmp_path, linear_scan):
    cfg, res = linear_scan
    a = emit_report(res, "json", tmp_path / "a").read_bytes()
    again = condition_iii_scan(boundary_map(cfg), cfg)
    b = emit_report(again, "json", tmp_path / "b").read_bytes()
    assert a == b
    echo = json.loads(a)["config"]
    assert echo == json.loads(json.dumps(cfg.to_dict()))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 10.0), st.floats(0.0, 10.0))
def test_admissibility_monotone_in_theta(linear_scan, t1, t2):
    _, res = linear_scan
    lo, hi = sorted((t1, t2))
    f_lo, f_hi = res.fractions(lo), res.fractions(hi)
    assert all(0.0 <= f_lo[k] <= f_hi[k] <= 1.0 for k in f_lo)


def test_energy_normalization_linear(linear_scan):
    # normalized energies of a smooth datum do not drift when kappa halves
    _, res = linear_scan
    e1, e2 = res.mean_energy(0.25), res.mean_energy(0.125)
    assert max(e1, e2) / min(e1, e2) <= 1.2
    raw = [np.mean([r["box_energy"] for r in res.rows if r["kappa"] == k]) for k in (0.25, 0.125)]
    assert abs(raw[1] / raw[0] - 2 * e2 / e1) <= 1e-12


def test_energy_table_linear():
    cfg = linear_cfg()
    rep = energy_table(boundary_map(cfg), cfg)
    exact = (2 * math.pi) ** 1.5
    for kappa, _, ext, face in rep.rows:
        assert abs(face - exact) <= 0.02 * exact
        assert abs(ext - 0.25 * exact) <= 0.02 * exact


def test_smooth_datum_admissible_in_three_dimensions():
    # theta: ten times the energy of the vertically constant extension on the box
    p = 1.5
    theta = 10 * (2 * math.pi) ** p * 1.0 * 0.25
    cfg = ExperimentConfig(m=3, p=p, kappas=[0.25, 0.125], h_per_axis=2, boundary={"kind": "linear"}, theta=theta)
    res = condition_iii_scan(boundary_map(cfg), cfg)
    assert all(f >= 0.5 for f in res.fractions().values())


def test_reconstruct_constant():
    cfg = ExperimentConfig(m=2, p=1.5, kappas=[0.25, 0.125], h_per_axis=2)
    u = boundary_map(cfg)
    rep = reconstruct_from_scan(u, condition_iii_scan(u, cfg), cfg)
    for r in rep.rows:
        assert r.energy_u == 0.0 and r.trace_error_quarter == 0.0 and r.trace_error_eighth == 0.0
    assert rep.ok


def test_reconstruct_linear_trace_error_halves(linear_scan):
    cfg, res = linear_scan
    rep = reconstruct_from_scan(boundary_map(cfg), res, cfg)
    a, b = rep.rows
    assert rep.ok
    assert 1.4 <= a.trace_error_quarter / b.trace_error_quarter <= 2.6


def test_vortex_has_no_admissible_shift():
    cfg = ExperimentConfig(m=3, p=2.5, kappas=[0.25, 0.125], h_per_axis=1, boundary={"kind": "vortex"}, theta=25.0)
    u = boundary_map(cfg)
    res = condition_iii_scan(u, cfg)
    assert res.fractions() == {0.25: 1.0, 0.125: 0.0}
    with pytest.raises(NoAdmissibleShift):
        reconstruct_from_scan(u, res, cfg)


def test_boundary_displacement_periodic():
    psi = boundary_displacement(0.25, 3, 1)
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, size=(500, 2))
    assert np.allclose(psi(x), psi(x + [0.25, -0.5]), atol=1e-12)
    assert np.all(np.abs(psi(x)) <= 0.125 + 1e-12)


@pytest.mark.parametrize("name", SUITES)
def test_verify_suites_pass(name):
    rep = verify_suite(name, seed=0)
    assert len(rep.instances) == 20
    assert rep.passed, [i for i in rep.instances if not i["ok"]]


def test_verify_suite_deterministic_and_validated():
    a = verify_suite("translation_lemma", seed=5, count=3).to_dict()
    b = verify_suite("translation_lemma", seed=5, count=3).to_dict()
    assert a == b
    with pytest.raises(ConfigError):
        verify_suite("nope")


def test_emit_report_errors(tmp_path, linear_scan):
    _, res = linear_scan
    with pytest.raises(ConfigError):
        emit_report(res, "xml", tmp_path)
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError):
        emit_report(res, "json", blocker / "sub")
