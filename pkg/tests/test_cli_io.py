from __future__ import annotations

import json

import numpy as np
import pytest

from granular_hs.cli import EXIT_ABORT, EXIT_HARD_FAIL, EXIT_OK, EXIT_USAGE, main
from granular_hs.config import ConfigError, RunConfig, config_from_dict, parse_config
from granular_hs.series import SERIES_COLUMNS, TimeSeries


def write_cfg(tmp_path, name="cfg.json", **kw):
    p = tmp_path / name
    p.write_text(json.dumps(kw))
    return p


def test_config_defaults():
    cfg = config_from_dict({})
    assert isinstance(cfg, RunConfig)
    assert cfg.alpha == 1.0 and cfg.particle_count == 10_000 and cfg.seed == 0
    assert cfg.output_times[0] == 0.0 and cfg.output_times[-1] == cfg.t_end
    assert len(cfg.output_times) == 11
    assert cfg.snapshot_times == [0.0, cfg.t_end]
    assert cfg.grid.nodes == 21 and cfg.initial_kind == "gaussian"


@pytest.mark.parametrize("raw, match", [
    ({"alpha": 1.2}, r"alpha: alpha must lie in \(0,1\]"),
    ({"alpha": 0}, r"alpha must lie in \(0,1\]"),
    ({"output_times": [0, 0.5, 0.2]}, "output_times: must be sorted"),
    ({"output_times": [0, 2.0]}, "within"),
    ({"bogus": 1}, "bogus: unknown key"),
    ({"grid": {"size": 3}}, "grid.size: unknown key"),
    ({"particle_count": 1}, "particle_count: must be at least 2"),
    ({"output_times": {"every": 0.3}}, "must divide t_end"),
    ({"snapshot_times": [0.35]}, "must coincide"),
    ({"initial_kind": "uniform"}, "initial_kind"),
    ({"sup_weight_s": 2.0}, "must exceed 2"),
])
def test_config_errors(raw, match):
    with pytest.raises(ConfigError, match=match):
        config_from_dict(raw)


def test_every_and_endpoints():
    cfg = config_from_dict({"t_end": 0.5, "output_times": {"every": 0.1}})
    np.testing.assert_allclose(cfg.output_times, np.linspace(0, 0.5, 6), atol=1e-15)
    cfg = config_from_dict({"t_end": 2.0, "output_times": [0.5, 1.0]})
    assert cfg.output_times == [0.0, 0.5, 1.0, 2.0]


def test_parse_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="file not found"):
        parse_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        parse_config(bad)


def test_series_csv_roundtrip(tmp_path):
    n = 4
    ts = TimeSeries(times=[0, 0.1, 0.2, 0.3], mass=np.ones(n), momentum=np.zeros((n, 3)),
                    energy=[1.0, 0.9, 0.81, 0.7], entropy=[-2.6, -2.6, -2.59, -2.58],
                    accepted=[0, 3, 4, 5], defect_sum=[0, -0.1, -0.09, -0.11],
                    extra={"energy_se": [1e-3] * n}, probes=np.zeros((2, 3)),
                    probe_values=np.arange(8.0).reshape(4, 2), config={"alpha": 0.8})
    path = ts.write(tmp_path)
    assert path.read_text().splitlines()[0] == ",".join(SERIES_COLUMNS)
    assert SERIES_COLUMNS == ("t", "mass", "px", "py", "pz", "energy", "entropy", "accepted", "defect_sum")
    back = TimeSeries.read(path, {"alpha": 0.8})
    assert back.series_csv() == ts.series_csv()
    np.testing.assert_array_equal(back.probe_values, ts.probe_values)
    np.testing.assert_array_equal(back.extra["energy_se"], ts.extra["energy_se"])
    with pytest.raises(ValueError, match="strictly increasing"):
        TimeSeries(times=[0, 0], mass=[1, 1], momentum=np.zeros((2, 3)), energy=[1, 1],
                   entropy=[0, 0], accepted=[0, 0], defect_sum=[0, 0])


@pytest.fixture(scope="module")
def run08(tmp_path_factory):
    d = tmp_path_factory.mktemp("run08")
    cfg = write_cfg(d, alpha=0.8, particle_count=4000, t_end=0.4, output_times={"every": 0.1}, seed=3)
    assert main(["simulate", str(cfg), "--out-dir", str(d / "a"), "--quiet"]) == EXIT_OK
    return d, cfg


def test_simulate_outputs_and_meta(run08):
    d, _ = run08
    out = d / "a"
    assert (out / "series.csv").exists() and (out / "series_extra.csv").exists()
    assert sorted(p.name for p in (out / "snapshots").glob("*.csv")) == \
        ["snapshot_t0p000000.csv", "snapshot_t0p400000.csv"]
    meta = json.loads((out / "meta.json").read_text())
    assert meta["kind"] == "dsmc" and meta["config"]["alpha"] == 0.8
    assert {"code_version", "dt_effective"} <= set(meta)


def test_simulate_is_byte_identical(run08):
    d, cfg = run08
    assert main(["simulate", str(cfg), "--out-dir", str(d / "b"), "--quiet"]) == EXIT_OK
    for name in ("series.csv", "series_extra.csv", "series_probes.csv"):
        assert (d / "a" / name).read_bytes() == (d / "b" / name).read_bytes()
    assert main(["simulate", str(cfg), "--out-dir", str(d / "c"), "--seed", "4", "--quiet"]) == EXIT_OK
    assert (d / "a" / "series.csv").read_bytes() != (d / "c" / "series.csv").read_bytes()


def test_check_on_simulation_passes(run08, capsys):
    d, _ = run08
    code = main(["check", str(d / "a" / "series.csv"), "--out-dir", str(d / "rep")])
    assert code == EXIT_OK
    table = capsys.readouterr().out
    assert "conservation.energy" in table and "cooling_time" in table
    rep = json.loads((d / "rep" / "report.json").read_text())
    ids = {c["id"]: c["verdict"] for c in rep["checks"]}
    assert ids["conservation.mass"] == "pass" and ids["entropy_growth"] == "monitor"


def test_check_detects_failure(tmp_path):
    ts = TimeSeries(times=[0, 1, 2], mass=np.ones(3), momentum=np.zeros((3, 3)),
                    energy=[1.0, 0.5, 0.0], entropy=np.zeros(3), accepted=[0, 1, 1],
                    defect_sum=[0, -0.5, -0.5], config={"alpha": 0.8})
    path = ts.write(tmp_path)
    assert main(["check", str(path), "--quiet"]) == EXIT_HARD_FAIL


def test_usage_errors(tmp_path):
    assert main(["bogus"]) == EXIT_USAGE
    assert main(["simulate", str(write_cfg(tmp_path, alpha=1.2)), "--quiet"]) == EXIT_USAGE
    assert main(["check", str(tmp_path / "nope.csv"), "--quiet"]) == EXIT_USAGE
    other = tmp_path / "x.csv"
    other.write_text("a,b\n1,2\n")
    assert main(["check", str(other), "--quiet"]) == EXIT_USAGE
    assert main(["--version"]) == EXIT_OK


def test_numerical_abort_exit_code(tmp_path, monkeypatch):
    from granular_hs import dsmc

    def boom(cfg, **kw):
        raise dsmc.NumericalAbort("non-finite velocity", None)

    monkeypatch.setattr(dsmc, "run", boom)
    cfg = write_cfg(tmp_path, alpha=0.8, particle_count=100, t_end=0.1)
    assert main(["simulate", str(cfg), "--out-dir", str(tmp_path / "o"), "--quiet"]) == EXIT_ABORT
    assert "aborted" in json.loads((tmp_path / "o" / "meta.json").read_text())


def test_oracle_and_grid_check(tmp_path):
    cfg = write_cfg(tmp_path, alpha=0.8, t_end=0.05, output_times=[0, 0.05], quadrature_degree=5,
                    grid={"halfwidth": 4.0, "nodes": 11})
    out = tmp_path / "o"
    assert main(["oracle", str(cfg), "--out-dir", str(out), "--quiet"]) == EXIT_OK
    assert json.loads((out / "meta.json").read_text())["kind"] == "oracle"
    grid = out / "grids" / "series_grid_t0p050000.csv"
    assert grid.read_text().splitlines()[0] == "ix,iy,iz,f"
    assert main(["check", str(out / "series.csv"), str(grid), "--out-dir", str(out), "--quiet"]) == EXIT_OK
    ids = {c["id"] for c in json.loads((out / "report.json").read_text())["checks"]}
    assert {"weak.energy", "loss.lower_bound", "gain.weighted", "gain.plane"} <= ids
