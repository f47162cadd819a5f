import csv
import json

import numpy as np
import pytest

from microtrap_gate.cli_io import (
    PRESETS,
    ConfigError,
    RunConfig,
    fmt,
    load_preset,
    main,
    parse_config,
    write_csv,
)
from microtrap_gate.grid_oracle import read_frame

SHORT = """
trajectory.a_max = 3.0
trajectory.a_min = 2.0
trajectory.t_r = 5
trajectory.t_i = 2
integrator.knots = 41
integrator.tol = 1e-7
"""


@pytest.fixture
def short_config(tmp_path):
    path = tmp_path / "short.cfg"
    path.write_text(SHORT)
    return path


def run_cli(args, capsys):
    code = main([str(a) for a in args])
    out, err = capsys.readouterr()
    return code, out, err


def test_presets():
    fig3 = load_preset("fig3")
    assert (fig3.omega_x, fig3.omega_p, fig3.a_max, fig3.a_min) == (1.25e4, 7.9e6, 5.0, 1.99)
    assert (fig3.t_r, fig3.t_i, fig3.a_t_bohr, fig3.species) == (70.0, 69.0, 106.0, "rb87")
    fig4 = load_preset("fig4")
    assert (fig4.omega_p, fig4.a_min, fig4.t_r, fig4.t_i) == (1.6e6, 1.956, 77.0, 97.2)
    assert fig4.a_t_bohr == -369.0 and fig4.species == "rb85"
    fig2 = load_preset("fig2")
    assert len(fig2.sweep_a_t_bohr) == 25 and 0.0 in fig2.sweep_a_t_bohr
    assert 106.0 in fig2.sweep_a_t_bohr
    assert load_preset("fig6b").map_t_i == 20.0
    assert set(PRESETS) == {"fig2", "fig3", "fig4", "fig6a", "fig6b"}
    with pytest.raises(ConfigError):
        load_preset("fig5")


def test_parse_lists_comments_and_types():
    cfg = parse_config("""
        # comment line
        sweep.a_t_bohr = 0:10:3   # inclusive linspace
        map.a_min = 1.9, 2.0
        integrator.couplings = off
        basis.n_sp = 6
        snapshots.labels = 00, 11
    """)
    assert cfg.sweep_a_t_bohr == (0.0, 5.0, 10.0)
    assert cfg.map_a_min == (1.9, 2.0)
    assert cfg.couplings is False and cfg.n_sp == 6
    assert cfg.snapshot_labels == ("00", "11")


@pytest.mark.parametrize("text, fragment", [
    ("trajectory.a_min = 6", "trajectory.a_min, trajectory.a_max"),
    ("physics.colour = red", "line 1: unknown key"),
    ("\n\nnot a pair", "line 3: expected"),
    ("basis.n_sp = eight", "line 1: bad value"),
    ("run.kind = movie", "range violation in run.kind"),
    ("integrator.samples = 100", "range violation"),
    ("basis.n_sp = 7", "basis.n_sp"),
])
def test_parse_errors(text, fragment):
    with pytest.raises(ConfigError, match=fragment.replace(".", r"\.")):
        parse_config(text)


def test_fmt_and_csv(tmp_path):
    assert fmt(1 / 3) == "0.333333333333" and fmt(True) == "true" and fmt(np.int64(3)) == "3"
    path = tmp_path / "t.csv"
    write_csv(path, ["a", "b"], [{"a": 'say "hi", then', "b": 1.5}, [2, np.float64(0.25)]])
    raw = path.read_bytes()
    assert raw.count(b"\r\n") == 3
    rows = list(csv.reader(path.open(newline="")))
    assert rows == [["a", "b"], ['say "hi", then', "1.5"], ["2", "0.25"]]


def test_verify_verb(tmp_path, capsys):
    code, out, _ = run_cli(["verify", "--out", tmp_path], capsys)
    assert code == 0
    assert "takagi roundtrip" in out and "FAIL" not in out
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["results"]["all_pass"] is True
    assert manifest["code_version"] and manifest["config"]["kind"] == "verify"


def test_config_error_exit_code(tmp_path, capsys):
    code, _, err = run_cli(["simulate", "--out", tmp_path, "--set", "grid.dt=0.01"], capsys)
    assert code == 2
    assert json.loads(err)["error"] == "config"


def test_simulate_short_run_deterministic(tmp_path, short_config, capsys):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code, stdout, _ = run_cli(["simulate", "--config", short_config, "--out", out,
                                   "--dump-basis"], capsys)
        assert code == 0
        assert json.loads(stdout)["kind"] == "gate"
        outs.append(out)
    manifest = json.loads((outs[0] / "manifest.json").read_text())
    assert manifest["derived"]["total_time"] == 12.0
    assert manifest["derived"]["gate_duration_s"] == pytest.approx(12.0 / 1.25e4)
    assert 0.0 <= manifest["results"]["fidelity"] <= 1.0
    for name in ("gate_matrix.csv", "populations_00.csv", "populations_01.csv", "basis_a_min.csv"):
        assert (outs[0] / name).exists()
    assert (outs[0] / "gate_matrix.csv").read_bytes() == (outs[1] / "gate_matrix.csv").read_bytes()
    header = (outs[0] / "populations_01.csv").read_text().splitlines()[0]
    assert header.startswith("time,00,01,10,11,02+,double")


def test_no_derivative_couplings_flag(tmp_path, short_config, capsys):
    code, _, _ = run_cli(["simulate", "--config", short_config, "--out", tmp_path,
                          "--no-derivative-couplings", "--tolerance", "1e-6"], capsys)
    assert code == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["results"]["include_couplings"] is False
    assert manifest["config"]["tol"] == 1e-6


def test_sweep_map_and_correlations(tmp_path, short_config, capsys):
    code, _, _ = run_cli(["sweep", "--config", short_config, "--out", tmp_path / "s",
                          "--set", "sweep.a_t_bohr=0,106"], capsys)
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "s" / "scattering_sweep.csv").open(newline="")))
    assert [r["status"] for r in rows] == ["ok", "ok"]
    code, _, _ = run_cli(["map", "--config", short_config, "--out", tmp_path / "m",
                          "--set", "map.t_r=5,6", "--set", "map.a_min=2.0", "--set", "map.t_i=2"],
                         capsys)
    assert code == 0
    grid = list(csv.reader((tmp_path / "m" / "fidelity_map.csv").open(newline="")))
    assert grid[0] == ["t_r", "2"] and len(grid) == 3
    code, _, _ = run_cli(["correlations", "--config", short_config, "--out", tmp_path / "c"],
                         capsys)
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "c" / "correlations.csv").open(newline="")))
    assert len(rows) == 400 and float(rows[0]["S_B_half"]) == pytest.approx(0.5)


def test_snapshots(tmp_path, short_config, capsys):
    code, _, _ = run_cli(["snapshots", "--config", short_config, "--out", tmp_path,
                          "--set", "grid.points=64", "--set", "grid.dt=5e-3"], capsys)
    assert code == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    frames = manifest["results"]["frames"]
    times = sorted({f["time"] for f in frames})
    assert len(times) >= 6 and times[0] == 0.0 and times[-1] == pytest.approx(12.0)
    density, grid = read_frame(tmp_path / frames[-1]["file"])
    assert grid.points == 64 and density.shape == (64, 64)
    assert np.sum(density) * grid.spacing**2 == pytest.approx(1.0, abs=1e-6)
    finals = manifest["results"]["final_populations"]
    assert [f["label"] for f in finals] == ["00", "01", "11"]


def test_defaults_match_fig3():
    assert RunConfig() == load_preset("fig3")
