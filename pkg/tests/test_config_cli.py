"""Config ingestion and CLI artifact contracts."""
import json
import math
import subprocess
from pathlib import Path

import numpy as np
import pytest
import yaml

from cavitycool import cli
from cavitycool.config import (DEFAULTS, config_hash, default_config_yaml,
                               package_version, parse_config)
from cavitycool.constants import CS_MASS, TWO_PI
from cavitycool.errors import CavityCoolError, ConfigError

REPO_ROOT = Path(__file__).resolve().parents[1]


def write_yaml(tmp_path: Path, tree: dict, name: str = "cfg.yaml") -> str:
    p = tmp_path / name
    p.write_text(yaml.safe_dump(tree))
    return str(p)


def test_defaults_resolve_to_si_parameters():
    run = parse_config(None)
    p = run.params
    assert p.kappa == pytest.approx(TWO_PI * 100e6, rel=1e-15)
    assert p.gamma == pytest.approx(TWO_PI * 2.61e6, rel=1e-15)
    assert p.delta_a == pytest.approx(TWO_PI * 10e6, rel=1e-15)
    assert p.delta_c == p.delta_a
    assert p.epsilon == pytest.approx(TWO_PI * 10e6, rel=1e-15)
    assert p.k_photon == pytest.approx(TWO_PI / 852e-9, rel=1e-15)
    assert p.mass == CS_MASS
    assert p.n_max == 4
    assert run.geometry.d_len == pytest.approx(100e-9, rel=1e-15)
    assert run.geometry.q_len == pytest.approx(950e-9 / math.pi, rel=1e-15)
    assert run.trap.k_red == pytest.approx(1.6 * TWO_PI / 937e-9, rel=1e-15)
    assert run.source == "<defaults>"


def test_empty_file_equals_builtin_defaults(tmp_path):
    p = tmp_path / "empty.yaml"
    p.write_text("")
    run_file = parse_config(str(p))
    run_none = parse_config(None)
    assert run_file.tree == run_none.tree
    assert run_file.config_hash == run_none.config_hash
    assert run_file.source == str(p)


def test_reference_config_round_trips(tmp_path):
    text = default_config_yaml()
    assert yaml.safe_load(text) == DEFAULTS
    p = tmp_path / "ref.yaml"
    p.write_text(text)
    assert parse_config(str(p)).config_hash == parse_config(None).config_hash
    shipped = REPO_ROOT / "configs" / "reference.yaml"
    assert shipped.is_file()
    assert parse_config(str(shipped)).config_hash \
        == parse_config(None).config_hash


def test_null_detunings_track_pump(tmp_path):
    cfg = write_yaml(tmp_path, {"system": {"delta_p_mhz": 25.0}})
    run = parse_config(cfg)
    assert run.params.delta_a == pytest.approx(TWO_PI * 25e6, rel=1e-15)
    assert run.params.delta_c == run.params.delta_a

    cfg = write_yaml(tmp_path, {"system": {"delta_p_mhz": 25.0,
                                           "delta_a_mhz": 5.0}},
                     name="cfg2.yaml")
    run = parse_config(cfg)
    assert run.params.delta_a == pytest.approx(TWO_PI * 5e6, rel=1e-15)
    assert run.params.delta_c == pytest.approx(TWO_PI * 25e6, rel=1e-15)


def test_grid_region_nulls_fill_from_geometry():
    run = parse_config(None)
    (x_lo, x_hi), (y_lo, y_hi), (z_lo, z_hi) = run.grid_region()
    half = math.pi / run.geometry.k_ax
    assert x_lo == pytest.approx(-half, rel=1e-15)
    assert x_hi == pytest.approx(half, rel=1e-15)
    # one axial period of the coupling intensity, 852/(2*1.685) nm each way
    assert half * 1e9 == pytest.approx(852.0 / (2 * 1.685), rel=1e-12)
    assert y_hi == pytest.approx(475e-9, rel=1e-15)
    assert y_lo == -y_hi
    assert z_lo * 1e9 == pytest.approx(21.0, rel=1e-12)
    assert z_hi * 1e9 == pytest.approx(808.0, rel=1e-12)


def test_unknown_key_is_a_hard_error(tmp_path):
    cfg = write_yaml(tmp_path, {"system": {"kappa_mz": 80.0}})
    with pytest.raises(ConfigError) as err:
        parse_config(cfg)
    assert "system.kappa_mz" in str(err.value)
    assert "kappa_mhz" in str(err.value)

    cfg = write_yaml(tmp_path, {"systm": {}}, name="cfg2.yaml")
    with pytest.raises(ConfigError, match="systm"):
        parse_config(cfg)


def test_out_of_range_values_name_the_key(tmp_path):
    cfg = write_yaml(tmp_path, {"system": {"kappa_mhz": -1.0}})
    with pytest.raises(ConfigError, match="system.kappa_mhz"):
        parse_config(cfg)
    cfg = write_yaml(tmp_path, {"mc": {"dt_ns": 25.0}}, name="c2.yaml")
    with pytest.raises(ConfigError, match="<= 20"):
        parse_config(cfg)
    cfg = write_yaml(tmp_path, {"mc": {"dt_ns": 0.0}}, name="c3.yaml")
    with pytest.raises(ConfigError, match="mc.dt_ns"):
        parse_config(cfg)
    cfg = write_yaml(tmp_path, {"grid": {"shape": [4, 4]}}, name="c4.yaml")
    with pytest.raises(ConfigError, match="3 integers"):
        parse_config(cfg)


def test_booleans_are_not_numbers(tmp_path):
    # YAML true would silently count as 1 without the explicit bool check
    cfg = write_yaml(tmp_path, {"system": {"kappa_mhz": True}})
    with pytest.raises(ConfigError, match="finite number"):
        parse_config(cfg)
    cfg = write_yaml(tmp_path, {"system": {"n_max": True}}, name="c2.yaml")
    with pytest.raises(ConfigError, match="integer"):
        parse_config(cfg)


def test_trap_amplitudes_all_or_nothing(tmp_path):
    cfg = write_yaml(tmp_path, {"trap": {"u_blue_mk": 3.0}})
    with pytest.raises(ConfigError, match="both or neither"):
        parse_config(cfg)


def test_protocol_choices(tmp_path):
    cfg = write_yaml(tmp_path, {"mc": {"protocol": "warming"}})
    with pytest.raises(ConfigError, match="cooling.*loading"):
        parse_config(cfg)


def test_config_version_gate(tmp_path):
    cfg = write_yaml(tmp_path, {"config_version": 2})
    with pytest.raises(ConfigError, match="version"):
        parse_config(cfg)


def test_hash_covers_physics_not_output(tmp_path):
    base = parse_config(None)
    moved = parse_config(None, {"output.dir": str(tmp_path)})
    assert moved.config_hash == base.config_hash
    bumped = parse_config(None, {"system.kappa_mhz": 80.0})
    assert bumped.config_hash != base.config_hash
    assert len(base.config_hash) == 16
    assert config_hash(base.tree) == base.config_hash


def test_overrides_apply_with_user_provenance(tmp_path):
    run = parse_config(None, {"mc.seed": 7})
    assert run.tree["mc"]["seed"] == 7
    assert run.provenance["mc.seed"] == "user"
    assert run.provenance["mc.dt_ns"] == "default"
    with pytest.raises(ConfigError, match="mc.sead"):
        parse_config(None, {"mc.sead": 7})


def test_config_file_failure_modes(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        parse_config(str(tmp_path / "missing.yaml"))
    bad = tmp_path / "bad.yaml"
    bad.write_text("{{{")
    with pytest.raises(ConfigError, match="not valid YAML"):
        parse_config(str(bad))
    lst = tmp_path / "list.yaml"
    lst.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError, match="mapping"):
        parse_config(str(lst))


def test_csv_roundtrip_is_exact(tmp_path):
    path = tmp_path / "t.csv"
    values = [1.0 / 3.0, -math.pi * 1e-25, 5e-324, 1.2345678901234567e300]
    cli.write_csv(path, ("a", "b", "c", "d"),
                  [values, [0, -7, True, "label"]],
                  "deadbeef00000000", "0.1.0-test",
                  comments=("extra note",))
    meta, columns, rows = cli.read_csv(path)
    assert meta["config_hash"] == "deadbeef00000000"
    assert meta["version"] == "0.1.0-test"
    assert columns == ["a", "b", "c", "d"]
    assert rows[0] == values            # bitwise, repr round-trip
    assert rows[1][3] == "label"


SMALL_SWEEPS = {"sweeps": {"n_detuning": 121,
                           "detuning_range_mhz": [-250.0, 250.0]}}


def test_cli_steady_state_artifacts(tmp_path):
    cfg = write_yaml(tmp_path, SMALL_SWEEPS)
    out = tmp_path / "out"
    assert cli.main(["steady-state", "--config", cfg,
                     "--out", str(out)]) == 0

    csv = out / "steady_state.csv"
    first = csv.read_text().splitlines()[0]
    assert first.startswith("# config_hash=")
    assert parse_config(cfg).config_hash in first

    summary = json.loads((out / "steady_state_summary.json").read_text())
    assert summary["subcommand"] == "steady-state"
    assert summary["rows"] == 121
    assert summary["runtime_s"] >= 0
    # strong probe sits where g = 1.5 kappa: resolved dressed doublet,
    # symmetric about zero and split by about g
    lo, hi = summary["strong_peaks_mhz"]
    step = 500.0 / 120.0
    assert abs(lo + hi) <= 2 * step
    assert summary["dressed_splitting_mhz"] == pytest.approx(
        summary["g_strong_mhz"], rel=0.15)
    meta, columns, rows = cli.read_csv(csv)
    assert columns[0] == "delta_p_mhz"
    assert len(rows) == 121


def test_cli_rerun_is_byte_identical(tmp_path):
    cfg = write_yaml(tmp_path, {"sweeps": {"n_detuning": 15}})
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert cli.main(["steady-state", "--config", cfg, "--out", str(out1)]) == 0
    assert cli.main(["steady-state", "--config", cfg, "--out", str(out2)]) == 0
    assert (out1 / "steady_state.csv").read_bytes() \
        == (out2 / "steady_state.csv").read_bytes()


def test_cli_force_sweep_peak_position(tmp_path):
    cfg = write_yaml(tmp_path, {"sweeps": {"z_range_nm": [180.0, 300.0],
                                           "n_z": 150,
                                           "epsilon_list_mhz": [0.1]}})
    out = tmp_path / "out"
    assert cli.main(["force-sweep", "--config", cfg, "--out", str(out)]) == 0
    summary = json.loads((out / "force_sweep_summary.json").read_text())
    per = summary["per_epsilon"]["eps0p1"]
    # at weak pumping the exact solver and the closed form agree at the peak
    assert per["peak_ratio_num_over_weak"] == pytest.approx(1.0, abs=2e-3)
    # the friction-optimal coupling [(dp^2+gamma^2)(dp^2+kappa^2)]^(1/4)
    assert summary["g_peak_law_mhz"] == pytest.approx(32.2, abs=0.5)
    assert per["g_peak_weak_mhz"] == pytest.approx(summary["g_peak_law_mhz"],
                                                   abs=0.6)
    meta, columns, rows = cli.read_csv(out / "force_sweep.csv")
    assert "f_z_weak_eps0p1" in columns and "f_z_num_eps0p1" in columns
    assert len(rows) == 150


def test_cli_exit_codes(tmp_path, capsys):
    cfg = write_yaml(tmp_path, {})
    assert cli.main(["steady-state", "--config", cfg, "--threads", "0",
                     "--out", str(tmp_path)]) == 2
    assert "--threads" in capsys.readouterr().err

    bad = tmp_path / "bad.yaml"
    bad.write_text("{{{")
    assert cli.main(["steady-state", "--config", str(bad),
                     "--out", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err

    assert cli.main(["simulate", "--config", cfg,
                     "--out", str(tmp_path / "fresh")]) == 2
    assert "build-grid" in capsys.readouterr().err

    assert cli.main(["load-rate", "--config", cfg,
                     "--out", str(tmp_path)]) == 2
    assert "load-sweep" in capsys.readouterr().err


def test_cli_numerical_failure_exit(tmp_path, monkeypatch, capsys):
    def boom(run, out, args):
        raise CavityCoolError("solver blew up")

    monkeypatch.setitem(cli._COMMANDS, "steady-state", boom)
    cfg = write_yaml(tmp_path, {})
    assert cli.main(["steady-state", "--config", cfg,
                     "--out", str(tmp_path)]) == 3
    assert "numerical failure" in capsys.readouterr().err


TINY_MC = {
    "grid": {"shape": [6, 10, 28]},
    "mc": {"n_trajectories": 6, "t_max_ms": 0.05, "window_us": 10.0},
}


def test_cli_build_grid_then_simulate(tmp_path):
    cfg = write_yaml(tmp_path, TINY_MC)
    out = tmp_path / "out"
    assert cli.main(["build-grid", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "grid.npz").is_file()
    assert (out / "calibration.txt").read_text()
    built = json.loads((out / "build_grid_summary.json").read_text())
    assert built["shape"] == [6, 10, 28]

    assert cli.main(["simulate", "--config", cfg, "--out", str(out),
                     "--seed", "123"]) == 0
    summary = json.loads((out / "simulate_summary.json").read_text())
    assert summary["seed"] == 123
    assert summary["n_trajectories"] == 6
    assert summary["n_failed"] == 0
    assert summary["n_trapped"] + summary["n_lost"] <= 6
    meta, columns, rows = cli.read_csv(out / "simulate_windows.csv")
    assert len(rows) == 5               # 50 us / 10 us windows
    meta, columns, rows = cli.read_csv(out / "simulate_outcomes.csv")
    assert len(rows) == 6

    # same cache, different physics: metadata validation refuses it
    other = write_yaml(tmp_path, {**TINY_MC,
                                  "system": {"epsilon_mhz": 5.0}},
                       name="other.yaml")
    assert cli.main(["simulate", "--config", other, "--out", str(out)]) == 2


def test_cli_load_rate_from_config(tmp_path):
    cfg = write_yaml(tmp_path, {"loading": {"p0": 0.05, "t_eff_uk": 50.0}})
    out = tmp_path / "out"
    assert cli.main(["load-rate", "--config", cfg, "--out", str(out)]) == 0
    summary = json.loads((out / "load_rate_summary.json").read_text())
    assert summary["cold_limit_rate_per_ms"] == pytest.approx(20.0, rel=1e-12)
    assert 0 < summary["rate_per_ms_at_temperature"] < 20.0
    meta, columns, rows = cli.read_csv(out / "load_rate.csv")
    assert len(rows) == 199
    rates = [r[1] for r in rows]
    assert rates[0] > rates[-1]         # hotter source loads slower


def test_console_script_version():
    out = subprocess.run(["cavitycool", "--version"],
                         capture_output=True, text=True, timeout=60)
    assert out.returncode == 0
    assert out.stdout.strip().startswith("0.1.0")
    assert package_version().startswith("0.1.0")
