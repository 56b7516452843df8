"""Config schema, preset fidelity, TOML round-trip and CLI behavior."""

import json

import numpy as np
import pytest

import paper_system

from dcmgsim.cli import main
from dcmgsim.config import (
    PRESETS,
    build_controllers,
    build_network,
    build_scenario,
    build_sweep_config,
    emit_toml,
    resolve,
)
from dcmgsim.control import ControlMode
from dcmgsim.errors import ConfigError

try:
    import tomllib  # py311+
except ModuleNotFoundError:
    import tomli as tomllib


def preset_cfg(**overrides):
    return resolve({"preset": "paper-fig4"}, overrides or None)


class TestPresetFidelity:
    def test_values_match_published_tables(self):
        cfg = preset_cfg()
        for der in cfg["der"]:
            assert der["v_max"] == 630.0
            assert der["v_min"] == 570.0
            assert der["p_max"] == 10_000.0
            assert der["pi_kp"] == 0.4
            assert der["pi_ki"] == 50.0
            assert der["r_kr"] == 30.0
            assert der["r_omega_c"] == 5.0
            assert der["r_omega_0"] == 628.32
            assert der["p_kp"] == 5.0
            assert der["lpf_omega_cut"] == 31.4
        for line in cfg["line"]:
            assert line["r"] == 0.4
            assert line["l"] == 0.4e-3
        assert cfg["cpl"]["power"] == 6_000.0
        assert cfg["harmonic_load"] == {
            "i_dc": 3.0, "i_h": 6.0, "f_h": 100.0, "phase": 0.0, "attach": "der1"}
        times = [ev["time"] for ev in cfg["event"]]
        assert times == [3.0, 5.0, 7.0]
        assert cfg["event"][1]["set_cpl_power"] == 12_000.0

    def test_preset_matches_test_fixture_builders(self):
        # the hard-coded builders used by the physics tests and the preset
        # must describe the same system
        cfg = preset_cfg()
        scen = build_scenario(cfg)
        ref = paper_system.make_scenario()
        assert scen.network.ders[0].l_f == ref.network.ders[0].l_f
        assert scen.network.ders[0].c_t == ref.network.ders[0].c_t
        assert scen.network.pcc.c_pcc == ref.network.pcc.c_pcc
        assert scen.controllers[0].i_limit == ref.controllers[0].i_limit
        assert scen.controllers[0].droop.slope == ref.controllers[0].droop.slope
        assert scen.duration == ref.duration and scen.dt == ref.dt
        assert [e.time for e in scen.events] == [e.time for e in ref.events]

    def test_builders(self):
        cfg = preset_cfg()
        net = build_network(cfg)
        assert len(net.ders) == 2 and len(net.lines) == 2
        ctrls = build_controllers(cfg)
        assert ctrls[0].mode is ControlMode.VCM
        sweep_cfg = build_sweep_config(cfg)
        assert 100.0 in sweep_cfg.frequencies


class TestResolveValidation:
    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            resolve({"preset": "paper-fig4", "solver": {"dtt": 1e-5}})

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="unknown section"):
            resolve({"preset": "paper-fig4", "extra": {"a": 1}})

    def test_missing_solver_dt(self):
        raw = resolve({"preset": "paper-fig4"})
        del raw["solver"]["dt"]
        raw.pop("schema")
        with pytest.raises(ConfigError, match="dt"):
            resolve(raw)

    def test_negative_inductance_names_line_l(self):
        with pytest.raises(ConfigError, match=r"\[\[line\]\].l"):
            resolve({"preset": "paper-fig4",
                     "line": [{"r": 0.4, "l": -1e-3, "nodes": ["der1", "pcc"]}]})

    def test_nyquist_guard_on_dt(self):
        with pytest.raises(ConfigError, match="Nyquist"):
            resolve({"preset": "paper-fig4", "solver": {"dt": 0.01, "duration": 1.0}})

    def test_bad_mode_rejected(self):
        cfg = resolve({"preset": "paper-fig4"})
        cfg["der"][0]["mode"] = "pwm"
        cfg.pop("schema")
        with pytest.raises(ConfigError, match="mode"):
            resolve(cfg)

    def test_event_needs_exactly_one_action(self):
        with pytest.raises(ConfigError, match="exactly one action"):
            resolve({"preset": "paper-fig4",
                     "event": [{"time": 1.0, "set_cpl_power": 1.0,
                                "set_comp_fraction": {"der": "der1", "fraction": 0.5}}]})

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="unknown preset"):
            resolve({"preset": "paper-fig5"})


class TestRoundTrip:
    def test_emit_then_parse_is_identical(self, tmp_path):
        cfg = preset_cfg()
        text = emit_toml(cfg)
        reparsed = tomllib.loads(text)
        assert resolve(reparsed) == cfg

    def test_validate_output_reparses(self, tmp_path, capsys):
        assert main(["validate", "--preset", "paper-fig4"]) == 0
        printed = capsys.readouterr().out
        assert resolve(tomllib.loads(printed)) == preset_cfg()
        # the resolved values carry the published numbers
        assert "630.0" in printed and "628.32" in printed and "31.4" in printed


class TestCli:
    def test_validate_missing_dt_exit_2(self, tmp_path):
        bad = tmp_path / "bad.toml"
        cfg = preset_cfg()
        del cfg["solver"]["dt"]
        bad.write_text(emit_toml(cfg))
        assert main(["validate", str(bad)]) == 2

    def test_validate_parse_error_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "syntax.toml"
        bad.write_text("[solver\ndt = 1e-5\n")
        assert main(["validate", str(bad)]) == 2
        err = capsys.readouterr().err
        assert "line" in err  # parse errors carry position info

    def test_run_negative_inductance_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        cfg = preset_cfg()
        cfg["line"][0]["l"] = -1e-3
        bad.write_text(emit_toml(cfg))
        assert main(["run", str(bad), "-o", str(tmp_path)]) == 2
        assert "[[line]].l" in capsys.readouterr().err

    def test_run_zero_duration_single_sample(self, tmp_path):
        out = tmp_path / "out"
        assert main(["run", "--preset", "paper-fig4", "--duration", "0",
                     "-o", str(out)]) == 0
        rows = (out / "traces.csv").read_text().splitlines()
        assert rows[0].startswith("time_s,")
        assert len(rows) == 2  # header + single sample

    def test_run_short_scenario_outputs(self, tmp_path):
        out = tmp_path / "run"
        assert main(["run", "--preset", "paper-fig4", "--duration", "0.6",
                     "-o", str(out)]) == 0
        header = (out / "traces.csv").read_text().splitlines()[0].split(",")
        for name in ("der1.v_t", "der2.p_filtered", "line1.i", "load.i_1phi",
                     "load.i_cpl", "pcc.v"):
            assert name in header
        metrics = json.loads((out / "metrics.json").read_text())
        assert "windows" in metrics

    def test_run_divergence_exit_3(self, tmp_path, capsys):
        cfg = preset_cfg()
        cfg["cpl"]["power"] = 500_000.0
        cfg["solver"]["duration"] = 1.0
        cfg["event"] = []
        bad = tmp_path / "collapse.toml"
        bad.write_text(emit_toml(cfg))
        assert main(["run", str(bad), "-o", str(tmp_path)]) == 3
        assert "collapse" in capsys.readouterr().err

    def test_sweep_unknown_tf_exit_2(self, tmp_path):
        assert main(["sweep", "--preset", "paper-fig4", "--tf", "gxx",
                     "-o", str(tmp_path)]) == 2

    def test_sweep_requires_config_or_preset(self):
        assert main(["run"]) == 2

    def test_sweep_two_tfs_writes_files(self, tmp_path):
        out = tmp_path / "sweep"
        cfg = preset_cfg()
        cfg["sweep"].update({"f_min": 40.0, "f_max": 120.0, "n_points": 3,
                             "dense_n": 2, "measure_periods": 5,
                             "min_settle_periods": 5, "settle_seconds": 0.05,
                             "op_duration": 0.5})
        path = tmp_path / "quick.toml"
        path.write_text(emit_toml(cfg))
        assert main(["sweep", str(path), "--tf", "gii,gvv", "-o", str(out),
                     "--jobs", "1"]) == 0
        assert (out / "bode_gii.csv").exists()
        assert (out / "bode_gvv.csv").exists()
        assert not (out / "bode_giv.csv").exists()
        meta = json.loads((out / "sweep_meta.json").read_text())
        assert meta["transfer_functions"] == ["gii", "gvv"]
        assert meta["failures"] == {}
        freqs = np.loadtxt(out / "bode_gii.csv", delimiter=",", skiprows=1)[:, 0]
        assert np.all(np.diff(freqs) > 0)
        # all four requested -> four files
        out4 = tmp_path / "sweep4"
        assert main(["sweep", str(path), "-o", str(out4), "--jobs", "1"]) == 0
        assert sorted(p.name for p in out4.glob("bode_*.csv")) == [
            "bode_gii.csv", "bode_giv.csv", "bode_gvi.csv", "bode_gvv.csv"]
