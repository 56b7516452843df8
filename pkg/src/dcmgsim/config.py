"""TOML configuration: schema, presets, validation and emission.

A config file describes the solver settings, the DER units (ratings,
gains, filter elements), lines, PCC, loads, the event timeline and the
AC-sweep grid.  ``preset = "paper-fig4"`` expands to the built-in
two-DER test system.  Unknown keys are rejected; semantic errors carry
the offending section/key path.
"""

from __future__ import annotations

import copy
import math
from typing import Any

import tomli

from .blocks import (
    DroopCharacteristic,
    FirstOrderLowPass,
    PController,
    PiController,
    ResonantController,
)
from .control import ControlMode, DerController
from .engine import Event, Scenario, SetCompFraction, SetCplPower, SetMode
from .errors import ConfigError
from .plants import (
    ConstantPowerLoad,
    ConverterPlant,
    HarmonicCurrentLoad,
    Network,
    PccNode,
    RlLine,
)
from .sweep import SweepConfig, default_frequencies

SCHEMA_VERSION = 1

PRESETS: dict[str, dict] = {
    "paper-fig4": {
        "schema": SCHEMA_VERSION,
        "solver": {"dt": 2e-5, "duration": 10.0, "decimation": 10,
                   "initial_voltage": 600.0},
        "der": [
            {
                "v_max": 630.0, "v_min": 570.0, "p_max": 10_000.0,
                "pi_kp": 0.4, "pi_ki": 50.0,
                "r_kr": 30.0, "r_omega_c": 5.0, "r_omega_0": 628.32,
                "p_kp": 5.0, "lpf_omega_cut": 31.4,
                "l_f": 2e-3, "c_t": 1e-3, "e_limit": 700.0,
                "i_limit": 1.2 * 10_000.0 / 570.0,
                "mode": "vcm", "comp_fraction": 1.0,
            },
            {
                "v_max": 630.0, "v_min": 570.0, "p_max": 10_000.0,
                "pi_kp": 0.4, "pi_ki": 50.0,
                "r_kr": 30.0, "r_omega_c": 5.0, "r_omega_0": 628.32,
                "p_kp": 5.0, "lpf_omega_cut": 31.4,
                "l_f": 2e-3, "c_t": 1e-3, "e_limit": 700.0,
                "i_limit": 1.2 * 10_000.0 / 570.0,
                "mode": "vcm", "comp_fraction": 1.0,
            },
        ],
        "line": [
            {"r": 0.4, "l": 0.4e-3, "nodes": ["der1", "pcc"]},
            {"r": 0.4, "l": 0.4e-3, "nodes": ["der2", "pcc"]},
        ],
        "pcc": {"c_pcc": 1e-4},
        "cpl": {"power": 6_000.0, "v_floor": 300.0},
        "harmonic_load": {"i_dc": 3.0, "i_h": 6.0, "f_h": 100.0,
                          "phase": 0.0, "attach": "der1"},
        "event": [
            {"time": 3.0, "set_mode": {"der": "der1", "mode": "hcm"}},
            {"time": 5.0, "set_cpl_power": 12_000.0},
            {"time": 7.0, "set_comp_fraction": {"der": "der1", "fraction": 0.5}},
        ],
        "sweep": {
            "f_min": 0.5, "f_max": 1000.0, "n_points": 60,
            "dense_lo": 80.0, "dense_hi": 125.0, "dense_n": 20,
            "amp_v": 1.0, "amp_i": 0.1,
            "measure_periods": 10, "min_settle_periods": 20,
            "settle_seconds": 2.0, "op_duration": 3.0,
        },
    },
}

_NUM = (int, float)

# section -> key -> (types, required)
_SCHEMA: dict[str, dict[str, tuple]] = {
    "solver": {"dt": (_NUM, True), "duration": (_NUM, True),
               "decimation": ((int,), False), "initial_voltage": (_NUM, False)},
    "der": {"v_max": (_NUM, True), "v_min": (_NUM, True), "p_max": (_NUM, True),
            "pi_kp": (_NUM, True), "pi_ki": (_NUM, True),
            "r_kr": (_NUM, True), "r_omega_c": (_NUM, True), "r_omega_0": (_NUM, True),
            "p_kp": (_NUM, True), "lpf_omega_cut": (_NUM, True),
            "l_f": (_NUM, True), "c_t": (_NUM, True), "e_limit": (_NUM, False),
            "i_limit": (_NUM, True), "mode": ((str,), False),
            "comp_fraction": (_NUM, False)},
    "line": {"r": (_NUM, True), "l": (_NUM, True), "nodes": ((list,), True)},
    "pcc": {"c_pcc": (_NUM, True)},
    "cpl": {"power": (_NUM, True), "v_floor": (_NUM, False)},
    "harmonic_load": {"i_dc": (_NUM, True), "i_h": (_NUM, True),
                      "f_h": (_NUM, True), "phase": (_NUM, False),
                      "attach": ((str,), False)},
    "event": {"time": (_NUM, True), "set_mode": ((dict,), False),
              "set_cpl_power": (_NUM, False), "set_comp_fraction": ((dict,), False)},
    "sweep": {"f_min": (_NUM, False), "f_max": (_NUM, False),
              "n_points": ((int,), False), "dense_lo": (_NUM, False),
              "dense_hi": (_NUM, False), "dense_n": ((int,), False),
              "amp_v": (_NUM, False), "amp_i": (_NUM, False),
              "measure_periods": ((int,), False),
              "min_settle_periods": ((int,), False),
              "settle_seconds": (_NUM, False), "op_duration": (_NUM, False)},
}

_ARRAY_SECTIONS = ("der", "line", "event")
_TABLE_SECTIONS = ("solver", "pcc", "cpl", "harmonic_load", "sweep")


def load_toml(path: str) -> dict:
    """Parse a TOML file; syntax errors become ConfigError with position."""
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(path, f"TOML parse error: {exc}") from exc
    except OSError as exc:
        raise ConfigError(path, str(exc)) from exc


def _check_keys(section: str, table: dict, where: str) -> None:
    schema = _SCHEMA[section]
    for key, value in table.items():
        if key not in schema:
            raise ConfigError(where, f"unknown key '{key}'")
        types, _ = schema[key]
        if not isinstance(value, types) or isinstance(value, bool):
            expect = "/".join(t.__name__ for t in types)
            raise ConfigError(f"{where}.{key}", f"expected {expect}, got {value!r}")
    for key, (_, required) in schema.items():
        if required and key not in table:
            raise ConfigError(where, f"missing required key '{key}'")


def resolve(raw: dict, overrides: dict | None = None) -> dict:
    """Expand the preset (if any), merge explicit sections, validate keys.

    Returns the canonical, fully populated config dict.
    """
    raw = copy.deepcopy(raw)
    preset_name = raw.pop("preset", None)
    if preset_name is not None:
        try:
            cfg = copy.deepcopy(PRESETS[preset_name])
        except KeyError:
            raise ConfigError("preset", f"unknown preset '{preset_name}'") from None
        for key, value in raw.items():
            if key in _ARRAY_SECTIONS:
                cfg[key] = value  # arrays of tables replace wholesale
            elif isinstance(value, dict):
                cfg.setdefault(key, {}).update(value)
            else:
                cfg[key] = value
    else:
        cfg = raw

    for key, value in overrides.items() if overrides else ():
        section, _, leaf = key.partition(".")
        cfg.setdefault(section, {})[leaf] = value

    schema = cfg.pop("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ConfigError("schema", f"unsupported schema version {schema!r}")

    for key in cfg:
        if key not in _ARRAY_SECTIONS and key not in _TABLE_SECTIONS:
            raise ConfigError(key, "unknown section")

    for section in ("solver", "der", "line", "pcc", "cpl"):
        if section not in cfg:
            raise ConfigError(section, "missing required section")

    _check_keys("solver", cfg["solver"], "[solver]")
    if not isinstance(cfg["der"], list) or not cfg["der"]:
        raise ConfigError("[[der]]", "need at least one DER entry")
    for i, entry in enumerate(cfg["der"]):
        _check_keys("der", entry, f"[[der]] #{i + 1}")
    if not isinstance(cfg["line"], list):
        raise ConfigError("[[line]]", "must be an array of tables")
    for i, entry in enumerate(cfg["line"]):
        _check_keys("line", entry, f"[[line]] #{i + 1}")
        if entry["l"] <= 0:
            raise ConfigError(f"[[line]] #{i + 1}", f"[[line]].l must be positive, got {entry['l']}")
        if entry["r"] < 0:
            raise ConfigError(f"[[line]] #{i + 1}", f"[[line]].r must be >= 0, got {entry['r']}")
    _check_keys("pcc", cfg["pcc"], "[pcc]")
    _check_keys("cpl", cfg["cpl"], "[cpl]")
    if "harmonic_load" in cfg:
        _check_keys("harmonic_load", cfg["harmonic_load"], "[harmonic_load]")
    for i, ev in enumerate(cfg.get("event", ())):
        _check_keys("event", ev, f"[[event]] #{i + 1}")
        actions = [k for k in ("set_mode", "set_cpl_power", "set_comp_fraction") if k in ev]
        if len(actions) != 1:
            raise ConfigError(f"[[event]] #{i + 1}",
                              "need exactly one action (set_mode | set_cpl_power | set_comp_fraction)")
    if "sweep" in cfg:
        _check_keys("sweep", cfg["sweep"], "[sweep]")

    solver = cfg["solver"]
    solver.setdefault("decimation", 10)
    solver.setdefault("initial_voltage", 600.0)
    if solver["dt"] <= 0:
        raise ConfigError("[solver].dt", f"must be positive, got {solver['dt']}")
    for i, der in enumerate(cfg["der"]):
        der.setdefault("e_limit", 700.0)
        der.setdefault("mode", "vcm")
        der.setdefault("comp_fraction", 1.0)
        if der["mode"] not in ("vcm", "ccm", "hcm"):
            raise ConfigError(f"[[der]] #{i + 1}.mode", f"must be vcm/ccm/hcm, got {der['mode']!r}")
        if solver["dt"] * der["r_omega_0"] >= math.pi:
            raise ConfigError(
                "[solver].dt",
                f"dt*r_omega_0 = {solver['dt'] * der['r_omega_0']:.4f} >= pi: "
                "harmonic resonance beyond Nyquist; decrease dt")
    cfg["cpl"].setdefault("v_floor", 300.0)
    if "harmonic_load" in cfg:
        cfg["harmonic_load"].setdefault("phase", 0.0)
        cfg["harmonic_load"].setdefault("attach", "der1")
    cfg.setdefault("event", [])
    sweep = cfg.setdefault("sweep", {})
    for key, default in (("f_min", 0.5), ("f_max", 1000.0), ("n_points", 60),
                         ("dense_lo", 80.0), ("dense_hi", 125.0), ("dense_n", 20),
                         ("amp_v", 1.0), ("amp_i", 0.1), ("measure_periods", 10),
                         ("min_settle_periods", 20), ("settle_seconds", 2.0),
                         ("op_duration", 3.0)):
        sweep.setdefault(key, default)
    cfg["schema"] = SCHEMA_VERSION
    return cfg


# -- object builders ---------------------------------------------------------

def _wrap(where: str):
    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc_type is ValueError:
                raise ConfigError(where, str(exc)) from exc
            return False

    return _Ctx()


def build_network(cfg: dict) -> Network:
    ders = []
    for i, der in enumerate(cfg["der"]):
        with _wrap(f"[[der]] #{i + 1}"):
            ders.append(ConverterPlant(der["l_f"], der["c_t"], der["e_limit"]))
    lines = []
    for i, entry in enumerate(cfg["line"]):
        nodes = entry["nodes"]
        if len(nodes) != 2 or not all(isinstance(n, str) for n in nodes):
            raise ConfigError(f"[[line]] #{i + 1}.nodes", "need two node names")
        with _wrap(f"[[line]] #{i + 1}"):
            lines.append(RlLine(entry["r"], entry["l"], nodes[0], nodes[1]))
    with _wrap("[pcc]"):
        pcc = PccNode(cfg["pcc"]["c_pcc"])
    with _wrap("[cpl]"):
        cpl = ConstantPowerLoad(cfg["cpl"]["power"], cfg["cpl"]["v_floor"])
    harmonic = None
    attach = "der1"
    if "harmonic_load" in cfg:
        h = cfg["harmonic_load"]
        with _wrap("[harmonic_load]"):
            harmonic = HarmonicCurrentLoad(h["i_dc"], h["i_h"], h["f_h"], h["phase"])
        attach = h["attach"]
    with _wrap("network"):
        return Network(ders=ders, lines=lines, pcc=pcc, cpl=cpl,
                       harmonic_load=harmonic, harmonic_attach=attach)


def build_controllers(cfg: dict) -> list[DerController]:
    out = []
    for i, der in enumerate(cfg["der"]):
        with _wrap(f"[[der]] #{i + 1}"):
            out.append(DerController(
                mode=ControlMode(der["mode"]),
                droop=DroopCharacteristic(der["v_max"], der["v_min"], der["p_max"]),
                power_lpf=FirstOrderLowPass(der["lpf_omega_cut"]),
                voltage_pi=PiController(der["pi_kp"], der["pi_ki"]),
                harmonic_r=ResonantController(der["r_kr"], der["r_omega_c"], der["r_omega_0"]),
                inner_p=PController(der["p_kp"]),
                i_limit=der["i_limit"],
                comp_fraction=der["comp_fraction"],
            ))
    return out


def build_events(cfg: dict) -> list[Event]:
    events = []
    for i, ev in enumerate(cfg["event"]):
        where = f"[[event]] #{i + 1}"
        if "set_mode" in ev:
            spec = ev["set_mode"]
            try:
                action = SetMode(spec["der"], ControlMode(spec["mode"]))
            except (KeyError, ValueError) as exc:
                raise ConfigError(where, f"bad set_mode: {exc}") from exc
        elif "set_cpl_power" in ev:
            action = SetCplPower(ev["set_cpl_power"])
        else:
            spec = ev["set_comp_fraction"]
            try:
                action = SetCompFraction(spec["der"], spec["fraction"])
            except KeyError as exc:
                raise ConfigError(where, f"bad set_comp_fraction: {exc}") from exc
        events.append(Event(ev["time"], action))
    return events


def build_scenario(cfg: dict) -> Scenario:
    solver = cfg["solver"]
    with _wrap("scenario"):
        return Scenario(
            network=build_network(cfg),
            controllers=build_controllers(cfg),
            duration=solver["duration"],
            dt=solver["dt"],
            record_decimation=solver["decimation"],
            events=build_events(cfg),
            initial_voltage=solver["initial_voltage"],
        )


def build_sweep_config(cfg: dict) -> SweepConfig:
    s = cfg["sweep"]
    with _wrap("[sweep]"):
        freqs = default_frequencies(s["f_min"], s["f_max"], s["n_points"],
                                    (s["dense_lo"], s["dense_hi"], s["dense_n"]))
        return SweepConfig(
            frequencies=freqs,
            amp_v=s["amp_v"], amp_i=s["amp_i"],
            measure_periods=s["measure_periods"],
            min_settle_periods=s["min_settle_periods"],
            settle_seconds=s["settle_seconds"],
            op_duration=s["op_duration"],
        )


# -- emission ------------------------------------------------------------------

def _toml_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k} = {_toml_value(x)}" for k, x in v.items()) + "}"
    raise TypeError(f"cannot emit {type(v).__name__} as TOML")


def emit_toml(cfg: dict) -> str:
    """Serialize a resolved config back to TOML (round-trip stable)."""
    out = [f"schema = {cfg['schema']}"]
    for section in _TABLE_SECTIONS:
        if section not in cfg:
            continue
        out.append("")
        out.append(f"[{section}]")
        for key, value in cfg[section].items():
            out.append(f"{key} = {_toml_value(value)}")
    for section in _ARRAY_SECTIONS:
        for entry in cfg.get(section, ()):
            out.append("")
            out.append(f"[[{section}]]")
            for key, value in entry.items():
                out.append(f"{key} = {_toml_value(value)}")
    return "\n".join(out) + "\n"
