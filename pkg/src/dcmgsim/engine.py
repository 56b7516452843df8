"""Fixed-step time-domain simulation of a network under a scenario timeline.

The plant ODEs advance with classical RK4 at a fixed ``dt`` while the
per-DER controllers run once per step on zero-order-held measurements.
Events (mode switches, CPL steps, compensation changes) land on the
first step boundary at or after their requested time, which keeps runs
bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import _core
from .control import ControlMode, DerController
from .errors import DivergenceError, VoltageCollapseError
from .plants import Network

DER_CHANNELS = ("v_t", "i_l", "i_out", "p_inst", "p_filtered", "e_ref", "v_ref")

_MODE_CODE = {ControlMode.VCM: _core.MODE_VCM,
              ControlMode.CCM: _core.MODE_CCM,
              ControlMode.HCM: _core.MODE_HCM}


# -- events ----------------------------------------------------------------

@dataclass(frozen=True)
class SetMode:
    der_id: str
    mode: ControlMode


@dataclass(frozen=True)
class SetCplPower:
    power: float


@dataclass(frozen=True)
class SetCompFraction:
    der_id: str
    fraction: float


Action = Union[SetMode, SetCplPower, SetCompFraction]


@dataclass(frozen=True)
class Event:
    time: float
    action: Action


@dataclass
class Scenario:
    """A network + controllers + event timeline + solver settings."""

    network: Network
    controllers: list[DerController]
    duration: float
    dt: float = 2e-5
    record_decimation: int = 10
    events: list[Event] = field(default_factory=list)
    initial_voltage: float = 600.0

    def __post_init__(self):
        nd = len(self.network.ders)
        if len(self.controllers) != nd:
            raise ValueError(
                f"need one controller per DER ({nd}), got {len(self.controllers)}"
            )
        if self.duration < 0.0:
            raise ValueError(f"duration must be >= 0, got {self.duration}")
        if self.dt <= 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if int(self.record_decimation) != self.record_decimation or self.record_decimation < 1:
            raise ValueError(f"record_decimation must be an integer >= 1, got {self.record_decimation}")
        for ctrl in self.controllers:
            w0 = ctrl.harmonic_r.omega_0
            if self.dt * w0 >= math.pi:
                raise ValueError(
                    f"dt*omega_0 = {self.dt * w0:.4f} >= pi: harmonic resonance beyond Nyquist"
                )
        prev = 0.0
        der_ids = {f"der{i + 1}" for i in range(nd)}
        for ev in self.events:
            if not 0.0 <= ev.time <= self.duration:
                raise ValueError(f"event at t={ev.time} outside [0, {self.duration}]")
            if ev.time < prev:
                raise ValueError("events must be sorted by time")
            prev = ev.time
            ref = getattr(ev.action, "der_id", None)
            if ref is not None and ref not in der_ids:
                raise ValueError(f"event references unknown DER '{ref}'")
            if isinstance(ev.action, SetCompFraction) and not 0.0 <= ev.action.fraction <= 1.0:
                raise ValueError(f"comp fraction must be in [0, 1], got {ev.action.fraction}")


# -- traces ------------------------------------------------------------------

@dataclass
class TraceSet:
    """Uniformly sampled named channels from one run."""

    times: np.ndarray
    names: list[str]
    data: np.ndarray  # shape (n_samples, n_channels)

    def __post_init__(self):
        if self.data.shape != (len(self.times), len(self.names)):
            raise ValueError("trace data shape does not match times/names")

    @property
    def sample_dt(self) -> float:
        if len(self.times) < 2:
            return 0.0
        return float(self.times[1] - self.times[0])

    def channel(self, name: str) -> np.ndarray:
        try:
            return self.data[:, self.names.index(name)]
        except ValueError:
            raise KeyError(f"no channel named '{name}'") from None

    def to_csv(self, path) -> None:
        header = "time_s," + ",".join(self.names)
        table = np.column_stack([self.times, self.data])
        np.savetxt(path, table, delimiter=",", header=header, comments="", fmt="%.17g")


def channel_names(n_ders: int, n_lines: int) -> list[str]:
    names = []
    for i in range(n_ders):
        names.extend(f"der{i + 1}.{c}" for c in DER_CHANNELS)
    names.extend(f"line{j + 1}.i" for j in range(n_lines))
    names.extend(["load.i_1phi", "load.i_cpl", "pcc.v"])
    return names


# -- packed system -----------------------------------------------------------

@dataclass
class SimState:
    """Snapshot of every continuous and discrete state plus absolute time."""

    y: np.ndarray
    lpf: np.ndarray
    pi_int: np.ndarray
    pi_eprev: np.ndarray
    r_s1: np.ndarray
    r_s2: np.ndarray
    t: float

    def copy(self) -> "SimState":
        return SimState(self.y.copy(), self.lpf.copy(), self.pi_int.copy(),
                        self.pi_eprev.copy(), self.r_s1.copy(), self.r_s2.copy(), self.t)


@dataclass(frozen=True)
class Injection:
    """Additive sinusoid (or constant, for omega == 0) on one controller port."""

    port: str  # 'v_ref' or 'i_ref_h'
    der_index: int
    amplitude: float
    omega: float
    t_start: float = 0.0

    @property
    def code(self) -> int:
        if self.port == "v_ref":
            return _core.INJ_VREF
        if self.port == "i_ref_h":
            return _core.INJ_IREFH
        raise ValueError(f"unknown injection port '{self.port}'")


class PackedSystem:
    """Network + controller parameters flattened into kernel arrays.

    Mutable runtime parameters (mode, CPL power, compensation fraction,
    droop freezing) live here so events and sweeps can adjust them
    without rebuilding.
    """

    def __init__(self, network: Network, controllers: list[DerController], dt: float):
        nd = len(network.ders)
        nl = len(network.lines)
        if len(controllers) != nd:
            raise ValueError("one controller per DER required")
        self.network = network
        self.dt = float(dt)
        self.nd = nd
        self.nl = nl

        self.lf = np.array([d.l_f for d in network.ders])
        self.ct = np.array([d.c_t for d in network.ders])
        self.elim = np.array([d.e_limit for d in network.ders])
        self.line_r = np.array([ln.r for ln in network.lines])
        self.line_l = np.array([ln.l for ln in network.lines])
        self.line_a = np.array([network.node_index(ln.node_a) for ln in network.lines], dtype=np.int64)
        self.line_b = np.array([network.node_index(ln.node_b) for ln in network.lines], dtype=np.int64)
        self.cpcc = float(network.pcc.c_pcc)
        self.cpl_power = float(network.cpl.power)
        self.v_floor = float(network.cpl.v_floor)

        h = network.harmonic_load
        if h is not None:
            self.h_idc, self.h_ih = float(h.i_dc), float(h.i_h)
            self.h_w = 2.0 * math.pi * h.f_h
            self.h_phase = float(h.phase)
            self.h_node = int(network.node_index(network.harmonic_attach))
        else:
            self.h_idc = self.h_ih = self.h_w = self.h_phase = 0.0
            self.h_node = -1

        self.mode = np.array([_MODE_CODE[c.mode] for c in controllers], dtype=np.int64)
        self.vmax = np.array([c.droop.v_max for c in controllers])
        self.slope = np.array([c.droop.slope for c in controllers])
        self.lpf_a = np.array([math.exp(-c.power_lpf.omega_cut * dt) for c in controllers])
        self.pi_kp = np.array([c.voltage_pi.kp for c in controllers])
        self.pi_ki = np.array([c.voltage_pi.ki_integral for c in controllers])
        self.pi_lo = np.array([c.voltage_pi.output_limits[0] for c in controllers])
        self.pi_hi = np.array([c.voltage_pi.output_limits[1] for c in controllers])
        coeffs = [c.harmonic_r.coefficients(dt) for c in controllers]
        self.r_b0 = np.array([c.b0 for c in coeffs])
        self.r_a1 = np.array([c.a1 for c in coeffs])
        self.r_a2 = np.array([c.a2 for c in coeffs])
        self.p_kp = np.array([c.inner_p.kp for c in controllers])
        self.comp = np.array([c.comp_fraction for c in controllers])
        self.i_lim = np.array([c.i_limit for c in controllers])
        self.vref_frozen = np.zeros(nd, dtype=np.bool_)
        self.vref_val = np.zeros(nd)

        self.channel_names = channel_names(nd, nl)

    # -- state -------------------------------------------------------------

    def initial_state(self, initial_voltage: float = 600.0) -> SimState:
        nd, nl = self.nd, self.nl
        y = np.zeros(2 * nd + nl + 1)
        y[nd:2 * nd] = initial_voltage
        y[-1] = initial_voltage
        z = np.zeros(nd)
        return SimState(y, z.copy(), z.copy(), z.copy(), z.copy(), z.copy(), 0.0)

    # -- runtime parameter changes ------------------------------------------

    def apply_event(self, action: Action, state: SimState) -> None:
        if isinstance(action, SetMode):
            d = int(action.der_id[3:]) - 1
            old = self.mode[d]
            new = _MODE_CODE[action.mode]
            self.mode[d] = new
            # a loop re-activated by the switch restarts from rest
            if old == _core.MODE_CCM and new != _core.MODE_CCM:
                state.pi_int[d] = 0.0
                state.pi_eprev[d] = 0.0
            if old == _core.MODE_VCM and new != _core.MODE_VCM:
                state.r_s1[d] = 0.0
                state.r_s2[d] = 0.0
        elif isinstance(action, SetCplPower):
            if action.power < 0.0:
                raise ValueError(f"CPL power must be >= 0, got {action.power}")
            self.cpl_power = float(action.power)
        elif isinstance(action, SetCompFraction):
            if not 0.0 <= action.fraction <= 1.0:
                raise ValueError(f"comp fraction must be in [0, 1], got {action.fraction}")
            d = int(action.der_id[3:]) - 1
            self.comp[d] = float(action.fraction)
        else:
            raise TypeError(f"unknown event action {action!r}")

    def freeze_vref(self, der_index: int, value: float) -> None:
        self.vref_frozen[der_index] = True
        self.vref_val[der_index] = float(value)

    # -- stepping ------------------------------------------------------------

    def advance(self, state: SimState, n_steps: int, gstep0: int,
                rec: np.ndarray, rec_cols: np.ndarray, rec_dec: int,
                rec_row: int, record_final: bool,
                injection: Optional[Injection] = None) -> int:
        """Run the kernel for ``n_steps``; mutates ``state`` in place."""
        if injection is None:
            inj = (_core.INJ_NONE, 0, 0.0, 0.0, 0.0)
        else:
            inj = (injection.code, injection.der_index, injection.amplitude,
                   injection.omega, injection.t_start)
        status, where, step, row = _core.run_chunk(
            state.t, self.dt, n_steps, gstep0,
            self.lf, self.ct, self.elim, self.line_r, self.line_l,
            self.line_a, self.line_b,
            self.cpcc, self.cpl_power, self.v_floor,
            self.h_idc, self.h_ih, self.h_w, self.h_phase, self.h_node,
            self.mode, self.vmax, self.slope, self.lpf_a,
            self.pi_kp, self.pi_ki, self.pi_lo, self.pi_hi,
            self.r_b0, self.r_a1, self.r_a2, self.p_kp, self.comp, self.i_lim,
            self.vref_frozen, self.vref_val,
            inj[0], inj[1], inj[2], inj[3], inj[4],
            state.y, state.lpf, state.pi_int, state.pi_eprev, state.r_s1, state.r_s2,
            rec, rec_cols, rec_dec, rec_row, record_final)
        t_fail = state.t + step * self.dt
        if status == _core.STATUS_COLLAPSE:
            node = f"der{where + 1}" if where < self.nd else "pcc"
            raise VoltageCollapseError(node, t_fail)
        if status == _core.STATUS_NONFINITE:
            raise DivergenceError(self.network.state_labels()[where], t_fail)
        state.t += n_steps * self.dt
        return row

    def simulate(self, state: SimState, n_steps: int,
                 rec_dec: int = 0, rec_cols: Optional[list[int]] = None,
                 injection: Optional[Injection] = None,
                 record_final: bool = True) -> np.ndarray:
        """Advance with optional recording; returns the recorded block."""
        if rec_dec <= 0:
            cols = np.empty(0, dtype=np.int64)
            rec = np.empty((1, 0))
            self.advance(state, n_steps, 0, rec, cols, 0, 0, False, injection)
            return rec[:0]
        if rec_cols is None:
            cols = np.arange(len(self.channel_names), dtype=np.int64)
        else:
            cols = np.asarray(rec_cols, dtype=np.int64)
        n_rows = n_steps // rec_dec + 1
        rec = np.empty((n_rows, len(cols)))
        row = self.advance(state, n_steps, 0, rec, cols, rec_dec, 0,
                           record_final, injection)
        return rec[:row]


def _event_step(time: float, dt: float) -> int:
    """First step boundary at or after ``time``."""
    return max(0, int(math.ceil(time / dt - 1e-9)))


def run(scenario: Scenario) -> TraceSet:
    """Execute a scenario and return the decimated trace set.

    Raises ``VoltageCollapseError``/``DivergenceError`` with the
    offending node or state channel and timestamp.
    """
    packed = PackedSystem(scenario.network, scenario.controllers, scenario.dt)
    state = packed.initial_state(scenario.initial_voltage)
    dt = scenario.dt
    dec = int(scenario.record_decimation)
    n_total = int(round(scenario.duration / dt))
    n_rows = n_total // dec + 1
    cols = np.arange(len(packed.channel_names), dtype=np.int64)
    rec = np.empty((n_rows, len(cols)))

    boundaries: list[tuple[int, Event]] = [
        (min(_event_step(ev.time, dt), n_total), ev) for ev in scenario.events
    ]

    row = 0
    if n_total == 0:
        for step, ev in boundaries:
            packed.apply_event(ev.action, state)
        row = packed.advance(state, 0, 0, rec, cols, dec, row, record_final=True)
    else:
        g = 0
        idx = 0
        while g < n_total:
            while idx < len(boundaries) and boundaries[idx][0] <= g:
                packed.apply_event(boundaries[idx][1].action, state)
                idx += 1
            next_g = min(boundaries[idx][0], n_total) if idx < len(boundaries) else n_total
            if next_g <= g:
                next_g = n_total
            row = packed.advance(state, next_g - g, g, rec, cols, dec, row,
                                 record_final=(next_g == n_total))
            g = next_g

    times = np.arange(row) * (dt * dec)
    return TraceSet(times=times, names=list(packed.channel_names), data=rec[:row])
