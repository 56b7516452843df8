"""Simulation-based AC sweep of the hybrid-controlled converter.

Extracts closed-loop Bode curves by injecting a small sinusoid on one
controller reference port of the DER under test and correlating the
response at the injection frequency.  Every frequency runs against a
shared unperturbed baseline trace started from the same operating-point
snapshot; subtracting it removes the external-disturbance terms and the
100 Hz load signature that would otherwise contaminate measurements near
the resonance.

Port map of the four transfer functions (DER 1 by default):

* ``gii``: harmonic-current reference -> output current
* ``gvi``: voltage reference -> output current
* ``gvv``: voltage reference -> terminal voltage
* ``giv``: harmonic-current reference -> terminal voltage

During sweep runs the droop of the DER under test is frozen at its
settled value, making the voltage reference a true exogenous input; the
other DER keeps its droop live as part of the surrounding network.
"""

from __future__ import annotations

import copy
import hashlib
import math
import multiprocessing
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .control import ControlMode, DerController
from .engine import Injection, PackedSystem, SimState
from .errors import SimulationError, SweepPointError
from .measure import single_bin_dft
from .plants import Network

FLOOR_SENTINEL_DB = -200.0


class TransferFunctionId(Enum):
    GII = "gii"
    GVI = "gvi"
    GVV = "gvv"
    GIV = "giv"

    @property
    def input_port(self) -> str:
        return "i_ref_h" if self in (TransferFunctionId.GII, TransferFunctionId.GIV) else "v_ref"

    @property
    def output_signal(self) -> str:
        return "i_out" if self in (TransferFunctionId.GII, TransferFunctionId.GVI) else "v_t"


def default_frequencies(f_min: float = 0.5, f_max: float = 1000.0,
                        n_points: int = 60,
                        dense_band: tuple[float, float, int] = (80.0, 125.0, 20)) -> np.ndarray:
    """Log grid over [f_min, f_max] densified around the resonance band,
    with the 100 Hz point included exactly."""
    grid = np.geomspace(f_min, f_max, n_points)
    lo, hi, n_dense = dense_band
    grid = np.concatenate([grid, np.geomspace(lo, hi, n_dense), [100.0]])
    return np.unique(np.round(grid, 12))


@dataclass
class SweepConfig:
    """AC-sweep settings: grid, small-signal amplitudes, timing."""

    frequencies: np.ndarray = field(default_factory=default_frequencies)
    amp_v: float = 1.0          # V on the voltage-reference port
    amp_i: float = 0.1          # A on the current-reference port
    measure_periods: int = 10
    min_settle_periods: int = 20
    settle_seconds: float = 2.0
    op_duration: float = 3.0    # settle time of the operating-point prefix
    response_floor: float = 1e-9

    def validate(self, dt: float) -> None:
        f = np.asarray(self.frequencies, dtype=float)
        if f.size == 0 or np.any(f <= 0.0):
            raise ValueError("sweep frequencies must be positive")
        if np.any(f >= 0.5 / dt):
            raise ValueError(f"sweep frequency above Nyquist (dt={dt})")
        if np.any(np.diff(f) <= 0.0):
            raise ValueError("sweep frequencies must be strictly increasing")
        if self.measure_periods < 5:
            raise ValueError("measure_periods must be >= 5")
        if self.amp_v <= 0.0 or self.amp_i <= 0.0:
            raise ValueError("perturbation amplitudes must be positive")

    def settle_periods(self, f: float) -> int:
        return max(self.min_settle_periods, int(math.ceil(self.settle_seconds * f)))

    def amplitude(self, port: str) -> float:
        return self.amp_i if port == "i_ref_h" else self.amp_v


@dataclass(frozen=True)
class BodeSample:
    freq_hz: float
    mag_db: float
    phase_deg: float
    floored: bool = False


@dataclass
class BodeCurve:
    tf: TransferFunctionId
    samples: list[BodeSample]

    def __post_init__(self):
        f = [s.freq_hz for s in self.samples]
        if any(b <= a for a, b in zip(f, f[1:])):
            raise ValueError("Bode samples must be sorted by frequency")

    def frequencies(self) -> np.ndarray:
        return np.array([s.freq_hz for s in self.samples])

    def magnitudes_db(self) -> np.ndarray:
        return np.array([s.mag_db for s in self.samples])

    def phases_deg(self) -> np.ndarray:
        return np.array([s.phase_deg for s in self.samples])

    def at(self, f: float) -> BodeSample:
        for s in self.samples:
            if abs(s.freq_hz - f) < 1e-9 * max(1.0, f):
                return s
        raise KeyError(f"no sweep point at {f} Hz")

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("freq_hz,mag_db,phase_deg\n")
            for s in self.samples:
                fh.write(f"{s.freq_hz!r},{s.mag_db!r},{s.phase_deg!r}\n")


def unwrap_phase(phases_deg: list[float]) -> list[float]:
    """Make adjacent deltas fall in (-180, +180] by adding 360 multiples."""
    if not phases_deg:
        return []
    out = [phases_deg[0]]
    for v in phases_deg[1:]:
        d = v - out[-1]
        d -= 360.0 * math.ceil((d - 180.0) / 360.0)
        out.append(out[-1] + d)
    return out


# -- operating point ---------------------------------------------------------

@dataclass
class OperatingPoint:
    """Settled sweep starting point: packed system (droop frozen on the
    DER under test) plus the state snapshot all runs branch from."""

    packed: PackedSystem
    state: SimState
    der_index: int
    vref_frozen: float

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for arr in (self.state.y, self.state.lpf, self.state.pi_int,
                    self.state.pi_eprev, self.state.r_s1, self.state.r_s2):
            h.update(arr.tobytes())
        return h.hexdigest()[:16]


def prepare_operating_point(network: Network, controllers: list[DerController],
                            cfg: SweepConfig, dt: float,
                            der_index: int = 0) -> OperatingPoint:
    """Settle the system with the DER under test in full-compensation HCM,
    then freeze its droop reference at the settled mean."""
    ctrls = [copy.deepcopy(c) for c in controllers]
    ctrls[der_index].set_mode(ControlMode.HCM)
    packed = PackedSystem(network, ctrls, dt)
    state = packed.initial_state()
    n = int(round(cfg.op_duration / dt))
    vref_col = 7 * der_index + 6
    rec = packed.simulate(state, n, rec_dec=1, rec_cols=[vref_col])
    if packed.h_w > 0.0:
        period = 2.0 * math.pi / packed.h_w
        n_tail = max(2, int(round(period / dt)))
    else:
        n_tail = max(2, n // 10)
    vref = float(rec[-n_tail:, 0].mean())
    packed.freeze_vref(der_index, vref)
    return OperatingPoint(packed, state, der_index, vref)


# -- measurement -------------------------------------------------------------

def _out_cols(der_index: int) -> list[int]:
    # terminal voltage and output current of the DER under test
    return [7 * der_index + 0, 7 * der_index + 2]

OUT_VT = 0
OUT_IOUT = 1


def _point_lengths(cfg: SweepConfig, f: float, dt: float) -> tuple[int, int]:
    n_settle = int(round(cfg.settle_periods(f) / f / dt))
    n_meas = int(round(cfg.measure_periods / f / dt))
    return n_settle, n_meas


def run_baseline(op: OperatingPoint, cfg: SweepConfig, dt: float) -> np.ndarray:
    """Unperturbed trace of [v_t, i_out] shared by every frequency point."""
    n_max = max(sum(_point_lengths(cfg, f, dt)) for f in cfg.frequencies)
    st = op.state.copy()
    return op.packed.simulate(st, n_max, rec_dec=1, rec_cols=_out_cols(op.der_index))


def measure_point(op: OperatingPoint, baseline: np.ndarray, cfg: SweepConfig,
                  dt: float, port: str, f: float) -> tuple[complex, complex]:
    """Injection response at one frequency.

    Returns complex gains (v_t response, i_out response) normalized by
    the injection amplitude; phases are relative to the injected sine.
    """
    amp = cfg.amplitude(port)
    w = 2.0 * math.pi * f
    n_settle, n_meas = _point_lengths(cfg, f, dt)
    n_total = n_settle + n_meas
    st = op.state.copy()
    inj = Injection(port, op.der_index, amp, w, t_start=op.state.t)
    rec = op.packed.simulate(st, n_total, rec_dec=1,
                             rec_cols=_out_cols(op.der_index), injection=inj)
    gains = []
    inj_phase_at_window = (w * n_settle * dt) % (2.0 * math.pi)
    for col in (OUT_VT, OUT_IOUT):
        diff = rec[:n_total + 1, col] - baseline[:n_total + 1, col]
        x = diff[n_settle:n_settle + n_meas]
        _, a, ph = single_bin_dft(x, 1.0 / dt, f)
        gains.append((a / amp) * np.exp(1j * (ph - inj_phase_at_window)))
    return gains[0], gains[1]


def _to_sample(f: float, gain: complex, floor: float, amp: float) -> BodeSample:
    mag = abs(gain)
    if mag * amp < floor:  # floor applies to the raw response amplitude
        return BodeSample(f, FLOOR_SENTINEL_DB, 0.0, floored=True)
    phase = math.degrees(math.atan2(gain.imag, gain.real))
    return BodeSample(f, 20.0 * math.log10(mag), phase)


_POOL_CTX: Optional[tuple] = None


def _pool_worker(args):
    idx, f = args
    op, baseline, cfg, dt, port = _POOL_CTX
    try:
        return idx, measure_point(op, baseline, cfg, dt, port, f)
    except SimulationError as exc:
        return idx, SweepPointError(f, exc)


def sweep_port(op: OperatingPoint, baseline: np.ndarray, cfg: SweepConfig,
               dt: float, port: str, jobs: int = 1,
               collect_errors: bool = False):
    """All frequencies for one injection port.

    Returns (responses, failures): ``responses`` maps frequency ->
    (v_t gain, i_out gain); ``failures`` maps frequency -> error message.
    With ``collect_errors`` false the first failure raises.
    """
    freqs = [float(f) for f in cfg.frequencies]
    results: dict[float, tuple[complex, complex]] = {}
    failures: dict[float, str] = {}

    def handle(f, res):
        if isinstance(res, SweepPointError):
            if not collect_errors:
                raise res
            failures[f] = str(res)
        else:
            results[f] = res

    if jobs > 1:
        global _POOL_CTX
        _POOL_CTX = (op, baseline, cfg, dt, port)
        try:
            ctx = multiprocessing.get_context("fork")
            with ctx.Pool(jobs) as pool:
                for idx, res in pool.imap_unordered(_pool_worker, enumerate(freqs)):
                    handle(freqs[idx], res)
        finally:
            _POOL_CTX = None
    else:
        for f in freqs:
            try:
                handle(f, measure_point(op, baseline, cfg, dt, port, f))
            except SimulationError as exc:
                if isinstance(exc, SweepPointError):
                    raise
                handle(f, SweepPointError(f, exc))
    return results, failures


def _build_curve(tf: TransferFunctionId, responses: dict, cfg: SweepConfig) -> BodeCurve:
    out = OUT_VT if tf.output_signal == "v_t" else OUT_IOUT
    amp = cfg.amplitude(tf.input_port)
    samples = []
    for f in sorted(responses):
        samples.append(_to_sample(f, responses[f][out], cfg.response_floor, amp))
    unwrapped = unwrap_phase([s.phase_deg for s in samples])
    samples = [BodeSample(s.freq_hz, s.mag_db, ph, s.floored)
               for s, ph in zip(samples, unwrapped)]
    return BodeCurve(tf, samples)


def run_sweeps(network: Network, controllers: list[DerController],
               tfs: list[TransferFunctionId], cfg: SweepConfig,
               dt: float = 2e-5, der_index: int = 0, jobs: int = 1,
               collect_errors: bool = False):
    """Sweep every requested transfer function, sharing the operating
    point, baseline and per-port perturbed runs.

    Returns (curves, meta): curves maps TransferFunctionId -> BodeCurve;
    meta records amplitudes, periods, the operating-point hash and any
    per-frequency failures.
    """
    cfg.validate(dt)
    op = prepare_operating_point(network, controllers, cfg, dt, der_index)
    baseline = run_baseline(op, cfg, dt)
    ports = sorted({tf.input_port for tf in tfs})
    curves: dict[TransferFunctionId, BodeCurve] = {}
    meta = {
        "amplitude_v": cfg.amp_v,
        "amplitude_a": cfg.amp_i,
        "measure_periods": cfg.measure_periods,
        "min_settle_periods": cfg.min_settle_periods,
        "settle_seconds": cfg.settle_seconds,
        "operating_point_hash": op.fingerprint(),
        "vref_frozen_v": op.vref_frozen,
        "failures": {},
    }
    for port in ports:
        responses, failures = sweep_port(op, baseline, cfg, dt, port,
                                         jobs=jobs, collect_errors=collect_errors)
        for f, msg in failures.items():
            meta["failures"][f"{port}@{f:g}Hz"] = msg
        for tf in tfs:
            if tf.input_port == port:
                curves[tf] = _build_curve(tf, responses, cfg)
    return curves, meta


def ac_sweep(network: Network, controllers: list[DerController],
             tf: TransferFunctionId, cfg: SweepConfig,
             dt: float = 2e-5, der_index: int = 0, jobs: int = 1) -> BodeCurve:
    """Bode curve of one closed-loop transfer function."""
    curves, _ = run_sweeps(network, controllers, [tf], cfg, dt=dt,
                           der_index=der_index, jobs=jobs)
    return curves[tf]
