"""Trace measurements: single-bin DFT extraction and windowed scenario metrics.

The harmonic metrics quantify what the time-domain plots show: DC level
and amplitude of one frequency component, correlated over an integer
number of periods so that other harmonics are (near-)orthogonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import TraceSet
from .plants import Network


@dataclass(frozen=True)
class HarmonicMeasurement:
    """DC level plus amplitude/phase of one frequency in one channel window.

    Phase is sine-referenced at the window start: the windowed signal is
    approximately ``dc + amplitude*sin(2*pi*frequency*(t - t_start) + phase)``.
    """

    channel: str
    center_time: float
    window: float
    frequency: float
    amplitude: float
    dc_component: float
    phase: float

    def __post_init__(self):
        if self.window < 1.0 / self.frequency:
            raise ValueError("window must cover at least one full period")
        if self.amplitude < 0.0:
            raise ValueError("amplitude must be >= 0")


def single_bin_dft(x: np.ndarray, fs: float, f: float) -> tuple[float, float, float]:
    """(dc, amplitude, phase) of the ``f`` component of a uniformly sampled block.

    Correlates against a complex exponential referenced to the first
    sample; exact for components orthogonal over the block (integer
    periods).  Phase is sine-referenced.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least two samples")
    dc = float(x.mean())
    tau = np.arange(n) * (1.0 / fs)
    c = 2.0 / n * np.sum((x - dc) * np.exp(-2j * math.pi * f * tau))
    amplitude = abs(c)
    phase = math.atan2(c.imag, c.real) + 0.5 * math.pi
    phase = (phase + math.pi) % (2.0 * math.pi) - math.pi
    return dc, float(amplitude), float(phase)


def goertzel_amplitude(traces: TraceSet, channel: str, t_start: float,
                       n_periods: int, f: float) -> HarmonicMeasurement:
    """Measure DC and the ``f`` component over ``n_periods/f`` seconds of a trace.

    The window must lie inside the trace and span at least one period.
    """
    if n_periods < 1:
        raise ValueError(f"n_periods must be >= 1, got {n_periods}")
    if f <= 0.0:
        raise ValueError(f"frequency must be positive, got {f}")
    dt = traces.sample_dt
    if dt <= 0.0:
        raise ValueError("trace has no time base (fewer than two samples)")
    window = n_periods / f
    t0 = float(traces.times[0])
    t_end = float(traces.times[-1])
    # half-open window semantics: the final sample covers [t_end, t_end+dt)
    if t_start < t0 - 1e-12 or t_start + window > t_end + dt + 1e-12:
        raise ValueError(
            f"window [{t_start}, {t_start + window}] outside trace range [{t0}, {t_end}]"
        )
    i0 = int(round((t_start - t0) / dt))
    n = int(round(window / dt))
    x = traces.channel(channel)[i0:i0 + n]
    if x.shape[0] < n:
        raise ValueError("window extends past the end of the trace")
    dc, amp, phase = single_bin_dft(x, 1.0 / dt, f)
    return HarmonicMeasurement(
        channel=channel,
        center_time=t_start + 0.5 * window,
        window=window,
        frequency=f,
        amplitude=amp,
        dc_component=dc,
        phase=phase,
    )


def _stored_energy(net: Network, traces: TraceSet, idx: int) -> float:
    e = 0.0
    for i, der in enumerate(net.ders):
        e += 0.5 * der.l_f * traces.channel(f"der{i + 1}.i_l")[idx] ** 2
        e += 0.5 * der.c_t * traces.channel(f"der{i + 1}.v_t")[idx] ** 2
    for j, line in enumerate(net.lines):
        e += 0.5 * line.l * traces.channel(f"line{j + 1}.i")[idx] ** 2
    e += 0.5 * net.pcc.c_pcc * traces.channel("pcc.v")[idx] ** 2
    return e


def window_metrics(traces: TraceSet, net: Network, t_start: float, t_end: float,
                   harmonic_freq: float = 100.0) -> dict:
    """Steady-window metrics: per-DER power/voltage/ripple, line and DER
    harmonic amplitudes, and the power-balance residual.

    Measurements run over the largest whole number of harmonic periods
    that fits in ``[t_start, t_end]`` so ripple does not bias the means.
    """
    n_periods = int(math.floor((t_end - t_start) * harmonic_freq + 1e-9))
    if n_periods < 1:
        raise ValueError(f"window [{t_start}, {t_end}] shorter than one harmonic period")
    dt = traces.sample_dt
    span = n_periods / harmonic_freq
    i0 = int(round((t_start - float(traces.times[0])) / dt))
    i1 = i0 + int(round(span / dt))
    sl = slice(i0, i1)

    nd = len(net.ders)
    out: dict = {"t_start": t_start, "t_end": t_start + span}
    total_der_power = 0.0
    for i in range(nd):
        name = f"der{i + 1}"
        p = float(traces.channel(f"{name}.p_inst")[sl].mean())
        v = float(traces.channel(f"{name}.v_t")[sl].mean())
        ripple = goertzel_amplitude(traces, f"{name}.v_t", t_start, n_periods, harmonic_freq)
        out[name] = {
            "p_mean_w": p,
            "p_filtered_mean_w": float(traces.channel(f"{name}.p_filtered")[sl].mean()),
            "v_mean_v": v,
            "v_ripple_amp_v": ripple.amplitude,
        }
        total_der_power += p

    out["line1_i_harmonic_amp_a"] = goertzel_amplitude(
        traces, "line1.i", t_start, n_periods, harmonic_freq).amplitude
    attach = net.harmonic_attach if net.harmonic_load is not None else "der1"
    out[f"{attach}_i_out_harmonic_amp_a"] = goertzel_amplitude(
        traces, f"{attach}.i_out", t_start, n_periods, harmonic_freq).amplitude

    # power balance: generation vs loads + line losses + stored-energy drift
    p_cpl = float((traces.channel("pcc.v")[sl] * traces.channel("load.i_cpl")[sl]).mean())
    p_1phi = float((traces.channel(f"{attach}.v_t")[sl] * traces.channel("load.i_1phi")[sl]).mean())
    p_lines = 0.0
    for j, line in enumerate(net.lines):
        p_lines += float(line.r * (traces.channel(f"line{j + 1}.i")[sl] ** 2).mean())
    de = (_stored_energy(net, traces, i1 - 1) - _stored_energy(net, traces, i0)) / span
    p_load = p_cpl + p_1phi
    residual = total_der_power - p_load - p_lines - de
    out["p_der_total_w"] = total_der_power
    out["p_load_total_w"] = p_load
    out["p_line_loss_w"] = p_lines
    out["power_balance_residual_w"] = residual
    out["power_balance_residual_frac"] = residual / p_load if p_load > 0 else 0.0
    return out


def scenario_metrics(traces: TraceSet, net: Network,
                     event_times: tuple[float, ...] = (3.0, 5.0, 7.0),
                     settle: float = 0.5,
                     harmonic_freq: float = 100.0) -> dict:
    """Per-window metrics over the steady portions between scenario events.

    Windows start ``settle`` seconds after the run start / each event and
    end at the next event (or the end of the trace).
    """
    t_end = float(traces.times[-1])
    edges = [0.0, *event_times, t_end]
    windows = []
    for a, b in zip(edges[:-1], edges[1:]):
        w0, w1 = a + settle, min(b, t_end)
        if w1 - w0 >= 1.0 / harmonic_freq:
            windows.append(window_metrics(traces, net, w0, w1, harmonic_freq))
    return {"harmonic_freq_hz": harmonic_freq, "settle_s": settle, "windows": windows}
