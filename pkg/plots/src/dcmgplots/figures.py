"""Figure set regenerated from simulator CSV outputs.

Bode figures (fig5-fig8) read ``bode_<tf>.csv`` files (columns freq_hz,
mag_db, phase_deg); time-domain figures (fig10-fig13) read ``traces.csv``
(column ``time_s`` plus named channels).  Figures 11-13 carry zoom insets
around the scenario's mode-change instants.

Output is deterministic SVG: re-rendering the same inputs produces
byte-identical files (timestamps suppressed, fixed hash salt).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "dcmgplots"

import matplotlib.pyplot as plt
import pandas as pd

EVENT_TIMES = (3.0, 5.0, 7.0)
ZOOM_HALF_WIDTH = 0.05  # s around each event instant


@dataclass(frozen=True)
class FigureSpec:
    figure_id: str
    inputs: tuple[str, ...]
    title: str
    channels: tuple[str, ...] = ()
    ylabel: str = ""
    zoom_times: tuple[float, ...] = ()


FIGURES: dict[str, FigureSpec] = {
    "fig5": FigureSpec("fig5", ("bode_gii.csv",),
                       "Harmonic current reference to output current (G_ii)"),
    "fig6": FigureSpec("fig6", ("bode_gvi.csv",),
                       "Voltage reference to output current (G_vi)"),
    "fig7": FigureSpec("fig7", ("bode_gvv.csv",),
                       "Voltage reference to terminal voltage (G_vv)"),
    "fig8": FigureSpec("fig8", ("bode_giv.csv",),
                       "Harmonic current reference to terminal voltage (G_iv)"),
    "fig10": FigureSpec("fig10", ("traces.csv",),
                        "DER power generation and terminal voltages"),
    "fig11": FigureSpec("fig11", ("traces.csv",), "DER 1 output current",
                        channels=("der1.i_out",), ylabel="current (A)",
                        zoom_times=EVENT_TIMES),
    "fig12": FigureSpec("fig12", ("traces.csv",),
                        "Single-phase AC load current (DC side)",
                        channels=("load.i_1phi",), ylabel="current (A)",
                        zoom_times=EVENT_TIMES),
    "fig13": FigureSpec("fig13", ("traces.csv",), "Line 1 current",
                        channels=("line1.i",), ylabel="current (A)",
                        zoom_times=EVENT_TIMES),
}


def _save(fig, path: Path) -> None:
    # drop the creation date so re-renders are byte-identical
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _render_bode(csv_path: Path, spec: FigureSpec, out: Path) -> None:
    df = pd.read_csv(csv_path)
    fig, (ax_mag, ax_ph) = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
    ax_mag.semilogx(df["freq_hz"], df["mag_db"], lw=1.4)
    ax_mag.set_ylabel("magnitude (dB)")
    ax_mag.grid(True, which="both", alpha=0.3)
    ax_mag.set_title(spec.title)
    ax_ph.semilogx(df["freq_hz"], df["phase_deg"], lw=1.4, color="tab:red")
    ax_ph.set_ylabel("phase (deg)")
    ax_ph.set_xlabel("frequency (Hz)")
    ax_ph.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    _save(fig, out)


def _render_power_voltage(csv_path: Path, spec: FigureSpec, out: Path) -> None:
    df = pd.read_csv(csv_path)
    fig, (ax_p, ax_v) = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
    for d, color in (("der1", "tab:blue"), ("der2", "tab:orange")):
        ax_p.plot(df["time_s"], df[f"{d}.p_filtered"] / 1e3, lw=1.2,
                  color=color, label=f"DER {d[-1]}")
        ax_v.plot(df["time_s"], df[f"{d}.v_t"], lw=0.8, color=color,
                  label=f"DER {d[-1]}")
    ax_p.set_ylabel("power (kW)")
    ax_p.legend(loc="lower right")
    ax_p.grid(alpha=0.3)
    ax_p.set_title(spec.title)
    ax_v.set_ylabel("voltage (V)")
    ax_v.set_xlabel("time (s)")
    ax_v.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, out)


def _render_current(csv_path: Path, spec: FigureSpec, out: Path) -> None:
    df = pd.read_csv(csv_path)
    t = df["time_s"].to_numpy()
    y = df[spec.channels[0]].to_numpy()
    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.plot(t, y, lw=0.5)
    ax.set_xlabel("time (s)")
    ax.set_ylabel(spec.ylabel)
    ax.set_title(spec.title)
    ax.grid(alpha=0.3)
    # zoom insets around the mode-change instants
    spread = y.max() - y.min()
    insets = [tz for tz in spec.zoom_times if t[0] <= tz <= t[-1]]
    for k, tz in enumerate(insets):
        axin = ax.inset_axes([0.06 + 0.33 * k, 1.06, 0.27, 0.28])
        sel = (t >= tz - ZOOM_HALF_WIDTH) & (t <= tz + ZOOM_HALF_WIDTH)
        axin.plot(t[sel], y[sel], lw=0.7)
        axin.axvline(tz, color="gray", lw=0.5, ls="--")
        axin.set_title(f"t = {tz:g} s", fontsize=8)
        axin.tick_params(labelsize=6)
        axin.margins(y=0.2 if spread else 0.5)
    fig.tight_layout()
    _save(fig, out)


def render_figure(fig_id: str, run_dir: Path, out_dir: Path) -> Path:
    spec = FIGURES[fig_id]
    src = run_dir / spec.inputs[0]
    out = out_dir / f"{fig_id}.svg"
    if fig_id.startswith("fig") and fig_id in ("fig5", "fig6", "fig7", "fig8"):
        _render_bode(src, spec, out)
    elif fig_id == "fig10":
        _render_power_voltage(src, spec, out)
    else:
        _render_current(src, spec, out)
    return out


def render_all(run_dir, out_dir, figs=None) -> list[Path]:
    """Render every requested figure whose inputs exist.

    Missing inputs skip that figure with a warning; returns the list of
    files written.  Raises ``KeyError`` for unknown figure ids.
    """
    run_dir = Path(run_dir)
    out_dir = Path(out_dir)
    requested = list(FIGURES) if figs is None else list(figs)
    unknown = [f for f in requested if f not in FIGURES]
    if unknown:
        raise KeyError(f"unknown figure id(s): {', '.join(unknown)}")
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for fig_id in requested:
        spec = FIGURES[fig_id]
        missing = [name for name in spec.inputs if not (run_dir / name).exists()]
        if missing:
            warnings.warn(f"{fig_id}: missing input {', '.join(missing)}; skipped")
            continue
        written.append(render_figure(fig_id, run_dir, out_dir))
    return written
