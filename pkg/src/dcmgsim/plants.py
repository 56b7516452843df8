"""Averaged electrical models of the test network components.

The network is a star of converter terminals tied to a common coupling
node (PCC) through RL lines.  Each converter is an ideal averaged
voltage source behind an LC output stage; the PCC carries a small
stabilizing capacitance so the constant-power load yields a pure-ODE
formulation instead of an index-2 DAE.

State vector layout used throughout the package::

    [i_l(der 0..n-1), v_t(der 0..n-1), i(line 0..m-1), v_pcc]

Line currents are positive from ``node_a`` to ``node_b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import VoltageCollapseError

PCC_NODE = "pcc"


@dataclass
class ConverterPlant:
    """LC output stage of one converter: l_f*di_l/dt = e - v_t, c_t*dv_t/dt = i_l - i_out."""

    l_f: float
    c_t: float
    e_limit: float = 700.0
    i_l: float = 0.0
    v_t: float = 0.0

    def __post_init__(self):
        if self.l_f <= 0.0 or self.c_t <= 0.0 or self.e_limit <= 0.0:
            raise ValueError("l_f, c_t and e_limit must be positive")


@dataclass
class RlLine:
    """Series RL branch between two named nodes."""

    r: float
    l: float
    node_a: str
    node_b: str
    i: float = 0.0

    def __post_init__(self):
        if self.r < 0.0:
            raise ValueError(f"line resistance must be >= 0, got {self.r}")
        if self.l <= 0.0:
            raise ValueError(f"line inductance must be positive, got {self.l}")


@dataclass
class ConstantPowerLoad:
    """Ideal CPL drawing ``power / max(v, v_floor)`` amperes.

    The floor keeps transients numerically bounded; an operating voltage
    at or below the floor is treated as collapse by the network model.
    """

    power: float
    v_floor: float = 300.0

    def __post_init__(self):
        if self.power < 0.0:
            raise ValueError(f"CPL power must be >= 0, got {self.power}")
        if self.v_floor <= 0.0:
            raise ValueError(f"v_floor must be positive, got {self.v_floor}")

    def current(self, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError(f"voltage must be finite, got {v!r}")
        return self.power / max(v, self.v_floor)


@dataclass
class HarmonicCurrentLoad:
    """DC-side current signature of the single-phase AC load.

    ``i(t) = i_dc + i_h * sin(2*pi*f_h*t + phase)`` — the DC term is the
    active power draw, the sinusoid is the double-line-frequency ripple
    the inverter reflects onto its DC side.
    """

    i_dc: float
    i_h: float
    f_h: float
    phase: float = 0.0

    def __post_init__(self):
        if self.i_dc < 0.0 or self.i_h < 0.0:
            raise ValueError("i_dc and i_h must be >= 0")
        if self.f_h <= 0.0:
            raise ValueError(f"f_h must be positive, got {self.f_h}")

    def current(self, t: float) -> float:
        return self.i_dc + self.i_h * math.sin(2.0 * math.pi * self.f_h * t + self.phase)


@dataclass
class PccNode:
    """Common coupling node with a small stabilizing capacitance."""

    c_pcc: float
    v: float = 0.0

    def __post_init__(self):
        if self.c_pcc <= 0.0:
            raise ValueError(f"c_pcc must be positive, got {self.c_pcc}")


@dataclass
class Network:
    """Node/branch description: converter plants, RL lines, PCC and loads.

    DER terminals are named ``der1 .. derN``; the common node is
    ``pcc``.  The CPL hangs off the PCC; the harmonic load attaches to
    one DER terminal (``harmonic_attach``).
    """

    ders: list[ConverterPlant]
    lines: list[RlLine]
    pcc: PccNode
    cpl: ConstantPowerLoad
    harmonic_load: HarmonicCurrentLoad | None = None
    harmonic_attach: str = "der1"

    def __post_init__(self):
        self.validate()

    # -- topology ---------------------------------------------------------

    def node_names(self) -> list[str]:
        return [f"der{i + 1}" for i in range(len(self.ders))] + [PCC_NODE]

    def node_index(self, name: str) -> int:
        try:
            return self.node_names().index(name)
        except ValueError:
            raise ValueError(f"unknown node '{name}'") from None

    def validate(self) -> None:
        if not self.ders:
            raise ValueError("network needs at least one DER")
        names = set(self.node_names())
        for k, line in enumerate(self.lines):
            for end in (line.node_a, line.node_b):
                if end not in names:
                    raise ValueError(f"line {k + 1} endpoint '{end}' is not a node")
        if self.harmonic_load is not None and self.harmonic_attach not in names:
            raise ValueError(f"harmonic load attach point '{self.harmonic_attach}' is not a node")
        # connectivity check: every node reachable over lines
        adj: dict[str, set[str]] = {n: set() for n in names}
        for line in self.lines:
            adj[line.node_a].add(line.node_b)
            adj[line.node_b].add(line.node_a)
        seen = set()
        stack = [next(iter(names))]
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            stack.extend(adj[n] - seen)
        if seen != names:
            missing = sorted(names - seen)
            raise ValueError(f"network graph is not connected; unreachable: {missing}")

    # -- state vector -----------------------------------------------------

    @property
    def n_states(self) -> int:
        return 2 * len(self.ders) + len(self.lines) + 1

    def get_state(self) -> np.ndarray:
        nd = len(self.ders)
        y = np.empty(self.n_states)
        for i, der in enumerate(self.ders):
            y[i] = der.i_l
            y[nd + i] = der.v_t
        for j, line in enumerate(self.lines):
            y[2 * nd + j] = line.i
        y[-1] = self.pcc.v
        return y

    def set_state(self, y: np.ndarray) -> None:
        nd = len(self.ders)
        for i, der in enumerate(self.ders):
            der.i_l = float(y[i])
            der.v_t = float(y[nd + i])
        for j, line in enumerate(self.lines):
            line.i = float(y[2 * nd + j])
        self.pcc.v = float(y[-1])

    def state_labels(self) -> list[str]:
        labels = [f"der{i + 1}.i_l" for i in range(len(self.ders))]
        labels += [f"der{i + 1}.v_t" for i in range(len(self.ders))]
        labels += [f"line{j + 1}.i" for j in range(len(self.lines))]
        labels.append("pcc.v")
        return labels

    # -- currents ---------------------------------------------------------

    def local_load_current(self, der_index: int, t: float) -> float:
        """Current drawn at a DER terminal by its local harmonic load."""
        if (
            self.harmonic_load is not None
            and self.harmonic_attach == f"der{der_index + 1}"
        ):
            return self.harmonic_load.current(t)
        return 0.0

    def output_current(self, der_index: int, t: float, y: np.ndarray) -> float:
        """DER output current: line outflow plus the local load draw."""
        nd = len(self.ders)
        name = f"der{der_index + 1}"
        i_out = self.local_load_current(der_index, t)
        for j, line in enumerate(self.lines):
            if line.node_a == name:
                i_out += y[2 * nd + j]
            elif line.node_b == name:
                i_out -= y[2 * nd + j]
        return i_out


def network_derivatives(
    net: Network, t: float, commanded_voltages: np.ndarray | list[float]
) -> np.ndarray:
    """Time derivative of the full network state.

    ``commanded_voltages`` are the converter-side voltages, one per DER,
    already saturated to their ``e_limit``.  Load currents are evaluated
    at ``t`` and the present node voltages.  Raises
    ``VoltageCollapseError`` when any node voltage has fallen to the CPL
    guard floor.
    """
    nd = len(net.ders)
    y = net.get_state()
    e = np.asarray(commanded_voltages, dtype=float)
    if e.shape != (nd,):
        raise ValueError(f"expected {nd} commanded voltages, got shape {e.shape}")
    v_floor = net.cpl.v_floor
    for i in range(nd):
        if y[nd + i] <= v_floor:
            raise VoltageCollapseError(f"der{i + 1}", t)
    if y[-1] <= v_floor:
        raise VoltageCollapseError(PCC_NODE, t)

    dy = np.empty_like(y)
    node_v = {f"der{i + 1}": y[nd + i] for i in range(nd)}
    node_v[PCC_NODE] = y[-1]

    for i, der in enumerate(net.ders):
        i_out = net.output_current(i, t, y)
        dy[i] = (e[i] - y[nd + i]) / der.l_f
        dy[nd + i] = (y[i] - i_out) / der.c_t

    for j, line in enumerate(net.lines):
        i_line = y[2 * nd + j]
        dy[2 * nd + j] = (node_v[line.node_a] - line.r * i_line - node_v[line.node_b]) / line.l

    inflow = 0.0
    for j, line in enumerate(net.lines):
        if line.node_b == PCC_NODE:
            inflow += y[2 * nd + j]
        elif line.node_a == PCC_NODE:
            inflow -= y[2 * nd + j]
    dy[-1] = (inflow - net.cpl.current(y[-1])) / net.pcc.c_pcc
    return dy
