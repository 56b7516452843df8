"""Islanded DC microgrid simulation with hybrid voltage/current control.

Simulates droop-controlled DC distributed energy resources whose
grid-side converters can additionally absorb the second-harmonic current
of a local single-phase AC load, plus the frequency-domain tooling (AC
sweep) to characterize the closed loops.
"""

from .blocks import (
    DroopCharacteristic,
    FirstOrderLowPass,
    PController,
    PiController,
    ResonantCoefficients,
    ResonantController,
    discretize_prewarped,
)
from .control import ControlMode, DerController, Measurements
from .engine import (
    Event,
    Scenario,
    SetCompFraction,
    SetCplPower,
    SetMode,
    TraceSet,
    run,
)
from .errors import (
    ConfigError,
    DivergenceError,
    SimulationError,
    SweepPointError,
    VoltageCollapseError,
)
from .measure import HarmonicMeasurement, goertzel_amplitude, scenario_metrics
from .plants import (
    ConstantPowerLoad,
    ConverterPlant,
    HarmonicCurrentLoad,
    Network,
    PccNode,
    RlLine,
    network_derivatives,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
