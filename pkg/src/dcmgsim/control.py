"""Per-converter control pipelines: VCM, CCM and the hybrid HCM.

The pipeline composes the primitive blocks into the cascaded structure
used by every mode:

1. instantaneous power from terminal voltage and output current,
   low-pass filtered;
2. droop law -> DC voltage reference;
3. PI on the voltage error -> DC inductor-current reference
   (active in VCM and HCM);
4. resonant controller on the harmonic current error -> harmonic
   inductor-current reference (active in CCM and HCM), with the target
   simply ``comp_fraction`` times the raw local load current — no
   harmonic extraction, the resonant block self-selects its frequency;
5. the two references summed and clamped to the current limit;
6. inner P controller on the inductor-current error plus terminal-voltage
   feedforward -> converter-side voltage reference.

The feedforward makes the converter command ``e_ref = v_t + kp_i *
(i_l_ref - i_l)``, so the inductor sees ``l_f di/dt = kp_i * (i_l_ref -
i_l)`` and the inner loop is a clean first-order tracker with crossover
``kp_i / l_f``; without it no equilibrium exists under the reference
limiter (holding ~600 V would demand a ~120 A current error).

Masked loops contribute zero and are not stepped; a loop re-activated by
a mode switch restarts from zero state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .blocks import (
    DroopCharacteristic,
    FirstOrderLowPass,
    PController,
    PiController,
    ResonantController,
)


class ControlMode(Enum):
    VCM = "vcm"
    CCM = "ccm"
    HCM = "hcm"

    @property
    def voltage_loop_active(self) -> bool:
        return self is not ControlMode.CCM

    @property
    def harmonic_loop_active(self) -> bool:
        return self is not ControlMode.VCM


@dataclass
class Measurements:
    """Sampled signals fed to one controller step."""

    v_t: float
    i_l: float
    i_out: float
    i_local_load: float = 0.0

    def check_finite(self) -> None:
        for name in ("v_t", "i_l", "i_out", "i_local_load"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"measurement {name} must be finite, got {v!r}")


@dataclass
class DerController:
    """Complete control pipeline of one DER grid-side converter."""

    mode: ControlMode
    droop: DroopCharacteristic
    power_lpf: FirstOrderLowPass
    voltage_pi: PiController
    harmonic_r: ResonantController
    inner_p: PController
    i_limit: float
    comp_fraction: float = 1.0

    # last intermediate signals, refreshed by controller_step (debug/trace)
    last_p_filtered: float = field(default=0.0, repr=False)
    last_v_ref: float = field(default=0.0, repr=False)
    last_i_l_ref: float = field(default=0.0, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.comp_fraction <= 1.0:
            raise ValueError(f"comp_fraction must be in [0, 1], got {self.comp_fraction}")
        if self.i_limit <= 0.0:
            raise ValueError(f"i_limit must be positive, got {self.i_limit}")
        # outer PI shares the inner-loop current limit so its integrator
        # cannot wind past what the limiter will pass anyway
        if self.voltage_pi.output_limits is None:
            self.voltage_pi.output_limits = (-self.i_limit, self.i_limit)

    def controller_step(self, meas: Measurements, dt: float) -> float:
        """Advance all active loops one sample; returns the converter-side
        voltage reference (unsaturated)."""
        meas.check_finite()
        p = meas.v_t * meas.i_out
        p_filt = self.power_lpf.step(p, dt)
        v_ref = self.droop.voltage_ref(p_filt)

        if self.mode.voltage_loop_active:
            i_ref_dc = self.voltage_pi.step(v_ref - meas.v_t, dt)
        else:
            i_ref_dc = 0.0

        if self.mode.harmonic_loop_active:
            target = self.comp_fraction * meas.i_local_load
            i_ref_h = self.harmonic_r.step(target - meas.i_out, dt)
        else:
            i_ref_h = 0.0

        i_l_ref = min(max(i_ref_dc + i_ref_h, -self.i_limit), self.i_limit)
        e_ref = meas.v_t + self.inner_p.step(i_l_ref - meas.i_l)

        self.last_p_filtered = p_filt
        self.last_v_ref = v_ref
        self.last_i_l_ref = i_l_ref
        return e_ref

    def set_mode(self, mode: ControlMode) -> None:
        """Switch mode; loops that become active restart from zero state,
        loops that become masked keep (freeze) their state."""
        if mode is self.mode:
            return
        if mode.voltage_loop_active and not self.mode.voltage_loop_active:
            self.voltage_pi.reset()
        if mode.harmonic_loop_active and not self.mode.harmonic_loop_active:
            self.harmonic_r.reset()
        self.mode = mode

    def set_comp_fraction(self, fraction: float) -> None:
        if not 0.0 <= fraction <= 1.0:
            raise ValueError(f"comp_fraction must be in [0, 1], got {fraction}")
        self.comp_fraction = fraction

    def reset(self) -> None:
        """Zero every internal state (fresh start of a run)."""
        self.power_lpf.reset()
        self.voltage_pi.reset()
        self.harmonic_r.reset()
        self.last_p_filtered = 0.0
        self.last_v_ref = 0.0
        self.last_i_l_ref = 0.0
