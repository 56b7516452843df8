"""Discrete-time controller primitives.

Five building blocks are used by every converter control mode: PI and P
controllers, a non-ideal resonant controller, a first-order low-pass
filter and the P-V droop law.  All stateful blocks advance with a fixed
sample time ``dt`` that must stay constant over a run; discrete
coefficients are cached per ``dt``.

Discretization choices:

* PI integrator: trapezoidal accumulation.
* Resonant section: bilinear (Tustin) transform, frequency-prewarped at
  the resonance so the discrete peak gain sits exactly at ``omega_0``.
* Low-pass: exact pole mapping (``exp(-omega_cut*dt)``), unity DC gain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


def _check_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")


def _check_dt(dt: float) -> None:
    if not (dt > 0.0 and math.isfinite(dt)):
        raise ValueError(f"dt must be a positive finite number, got {dt!r}")


@dataclass
class DroopCharacteristic:
    """P-V droop: maps filtered power to the terminal-voltage reference.

    The slope is derived from the voltage band and the power rating,
    ``slope = (v_max - v_min) / p_max``, so a unit at zero power sits at
    ``v_max`` and a unit at rated power sits at ``v_min``.  The output is
    deliberately not clamped; overload extrapolates linearly.
    """

    v_max: float
    v_min: float
    p_max: float

    def __post_init__(self):
        if not (self.v_max > self.v_min > 0.0):
            raise ValueError(
                f"require v_max > v_min > 0, got v_max={self.v_max}, v_min={self.v_min}"
            )
        if self.p_max <= 0.0:
            raise ValueError(f"p_max must be positive, got {self.p_max}")

    @property
    def slope(self) -> float:
        """Droop coefficient in V/W."""
        return (self.v_max - self.v_min) / self.p_max

    def voltage_ref(self, p_filtered: float) -> float:
        """Voltage reference for a given (low-pass filtered) power in W."""
        _check_finite("p_filtered", p_filtered)
        return self.v_max - self.slope * p_filtered


@dataclass
class PiController:
    """PI controller with optional output limits and anti-windup.

    The output is ``kp*error + integrator`` evaluated before the
    integrator update; the integrator accumulates trapezoidally.  When
    ``output_limits`` is set, the output is clamped, the integrator is
    frozen while the unclamped output saturates in the same direction
    (conditional integration), and the integrator itself is kept inside
    the limits so the zero-error output can never exceed them.
    """

    kp: float
    ki_integral: float
    output_limits: tuple[float, float] | None = None
    integrator: float = 0.0
    error_prev: float = 0.0

    def __post_init__(self):
        if self.kp < 0.0 or self.ki_integral < 0.0:
            raise ValueError("PI gains must be non-negative")
        if self.output_limits is not None:
            lo, hi = self.output_limits
            if not lo < hi:
                raise ValueError(f"output_limits must satisfy lo < hi, got {self.output_limits}")

    def step(self, error: float, dt: float) -> float:
        _check_dt(dt)
        _check_finite("error", error)
        raw = self.kp * error + self.integrator
        delta = 0.5 * self.ki_integral * (error + self.error_prev) * dt
        if self.output_limits is None:
            self.integrator += delta
            self.error_prev = error
            return raw
        lo, hi = self.output_limits
        out = min(max(raw, lo), hi)
        if (raw > hi and delta > 0.0) or (raw < lo and delta < 0.0):
            delta = 0.0
        self.integrator = min(max(self.integrator + delta, lo), hi)
        self.error_prev = error
        return out

    def reset(self) -> None:
        self.integrator = 0.0
        self.error_prev = 0.0


@dataclass
class PController:
    """Stateless proportional controller for the inner current loop."""

    kp: float

    def __post_init__(self):
        if self.kp <= 0.0:
            raise ValueError(f"kp must be positive, got {self.kp}")

    def step(self, error: float) -> float:
        _check_finite("error", error)
        return self.kp * error


@dataclass
class FirstOrderLowPass:
    """First-order lag ``omega_cut/(s + omega_cut)``, unity DC gain.

    Discrete update uses the exact pole ``a = exp(-omega_cut*dt)``:
    ``y[k] = a*y[k-1] + (1-a)*u[k]``, which is BIBO stable for any dt.
    """

    omega_cut: float
    state: float = 0.0
    _dt: float = field(default=-1.0, repr=False)
    _pole: float = field(default=0.0, repr=False)

    def __post_init__(self):
        if self.omega_cut <= 0.0:
            raise ValueError(f"omega_cut must be positive, got {self.omega_cut}")

    def step(self, value: float, dt: float) -> float:
        _check_dt(dt)
        _check_finite("input", value)
        if dt != self._dt:
            self._dt = dt
            self._pole = math.exp(-self.omega_cut * dt)
        a = self._pole
        self.state = a * self.state + (1.0 - a) * value
        return self.state

    def reset(self, state: float = 0.0) -> None:
        self.state = state


@dataclass(frozen=True)
class ResonantCoefficients:
    """Normalized coefficients of the discrete second-order resonant section.

    Difference equation (direct form II transposed, a0 normalized to 1):
    ``y[k] = b0*u[k] + b1*u[k-1] + b2*u[k-2] - a1*y[k-1] - a2*y[k-2]``.
    """

    b0: float
    b1: float
    b2: float
    a1: float
    a2: float

    CSV_HEADER = "coef_b0,coef_b1,coef_b2,coef_a1,coef_a2"

    def csv_row(self) -> str:
        return ",".join(
            repr(v) for v in (self.b0, self.b1, self.b2, self.a1, self.a2)
        )


def discretize_prewarped(
    omega_0: float, omega_c: float, kr: float, dt: float
) -> ResonantCoefficients:
    """Bilinear-transform the resonant section with prewarping at omega_0.

    The continuous prototype is ``R(s) = 2*kr*omega_c*s / (s^2 +
    2*omega_c*s + omega_0^2)``.  Prewarping places the discrete peak
    exactly at ``omega_0`` for any valid ``dt``, preserving the
    resonance-gain identity ``|R| = kr`` there.

    Raises ``ValueError`` when ``dt*omega_0 >= pi`` (resonance at or
    beyond Nyquist).
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if dt * omega_0 >= math.pi:
        raise ValueError(
            f"dt*omega_0 = {dt * omega_0:.4f} >= pi: resonance beyond Nyquist"
        )
    k = omega_0 / math.tan(0.5 * omega_0 * dt)
    a0 = k * k + 2.0 * omega_c * k + omega_0 * omega_0
    b0 = 2.0 * kr * omega_c * k / a0
    a1 = 2.0 * (omega_0 * omega_0 - k * k) / a0
    a2 = (k * k - 2.0 * omega_c * k + omega_0 * omega_0) / a0
    return ResonantCoefficients(b0=b0, b1=0.0, b2=-b0, a1=a1, a2=a2)


@dataclass
class ResonantController:
    """Non-ideal resonant controller peaked at ``omega_0``.

    Continuous transfer function ``2*kr*omega_c*s / (s^2 + 2*omega_c*s +
    omega_0^2)``: gain exactly ``kr`` at the resonance, zero gain at DC.
    Stepped as a prewarped-Tustin biquad with two internal states.
    """

    kr: float
    omega_c: float
    omega_0: float
    state1: float = 0.0
    state2: float = 0.0
    _dt: float = field(default=-1.0, repr=False)
    _coeffs: ResonantCoefficients | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kr <= 0.0 or self.omega_c <= 0.0 or self.omega_0 <= 0.0:
            raise ValueError("kr, omega_c and omega_0 must all be positive")
        if not self.omega_c < self.omega_0 / 10.0:
            raise ValueError(
                f"omega_c ({self.omega_c}) must be well below omega_0 "
                f"({self.omega_0}); require omega_c < omega_0/10"
            )

    def coefficients(self, dt: float) -> ResonantCoefficients:
        if dt != self._dt:
            self._coeffs = discretize_prewarped(self.omega_0, self.omega_c, self.kr, dt)
            self._dt = dt
        return self._coeffs

    def step(self, error: float, dt: float) -> float:
        _check_dt(dt)
        if dt >= 2.0 * math.pi / (20.0 * self.omega_0):
            raise ValueError(
                f"dt={dt} too coarse to resolve omega_0={self.omega_0} "
                "(require dt < 2*pi/(20*omega_0))"
            )
        _check_finite("error", error)
        c = self.coefficients(dt)
        out = c.b0 * error + self.state1
        self.state1 = self.state2 - c.a1 * out
        self.state2 = c.b2 * error - c.a2 * out
        return out

    def reset(self) -> None:
        self.state1 = 0.0
        self.state2 = 0.0
