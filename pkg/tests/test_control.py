"""Controller pipeline semantics: masking, limiter, mode transitions."""

import math

import numpy as np
import pytest

from dcmgsim.blocks import (
    DroopCharacteristic,
    FirstOrderLowPass,
    PController,
    PiController,
    ResonantController,
)
from dcmgsim.control import ControlMode, DerController, Measurements

DT = 2e-5
I_LIMIT = 1.2 * 10_000.0 / 570.0


def make_controller(mode=ControlMode.VCM, comp=1.0):
    return DerController(
        mode=mode,
        droop=DroopCharacteristic(630.0, 570.0, 10_000.0),
        power_lpf=FirstOrderLowPass(31.4),
        voltage_pi=PiController(0.4, 50.0),
        harmonic_r=ResonantController(30.0, 5.0, 628.32),
        inner_p=PController(5.0),
        i_limit=I_LIMIT,
        comp_fraction=comp,
    )


def test_zero_error_passthrough():
    # self-consistent steady point: v solves v = droop(v * i_out), v_t sits
    # at the reference, i_l at the PI output; inner P returns exactly zero
    ctrl = make_controller(ControlMode.VCM)
    i_out = 5.0
    v = 630.0 / (1.0 + ctrl.droop.slope * i_out)
    ctrl.power_lpf.reset(v * i_out)
    ctrl.voltage_pi.integrator = i_out  # steady current reference
    e = ctrl.controller_step(Measurements(v_t=v, i_l=i_out, i_out=i_out), DT)
    # converter command = terminal voltage + zero inner-loop deviation
    assert e == pytest.approx(v, abs=1e-9)
    assert ctrl.last_v_ref == pytest.approx(v, abs=1e-9)
    assert ctrl.last_i_l_ref == pytest.approx(i_out)


def test_vcm_masks_harmonic_loop():
    ctrl = make_controller(ControlMode.VCM)
    for k in range(200):
        ctrl.controller_step(
            Measurements(v_t=600.0, i_l=0.0, i_out=math.sin(628.32 * k * DT)), DT)
    assert ctrl.harmonic_r.state1 == 0.0 == ctrl.harmonic_r.state2


def test_ccm_masks_voltage_loop():
    ctrl = make_controller(ControlMode.CCM)
    for k in range(200):
        ctrl.controller_step(Measurements(v_t=500.0, i_l=0.0, i_out=1.0), DT)
    assert ctrl.voltage_pi.integrator == 0.0
    # lowpass keeps tracking the measured power regardless of mode
    assert ctrl.power_lpf.state != 0.0


def test_superposition_structure_bit_identical():
    # HCM with the R loop held at rest behaves bit-identically to VCM
    rng = np.random.default_rng(11)
    meas = [Measurements(v_t=600.0 + rng.normal(), i_l=rng.normal(),
                         i_out=rng.normal(), i_local_load=0.0) for _ in range(500)]
    vcm = make_controller(ControlMode.VCM)
    hcm = make_controller(ControlMode.HCM, comp=0.0)
    # comp = 0 with zero local load and zero i_out harmonic leaves the R
    # error equal to -i_out, so outputs differ; instead force identical
    # inputs with zero i_out so the R path stays exactly at zero
    out_v = [vcm.controller_step(Measurements(m.v_t, m.i_l, 0.0, 0.0), DT) for m in meas]
    out_h = [hcm.controller_step(Measurements(m.v_t, m.i_l, 0.0, 0.0), DT) for m in meas]
    assert out_v == out_h


def test_limiter_clamps_combined_reference():
    ctrl = make_controller(ControlMode.HCM)
    rng = np.random.default_rng(5)
    for _ in range(2000):
        ctrl.controller_step(
            Measurements(v_t=rng.uniform(400, 700), i_l=rng.normal(0, 30),
                         i_out=rng.normal(0, 30), i_local_load=rng.normal(0, 20)), DT)
        assert abs(ctrl.last_i_l_ref) <= I_LIMIT


def test_comp_fraction_validation_and_scaling():
    ctrl = make_controller(ControlMode.HCM)
    with pytest.raises(ValueError):
        ctrl.set_comp_fraction(1.5)
    with pytest.raises(ValueError):
        ctrl.set_comp_fraction(-0.1)
    ctrl.set_comp_fraction(0.5)
    assert ctrl.comp_fraction == 0.5


def test_mode_switch_resets_only_activated_loop():
    ctrl = make_controller(ControlMode.HCM)
    for k in range(500):
        ctrl.controller_step(
            Measurements(v_t=600.0, i_l=1.0, i_out=2.0 + math.sin(628.32 * k * DT),
                         i_local_load=3.0), DT)
    assert ctrl.harmonic_r.state1 != 0.0
    pi_eprev = ctrl.voltage_pi.error_prev
    ctrl.set_mode(ControlMode.VCM)       # deactivation freezes the R state
    frozen = (ctrl.harmonic_r.state1, ctrl.harmonic_r.state2)
    ctrl.controller_step(Measurements(600.0, 1.0, 2.0, 3.0), DT)
    assert (ctrl.harmonic_r.state1, ctrl.harmonic_r.state2) == frozen
    assert ctrl.voltage_pi.error_prev != pi_eprev  # PI still live
    ctrl.set_mode(ControlMode.HCM)       # re-activation starts from rest
    assert (ctrl.harmonic_r.state1, ctrl.harmonic_r.state2) == (0.0, 0.0)


def test_hcm_to_vcm_drops_harmonic_contribution_next_step():
    ctrl = make_controller(ControlMode.HCM)
    for k in range(500):
        ctrl.controller_step(
            Measurements(600.0, 1.0, 2.0 + math.sin(628.32 * k * DT), 6.0), DT)
    ctrl.set_mode(ControlMode.VCM)
    twin = make_controller(ControlMode.VCM)
    twin.power_lpf.state = ctrl.power_lpf.state
    twin.voltage_pi.integrator = ctrl.voltage_pi.integrator
    twin.voltage_pi.error_prev = ctrl.voltage_pi.error_prev
    m = Measurements(600.0, 1.0, 2.0, 6.0)
    assert ctrl.controller_step(m, DT) == twin.controller_step(m, DT)


def test_non_finite_measurement_leaves_states():
    ctrl = make_controller(ControlMode.HCM)
    ctrl.controller_step(Measurements(600.0, 1.0, 2.0, 3.0), DT)
    snapshot = (ctrl.power_lpf.state, ctrl.voltage_pi.integrator,
                ctrl.harmonic_r.state1, ctrl.harmonic_r.state2)
    with pytest.raises(ValueError):
        ctrl.controller_step(Measurements(float("nan"), 1.0, 2.0, 3.0), DT)
    assert (ctrl.power_lpf.state, ctrl.voltage_pi.integrator,
            ctrl.harmonic_r.state1, ctrl.harmonic_r.state2) == snapshot


def test_determinism():
    def run_once():
        ctrl = make_controller(ControlMode.HCM)
        rng = np.random.default_rng(17)
        return [ctrl.controller_step(
            Measurements(600 + rng.normal(), rng.normal(), rng.normal(), rng.normal()),
            DT) for _ in range(300)]
    assert run_once() == run_once()
