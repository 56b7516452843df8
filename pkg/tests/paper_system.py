"""Builders for the two-DER test system with its published parameter set.

Kept as literal values (independent of the package's preset machinery) so
preset fidelity can be cross-checked against them.
"""

from dcmgsim import (
    ConstantPowerLoad,
    ControlMode,
    ConverterPlant,
    DerController,
    DroopCharacteristic,
    Event,
    FirstOrderLowPass,
    HarmonicCurrentLoad,
    Network,
    PController,
    PccNode,
    PiController,
    ResonantController,
    RlLine,
    Scenario,
    SetCompFraction,
    SetCplPower,
    SetMode,
)

V_MAX = 630.0
V_MIN = 570.0
P_MAX = 10_000.0
PI_KP = 0.4
PI_KI = 50.0
R_KR = 30.0
R_WC = 5.0
R_W0 = 628.32
P_KP = 5.0
LPF_WC = 31.4
LINE_R = 0.4
LINE_L = 0.4e-3
L_F = 2e-3
C_T = 1e-3
C_PCC = 1e-4
E_LIMIT = 700.0
I_LIMIT = 1.2 * P_MAX / V_MIN
CPL_0 = 6_000.0
CPL_1 = 12_000.0
LOAD_IDC = 3.0
LOAD_IH = 6.0
LOAD_FH = 100.0
DT = 2e-5


def make_network(cpl_power=CPL_0, c_pcc=C_PCC, l_f=L_F, c_t=C_T,
                 with_harmonic=True):
    return Network(
        ders=[ConverterPlant(l_f, c_t, E_LIMIT), ConverterPlant(l_f, c_t, E_LIMIT)],
        lines=[RlLine(LINE_R, LINE_L, "der1", "pcc"),
               RlLine(LINE_R, LINE_L, "der2", "pcc")],
        pcc=PccNode(c_pcc),
        cpl=ConstantPowerLoad(cpl_power, 300.0),
        harmonic_load=HarmonicCurrentLoad(LOAD_IDC, LOAD_IH, LOAD_FH, 0.0)
        if with_harmonic else None,
        harmonic_attach="der1",
    )


def make_controller(mode=ControlMode.VCM, comp=1.0):
    return DerController(
        mode=mode,
        droop=DroopCharacteristic(V_MAX, V_MIN, P_MAX),
        power_lpf=FirstOrderLowPass(LPF_WC),
        voltage_pi=PiController(PI_KP, PI_KI),
        harmonic_r=ResonantController(R_KR, R_WC, R_W0),
        inner_p=PController(P_KP),
        i_limit=I_LIMIT,
        comp_fraction=comp,
    )


def paper_events():
    return [
        Event(3.0, SetMode("der1", ControlMode.HCM)),
        Event(5.0, SetCplPower(CPL_1)),
        Event(7.0, SetCompFraction("der1", 0.5)),
    ]


def make_scenario(duration=10.0, dt=DT, decimation=10, events=None,
                  der1_mode=ControlMode.VCM, initial_voltage=600.0, **net_kw):
    return Scenario(
        network=make_network(**net_kw),
        controllers=[make_controller(der1_mode), make_controller(ControlMode.VCM)],
        duration=duration,
        dt=dt,
        record_decimation=decimation,
        events=paper_events() if events is None else events,
        initial_voltage=initial_voltage,
    )
