"""Plant model tests: load laws, KCL structure, open-loop settling."""

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from dcmgsim.errors import VoltageCollapseError
from dcmgsim.plants import (
    ConstantPowerLoad,
    ConverterPlant,
    HarmonicCurrentLoad,
    Network,
    PccNode,
    RlLine,
    network_derivatives,
)


def two_der_network(cpl_power=6000.0):
    """The two-DER star used throughout: der1/der2 -> pcc, CPL at pcc,
    harmonic load on der1."""
    return Network(
        ders=[ConverterPlant(l_f=2e-3, c_t=1e-3), ConverterPlant(l_f=2e-3, c_t=1e-3)],
        lines=[RlLine(0.4, 0.4e-3, "der1", "pcc"), RlLine(0.4, 0.4e-3, "der2", "pcc")],
        pcc=PccNode(c_pcc=1e-4),
        cpl=ConstantPowerLoad(cpl_power),
        harmonic_load=HarmonicCurrentLoad(i_dc=3.0, i_h=6.0, f_h=100.0),
        harmonic_attach="der1",
    )


class TestLoads:
    def test_cpl_current(self):
        cpl = ConstantPowerLoad(6000.0)
        assert cpl.current(600.0) == pytest.approx(10.0)
        assert ConstantPowerLoad(12000.0).current(600.0) == pytest.approx(20.0)

    def test_cpl_floor_engages(self):
        cpl = ConstantPowerLoad(6000.0, v_floor=300.0)
        assert cpl.current(1.0) == pytest.approx(20.0)

    def test_harmonic_waveform(self):
        load = HarmonicCurrentLoad(i_dc=3.0, i_h=6.0, f_h=100.0, phase=0.0)
        assert load.current(0.0) == pytest.approx(3.0)
        assert load.current(2.5e-3) == pytest.approx(9.0)    # quarter period
        assert load.current(7.5e-3) == pytest.approx(-3.0)   # three quarters

    def test_validation(self):
        with pytest.raises(ValueError):
            ConstantPowerLoad(-1.0)
        with pytest.raises(ValueError):
            HarmonicCurrentLoad(i_dc=3.0, i_h=6.0, f_h=0.0)
        with pytest.raises(ValueError):
            RlLine(r=-0.1, l=1e-3, node_a="der1", node_b="pcc")
        with pytest.raises(ValueError):
            ConverterPlant(l_f=0.0, c_t=1e-3)


class TestTopology:
    def test_node_names_and_index(self):
        net = two_der_network()
        assert net.node_names() == ["der1", "der2", "pcc"]
        assert net.node_index("pcc") == 2

    def test_rejects_bad_endpoint(self):
        with pytest.raises(ValueError, match="endpoint"):
            Network(
                ders=[ConverterPlant(2e-3, 1e-3)],
                lines=[RlLine(0.4, 0.4e-3, "der1", "der9")],
                pcc=PccNode(1e-4),
                cpl=ConstantPowerLoad(0.0),
            )

    def test_rejects_disconnected_graph(self):
        with pytest.raises(ValueError, match="not connected"):
            Network(
                ders=[ConverterPlant(2e-3, 1e-3), ConverterPlant(2e-3, 1e-3)],
                lines=[RlLine(0.4, 0.4e-3, "der1", "pcc")],
                pcc=PccNode(1e-4),
                cpl=ConstantPowerLoad(0.0),
            )

    def test_state_roundtrip(self):
        net = two_der_network()
        y = np.arange(1.0, 8.0)
        y[2:4] = 600.0
        y[-1] = 600.0
        net.set_state(y)
        assert np.array_equal(net.get_state(), y)
        assert net.state_labels()[0] == "der1.i_l"
        assert net.state_labels()[-1] == "pcc.v"


class TestDerivatives:
    def test_zero_input_equilibrium(self):
        # no loads, zero states except equal voltages, zero commands:
        # everything at 0 V with e = 0 is an equilibrium
        net = two_der_network(cpl_power=0.0)
        net.harmonic_load = None
        y = np.zeros(7)
        y[2:4] = 600.0
        y[6] = 600.0
        # with equal node voltages and zero currents, only the inductor
        # equations see the e - v_t imbalance; command e = v_t: all zero
        net.set_state(y)
        dy = network_derivatives(net, 0.0, [600.0, 600.0])
        assert np.allclose(dy, 0.0, atol=1e-12)

    def test_kcl_residual_is_exact(self):
        # C dv/dt equals the net current into each capacitor node
        net = two_der_network()
        rng = np.random.default_rng(3)
        y = rng.normal(600.0, 5.0, size=7)
        y[0:2] = rng.normal(0.0, 5.0, 2)
        y[4:6] = rng.normal(0.0, 5.0, 2)
        net.set_state(y)
        t = 1.234e-3
        dy = network_derivatives(net, t, [610.0, 605.0])
        i_load = net.harmonic_load.current(t)
        # der1 node: i_l - i_line1 - i_load
        assert net.ders[0].c_t * dy[2] == pytest.approx(y[0] - y[4] - i_load, abs=1e-9)
        # der2 node: i_l - i_line2
        assert net.ders[1].c_t * dy[3] == pytest.approx(y[1] - y[5], abs=1e-9)
        # pcc: line1 + line2 - cpl
        i_cpl = net.cpl.current(y[6])
        assert net.pcc.c_pcc * dy[6] == pytest.approx(y[4] + y[5] - i_cpl, abs=1e-9)

    def test_line_equation(self):
        net = two_der_network()
        y = np.array([0.0, 0.0, 610.0, 605.0, 2.0, -1.0, 600.0])
        net.set_state(y)
        dy = network_derivatives(net, 0.0, [610.0, 605.0])
        line = net.lines[0]
        assert dy[4] == pytest.approx((610.0 - line.r * 2.0 - 600.0) / line.l)

    def test_voltage_collapse_detection(self):
        net = two_der_network()
        y = net.get_state()
        y[2:4] = 600.0
        y[6] = 250.0  # below the 300 V floor
        net.set_state(y)
        with pytest.raises(VoltageCollapseError) as ei:
            network_derivatives(net, 0.0, [600.0, 600.0])
        assert ei.value.node == "pcc"

    def test_open_loop_settles_to_command(self):
        # one DER holding e = 600 V into an unloaded line/pcc: the line
        # resistance damps the LC stage; terminal settles at 600 V, 0 A
        net = Network(
            ders=[ConverterPlant(l_f=2e-3, c_t=1e-3)],
            lines=[RlLine(0.4, 0.4e-3, "der1", "pcc")],
            pcc=PccNode(1e-4),
            cpl=ConstantPowerLoad(0.0),
        )

        def rhs(t, y):
            net.set_state(y)
            return network_derivatives(net, t, [600.0])

        y0 = np.array([0.0, 600.0, 0.0, 600.0])
        sol = solve_ivp(rhs, (0.0, 2.0), y0, rtol=1e-9, atol=1e-9)
        yf = sol.y[:, -1]
        assert yf[1] == pytest.approx(600.0, abs=1e-3)   # v_t -> e
        assert yf[0] == pytest.approx(0.0, abs=1e-3)     # i_l -> 0
        assert yf[2] == pytest.approx(0.0, abs=1e-3)     # line current -> 0
