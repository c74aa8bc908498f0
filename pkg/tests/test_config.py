import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from droopgrid.config import (
    OMEGA_N, ConfigError, InverterParams, LineParams, MicrogridConfig, PRESET_LINES,
    parse_config, preset_config, preset_name, serialize_config,
)


def test_empty_config_gives_defaults():
    cfg = parse_config("")
    assert cfg == MicrogridConfig()
    assert cfg.line == PRESET_LINES["rx-eq1"]
    inv = cfg.inverter_i
    assert (inv.k_p, inv.k_q, inv.tau, inv.V_n) == (6e-5, 1.5e-4, 31.8e-3, 311.0)
    assert (inv.K_PV, inv.K_IV, inv.K_PC, inv.K_IC) == (5.0, 10.0, 5.0, 25.0)


def test_negative_gain_names_key():
    with pytest.raises(ConfigError, match="k_p"):
        parse_config("[inverter_i]\nk_p = -1\n")


def test_nonpositive_parameter_rejected():
    with pytest.raises(ConfigError, match="R_ik"):
        parse_config("[line]\nR_ik = 0\n")
    with pytest.raises(ConfigError, match="L_f"):
        InverterParams(L_f=-1e-3)


def test_zero_droop_gain_allowed():
    assert InverterParams(k_p=0.0, k_q=0.0).k_p == 0.0


def test_unknown_key_lists_valid_keys():
    with pytest.raises(ConfigError) as err:
        parse_config("[line]\nX = 1\n")
    assert "R_ik" in str(err.value) and "L_ik" in str(err.value)


def test_unknown_section_and_bad_number():
    with pytest.raises(ConfigError, match="section"):
        parse_config("[grid]\nx = 1\n")
    with pytest.raises(ConfigError, match="tau"):
        parse_config("[inverter_k]\ntau = fast\n")


def test_partial_override_keeps_other_defaults():
    cfg = parse_config("[inverter_k]\nk_p = 2e-4\n[load_k]\nR_l = 30\n")
    assert cfg.inverter_k.k_p == 2e-4
    assert cfg.inverter_i.k_p == 6e-5
    assert cfg.load_k.R_l == 30.0 and cfg.load_k.L_l == 40e-3


@pytest.mark.parametrize("name, ratio", [("rx-gg1", 7.85), ("rx-eq1", 1.02), ("rx-ll1", 0.182)])
def test_preset_rx_ratios(name, ratio):
    assert PRESET_LINES[name].rx_ratio(OMEGA_N) == pytest.approx(ratio, rel=0.01)


def test_preset_values_and_aliases():
    assert preset_config("RXgg1").line == LineParams(0.641, 0.26e-3)
    assert preset_config("RXll1").line == LineParams(0.4, 7e-3)
    assert preset_name("RXeq1") == "rx-eq1"
    with pytest.raises(ConfigError):
        preset_name("rx-huge")


def test_line_reactance_and_equal_r_x():
    line = LineParams(0.195, 0.61e-3)
    assert line.reactance(OMEGA_N) == pytest.approx(0.1916, abs=1e-4)
    x = line.reactance(OMEGA_N)
    # R = X removes the first-order conductance correction
    assert LineParams(x, 0.61e-3).sub_conductance(OMEGA_N) == pytest.approx(0.0, abs=1e-15)
    assert PRESET_LINES["rx-ll1"].sub_conductance(OMEGA_N) < 0


def test_with_gains_sets_both_inverters():
    cfg = MicrogridConfig().with_gains(1e-3, 2e-4)
    assert cfg.inverter_i.k_p == cfg.inverter_k.k_p == 1e-3
    assert cfg.inverter_i.k_q == cfg.inverter_k.k_q == 2e-4


pos = st.floats(1e-6, 1e3, allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None)
@given(pos, pos, pos, st.floats(0.0, 1e-2), pos)
def test_serialize_round_trip(R_f, R_ik, L_l, k_p, tau):
    text = (f"[inverter_i]\nR_f = {R_f!r}\nk_p = {k_p!r}\n[inverter_k]\ntau = {tau!r}\n"
            f"[line]\nR_ik = {R_ik!r}\n[load_k]\nL_l = {L_l!r}\n")
    cfg = parse_config(text)
    again = parse_config(serialize_config(cfg))
    assert again == cfg
    assert serialize_config(again) == serialize_config(cfg)


def test_omega0_must_be_positive():
    with pytest.raises(ConfigError):
        MicrogridConfig(omega0=-1.0)
    assert math.isclose(MicrogridConfig().with_omega0(310.0).omega0, 310.0)
