import math

import numpy as np
import pytest

from nvsense import dephasing, noise, params
from nvsense.dephasing import RegimeError

GAMMA = 2.8e10


def test_water_rate_at_4nm(cfg4):
    spec = noise.source_spec("water", *cfg4.as_tuple()[:2], 4e-9)
    rate = dephasing.ffl_rate(spec.f_e, spec.theta)
    assert 30 <= rate <= 300
    # hand chain: f_e = D/(2h)^2, sigma from the half-space water formula, rate (gamma sigma)^2 / f_e
    mu_p = 2.7928473446 * 5.0507837461e-27
    sigma = mu_p * 2e-7 * math.sqrt(0.75 * 3.3e28 * math.pi / (4e-9) ** 3)
    assert rate == pytest.approx((GAMMA * sigma) ** 2 / (3e-9 / (8e-9) ** 2), rel=1e-6)


def test_electrolyte_rate_is_negligible(cfg4):
    spec = noise.source_spec("electrolyte", *cfg4.as_tuple()[:2], 4e-9)
    rate = dephasing.ffl_rate(spec.f_e, spec.theta)
    assert rate <= 0.1
    assert rate == pytest.approx(spec.f_e / spec.theta**2)


def test_ffl_refuses_crossover_theta():
    with pytest.raises(RegimeError, match="crossover"):
        dephasing.ffl_rate(3e4, 1.0)


def test_sfl_refuses_large_theta():
    with pytest.raises(RegimeError):
        dephasing.sfl_lipid_rate(125.0, 1.0)


def test_sfl_rate_hand_value():
    assert dephasing.sfl_lipid_rate(125.0, 1e-4) == pytest.approx(125 / (2 * math.sqrt(2 * math.sqrt(2)) * 1e-2))


def test_lipid_rate_at_4nm(cfg4):
    spec = noise.source_spec("lipid", *cfg4.as_tuple()[:2], 4e-9)
    assert 30 <= dephasing.sfl_lipid_rate(spec.f_e, spec.theta) <= 300


def test_crossover_starts_at_one():
    assert dephasing.crossover_envelope(1e-7, 3e4, 0.0, GAMMA) == 1.0


@pytest.mark.parametrize("sigma,f_e", [(1e-7, 3e4), (3e-6, 4.7e7), (1e-9, 1e3)])
def test_crossover_fast_limit(sigma, f_e):
    t = 1e4 / f_e
    chi = dephasing.crossover_exponent(sigma, f_e, t, GAMMA)
    theta = f_e / (GAMMA * sigma)
    assert chi == pytest.approx(f_e / theta**2 * t, rel=1e-3)


@pytest.mark.parametrize("sigma,f_e", [(1e-7, 3e4), (1e-6, 5.0)])
def test_crossover_slow_limit(sigma, f_e):
    t = 1e-4 / f_e
    chi = dephasing.crossover_exponent(sigma, f_e, t, GAMMA)
    assert chi == pytest.approx((GAMMA * sigma) ** 2 * f_e * t**3 / 12, rel=1e-3)


def test_echo_bracket_series_matches_direct_form_at_switch():
    x = 0.05
    direct = x - 3 + 4 * math.exp(-x / 2) - math.exp(-x)
    assert dephasing._echo_bracket(np.array([x * (1 - 1e-12)]))[0] == pytest.approx(direct, rel=1e-9)


def test_implied_channel_rate_over_2_to_4_nm(cfg3):
    rates = {}
    for h in (2e-9, 2.5e-9, 3e-9, 3.5e-9, 4e-9):
        env = dephasing.envelopes_for(cfg3, h_p=h)
        T2 = cfg3.probe.T2
        rates[h] = float(env.channels[0].exponent_at(T2 / 2)) * 2 / T2
    outside = {h: r for h, r in rates.items() if not 1e4 <= r <= 1e5}
    assert not outside, f"implied rates outside [1e4, 1e5] Hz: {outside}"


def test_populations_at_3nm(cfg3):
    env = dephasing.envelopes_for(cfg3)
    half = cfg3.probe.T2 / 2
    assert 2 * env.p_off(half) - 1 == pytest.approx(0.86, abs=0.06)
    assert env.p_off(half) == pytest.approx(0.93, abs=0.03)
    assert env.p_on(half) == pytest.approx(0.61, abs=0.05)
    assert env.off(0.0) == 1.0 and env.on(0.0) == 1.0


def test_population_map():
    assert dephasing.population(1.0) == 1.0
    assert dephasing.population(0.0) == 0.5
    assert dephasing.population(0.22) == pytest.approx(0.61)


def test_silent_channel_leaves_off_envelope():
    cfg = params.config_from_dict({"probe": {"h_p": 3e-9}, "environment": {"N_ion": 0, "N_H2O": 0}})
    env = dephasing.envelopes_for(cfg)
    t = np.linspace(0, 3e-4, 50)
    np.testing.assert_array_equal(env.on(t), env.off(t))


def test_contrast_vanishes_at_both_ends(cfg3):
    cfg = cfg3.with_probe(T2=1.0)
    env = dephasing.envelopes_for(cfg)
    assert env.contrast(1e-12) < 1e-12
    assert env.contrast(0.2) < 1e-6  # backgrounds (~200 Hz) have long killed the coherence
    t = np.geomspace(1e-7, 0.2, 400)
    k = np.argmax(env.contrast(t))
    assert 0 < k < len(t) - 1


def test_table_columns(cfg4):
    table = dephasing.envelopes_for(cfg4).table(np.linspace(0, 3e-4, 5))
    assert list(table) == ["t", "D_H2O", "D_L", "D_E", "D_13C", "D_ic", "D_off", "D_on", "P_off", "P_on"]
    np.testing.assert_allclose(table["D_on"], table["D_off"] * table["D_ic"])


def test_lateral_offset_weakens_channel(cfg3):
    near = dephasing.envelopes_for(cfg3, lateral_offsets=(0.0,)).contrast(1.5e-4)
    far = dephasing.envelopes_for(cfg3, lateral_offsets=(5e-9,)).contrast(1.5e-4)
    assert far < near
