import math

import numpy as np
from hypothesis import given, settings, strategies as st

from nvsense import dephasing, measurement as ms, montecarlo as mc, noise, params, planner

GAMMA = 2.8e10
heights = st.floats(2e-9, 10e-9)


@settings(max_examples=40, deadline=None)
@given(h=heights, T2=st.floats(1e-5, 1e-2))
def test_envelopes_are_bounded_and_decreasing(h, T2):
    env = dephasing.envelopes_for(params.default_config(h, T2=T2))
    t = np.linspace(0, T2, 200)
    for d in (env.off(t), env.on(t)):
        assert np.all((d >= 0) & (d <= 1))
        assert np.all(np.diff(d) <= 1e-15)
    assert np.all(env.on(t) <= env.off(t) + 1e-15)


@given(d=st.floats(0, 1))
def test_population_maps_into_upper_half(d):
    p = dephasing.population(d)
    assert 0.5 <= p <= 1.0
    assert math.isclose(2 * p - 1, d, abs_tol=1e-15)


@settings(max_examples=30, deadline=None)
@given(b=st.floats(-1e-4, 1e-4), n=st.integers(2, 500))
def test_echo_cancels_static_fields(b, n):
    dt = 1e-8
    trace = mc.FieldTrace(dt, np.full(2 * n, b))
    phi = mc.echo_phase(trace, 2 * n * dt, GAMMA)
    assert abs(phi) <= 1e-12 * max(2 * math.pi * GAMMA * abs(b) * 2 * n * dt, 1e-300)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), threads=st.integers(2, 6))
def test_ensemble_is_thread_count_invariant(seed, threads):
    taus = np.array([1e-6, 1e-5, 5e-5])
    src = mc.OUSource(5e-7, 3e4)
    a = mc.ensemble_envelope(src, taus, 24, seed, GAMMA, threads=1)
    b = mc.ensemble_envelope(src, taus, 24, seed, GAMMA, threads=threads)
    assert a.D.tobytes() == b.D.tobytes()


@settings(max_examples=30, deadline=None)
@given(n=st.integers(4, 64))
def test_resolution_noise_budget(n):
    # a window of N cycles with contrast 1/sqrt(N) resolves in about N cycles
    delta_p = 1 / math.sqrt(n)
    tau, tau_m = 1e-4, 1e-6
    dt = planner.resolution_bound(tau, delta_p, tau_m)
    assert math.isclose(delta_p * math.sqrt(planner.n_cycles(dt, tau, tau_m)), 1.0, rel_tol=0.2)


@settings(max_examples=40, deadline=None)
@given(f=st.floats(1.0, 1e9), sigma=st.floats(1e-12, 1e-3), k=st.floats(0.1, 10))
def test_theta_scaling(f, sigma, k):
    base = noise.theta(f, sigma, GAMMA)
    assert math.isclose(noise.theta(k * f, sigma, GAMMA), k * base, rel_tol=1e-12)
    assert math.isclose(noise.theta(f, k * sigma, GAMMA), base / k, rel_tol=1e-12)


@settings(max_examples=40, deadline=None)
@given(x=st.lists(st.floats(0, 1), min_size=2, max_size=200), data=st.data())
def test_running_average_stays_within_record_range(x, data):
    n = data.draw(st.integers(1, len(x)))
    arr = np.array(x)
    sm = ms.running_average(arr, n)
    assert len(sm.values) == len(arr) - n + 1
    assert np.all(sm.values >= arr.min() - 1e-12) and np.all(sm.values <= arr.max() + 1e-12)


@settings(max_examples=30, deadline=None)
@given(h=heights, N_ion=st.integers(0, 20), seed=st.integers(0, 1000))
def test_config_round_trip(h, N_ion, seed):
    cfg = params.config_from_dict({"probe": {"h_p": h}, "environment": {"N_ion": N_ion},
                                   "run": {"seed": seed}})
    again = params.config_from_dict(params.config_to_dict(cfg))
    assert again == cfg
    assert params.config_hash(again) == params.config_hash(cfg)


@settings(max_examples=30, deadline=None)
@given(h1=heights, h2=heights)
def test_channel_field_falls_with_distance(h1, h2):
    e = params.EnvironmentConfig()
    lo, hi = sorted((h1, h2))
    args = (e.N_ion, e.N_H2O, e.mu_ion, e.mu_H2O)
    assert noise.sigma_ion_channel(hi, *args) <= noise.sigma_ion_channel(lo, *args)
