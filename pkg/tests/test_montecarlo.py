import math

import numpy as np
import pytest

from nvsense import dephasing, montecarlo as mc, noise

GAMMA = 2.8e10


def test_zero_diffusion_leaves_positions(cfg4):
    c, e, _ = cfg4.as_tuple()
    bath = mc.lipid_bath(4e-9, e, c, mc.trajectory_rng(0, 0), n_particles=50)
    frozen = mc.DipoleBath(bath.kind, bath.positions, bath.moments, bath.box_lo, bath.box_hi, 0.0, bath.axes)
    moved = mc.step_bath(frozen, 1e-9, mc.trajectory_rng(0, 1))
    np.testing.assert_array_equal(moved.positions, bath.positions)


def test_closed_channel_has_no_arrivals():
    arrivals = mc.channel_events(2e6, 1e-3, mc.trajectory_rng(0, 0), open_=False)
    assert len(arrivals.times) == 0


def test_closed_channel_trace_is_silent(cfg4):
    trace = mc.channel_trace(4e-9, cfg4.environment, 1e-4, 1e-8, mc.trajectory_rng(0, 0), open_=False)
    assert not trace.samples.any()


def test_arrival_count_is_poisson(cfg4):
    rate = mc.channel_rate(cfg4.environment)
    counts = [len(mc.channel_events(rate, 1e-4, mc.trajectory_rng(3, i)).times) for i in range(400)]
    assert np.mean(counts) == pytest.approx(rate * 1e-4, rel=0.05)
    assert np.var(counts) == pytest.approx(rate * 1e-4, rel=0.2)


def test_on_axis_dipole_field():
    m, h = 1e-26, 4e-9
    b = mc.field_at_probe([[0.0, 0.0, -h]], [[0.0, 0.0, m]])
    assert b == pytest.approx(1e-7 * 2 * m / h**3, rel=1e-12)


def test_empty_bath_gives_zero():
    assert mc.field_at_probe(np.empty((0, 3)), np.empty((0, 3))) == 0.0


def test_constant_trace_has_no_echo_phase():
    trace = mc.FieldTrace(1e-8, np.full(1000, 3.7e-6))
    phi = mc.echo_phase(trace, 1e-5, GAMMA)
    assert abs(phi) <= 1e-12 * 2 * math.pi * GAMMA * 3.7e-6 * 1e-5


def test_step_field_phase():
    dt, tau, b = 1e-8, 1e-5, 2e-7
    n = int(round(tau / dt))
    samples = np.where(np.arange(n) < n // 2, b, 0.0)
    phi = mc.echo_phase(mc.FieldTrace(dt, samples), tau, GAMMA)
    assert phi == pytest.approx(2 * math.pi * GAMMA * b * tau / 2, rel=1e-12)


def test_linear_drift_phase():
    # held samples of a*t at their interval midpoints integrate a*t exactly
    dt, tau, a = 1e-8, 1e-5, 1e-2
    n = int(round(tau / dt))
    samples = a * (np.arange(n) + 0.5) * dt
    phi = mc.echo_phase(mc.FieldTrace(dt, samples), tau, GAMMA)
    assert phi == pytest.approx(-2 * math.pi * GAMMA * a * tau**2 / 4, rel=1e-9)


def test_short_trace_is_rejected():
    with pytest.raises(mc.TraceTooShort):
        mc.echo_phase(mc.FieldTrace(1e-8, np.zeros(10)), 1e-6, GAMMA)


def test_ou_samples_statistics():
    x = mc.ou_samples(2.0, 1e3, 1e-4, 400_000, mc.trajectory_rng(1, 0))
    assert x.std() == pytest.approx(2.0, rel=0.02)
    lag = 10  # rho = exp(-1e3 * 1e-3)
    assert np.corrcoef(x[:-lag], x[lag:])[0, 1] == pytest.approx(math.exp(-1.0), abs=0.02)


def test_zero_field_gives_full_coherence():
    res = mc.ensemble_envelope(mc.ZeroSource(), np.linspace(1e-6, 1e-4, 5), 10, 0, GAMMA)
    np.testing.assert_array_equal(res.D, 1.0)


@pytest.mark.parametrize("theta", [0.1, 1.0, 10.0])
def test_ou_ensemble_matches_closed_form(theta):
    sigma, f_e = f_e_sigma(theta)
    taus = np.linspace(1, 20, 20) / 20 * t_for_chi(sigma, f_e, 3.0)
    res = mc.ensemble_envelope(mc.OUSource(sigma, f_e), taus, 1000, 1, GAMMA)
    exact = dephasing.crossover_envelope(sigma, f_e, taus, 2 * math.pi * GAMMA)
    assert np.all(np.abs(res.D - exact) <= 3 * res.stderr + 1e-12)


def test_ensemble_needs_two_trajectories():
    with pytest.raises(ValueError):
        mc.ensemble_envelope(mc.ZeroSource(), [1e-6], 1, 0, GAMMA)


def test_thread_count_does_not_change_result():
    sigma, f_e = f_e_sigma(1.0)
    taus = np.linspace(1e-6, 1e-4, 7)
    one = mc.ensemble_envelope(mc.OUSource(sigma, f_e), taus, 64, 5, GAMMA, threads=1)
    four = mc.ensemble_envelope(mc.OUSource(sigma, f_e), taus, 64, 5, GAMMA, threads=4)
    assert one.D.tobytes() == four.D.tobytes()
    assert one.stderr.tobytes() == four.stderr.tobytes()


def test_bath_msd_follows_einstein(cfg4):
    c, e, _ = cfg4.as_tuple()
    bath = mc.water_bath(4e-9, e, c, mc.trajectory_rng(2, 0), n_particles=5000)
    bath = bath.__class__(**{**bath.__dict__, "reflect_radius": 0.0})
    rng = mc.trajectory_rng(2, 1)
    for _ in range(50):
        bath = mc.step_bath(bath, 1e-10, rng)
    msd = np.mean(np.sum(bath.displacement**2, axis=1))
    assert msd == pytest.approx(6 * e.D_H2O * 50 * 1e-10, rel=0.05)


def test_lipid_bath_stays_in_its_slab(cfg4):
    c, e, _ = cfg4.as_tuple()
    bath = mc.lipid_bath(4e-9, e, c, mc.trajectory_rng(0, 0), n_particles=200)
    z0 = bath.positions[:, 2].copy()
    bath = mc.step_bath(bath, 1e-3, mc.trajectory_rng(0, 1))
    np.testing.assert_array_equal(bath.positions[:, 2], z0)
    assert np.all(bath.positions[:, :2] >= bath.box_lo[:2]) and np.all(bath.positions[:, :2] < bath.box_hi[:2])


def test_water_stays_outside_the_crystal(cfg4):
    c, e, _ = cfg4.as_tuple()
    bath = mc.water_bath(4e-9, e, c, mc.trajectory_rng(0, 0), n_particles=2000)
    rng = mc.trajectory_rng(0, 1)
    for _ in range(20):
        bath = mc.step_bath(bath, 1e-9, rng)
        assert np.linalg.norm(bath.positions, axis=1).min() >= 4e-9 * (1 - 1e-12)


def test_water_bath_echo_rate_against_fast_fluctuation_rate(cfg4):
    c, e, _ = cfg4.as_tuple()
    rng = mc.trajectory_rng(0, 0)
    bath = mc.water_bath(4e-9, e, c, rng, n_particles=4000)
    trace, _ = mc.bath_trace(bath, 1e-9, 20000, rng)
    fitted = mc.fit_echo_rate(trace, np.arange(5, 21) * 1e-7, c.gamma_p)
    spec = noise.source_spec("water", c, e, 4e-9)
    expected = dephasing.ffl_rate(spec.f_e, spec.theta)
    assert expected / 3 <= fitted <= 3 * expected, f"fitted {fitted:.4g} Hz vs analytic {expected:.4g} Hz"


def f_e_sigma(theta, f_e=3e4):
    """OU parameters with the given Theta in the physical (2 pi gamma) convention."""
    return f_e / (2 * math.pi * GAMMA * theta), f_e


def t_for_chi(sigma, f_e, chi):
    from scipy.optimize import brentq

    return brentq(lambda t: dephasing.crossover_exponent(sigma, f_e, t, 2 * math.pi * GAMMA) - chi, 0, 1.0)
