import math

import numpy as np
import pytest

from nvsense import imaging


def test_acquisition_times():
    assert imaging.acquisition_time(20, 0.01) == pytest.approx(4.0)
    assert imaging.acquisition_time(20, 0.1) == pytest.approx(40.0)
    assert imaging.acquisition_time((1, 1), 1.0) == 1.0


def test_empty_membrane_is_binomial_noise(cfg3):
    img = imaging.scan(cfg3, channels=(), dwell=0.1, seed=0)
    p = img.reference
    assert np.all(img.expected == pytest.approx(p))
    assert img.estimates.std(ddof=1) == pytest.approx(math.sqrt(p * (1 - p) / img.n_samples), rel=0.15)


def test_sample_count_is_uniform(cfg3):
    img = imaging.scan(cfg3, dwell=0.1, seed=0)
    f_m = 1 / (cfg3.probe.tau + cfg3.probe.tau_m + cfg3.probe.tau_2pi)
    assert img.n_samples == math.floor(0.1 * f_m)
    assert np.all((img.estimates >= 0) & (img.estimates <= 1))


def test_dwell_shorter_than_a_cycle(cfg3):
    with pytest.raises(ValueError, match="shorter than one cycle"):
        imaging.scan(cfg3, dwell=1e-5)


def test_noise_free_minimum_sits_on_the_channel(cfg3):
    img = imaging.scan(cfg3, channels=((2e-9, -3e-9),), dwell=0.1)
    row, col = np.unravel_index(np.argmin(img.expected), img.shape)
    assert (row, col) == imaging.channel_pixel(img, (2e-9, -3e-9))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_measured_minimum_near_channel(cfg3, seed):
    img = imaging.scan(cfg3, dwell=0.1, seed=seed)
    row, col = np.unravel_index(np.argmin(img.estimates), img.shape)
    r0, c0 = imaging.channel_pixel(img, (0.0, 0.0))
    assert max(abs(row - r0), abs(col - c0)) <= 1


def test_repeated_scans_have_binomial_variance(cfg3):
    stack = np.array([imaging.scan(cfg3, dwell=0.02, seed=s).estimates for s in range(60)])
    n = imaging.scan(cfg3, dwell=0.02).n_samples
    assert n >= 100
    p = imaging.scan(cfg3, dwell=0.02).expected
    ratio = stack.var(axis=0, ddof=1).mean() / (p * (1 - p) / n).mean()
    assert ratio == pytest.approx(1.0, rel=0.25)


def test_scan_is_seed_deterministic(cfg3):
    a = imaging.scan(cfg3, dwell=0.01, seed=5)
    b = imaging.scan(cfg3, dwell=0.01, seed=5)
    assert a.counts.tobytes() == b.counts.tobytes()


def test_point_spread_peaks_at_zero_offset(cfg3):
    d = np.linspace(0, 20e-9, 81)
    prof = imaging.point_spread_profile(3e-9, d, cfg3)
    assert np.argmax(prof) == 0
    assert np.all(np.diff(prof) <= 0)


def test_point_spread_tail_is_inverse_sixth_power(cfg3):
    d = np.linspace(12e-9, 30e-9, 60)
    prof = imaging.point_spread_profile(3e-9, d, cfg3)
    slope = np.polyfit(np.log(np.hypot(3e-9, d)), np.log(prof), 1)[0]
    assert slope == pytest.approx(-6, abs=0.3)


def test_point_spread_width_grows_with_standoff(cfg3):
    d = np.linspace(0, 40e-9, 2001)
    widths = [imaging.profile_fwhm(d, imaging.point_spread_profile(h, d, cfg3))
              for h in (3e-9, 4e-9, 5e-9, 6e-9, 8e-9, 10e-9)]
    assert np.all(np.diff(widths) > 0)


def test_pgm_round_trip(tmp_path):
    values = np.arange(12, dtype=float).reshape(3, 4)
    imaging.write_pgm(tmp_path / "a.pgm", values)
    back = imaging.read_pgm(tmp_path / "a.pgm")
    assert back.shape == (3, 4)
    assert back.min() == 0 and back.max() == 65535
    assert (tmp_path / "a.pgm").read_text().startswith("P2\n4 3\n65535\n")
