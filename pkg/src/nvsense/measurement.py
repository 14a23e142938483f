"""Optical readout records and switch-detection analytics.

A record holds one binary outcome per echo cycle (1 = ground state
detected).  The channel state is sampled at each cycle's midpoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal


def cycle_rate(tau, tau_m, tau_2pi):
    """Maximum measurement rate 1 / (tau + tau_m + tau_2pi)."""
    if tau <= 0 or tau_m < 0 or tau_2pi < 0:
        raise ValueError("need tau > 0 and tau_m, tau_2pi >= 0")
    return 1.0 / (tau + tau_m + tau_2pi)


@dataclass(frozen=True)
class SwitchTimeline:
    times: np.ndarray  # switch instants, strictly increasing
    initial_on: bool = False
    mean_wait: float = 5e-3

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if np.any(np.diff(t) <= 0):
            raise ValueError("switch times must be strictly increasing")
        object.__setattr__(self, "times", t)

    def state_at(self, t) -> np.ndarray:
        """True where the channel is open."""
        n_before = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right")
        return (n_before % 2 == 1) ^ self.initial_on

    def states_after(self) -> np.ndarray:
        """State entered at each switch."""
        return (np.arange(1, len(self.times) + 1) % 2 == 1) ^ self.initial_on


def telegraph_timeline(duration: float, mean_wait: float, rng: np.random.Generator,
                       initial_on: bool = False, shape: float = 1.0) -> SwitchTimeline:
    """Two-state switching with gamma-distributed waits (shape 1 is the Markov case)."""
    times = []
    t = 0.0
    while True:
        t += rng.gamma(shape, mean_wait / shape)
        if t >= duration:
            break
        times.append(t)
    return SwitchTimeline(np.array(times), initial_on, mean_wait)


@dataclass(frozen=True)
class MeasurementRecord:
    period: float
    outcomes: np.ndarray  # uint8, 1 = ground state
    truth: np.ndarray  # bool, channel open during the cycle

    @property
    def times(self) -> np.ndarray:
        return (np.arange(len(self.outcomes)) + 0.5) * self.period

    @property
    def f_m(self) -> float:
        return 1.0 / self.period


def synthesize_record(timeline: SwitchTimeline, p_on: float, p_off: float, duration: float,
                      f_m: float, rng: np.random.Generator) -> MeasurementRecord:
    """One Bernoulli readout per cycle with the population set by the channel state."""
    for p in (p_on, p_off):
        if not 0.5 <= p <= 1.0:
            raise ValueError(f"population {p} outside [0.5, 1]")
    period = 1.0 / f_m
    n = int(math.floor(duration * f_m + 1e-9))
    mid = (np.arange(n) + 0.5) * period
    truth = timeline.state_at(mid)
    p = np.where(truth, p_on, p_off)
    outcomes = (rng.random(n) < p).astype(np.uint8)
    return MeasurementRecord(period, outcomes, truth)


@dataclass(frozen=True)
class Smoothed:
    values: np.ndarray
    times: np.ndarray  # window centres
    n_tau: int
    period: float

    @property
    def lag(self) -> float:
        return self.n_tau * self.period


def running_average(record: MeasurementRecord | np.ndarray, n_tau: int,
                    period: float | None = None) -> Smoothed:
    """Centred moving mean over ``n_tau`` cycles; the incomplete edges are dropped."""
    if isinstance(record, MeasurementRecord):
        x, period = record.outcomes.astype(float), record.period
    else:
        x = np.asarray(record, dtype=float)
        period = 1.0 if period is None else period
    if n_tau < 1:
        raise ValueError("n_tau must be >= 1")
    if n_tau > len(x):
        raise ValueError(f"n_tau={n_tau} exceeds record length {len(x)}")
    c = np.concatenate(([0.0], np.cumsum(x)))
    values = (c[n_tau:] - c[:-n_tau]) / n_tau
    first_centre = 0.5 * n_tau * period  # cycle k spans [k, k+1) periods
    times = first_centre + period * np.arange(len(values))
    return Smoothed(values, times, n_tau, period)


@dataclass(frozen=True)
class Detection:
    times: np.ndarray  # when each crossing becomes known (window end)
    states: np.ndarray  # True = channel judged open after the crossing
    threshold: float
    latencies: np.ndarray | None = None  # per matched true event
    missed: int = 0

    def timeline(self, initial_on: bool = False) -> SwitchTimeline:
        return SwitchTimeline(self.times, initial_on)


def detect_switches(smoothed: Smoothed, threshold: float,
                    truth: SwitchTimeline | None = None) -> Detection:
    """Threshold crossings of the smoothed population; below threshold means open."""
    if not 0.5 < threshold < 1.0:
        raise ValueError(f"threshold {threshold} outside (0.5, 1)")
    v = smoothed.values
    open_ = v < threshold
    idx = np.flatnonzero(open_[1:] != open_[:-1]) + 1
    # linear interpolation of the crossing between samples idx-1 and idx
    v0, v1 = v[idx - 1], v[idx]
    frac = np.where(v1 != v0, (threshold - v0) / np.where(v1 != v0, v1 - v0, 1.0), 1.0)
    centre = smoothed.times[idx - 1] + frac * smoothed.period
    known = centre + 0.5 * smoothed.lag
    states = open_[idx]
    latencies, missed = None, 0
    if truth is not None:
        latencies, missed = _match(known, states, truth, smoothed.times[-1] + 0.5 * smoothed.lag,
                                   smoothed.lag)
    return Detection(known, states, threshold, latencies, missed)


def _match(known, states, truth: SwitchTimeline, t_end, slack):
    """Delay from each true switch to the first same-direction detection after it.

    A detection still counts if it lands within ``slack`` after the next
    true switch; later than that the event is counted as missed.
    """
    lat = []
    missed = 0
    true_states = truth.states_after()
    bounds = np.append(truth.times, np.inf)
    for i, (t0, s) in enumerate(zip(truth.times, true_states)):
        if t0 >= t_end:
            break
        ok = (known >= t0) & (known < bounds[i + 1] + slack) & (states == s)
        hits = known[ok]
        if len(hits):
            lat.append(hits[0] - t0)
        else:
            missed += 1
    return np.array(lat), missed


def power_spectrum(x, fs: float, segment: float | None = None):
    """One-sided, mean-removed power spectrum.

    With ``segment`` (seconds) the periodogram is Welch-averaged over
    half-overlapping Hann windows of that length.
    """
    x = np.asarray(x, dtype=float)
    if len(x) < 64:
        raise ValueError("need at least 64 samples")
    if segment is None:
        return signal.periodogram(x, fs=fs, detrend="constant", scaling="density")
    nperseg = min(len(x), max(64, int(round(segment * fs))))
    return signal.welch(x, fs=fs, nperseg=nperseg, detrend="constant", scaling="density")


@dataclass(frozen=True)
class SpectralPeak:
    dominant: float  # frequency of the largest non-DC bin
    band_peak: float  # frequency of the largest bin inside the band
    ratio: float  # band peak power over the median non-DC power


def spectral_peak(freq, power, target: float, tol: float) -> SpectralPeak:
    freq, power = np.asarray(freq), np.asarray(power)
    nz = freq > 0
    f, p = freq[nz], power[nz]
    floor = np.median(p)
    band = np.abs(f - target) <= tol
    k = np.argmax(np.where(band, p, -np.inf))
    return SpectralPeak(float(f[np.argmax(p)]), float(f[k]), float(p[k] / floor))


@dataclass(frozen=True)
class MonitorRun:
    timeline: SwitchTimeline
    record: MeasurementRecord
    smoothed: Smoothed
    detection: Detection
    freq: np.ndarray
    power: np.ndarray
    peak: SpectralPeak
    p_on: float
    p_off: float


def simulate_monitoring(config, h_p: float | None = None, duration: float | None = None,
                        n_tau: int | None = None, seed: int | None = None, tau: float | None = None,
                        segment: float = 0.1, target: float | None = None) -> MonitorRun:
    """Switching channel, readout record, running average, detection and spectrum.

    The switching timeline and the readout draw from separate streams of
    ``seed``, so two standoffs run with one seed see the same channel.  The
    spectrum is taken of the raw outcomes, Welch-averaged over ``segment``
    seconds.
    """
    from .dephasing import envelopes_for
    from .montecarlo import trajectory_rng

    run, probe = config.run, config.probe
    h_p = probe.h_p if h_p is None else h_p
    duration = run.duration if duration is None else duration
    n_tau = run.n_tau if n_tau is None else n_tau
    seed = run.seed if seed is None else seed
    tau = probe.tau if tau is None else tau
    env = envelopes_for(config, h_p=h_p)
    p_on, p_off = float(env.p_on(tau)), float(env.p_off(tau))
    f_m = cycle_rate(tau, probe.tau_m, probe.tau_2pi)
    mean_wait = 1.0 / config.environment.switching_rate
    timeline = telegraph_timeline(duration, mean_wait, trajectory_rng(seed, 0), shape=run.switch_shape)
    record = synthesize_record(timeline, p_on, p_off, duration, f_m, trajectory_rng(seed, 1))
    smoothed = running_average(record, n_tau)
    detection = detect_switches(smoothed, 0.5 * (p_on + p_off), timeline)
    freq, power = power_spectrum(record.outcomes, f_m, segment)
    target = 0.5 * config.environment.switching_rate if target is None else target
    peak = spectral_peak(freq, power, target, 0.1 * target)
    return MonitorRun(timeline, record, smoothed, detection, freq, power, peak, p_on, p_off)
