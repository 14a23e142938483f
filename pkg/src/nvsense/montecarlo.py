"""Brownian-dynamics field traces and Monte Carlo spin-echo envelopes.

The probe sits at the origin.  Water fills a periodic cube around it with
the nanocrystal (radius h_p) excluded from the field sum, lipid hydrogens
diffuse laterally in a slab starting h_p below the probe, and channel ions
cross the membrane directly underneath it.

Every trajectory draws from its own counter-derived stream
(``SeedSequence(seed, spawn_key=(i,))``) so results do not depend on how
trajectories are distributed over threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import lfilter

from . import noise
from .params import EnvironmentConfig, PhysicalConstants

R_MIN = 0.15e-9  # exclusion radius around the probe
LIPID_SLAB = 4e-9  # bilayer thickness
CHANNEL_LENGTH = 4e-9


class TraceTooShort(ValueError):
    pass


@dataclass(frozen=True)
class FieldTrace:
    dt: float
    samples: np.ndarray
    label: str = ""

    @property
    def duration(self) -> float:
        return self.dt * len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.samples))


@dataclass(frozen=True)
class DipoleBath:
    kind: str
    positions: np.ndarray  # (N, 3) wrapped into the box
    moments: np.ndarray  # (N, 3), J/T, fixed orientation
    box_lo: np.ndarray
    box_hi: np.ndarray
    diffusion: float
    axes: tuple[int, ...]  # axes along which particles diffuse
    exclusion_radius: float = R_MIN
    displacement: np.ndarray | None = None  # unwrapped cumulative displacement
    reflect_radius: float = 0.0  # impenetrable sphere around the probe (nanocrystal)

    @property
    def n(self) -> int:
        return len(self.positions)


def random_unit_vectors(n: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _coarse_count(n_phys: float, n_particles: int | None) -> tuple[int, float]:
    """Particle count and the moment scale that keeps n * m^2 (the field variance) fixed."""
    n_real = max(int(round(n_phys)), 1)
    if n_particles is None or n_particles >= n_real:
        return n_real, 1.0
    return n_particles, math.sqrt(n_phys / n_particles)


def water_bath(h_p: float, env: EnvironmentConfig, constants: PhysicalConstants,
               rng: np.random.Generator, n_particles: int | None = None,
               box: float | None = None) -> DipoleBath:
    """Ortho-water bath in a periodic cube of side ``box`` (default 8 h_p)."""
    box = 8.0 * h_p if box is None else box
    n, scale = _coarse_count(env.water_ortho_density * box**3, n_particles)
    # spin-1 pair of protons: <m_z^2> = (8/3) mu_p^2, i.e. |m| = 2 sqrt(2) mu_p
    magnitude = 2.0 * math.sqrt(2.0) * constants.proton_moment * scale
    half = 0.5 * box
    return DipoleBath(
        kind="water",
        positions=_reflect(rng.uniform(-half, half, size=(n, 3)), h_p),
        moments=magnitude * random_unit_vectors(n, rng),
        box_lo=np.full(3, -half),
        box_hi=np.full(3, half),
        diffusion=env.D_H2O,
        axes=(0, 1, 2),
        exclusion_radius=h_p,
        displacement=np.zeros((n, 3)),
        reflect_radius=h_p,
    )


def _reflect(pos: np.ndarray, radius: float) -> np.ndarray:
    """Mirror points inside the sphere radially through its surface."""
    if radius <= 0:
        return pos
    r = np.linalg.norm(pos, axis=1)
    inside = r < radius
    if inside.any():
        pos = pos.copy()
        ri = np.maximum(r[inside], 1e-30)
        # clamp so a point at the centre cannot be thrown past the box
        pos[inside] *= (np.minimum(2.0 * radius - ri, 2.0 * radius) / ri)[:, None]
    return pos


def lipid_bath(h_p: float, env: EnvironmentConfig, constants: PhysicalConstants,
               rng: np.random.Generator, n_particles: int | None = None,
               box: float | None = None) -> DipoleBath:
    """Lipid hydrogens in a slab below the probe, diffusing in-plane only."""
    box = 8.0 * h_p if box is None else box
    n, scale = _coarse_count(env.lipid_nH * box**2 * LIPID_SLAB, n_particles)
    # spin-1/2: <m_z^2> = mu_p^2
    magnitude = math.sqrt(3.0) * constants.proton_moment * scale
    half = 0.5 * box
    lo = np.array([-half, -half, -h_p - LIPID_SLAB])
    hi = np.array([half, half, -h_p])
    return DipoleBath(
        kind="lipid",
        positions=rng.uniform(lo, hi, size=(n, 3)),
        moments=magnitude * random_unit_vectors(n, rng),
        box_lo=lo,
        box_hi=hi,
        diffusion=env.D_L,
        axes=(0, 1),
        displacement=np.zeros((n, 3)),
    )


def step_bath(bath: DipoleBath, dt: float, rng: np.random.Generator) -> DipoleBath:
    """Advance every particle by an independent Gaussian step along its diffusing axes."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    step = np.zeros_like(bath.positions)
    axes = list(bath.axes)
    step[:, axes] = rng.normal(0.0, math.sqrt(2.0 * bath.diffusion * dt), size=(bath.n, len(axes)))
    size = bath.box_hi - bath.box_lo
    pos = bath.positions + step
    pos[:, axes] = bath.box_lo[axes] + np.mod(pos[:, axes] - bath.box_lo[axes], size[axes])
    pos = _reflect(pos, bath.reflect_radius)
    disp = None if bath.displacement is None else bath.displacement + step
    return replace(bath, positions=pos, displacement=disp)


def field_at_probe(positions, moments, probe=(0.0, 0.0, 0.0), r_min: float = R_MIN,
                   mu0_over_4pi: float = 1e-7) -> float:
    """z-component of the summed point-dipole field at ``probe``."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    moments = np.atleast_2d(np.asarray(moments, dtype=float))
    if positions.size == 0:
        return 0.0
    r = positions - np.asarray(probe, dtype=float)
    r2 = np.einsum("ij,ij->i", r, r)
    keep = r2 > r_min**2
    r, m, r2 = r[keep], moments[keep], r2[keep]
    inv_r3 = r2**-1.5
    mdotr = np.einsum("ij,ij->i", m, r)
    bz = (3.0 * mdotr * r[:, 2] / r2 - m[:, 2]) * inv_r3
    return float(mu0_over_4pi * bz.sum())


def bath_field(bath: DipoleBath, mu0_over_4pi: float = 1e-7) -> float:
    return field_at_probe(bath.positions, bath.moments, r_min=max(bath.exclusion_radius, R_MIN),
                          mu0_over_4pi=mu0_over_4pi)


def bath_trace(bath: DipoleBath, dt: float, n_steps: int, rng: np.random.Generator,
               mu0_over_4pi: float = 1e-7) -> tuple[FieldTrace, DipoleBath]:
    samples = np.empty(n_steps)
    for k in range(n_steps):
        samples[k] = bath_field(bath, mu0_over_4pi)
        bath = step_bath(bath, dt, rng)
    return FieldTrace(dt, samples, bath.kind), bath


@dataclass(frozen=True)
class ChannelArrivals:
    times: np.ndarray
    moments: np.ndarray  # (N, 3)
    transit_time: float


def channel_rate(env: EnvironmentConfig) -> float:
    """Raw ion arrival rate, flux times aperture area (s^-1)."""
    return env.ion_flux * env.channel_aperture**2


def channel_events(rate: float, duration: float, rng: np.random.Generator, open_: bool = True,
                   start: float = 0.0, transit_time: float = 1e-6,
                   moment_choices=((1.0, 1.0),)) -> ChannelArrivals:
    """Poisson arrivals in [start, start + duration) with frozen random spin orientations.

    ``moment_choices`` is a sequence of (weight, |moment|) pairs for the
    species entering the channel.
    """
    if not open_ or rate <= 0:
        return ChannelArrivals(np.empty(0), np.empty((0, 3)), transit_time)
    n = rng.poisson(rate * duration)
    times = np.sort(start + duration * rng.random(n))
    weights = np.array([w for w, _ in moment_choices], dtype=float)
    mags = np.array([m for _, m in moment_choices], dtype=float)
    species = rng.choice(len(mags), size=n, p=weights / weights.sum())
    moments = mags[species, None] * random_unit_vectors(n, rng)
    return ChannelArrivals(times, moments, transit_time)


def channel_trace(h_p: float, env: EnvironmentConfig, duration: float, dt: float,
                  rng: np.random.Generator, lateral=(0.0, 0.0), open_: bool = True,
                  mu0_over_4pi: float = 1e-7) -> FieldTrace:
    """Field from ions and bound water crossing the channel at constant speed."""
    n_steps = int(round(duration / dt))
    t = dt * np.arange(n_steps)
    transit = env.transit_time
    choices = ((env.N_ion, env.mu_ion), (env.N_H2O, env.mu_H2O))
    arrivals = channel_events(channel_rate(env), duration + transit, rng, open_,
                              start=-transit, transit_time=transit, moment_choices=choices)
    samples = np.zeros(n_steps)
    for t0, m in zip(arrivals.times, arrivals.moments):
        k0 = max(int(math.ceil(t0 / dt)), 0)
        k1 = min(int(math.ceil((t0 + transit) / dt)), n_steps)
        if k1 <= k0:
            continue
        frac = (t[k0:k1] - t0) / transit
        pos = np.zeros((k1 - k0, 3))
        pos[:, 0], pos[:, 1] = lateral
        pos[:, 2] = -h_p - CHANNEL_LENGTH * frac
        r2 = np.einsum("ij,ij->i", pos, pos)
        mdotr = pos @ m
        samples[k0:k1] += mu0_over_4pi * (3.0 * mdotr * pos[:, 2] / r2 - m[2]) * r2**-1.5
    return FieldTrace(dt, samples, "channel")


def ou_samples(sigma: float, f_e: float, dt: float, n_steps: int,
               rng: np.random.Generator) -> np.ndarray:
    """Stationary OU path with variance sigma^2 and correlation exp(-f_e |t|), exact AR(1)."""
    rho = math.exp(-f_e * dt)
    innov = rng.standard_normal(n_steps)
    innov[0] *= sigma
    innov[1:] *= sigma * math.sqrt(1.0 - rho * rho)
    return lfilter([1.0], [1.0, -rho], innov)


def echo_weights(dt: float, n_steps: int, taus) -> np.ndarray:
    """(n_steps, n_tau) matrix W with phase = coupling * trace @ W.

    Sample k holds over [k dt, (k+1) dt); W holds its overlap with the first
    half of the echo minus its overlap with the second half.
    """
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    lo = dt * np.arange(n_steps)[:, None]
    hi = lo + dt

    def overlap(a, b):
        return np.clip(np.minimum(hi, b) - np.maximum(lo, a), 0.0, None)

    return overlap(0.0, taus / 2) - overlap(taus / 2, taus)


def echo_phase(trace: FieldTrace, tau: float, gamma_p: float) -> float:
    """Hahn-echo phase 2 pi gamma_p [int_0^{tau/2} B - int_{tau/2}^{tau} B] (rad)."""
    if trace.duration < tau * (1 - 1e-12):
        raise TraceTooShort(f"trace lasts {trace.duration:.3g} s < tau = {tau:.3g} s")
    w = echo_weights(trace.dt, len(trace.samples), tau)[:, 0]
    return float(2.0 * math.pi * gamma_p * np.dot(w, trace.samples))


def echo_phase_samples(trace: FieldTrace, tau: float, gamma_p: float) -> np.ndarray:
    """Echo phases over consecutive non-overlapping windows of length tau."""
    n_win = int(round(tau / trace.dt))
    if n_win < 2 or len(trace.samples) < n_win:
        raise TraceTooShort("trace shorter than one echo window")
    w = echo_weights(trace.dt, n_win, n_win * trace.dt)[:, 0]
    blocks = trace.samples[: (len(trace.samples) // n_win) * n_win].reshape(-1, n_win)
    return 2.0 * math.pi * gamma_p * blocks @ w


# ----- field sources for ensemble averaging -------------------------------------------


@dataclass(frozen=True)
class OUSource:
    """Synthetic Gaussian OU field, generated directly rather than from particles."""

    sigma: float
    f_e: float

    @property
    def rate(self) -> float:
        return self.f_e

    def samples(self, dt, n_steps, rng):
        return ou_samples(self.sigma, self.f_e, dt, n_steps, rng)


@dataclass(frozen=True)
class ZeroSource:
    rate: float = 1e6

    def samples(self, dt, n_steps, rng):
        return np.zeros(n_steps)


@dataclass(frozen=True)
class BathSource:
    """Particle bath rebuilt from scratch for every trajectory."""

    kind: str
    h_p: float
    env: EnvironmentConfig
    constants: PhysicalConstants
    n_particles: int | None = 2000

    @property
    def rate(self) -> float:
        if self.kind == "channel":
            return noise.fluctuation_rate("ion-channel", self.env, self.h_p)
        if self.kind == "lipid":
            return noise.fluctuation_rate("lipid", self.env, self.h_p)
        return float(noise.fluctuation_rate("water", self.env, self.h_p))

    def samples(self, dt, n_steps, rng):
        if self.kind == "channel":
            return channel_trace(self.h_p, self.env, n_steps * dt, dt, rng).samples[:n_steps]
        build = water_bath if self.kind == "water" else lipid_bath
        bath = build(self.h_p, self.env, self.constants, rng, self.n_particles)
        trace, _ = bath_trace(bath, dt, n_steps, rng, self.constants.mu0_over_4pi)
        return trace.samples


@dataclass(frozen=True)
class EnsembleResult:
    tau: np.ndarray
    D: np.ndarray
    stderr: np.ndarray
    n_traj: int
    dt: float


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def default_dt(rate: float, tau_max: float) -> float:
    return min(1.0 / (20.0 * rate), tau_max / 200.0)


def ensemble_phases(source, tau_grid, n_traj: int, seed: int, gamma_p: float,
                    threads: int = 1, dt: float | None = None, offset: float = 0.0):
    """Echo phases, shape (n_traj, n_tau); trajectory i always uses stream i."""
    tau_grid = np.asarray(tau_grid, dtype=float)
    tau_max = float(tau_grid.max())
    dt = default_dt(source.rate, tau_max) if dt is None else dt
    n_steps = int(math.ceil(tau_max / dt * (1 + 1e-12)))
    W = echo_weights(dt, n_steps, tau_grid)
    coupling = 2.0 * math.pi * gamma_p

    def run(indices):
        out = np.empty((len(indices), len(tau_grid)))
        for row, i in enumerate(indices):
            b = source.samples(dt, n_steps, trajectory_rng(seed, i))
            out[row] = coupling * ((b + offset) @ W)
        return out

    chunks = np.array_split(np.arange(n_traj), max(1, min(threads, n_traj)))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    return np.concatenate(parts, axis=0), dt


def coherence(phases: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """|<exp(i phi)>| over axis 0 with its standard error along the mean direction."""
    n = phases.shape[0]
    z = np.exp(1j * phases)
    m = z.mean(axis=0)
    D = np.abs(m)
    unit = np.where(D > 0, m / np.where(D > 0, D, 1.0), 1.0)
    proj = (z * np.conj(unit)).real
    return D, proj.std(axis=0, ddof=1) / math.sqrt(n)


def ensemble_envelope(source, tau_grid, n_traj: int, seed: int, gamma_p: float,
                      threads: int = 1, dt: float | None = None) -> EnsembleResult:
    if n_traj < 2:
        raise ValueError("n_traj must be >= 2")
    phases, dt = ensemble_phases(source, tau_grid, n_traj, seed, gamma_p, threads, dt)
    D, se = coherence(phases)
    return EnsembleResult(np.asarray(tau_grid, dtype=float), D, se, n_traj, dt)


def fit_echo_rate(trace: FieldTrace, taus, gamma_p: float) -> float:
    """Exponential dephasing rate fitted to echo phases drawn from one long trace.

    For Gaussian phases the decay exponent is Var(phi)/2; beyond the field
    correlation time it grows linearly in tau and the slope is the rate.
    """
    taus = np.asarray(taus, dtype=float)
    chi = np.array([0.5 * np.mean(echo_phase_samples(trace, t, gamma_p) ** 2) for t in taus])
    slope, _ = np.polyfit(taus, chi, 1)
    return float(slope)
