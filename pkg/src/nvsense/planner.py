"""Interrogation-time optimisation and the bulk-ensemble pixel model.

The temporal resolution of channel monitoring is bounded by
``(tau + tau_m) / dP**2``, where dP is the on/off population contrast at
interrogation time tau: resolving a contrast dP against binomial shot noise
takes about 1/dP^2 echo cycles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import dephasing, noise
from .dephasing import SourceKind
from .params import Config, PhysicalConstants


@dataclass(frozen=True)
class Resolution:
    tau: float
    delta_p: float
    delta_t: float  # inf when the contrast vanishes
    n_tau: int | None  # cycles per resolution window; None when delta_t is inf


@dataclass(frozen=True)
class ResolutionCurve:
    tau: np.ndarray
    delta_t: np.ndarray
    tau_star: float
    delta_t_star: float
    h_p: float
    T2: float

    tau_m: float = 900e-9

    @property
    def n_tau_star(self) -> int:
        return n_cycles(self.delta_t_star, self.tau_star, self.tau_m)


def n_cycles(delta_t: float, tau: float, tau_m: float) -> int:
    return int(math.ceil(delta_t / (tau + tau_m) * (1 - 1e-12)))


def resolution_bound(tau, delta_p, tau_m):
    """(tau + tau_m) / dP^2, inf where dP == 0."""
    delta_p = np.abs(np.asarray(delta_p, dtype=float))
    with np.errstate(divide="ignore"):
        return np.where(delta_p > 0, (np.asarray(tau) + tau_m) / np.where(delta_p > 0, delta_p, 1.0) ** 2,
                        np.inf)


def temporal_resolution(tau: float, h_p: float, T2: float, config: Config) -> Resolution:
    if not 0 < tau < T2:
        raise ValueError(f"need 0 < tau < T2, got tau={tau!r}, T2={T2!r}")
    dp = float(dephasing.contrast(tau, h_p, T2, config))
    tau_m = config.probe.tau_m
    dt = float(resolution_bound(tau, dp, tau_m))
    n = None if math.isinf(dt) else n_cycles(dt, tau, tau_m)
    return Resolution(tau, dp, dt, n)


def _tau_grid(T2: float, n_grid: int) -> np.ndarray:
    lo = min(1e-8, 1e-4 * T2)
    return np.geomspace(lo, T2 * (1 - 1e-9), n_grid)


def optimize_tau(h_p: float, T2: float, config: Config, n_grid: int = 400) -> ResolutionCurve:
    """Minimise the resolution bound over tau in (0, T2): log grid, then golden section."""
    if not (h_p > 0 and T2 > 0):
        raise ValueError("h_p and T2 must be > 0")
    env = dephasing.envelopes_for(config, h_p=h_p, T2=T2)
    tau_m = config.probe.tau_m

    def bound(tau):
        return resolution_bound(tau, env.contrast(tau), tau_m)

    grid = _tau_grid(T2, n_grid)
    dt = bound(grid)
    k = int(np.argmin(dt))
    if not np.isfinite(dt[k]):
        return ResolutionCurve(grid, dt, float("nan"), math.inf, h_p, T2, tau_m)
    tau_star, best = float(grid[k]), float(dt[k])
    if 0 < k < n_grid - 1:
        res = minimize_scalar(lambda u: float(bound(math.exp(u))),
                              bracket=tuple(np.log(grid[k - 1:k + 2])), method="golden",
                              options={"xtol": 1e-10})
        if 0 < math.exp(res.x) < T2 and res.fun <= best:
            tau_star, best = float(math.exp(res.x)), float(res.fun)
    return ResolutionCurve(grid, dt, tau_star, best, h_p, T2, tau_m)


def sweep_T2(h_p: float, T2_values, config: Config, n_grid: int = 400) -> list[ResolutionCurve]:
    return [optimize_tau(h_p, float(T2), config, n_grid) for T2 in T2_values]


def background_dephasing_time(h_p: float, config: Config) -> float:
    """1/e time of the environmental envelope alone (no intrinsic T2 decay)."""
    env = dephasing.envelopes_for(config, h_p=h_p)
    models = (env.water, env.lipid, env.electrolyte)

    def exponent(t):
        return sum(float(m.exponent_at(t)) for m in models) - 1.0

    hi = 1e-6
    while exponent(hi) < 0:
        hi *= 2.0
        if hi > 1e6:
            return math.inf
    return brentq(exponent, 0.0, hi, rtol=1e-12)


# ----- ensemble scale-up ---------------------------------------------------------------


def ensemble_rate(n_nv, constants: PhysicalConstants | None = None):
    """NV-NV dipolar dephasing rate sqrt(2 pi)/3 * hbar mu0/4pi * gamma^2 * n (s^-1).

    gamma is the angular gyromagnetic ratio here.
    """
    c = constants or PhysicalConstants()
    if np.any(np.asarray(n_nv) <= 0):
        raise ValueError("n_nv must be > 0")
    return math.sqrt(2.0 * math.pi) / 3.0 * c.hbar * c.mu0_over_4pi * c.gamma_p_angular**2 * np.asarray(n_nv)


def nv_coupling(n_nv, constants: PhysicalConstants | None = None):
    """Dipolar coupling (Hz) between two NV spins at the mean spacing n^(-1/3)."""
    c = constants or PhysicalConstants()
    return c.hbar * c.mu0_over_4pi * c.gamma_p_angular**2 * np.asarray(n_nv) / (2.0 * math.pi)


@dataclass(frozen=True)
class EnsembleSpec:
    n_nv: float  # m^-3
    pixel_area: float  # m^2
    channel_density: float  # m^-2
    depth: float = 3e-9  # NV layer thickness below the crystal surface
    n_samples: int = 4000

    def __post_init__(self):
        if not self.n_nv > 0:
            raise ValueError("n_nv must be > 0")
        if not (self.pixel_area > 0 and self.depth > 0) or self.channel_density < 0:
            raise ValueError("pixel area and depth must be > 0, channel density >= 0")

    def gamma_nv(self, constants: PhysicalConstants | None = None) -> float:
        return float(ensemble_rate(self.n_nv, constants))

    @property
    def nv_count(self) -> float:
        return self.n_nv * self.pixel_area * self.depth


@dataclass(frozen=True)
class PixelContrast:
    tau: float
    delta_phi: float
    stderr: float
    gamma_nv: float
    n_channels: int


class _PixelSample:
    """Frozen NV and channel geometry; evaluates the pixel contrast at any tau."""

    def __init__(self, spec: EnsembleSpec, h_p: float, config: Config, seed: int):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        side = math.sqrt(spec.pixel_area)
        n_ch = int(rng.poisson(spec.channel_density * spec.pixel_area))
        channels = rng.uniform(0.0, side, size=(n_ch, 2))
        nv_xy = rng.uniform(0.0, side, size=(spec.n_samples, 2))
        standoff = h_p + rng.uniform(0.0, spec.depth, size=spec.n_samples)
        axis_z = rng.uniform(-1.0, 1.0, size=spec.n_samples)  # cos(theta) of an isotropic axis
        constants, env, _ = config.as_tuple()
        sigma2 = np.zeros(spec.n_samples)
        for start in range(0, n_ch, 256):
            d = nv_xy[:, None, :] - channels[None, start:start + 256, :]
            d -= side * np.round(d / side)  # periodic images: the pixel tiles the membrane
            r = np.sqrt(standoff[:, None] ** 2 + np.einsum("ijk,ijk->ij", d, d))
            sigma2 += (noise.source_sigma(SourceKind.ION_CHANNEL, constants, env, r) ** 2).sum(axis=1)
        self.spec, self.config, self.n_channels = spec, config, n_ch
        self.standoff = standoff
        self.sigma2 = axis_z**2 * sigma2
        self.gamma_nv = spec.gamma_nv(constants)
        self.f_ic = noise.fluctuation_rate(SourceKind.ION_CHANNEL, env)

    def background(self, tau: float) -> np.ndarray:
        constants, env, probe = self.config.as_tuple()
        h = self.standoff
        gamma = constants.gamma_p
        w_sigma = noise.source_sigma(SourceKind.WATER, constants, env, h)
        w_f = noise.fluctuation_rate(SourceKind.WATER, env, h)
        l_sigma = noise.source_sigma(SourceKind.LIPID, constants, env, h)
        l_f = noise.fluctuation_rate(SourceKind.LIPID, env)
        e_sigma = noise.source_sigma(SourceKind.ELECTROLYTE, constants, env, h)
        e_f = noise.fluctuation_rate(SourceKind.ELECTROLYTE, env, constants=constants)
        chi = (dephasing.ffl_rate(w_f, noise.theta(w_f, w_sigma, gamma)) * tau
               + (dephasing.sfl_lipid_rate(l_f, noise.theta(l_f, l_sigma, gamma)) * tau) ** 4
               + dephasing.ffl_rate(e_f, noise.theta(e_f, e_sigma, gamma)) * tau
               + (tau / probe.T2) ** probe.intrinsic_envelope_exponent
               + self.gamma_nv * tau)
        return np.exp(-chi)

    def evaluate(self, tau: float) -> PixelContrast:
        env = self.config.environment
        chi = (env.channel_dephasing_scale * self.config.constants.gamma_p**2 / self.f_ic**2
               * dephasing._echo_bracket(self.f_ic * tau) * self.sigma2)
        dp = 0.5 * self.background(tau) * -np.expm1(-chi)
        n = self.spec.nv_count
        se = n * dp.std(ddof=1) / math.sqrt(len(dp)) if len(dp) > 1 else 0.0
        return PixelContrast(tau, float(n * dp.mean()), float(se), self.gamma_nv, self.n_channels)


def pixel_contrast(spec: EnsembleSpec, h_p: float, tau: float, config: Config,
                   seed: int = 0) -> PixelContrast:
    """Summed on/off contrast of every NV in one pixel, averaged over random geometry.

    NVs sit uniformly in a layer of thickness ``spec.depth`` beneath the
    standoff h_p, with isotropic axes projected on the membrane normal.
    Channels are Poisson-scattered at the given areal density.
    """
    if not tau > 0:
        raise ValueError("tau must be > 0")
    return _PixelSample(spec, h_p, config, seed).evaluate(tau)


@dataclass(frozen=True)
class EnsembleOptimum:
    best: PixelContrast
    delta_t: float  # (tau + tau_m) / dPhi^2 at the optimum
    tau: np.ndarray
    delta_phi: np.ndarray


def optimize_ensemble(spec: EnsembleSpec, h_p: float, config: Config, seed: int = 0,
                      tau_max: float | None = None, n_grid: int = 200) -> EnsembleOptimum:
    """Interrogation time minimising (tau + tau_m) / dPhi^2 for the ensemble pixel."""
    sample = _PixelSample(spec, h_p, config, seed)
    tau_max = config.probe.T2 if tau_max is None else tau_max
    tau_m = config.probe.tau_m
    grid = np.geomspace(1e-9, tau_max * (1 - 1e-9), n_grid)
    phi = np.array([sample.evaluate(t).delta_phi for t in grid])
    dt = resolution_bound(grid, phi, tau_m)
    k = int(np.argmin(dt))
    if 0 < k < n_grid - 1:
        res = minimize_scalar(
            lambda u: float(resolution_bound(math.exp(u), sample.evaluate(math.exp(u)).delta_phi, tau_m)),
            bracket=tuple(np.log(grid[k - 1:k + 2])),
            method="golden", options={"xtol": 1e-8})
        tau_star = float(math.exp(res.x))
    else:
        tau_star = float(grid[k])
    best = sample.evaluate(tau_star)
    return EnsembleOptimum(best, float(resolution_bound(tau_star, best.delta_phi, tau_m)), grid, phi)


def improvement_factor(h_p: float, config: Config, ensemble: EnsembleOptimum) -> float:
    """Single-probe optimum resolution over the ensemble-pixel resolution."""
    single = optimize_tau(h_p, config.probe.T2, config)
    return single.delta_t_star / ensemble.delta_t
