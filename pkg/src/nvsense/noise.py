"""Closed-form (sigma_B, f_e, Theta) characterisation of each field source.

sigma_B is the RMS field at the probe, f_e the fluctuation (inverse
correlation) rate and Theta = f_e / (gamma_p sigma_B) the dimensionless
fast/slow fluctuation ratio. All lengths in metres, fields in tesla.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .params import PhysicalConstants, EnvironmentConfig

FFL_THRESHOLD = 10.0
SFL_THRESHOLD = 0.1


class SourceKind(str, enum.Enum):
    ION_CHANNEL = "ion-channel"
    WATER = "water"
    LIPID = "lipid"
    ELECTROLYTE = "electrolyte"


@dataclass(frozen=True)
class NoiseSourceSpec:
    kind: SourceKind
    sigma_B: float
    f_e: float
    theta: float

    @property
    def regime(self) -> str:
        return regime(self.theta)


@dataclass(frozen=True)
class ChargeFluctuation:
    R: float
    Q2: float
    sigma_E: float
    f_e_E: float


def sigma_ion_channel(h_p, N_ion, N_H2O, mu_ion, mu_H2O, mu0_over_4pi=1e-7):
    """RMS field from the spins of ions and bound water inside an open channel."""
    return mu0_over_4pi / np.power(h_p, 3) * math.sqrt(N_ion * mu_ion**2 + N_H2O * mu_H2O**2)


def sigma_water(h_p, n_ortho, proton_moment, mu0_over_4pi=1e-7):
    """RMS field from diffusing ortho-water molecules.

    ``proton_moment`` multiplies the density term as ``gH * muN`` does in the
    usual half-space estimate; we evaluate it with the proton moment
    (2.79 muN).
    """
    mu0_over_2pi = 2.0 * mu0_over_4pi
    return proton_moment * mu0_over_2pi * np.sqrt(n_ortho * math.pi / np.power(h_p, 3))


def sigma_lipid(h_p, n_H, proton_moment, mu0_over_4pi=1e-7):
    """RMS field from hydrogen nuclei in the lipid bilayer."""
    mu0_over_8pi = 0.5 * mu0_over_4pi
    return proton_moment * mu0_over_8pi * np.sqrt(n_H * 5.0 * math.pi / (4.0 * np.power(h_p, 3)))


def fluctuation_rate(kind: SourceKind | str, env: EnvironmentConfig, h_p=None,
                     constants: PhysicalConstants | None = None):
    """Characteristic fluctuation rate f_e (Hz) of a source."""
    kind = SourceKind(kind)
    if kind is SourceKind.WATER:
        if h_p is None or np.any(np.asarray(h_p) <= 0):
            raise ValueError("water fluctuation rate needs h_p > 0")
        return env.D_H2O / (2.0 * np.asarray(h_p, dtype=float)) ** 2
    if kind is SourceKind.LIPID:
        return env.D_L / (2.0 * env.lipid_correlation_length) ** 2
    if kind is SourceKind.ION_CHANNEL:
        area = env.channel_aperture**2
        return env.ion_flux * area * env.channel_rate_efficiency
    if kind is SourceKind.ELECTROLYTE:
        eps0 = (constants or PhysicalConstants()).epsilon0
        return 1.0 / (env.epsilon_r * eps0 * env.rho_E)
    raise ValueError(f"unknown source kind {kind!r}")


def theta(f_e, sigma_B, gamma_p):
    """f_e / (gamma_p sigma_B); ``inf`` where sigma_B == 0 (source never dephases)."""
    sigma_B = np.asarray(sigma_B, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.where(sigma_B > 0, np.asarray(f_e) / (gamma_p * np.where(sigma_B > 0, sigma_B, 1.0)),
                       np.inf)
    return float(out) if out.ndim == 0 else out


def regime(theta_value: float) -> str:
    if theta_value >= FFL_THRESHOLD:
        return "FFL"
    if theta_value <= SFL_THRESHOLD:
        return "SFL"
    return "crossover"


def charge_variance(R, kappa, D_E, T, kB=1.380649e-23):
    """Charge variance of a spherical electrolyte region of radius R (Debye-Hueckel).

    Evaluated exactly as the closed form reads, prefactor D_E * kB * T
    included; the small-R bracket cancels catastrophically so it is
    clamped at zero.
    """
    R = np.asarray(R, dtype=float)
    kR = kappa * R
    # R cosh(kR) - sinh(kR)/k, series below kR ~ 1e-3 to dodge cancellation
    bracket = np.where(
        kR < 1e-3,
        kappa**2 * R**3 / 3.0 * (1.0 + kR**2 / 10.0),
        R * np.cosh(kR) - np.sinh(kR) / kappa,
    )
    q2 = D_E * kB * T * (1.0 + kR) * np.exp(-kR) * bracket
    q2 = np.maximum(q2, 0.0)
    return float(q2) if q2.ndim == 0 else q2


def electric_field_sigma(h_p, env: EnvironmentConfig, constants: PhysicalConstants):
    """RMS electric field at standoff h_p from charge fluctuations in a sphere of radius h_p."""
    kappa = 1.0 / env.debye_length
    q2 = charge_variance(h_p, kappa, env.D_E, env.temperature, constants.kB)
    denom = 4.0 * math.pi * constants.epsilon0 * env.epsilon_r * np.power(h_p, 2)
    return env.stark_calibration * np.sqrt(q2) / denom


def charge_fluctuation(h_p, env: EnvironmentConfig, constants: PhysicalConstants) -> ChargeFluctuation:
    kappa = 1.0 / env.debye_length
    return ChargeFluctuation(
        R=h_p,
        Q2=charge_variance(h_p, kappa, env.D_E, env.temperature, constants.kB),
        sigma_E=float(electric_field_sigma(h_p, env, constants)),
        f_e_E=fluctuation_rate(SourceKind.ELECTROLYTE, env, constants=constants),
    )


def stark_effective_sigma(sigma_E, R3D, gamma_p):
    """Magnetic-equivalent RMS field of a Stark-shift fluctuation."""
    return R3D * np.asarray(sigma_E) / gamma_p


def source_sigma(kind: SourceKind | str, constants: PhysicalConstants, env: EnvironmentConfig, h_p):
    kind = SourceKind(kind)
    if kind is SourceKind.ION_CHANNEL:
        return sigma_ion_channel(h_p, env.N_ion, env.N_H2O, env.mu_ion, env.mu_H2O,
                                 constants.mu0_over_4pi)
    if kind is SourceKind.WATER:
        return sigma_water(h_p, env.water_ortho_density, constants.proton_moment,
                           constants.mu0_over_4pi)
    if kind is SourceKind.LIPID:
        return sigma_lipid(h_p, env.lipid_nH, constants.proton_moment, constants.mu0_over_4pi)
    sigma_E = electric_field_sigma(h_p, env, constants)
    return stark_effective_sigma(sigma_E, constants.R3D, constants.gamma_p)


def source_spec(kind, constants: PhysicalConstants, env: EnvironmentConfig, h_p: float) -> NoiseSourceSpec:
    kind = SourceKind(kind)
    sigma = float(source_sigma(kind, constants, env, h_p))
    f_e = float(fluctuation_rate(kind, env, h_p, constants))
    return NoiseSourceSpec(kind, sigma, f_e, theta(f_e, sigma, constants.gamma_p))


def source_table(constants: PhysicalConstants, env: EnvironmentConfig, h_p: float) -> list[NoiseSourceSpec]:
    return [source_spec(kind, constants, env, h_p) for kind in SourceKind]
