"""Physical constants and run configuration.

Everything is SI internally. The JSON config has four sections
(``constants``, ``environment``, ``probe``, ``run``); any key not declared
on the matching dataclass is rejected so that typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """Raised for unparsable, unknown or physically invalid configuration."""


MU_N = 5.0507837461e-27  # nuclear magneton, J/T
G_H = 5.5856946893  # proton g-factor


@dataclass(frozen=True)
class PhysicalConstants:
    mu0_over_4pi: float = 1e-7
    hbar: float = 1.054571817e-34
    kB: float = 1.380649e-23
    muN: float = MU_N
    gH: float = G_H
    gamma_p: float = 2.80e10  # Hz/T
    R3D: float = 3.5e-3  # Hz m / V
    epsilon0: float = 8.8541878128e-12
    D_crystal_field: float = 2.88e9  # Hz

    @property
    def gamma_p_angular(self) -> float:
        """NV gyromagnetic ratio in rad s^-1 T^-1."""
        return 2.0 * math.pi * self.gamma_p

    @property
    def proton_moment(self) -> float:
        """Magnetic moment of a single proton, gH * muN / 2 (J/T)."""
        return 0.5 * self.gH * self.muN


@dataclass(frozen=True)
class EnvironmentConfig:
    water_ortho_density: float = 0.75 * 3.3e28  # m^-3
    D_H2O: float = 3e-9  # m^2/s
    lipid_nH: float = 3e28  # m^-3
    D_L: float = 2e-15  # m^2/s
    lipid_correlation_length: float = 10e-9  # m
    ion_flux: float = 5e-4 * 1e9 * 1e18  # ions s^-1 m^-2 (5e-4 ions/ns/nm^2)
    channel_aperture: float = 2e-9  # m, side of the square aperture
    channel_rate_efficiency: float = 0.015
    N_ion: float = 5.0
    N_H2O: float = 34.0
    mu_ion: float = 2.22 * MU_N  # 23Na
    mu_H2O: float = G_H * MU_N  # ortho water, two aligned protons
    channel_dephasing_scale: float = 2.3  # c_ic
    debye_length: float = 1.3e-9  # m
    D_E: float = 1.33e-9  # electrolyte diffusion coefficient, m^2/s
    rho_E: float = 1.0  # Ohm m
    epsilon_r: float = 80.0
    temperature: float = 300.0  # K
    stark_calibration: float = 0.8162  # c_E
    channel_positions: tuple[tuple[float, float], ...] = ((0.0, 0.0),)
    switching_rate: float = 200.0  # Hz
    transit_time: float = 1e-6  # s

    def __post_init__(self) -> None:
        # JSON gives nested lists; keep the frozen dataclass hashable.
        object.__setattr__(
            self,
            "channel_positions",
            tuple(tuple(float(c) for c in p) for p in self.channel_positions),
        )


@dataclass(frozen=True)
class ProbeConfig:
    h_p: float
    T2: float = 3e-4
    tau: float | None = None  # defaults to T2 / 2
    tau_m: float = 900e-9
    tau_2pi: float = 100e-9
    intrinsic_envelope_exponent: float = 3.0

    def __post_init__(self) -> None:
        if self.tau is None:
            object.__setattr__(self, "tau", 0.5 * self.T2)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    threads: int = 1
    n_tau: int = 20
    duration: float = 0.5
    dwell: float = 0.1
    grid: int = 20
    pitch: float = 1e-9
    switch_shape: float = 400.0
    n_traj: int = 1000


@dataclass(frozen=True)
class Config:
    constants: PhysicalConstants
    environment: EnvironmentConfig
    probe: ProbeConfig
    run: RunConfig = field(default_factory=RunConfig)

    def as_tuple(self) -> tuple[PhysicalConstants, EnvironmentConfig, ProbeConfig]:
        return self.constants, self.environment, self.probe

    def with_probe(self, **changes: Any) -> "Config":
        probe = self.probe
        if "T2" in changes and "tau" not in changes:
            changes["tau"] = None
        if changes.get("tau", probe.tau) is None:
            changes["tau"] = None
        new_probe = ProbeConfig(**{**dataclasses.asdict(probe), **changes})
        check(self.constants, self.environment, new_probe)
        return dataclasses.replace(self, probe=new_probe)


SECTIONS = {
    "constants": PhysicalConstants,
    "environment": EnvironmentConfig,
    "probe": ProbeConfig,
    "run": RunConfig,
}


def _build(section: str, cls: type, data: Any):
    if not isinstance(data, dict):
        raise ConfigError(f"section '{section}' must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {', '.join(unknown)}")
    for key, value in data.items():
        if key == "channel_positions":
            continue
        if value is not None and not isinstance(value, (int, float)):
            raise ConfigError(f"{section}.{key}: expected a number, got {value!r}")
    if cls is ProbeConfig and "h_p" not in data:
        raise ConfigError("h_p required")
    if cls is RunConfig:
        data = {k: int(v) if k in ("seed", "threads", "n_tau", "grid", "n_traj") else v
                for k, v in data.items()}
    return cls(**data)


def check(constants: PhysicalConstants, env: EnvironmentConfig, probe: ProbeConfig) -> None:
    """Raise :class:`ConfigError` naming the first field that breaks an invariant."""
    for f in fields(constants):
        if not getattr(constants, f.name) > 0:
            raise ConfigError(f"constants.{f.name} must be > 0")
    for name in (
        "water_ortho_density", "D_H2O", "lipid_nH", "D_L", "ion_flux", "temperature",
        "debye_length", "rho_E", "epsilon_r", "lipid_correlation_length",
        "channel_aperture", "D_E", "transit_time",
    ):
        if not getattr(env, name) > 0:
            raise ConfigError(f"environment.{name} must be > 0")
    for name in ("N_ion", "N_H2O", "mu_ion", "mu_H2O", "channel_dephasing_scale",
                 "stark_calibration", "channel_rate_efficiency", "switching_rate"):
        if not getattr(env, name) >= 0:
            raise ConfigError(f"environment.{name} must be >= 0")
    # the ortho fraction of the total molecular density (3.3e28 m^-3) cannot exceed 1
    if env.water_ortho_density > 3.3e28:
        raise ConfigError("environment.water_ortho_density: ortho fraction exceeds 1")
    if not probe.h_p > 0:
        raise ConfigError("probe.h_p must be > 0")
    if not probe.T2 > 0:
        raise ConfigError("probe.T2 must be > 0")
    if not 0 < probe.tau < probe.T2:
        raise ConfigError("probe.tau must satisfy 0 < tau < T2 (tau >= T2 given)"
                          if probe.tau >= probe.T2 else "probe.tau must be > 0")
    if probe.tau_m < 0 or probe.tau_2pi < 0:
        raise ConfigError("probe.tau_m and probe.tau_2pi must be >= 0")
    if not probe.intrinsic_envelope_exponent > 0:
        raise ConfigError("probe.intrinsic_envelope_exponent must be > 0")


def config_from_dict(data: dict, overrides: dict[str, Any] | None = None) -> Config:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = sorted(set(data) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    data = {k: dict(v) if isinstance(v, dict) else v for k, v in data.items()}
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if section not in SECTIONS or not key:
            raise ConfigError(f"bad override '{dotted}', expected section.key")
        data.setdefault(section, {})[key] = value
    built = {name: _build(name, cls, data.get(name, {})) for name, cls in SECTIONS.items()}
    check(built["constants"], built["environment"], built["probe"])
    if built["run"].threads < 1 or built["run"].n_tau < 1 or built["run"].grid < 1:
        raise ConfigError("run.threads, run.n_tau and run.grid must be >= 1")
    return Config(**built)


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> Config:
    """Read a JSON config file; unspecified fields take their defaults."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(data, overrides)


def default_config(h_p: float = 4e-9, **probe: Any) -> Config:
    return config_from_dict({"probe": {"h_p": h_p, **probe}})


def config_to_dict(config: Config) -> dict:
    out = {}
    for name in SECTIONS:
        section = dataclasses.asdict(getattr(config, name))
        if name == "environment":
            section["channel_positions"] = [list(p) for p in section["channel_positions"]]
        out[name] = section
    return out


def dump_config(config: Config) -> str:
    return json.dumps(config_to_dict(config), indent=2, sort_keys=True)


def config_hash(config: Config) -> str:
    canonical = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def parse_override(text: str) -> tuple[str, Any]:
    """Parse ``section.key=value`` where value is JSON (bare strings allowed)."""
    key, sep, raw = text.partition("=")
    if not sep:
        raise ConfigError(f"override '{text}' must look like section.key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def validate(constants: PhysicalConstants, env: EnvironmentConfig, probe: ProbeConfig) -> list[str]:
    """Physical-regime warnings; an empty list means every assumption holds."""
    from . import noise

    warnings = []
    limit = 1e-4 * constants.D_crystal_field
    for spec in noise.source_table(constants, env, probe.h_p):
        if spec.sigma_B * constants.gamma_p > limit:
            warnings.append(
                f"{spec.kind.value}: gamma_p*sigma_B = {spec.sigma_B * constants.gamma_p:.3g} Hz "
                f"exceeds 1e-4 of the crystal field; spin relaxation can no longer be ignored"
            )
    if probe.tau > 0.9 * probe.T2:
        warnings.append(
            f"tau = {probe.tau:.3g} s is within 10% of T2; envelope near zero, contrast collapses"
        )
    return warnings
