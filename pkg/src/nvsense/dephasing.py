"""Spin-echo dephasing envelopes and the on/off ground-state populations.

Rates are in the Hz convention of :mod:`nvsense.params`: an accumulated phase
of ``gamma_p * integral(B dt)`` with gamma_p in Hz/T.  With that convention the
fast-fluctuation limit of the Ornstein-Uhlenbeck echo exponent is exactly
``f_e / Theta**2``.  A physical echo (phase ``2*pi*gamma_p*integral(B dt)``) is
obtained by passing ``2*pi*gamma_p`` as the coupling to
:func:`crossover_exponent`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import noise
from .noise import NoiseSourceSpec, SourceKind
from .params import Config, EnvironmentConfig, PhysicalConstants, ProbeConfig


class RegimeError(ValueError):
    pass


class EnvelopeForm(str, enum.Enum):
    EXPONENTIAL = "exponential"  # exp(-G t)
    QUARTIC_EXPONENTIAL = "quartic"  # exp(-(G t)^4)
    INTRINSIC = "intrinsic"  # exp(-(t/T2)^n)
    CROSSOVER = "crossover"  # OU closed form


SFL_PREFACTOR = 1.0 / (2.0 * math.sqrt(2.0 * math.sqrt(2.0)))


def ffl_rate(f_e, theta):
    """Motional-narrowing dephasing rate f_e / Theta^2 (Theta >= 10 only)."""
    if np.any(np.asarray(theta) < noise.FFL_THRESHOLD):
        raise RegimeError(
            f"Theta={theta!r} is below the fast-fluctuation threshold "
            f"{noise.FFL_THRESHOLD}; use crossover_envelope instead"
        )
    return np.asarray(f_e) * np.asarray(theta) ** -2.0


def sfl_lipid_rate(f_e, theta):
    """Leading-order slow-fluctuation rate for the quartic envelope (Theta <= 0.1)."""
    if np.any(np.asarray(theta) > noise.SFL_THRESHOLD):
        raise RegimeError(
            f"Theta={theta!r} is above the slow-fluctuation threshold "
            f"{noise.SFL_THRESHOLD}; use crossover_envelope instead"
        )
    return SFL_PREFACTOR * np.asarray(theta) ** -0.5 * np.asarray(f_e)


def _echo_bracket(x):
    """x - 3 + 4 exp(-x/2) - exp(-x), series near zero where it cancels to O(x^3)."""
    x = np.asarray(x, dtype=float)
    small = x < 0.05
    xs = np.where(small, x, 0.0)
    series = xs**3 / 12.0 - xs**4 / 32.0 + 7.0 * xs**5 / 960.0 - xs**6 / 768.0 + 31.0 * xs**7 / 161280.0
    xl = np.where(small, 1.0, x)
    direct = xl + 4.0 * np.expm1(-0.5 * xl) - np.expm1(-xl)
    return np.where(small, series, direct)


def crossover_exponent(sigma_B, f_e, t, gamma_p):
    """Hahn-echo decay exponent chi(t) for Gaussian OU field noise.

    Exact for a field with variance sigma_B^2 and autocorrelation
    exp(-f_e |t|) when the phase is ``gamma_p * integral(B dt)``:
    chi = (gamma_p sigma_B / f_e)^2 (f_e t - 3 + 4 e^{-f_e t/2} - e^{-f_e t}).
    """
    t = np.asarray(t, dtype=float)
    return (gamma_p * sigma_B / f_e) ** 2 * _echo_bracket(f_e * t)


def crossover_envelope(sigma_B, f_e, t, gamma_p):
    return np.exp(-crossover_exponent(sigma_B, f_e, t, gamma_p))


def population(D):
    """Ground-state population after the echo: (1 + D) / 2."""
    return 0.5 * (1.0 + np.asarray(D))


@dataclass(frozen=True)
class DephasingModel:
    form: EnvelopeForm
    rate: float
    source: NoiseSourceSpec | None = None
    exponent: float = 1.0  # intrinsic only
    scale: float = 1.0  # crossover only: multiplies chi
    gamma_p: float = 2.80e10

    def exponent_at(self, t):
        t = np.asarray(t, dtype=float)
        if self.form is EnvelopeForm.EXPONENTIAL:
            return self.rate * t
        if self.form is EnvelopeForm.QUARTIC_EXPONENTIAL:
            return (self.rate * t) ** 4
        if self.form is EnvelopeForm.INTRINSIC:
            return (self.rate * t) ** self.exponent
        src = self.source
        if src.sigma_B == 0:
            return np.zeros_like(t)
        return self.scale * crossover_exponent(src.sigma_B, src.f_e, t, self.gamma_p)

    def envelope(self, t):
        return np.exp(-self.exponent_at(t))

    __call__ = envelope


def exponential(rate: float, source: NoiseSourceSpec | None = None) -> DephasingModel:
    return DephasingModel(EnvelopeForm.EXPONENTIAL, float(rate), source)


def water_model(spec: NoiseSourceSpec) -> DephasingModel:
    return exponential(ffl_rate(spec.f_e, spec.theta), spec)


def electrolyte_model(spec: NoiseSourceSpec) -> DephasingModel:
    return exponential(ffl_rate(spec.f_e, spec.theta), spec)


def lipid_model(spec: NoiseSourceSpec) -> DephasingModel:
    return DephasingModel(EnvelopeForm.QUARTIC_EXPONENTIAL,
                          float(sfl_lipid_rate(spec.f_e, spec.theta)), spec)


def intrinsic_model(T2: float, n: float = 3.0) -> DephasingModel:
    return DephasingModel(EnvelopeForm.INTRINSIC, 1.0 / T2, exponent=n)


def channel_model(spec: NoiseSourceSpec, gamma_p: float, scale: float = 1.0) -> DephasingModel:
    # long-time slope of chi, i.e. the FFL-equivalent rate
    rate = scale * (gamma_p * spec.sigma_B) ** 2 / spec.f_e
    return DephasingModel(EnvelopeForm.CROSSOVER, rate, spec, scale=scale, gamma_p=gamma_p)


def envelope_off(models, t):
    """Product of background envelopes (water, lipid, electrolyte, intrinsic, ...)."""
    t = np.asarray(t, dtype=float)
    out = np.ones_like(t)
    for m in models:
        out = out * m.envelope(t)
    return out


def envelope_on(off_value, channel: DephasingModel, t):
    return np.asarray(off_value) * channel.envelope(t)


@dataclass(frozen=True)
class EnvelopeSet:
    """All envelopes for one probe position; channel models may be several."""

    water: DephasingModel
    lipid: DephasingModel
    electrolyte: DephasingModel
    intrinsic: DephasingModel
    channels: tuple[DephasingModel, ...]
    extra: tuple[DephasingModel, ...] = field(default=())

    @property
    def background(self) -> tuple[DephasingModel, ...]:
        return (self.water, self.lipid, self.electrolyte, self.intrinsic, *self.extra)

    def off(self, t):
        return envelope_off(self.background, t)

    def channel(self, t):
        return envelope_off(self.channels, t)

    def on(self, t):
        return self.off(t) * self.channel(t)

    def p_off(self, t):
        return population(self.off(t))

    def p_on(self, t):
        return population(self.on(t))

    def contrast(self, t):
        return self.p_off(t) - self.p_on(t)

    def table(self, t) -> dict[str, np.ndarray]:
        t = np.asarray(t, dtype=float)
        cols = {
            "t": t,
            "D_H2O": self.water.envelope(t),
            "D_L": self.lipid.envelope(t),
            "D_E": self.electrolyte.envelope(t),
            "D_13C": self.intrinsic.envelope(t),
            "D_ic": self.channel(t),
        }
        cols["D_off"] = self.off(t)
        cols["D_on"] = cols["D_off"] * cols["D_ic"]
        cols["P_off"] = population(cols["D_off"])
        cols["P_on"] = population(cols["D_on"])
        return cols


def build_envelopes(constants: PhysicalConstants, env: EnvironmentConfig, probe: ProbeConfig,
                    h_p: float | None = None, T2: float | None = None,
                    lateral_offsets=(0.0,), extra=()) -> EnvelopeSet:
    """Assemble the background and channel models for a probe at standoff ``h_p``.

    ``lateral_offsets`` lists in-plane distances to each open channel; each
    one contributes a crossover model with the standoff replaced by
    sqrt(h_p^2 + d^2).
    """
    h_p = probe.h_p if h_p is None else h_p
    T2 = probe.T2 if T2 is None else T2
    water = water_model(noise.source_spec(SourceKind.WATER, constants, env, h_p))
    lipid = lipid_model(noise.source_spec(SourceKind.LIPID, constants, env, h_p))
    electrolyte = electrolyte_model(noise.source_spec(SourceKind.ELECTROLYTE, constants, env, h_p))
    intrinsic = intrinsic_model(T2, probe.intrinsic_envelope_exponent)
    channels = tuple(
        channel_model(noise.source_spec(SourceKind.ION_CHANNEL, constants, env,
                                        math.hypot(h_p, d)),
                      constants.gamma_p, env.channel_dephasing_scale)
        for d in lateral_offsets
    )
    return EnvelopeSet(water, lipid, electrolyte, intrinsic, channels, tuple(extra))


def envelopes_for(config: Config, **kwargs) -> EnvelopeSet:
    return build_envelopes(*config.as_tuple(), **kwargs)


def contrast(tau, h_p: float, T2: float, config: Config):
    """P_off(tau) - P_on(tau) for a probe directly above one open channel."""
    return envelopes_for(config, h_p=h_p, T2=T2).contrast(tau)


def implied_channel_rate(model: DephasingModel, t_max: float = 1.0) -> float:
    """Inverse of the time at which the channel envelope falls to 1/e."""
    from scipy.optimize import brentq

    if model.exponent_at(t_max) < 1.0:
        return 0.0
    t_e = brentq(lambda t: model.exponent_at(t) - 1.0, 0.0, t_max, xtol=1e-15, rtol=1e-12)
    return 1.0 / t_e
