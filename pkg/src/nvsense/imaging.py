"""Raster-scan images of a membrane patch with open ion channels.

Each pixel places the probe at a lateral offset d from every channel; the
channel field is evaluated at the distance sqrt(h_p^2 + d^2).  Pixel
estimates are binomial sample means over the cycles that fit in the dwell
time, drawn from a per-pixel random stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dephasing, noise
from .measurement import cycle_rate
from .montecarlo import trajectory_rng
from .noise import SourceKind
from .params import Config


@dataclass(frozen=True)
class ScanImage:
    estimates: np.ndarray  # (ny, nx) sample-mean ground-state population
    counts: np.ndarray  # ground-state outcomes per pixel
    n_samples: int  # cycles per pixel
    expected: np.ndarray  # exact population the samples were drawn from
    reference: float  # P_off, population far from every channel
    x: np.ndarray  # pixel-centre coordinates (m)
    y: np.ndarray
    dwell: float
    pitch: float
    h_p: float
    seed: int

    @property
    def delta(self) -> np.ndarray:
        """Relative population difference P_off - P at each pixel."""
        return self.reference - self.estimates

    @property
    def shape(self) -> tuple[int, int]:
        return self.estimates.shape


def acquisition_time(grid, dwell: float) -> float:
    """Total scan time: number of pixels times the dwell per pixel."""
    ny, nx = (grid, grid) if np.isscalar(grid) else grid
    return int(ny) * int(nx) * dwell


def pixel_centres(grid: int, pitch: float) -> np.ndarray:
    """Coordinates with pixel grid//2 centred on the origin."""
    return (np.arange(grid) - grid // 2) * pitch


def population_map(config: Config, x, y, channels=None, tau: float | None = None) -> np.ndarray:
    """Noise-free ground-state population at each (y, x) probe position."""
    constants, env, probe = config.as_tuple()
    tau = probe.tau if tau is None else tau
    channels = env.channel_positions if channels is None else channels
    background = dephasing.envelopes_for(config, lateral_offsets=()).off(tau)
    X, Y = np.meshgrid(np.asarray(x, float), np.asarray(y, float))
    chi = np.zeros_like(X)
    f_e = noise.fluctuation_rate(SourceKind.ION_CHANNEL, env)
    for cx, cy in channels:
        r = np.sqrt(probe.h_p**2 + (X - cx) ** 2 + (Y - cy) ** 2)
        sigma = noise.source_sigma(SourceKind.ION_CHANNEL, constants, env, r)
        chi += env.channel_dephasing_scale * dephasing.crossover_exponent(sigma, f_e, tau, constants.gamma_p)
    return dephasing.population(background * np.exp(-chi))


def scan(config: Config, grid: int | None = None, dwell: float | None = None,
         seed: int | None = None, pitch: float | None = None, channels=None) -> ScanImage:
    run, probe = config.run, config.probe
    grid = run.grid if grid is None else grid
    dwell = run.dwell if dwell is None else dwell
    seed = run.seed if seed is None else seed
    pitch = run.pitch if pitch is None else pitch
    f_m = cycle_rate(probe.tau, probe.tau_m, probe.tau_2pi)
    n = int(math.floor(dwell * f_m + 1e-9))
    if n < 1:
        raise ValueError(f"dwell {dwell:.3g} s is shorter than one cycle ({1 / f_m:.3g} s)")
    x = y = pixel_centres(grid, pitch)
    expected = population_map(config, x, y, channels)
    flat = expected.ravel()
    counts = np.array([trajectory_rng(seed, k).binomial(n, flat[k]) for k in range(flat.size)])
    counts = counts.reshape(expected.shape)
    reference = float(population_map(config, [0.0], [0.0], channels=())[0, 0])
    return ScanImage(counts / n, counts, n, expected, reference, x, y, dwell, pitch, probe.h_p, seed)


def channel_pixel(image: ScanImage, position) -> tuple[int, int]:
    """(row, col) of the pixel nearest a lateral position."""
    return (int(np.argmin(np.abs(image.y - position[1]))), int(np.argmin(np.abs(image.x - position[0]))))


def contrast_to_noise(image: ScanImage, position=(0.0, 0.0), background_radius: float = 8e-9) -> float:
    """Depth of the 3x3 dip at a channel over the pixel noise of the far background.

    Background pixels are those farther than ``background_radius`` from
    ``position``.
    """
    i, j = channel_pixel(image, position)
    block = image.estimates[max(i - 1, 0):i + 2, max(j - 1, 0):j + 2]
    X, Y = np.meshgrid(image.x - position[0], image.y - position[1])
    far = np.hypot(X, Y) > background_radius
    if far.sum() < 2:
        raise ValueError("no background pixels beyond background_radius")
    bg = image.estimates[far]
    noise_level = bg.std(ddof=1)
    return float((bg.mean() - block.mean()) / noise_level) if noise_level > 0 else math.inf


def point_spread_profile(h_p: float, offsets, config: Config, tau: float | None = None) -> np.ndarray:
    """Contrast P_off - P_on against lateral offset from a single channel."""
    cfg = config.with_probe(h_p=h_p) if h_p != config.probe.h_p else config
    tau = cfg.probe.tau if tau is None else tau
    offsets = np.asarray(offsets, dtype=float)
    p = population_map(cfg, offsets, [0.0], channels=((0.0, 0.0),), tau=tau)[0]
    off = population_map(cfg, [0.0], [0.0], channels=(), tau=tau)[0, 0]
    return off - p


def profile_fwhm(offsets, profile) -> float:
    """Full width at half maximum of a radial profile peaked at offset 0."""
    offsets, profile = np.asarray(offsets, float), np.asarray(profile, float)
    half = 0.5 * profile[0]
    below = np.flatnonzero(profile < half)
    if len(below) == 0:
        raise ValueError("profile never drops below half maximum")
    k = below[0]
    d0, d1, p0, p1 = offsets[k - 1], offsets[k], profile[k - 1], profile[k]
    return 2.0 * float(d0 + (half - p0) * (d1 - d0) / (p1 - p0))


def write_pgm(path: str | Path, values, maxval: int = 65535) -> None:
    """ASCII (P2) graymap, linearly stretched so the data span 0..maxval."""
    v = np.asarray(values, dtype=float)
    lo, hi = float(v.min()), float(v.max())
    scaled = np.zeros(v.shape, dtype=np.int64) if hi == lo else np.rint((v - lo) / (hi - lo) * maxval).astype(np.int64)
    lines = ["P2", f"{v.shape[1]} {v.shape[0]}", str(maxval)]
    lines += [" ".join(str(int(q)) for q in row) for row in scaled]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_pgm(path: str | Path) -> np.ndarray:
    tokens = [t for line in Path(path).read_text(encoding="ascii").splitlines()
              if not line.startswith("#") for t in line.split()]
    if tokens[0] != "P2":
        raise ValueError("not an ASCII graymap")
    w, h = int(tokens[1]), int(tokens[2])
    return np.array(tokens[4:4 + w * h], dtype=np.int64).reshape(h, w)
