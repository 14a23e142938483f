"""Fixed pipelines that regenerate each figure's data bundle."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import dephasing, imaging, measurement, noise, planner
from .artifacts import write_csv, write_json
from .params import Config

FIGURES = ("2b", "2c", "3", "4b", "4c", "5")


def theta_table(config: Config, h_values) -> dict:
    constants, env, _ = config.as_tuple()
    rows = {"h_p": [], "source": [], "sigma_B": [], "f_e": [], "theta": [], "regime": []}
    for h in h_values:
        for spec in noise.source_table(constants, env, float(h)):
            rows["h_p"].append(float(h))
            rows["source"].append(spec.kind.value)
            rows["sigma_B"].append(spec.sigma_B)
            rows["f_e"].append(spec.f_e)
            rows["theta"].append(spec.theta)
            rows["regime"].append(spec.regime)
    return rows


def envelope_table(config: Config, t) -> dict:
    return dephasing.envelopes_for(config).table(t)


def fig_2b(config: Config, out: Path, seed: int) -> dict:
    cfg = config.with_probe(h_p=3e-9, T2=3e-4)
    t = np.linspace(0.0, cfg.probe.T2, 301)
    write_csv(out / "envelopes.csv", envelope_table(cfg, t))
    env = dephasing.envelopes_for(cfg)
    half = 0.5 * cfg.probe.T2
    return {"h_p": 3e-9, "T2": cfg.probe.T2, "P_off_at_T2_half": float(env.p_off(half)),
            "P_on_at_T2_half": float(env.p_on(half))}


def fig_2c(config: Config, out: Path, seed: int) -> dict:
    h = np.geomspace(1e-9, 1e-8, 46)
    rows = theta_table(config, h)
    write_csv(out / "theta.csv", rows)
    summary = {}
    th, src, hp = np.array(rows["theta"]), np.array(rows["source"]), np.array(rows["h_p"])
    for kind in noise.SourceKind:
        sel = src == kind.value
        summary[f"theta_{kind.value}_min"] = float(th[sel].min())
        summary[f"theta_{kind.value}_max"] = float(th[sel].max())
    sel = (src == "ion-channel") & (hp >= 2e-9 * (1 - 1e-9)) & (hp <= 8e-9 * (1 + 1e-9))
    summary["theta_ion-channel_2_8nm"] = [float(th[sel].min()), float(th[sel].max())]
    return summary


def fig_3(config: Config, out: Path, seed: int) -> dict:
    cfg = config.with_probe(h_p=3e-9)
    summary = {}
    for dwell in (0.01, 0.1, 1.0):
        image = imaging.scan(cfg, dwell=dwell, seed=seed)
        stem = f"scan_{int(round(dwell * 1000))}ms"
        imaging.write_pgm(out / f"{stem}.pgm", image.estimates)
        imaging.write_pgm(out / f"{stem}_delta.pgm", image.delta)
        X, Y = np.meshgrid(image.x, image.y)
        write_csv(out / f"{stem}.csv", {"x": X.ravel(), "y": Y.ravel(), "P": image.estimates.ravel(),
                                        "dP": image.delta.ravel(), "expected": image.expected.ravel()})
        row, col = np.unravel_index(np.argmin(image.estimates), image.shape)
        summary[stem] = {
            "acquisition_time_s": imaging.acquisition_time(image.shape, dwell),
            "samples_per_pixel": image.n_samples,
            "cnr": imaging.contrast_to_noise(image),
            "minimum_pixel": [int(row), int(col)],
            "channel_pixel": list(imaging.channel_pixel(image, (0.0, 0.0))),
        }
    return summary


def fig_4b(config: Config, out: Path, seed: int) -> dict:
    T2 = np.geomspace(1e-5, 3e-3, 40)
    cols = {"h_p": [], "T2": [], "tau_star": [], "delta_t_star": [], "N_tau": []}
    for h in (2e-9, 3e-9, 4e-9, 5e-9, 6e-9):
        for curve in planner.sweep_T2(h, T2, config):
            cols["h_p"].append(h)
            cols["T2"].append(curve.T2)
            cols["tau_star"].append(curve.tau_star)
            cols["delta_t_star"].append(curve.delta_t_star)
            cols["N_tau"].append(curve.n_tau_star if np.isfinite(curve.delta_t_star) else -1)
    write_csv(out / "optimum_vs_T2.csv", cols)
    best = planner.optimize_tau(3e-9, 3e-4, config)
    return {"h_p": 3e-9, "T2": 3e-4, "tau_star": best.tau_star, "delta_t_star": best.delta_t_star,
            "N_tau": best.n_tau_star}


def fig_4c(config: Config, out: Path, seed: int) -> dict:
    summary = {}
    cols = {"T2": [], "tau": [], "delta_t": []}
    for T2 in (1e-4, 3e-4, 1e-3):
        curve = planner.optimize_tau(3e-9, T2, config, n_grid=200)
        cols["T2"] += [T2] * len(curve.tau)
        cols["tau"] += list(curve.tau)
        cols["delta_t"] += list(curve.delta_t)
        summary[f"T2_{T2:.0e}"] = {"tau_star": curve.tau_star, "delta_t_star": curve.delta_t_star}
    write_csv(out / "resolution_vs_tau.csv", cols)
    return summary


def fig_5(config: Config, out: Path, seed: int) -> dict:
    summary = {}
    for h in (4e-9, 5e-9, 6e-9):
        run = measurement.simulate_monitoring(config, h_p=h, seed=seed)
        nm = int(round(h * 1e9))
        write_csv(out / f"record_{nm}nm.csv", record_columns(run))
        write_csv(out / f"spectrum_{nm}nm.csv", {"f_Hz": run.freq, "power": run.power})
        lat = run.detection.latencies
        summary[f"{nm}nm"] = {
            "P_on": run.p_on, "P_off": run.p_off,
            "dominant_Hz": run.peak.dominant, "peak_Hz": run.peak.band_peak,
            "peak_to_median": run.peak.ratio,
            "true_switches": int(len(run.timeline.times)),
            "detected_switches": int(len(run.detection.times)),
            "mean_latency_s": float(lat.mean()) if len(lat) else None,
        }
    return summary


def record_columns(run: measurement.MonitorRun) -> dict:
    n = len(run.record.outcomes)
    smoothed = np.full(n, np.nan)
    start = (run.smoothed.n_tau - 1) // 2
    smoothed[start:start + len(run.smoothed.values)] = run.smoothed.values
    return {"t": run.record.times, "outcome": run.record.outcomes.astype(int), "smoothed": smoothed,
            "truth": run.record.truth}


PIPELINES = {"2b": fig_2b, "2c": fig_2c, "3": fig_3, "4b": fig_4b, "4c": fig_4c, "5": fig_5}


def reproduce(figure: str, config: Config, out: str | Path, seed: int) -> tuple[dict, list[Path]]:
    if figure not in PIPELINES:
        raise KeyError(f"unknown figure {figure!r}; choose from {', '.join(FIGURES)}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    before = set(out.iterdir())
    summary = PIPELINES[figure](config, out, seed)
    write_json(out / "summary.json", {"figure": figure, "seed": seed, **summary})
    files = sorted(set(out.iterdir()) - before | {out / "summary.json"})
    return summary, files
