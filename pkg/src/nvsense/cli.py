"""Command-line entry point: ``nv <subcommand> [options]``.

Exit codes: 0 success, 2 usage error, 3 invalid configuration, 4 runtime
failure.  Every run writes ``<stem>.manifest.json`` next to its output.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, dephasing, imaging, measurement, montecarlo, noise, planner
from .artifacts import write_csv, write_manifest
from .figures import FIGURES, record_columns, reproduce, theta_table
from .params import ConfigError, config_from_dict, config_hash, load_config, parse_override

EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 2, 3, 4


def _grid(text: str) -> np.ndarray:
    """``start:stop:count`` (log-spaced when both ends are positive) or comma list."""
    try:
        if ":" in text:
            a, b, n = text.split(":")
            a, b, n = float(a), float(b), int(n)
            return np.geomspace(a, b, n) if a > 0 and b > 0 else np.linspace(a, b, n)
        return np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    common.add_argument("--seed", type=int, help="master seed (default: run.seed)")
    common.add_argument("--threads", type=int,
                        help="worker threads (default: $NV_SIM_THREADS, then run.threads)")
    common.add_argument("--out", type=Path, help="output path")

    p = argparse.ArgumentParser(prog="nv", description="NV-probe ion-channel sensing simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="subcommand")
    sub.required = True

    s = sub.add_parser("sources", parents=[common], help="sigma_B, f_e, Theta per source vs standoff")
    s.add_argument("--h-min", type=float, default=1e-9)
    s.add_argument("--h-max", type=float, default=1e-8)
    s.add_argument("--steps", type=int, default=50)

    s = sub.add_parser("envelopes", parents=[common], help="dephasing envelopes and populations vs time")
    s.add_argument("--t-max", type=float, help="default: T2")
    s.add_argument("--steps", type=int, default=301)

    s = sub.add_parser("trace", parents=[common], help="simulated field trace at the probe")
    s.add_argument("--source", choices=("water", "lipid", "channel"), required=True)
    s.add_argument("--h", type=float, help="standoff (default: probe.h_p)")
    s.add_argument("--duration", type=float, default=1e-3)
    s.add_argument("--dt", type=float, help="sample step (default: resolve the source, at most 10^4 samples)")
    s.add_argument("--particles", type=int, default=2000)

    s = sub.add_parser("envelope-mc", parents=[common], help="Monte Carlo echo envelope")
    s.add_argument("--source", choices=("ou", "water", "lipid", "channel", "zero"), default="ou")
    s.add_argument("--sigma", type=float, help="OU field RMS (T)")
    s.add_argument("--fe", type=float, help="OU correlation rate (Hz)")
    s.add_argument("--h", type=float, help="standoff for particle sources")
    s.add_argument("--tau-grid", type=_grid, default=_grid("1e-6:3e-4:20"))
    s.add_argument("--traj", type=int, help="trajectories (default: run.n_traj)")
    s.add_argument("--dt", type=float)
    s.add_argument("--particles", type=int, default=2000)

    s = sub.add_parser("monitor", parents=[common], help="switching channel readout record and spectrum")
    s.add_argument("--h", type=float)
    s.add_argument("--duration", type=float)
    s.add_argument("--n-tau", type=int)
    s.add_argument("--tau", type=float)
    s.add_argument("--spectrum", type=Path, help="also write the power spectrum here")

    s = sub.add_parser("plan", parents=[common], help="optimum interrogation time vs T2")
    s.add_argument("--h", type=float)
    s.add_argument("--t2-grid", type=_grid, default=_grid("1e-5:3e-3:40"))
    s.add_argument("--curve", type=Path, help="also write delta_t vs tau at probe.T2")

    s = sub.add_parser("ensemble", parents=[common], help="bulk-NV pixel contrast")
    s.add_argument("--n-nv", type=float, default=1e24)
    s.add_argument("--pixel", type=float, default=1e-6, help="pixel side length (m)")
    s.add_argument("--channel-density", type=float, default=2e15)
    s.add_argument("--h", type=float, default=3e-9)
    s.add_argument("--depth", type=float, default=3e-9)
    s.add_argument("--samples", type=int, default=4000)

    s = sub.add_parser("scan", parents=[common], help="raster-scan image (PGM + CSV)")
    s.add_argument("--dwell", type=float)
    s.add_argument("--grid", type=int)
    s.add_argument("--pitch", type=float)

    s = sub.add_parser("reproduce", parents=[common], help="regenerate a figure's data bundle")
    s.add_argument("--figure", choices=FIGURES, required=True)
    return p


def _config(args):
    overrides = dict(parse_override(t) for t in args.set)
    if args.config is None:
        data = {"probe": {"h_p": 4e-9}}
        if any(k.startswith("probe.") for k in overrides):
            data["probe"].update({k.split(".", 1)[1]: v for k, v in overrides.items()
                                  if k.startswith("probe.")})
            overrides = {k: v for k, v in overrides.items() if not k.startswith("probe.")}
        return config_from_dict(data, overrides)
    try:
        return load_config(args.config, overrides)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.config}: {exc.strerror}") from exc


def _threads(args, config) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("NV_SIM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"NV_SIM_THREADS={env!r} is not an integer") from None
    return config.run.threads


def _out(args, default: str) -> Path:
    out = args.out or Path(default)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    return out


# ----- subcommands: each returns (output paths, summary dict) -------------------------


def cmd_sources(args, config, seed, threads):
    if not 0 < args.h_min <= args.h_max or args.steps < 1:
        raise ConfigError("need 0 < --h-min <= --h-max and --steps >= 1")
    out = _out(args, "sources.csv")
    write_csv(out, theta_table(config, np.geomspace(args.h_min, args.h_max, args.steps)))
    return [out], {}


def cmd_envelopes(args, config, seed, threads):
    t = np.linspace(0.0, args.t_max or config.probe.T2, args.steps)
    out = _out(args, "envelopes.csv")
    write_csv(out, dephasing.envelopes_for(config).table(t))
    env = dephasing.envelopes_for(config)
    return [out], {"tau": config.probe.tau, "P_off": float(env.p_off(config.probe.tau)),
                   "P_on": float(env.p_on(config.probe.tau))}


def cmd_trace(args, config, seed, threads):
    constants, env, probe = config.as_tuple()
    h = args.h or probe.h_p
    rng = montecarlo.trajectory_rng(seed, 0)
    kind = {"channel": "channel", "water": "water", "lipid": "lipid"}[args.source]
    source = montecarlo.BathSource(kind, h, env, constants, args.particles)
    dt = args.dt or max(1.0 / (20.0 * source.rate), args.duration / 1e4)
    n = int(math.ceil(args.duration / dt))
    samples = source.samples(dt, n, rng)
    out = _out(args, "trace.csv")
    write_csv(out, {"t": dt * np.arange(n), "B": samples})
    return [out], {"dt": dt, "rms": float(np.sqrt(np.mean(samples**2)))}


def cmd_envelope_mc(args, config, seed, threads):
    constants, env, probe = config.as_tuple()
    h = args.h or probe.h_p
    if args.source == "ou":
        if args.sigma is None or args.fe is None:
            raise ConfigError("--source ou needs --sigma and --fe")
        source = montecarlo.OUSource(args.sigma, args.fe)
    elif args.source == "zero":
        source = montecarlo.ZeroSource()
    else:
        source = montecarlo.BathSource(args.source, h, env, constants, args.particles)
    n_traj = args.traj or config.run.n_traj
    res = montecarlo.ensemble_envelope(source, args.tau_grid, n_traj, seed, constants.gamma_p,
                                       threads=threads, dt=args.dt)
    out = _out(args, "mc.csv")
    write_csv(out, {"tau": res.tau, "D": res.D, "stderr": res.stderr})
    return [out], {"n_traj": n_traj, "dt": res.dt}


def cmd_monitor(args, config, seed, threads):
    run = measurement.simulate_monitoring(config, h_p=args.h, duration=args.duration,
                                          n_tau=args.n_tau, seed=seed, tau=args.tau)
    out = _out(args, "record.csv")
    write_csv(out, record_columns(run))
    paths = [out]
    if args.spectrum:
        paths.append(write_csv(args.spectrum, {"f_Hz": run.freq, "power": run.power}))
    lat = run.detection.latencies
    return paths, {
        "P_on": run.p_on, "P_off": run.p_off, "threshold": run.detection.threshold,
        "true_switches": int(len(run.timeline.times)), "detected_switches": int(len(run.detection.times)),
        "missed": run.detection.missed, "mean_latency_s": float(lat.mean()) if len(lat) else None,
        "dominant_Hz": run.peak.dominant, "peak_to_median": run.peak.ratio,
    }


def cmd_plan(args, config, seed, threads):
    h = args.h or config.probe.h_p
    curves = planner.sweep_T2(h, args.t2_grid, config)
    out = _out(args, "plan.csv")
    write_csv(out, {
        "T2": [c.T2 for c in curves],
        "tau_star": [c.tau_star for c in curves],
        "delta_t_star": [c.delta_t_star for c in curves],
        "N_tau": [c.n_tau_star if math.isfinite(c.delta_t_star) else -1 for c in curves],
    })
    paths = [out]
    if args.curve:
        c = planner.optimize_tau(h, config.probe.T2, config)
        paths.append(write_csv(args.curve, {"tau": c.tau, "delta_t": c.delta_t}))
    return paths, {"h_p": h}


def cmd_ensemble(args, config, seed, threads):
    spec = planner.EnsembleSpec(args.n_nv, args.pixel**2, args.channel_density, args.depth, args.samples)
    opt = planner.optimize_ensemble(spec, args.h, config, seed)
    out = _out(args, "ensemble.csv")
    write_csv(out, {"tau": opt.tau, "delta_phi": opt.delta_phi})
    b = opt.best
    return [out], {
        "gamma_nv": b.gamma_nv, "tau_star": b.tau, "delta_phi": b.delta_phi, "stderr": b.stderr,
        "n_channels": b.n_channels, "delta_t": opt.delta_t,
        "improvement_factor": planner.improvement_factor(args.h, config, opt),
    }


def cmd_scan(args, config, seed, threads):
    image = imaging.scan(config, grid=args.grid, dwell=args.dwell, seed=seed, pitch=args.pitch)
    out = _out(args, "scan.pgm")
    imaging.write_pgm(out, image.estimates)
    delta = out.with_name(out.stem + "_delta.pgm")
    imaging.write_pgm(delta, image.delta)
    X, Y = np.meshgrid(image.x, image.y)
    csv = write_csv(out.with_suffix(".csv"), {"x": X.ravel(), "y": Y.ravel(), "P": image.estimates.ravel(),
                                              "dP": image.delta.ravel()})
    return [out, delta, csv], {
        "acquisition_time_s": imaging.acquisition_time(image.shape, image.dwell),
        "samples_per_pixel": image.n_samples,
    }


def cmd_reproduce(args, config, seed, threads):
    out = args.out or Path(f"figure_{args.figure}")
    summary, files = reproduce(args.figure, config, out, seed)
    return files, summary


COMMANDS = {
    "sources": cmd_sources, "envelopes": cmd_envelopes, "trace": cmd_trace,
    "envelope-mc": cmd_envelope_mc, "monitor": cmd_monitor, "plan": cmd_plan,
    "ensemble": cmd_ensemble, "scan": cmd_scan, "reproduce": cmd_reproduce,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    start = time.perf_counter()
    try:
        config = _config(args)
        seed = config.run.seed if args.seed is None else args.seed
        threads = _threads(args, config)
        outputs, summary = COMMANDS[args.command](args, config, seed, threads)
    except ConfigError as exc:
        print(f"nv: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, ArithmeticError, OSError, KeyError) as exc:
        print(f"nv: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    anchor = outputs[0] if args.command != "reproduce" else (args.out or Path(f"figure_{args.figure}"))
    write_manifest(anchor, args.command, config_hash(config), seed, outputs,
                   time.perf_counter() - start, __version__, summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
