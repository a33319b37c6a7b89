"""Command-line entry point: one subcommand per simulated dataset.

Exit codes: 0 success, 2 configuration error, 3 non-identifiable fit, 4 I/O.
Errors are reported on stderr as a single JSON object.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, data, design, engine, spectroscopy
from .config import ConfigError, RunConfig, grid_values, load_config
from .program import build_xy8_block
from .system import ramsey_frequencies

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NON_IDENTIFIABLE = 3
EXIT_IO = 4

COMMANDS = ("spectrum", "fit", "design", "rabi", "ramsey", "echo", "trace")

log = logging.getLogger("xy8sim")


def _header(cfg: RunConfig, command: str, units: dict) -> dict:
    return {"command": command, "seed": cfg.seed, "units": units, "notes": list(cfg.notes),
            "config": cfg.resolved}


def _spectrum_points(cfg: RunConfig):
    sec = cfg.section("spectrum")
    taus = grid_values(cfg, "spectrum", "tau_grid_us")
    pts = spectroscopy.simulate_spectrum(taus, cfg.system, sec["n_pulses"])
    shots = cfg.section("readout")["shots"]
    if shots:
        rng = np.random.default_rng(cfg.seed)
        mean = cfg.section("readout")["mean_bright_counts"]
        out = []
        for p in pts:
            s = engine.photon_readout_mc(p.signal, mean, shots, rng=rng)
            out.append(spectroscopy.SpectrumPoint(p.tau, s.p_down_estimate, s.sigma))
        return out
    if sec["noise_sigma"] > 0:
        return spectroscopy.spectrum_with_noise(pts, sec["noise_sigma"], cfg.seed)
    return pts


def cmd_spectrum(cfg: RunConfig, out: Path) -> list[Path]:
    pts = _spectrum_points(cfg)
    hdr = _header(cfg, "spectrum", {"tau_us": "us", "p_down": "probability", "sigma": "probability"})
    paths = [data.write_csv(out / "spectrum.csv", data.SPECTRUM_COLUMNS, data.spectrum_rows(pts), hdr)]
    dips = spectroscopy.find_dips(pts) if len(pts) >= 3 else []
    paths.append(data.write_csv(out / "dips.csv", ("tau_center_us", "depth"),
                                [(d.tau_center, d.depth) for d in dips], hdr))
    return paths


def cmd_fit(cfg: RunConfig, out: Path) -> list[Path]:
    sec = cfg.section("fit")
    if "input_csv" in sec:
        pts = data.read_spectrum(sec["input_csv"])
        source = sec["input_csv"]
    else:
        pts = _spectrum_points(cfg)
        source = "simulated from config"
    bounds = spectroscopy.FitBounds(tuple(sec["a_par_bounds_mhz"]), tuple(sec["a_perp_bounds_mhz"]),
                                    tuple(sec["f_larmor_bounds_mhz"]))
    fixed = [cfg.system.spin(label) for label in sec["fixed_spins"]]
    res = spectroscopy.fit_hyperfine(pts, bounds, sec["n_pulses"], cfg.system.reference_f_larmor,
                                     fixed, grid_per_axis=sec["grid_per_axis"])
    doc = {"command": "fit", "source": source, "result": res.to_dict(), "config": cfg.resolved,
           "notes": list(cfg.notes)}
    return [data.write_json(out / "fit.json", doc)]


def cmd_design(cfg: RunConfig, out: Path) -> list[Path]:
    sec = cfg.section("design")
    rep = design.scan_init_tau(tuple(sec["window_us"]), sec["steps"], sec["n_pulses"], cfg.system,
                               tuple(sec["final_phases_rad"]), threads=cfg.threads)
    hdr = _header(cfg, "design", {"tau_us": "us", "fidelity_up": "population", "fidelity_down": "population",
                                  "final_phase_rad": "rad"})
    rows = [(p.tau, p.fidelity_up, p.fidelity_down, p.final_phase) for p in rep.scan]
    paths = [data.write_csv(out / "design.csv", ("tau_us", "fidelity_up", "fidelity_down", "final_phase_rad"),
                            rows, hdr)]
    g = rep.gate
    doc = {"command": "design", "tau_opt_us": rep.tau_opt, "fidelity_up": rep.fidelity_up,
           "fidelity_down": rep.fidelity_down, "final_phase_rad": rep.final_phase,
           "gate": {"phi_rad": g.phi, "phi_over_pi": g.phi / math.pi, "n_up": list(g.n_up), "n_down": list(g.n_dn)},
           "config": cfg.resolved}
    paths.append(data.write_json(out / "design.json", doc))
    return paths


def cmd_rabi(cfg: RunConfig, out: Path) -> list[Path]:
    sec = cfg.section("rabi")
    curve = design.rabi_curve(sec["n_prime_list"], sec["tau_prime_us"], sec["tau_init_us"], cfg.system,
                              sec["n_init"], sec["final_phase_rad"], threads=cfg.threads)
    hdr = _header(cfg, "rabi", {"n_prime": "pulses", "p_down": "probability"})
    return [data.write_csv(out / "rabi.csv", ("n_prime", "p_down"), curve, hdr)]


def cmd_ramsey(cfg: RunConfig, out: Path) -> list[Path]:
    sec = cfg.section("ramsey")
    ts = grid_values(cfg, "ramsey", "t_grid_us")
    cols = {}
    for b in sec["branches"]:
        cols[b] = [v for _, v in design.ramsey_curve(ts, b, cfg.system, sec["tau_prime_us"], sec["tau_init_us"],
                                                     sec["n_init"], sec["final_phase_rad"], threads=cfg.threads)]
    hdr = _header(cfg, "ramsey", {"t_us": "us", "p_down_*": "probability"})
    names = ("t_us",) + tuple(f"p_down_{b}" for b in cols)
    rows = [(t,) + tuple(cols[b][i] for b in cols) for i, t in enumerate(ts)]
    paths = [data.write_csv(out / "ramsey.csv", names, rows, hdr)]
    fits = {}
    expected = dict(zip(("up", "down"), ramsey_frequencies(cfg.system.f_larmor, cfg.system.spins[0].hyperfine)))
    for b, ys in cols.items():
        try:
            f = design.fit_sinusoid(ts, ys)
            fits[b] = {"frequency_mhz": f.frequency, "amplitude": f.amplitude, "offset": f.offset,
                       "phase_rad": f.phase, "expected_frequency_mhz": expected[b]}
        except ValueError as exc:
            fits[b] = {"error": str(exc)}
    paths.append(data.write_json(out / "ramsey_fit.json", {"command": "ramsey", "fits": fits,
                                                           "config": cfg.resolved}))
    return paths


def cmd_echo(cfg: RunConfig, out: Path) -> list[Path]:
    sec = cfg.section("echo")
    ts = grid_values(cfg, "echo", "t_grid_us")
    curve = design.echo_curve(ts, cfg.system, sec["tau_prime_us"], sec["tau_init_us"], sec["n_init"],
                              sec["final_phase_rad"], sec["synchronize"], threads=cfg.threads)
    hdr = _header(cfg, "echo", {"t_us": "us", "p_down": "probability"})
    return [data.write_csv(out / "echo.csv", ("t_us", "p_down"), curve, hdr)]


def cmd_trace(cfg: RunConfig, out: Path) -> list[Path]:
    sec = cfg.section("trace")
    block = build_xy8_block(sec["n_pulses"], sec["tau_us"])
    traj = engine.bloch_trace(block, cfg.system, sec.get("spin"), tuple(sec["initial_bloch"]),
                              sec["samples_per_delay"])
    rows = []
    for start, tr in traj.items():
        for p in tr.points:
            rows.append((start, p.time, p.branch, p.bloch.x, p.bloch.y, p.bloch.z))
    hdr = _header(cfg, "trace", {"t_us": "us", "x,y,z": "Bloch components"})
    return [data.write_csv(out / "trace.csv", ("initial_branch", "t_us", "electron", "x", "y", "z"), rows, hdr)]


HANDLERS = {"spectrum": cmd_spectrum, "fit": cmd_fit, "design": cmd_design, "rabi": cmd_rabi,
            "ramsey": cmd_ramsey, "echo": cmd_echo, "trace": cmd_trace}


def run_command(name: str, cfg: RunConfig) -> list[Path]:
    if name not in HANDLERS:
        raise ValueError(f"unknown command {name!r}; choose from {', '.join(COMMANDS)}")
    out = cfg.output_dir
    return HANDLERS[name](cfg, out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xy8sim", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--seed", type=int, help="random seed (overrides seed)")
    p.add_argument("--threads", type=int, help="worker threads for sweeps")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _fail(kind: str, code: int, message: str, **extra) -> int:
    print(json.dumps({"error": kind, "exit_code": code, "message": message, **extra}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config).with_overrides(args.seed, args.threads, args.out)
    except ConfigError as exc:
        return _fail("config", EXIT_CONFIG, exc.message, path=exc.path)
    except OSError as exc:
        return _fail("io", EXIT_IO, str(exc))
    try:
        paths = run_command(args.command, cfg)
    except spectroscopy.NonIdentifiableError as exc:
        return _fail("non_identifiable", EXIT_NON_IDENTIFIABLE, str(exc))
    except OSError as exc:
        return _fail("io", EXIT_IO, str(exc))
    except ValueError as exc:
        return _fail("config", EXIT_CONFIG, str(exc))
    for path in paths:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
