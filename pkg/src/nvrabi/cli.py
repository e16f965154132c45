"""Command-line entry point ``nvrabi``.

Exit codes: 0 success, 2 input error, 3 numerical failure, 4 fit did not
converge or is ill-conditioned.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, default_config, dump_config, load_config
from .fileio import StackFormatError, read_curve_csv, read_stack, write_curve_csv, write_table
from .fitting import fit_rabi, fit_saturation, fit_wire_decay, initial_rabi_guess
from .mapping import map_field_profile
from .model import STATE_LABELS, IntegrationError, excited_population
from .pulses import CycleConvergenceError, RabiCurve, iterate_to_steady_cycle, simulate_rabi_sweep
from .saturation import (
    default_scan_grid,
    saturation_intensity,
    saturation_parameter,
    saturation_power,
    saturation_scan,
)
from .spectral import SpectralPeakError, fft_rabi_frequency, second_harmonic_residual

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_FIT = 0, 2, 3, 4


def _config(args) -> RunConfig:
    return load_config(args.config) if args.config else default_config()


def _save_config(cfg: RunConfig, output) -> None:
    Path(f"{output}.config.ini").write_text(dump_config(cfg), encoding="utf-8", newline="\n")


def _json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, default=lambda o: o.item()) + "\n"


def _write_json(path, report: dict) -> str:
    text = _json(report)
    Path(path).write_text(text, encoding="utf-8", newline="\n")
    return text


def cmd_simulate_populations(args) -> int:
    cfg = _config(args)
    res = iterate_to_steady_cycle(cfg.sequence(), cfg.rates, cfg.dt, cfg.tol, cfg.max_cycles,
                                  trace="all" if args.all_cycles else "last", stride=args.stride)
    tr = res.trace
    nE = excited_population(tr.states)
    write_table(args.output, ["t_s", *STATE_LABELS, "n_E"],
                (np.concatenate([[t], st, [e]]) for t, st, e in zip(tr.t, tr.states, nE)))
    _save_config(cfg, args.output)
    print(f"steady cycle after {res.cycles} cycles (residual {res.residual:.3g}); "
          f"{len(tr)} rows written to {args.output}", file=sys.stderr)
    return EXIT_OK


def _rabi_report(curve, fit) -> dict:
    report = fit.as_dict()
    try:
        nu = fft_rabi_frequency(curve.tau_values, curve.contrast_values)
        report["fft_c_R_rad_per_s"] = 2 * np.pi * nu
    except (SpectralPeakError, ValueError):
        report["fft_c_R_rad_per_s"] = None
    if fit.valid and fit.a_R > 0:
        report["second_harmonic_residual"] = second_harmonic_residual(curve, fit)
    report["valid"] = fit.valid
    return report


def cmd_simulate_rabi(args) -> int:
    cfg = _config(args)
    workers = args.workers if args.workers is not None else cfg.workers
    curve = simulate_rabi_sweep(cfg.sequence(), cfg.tau_grid(), cfg.rates, cfg.dt, cfg.tol,
                                cfg.max_cycles, workers=workers)
    if cfg.contrast_noise > 0:
        rng = np.random.default_rng(cfg.seed)
        curve.contrast_values = curve.contrast_values + rng.normal(0, cfg.contrast_noise, len(curve))
    write_curve_csv(args.output, curve)
    _save_config(cfg, args.output)
    if not args.fit:
        return EXIT_OK
    fit = fit_rabi(curve)
    print(_write_json(f"{args.output}.fit.json", _rabi_report(curve, fit)), end="")
    return EXIT_OK if fit.valid else EXIT_FIT


def cmd_fit_rabi(args) -> int:
    tau, contrast = read_curve_csv(args.input)
    curve = RabiCurve(tau, contrast)
    guess = (args.a, args.b, args.c, args.d)
    if any(g is not None for g in guess):
        auto = initial_rabi_guess(tau, contrast)
        guess = tuple(a if g is None else g for g, a in zip(guess, auto))
    else:
        guess = None
    fit = fit_rabi(curve, initial_guess=guess)
    report = _rabi_report(curve, fit)
    text = _json(report)
    if args.output:
        _write_json(args.output, report)
    print(text, end="")
    if not fit.valid:
        print(f"fit not valid: {fit.message}; condition {fit.condition:.3g}", file=sys.stderr)
        return EXIT_FIT
    return EXIT_OK


def cmd_saturation(args) -> int:
    cfg = _config(args)
    grid = default_scan_grid(cfg.constants.W_p_sat, args.points)
    lo = grid[0] if args.wp_min is None else args.wp_min
    hi = grid[-1] if args.wp_max is None else args.wp_max
    if not 0 < lo < hi:
        raise ValueError("need 0 < --wp-min < --wp-max")
    grid = np.geomspace(lo, hi, args.points)
    scan = saturation_scan(cfg.rates, grid)
    write_table(args.output, ["W_p_per_s", "n_E"], scan)
    _save_config(cfg, args.output)
    fit = fit_saturation(scan)
    k = cfg.constants
    I_sat = saturation_intensity(fit.W_p_sat, k.sigma, k.wavelength, k.planck_h, k.light_c)
    P_sat = saturation_power(I_sat, args.waist)
    report = {"W_p_sat_per_s": fit.W_p_sat, "a_p": fit.a_p, "residual_rms": fit.residual_rms,
              "converged": fit.converged, "well_conditioned": fit.well_conditioned,
              "condition": fit.condition, "I_sat_W_per_m2": I_sat,
              "I_sat_mW_per_um2": I_sat * 1e-9, "waist_m": args.waist, "P_sat_W": P_sat,
              "power_W": args.power, "s": saturation_parameter(args.power, P_sat),
              "valid": fit.valid}
    print(_write_json(f"{args.output}.report.json", report), end="")
    return EXIT_OK if fit.valid else EXIT_FIT


def cmd_map_rf(args) -> int:
    stack = read_stack(args.stack)
    prof = map_field_profile(stack, args.y_center, args.window)
    write_table(args.output, ["x_um", "nu_R_Hz", "B_R_mT"], zip(prof.x_positions, prof.nu_R, prof.B_R))
    if args.c_w is None:
        return EXIT_OK
    x_range = None
    if args.x_min is not None or args.x_max is not None:
        x_range = (-np.inf if args.x_min is None else args.x_min,
                   np.inf if args.x_max is None else args.x_max)
    fit = fit_wire_decay(prof.x_positions, prof.B_R, args.c_w * stack.um_per_pixel, x_range)
    print(_write_json(f"{args.output}.wire.json", {**fit.as_dict(), "valid": fit.valid}), end="")
    return EXIT_OK if fit.valid else EXIT_FIT


def cmd_default_config(args) -> int:
    text = dump_config(default_config())
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8", newline="\n")
    else:
        print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nvrabi", description="NV-center pulsed ODMR simulation and analysis.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("-c", "--config", help="INI run configuration (defaults if omitted)")
        sp.add_argument("-o", "--output", required=True, help="output CSV path")

    sp = sub.add_parser("simulate-populations", help="population trace of the steady cycle")
    with_config(sp)
    sp.add_argument("--all-cycles", action="store_true", help="trace every cycle, not just the converged one")
    sp.add_argument("--stride", type=int, default=1, help="keep every n-th integration step")
    sp.set_defaults(func=cmd_simulate_populations)

    sp = sub.add_parser("simulate-rabi", help="contrast versus RF duration")
    with_config(sp)
    sp.add_argument("--fit", action="store_true", help="fit the damped cosine and write <output>.fit.json")
    sp.add_argument("--workers", type=int, help="worker processes (overrides config and NVRABI_WORKERS)")
    sp.set_defaults(func=cmd_simulate_rabi)

    sp = sub.add_parser("fit-rabi", help="fit a tau_s,contrast CSV")
    sp.add_argument("input", help="CSV with tau_s and contrast columns")
    sp.add_argument("-o", "--output", help="also write the report to this JSON file")
    sp.add_argument("--a", type=float, help="initial a_R")
    sp.add_argument("--b", type=float, help="initial b_R (s)")
    sp.add_argument("--c", type=float, help="initial c_R (rad/s)")
    sp.add_argument("--d", type=float, help="initial d_R (rad)")
    sp.set_defaults(func=cmd_fit_rabi)

    sp = sub.add_parser("saturation", help="stationary excited population versus pump rate")
    with_config(sp)
    sp.add_argument("--wp-min", type=float, help="lowest pump rate (1/s)")
    sp.add_argument("--wp-max", type=float, help="highest pump rate (1/s)")
    sp.add_argument("--points", type=int, default=61, help="number of log-spaced pump rates")
    sp.add_argument("--power", type=float, default=0.15, help="laser power (W) to convert to s")
    sp.add_argument("--waist", type=float, default=18e-6, help="beam waist (m)")
    sp.set_defaults(func=cmd_saturation)

    sp = sub.add_parser("map-rf", help="RF field profile from a contrast stack")
    sp.add_argument("stack", help="NVSTACK1 contrast stack file")
    sp.add_argument("-o", "--output", required=True, help="output CSV path")
    sp.add_argument("--y-center", type=int, required=True, help="row index of the profile")
    sp.add_argument("--window", type=int, default=10, help="rows averaged around --y-center")
    sp.add_argument("--c-w", type=float, help="wire edge position in pixels; enables the 1/x fit")
    sp.add_argument("--x-min", type=float, help="fit range start (um)")
    sp.add_argument("--x-max", type=float, help="fit range end (um)")
    sp.set_defaults(func=cmd_map_rf)

    sp = sub.add_parser("default-config", help="print the default configuration")
    sp.add_argument("-o", "--output", help="write to this file instead of stdout")
    sp.set_defaults(func=cmd_default_config)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, StackFormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (IntegrationError, CycleConvergenceError, ArithmeticError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
