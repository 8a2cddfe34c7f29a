"""Command-line front end: one subcommand per dataset.

Every output starts with a header recording the resolved configuration and
seed, so the same command line always produces byte-identical output.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

from . import loading, prepdetect, trap
from .atomic import HyperfineConfig
from .config import ConfigError, RunConfig, validate_config
from .master import COOLING, DriveField, mixture

COMMANDS = {
    "prep-sweep": "csv",
    "prep-transient": "csv",
    "detect-opt": "json",
    "trap": "json",
    "crystal": "json",
    "spectrum": "csv",
    "load": "csv",
}

# (flag, config key, type) per command; a flag overrides the config file.
FLAGS = {
    "prep-sweep": [("--scheme", "scheme", str), ("--alpha-step-deg", "alpha_step_deg", float),
                   ("--omegas-over-gamma", "omegas_over_gamma", str),
                   ("--detuning-over-gamma", "detuning_over_gamma", float),
                   ("--b-field-tesla", "b_field_tesla", float)],
    "prep-transient": [("--omega-over-gamma", "omega_over_gamma", float),
                       ("--detuning-over-gamma", "detuning_over_gamma", float),
                       ("--alpha-deg", "alpha_deg", float), ("--duration-s", "duration_s", float),
                       ("--samples", "samples", int)],
    "detect-opt": [("--eta", "eta", float), ("--dark-rate", "dark_rate", float),
                   ("--t-points", "t_points", int), ("--k-max", "k_max", int),
                   ("--omega-over-gamma", "omega_over_gamma", float)],
    "trap": [("--topology", "topology", str), ("--rf-frequency-hz", "rf_frequency_hz", float),
             ("--rf-amplitude-v", "rf_amplitude_v", float), ("--dc-voltage-v", "dc_voltage_v", float),
             ("--mass-amu", "mass_amu", float)],
    "crystal": [("--n", "n_ions", int), ("--omega-z-khz", "omega_z_khz", float),
                ("--mass-amu", "mass_amu", float)],
    "spectrum": [("--isotope-table", "isotope_table", str), ("--f-points", "f_points", int)],
    "load": [("--rate", "load_rate", float), ("--target", "target_ions", int),
             ("--latency-s", "latency_s", float), ("--runs", "n_runs", int)],
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ybtrap", description="Trapped Yb+ ion simulations")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", action="append", default=[], metavar="PATH")
        p.add_argument("--out", metavar="PATH")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--seed", type=int, default=0)
        for flag, key, kind in FLAGS[name]:
            p.add_argument(flag, dest=key, type=kind, default=None)
    return parser


def hyperfine(v: dict) -> HyperfineConfig:
    return HyperfineConfig(hfs_ground_hz=v["hfs_ground_hz"], hfs_excited_hz=v["hfs_excited_hz"],
                           gamma_hz=v["gamma_hz"], b_field_tesla=v["b_field_tesla"])


def _alphas(v: dict) -> np.ndarray:
    n = int(math.floor((v["alpha_max_deg"] - v["alpha_min_deg"]) / v["alpha_step_deg"] + 1e-9)) + 1
    return v["alpha_min_deg"] + v["alpha_step_deg"] * np.arange(n)


def cmd_prep_sweep(v: dict, seed: int):
    rows = prepdetect.prep_sweep(_alphas(v), v["omegas_over_gamma"], v["scheme"], hyperfine(v),
                                 v["detuning_over_gamma"])
    return ["alpha_deg", "omega_over_gamma", "efficiency"], rows, {"rows": rows}


def cmd_prep_transient(v: dict, seed: int):
    cfg = hyperfine(v)
    drive = DriveField.optical(v["omega_over_gamma"] * cfg.gamma, v["detuning_over_gamma"] * cfg.gamma,
                               math.radians(v["alpha_deg"]), COOLING)
    rho0 = prepdetect.cooling_state(drive, 2 * math.pi * v["microwave_rabi_hz"], cfg)
    tr = prepdetect.pump_transient(rho0, [drive], v["duration_s"], v["samples"], cfg)
    rows = [(float(t), float(r)) for t, r in zip(tr.times, tr.rates)]
    return ["time_s", "scattering_rate_per_s"], rows, {"rows": rows, "asymptote": tr.asymptote}


def cmd_detect_opt(v: dict, seed: int):
    cfg = hyperfine(v)
    drive = DriveField.optical(v["omega_over_gamma"] * cfg.gamma, v["detuning_over_gamma"] * cfg.gamma,
                               math.radians(v["alpha_deg"]), COOLING)
    rates = prepdetect.bright_dark_rates(drive, cfg)
    model = prepdetect.DetectionModel(eta=v["eta"], dark_rate=v["dark_rate"], leakage=v["leakage"],
                                      prior_dark=v["prior_dark"])
    durations = np.geomspace(v["t_min_s"], v["t_max_s"], v["t_points"])
    opt = prepdetect.optimize_detection(model, durations, np.arange(v["k_max"] + 1), rates)
    best_k = opt.thresholds[np.argmin(opt.errors, axis=1)]
    rows = [(float(T), float(e), int(k)) for T, e, k in zip(durations, opt.error_vs_duration, best_k)]
    result = {
        "optimal_duration_s": opt.duration,
        "optimal_threshold": opt.threshold,
        "optimal_error": opt.error,
        "two_state_rates": {"bright_rate": rates.bright_rate, "dark_rate": rates.dark_rate,
                            "pump": rates.pump, "depump": rates.depump},
        "error_vs_duration": [{"duration_s": r[0], "error": r[1], "threshold": r[2]} for r in rows],
    }
    return ["duration_s", "error", "threshold"], rows, result


def _trap_config(v: dict) -> trap.TrapConfig:
    if v["topology"] == "ring":
        base = trap.ring_trap()
        return trap.TrapConfig(topology="ring", rf_frequency=base.rf_frequency,
                               rf_amplitude=base.rf_amplitude, dc_voltage=0.0, r0=base.r0, z0=base.z0,
                               kappa_r=1.0, kappa_z=1.0, mass_amu=v["mass_amu"])
    return trap.TrapConfig(
        topology="linear", rf_frequency=2 * math.pi * v["rf_frequency_hz"],
        rf_amplitude=v["rf_amplitude_v"], dc_voltage=v["dc_voltage_v"], r0=v["r0_m"], z0=v["z0_m"],
        kappa_r=v["kappa_r"], kappa_z=v["kappa_z"], mass_amu=v["mass_amu"])


def cmd_trap(v: dict, seed: int):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = trap.trap_frequencies(_trap_config(v))
    result = res.to_json()
    result["secular_frequency_hz"] = [float(f) for f in result["secular_frequency_hz"]]
    result["warnings"] = [str(w.message) for w in caught]
    rows = [(axis, float(a), float(q), float(f)) for axis, a, q, f in
            zip("xyz", res.a, res.q, result["secular_frequency_hz"])]
    return ["axis", "a", "q", "secular_frequency_hz"], rows, result


def cmd_crystal(v: dict, seed: int):
    c = trap.crystal_geometry(v["n_ions"], 2 * math.pi * v["omega_z_khz"] * 1e3, v["mass_amu"])
    result = c.to_json()
    rows = [(i, p) for i, p in enumerate(result["positions_um"])]
    return ["ion", "position_um"], rows, result


def cmd_spectrum(v: dict, seed: int):
    table = loading.load_isotope_table(v["isotope_table"] or None)
    if v["linewidth_hz"] > 0:
        table.linewidth_hz = v["linewidth_hz"]
    if v["doppler_fwhm_hz"] >= 0:
        table.doppler_fwhm_hz = v["doppler_fwhm_hz"]
    x = np.linspace(v["f_min_hz"], v["f_max_hz"], v["f_points"])
    y = loading.spectrum(table, x)
    rows = [(float(a), float(b)) for a, b in zip(x, y)]
    return ["detuning_hz", "fluorescence_per_hz"], rows, {"rows": rows}


def cmd_load(v: dict, seed: int):
    model = loading.LoadingModel(v["load_rate"], v["target_ions"], v["latency_s"], seed)
    runs = loading.loading_runs(model, v["n_runs"]) if v["n_runs"] > 1 else [loading.loading_timeline(model)]
    settings = loading.RateSettings(v["e_impact_rate"], v["one_color_rate"], v["two_color_rate"], v["flux"])
    rates = loading.rate_comparison(settings, check=False)
    rows = []
    for i, run in enumerate(runs):
        for n, t in enumerate(run.arrival_times, 1):
            rows.append((i, float(t), n))
    result = {
        "rates": dict(rates),
        "runs": [{"arrival_times_s": r.arrival_times.tolist(), "shutter_time_s": r.shutter_time,
                  "final_count": r.final_count, "overshoot": r.overshoot} for r in runs],
    }
    return ["run", "time_s", "ion_count"], rows, result


HANDLERS = {
    "prep-sweep": cmd_prep_sweep,
    "prep-transient": cmd_prep_transient,
    "detect-opt": cmd_detect_opt,
    "trap": cmd_trap,
    "crystal": cmd_crystal,
    "spectrum": cmd_spectrum,
    "load": cmd_load,
}


def render(rc: RunConfig, columns, rows, result) -> str:
    if rc.fmt == "json":
        doc = {"header": dict(rc.header_items()), "result": result}
        return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"
    buf = io.StringIO()
    for key, value in rc.header_items():
        buf.write(f"# {key} = {value}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in row])
    return buf.getvalue()


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_atomic(path: str, text: str) -> None:
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent or ".", prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    if args.command is None:
        print(parser.format_help(), file=sys.stderr)
        return 2
    overrides = {key: getattr(args, key) for _, key, _ in FLAGS[args.command]
                 if getattr(args, key) is not None}
    fmt = args.format or COMMANDS[args.command]
    try:
        rc = validate_config(args.config, args.command, overrides, fmt, args.seed, args.out)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return 2
    try:
        columns, rows, result = HANDLERS[args.command](rc.values, rc.seed)
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    text = render(rc, columns, rows, result)
    if rc.out:
        write_atomic(rc.out, text)
    else:
        sys.stdout.write(text)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
