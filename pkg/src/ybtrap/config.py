"""Flat key-value run configuration with aggregated validation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .atomic import parse_key_values


@dataclass(frozen=True)
class Key:
    default: Any
    kind: type
    check: Callable[[Any], bool] | None = None
    bound: str = ""


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


def _unit(x):
    return 0 <= x <= 1


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


# Resonant pumping leaves S F=1 mF=0 dark under pure pi light, so its sweep
# window stays clear of the alpha = 0 and 90 degree edges.
SCHEME_ALPHA_RANGE = {"offresonant": (0.0, 90.0), "resonant": (5.0, 85.0)}
# One curve at Omega = Gamma for the resonant scheme; three drive strengths
# for the off-resonant one.
SCHEME_OMEGAS = {"offresonant": (0.3, 1.0, 3.0), "resonant": (1.0,)}

KEYS: dict[str, Key] = {
    # atomic structure
    "gamma_hz": Key(19.6e6, float, _pos, "> 0"),
    "hfs_ground_hz": Key(12.64e9, float, _pos, "> 0"),
    "hfs_excited_hz": Key(2.1e9, float, _pos, "> 0"),
    "b_field_tesla": Key(1.0e-4, float, _nonneg, ">= 0"),
    # preparation
    "scheme": Key("offresonant", str, lambda s: s in ("offresonant", "resonant"),
                  "one of offresonant, resonant"),
    # None: the scheme's default window (see SCHEME_ALPHA_RANGE)
    "alpha_min_deg": Key(None, float),
    "alpha_max_deg": Key(None, float),
    "alpha_step_deg": Key(2.0, float, _pos, "> 0"),
    "alpha_deg": Key(45.0, float),
    "omegas_over_gamma": Key(None, tuple, lambda t: len(t) > 0 and all(v >= 0 for v in t),
                             "non-empty list of values >= 0"),
    "omega_over_gamma": Key(1.0, float, _nonneg, ">= 0"),
    "detuning_over_gamma": Key(0.0, float),
    # transient
    "duration_s": Key(0.02, float, _pos, "> 0"),
    "samples": Key(200, int, lambda n: n >= 2, ">= 2"),
    "microwave_rabi_hz": Key(1.0e5, float, _nonneg, ">= 0"),
    # detection
    "eta": Key(2e-3, float, _unit, "in [0, 1]"),
    "dark_rate": Key(200.0, float, _nonneg, ">= 0"),
    "leakage": Key(True, bool),
    "prior_dark": Key(0.5, float, _unit, "in [0, 1]"),
    "t_min_s": Key(1e-5, float, _pos, "> 0"),
    "t_max_s": Key(1e-1, float, _pos, "> 0"),
    "t_points": Key(50, int, lambda n: n >= 1, ">= 1"),
    "k_max": Key(39, int, _nonneg, ">= 0"),
    # trap
    "topology": Key("linear", str, lambda s: s in ("linear", "ring"), "one of linear, ring"),
    "rf_frequency_hz": Key(21.6e6, float, _pos, "> 0"),
    "rf_amplitude_v": Key(400.0, float, _nonneg, ">= 0"),
    "dc_voltage_v": Key(1.0, float, _nonneg, ">= 0"),
    "r0_m": Key(0.75e-3, float, _pos, "> 0"),
    "z0_m": Key(2.0e-3, float, _pos, "> 0"),
    "kappa_r": Key(1.0, float, lambda k: 0 < k <= 1, "in (0, 1]"),
    "kappa_z": Key(0.35, float, lambda k: 0 < k <= 1, "in (0, 1]"),
    "mass_amu": Key(172.0, float, _pos, "> 0"),
    # crystal
    "n_ions": Key(2, int, lambda n: 1 <= n <= 50, "in 1..50"),
    "omega_z_khz": Key(52.0, float, _pos, "> 0"),
    # spectrum
    "isotope_table": Key("", str),
    "f_min_hz": Key(-1.0e9, float),
    "f_max_hz": Key(1.5e9, float),
    "f_points": Key(2001, int, lambda n: n >= 2, ">= 2"),
    "linewidth_hz": Key(0.0, float, _nonneg, ">= 0 (0 keeps the table value)"),
    "doppler_fwhm_hz": Key(-1.0, float, None),
    # loading
    "load_rate": Key(10.0, float, _pos, "> 0"),
    "target_ions": Key(5, int, lambda n: n >= 1, ">= 1"),
    "latency_s": Key(0.0, float, _nonneg, ">= 0"),
    "n_runs": Key(1, int, lambda n: n >= 1, ">= 1"),
    "e_impact_rate": Key(1.0 / 150.0, float, _pos, "> 0"),
    "one_color_rate": Key(1.0, float, _pos, "> 0"),
    "two_color_rate": Key(10.0, float, _pos, "> 0"),
    "flux": Key(1.0, float, _pos, "> 0"),
}


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _coerce(name: str, key: Key, raw: Any):
    if key.kind is bool:
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if key.kind is tuple:
        return raw if isinstance(raw, tuple) else _floats(str(raw))
    if key.kind is int:
        value = float(raw)
        if value != int(value):
            raise ValueError(f"{name}: expected an integer, got {raw!r}")
        return int(value)
    if key.kind is float:
        value = float(raw)
        if math.isnan(value):
            raise ValueError(f"{name}: NaN is not allowed")
        return value
    return str(raw)


def resolve(values: dict[str, Any]) -> tuple[dict[str, Any], list[str]]:
    """Fill defaults and check every key; errors are collected, not raised."""
    errors = []
    out = {name: key.default for name, key in KEYS.items()}
    for name in sorted(values):
        if name not in KEYS:
            errors.append(f"{name}: unknown key")
            continue
        key = KEYS[name]
        try:
            value = _coerce(name, key, values[name])
        except ValueError as exc:
            msg = str(exc)
            errors.append(msg if msg.startswith(name) else f"{name}: {msg}")
            continue
        if key.check is not None and not key.check(value):
            errors.append(f"{name}: value {values[name]!r} violates bound {key.bound}")
            continue
        out[name] = value
    lo, hi = SCHEME_ALPHA_RANGE.get(out["scheme"], (0.0, 90.0))
    if out["alpha_min_deg"] is None:
        out["alpha_min_deg"] = lo
    if out["alpha_max_deg"] is None:
        out["alpha_max_deg"] = hi
    if out["omegas_over_gamma"] is None:
        out["omegas_over_gamma"] = SCHEME_OMEGAS.get(out["scheme"], (1.0,))
    if out["alpha_max_deg"] < out["alpha_min_deg"]:
        errors.append("alpha_max_deg: must be >= alpha_min_deg")
    if out["t_max_s"] < out["t_min_s"]:
        errors.append("t_max_s: must be >= t_min_s")
    if out["f_max_hz"] <= out["f_min_hz"]:
        errors.append("f_max_hz: must be > f_min_hz")
    return out, errors


def read_config_file(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file not found: {path}"])
    try:
        return parse_key_values(path.read_text())
    except ValueError as exc:
        raise ConfigError([f"{path}: {exc}"]) from exc


@dataclass
class RunConfig:
    command: str
    config_paths: list[str] = field(default_factory=list)
    out: str | None = None
    fmt: str = "csv"
    seed: int = 0
    values: dict[str, Any] = field(default_factory=dict)

    def header_items(self) -> list[tuple[str, str]]:
        items = [("command", self.command), ("seed", str(self.seed)),
                 ("config_files", ",".join(self.config_paths))]
        for name in sorted(self.values):
            items.append((name, format_value(self.values[name])))
        return items


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def validate_config(paths, command: str = "", overrides: dict[str, Any] | None = None,
                    fmt: str = "csv", seed: int = 0, out: str | None = None) -> RunConfig:
    """Read, default-fill and check config files (later files win, then
    ``overrides``).  Raises ConfigError carrying every problem found."""
    if paths is None:
        paths = []
    elif isinstance(paths, (str, Path)):
        paths = [paths]
    errors = []
    values: dict[str, Any] = {}
    for path in paths:
        try:
            values.update(read_config_file(path))
        except ConfigError as exc:
            errors.extend(exc.errors)
    values.update(overrides or {})
    resolved, problems = resolve(values)
    errors.extend(problems)
    if fmt not in ("csv", "json"):
        errors.append(f"format: must be csv or json, got {fmt!r}")
    if errors:
        raise ConfigError(errors)
    return RunConfig(command=command, config_paths=[str(p) for p in paths], out=out, fmt=fmt,
                     seed=seed, values=resolved)
