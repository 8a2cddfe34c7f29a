"""Isotope-selective photoionization of neutral Yb and ion loading statistics."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.constants import atomic_mass, c, e, epsilon_0, h, k as k_B
from scipy.special import voigt_profile

from .atomic import parse_key_values

ISOTOPES = (170, 171, 172, 173, 174, 176)

# External literature value, not derived here.
YB_IONIZATION_POTENTIAL_EV = 6.254

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


def excited_fraction(s: float, detuning: float, linewidth: float) -> float:
    """Steady-state upper-level population of a driven two-level atom.

    ``detuning`` and ``linewidth`` (FWHM) in the same units.
    """
    if s < 0:
        raise ValueError("saturation parameter must be >= 0")
    if math.isinf(s):
        return 0.5
    return 0.5 * s / (1.0 + s + (2.0 * detuning / linewidth) ** 2)


@dataclass(frozen=True)
class Line:
    shift_hz: float
    weight: float = 1.0


@dataclass
class IsotopeTable:
    """Per-isotope abundance and 1S0 - 1P1 line positions (Hz, relative to a
    reference isotope).  Odd isotopes may carry several hyperfine lines with
    relative weights."""

    abundance: dict[int, float]
    lines: dict[int, list[Line]]
    linewidth_hz: float = 29e6
    doppler_fwhm_hz: float = 10e6

    def __post_init__(self):
        if any(a < 0 for a in self.abundance.values()):
            raise ValueError("abundances must be >= 0")
        if sum(self.abundance.values()) > 1 + 1e-9:
            raise ValueError("abundances sum to more than 1")
        if not self.linewidth_hz > 0:
            raise ValueError("linewidth_hz must be > 0")
        if self.doppler_fwhm_hz < 0:
            raise ValueError("doppler_fwhm_hz must be >= 0")
        missing = sorted(set(self.abundance) - set(self.lines))
        if missing:
            raise ValueError(f"no line position for isotopes {missing}")

    def centers(self) -> dict[int, float]:
        """Weighted line centre of each isotope."""
        out = {}
        for iso, lines in self.lines.items():
            w = sum(l.weight for l in lines)
            out[iso] = sum(l.shift_hz * l.weight for l in lines) / w
        return out


_KEY = re.compile(r"^(abundance|shift_hz|weight)_(\d+)(?:_(\w+))?$")


def parse_isotope_table(text: str) -> IsotopeTable:
    """Flat key-value isotope table.

    ``abundance_172 = 0.2183``, ``shift_hz_172 = 533.3e6``; hyperfine lines
    of odd isotopes as ``shift_hz_171_a`` / ``weight_171_a``; global keys
    ``linewidth_hz`` and ``doppler_fwhm_hz``.
    """
    values = parse_key_values(text)
    abundance: dict[int, float] = {}
    shifts: dict[int, dict[str, float]] = {}
    weights: dict[int, dict[str, float]] = {}
    extra = {}
    unknown = []
    for key, raw in values.items():
        if key in ("linewidth_hz", "doppler_fwhm_hz"):
            extra[key] = float(raw)
            continue
        m = _KEY.match(key)
        if not m:
            unknown.append(key)
            continue
        kind, iso, comp = m.group(1), int(m.group(2)), m.group(3) or ""
        if kind == "abundance":
            abundance[iso] = float(raw)
        elif kind == "shift_hz":
            shifts.setdefault(iso, {})[comp] = float(raw)
        else:
            weights.setdefault(iso, {})[comp] = float(raw)
    if unknown:
        raise ValueError(f"unknown keys: {', '.join(sorted(unknown))}")
    lines = {
        iso: [Line(shift, weights.get(iso, {}).get(comp, 1.0)) for comp, shift in sorted(comps.items())]
        for iso, comps in shifts.items()
    }
    return IsotopeTable(abundance=abundance, lines=lines, **extra)


def load_isotope_table(path: str | Path | None = None) -> IsotopeTable:
    """Read an isotope table; without a path, the bundled natural-Yb table."""
    if path is None:
        text = resources.files("ybtrap.data").joinpath("yb_isotopes.cfg").read_text()
    else:
        text = Path(path).read_text()
    return parse_isotope_table(text)


def doppler_fwhm(divergence_rad: float, temperature_k: float = 700.0, mass_amu: float = 174.0,
                 wavelength: float = 398.9e-9) -> float:
    """Residual Doppler FWHM (Hz) of an atomic beam crossed at 90 degrees by
    the laser, from the beam's angular half-divergence."""
    sigma_v = math.sqrt(k_B * temperature_k / (mass_amu * atomic_mass))
    return FWHM_PER_SIGMA * sigma_v * math.sin(divergence_rad) / wavelength


def spectrum(table: IsotopeTable, detunings_hz: np.ndarray) -> np.ndarray:
    """Fluorescence profile: abundance-weighted Voigt lines, each normalized
    to unit area (so the output is a density in 1/Hz)."""
    x = np.asarray(detunings_hz, dtype=float)
    gamma_half = table.linewidth_hz / 2.0
    sigma = table.doppler_fwhm_hz / FWHM_PER_SIGMA
    out = np.zeros_like(x)
    for iso, ab in table.abundance.items():
        lines = table.lines[iso]
        wsum = sum(l.weight for l in lines)
        for line in lines:
            out += ab * line.weight / wsum * voigt_profile(x - line.shift_hz, sigma, gamma_half)
    return out


def peak_positions(detunings_hz: np.ndarray, profile: np.ndarray) -> np.ndarray:
    """Detunings of the local maxima of a sampled profile."""
    p = np.asarray(profile)
    interior = np.nonzero((p[1:-1] > p[:-2]) & (p[1:-1] >= p[2:]))[0] + 1
    return np.asarray(detunings_hz)[interior]


# --- loading ---------------------------------------------------------------


@dataclass(frozen=True)
class LoadingModel:
    """Poisson loading at ``rate`` ions/s until ``target`` ions are trapped;
    ions arriving within ``latency`` s after that still land."""

    rate: float = 10.0
    target: int = 1
    latency: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("loading rate must be > 0")
        if self.target < 1:
            raise ValueError("target ion number must be >= 1")
        if self.latency < 0:
            raise ValueError("shutter latency must be >= 0")


@dataclass
class LoadingTimeline:
    arrival_times: np.ndarray
    shutter_time: float
    target: int

    @property
    def final_count(self) -> int:
        return int(self.arrival_times.size)

    @property
    def overshoot(self) -> int:
        return self.final_count - self.target

    def count_at(self, t: float) -> int:
        return int(np.searchsorted(self.arrival_times, t, side="right"))


def loading_timeline(model: LoadingModel, rng: np.random.Generator | None = None) -> LoadingTimeline:
    """One loading run.  Uses ``model.seed`` unless a generator is given."""
    if rng is None:
        rng = np.random.default_rng(model.seed)
    gaps = rng.exponential(1.0 / model.rate, size=model.target)
    times = np.cumsum(gaps)
    shutter = float(times[-1])
    late = []
    t = shutter
    while True:
        t += rng.exponential(1.0 / model.rate)
        if t > shutter + model.latency:
            break
        late.append(t)
    return LoadingTimeline(np.concatenate([times, late]), shutter, model.target)


def loading_runs(model: LoadingModel, n_runs: int) -> list[LoadingTimeline]:
    """Independent runs with child seeds spawned from ``model.seed``."""
    children = np.random.SeedSequence(model.seed).spawn(n_runs)
    return [loading_timeline(model, np.random.default_rng(s)) for s in children]


# --- rates -----------------------------------------------------------------


@dataclass(frozen=True)
class RateSettings:
    """Loading rates (ions/s) at unit relative neutral flux."""

    electron_impact: float = 1.0 / 150.0
    one_color: float = 1.0
    two_color: float = 10.0
    flux: float = 1.0


class RateRatioError(AssertionError):
    pass


def rate_comparison(settings: RateSettings = RateSettings(), check: bool = True) -> list[tuple[str, float]]:
    """Loading rates per method and the photoionization / electron-impact
    ratios.  With ``check`` the ratios must sit in their expected decades:
    two-colour 1e2..1e4, one-colour 1e1..1e3."""
    rates = {
        "electron_impact": settings.electron_impact * settings.flux,
        "one_color": settings.one_color * settings.flux,
        "two_color": settings.two_color * settings.flux,
    }
    ratio_2 = rates["two_color"] / rates["electron_impact"]
    ratio_1 = rates["one_color"] / rates["electron_impact"]
    if check:
        problems = []
        if not 1e2 <= ratio_2 <= 1e4:
            problems.append(f"two-colour / electron-impact ratio {ratio_2:.3g} outside [1e2, 1e4]")
        if not 1e1 <= ratio_1 <= 1e3:
            problems.append(f"one-colour / electron-impact ratio {ratio_1:.3g} outside [1e1, 1e3]")
        if problems:
            raise RateRatioError("; ".join(problems))
    return [
        ("electron_impact", rates["electron_impact"]),
        ("one_color", rates["one_color"]),
        ("two_color", rates["two_color"]),
        ("ratio_one_color", ratio_1),
        ("ratio_two_color", ratio_2),
    ]


def photon_energy_ev(wavelength: float) -> float:
    return h * c / wavelength / e


def field_lowering_ev(field: float) -> float:
    """Barrier-suppression lowering of the ionization threshold (eV) in a
    static field (V/m)."""
    return math.sqrt(e * field / (math.pi * epsilon_0))


def field_threshold_1color(ionization_potential_ev: float, photon_ev: float,
                           field: float) -> tuple[bool, float]:
    """Whether two photons ionize in the field, and the field (V/m) at which
    they just do."""
    if ionization_potential_ev <= 0 or photon_ev <= 0 or field < 0:
        raise ValueError("energies must be > 0 and the field >= 0")
    deficit = ionization_potential_ev - 2.0 * photon_ev
    allowed = 2.0 * photon_ev >= ionization_potential_ev - field_lowering_ev(field)
    required = 0.0 if deficit <= 0 else math.pi * epsilon_0 * deficit**2 / e
    return allowed, required
