"""Hyperfine/Zeeman level scheme of the 171Yb+ S1/2 - P1/2 transition.

The eight sublevels are ordered

    0      S F=0 mF=0
    1..3   S F=1 mF=-1, 0, +1
    4      P F=0 mF=0
    5..7   P F=1 mF=-1, 0, +1

Dipole amplitudes ``d[e, g, q]`` follow the standard spherical-tensor phase
convention (Wigner-Eckart with 3j/6j symbols) and are normalized so that
``sum_{g,q} |d[e, g, q]|**2 == 1`` for every excited sublevel ``e``.  The
partial decay rate ``e -> g`` is then ``gamma * sum_q |d[e, g, q]|**2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.constants import physical_constants, h
from sympy import Rational
from sympy.physics.wigner import wigner_3j, wigner_6j

MU_B = physical_constants["Bohr magneton"][0]
TWO_PI = 2.0 * math.pi

NUCLEAR_SPIN = Rational(1, 2)
J_GROUND = Rational(1, 2)
J_EXCITED = Rational(1, 2)

POLARIZATIONS = (-1, 0, 1)


@dataclass(frozen=True, order=True)
class Sublevel:
    manifold: str  # "S" or "P"
    F: int
    mF: int

    def __post_init__(self):
        if self.manifold not in ("S", "P"):
            raise ValueError(f"manifold must be 'S' or 'P', got {self.manifold!r}")
        if self.F not in (0, 1):
            raise ValueError(f"F must be 0 or 1, got {self.F}")
        if abs(self.mF) > self.F:
            raise ValueError(f"|mF| must not exceed F (F={self.F}, mF={self.mF})")

    @property
    def label(self) -> str:
        return f"{self.manifold}{self.F},{self.mF:+d}"


SUBLEVELS: tuple[Sublevel, ...] = (
    Sublevel("S", 0, 0),
    Sublevel("S", 1, -1),
    Sublevel("S", 1, 0),
    Sublevel("S", 1, 1),
    Sublevel("P", 0, 0),
    Sublevel("P", 1, -1),
    Sublevel("P", 1, 0),
    Sublevel("P", 1, 1),
)
N_LEVELS = len(SUBLEVELS)
INDEX = {s: i for i, s in enumerate(SUBLEVELS)}
GROUND = tuple(i for i, s in enumerate(SUBLEVELS) if s.manifold == "S")
EXCITED = tuple(i for i, s in enumerate(SUBLEVELS) if s.manifold == "P")


def indices(manifold: str, F: int) -> tuple[int, ...]:
    """Basis indices of all sublevels in one hyperfine level."""
    return tuple(i for i, s in enumerate(SUBLEVELS) if s.manifold == manifold and s.F == F)


# Linear-regime Lande factors for J=1/2, I=1/2 with the nuclear moment neglected.
DEFAULT_G_FACTORS = {("S", 0): 0.0, ("S", 1): 1.0, ("P", 0): 0.0, ("P", 1): 1.0 / 3.0}


@dataclass(frozen=True)
class HyperfineConfig:
    """Physical constants of the 171Yb+ S1/2 - P1/2 system.

    All frequencies are ordinary frequencies in Hz.  The excited-state
    hyperfine splitting is a calibration value: with the 12.64 GHz ground
    splitting it places the S F=0 - P F=1 line about 15 GHz from the
    cooling resonance.
    """

    hfs_ground_hz: float = 12.64e9
    hfs_excited_hz: float = 2.1e9
    gamma_hz: float = 19.6e6
    b_field_tesla: float = 1.0e-4
    g_factors: Mapping[tuple[str, int], float] = field(
        default_factory=lambda: dict(DEFAULT_G_FACTORS)
    )

    def __post_init__(self):
        errors = self.problems()
        if errors:
            raise ValueError("; ".join(errors))

    def problems(self) -> list[str]:
        errors = []
        if not self.gamma_hz > 0:
            errors.append(f"gamma_hz must be > 0 (got {self.gamma_hz})")
        if not self.hfs_ground_hz > 0:
            errors.append(f"hfs_ground_hz must be > 0 (got {self.hfs_ground_hz})")
        if not self.hfs_excited_hz > 0:
            errors.append(f"hfs_excited_hz must be > 0 (got {self.hfs_excited_hz})")
        if not self.b_field_tesla >= 0:
            errors.append(f"b_field_tesla must be >= 0 (got {self.b_field_tesla})")
        return errors

    @property
    def gamma(self) -> float:
        """Natural linewidth as an angular frequency (rad/s)."""
        return TWO_PI * self.gamma_hz

    def replace(self, **changes) -> "HyperfineConfig":
        values = {
            "hfs_ground_hz": self.hfs_ground_hz,
            "hfs_excited_hz": self.hfs_excited_hz,
            "gamma_hz": self.gamma_hz,
            "b_field_tesla": self.b_field_tesla,
            "g_factors": dict(self.g_factors),
        }
        values.update(changes)
        return HyperfineConfig(**values)


CONFIG_KEYS = ("gamma_hz", "hfs_ground_hz", "hfs_excited_hz", "b_field_tesla")


def parse_key_values(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


def load_hyperfine_config(path: str | Path) -> HyperfineConfig:
    """Read a HyperfineConfig from a flat key-value text file."""
    values = parse_key_values(Path(path).read_text())
    unknown = sorted(set(values) - set(CONFIG_KEYS))
    if unknown:
        raise ValueError(f"unknown keys: {', '.join(unknown)}")
    return HyperfineConfig(**{k: float(v) for k, v in values.items()})


def zeeman_shift(sub: Sublevel, cfg: HyperfineConfig) -> float:
    """Linear Zeeman shift of a sublevel in Hz."""
    g = cfg.g_factors.get((sub.manifold, sub.F), 0.0)
    return g * sub.mF * MU_B * cfg.b_field_tesla / h


def polarization_components(alpha: float) -> np.ndarray:
    """Spherical components (c_-1, c_0, c_+1) of linear polarization at angle
    ``alpha`` (radians) to the magnetic field."""
    s = math.sin(alpha) / math.sqrt(2.0)
    return np.array([s, math.cos(alpha), -s])


@lru_cache(maxsize=None)
def _dipole_table() -> np.ndarray:
    # Wigner-Eckart in the coupled |J I F mF> basis; reduced <J'||d||J> set to 1,
    # rescaled below so each excited sublevel has unit total strength.
    d = np.zeros((N_LEVELS, N_LEVELS, 3))
    for e, se in enumerate(SUBLEVELS):
        if se.manifold != "P":
            continue
        for g, sg in enumerate(SUBLEVELS):
            if sg.manifold != "S":
                continue
            reduced = (
                (-1) ** (J_EXCITED + NUCLEAR_SPIN + sg.F + 1)
                * math.sqrt((2 * sg.F + 1) * (2 * se.F + 1))
                * wigner_6j(J_EXCITED, se.F, NUCLEAR_SPIN, sg.F, J_GROUND, 1)
            )
            for iq, q in enumerate(POLARIZATIONS):
                if se.mF != sg.mF + q:
                    continue
                three_j = wigner_3j(se.F, 1, sg.F, -se.mF, q, sg.mF)
                d[e, g, iq] = float((-1) ** (se.F - se.mF) * three_j * reduced)
    total = (d[EXCITED[0]] ** 2).sum()
    d /= math.sqrt(total)
    d[np.abs(d) < 1e-15] = 0.0
    return d


@dataclass(frozen=True)
class LevelScheme:
    """Eight-level scheme built from a HyperfineConfig.

    ``energies`` are absolute angular frequencies (rad/s) relative to the
    S F=0 level, with the optical S-P energy set to zero (only differences
    within a manifold and detunings from drive references matter).
    """

    cfg: HyperfineConfig
    energies: np.ndarray
    dipole: np.ndarray
    decay: dict[int, list[tuple[int, float]]]

    @property
    def gamma(self) -> float:
        return self.cfg.gamma

    def partial_rate(self, e: int, g: int) -> float:
        return self.cfg.gamma * float((self.dipole[e, g] ** 2).sum())

    def transition_frequency(self, ground: tuple[str, int], excited: tuple[str, int]) -> float:
        """Zero-field angular frequency between two hyperfine levels."""
        return self.level_energy(*excited) - self.level_energy(*ground)

    def level_energy(self, manifold: str, F: int) -> float:
        return _level_energy(self.cfg, manifold, F)


def _level_energy(cfg: HyperfineConfig, manifold: str, F: int) -> float:
    hfs = cfg.hfs_ground_hz if manifold == "S" else cfg.hfs_excited_hz
    return TWO_PI * hfs * F


def build_scheme(cfg: HyperfineConfig) -> LevelScheme:
    problems = cfg.problems()
    if problems:
        raise ValueError("; ".join(problems))
    energies = np.array(
        [_level_energy(cfg, s.manifold, s.F) + TWO_PI * zeeman_shift(s, cfg) for s in SUBLEVELS]
    )
    dipole = _dipole_table().copy()
    dipole.setflags(write=False)
    energies.setflags(write=False)
    decay = {}
    for e in EXCITED:
        channels = []
        for g in GROUND:
            strength = float((dipole[e, g] ** 2).sum())
            if strength > 0:
                channels.append((g, cfg.gamma * strength))
        decay[e] = channels
    return LevelScheme(cfg=cfg, energies=energies, dipole=dipole, decay=decay)
