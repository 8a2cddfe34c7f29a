"""Paul-trap Mathieu parameters, secular frequencies and linear Coulomb
crystal geometry."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.constants import atomic_mass, e, epsilon_0
from scipy.integrate import solve_ivp

LINEAR = "linear"
RING = "ring"

# First stability region edge for a = 0.
Q_STABILITY_EDGE = 0.908
# Upper end of the validity window of the lowest-order pseudopotential.
Q_PSEUDOPOTENTIAL = 0.3


class AccuracyWarning(UserWarning):
    """Lowest-order pseudopotential formula used outside q <= 0.3."""


@dataclass(frozen=True)
class TrapConfig:
    """Electrode geometry and drive.

    ``rf_frequency`` is an angular frequency (rad/s), voltages in volts,
    lengths in metres and ``mass_amu`` in atomic mass units.  For the ring
    trap ``r0`` is the ring radius and ``z0`` half the endcap spacing.

    The default is the linear trap: 21.6 MHz drive, ~400 V RF, 0.75 mm inner
    radius, endcaps 4 mm apart at 1 V, loaded with 172Yb+.  ``kappa_z`` is a
    calibration that puts the axial frequency near 50 kHz at 1 V.
    """

    topology: str = LINEAR
    rf_frequency: float = 2 * math.pi * 21.6e6
    rf_amplitude: float = 400.0
    dc_voltage: float = 1.0
    r0: float = 0.75e-3
    z0: float = 2.0e-3
    kappa_r: float = 1.0
    kappa_z: float = 0.35
    mass_amu: float = 172.0

    def __post_init__(self):
        if self.topology not in (LINEAR, RING):
            raise ValueError(f"topology must be 'linear' or 'ring', got {self.topology!r}")
        for name in ("rf_frequency", "r0", "z0", "kappa_r", "kappa_z", "mass_amu"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("rf_amplitude", "dc_voltage"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.kappa_r > 1 or self.kappa_z > 1:
            raise ValueError("geometric factors must not exceed 1")

    @property
    def mass(self) -> float:
        return self.mass_amu * atomic_mass


def ring_trap() -> TrapConfig:
    """The miniature ring trap: 2 mm ring, endcaps ~sqrt(2) mm apart, 9.5 MHz, 700 V."""
    return TrapConfig(
        topology=RING,
        rf_frequency=2 * math.pi * 9.5e6,
        rf_amplitude=700.0,
        dc_voltage=0.0,
        r0=1.0e-3,
        z0=math.sqrt(2) / 2 * 1e-3,
        kappa_r=1.0,
        kappa_z=1.0,
    )


@dataclass
class SecularResult:
    a: np.ndarray  # (x, y, z)
    q: np.ndarray
    rf_frequency: float
    omega: np.ndarray | None = None  # angular secular frequencies
    stable: bool | None = None

    def to_json(self) -> dict:
        out = {"a": self.a.tolist(), "q": self.q.tolist(),
               "rf_frequency_hz": self.rf_frequency / (2 * math.pi)}
        if self.omega is not None:
            out["secular_frequency_hz"] = [w / (2 * math.pi) for w in self.omega]
            out["stable"] = self.stable
        return out


def mathieu_parameters(cfg: TrapConfig) -> SecularResult:
    m, W = cfg.mass, cfg.rf_frequency
    if cfg.topology == LINEAR:
        q_r = 2 * e * cfg.kappa_r * cfg.rf_amplitude / (m * cfg.r0**2 * W**2)
        a_z = 8 * e * cfg.kappa_z * cfg.dc_voltage / (m * cfg.z0**2 * W**2)
        a = np.array([-a_z / 2, -a_z / 2, a_z])
        q = np.array([q_r, -q_r, 0.0])
    else:
        # Hyperboloid ring trap, RF and DC applied between ring and endcaps.
        d2 = cfg.r0**2 + 2 * cfg.z0**2
        q_r = 4 * e * cfg.kappa_r * cfg.rf_amplitude / (m * d2 * W**2)
        a_r = -8 * e * cfg.kappa_z * cfg.dc_voltage / (m * d2 * W**2)
        a = np.array([a_r, a_r, -2 * a_r])
        q = np.array([q_r, q_r, -2 * q_r])
    return SecularResult(a=a + 0.0, q=q + 0.0, rf_frequency=W)


def secular_frequencies(res: SecularResult, rf_frequency: float | None = None) -> SecularResult:
    """Lowest-order pseudopotential frequencies ``(W/2) sqrt(a + q^2/2)``."""
    W = res.rf_frequency if rf_frequency is None else rf_frequency
    radicand = res.a + res.q**2 / 2
    qmax = float(np.abs(res.q).max())
    stable = bool(np.all(radicand > 0) and qmax <= Q_STABILITY_EDGE)
    if stable and qmax > Q_PSEUDOPOTENTIAL:
        warnings.warn(f"q = {qmax:.3f} > {Q_PSEUDOPOTENTIAL}: pseudopotential frequencies "
                      "are only approximate", AccuracyWarning, stacklevel=2)
    omega = W / 2 * np.sqrt(np.clip(radicand, 0.0, None))
    return SecularResult(a=res.a, q=res.q, rf_frequency=W, omega=omega, stable=stable)


def trap_frequencies(cfg: TrapConfig) -> SecularResult:
    return secular_frequencies(mathieu_parameters(cfg))


class UnstableMotion(RuntimeError):
    pass


def floquet_frequency(a: float, q: float, rf_frequency: float, n_secular: int = 12) -> float:
    """Secular frequency from direct integration of the Mathieu equation.

    Integrates ``u'' + (a + 2 q cos(W t)) (W/2)^2 u = 0`` in units of the RF
    phase and counts zero crossings of ``u``; the micromotion factor never
    vanishes for q < 2, so crossings belong to the slow oscillation.
    """
    beta_guess = math.sqrt(max(a + q * q / 2, 1e-12))
    # Phase s = W t; the secular period in s is 4 pi / beta.
    s_end = n_secular * 4 * math.pi / beta_guess

    def rhs(s, y):
        return (y[1], -(a + 2 * q * math.cos(s)) * 0.25 * y[0])

    def blowup(s, y):
        return abs(y[0]) - 1e8

    blowup.terminal = True
    sol = solve_ivp(rhs, (0.0, s_end), (1.0, 0.0), method="DOP853", rtol=1e-11, atol=1e-12,
                    events=blowup, dense_output=True, max_step=1.0)
    if sol.status == 1 or not np.all(np.isfinite(sol.y)):
        raise UnstableMotion(f"Mathieu solution diverges for a={a}, q={q}")
    s = sol.t
    u = sol.y[0]
    idx = np.nonzero(np.signbit(u[:-1]) != np.signbit(u[1:]))[0]
    if idx.size < 3:
        raise UnstableMotion(f"no secular oscillation found for a={a}, q={q}")
    crossings = []
    for i in idx:
        lo, hi = s[i], s[i + 1]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if np.signbit(sol.sol(mid)[0]) == np.signbit(u[i]):
                lo = mid
            else:
                hi = mid
        crossings.append(0.5 * (lo + hi))
    crossings = np.array(crossings)
    # Successive crossings are half a secular period apart.
    half_period = (crossings[-1] - crossings[0]) / (len(crossings) - 1)
    return math.pi / half_period * rf_frequency


# --- Coulomb crystals --------------------------------------------------------

NEWTON_DAMPING = 0.5
NEWTON_MAX_ITER = 200
FORCE_TOL = 1e-10


class CrystalConvergenceError(RuntimeError):
    pass


def _forces(u: np.ndarray) -> np.ndarray:
    """Dimensionless force ``-dV/du`` on each ion.

    V(u) = sum u_m^2 / 2 + sum_{n<m} 1 / |u_m - u_n|.
    """
    d = u[:, None] - u[None, :]
    np.fill_diagonal(d, np.inf)
    return -u + np.sum(np.sign(d) / d**2, axis=1)


def _hessian(u: np.ndarray) -> np.ndarray:
    d = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(d, np.inf)
    H = -2.0 / d**3
    np.fill_diagonal(H, 0.0)
    np.fill_diagonal(H, 1.0 + 2.0 * np.sum(1.0 / d**3, axis=1))
    return H


def equilibrium_positions(n: int) -> np.ndarray:
    """Dimensionless equilibrium positions of ``n`` ions in a harmonic axial
    well, sorted ascending (damped Newton from a uniform seed)."""
    if not 1 <= n <= 50:
        raise ValueError(f"ion number must be in 1..50, got {n}")
    if n == 1:
        return np.zeros(1)
    spacing = 2.0 * n ** -0.56
    u = (np.arange(n) - (n - 1) / 2) * spacing
    residual = np.inf
    for _ in range(NEWTON_MAX_ITER):
        f = _forces(u)
        residual = np.abs(f).max()
        if residual < FORCE_TOL * 1e-2:
            break
        step = np.linalg.solve(_hessian(u), f)
        scale = NEWTON_DAMPING
        new = u + scale * step
        while np.any(np.diff(new) <= 0):
            scale *= 0.5
            new = u + scale * step
        u = new
    residual = np.abs(_forces(u)).max()
    if residual >= FORCE_TOL:
        raise CrystalConvergenceError(
            f"equilibrium for N={n} did not converge (force residual {residual:.3g})")
    u = 0.5 * (u - u[::-1])
    return u


def length_scale(omega_z: float, mass_amu: float) -> float:
    """``(e^2 / (4 pi eps0 m omega_z^2))^(1/3)`` in metres."""
    m = mass_amu * atomic_mass
    return (e**2 / (4 * math.pi * epsilon_0 * m * omega_z**2)) ** (1.0 / 3.0)


@dataclass
class IonCrystal:
    n: int
    positions_dimensionless: np.ndarray
    length_scale: float
    omega_z: float
    mass_amu: float

    @property
    def positions(self) -> np.ndarray:
        return self.length_scale * self.positions_dimensionless

    @property
    def min_spacing(self) -> float:
        if self.n < 2:
            return math.inf
        return float(np.diff(self.positions).min())

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "omega_z_hz": self.omega_z / (2 * math.pi),
            "mass_amu": self.mass_amu,
            "length_scale_um": self.length_scale * 1e6,
            "positions_um": [p * 1e6 for p in self.positions],
            "min_spacing_um": None if self.n < 2 else self.min_spacing * 1e6,
        }


def crystal_geometry(n: int, omega_z: float, mass_amu: float = 172.0) -> IonCrystal:
    if not omega_z > 0:
        raise ValueError("omega_z must be > 0")
    return IonCrystal(n, equilibrium_positions(n), length_scale(omega_z, mass_amu), omega_z, mass_amu)
