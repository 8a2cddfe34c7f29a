"""State preparation efficiency, the optical-pumping transient and
photon-count state discrimination for the 171Yb+ qubit."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .atomic import EXCITED, HyperfineConfig, LevelScheme, build_scheme, indices
from .master import (
    COOLING,
    RESONANT_PUMP,
    DriveField,
    NULL_TOL,
    Liouvillian,
    build_liouvillian,
    evolve,
    mixture,
    population,
    scattering_rate,
    steady_state,
    vec,
)

DEFAULT_ALPHA = math.pi / 4


@dataclass
class PrepResult:
    efficiency: float
    time_to_asymptote: float
    degenerate: bool
    initial_efficiency: float
    rho: np.ndarray = field(repr=False)


def _population_weights(manifold: str, F: int, dim: int = 8) -> np.ndarray:
    P = np.zeros((dim, dim))
    for i in indices(manifold, F):
        P[i, i] = 1.0
    return vec(P)


def time_to_fraction(L: Liouvillian, rho0: np.ndarray, observable: np.ndarray,
                     final: float, fraction: float = 0.99) -> float:
    """Time after which ``<observable>`` stays within ``1 - fraction`` of the
    way from its initial value to ``final``.  ``inf`` if it never moves."""
    start = float(np.real(observable @ vec(rho0)))
    gap = abs(final - start)
    if gap < 1e-12:
        return math.inf
    spec = L.spectral
    if spec is None:
        raise RuntimeError("time_to_fraction needs a diagonalizable Liouvillian")
    w, V, Vinv = spec
    amp = (observable @ V) * (Vinv @ vec(rho0))
    decaying = w.real < -NULL_TOL
    if not decaying.any():
        return math.inf
    rates = -w.real[decaying]
    tau = np.geomspace(0.01 / rates.max(), 50.0 / rates.min(), 4000)
    tol = (1.0 - fraction) * gap

    def deviation(t):
        return np.abs(np.real(np.exp(np.outer(t, w[decaying])) @ amp[decaying]))

    bad = np.nonzero(deviation(tau) > tol)[0]
    if bad.size == 0:
        return 0.0
    i = bad[-1]
    if i + 1 >= tau.size:
        return math.inf
    lo, hi = tau[i], tau[i + 1]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if deviation(np.array([mid]))[0] > tol:
            lo = mid
        else:
            hi = mid
    return hi / L.scale


def prepare(drive: DriveField, cfg: HyperfineConfig | None = None,
            rho0: np.ndarray | None = None) -> PrepResult:
    """Steady-state population of |0> = S F=0 under a single optical drive,
    starting from ``rho0`` (default: uniform mixture over S F=1)."""
    scheme = build_scheme(cfg or HyperfineConfig())
    if rho0 is None:
        rho0 = mixture("S", 1)
    L = build_liouvillian(scheme, [drive])
    ss = steady_state(L, rho0)
    eff = population(ss.rho, "S", 0)
    obs = _population_weights("S", 0)
    t99 = time_to_fraction(L, rho0, obs, eff)
    return PrepResult(
        efficiency=min(max(eff, 0.0), 1.0),
        time_to_asymptote=t99,
        degenerate=ss.degenerate,
        initial_efficiency=population(rho0, "S", 0),
        rho=ss.rho,
    )


def prep_offresonant(rabi: float, detuning: float = 0.0, alpha: float = DEFAULT_ALPHA,
                     cfg: HyperfineConfig | None = None, rho0=None) -> PrepResult:
    """Pumping by the cooling light (referenced to S F=1 - P F=0).

    F=1 population is pumped via the 2 GHz detuned P F=1 level while the
    ~15 GHz detuned S F=0 - P F=1 coupling depletes |0>.
    """
    return prepare(DriveField.optical(rabi, detuning, alpha, COOLING), cfg, rho0)


def prep_resonant(rabi: float, alpha: float = DEFAULT_ALPHA,
                  cfg: HyperfineConfig | None = None, rho0=None,
                  detuning: float = 0.0) -> PrepResult:
    """Pumping with light resonant on S F=1 - P F=1."""
    return prepare(DriveField.optical(rabi, detuning, alpha, RESONANT_PUMP), cfg, rho0)


def prep_sweep(alphas_deg: Sequence[float], omegas_over_gamma: Sequence[float],
               scheme: str = "offresonant", cfg: HyperfineConfig | None = None,
               detuning_over_gamma: float = 0.0) -> list[tuple[float, float, float]]:
    """Efficiency on an (alpha, Omega/Gamma) grid as rows
    ``(alpha_deg, omega_over_gamma, efficiency)``."""
    cfg = cfg or HyperfineConfig()
    scheme_obj = build_scheme(cfg)
    reference = {"offresonant": COOLING, "resonant": RESONANT_PUMP}[scheme]
    G = cfg.gamma
    rho0 = mixture("S", 1)
    rows = []
    for om in omegas_over_gamma:
        for a in alphas_deg:
            drive = DriveField.optical(om * G, detuning_over_gamma * G, math.radians(a), reference)
            ss = steady_state(build_liouvillian(scheme_obj, [drive]), rho0)
            rows.append((float(a), float(om), population(ss.rho, "S", 0)))
    return rows


@dataclass
class Transient:
    times: np.ndarray
    rates: np.ndarray
    asymptote: float


def pump_transient(rho0: np.ndarray, drives: Sequence[DriveField], duration: float,
                   n_samples: int = 200, cfg: HyperfineConfig | None = None) -> Transient:
    """Scattering rate (photons/s) sampled while ``drives`` act on ``rho0``."""
    scheme = build_scheme(cfg or HyperfineConfig())
    L = build_liouvillian(scheme, drives)
    ev = evolve(rho0, L, duration, n_samples=n_samples)
    rates = np.array([scattering_rate(r, scheme) for r in ev.states])
    ss = steady_state(L, rho0)
    return Transient(ev.times, rates, scattering_rate(ss.rho, scheme))


def cooling_state(drive: DriveField, microwave_rabi: float,
                  cfg: HyperfineConfig | None = None) -> np.ndarray:
    """Steady state under cooling light plus the resonant 12.64 GHz drive
    that keeps both hyperfine levels populated."""
    scheme = build_scheme(cfg or HyperfineConfig())
    L = build_liouvillian(scheme, [drive, DriveField.microwave(microwave_rabi)])
    return steady_state(L, mixture("S", 1)).rho


def fit_decay_rate(times: np.ndarray, values: np.ndarray, asymptote: float) -> float:
    """Rate of a single-exponential approach to ``asymptote`` (log-linear fit)."""
    y = np.abs(values - asymptote)
    ok = y > 1e-6 * y.max()
    slope, _ = np.polyfit(times[ok], np.log(y[ok]), 1)
    return -slope


# --- detection -------------------------------------------------------------


@dataclass(frozen=True)
class DetectionModel:
    """Photon counting: collection efficiency, dark counts (1/s), exposure
    time T (s) and threshold k (|1> is declared when counts > k)."""

    eta: float = 2e-3
    dark_rate: float = 200.0
    duration: float = 1e-3
    threshold: int = 0
    leakage: bool = True
    prior_dark: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"collection efficiency must be in [0, 1], got {self.eta}")
        if self.dark_rate < 0:
            raise ValueError(f"dark_rate must be >= 0, got {self.dark_rate}")
        if self.duration < 0:
            raise ValueError(f"duration must be >= 0, got {self.duration}")
        if self.threshold < 0:
            raise ValueError(f"threshold must be >= 0, got {self.threshold}")
        if not 0.0 <= self.prior_dark <= 1.0:
            raise ValueError(f"prior_dark must be in [0, 1], got {self.prior_dark}")


@dataclass(frozen=True)
class BrightDark:
    """Two-state reduction of the eight-level dynamics under detection light.

    ``bright_rate``/``dark_rate`` are scattering rates (photons/s) in F=1 and
    F=0; ``pump`` is the F=1 -> F=0 rate and ``depump`` the reverse.
    """

    bright_rate: float
    dark_rate: float
    pump: float
    depump: float


def default_detection_drive(cfg: HyperfineConfig | None = None) -> DriveField:
    cfg = cfg or HyperfineConfig()
    return DriveField.optical(cfg.gamma, 0.0, DEFAULT_ALPHA, COOLING)


def _dark_scattering_rate(scheme: LevelScheme, drive: DriveField) -> float:
    # Quasi-static scattering from |0>: every spontaneous decay is returned
    # to S F=0, so the stationary state is the one reached within F=0.
    from .master import hamiltonian, lindblad_superoperator

    target = indices("S", 0)[0]
    jumps = []
    for e in EXCITED:
        C = np.zeros((8, 8), dtype=complex)
        C[target, e] = math.sqrt(scheme.gamma)
        jumps.append(C)
    L = Liouvillian(lindblad_superoperator(hamiltonian(scheme, [drive]), jumps), scheme.gamma)
    return scattering_rate(steady_state(L, mixture("S", 0)).rho, scheme)


def bright_dark_rates(drive: DriveField | None = None,
                      cfg: HyperfineConfig | None = None) -> BrightDark:
    """Reduce the eight-level dynamics under detection light to a bright
    (F=1) / dark (F=0) pair.

    The slowest relaxation mode moves population between F=0 and the rest;
    its rate is ``pump + depump`` and the stationary F=0 population fixes
    the split.  The bright rate follows from the stationary scattering rate
    once the (tiny) dark contribution is removed.
    """
    cfg = cfg or HyperfineConfig()
    drive = drive or default_detection_drive(cfg)
    scheme = build_scheme(cfg)
    L = build_liouvillian(scheme, [drive])
    w = L.spectral[0]
    order = np.argsort(np.abs(w))
    if abs(w[order[0]]) > NULL_TOL or abs(w[order[1]]) < NULL_TOL:
        raise RuntimeError("detection drive needs a unique stationary state")
    total = -w[order[1]].real * L.scale
    ss = steady_state(L)
    p0 = population(ss.rho, "S", 0)
    dark = _dark_scattering_rate(scheme, drive)
    bright = (scattering_rate(ss.rho, scheme) - dark * p0) / (1.0 - p0)
    return BrightDark(bright_rate=float(bright), dark_rate=float(dark),
                      pump=float(total * p0), depump=float(total * (1.0 - p0)))


@dataclass
class CountHistogram:
    counts: np.ndarray
    probabilities: np.ndarray
    initial: str

    @property
    def mean(self) -> float:
        return float(self.counts @ self.probabilities)

    def to_json(self) -> dict:
        return {"initial": self.initial,
                "probabilities": {int(n): float(p) for n, p in zip(self.counts, self.probabilities)}}


def _emission_rates(model: DetectionModel, rates: BrightDark):
    """Detected-count rates in (bright, dark) and the switching rates."""
    bright = model.eta * rates.bright_rate + model.dark_rate
    if model.leakage:
        dark = model.eta * rates.dark_rate + model.dark_rate
        depump = rates.depump
    else:
        dark = model.dark_rate
        depump = 0.0
    return bright, dark, rates.pump, depump


def _count_pmf(p_start: np.ndarray, bright: float, dark: float, pump: float,
               depump: float, T: float, n_max: int | None = None) -> np.ndarray:
    # Counts are Poisson given the time spent bright; the mixture over that
    # time is evaluated from the probability generating function
    # G(z) = p0 . expm((Q + (z - 1) D) T) . 1 on roots of unity.
    mean_max = max(bright, dark) * T
    if n_max is None:
        n_max = int(mean_max + 12.0 * math.sqrt(mean_max) + 30)
    M = 1 << int(math.ceil(math.log2(n_max + 1)))
    z = np.exp(2j * math.pi * np.arange(M) / M)
    Q = np.array([[-pump, pump], [depump, -depump]], dtype=complex)
    D = np.diag([bright, dark]).astype(complex)
    A = (Q[None] + (z[:, None, None] - 1.0) * D[None]) * T
    G = np.einsum("i,kij,j->k", p_start, sla.expm(A), np.ones(2))
    pmf = np.real(np.fft.fft(G)) / M
    pmf = np.clip(pmf[: n_max + 1], 0.0, None)
    return pmf


def detect_histogram(initial: str, model: DetectionModel, rates: BrightDark | None = None,
                     n_max: int | None = None) -> CountHistogram:
    """Photon-count distribution for an ion starting in ``initial``
    ("bright" = |1>, "dark" = |0>)."""
    if initial not in ("bright", "dark"):
        raise ValueError("initial must be 'bright' or 'dark'")
    rates = rates or bright_dark_rates()
    bright, dark, pump, depump = _emission_rates(model, rates)
    p_start = np.array([1.0, 0.0]) if initial == "bright" else np.array([0.0, 1.0])
    pmf = _count_pmf(p_start, bright, dark, pump, depump, model.duration, n_max)
    return CountHistogram(np.arange(pmf.size), pmf, initial)


def mean_counts(initial: str, model: DetectionModel, rates: BrightDark) -> float:
    """Closed-form mean count of the bright/dark telegraph model."""
    bright, dark, pump, depump = _emission_rates(model, rates)
    T = model.duration
    k = pump + depump
    if k == 0:
        return (bright if initial == "bright" else dark) * T
    p_dark_inf = pump / k
    start_dark = 0.0 if initial == "bright" else 1.0
    excess = (start_dark - p_dark_inf) * (1.0 - math.exp(-k * T)) / k
    time_dark = p_dark_inf * T + excess
    return bright * (T - time_dark) + dark * time_dark


def sample_counts(initial: str, model: DetectionModel, rates: BrightDark, n_runs: int,
                  seed: int) -> np.ndarray:
    """Monte Carlo photon counts: exponential sojourns in bright/dark and
    Poisson emission within each sojourn."""
    rng = np.random.default_rng(seed)
    bright, dark, pump, depump = _emission_rates(model, rates)
    T = model.duration
    emit = (bright, dark)
    leave = (pump, depump)
    out = np.empty(n_runs, dtype=np.int64)
    for i in range(n_runs):
        state = 0 if initial == "bright" else 1
        t = 0.0
        n = 0
        while t < T:
            r = leave[state]
            stay = rng.exponential(1.0 / r) if r > 0 else math.inf
            dt = min(stay, T - t)
            n += rng.poisson(emit[state] * dt)
            t += dt
            state = 1 - state
        out[i] = n
    return out


def error_table(model: DetectionModel, durations: Sequence[float], thresholds: Sequence[int],
                rates: BrightDark | None = None) -> np.ndarray:
    """Discrimination error for every (T, k) pair, shape (len(T), len(k))."""
    rates = rates or bright_dark_rates()
    thresholds = np.asarray(thresholds, dtype=int)
    out = np.empty((len(durations), len(thresholds)))
    for i, T in enumerate(durations):
        m = DetectionModel(model.eta, model.dark_rate, float(T), 0, model.leakage, model.prior_dark)
        pb = detect_histogram("bright", m, rates).probabilities
        pd = detect_histogram("dark", m, rates).probabilities
        cb = np.cumsum(pb)
        cd = np.cumsum(pd)
        cb_k = np.where(thresholds < cb.size, cb[np.minimum(thresholds, cb.size - 1)], 1.0)
        cd_k = np.where(thresholds < cd.size, cd[np.minimum(thresholds, cd.size - 1)], 1.0)
        false_bright = 1.0 - cd_k
        false_dark = cb_k
        out[i] = model.prior_dark * false_bright + (1.0 - model.prior_dark) * false_dark
    return np.clip(out, 0.0, 1.0)


@dataclass
class DetectionOptimum:
    duration: float
    threshold: int
    error: float
    durations: np.ndarray
    thresholds: np.ndarray
    errors: np.ndarray  # (len(durations), len(thresholds))

    @property
    def error_vs_duration(self) -> np.ndarray:
        return self.errors.min(axis=1)


def optimize_detection(model: DetectionModel, durations: Sequence[float],
                       thresholds: Sequence[int], rates: BrightDark | None = None) -> DetectionOptimum:
    """Grid search for the exposure time and threshold with the lowest
    prior-weighted discrimination error.  Ties go to the shortest time and
    smallest threshold."""
    durations = np.asarray(durations, dtype=float)
    thresholds = np.asarray(thresholds, dtype=int)
    if durations.size == 0 or thresholds.size == 0:
        raise ValueError("empty detection grid")
    errors = error_table(model, durations, thresholds, rates)
    i, j = np.unravel_index(np.argmin(errors), errors.shape)
    return DetectionOptimum(float(durations[i]), int(thresholds[j]), float(errors[i, j]),
                            durations, thresholds, errors)


DEFAULT_DURATIONS = np.geomspace(1e-5, 1e-1, 50)
DEFAULT_THRESHOLDS = np.arange(0, 40)
