"""Rotating-frame Hamiltonian, Lindblad superoperator and solvers for the
eight-level 171Yb+ system.

Density matrices are vectorized column-major (``rho.reshape(-1, order="F")``),
so ``vec(A rho B) = kron(B.T, A) @ vec(rho)``.  All rates and frequencies are
angular frequencies in rad/s; numerical work on the superoperator is done in
units of the natural linewidth to keep the matrix entries O(1)..O(1e3).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .atomic import (
    EXCITED,
    GROUND,
    INDEX,
    N_LEVELS,
    SUBLEVELS,
    LevelScheme,
    Sublevel,
    indices,
    polarization_components,
)

log = logging.getLogger(__name__)

OPTICAL = "optical"
MICROWAVE = "microwave"

COOLING = (("S", 1), ("P", 0))
RESONANT_PUMP = (("S", 1), ("P", 1))
DEPLETION = (("S", 0), ("P", 1))
CLOCK = (("S", 0), ("S", 1))

# Eigenvalues (units of gamma) below this magnitude count as stationary.
NULL_TOL = 1e-11


@dataclass(frozen=True)
class DriveField:
    """One drive. ``rabi`` and ``detuning`` in rad/s, ``alpha`` in radians.

    ``reference`` names the (lower, upper) hyperfine levels whose zero-field
    resonance defines ``detuning == 0``.  Positive detuning is blue.
    """

    kind: str
    rabi: float
    detuning: float = 0.0
    alpha: float = math.pi / 4
    reference: tuple[tuple[str, int], tuple[str, int]] = COOLING

    def __post_init__(self):
        if self.kind not in (OPTICAL, MICROWAVE):
            raise ValueError(f"unknown drive kind {self.kind!r}")
        if self.rabi < 0:
            raise ValueError(f"Rabi frequency must be >= 0, got {self.rabi}")
        if self.kind == MICROWAVE and self.reference != CLOCK:
            object.__setattr__(self, "reference", CLOCK)
        if self.kind == OPTICAL:
            (mg, _), (me, _) = self.reference
            if (mg, me) != ("S", "P"):
                raise ValueError(f"optical reference must be S -> P, got {self.reference}")

    @classmethod
    def optical(cls, rabi, detuning=0.0, alpha=math.pi / 4, reference=COOLING):
        return cls(OPTICAL, rabi, detuning, alpha, reference)

    @classmethod
    def microwave(cls, rabi, detuning=0.0):
        return cls(MICROWAVE, rabi, detuning, 0.0, CLOCK)


def _frame(scheme: LevelScheme, drives: Sequence[DriveField]):
    optical = [d for d in drives if d.kind == OPTICAL]
    microwave = [d for d in drives if d.kind == MICROWAVE]
    if len(optical) > 1:
        raise ValueError("at most one optical drive: two S-P drives make the frame time-dependent")
    if len(microwave) > 1:
        raise ValueError("at most one microwave drive: two clock drives make the frame time-dependent")
    opt = optical[0] if optical else None
    mw = microwave[0] if microwave else None

    theta = np.zeros(N_LEVELS)
    s_ref = opt.reference[0][1] if opt else 0
    if mw is not None:
        w_mw = scheme.transition_frequency(("S", 0), ("S", 1)) + mw.detuning
        for i in indices("S", 1):
            theta[i] = w_mw
    else:
        theta[list(GROUND)] = scheme.level_energy("S", s_ref)
    if opt is not None:
        w_l = scheme.transition_frequency(*opt.reference) + opt.detuning
        theta_ground = theta[indices("S", s_ref)[0]]
        theta[list(EXCITED)] = theta_ground + w_l
    return opt, mw, theta


def hamiltonian(scheme: LevelScheme, drives: Sequence[DriveField] = ()) -> np.ndarray:
    """Rotating-wave Hamiltonian (rad/s) in the frame set by the drives.

    Without a microwave both ground hyperfine levels share the frame of the
    optical reference ground level, so the partner transitions appear as
    static detunings of several GHz.  With a microwave the two ground levels
    rotate relative to each other and the optical coupling from the
    non-reference ground level is dropped: in that frame it oscillates at the
    12.64 GHz clock frequency and averages out.
    """
    opt, mw, theta = _frame(scheme, drives)
    H = np.diag(scheme.energies - theta).astype(complex)
    if opt is not None and opt.rabi > 0:
        c = polarization_components(opt.alpha)
        s_ref = opt.reference[0][1]
        coupling = 0.5 * opt.rabi * np.einsum("egq,q->eg", scheme.dipole, c)
        for e in EXCITED:
            for g in GROUND:
                if mw is not None and SUBLEVELS[g].F != s_ref:
                    continue
                H[e, g] += coupling[e, g]
                H[g, e] += np.conj(coupling[e, g])
    if mw is not None and mw.rabi > 0:
        a, b = INDEX[Sublevel("S", 0, 0)], INDEX[Sublevel("S", 1, 0)]
        H[b, a] += 0.5 * mw.rabi
        H[a, b] += 0.5 * mw.rabi
    return H


def jump_operators(scheme: LevelScheme) -> list[np.ndarray]:
    """Collapse operators, one per (polarization, excited F, ground F) block.

    Grouping by polarization keeps the Zeeman coherence transfer between
    sublevels of one hyperfine level; populations decay with the partial
    rates ``gamma * |d|**2``.
    """
    ops = []
    root = math.sqrt(scheme.gamma)
    for iq in range(3):
        for Fe in (0, 1):
            for Fg in (0, 1):
                C = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
                for e in indices("P", Fe):
                    for g in indices("S", Fg):
                        C[g, e] = root * scheme.dipole[e, g, iq]
                if np.any(C):
                    ops.append(C)
    return ops


def lindblad_superoperator(H: np.ndarray, jumps: Sequence[np.ndarray]) -> np.ndarray:
    """Dense column-stacked generator of ``d rho/dt = -i[H, rho] + sum D[C] rho``."""
    n = H.shape[0]
    eye = np.eye(n)
    L = -1j * (np.kron(eye, H) - np.kron(H.T, eye))
    for C in jumps:
        CdC = C.conj().T @ C
        L += np.kron(C.conj(), C) - 0.5 * np.kron(eye, CdC) - 0.5 * np.kron(CdC.T, eye)
    return L


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    n = int(round(math.sqrt(v.size)))
    return v.reshape(n, n, order="F")


class Liouvillian:
    """Superoperator with a lazily cached eigendecomposition.

    ``matrix`` is in rad/s; ``scale`` (the decay rate) is used to make the
    numerics dimensionless.
    """

    def __init__(self, matrix: np.ndarray, scale: float = 1.0):
        self.matrix = np.asarray(matrix, dtype=complex)
        self.scale = float(scale)
        self.dim = int(round(math.sqrt(self.matrix.shape[0])))

    @property
    def reduced(self) -> np.ndarray:
        return self.matrix / self.scale

    @cached_property
    def spectral(self):
        """``(w, V, Vinv)`` of the dimensionless matrix, or None if defective."""
        A = self.reduced
        try:
            w, V = np.linalg.eig(A)
            Vinv = np.linalg.inv(V)
        except np.linalg.LinAlgError:
            return None
        err = np.linalg.norm((V * w) @ Vinv - A) / max(np.linalg.norm(A), 1.0)
        if not np.isfinite(err) or err > 1e-10:
            log.debug("eigendecomposition rejected, reconstruction error %.3g", err)
            return None
        return w, V, Vinv

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return unvec(self.matrix @ vec(rho))

    def trace_residual(self) -> float:
        """Largest |tr(L X)| over basis matrices X (dimensionless)."""
        tr_row = vec(np.eye(self.dim))
        return float(np.abs(tr_row @ self.reduced).max())


def liouvillian(H: np.ndarray, scheme: LevelScheme) -> Liouvillian:
    return Liouvillian(lindblad_superoperator(H, jump_operators(scheme)), scheme.gamma)


def build_liouvillian(scheme: LevelScheme, drives: Sequence[DriveField] = ()) -> Liouvillian:
    return liouvillian(hamiltonian(scheme, drives), scheme)


def _hermitize(rho):
    return 0.5 * (rho + rho.conj().T)


@dataclass
class Evolution:
    times: np.ndarray
    states: np.ndarray  # (n_samples, n, n)
    method: str

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _expm_step_doubling(A, v0, t_end, sample_times, rtol=1e-9):
    # Exponential propagators with step-doubling error control.
    out = []
    t = 0.0
    v = v0.copy()
    h = t_end / 16 if t_end > 0 else 0.0
    targets = list(sample_times)
    while targets and targets[0] <= 0.0:
        out.append(v.copy())
        targets.pop(0)
    while targets:
        h = min(h, targets[0] - t)
        full = sla.expm(A * h) @ v
        half = sla.expm(A * (h / 2))
        two = half @ (half @ v)
        err = np.linalg.norm(two - full) / max(np.linalg.norm(two), 1e-300)
        if err > rtol and h > 1e-14 * max(t_end, 1.0):
            h /= 2
            continue
        v = two
        t += h
        if abs(t - targets[0]) <= 1e-14 * max(t_end, 1.0):
            t = targets.pop(0)
            out.append(v.copy())
        h *= 2
    return out


def evolve(
    rho0: np.ndarray,
    L: Liouvillian,
    t: float,
    n_samples: int = 2,
    times: Sequence[float] | None = None,
) -> Evolution:
    """Propagate ``rho0`` for a duration ``t`` (seconds).

    Returns the states at ``times`` (default: ``n_samples`` evenly spaced
    points including 0 and ``t``).  Uses the cached eigendecomposition of L;
    if it is defective, falls back to step-doubled exponential propagation.
    """
    if t < 0:
        raise ValueError("duration must be >= 0")
    if times is None:
        times = np.linspace(0.0, t, max(n_samples, 1)) if n_samples > 1 else np.array([t])
    times = np.asarray(times, dtype=float)
    v0 = vec(rho0).astype(complex)
    tau = times * L.scale
    spec = L.spectral
    if spec is not None:
        w, V, Vinv = spec
        c = Vinv @ v0
        vs = (V @ (np.exp(np.outer(w, tau)) * c[:, None])).T
        method = "spectral"
    else:
        order = np.argsort(tau)
        vs_sorted = _expm_step_doubling(L.reduced, v0, float(tau.max()), tau[order])
        vs = np.empty((len(tau), v0.size), dtype=complex)
        vs[order] = vs_sorted
        method = "step-doubling"
    # L conserves the trace exactly; strip the round-off of the reconstruction.
    states = np.array([_hermitize(unvec(v)) for v in vs])
    states /= np.trace(states, axis1=1, axis2=2).real[:, None, None] / np.trace(rho0).real
    # t = 0 is exact by definition.
    states[times == 0] = rho0
    return Evolution(times=times, states=states, method=method)


@dataclass
class SteadyState:
    rho: np.ndarray
    degenerate: bool
    residual: float
    null_dim: int = 1


def _solve_trace_constrained(A: np.ndarray) -> np.ndarray:
    n = int(round(math.sqrt(A.shape[0])))
    tr_row = vec(np.eye(n)).astype(complex)
    # Replace the row with the largest overlap on the trace functional.
    M = A.copy()
    M[0] = tr_row
    b = np.zeros(A.shape[0], dtype=complex)
    b[0] = 1.0
    lu = sla.lu_factor(M)
    x = sla.lu_solve(lu, b)
    # Iterative refinement with residuals in extended precision.
    M_ext = M.astype(np.clongdouble)
    b_ext = b.astype(np.clongdouble)
    for _ in range(4):
        r = b_ext - M_ext @ x.astype(np.clongdouble)
        dx = sla.lu_solve(lu, r.astype(complex))
        x = x + dx
        if np.linalg.norm(dx) < 1e-17 * np.linalg.norm(x):
            break
    return x


def steady_state(L: Liouvillian, rho0: np.ndarray | None = None) -> SteadyState:
    """Stationary state of L with unit trace.

    If the null space is degenerate the result is the stationary part of
    ``rho0`` (default: maximally mixed), i.e. the infinite-time average of
    the evolution from it, and ``degenerate`` is set.
    """
    A = L.reduced
    spec = L.spectral
    null_dim = 1
    if spec is not None:
        w = spec[0]
        null_dim = int((np.abs(w) < NULL_TOL).sum())
    if null_dim <= 1:
        x = _solve_trace_constrained(A)
        rho = _hermitize(unvec(x))
        degenerate = False
    else:
        if rho0 is None:
            rho0 = np.eye(L.dim) / L.dim
        w, V, Vinv = spec
        keep = np.abs(w) < NULL_TOL
        x = V[:, keep] @ (Vinv[keep] @ vec(rho0))
        rho = _hermitize(unvec(x))
        degenerate = True
    residual = float(np.linalg.norm(A @ vec(rho)))
    return SteadyState(rho=rho, degenerate=degenerate, residual=residual, null_dim=max(null_dim, 1))


def scattering_rate(rho: np.ndarray, scheme: LevelScheme) -> float:
    """Photon scattering rate (photons/s): gamma times the P population."""
    return scheme.gamma * sum(float(rho[i, i].real) for i in EXCITED)


def population(rho: np.ndarray, manifold: str, F: int) -> float:
    return sum(float(rho[i, i].real) for i in indices(manifold, F))


def mixture(manifold: str, F: int) -> np.ndarray:
    """Uniform incoherent mixture over one hyperfine level."""
    rho = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
    idx = indices(manifold, F)
    for i in idx:
        rho[i, i] = 1.0 / len(idx)
    return rho


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.linalg.eigvalsh(_hermitize(a - b))).sum())
