"""Independent reference implementations shared by the unit and acceptance
tests."""

import math

import numpy as np
from scipy.optimize import minimize

from ybtrap.master import Liouvillian, lindblad_superoperator


def brute_force_positions(n):
    """Minimize the total dimensionless potential directly with BFGS."""

    def energy(u):
        d = np.abs(u[:, None] - u[None, :])
        iu = np.triu_indices(n, 1)
        return 0.5 * np.sum(u**2) + np.sum(1.0 / d[iu])

    def grad(u):
        d = u[:, None] - u[None, :]
        np.fill_diagonal(d, np.inf)
        return u - np.sum(np.sign(d) / d**2, axis=1)

    u0 = np.linspace(-1, 1, n) * n ** 0.6
    res = minimize(energy, u0, jac=grad, method="BFGS", options={"gtol": 1e-13, "maxiter": 10000})
    return np.sort(res.x)


def two_level(omega, delta, gamma):
    """Driven two-level atom (ground, excited) as a Liouvillian."""
    H = np.array([[0, omega / 2], [omega / 2, -delta]], dtype=complex)
    C = np.array([[0, math.sqrt(gamma)], [0, 0]], dtype=complex)
    return Liouvillian(lindblad_superoperator(H, [C]), gamma)


def two_level_excited(omega, delta, gamma):
    return (omega**2 / 4) / (delta**2 + omega**2 / 2 + gamma**2 / 4)


def random_state(rng, n=8):
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = A @ A.conj().T
    return rho / np.trace(rho).real


def density_matrix_errors(rho):
    """(hermiticity error, trace error, most negative eigenvalue)."""
    herm = float(np.abs(rho - rho.conj().T).max())
    tr = float(abs(np.trace(rho) - 1))
    return herm, tr, float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
