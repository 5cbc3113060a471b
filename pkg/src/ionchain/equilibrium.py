"""Classical equilibrium of an ion chain in a harmonic trap.

Coordinates are flat arrays of length ``3N`` in direction-major order:
``[x_1..x_N, y_1..y_N, z_1..z_N]``, all in units of ``l0``.  The potential
(units of ``e0``) is

    V = 1/2 sum_{alpha,i} beta_alpha^2 x_{alpha i}^2 + sum_{i<j} 1/|r_i - r_j|.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .units import TrapConfig

GRADIENT_TOL = 1e-12
MAX_ITER = 500


class CoincidentIonsError(ValueError):
    """Two ions sit at the same point and the Coulomb energy diverges."""


class ConvergenceError(RuntimeError):
    def __init__(self, message, positions=None, residual=None, iterations=None):
        super().__init__(message)
        self.positions = positions
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class IonChain:
    z_positions: np.ndarray
    residual_force_norm: float
    potential_value: float
    iterations: int = 0

    @property
    def n_ions(self):
        return len(self.z_positions)

    def positions3d(self):
        """Flat 3N coordinate vector of the linear-chain equilibrium."""
        n = self.n_ions
        return np.concatenate([np.zeros(2 * n), self.z_positions])

    def separation(self, i, j):
        return abs(self.z_positions[j] - self.z_positions[i])


def _split(positions):
    r = np.asarray(positions, dtype=float)
    if r.ndim != 1 or r.size % 3:
        raise ValueError("positions must be a flat array of length 3N")
    return r.reshape(3, -1)


def _pair_geometry(r):
    """Displacements ``d[:, i, j] = r_i - r_j`` and distances."""
    d = r[:, :, None] - r[:, None, :]
    dist = np.sqrt(np.einsum("aij,aij->ij", d, d))
    n = r.shape[1]
    off = ~np.eye(n, dtype=bool)
    if np.any(dist[off] == 0.0):
        i, j = np.argwhere((dist == 0.0) & off)[0]
        raise CoincidentIonsError(f"ions {i} and {j} are coincident")
    np.fill_diagonal(dist, np.inf)
    return d, dist


def potential(positions, betas=(1.0, 1.0, 1.0)):
    r = _split(positions)
    b2 = np.asarray(betas, dtype=float) ** 2
    trap = 0.5 * float(np.sum(b2[:, None] * r * r))
    if r.shape[1] < 2:
        return trap
    _, dist = _pair_geometry(r)
    iu = np.triu_indices(r.shape[1], 1)
    return trap + float(np.sum(1.0 / dist[iu]))


def gradient(positions, betas=(1.0, 1.0, 1.0)):
    r = _split(positions)
    b2 = np.asarray(betas, dtype=float) ** 2
    g = b2[:, None] * r
    if r.shape[1] >= 2:
        d, dist = _pair_geometry(r)
        g = g - np.sum(d / dist**3, axis=2)
    return g.reshape(-1)


def hessian(positions, betas=(1.0, 1.0, 1.0)):
    r = _split(positions)
    n = r.shape[1]
    b2 = np.asarray(betas, dtype=float) ** 2
    h = np.zeros((3, n, 3, n))
    for a in range(3):
        h[a, np.arange(n), a, np.arange(n)] = b2[a]
    if n >= 2:
        d, dist = _pair_geometry(r)
        inv3 = 1.0 / dist**3
        inv5 = 1.0 / dist**5
        # second derivative of 1/|r_i - r_j| w.r.t. r_i (pair block)
        pair = 3.0 * d[:, None, :, :] * d[None, :, :, :] * inv5
        pair[[0, 1, 2], [0, 1, 2]] -= inv3
        h -= np.transpose(pair, (0, 2, 1, 3))
        diag = pair.sum(axis=3)
        for i in range(n):
            h[:, i, :, i] += diag[:, :, i]
    h = h.reshape(3 * n, 3 * n)
    return 0.5 * (h + h.T)


def _axial_energy(z):
    d = z[:, None] - z[None, :]
    iu = np.triu_indices(len(z), 1)
    return 0.5 * float(z @ z) + float(np.sum(1.0 / np.abs(d[iu])))


def _axial_gradient(z):
    d = z[:, None] - z[None, :]
    np.fill_diagonal(d, 1.0)
    f = np.sign(d) / d**2
    np.fill_diagonal(f, 0.0)
    return z - f.sum(axis=1)


def _axial_hessian(z):
    d = np.abs(z[:, None] - z[None, :])
    np.fill_diagonal(d, 1.0)
    c = 2.0 / d**3
    np.fill_diagonal(c, 0.0)
    h = -c
    h[np.diag_indices_from(h)] = 1.0 + c.sum(axis=1)
    return h


def default_guess(n_ions):
    """Evenly spaced chain whose outer ions sit at +-0.48 N^0.56."""
    if n_ions == 1:
        return np.zeros(1)
    return np.linspace(-1.0, 1.0, n_ions) * 0.48 * n_ions**0.56


def solve_equilibrium(config: TrapConfig, initial_guess=None, tol=GRADIENT_TOL,
                      max_iter=MAX_ITER) -> IonChain:
    """Damped Newton iteration on the axial coordinates.

    The transverse equilibrium of a linear chain is identically zero, so only
    the ``N`` axial positions are optimised.  The axial energy is strictly
    convex on the set of ordered configurations; steps that would reorder
    ions are cut back before the sufficient-decrease test.
    """
    n = config.n_ions
    if n == 1:
        return IonChain(np.zeros(1), 0.0, 0.0, 0)
    z = default_guess(n) if initial_guess is None else np.array(initial_guess, dtype=float)
    if z.shape != (n,):
        raise ValueError(f"initial guess must have length {n}")
    z = np.sort(z)
    if np.any(np.diff(z) <= 0):
        raise CoincidentIonsError("initial guess has coincident ions")

    energy = _axial_energy(z)
    g = _axial_gradient(z)
    for it in range(max_iter):
        res = float(np.max(np.abs(g)))
        if res < tol:
            return IonChain(z, res, energy, it)
        step = -np.linalg.solve(_axial_hessian(z), g)
        slope = float(g @ step)
        t = 1.0
        while True:
            trial = z + t * step
            if np.all(np.diff(trial) > 0):
                e_trial = _axial_energy(trial)
                # roundoff slack: near the minimum the energy change is below eps
                if e_trial <= energy + 1e-4 * t * slope + 1e-14 * abs(energy):
                    break
            t *= 0.5
            if t < 1e-12:
                raise ConvergenceError("line search failed", z, res, it)
        z, energy = trial, e_trial
        g = _axial_gradient(z)
    res = float(np.max(np.abs(g)))
    if res < tol:
        return IonChain(z, res, energy, max_iter)
    raise ConvergenceError(f"no convergence after {max_iter} iterations (residual {res:.3e})",
                           z, res, max_iter)
