"""Harmonic phonon modes of a linear chain and zigzag detection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .equilibrium import IonChain, hessian, solve_equilibrium
from .units import TrapConfig

BRANCHES = ("x", "y", "z")


def jacobi_eigh(a, tol=1e-15, max_sweeps=100):
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvectors as columns, in
    the order the rotations leave them (unsorted).
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max(initial=0.0))):
        raise ValueError("matrix must be symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v
    scale = np.linalg.norm(a)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(a, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise RuntimeError("Jacobi iteration did not converge")
    return a.diagonal().copy(), v


def fix_sign(vec, rel_tol=1e-9):
    """Flip ``vec`` so its largest-magnitude entry is positive.

    Entries within ``rel_tol`` of the maximum count as ties; the lowest index
    among them decides.
    """
    mags = np.abs(vec)
    top = mags.max()
    k = int(np.flatnonzero(mags >= top * (1.0 - rel_tol))[0])
    return -vec if vec[k] < 0 else vec


def sign_changes(vec, zero_tol=1e-10):
    s = np.sign(vec[np.abs(vec) > zero_tol])
    return int(np.count_nonzero(s[1:] != s[:-1]))


def mode_name(changes, n_ions):
    if changes == 0:
        return "center-of-mass"
    if changes == 1:
        return "tilt"
    if changes == n_ions - 1:
        return "zigzag"
    return ""


@dataclass(frozen=True)
class NormalModes:
    """Phonon modes ordered by branch (x, y, z), ascending within a branch.

    ``frequencies[a]`` is ``w_a / w_z`` (NaN for an unstable mode) and
    ``squared[a]`` the Hessian eigenvalue.  ``vectors[:, a]`` is the 3N
    eigenvector ``b_a`` in direction-major coordinate order; ``branch_vectors``
    holds the N-component restriction to the mode's own direction.
    """

    squared: np.ndarray
    vectors: np.ndarray
    n_ions: int
    betas: tuple
    sign_changes: tuple = ()
    unstable_branches: tuple = ()
    frequencies: np.ndarray = field(init=False)

    def __post_init__(self):
        with np.errstate(invalid="ignore"):
            w = np.where(self.squared > 0, np.sqrt(np.abs(self.squared)), np.nan)
        object.__setattr__(self, "frequencies", w)

    @property
    def n_modes(self):
        return 3 * self.n_ions

    @property
    def stable(self):
        return not self.unstable_branches

    @property
    def branch_labels(self):
        return tuple(b for b in BRANCHES for _ in range(self.n_ions))

    @property
    def mode_names(self):
        return tuple(mode_name(c, self.n_ions) for c in self.sign_changes)

    def branch_slice(self, branch):
        k = BRANCHES.index(branch)
        return slice(k * self.n_ions, (k + 1) * self.n_ions)

    def branch_frequencies(self, branch):
        return self.frequencies[self.branch_slice(branch)]

    def branch_vectors(self, branch):
        """``(N, N)`` array; column ``k`` is the ``k``-th mode of the branch."""
        s = self.branch_slice(branch)
        return self.vectors[s, s]

    def cm_index(self, branch):
        """Mode index of the centre-of-mass mode of a branch."""
        s = self.branch_slice(branch)
        names = self.mode_names[s]
        hits = [k for k, name in enumerate(names) if name == "center-of-mass"]
        if len(hits) != 1:
            raise ValueError(f"no unique centre-of-mass mode in branch {branch}")
        return s.start + hits[0]


def _diagonalize_block(block):
    evals, evecs = jacobi_eigh(block)
    cols = [fix_sign(evecs[:, k]) for k in range(len(evals))]
    order = sorted(range(len(evals)), key=lambda k: (evals[k], tuple(cols[k])))
    return evals[order], np.column_stack([cols[k] for k in order])


def modes_from_chain(chain: IonChain, config: TrapConfig) -> NormalModes:
    n = chain.n_ions
    h = hessian(chain.positions3d(), config.betas)
    squared = np.empty(3 * n)
    vectors = np.zeros((3 * n, 3 * n))
    changes = []
    unstable = []
    for k, branch in enumerate(BRANCHES):
        s = slice(k * n, (k + 1) * n)
        evals, evecs = _diagonalize_block(h[s, s])
        squared[s] = evals
        vectors[s, s] = evecs
        changes.extend(sign_changes(evecs[:, c]) for c in range(n))
        if evals.min() <= 0:
            unstable.append(branch)
    return NormalModes(squared, vectors, n, tuple(config.betas), tuple(changes), tuple(unstable))


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    min_squared_frequency: float
    soft_branch: str
    soft_mode_name: str


def check_stability(config: TrapConfig, chain: IonChain | None = None) -> StabilityReport:
    """Whether the linear chain is a stable minimum (all 3N squared frequencies > 0)."""
    if chain is None:
        chain = solve_equilibrium(config)
    modes = modes_from_chain(chain, config)
    a = int(np.argmin(modes.squared))
    return StabilityReport(
        stable=bool(modes.squared[a] > 0),
        min_squared_frequency=float(modes.squared[a]),
        soft_branch=modes.branch_labels[a],
        soft_mode_name=modes.mode_names[a],
    )
