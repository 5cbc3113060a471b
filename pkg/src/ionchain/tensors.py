"""Cubic and quartic Coulomb coupling tensors.

Position basis
    ``b_tilde`` and ``c_tilde`` are the third and fourth derivatives of the
    dimensionless potential at the linear-chain equilibrium.  Keys are sorted
    tuples of flat coordinate indices (``alpha * N + i``); every permutation of
    a key has the same value.

Mode basis
    With ``w`` the frequencies in units of ``w_z`` and ``eta`` the quantum
    parameter,

        B_abc  = (1/6)  (eta/2)^(3/2) (w_a w_b w_c)^(-1/2)     sum b_a b_b b_c B~
        C_abcd = (1/24) (eta/2)^2     (w_a w_b w_c w_d)^(-1/2) sum b_a b_b b_c b_d C~

    in units of ``e0``: the coefficients of ``sum_{abc} B_abc x_a x_b x_c`` and
    ``sum_{abcd} C_abcd x_a x_b x_c x_d`` with ``x_a = a_a + a_a^dagger``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .equilibrium import IonChain
from .modes import NormalModes
from .units import ScaleSet

X, Y, Z = 0, 1, 2

# Direction patterns with non-vanishing derivatives and their strength.
# Self entries (all slots on ion i) are kappa * sum_nu g(nu, i); for two
# distinct ions every slot on the "other" ion contributes a factor -1.
CUBIC_KAPPA = {(X, X, Z): -3.0, (Y, Y, Z): -3.0, (Z, Z, Z): 6.0}
QUARTIC_KAPPA = {
    (X, X, X, X): 9.0,
    (Y, Y, Y, Y): 9.0,
    (X, X, Y, Y): 3.0,
    (X, X, Z, Z): -12.0,
    (Y, Y, Z, Z): -12.0,
    (Z, Z, Z, Z): 24.0,
}

FD_STEP3 = 1e-3
FD_STEP4 = 3e-3


class UnstableModesError(ValueError):
    pass


@dataclass(frozen=True)
class PositionTensors:
    b_tilde: dict
    c_tilde: dict
    chain: IonChain

    @property
    def n_ions(self):
        return self.chain.n_ions

    def b(self, p, q, r):
        return self.b_tilde.get(tuple(sorted((p, q, r))), 0.0)

    def c(self, p, q, r, s):
        return self.c_tilde.get(tuple(sorted((p, q, r, s))), 0.0)

    def dense_b(self):
        n3 = 3 * self.n_ions
        out = np.zeros((n3,) * 3)
        for key, val in self.b_tilde.items():
            for perm in set(itertools.permutations(key)):
                out[perm] = val
        return out

    def dense_c(self):
        n3 = 3 * self.n_ions
        out = np.zeros((n3,) * 4)
        for key, val in self.c_tilde.items():
            for perm in set(itertools.permutations(key)):
                out[perm] = val
        return out


def _entry(kappa, ions, z, order):
    """Value of one tensor entry from its direction strength and ion labels."""
    distinct = sorted(set(ions))
    if len(distinct) == 1:
        i = distinct[0]
        d = np.delete(z - z[i], i)
        if order == 3:
            # sgn(nu - i) equals the sign of z_nu - z_i for an ordered chain
            return kappa * float(np.sum(np.sign(d) / d**4))
        return kappa * float(np.sum(1.0 / np.abs(d) ** 5))
    if len(distinct) > 2:
        return 0.0
    i, j = distinct
    # i is the repeated (self) ion; the entry picks up -1 per slot on j.
    if ions.count(i) < ions.count(j):
        i, j = j, i
    n_other = ions.count(j)
    sep = abs(z[j] - z[i])
    if order == 3:
        return kappa * (-1.0) ** n_other * float(np.sign(j - i)) / sep**4
    return kappa * (-1.0) ** n_other / sep**5


def _ion_tuples(n, order):
    """Ion assignments of ``order`` slots using at most two distinct ions."""
    for i in range(n):
        yield (i,) * order
    for i, j in itertools.combinations(range(n), 2):
        for ions in itertools.product((i, j), repeat=order):
            if i in ions and j in ions:
                yield ions


def position_tensors(chain: IonChain) -> PositionTensors:
    """Closed-form third/fourth derivatives at a linear-chain equilibrium."""
    z = np.asarray(chain.z_positions, dtype=float)
    n = len(z)
    b_tilde = {}
    c_tilde = {}
    if n < 2:
        return PositionTensors(b_tilde, c_tilde, chain)
    for table, order, out in ((CUBIC_KAPPA, 3, b_tilde), (QUARTIC_KAPPA, 4, c_tilde)):
        for dirs, kappa in table.items():
            for ions in _ion_tuples(n, order):
                key = tuple(sorted(d * n + i for d, i in zip(dirs, ions)))
                if key not in out:
                    out[key] = _entry(kappa, list(ions), z, order)
    return PositionTensors(b_tilde, c_tilde, chain)


def potential_increment(x0, disp, betas=(1.0, 1.0, 1.0)):
    """``V(x0 + disp) - V(x0)`` evaluated without cancellation.

    Each pair term uses ``1/r - 1/r0 = -(r^2 - r0^2) / (r r0 (r + r0))`` with
    ``r^2 - r0^2`` expanded in the displacement, so the rounding error scales
    with the increment rather than with the total energy.
    """
    r0 = np.asarray(x0, dtype=float).reshape(3, -1)
    dx = np.asarray(disp, dtype=float).reshape(3, -1)
    b2 = np.asarray(betas, dtype=float) ** 2
    trap = 0.5 * float(np.sum(b2[:, None] * dx * (2.0 * r0 + dx)))
    n = r0.shape[1]
    if n < 2:
        return trap
    i, j = np.triu_indices(n, 1)
    d0 = r0[:, i] - r0[:, j]
    dd = dx[:, i] - dx[:, j]
    grow = np.sum(dd * (2.0 * d0 + dd), axis=0)
    dist0 = np.sqrt(np.sum(d0 * d0, axis=0))
    dist = np.sqrt(dist0 * dist0 + grow)
    return trap + float(np.sum(-grow / (dist * dist0 * (dist + dist0))))


def _mixed_difference(f, n3, idx, h):
    """Product of central differences along the coordinates in ``idx``."""
    total = 0.0
    for signs in itertools.product((1.0, -1.0), repeat=len(idx)):
        disp = np.zeros(n3)
        for s, k in zip(signs, idx):
            disp[k] += s * h
        total += np.prod(signs) * f(disp)
    return total / (2.0 * h) ** len(idx)


def fd_derivative(chain: IonChain, idx, betas=(1.0, 1.0, 1.0), step=None):
    """Central finite-difference estimate of a mixed partial of the potential.

    Uses one Richardson step (steps ``h`` and ``2h``) to cancel the O(h^2)
    truncation error.
    """
    idx = tuple(idx)
    if step is None:
        step = FD_STEP3 if len(idx) == 3 else FD_STEP4
    x0 = chain.positions3d()

    def f(disp):
        return potential_increment(x0, disp, betas)

    fine = _mixed_difference(f, len(x0), idx, step)
    coarse = _mixed_difference(f, len(x0), idx, 2.0 * step)
    return (4.0 * fine - coarse) / 3.0


def finite_difference_audit(chain: IonChain, order, sample, tensors=None, zero_floor=1e-6):
    """Worst deviation of closed-form entries from finite differences.

    Relative deviation for entries with ``|exact| > zero_floor``, absolute
    deviation for entries that vanish by symmetry.
    """
    if tensors is None:
        tensors = position_tensors(chain)
    worst = 0.0
    for idx in sample:
        exact = tensors.b(*idx) if order == 3 else tensors.c(*idx)
        approx = fd_derivative(chain, idx)
        if abs(exact) > zero_floor:
            dev = abs(approx - exact) / abs(exact)
        else:
            dev = abs(approx - exact)
        worst = max(worst, dev)
    return worst


@dataclass(frozen=True)
class ModeTensors:
    """Mode-basis couplings in units of ``e0``.

    ``b_mode`` is the full symmetric (3N)^3 array; ``c_diag[a] = C_aaaa`` and
    ``c_pair[a, b] = C_aabb``.  ``c_full`` is only built on request.
    """

    b_mode: np.ndarray
    c_diag: np.ndarray
    c_pair: np.ndarray
    c_full: np.ndarray | None = None

    def scaled(self, s):
        """Tensors for B~ -> s B~ and C~ -> s^2 C~."""
        return ModeTensors(
            s * self.b_mode,
            s * s * self.c_diag,
            s * s * self.c_pair,
            None if self.c_full is None else s * s * self.c_full,
        )


def _pair_differences(vecs, n):
    """``D[p, k] = u_k[i_p] - u_k[j_p]`` over pairs ``p = (i < j)``."""
    i, j = np.triu_indices(n, 1)
    return vecs[i, :] - vecs[j, :], i, j


def _canonical_symmetric(t):
    """Copy every entry from its sorted-index representative (exact symmetry)."""
    idx = np.sort(np.indices(t.shape).reshape(t.ndim, -1), axis=0)
    return t[tuple(idx)].reshape(t.shape)


def mode_tensors(pos: PositionTensors, modes: NormalModes, scales: ScaleSet,
                 full_quartic=False) -> ModeTensors:
    """Transform the position tensors into the phonon basis.

    Each position-basis tensor is a sum over ion pairs of a pair strength times
    outer products of ``(e_i - e_j)``, restricted to the direction patterns in
    :data:`CUBIC_KAPPA` / :data:`QUARTIC_KAPPA`.  The contraction therefore
    runs over pairs and the three allowed branch patterns only.
    """
    if not modes.stable:
        raise UnstableModesError(f"unstable branches: {modes.unstable_branches}")
    n = modes.n_ions
    n3 = 3 * n
    w = modes.frequencies
    eta = scales.eta
    b_mode = np.zeros((n3, n3, n3))
    c_diag = np.zeros(n3)
    c_pair = np.zeros((n3, n3))
    if n < 2:
        return ModeTensors(b_mode, c_diag, c_pair, np.zeros((n3,) * 4) if full_quartic else None)

    z = pos.chain.z_positions
    diffs = {}
    for branch in range(3):
        s = slice(branch * n, (branch + 1) * n)
        diffs[branch], pi, pj = _pair_differences(modes.vectors[s, s], n)
    sep = z[pj] - z[pi]
    g3 = 1.0 / sep**4  # pair (i<j): sgn(j - i) = +1
    g4 = 1.0 / sep**5

    # B~ pattern (a, a, z): pair strength kappa * sgn(j - i)/d^4 on (e_i - e_j)^3
    for (da, db, dc), kappa in CUBIC_KAPPA.items():
        t = np.einsum("p,pa,pb,pc->abc", kappa * g3, diffs[da], diffs[db], diffs[dc])
        sa, sb, sc = (slice(d * n, (d + 1) * n) for d in (da, db, dc))
        for perm in set(itertools.permutations(range(3))):
            sl = [(sa, sb, sc)[k] for k in perm]
            b_mode[sl[0], sl[1], sl[2]] = np.transpose(t, perm)

    # C_aabb only: sum_p kappa g4_p D_a^2 D_b^2 over the patterns (A, A, B, B)
    sq = {k: v**2 for k, v in diffs.items()}
    for (d1, _, d3, _), kappa in QUARTIC_KAPPA.items():
        block = (sq[d1] * (kappa * g4)[:, None]).T @ sq[d3]
        s1 = slice(d1 * n, (d1 + 1) * n)
        s3 = slice(d3 * n, (d3 + 1) * n)
        c_pair[s1, s3] += block
        if d1 != d3:
            c_pair[s3, s1] += block.T

    w3 = w[:, None, None] * w[None, :, None] * w[None, None, :]
    b_mode *= (1.0 / 6.0) * (eta / 2.0) ** 1.5 / np.sqrt(w3)
    b_mode = _canonical_symmetric(b_mode)
    c_pair *= (1.0 / 24.0) * (eta / 2.0) ** 2 / (w[:, None] * w[None, :])
    c_pair = _canonical_symmetric(c_pair)
    c_diag = c_pair.diagonal().copy()
    c_full = None
    if full_quartic:
        c_full = dense_mode_tensors(pos, modes, scales, quartic=True)[1]
    return ModeTensors(b_mode, c_diag, c_pair, c_full)


def dense_mode_tensors(pos: PositionTensors, modes: NormalModes, scales: ScaleSet,
                       quartic=True):
    """Naive dense transform over all (3N)^k coordinate tuples; small N only."""
    w = modes.frequencies
    u = modes.vectors
    eta = scales.eta
    bt = pos.dense_b()
    b = np.einsum("pqr,pa,qb,rc->abc", bt, u, u, u, optimize=True)
    b *= (1.0 / 6.0) * (eta / 2.0) ** 1.5 / np.sqrt(np.einsum("a,b,c->abc", w, w, w))
    c = None
    if quartic:
        ct = pos.dense_c()
        c = np.einsum("pqrs,pa,qb,rc,sd->abcd", ct, u, u, u, u, optimize=True)
        c *= (1.0 / 24.0) * (eta / 2.0) ** 2 / np.sqrt(np.einsum("a,b,c,d->abcd", w, w, w, w))
    return b, c
