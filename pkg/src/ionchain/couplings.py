"""Effective Ising couplings mediated by the transverse-x phonons.

    J_ij = P * sum_a b_i^a b_j^a / (mu^2 - w_a^2)

over the x-branch modes, with ``mu = w_anchor (1 + delta)``.  Frequencies are
in units of ``w_z`` and the prefactor ``P = F_O^2 / (4 m)`` is 1 unless a
force is supplied (see :func:`si_prefactor`).  In the quasi-harmonic variant
``w_a`` is replaced by ``w_a + dw_a`` with the anharmonic shift at the
requested temperature; ``mu`` stays tied to the harmonic anchor frequency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .equilibrium import IonChain
from .modes import NormalModes
from .perturbation import ClosedForm, frequency_shifts, thermal_occupations
from .units import ATOMIC_MASS_UNIT, TrapConfig

DEFAULT_DELTAS = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
J_FLOOR = 1e-300


class ResonanceError(ValueError):
    pass


@dataclass(frozen=True)
class DriveSpec:
    anchor: int  # index within the x branch, ascending frequency
    delta: float
    prefactor: float = 1.0

    def mu(self, modes: NormalModes):
        w = modes.branch_frequencies("x")
        if not 0 <= self.anchor < len(w):
            raise ValueError(f"anchor {self.anchor} outside the x branch (0..{len(w) - 1})")
        mu = w[self.anchor] * (1.0 + self.delta)
        if not mu > 0:
            raise ValueError("beat-note frequency must be positive")
        return mu


def cm_anchor(modes: NormalModes):
    """x-branch index of the centre-of-mass mode (the highest transverse mode)."""
    return modes.cm_index("x") - modes.branch_slice("x").start


def resolve_anchor(spec, modes: NormalModes):
    """``"cm"`` or an integer x-branch index."""
    if isinstance(spec, str):
        if spec.lower() == "cm":
            return cm_anchor(modes)
        spec = int(spec)
    return int(spec)


@dataclass(frozen=True)
class JMatrix:
    values: np.ndarray
    drive: DriveSpec
    t: float | None = None
    cooling: str | None = None
    quasiharmonic: bool = False

    @property
    def n_ions(self):
        return self.values.shape[0]


def x_shifts(modes: NormalModes, shifts):
    """x-branch frequency shifts in units of ``w_z`` from per-mode ``dw/w_CM``."""
    s = np.asarray(getattr(shifts, "shifts", shifts), dtype=float)
    return s[modes.branch_slice("x")] * modes.betas[0]


def _coupling(vectors, w, mu, prefactor):
    den = mu * mu - w * w
    hits = np.flatnonzero(np.abs(mu - w) <= 4 * np.finfo(float).eps * mu)
    if hits.size:
        raise ResonanceError(f"beat note is resonant with x mode {int(hits[0])} (w = {w[hits[0]]!r})")
    j = prefactor * (vectors / den) @ vectors.T
    j = 0.5 * (j + j.T)
    np.fill_diagonal(j, 0.0)
    return j


def j_matrix(modes: NormalModes, drive: DriveSpec, shifts=None, t=None, cooling=None) -> JMatrix:
    """Harmonic couplings, or quasi-harmonic ones when ``shifts`` is given."""
    w = modes.branch_frequencies("x")
    if shifts is not None:
        w = w + x_shifts(modes, shifts)
    j = _coupling(modes.branch_vectors("x"), w, drive.mu(modes), drive.prefactor)
    return JMatrix(j, drive, t, cooling, shifts is not None)


def si_prefactor(force, config: TrapConfig):
    """``F_O^2 / (4 m w_z^2)`` in joules for a force in newtons.

    Multiplying a dimensionless J by this gives the coupling energy.
    """
    m = config.ion_mass * ATOMIC_MASS_UNIT
    return force * force / (4.0 * m * config.omega_z**2)


def proportional_shifts(jh: JMatrix, ja: JMatrix):
    """``|J_anh - J_harm| / |J_harm|`` over pairs i < j.

    Returns ``(pairs, values, floored)``; pairs whose harmonic coupling is
    below :data:`J_FLOOR` are listed in ``floored`` and excluded.
    """
    n = jh.n_ions
    iu, ju = np.triu_indices(n, 1)
    harm = jh.values[iu, ju]
    diff = np.abs(ja.values[iu, ju] - harm)
    ok = np.abs(harm) >= J_FLOOR
    pairs = list(zip(iu[ok].tolist(), ju[ok].tolist()))
    floored = list(zip(iu[~ok].tolist(), ju[~ok].tolist()))
    return pairs, diff[ok] / np.abs(harm[ok]), floored


@dataclass(frozen=True)
class ShiftStatistics:
    delta: float
    anchor: int
    pairs: list
    harmonic: np.ndarray
    quasiharmonic: np.ndarray
    shifts: np.ndarray
    floored: list

    @property
    def mean(self):
        return float(np.mean(self.shifts)) if len(self.shifts) else float("nan")

    @property
    def max(self):
        return float(np.max(self.shifts)) if len(self.shifts) else float("nan")


def shift_statistics(modes: NormalModes, deltas, anchor, shifts, prefactor=1.0):
    """Proportional J shifts for every pair at each detuning."""
    out = []
    for delta in deltas:
        drive = DriveSpec(anchor, float(delta), prefactor)
        jh = j_matrix(modes, drive)
        ja = j_matrix(modes, drive, shifts)
        pairs, vals, floored = proportional_shifts(jh, ja)
        idx = tuple(np.array(pairs, dtype=int).T) if pairs else ((), ())
        out.append(ShiftStatistics(float(delta), anchor, pairs, jh.values[idx], ja.values[idx], vals,
                                   floored))
    return out


@dataclass(frozen=True)
class TemperatureTraces:
    """``J_{0j}`` against temperature for one detuning and cooling scheme."""

    delta: float
    cooling: str
    t_grid: np.ndarray
    harmonic: np.ndarray  # (N,) row of the harmonic J
    quasiharmonic: np.ndarray  # (len(t_grid), N)


def j_vs_temperature(modes: NormalModes, form: ClosedForm, scales, anchor, deltas, t_grid,
                     cooling="doppler_all", ion=0, executor=None):
    """Couplings between ``ion`` and every other ion across the temperature grid."""
    t_grid = np.asarray(t_grid, dtype=float)

    def shifts_at(t):
        return frequency_shifts(thermal_occupations(modes, t, cooling), form, modes, scales)

    reports = list(executor.map(shifts_at, t_grid)) if executor else [shifts_at(t) for t in t_grid]
    traces = []
    for delta in deltas:
        drive = DriveSpec(anchor, float(delta))
        harm = j_matrix(modes, drive).values[ion]
        quasi = np.array([j_matrix(modes, drive, rep).values[ion] for rep in reports])
        traces.append(TemperatureTraces(float(delta), cooling, t_grid, harm, quasi))
    return traces


@dataclass(frozen=True)
class DistanceProfile:
    pairs: list
    separations: np.ndarray
    couplings: np.ndarray
    exponent: float
    certificate: list  # ((outer pair), (inner pair)) with larger gap and larger |J|


def fit_power_law(separations, couplings):
    """Least-squares exponent of ``|J|`` vs separation over the farther half."""
    sep = np.asarray(separations, dtype=float)
    mag = np.abs(np.asarray(couplings, dtype=float))
    if len(sep) < 2:
        return float("nan")
    order = np.argsort(sep, kind="stable")
    half = order[len(order) // 2:]
    if len(half) < 2 or np.any(mag[half] == 0):
        return float("nan")
    return float(np.polyfit(np.log(sep[half]), np.log(mag[half]), 1)[0])


def nearest_neighbour_certificate(jm: JMatrix, chain: IonChain):
    z = chain.z_positions
    n = len(z)
    gaps = np.diff(z)
    mags = np.abs([jm.values[i, i + 1] for i in range(n - 1)])
    cert = []
    for p in range(n - 1):
        for q in range(n - 1):
            if gaps[p] > gaps[q] and mags[p] > mags[q]:
                cert.append(((p, p + 1), (q, q + 1)))
    return cert


def j_distance_profile(jm: JMatrix, chain: IonChain) -> DistanceProfile:
    n = jm.n_ions
    iu, ju = np.triu_indices(n, 1)
    z = chain.z_positions
    sep = np.abs(z[ju] - z[iu])
    vals = jm.values[iu, ju]
    return DistanceProfile(
        list(zip(iu.tolist(), ju.tolist())),
        sep,
        vals,
        fit_power_law(sep, vals),
        nearest_neighbour_certificate(jm, chain),
    )
