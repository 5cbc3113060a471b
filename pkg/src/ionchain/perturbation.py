"""Anharmonic energy and frequency shifts of the phonon modes.

The perturbation is ``V3 + V4`` with ``V3 = sum_{abc} B_abc x_a x_b x_c`` and
``V4 = sum_{abcd} C_abcd x_a x_b x_c x_d`` (``x_a = a_a + a_a^dagger``,
unrestricted sums over symmetric tensors).  The shift of the Fock state
``{n}`` is first order in ``V4`` plus second order in ``V3``.  All energies
are in units of ``e0``; a phonon of mode ``a`` costs ``eta * w_a``.

Two routes are provided:

* :class:`ClosedForm` -- the grouped analytic expression, quadratic in the
  occupations, cheap enough for the 72-mode chain;
* :func:`oracle_energy_shift` -- explicit Rayleigh-Schroedinger sums over the
  intermediate Fock states reached by the ladder operators, small systems
  only.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .modes import NormalModes
from .tensors import ModeTensors
from .units import ScaleSet, temperature_for_ratio

RESONANCE_TOL = 1e-6
# Cubic couplings below this fraction of the largest one are roundoff from
# symmetry-forbidden contractions and are dropped.
B_NOISE_FLOOR = 1e-12
COOLING_MODES = ("doppler_all", "sideband_transverse")


@dataclass(frozen=True)
class Coefficients:
    """Numerical coefficients of the closed-form energy shift.

    ``prefactor`` multiplies every cubic term (in units of ``1/eta``);
    ``quartic_pair``, ``cubic_chain`` and ``cubic_triple`` weight sums over
    ordered index pairs/triples; ``pair_freq_numerator`` controls whether the
    ``(n_b^2 + n_b + 1)`` numerator carries a factor ``w_a``.
    """

    prefactor: float
    quartic_pair: float
    cubic_chain: float
    cubic_triple: float
    pair_freq_numerator: bool
    name: str = ""


# Verified term by term against the enumeration oracle.
CORRECTED = Coefficients(1.0, 3.0, 9.0, 6.0, True, "corrected")
# The expression exactly as published: overall 1/(2 eta), doubled pair sums,
# 36 over ordered triples, bare (n^2+n+1) numerator.
AS_PRINTED = Coefficients(0.5, 6.0, 18.0, 36.0, False, "as_printed")
VARIANTS = {c.name: c for c in (CORRECTED, AS_PRINTED)}

TERM_NAMES = (
    "quartic_diag",
    "quartic_pair",
    "cubic_self",
    "cubic_cross",
    "cubic_pair",
    "cubic_chain",
    "cubic_triple",
)


@dataclass(frozen=True)
class Resonance:
    family: str
    modes: tuple
    denominator: float


class ClosedForm:
    """Closed-form ``Delta E({n})`` for fixed tensors and frequencies.

    Denominators and the sparse index lists are prepared once; evaluation is
    vectorised over modes and over a batch of occupation vectors.
    """

    def __init__(self, tensors: ModeTensors, frequencies, eta, coefficients=CORRECTED,
                 resonance_tol=RESONANCE_TOL):
        w = np.asarray(frequencies, dtype=float)
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("closed form needs positive mode frequencies")
        self.w = w
        self.eta = float(eta)
        self.coef = coefficients
        n3 = len(w)
        b = np.array(tensors.b_mode, dtype=float)
        b[np.abs(b) < B_NOISE_FLOOR * np.abs(b).max(initial=0.0)] = 0.0
        self.c_diag = np.asarray(tensors.c_diag, dtype=float)
        self.c_off = np.array(tensors.c_pair, dtype=float)
        np.fill_diagonal(self.c_off, 0.0)

        idx = np.arange(n3)
        self.b_self = b[idx, idx, idx].copy()
        # b_pair[b, a] = B_bba, b != a
        self.b_pair = b[idx[:, None], idx[:, None], idx[None, :]].copy()
        np.fill_diagonal(self.b_pair, 0.0)
        with np.errstate(divide="ignore"):
            self.den_pair = 4.0 * w[:, None] ** 2 - w[None, :] ** 2

        mask = b != 0.0
        mask[idx, idx, :] = False
        mask[idx, :, idx] = False
        mask[:, idx, idx] = False
        ta, tb, tg = np.nonzero(mask)
        self.ta, self.tb, self.tg = ta, tb, tg
        self.t_b2 = b[ta, tb, tg] ** 2
        self.t_sum = w[ta] + w[tb]
        self.t_diff = w[ta] - w[tb]
        self.t_wg = w[tg]
        self.t_den_p = self.t_sum**2 - self.t_wg**2
        self.t_den_m = self.t_diff**2 - self.t_wg**2

        self.resonances = self._find_resonances(resonance_tol)

    def _find_resonances(self, tol):
        found = []
        pb, pa = np.nonzero((self.b_pair != 0.0) & (np.abs(self.den_pair) < tol))
        for bb, aa in zip(pb, pa):
            found.append(Resonance("cubic_pair", (int(aa), int(bb)), float(self.den_pair[bb, aa])))
        for den, label in ((self.t_den_p, "cubic_triple+"), (self.t_den_m, "cubic_triple-")):
            for k in np.flatnonzero(np.abs(den) < tol):
                found.append(Resonance(label, (int(self.ta[k]), int(self.tb[k]), int(self.tg[k])),
                                       float(den[k])))
        return found

    @property
    def flagged(self):
        return bool(self.resonances)

    def terms(self, n):
        """Contribution of each family for occupation vector(s) ``n``."""
        n = np.asarray(n, dtype=float)
        single = n.ndim == 1
        n = np.atleast_2d(n)
        if n.shape[1] != len(self.w) or np.any(n < 0):
            raise ValueError("occupations must be non-negative with one entry per mode")
        out = {name: np.empty(len(n)) for name in TERM_NAMES}
        for start in range(0, len(n), 8):
            chunk = n[start:start + 8]
            for name, val in self._terms_batch(chunk).items():
                out[name][start:start + len(chunk)] = val
        if single:
            return {k: float(v[0]) for k, v in out.items()}
        return out

    def _terms_batch(self, n):
        c = self.coef
        w = self.w
        m = 2.0 * n + 1.0
        cubic = c.prefactor / self.eta

        t = {}
        t["quartic_diag"] = 3.0 * ((2.0 * n * n + 2.0 * n + 1.0) @ self.c_diag)
        t["quartic_pair"] = c.quartic_pair * np.einsum("ka,ab,kb->k", m, self.c_off, m)

        t["cubic_self"] = -cubic * ((30.0 * n * n + 30.0 * n + 11.0) @ (self.b_self**2 / w))

        # s[k, a] = sum_{b != a} B_bba (2 n_b + 1)
        s = m @ self.b_pair
        t["cubic_cross"] = -cubic * 18.0 * np.sum(s * m * (self.b_self / w), axis=1)

        bp2 = self.b_pair**2
        with np.errstate(divide="ignore", invalid="ignore"):
            g1 = np.where(bp2 != 0, -4.0 * w[:, None] * bp2 / self.den_pair, 0.0)
            num = w[None, :] if c.pair_freq_numerator else 1.0
            g2 = np.where(bp2 != 0, 2.0 * num * bp2 / self.den_pair, 0.0)
        quad = n * n + n + 1.0
        pair = (
            np.einsum("kb,ba,ka->k", m, g1, m)
            + np.einsum("kb,ba->k", quad, g2)
            - np.einsum("kb,ba,a->k", m * m, bp2, 1.0 / w)
        )
        t["cubic_pair"] = cubic * 9.0 * pair

        # sum over b != a, g != a, b  ==  s^2 minus the b == g diagonal
        chain = np.sum((s * s - (m * m) @ bp2) / w, axis=1)
        t["cubic_chain"] = -cubic * c.cubic_chain * chain

        na = n[:, self.ta]
        nb = n[:, self.tb]
        mg = m[:, self.tg]
        f = (
            (-self.t_sum * (1.0 + na + nb) * mg + self.t_wg * (1.0 + na + nb + 2.0 * na * nb))
            / self.t_den_p
            + (self.t_diff * (na - nb) * mg + self.t_wg * (na + nb + 2.0 * na * nb)) / self.t_den_m
        )
        t["cubic_triple"] = cubic * c.cubic_triple * (f @ self.t_b2)
        return t

    def energy(self, n):
        terms = self.terms(n)
        return sum(terms[k] for k in TERM_NAMES)

    def frequency_shifts(self, n, cm_energy):
        """``(dE(n + e_a) - dE(n)) / cm_energy`` for every mode ``a``."""
        n = np.asarray(n, dtype=float)
        batch = np.vstack([n, n + np.eye(len(n))])
        e = self.energy(batch)
        return (e[1:] - e[0]) / cm_energy


def closed_form(tensors: ModeTensors, modes: NormalModes, scales: ScaleSet,
                coefficients=CORRECTED) -> ClosedForm:
    return ClosedForm(tensors, modes.frequencies, scales.eta, coefficients)


def delta_e_closed(n, tensors: ModeTensors, modes: NormalModes, scales: ScaleSet,
                   coefficients=CORRECTED):
    return closed_form(tensors, modes, scales, coefficients).energy(n)


# ---------------------------------------------------------------------------
# Enumeration oracle

MAX_ORACLE_MODES = 12


def _ladder(state, amp, mode):
    """``x_mode`` applied to ``amp |state>``; yields (state, amplitude) pairs."""
    k = state[mode]
    if k > 0:
        lowered = state[:mode] + (k - 1,) + state[mode + 1:]
        yield lowered, amp * math.sqrt(k)
    raised = state[:mode] + (k + 1,) + state[mode + 1:]
    yield raised, amp * math.sqrt(k + 1)


def _apply_word(state, word):
    """Expand ``x_{w0} x_{w1} ... |state>`` into a dict of amplitudes."""
    current = {state: 1.0}
    for mode in reversed(word):
        nxt = defaultdict(float)
        for s, amp in current.items():
            for s2, a2 in _ladder(s, amp, mode):
                nxt[s2] += a2
        current = nxt
    return current


def oracle_energy_shift(n, b_mode, c_full, frequencies, eta, parts=False):
    """Second-order cubic plus first-order quartic shift by brute force.

    ``<n|V4|n>`` and ``V3|n>`` are built by applying every ladder-operator
    word with a non-zero coefficient to the basis state; the second-order sum
    then runs over every reached state ``m != n``.
    """
    state = tuple(int(k) for k in n)
    if any(k < 0 for k in state) or any(k != v for k, v in zip(state, n)):
        raise ValueError("oracle needs non-negative integer occupations")
    w = np.asarray(frequencies, dtype=float)
    n3 = len(w)
    if n3 > MAX_ORACLE_MODES:
        raise ValueError(f"oracle state space too large for {n3} modes (limit {MAX_ORACLE_MODES})")
    b_mode = np.asarray(b_mode, dtype=float)
    if len(state) != n3 or b_mode.shape != (n3,) * 3:
        raise ValueError("shape mismatch between occupations, tensors and frequencies")

    first = 0.0
    if c_full is not None:
        c_full = np.asarray(c_full, dtype=float)
        # modes commute, so group the words by their sorted index multiset
        grouped = defaultdict(float)
        for idx in zip(*np.nonzero(c_full)):
            grouped[tuple(sorted(idx))] += c_full[idx]
        for word, coeff in grouped.items():
            first += coeff * _apply_word(state, word).get(state, 0.0)

    v3 = defaultdict(float)
    for idx in zip(*np.nonzero(b_mode)):
        coeff = b_mode[idx]
        for s, amp in _apply_word(state, idx).items():
            v3[s] += coeff * amp
    n_arr = np.array(state, dtype=float)
    second = 0.0
    for s, amp in v3.items():
        if s == state or amp == 0.0:
            continue
        gap = eta * float(w @ (n_arr - np.array(s, dtype=float)))
        second += amp * amp / gap
    if parts:
        return first, second
    return first + second


def delta_e_oracle(n, tensors: ModeTensors, modes: NormalModes, scales: ScaleSet, parts=False):
    if tensors.c_full is None:
        raise ValueError("oracle needs the full quartic tensor (mode_tensors(..., full_quartic=True))")
    return oracle_energy_shift(n, tensors.b_mode, tensors.c_full, modes.frequencies, scales.eta,
                               parts=parts)


# ---------------------------------------------------------------------------
# Frequency shifts and thermal averages


def mean_occupation(frequency, T, scales: ScaleSet):
    """Bose-Einstein occupation of a mode (frequency in units of w_z, T in K)."""
    if T < 0:
        raise ValueError("temperature must be non-negative")
    if T == 0:
        return 0.0
    x = scales.eta * frequency / (scales.kB_over_e0 * T)
    return 1.0 / math.expm1(x)


def occupation_from_ratio(frequency, t, reference):
    """Occupation at ``k_B T = t * hbar * w_ref`` (frequencies in any common unit)."""
    if t < 0:
        raise ValueError("temperature ratio must be non-negative")
    freq = np.asarray(frequency, dtype=float)
    if t == 0:
        return np.zeros_like(freq)
    return 1.0 / np.expm1(freq / (t * reference))


@dataclass(frozen=True)
class ThermalSpec:
    temperature: float  # K
    cooling: str = "doppler_all"

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.cooling not in COOLING_MODES:
            raise ValueError(f"cooling must be one of {COOLING_MODES}")


def thermal_occupations(modes: NormalModes, t, cooling="doppler_all"):
    """Mean occupations at ``k_B T = t * hbar * w_CM`` (transverse x CM)."""
    if cooling not in COOLING_MODES:
        raise ValueError(f"cooling must be one of {COOLING_MODES}")
    n = occupation_from_ratio(modes.frequencies, t, modes.betas[0])
    if cooling == "sideband_transverse":
        n = n.copy()
        n[: 2 * modes.n_ions] = 0.0
    return n


def occupations_for(modes: NormalModes, spec: ThermalSpec, scales: ScaleSet):
    t = spec.temperature / temperature_for_ratio(1.0, modes.betas[0], scales)
    return thermal_occupations(modes, t, spec.cooling)


@dataclass(frozen=True)
class ShiftReport:
    shifts: np.ndarray  # delta w_a / w_CM
    occupations: np.ndarray
    t: float = float("nan")
    cooling: str = ""
    resonances: tuple = field(default=())

    @property
    def flagged(self):
        return bool(self.resonances)


def cm_energy(modes: NormalModes, scales: ScaleSet):
    return scales.eta * modes.betas[0]


def frequency_shifts(n, form: ClosedForm, modes: NormalModes, scales: ScaleSet) -> ShiftReport:
    n = np.asarray(n, dtype=float)
    shifts = form.frequency_shifts(n, cm_energy(modes, scales))
    return ShiftReport(shifts, n, resonances=tuple(form.resonances))


def frequency_shift(a, n, form: ClosedForm, modes: NormalModes, scales: ScaleSet):
    n = np.asarray(n, dtype=float)
    up = n.copy()
    up[a] += 1.0
    e = form.energy(np.vstack([n, up]))
    return float((e[1] - e[0]) / cm_energy(modes, scales))


def thermal_shift_sweep(t_grid, cooling, form: ClosedForm, modes: NormalModes, scales: ScaleSet,
                        executor=None):
    """Frequency shifts at every ``t = k_B T / (hbar w_CM)`` on the grid."""

    def one(t):
        n = thermal_occupations(modes, t, cooling)
        rep = frequency_shifts(n, form, modes, scales)
        return ShiftReport(rep.shifts, n, float(t), cooling, rep.resonances)

    if executor is None:
        return [one(t) for t in t_grid]
    return list(executor.map(one, t_grid))


def default_t_grid(stop=2.0, num=41):
    return np.linspace(0.0, stop, num)


def enumerate_small_occupations(n_modes, max_occ, count, rng):
    """``count`` random integer occupation vectors with entries in [0, max_occ]."""
    return [tuple(int(v) for v in rng.integers(0, max_occ + 1, n_modes)) for _ in range(count)]

