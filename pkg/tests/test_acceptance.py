"""Acceptance criteria, one test per criterion, each at its stated tolerance.

Every test prints a single ``CRITERION k: PASS|FAIL`` line with the measured
quantities, then asserts.  Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import itertools
import time

import numpy as np
import pytest

from ionchain.cli import main
from ionchain.couplings import DEFAULT_DELTAS, DriveSpec, cm_anchor, j_distance_profile, j_matrix, shift_statistics
from ionchain.equilibrium import solve_equilibrium
from ionchain.modes import check_stability, modes_from_chain
from ionchain.perturbation import (
    COOLING_MODES,
    ClosedForm,
    default_t_grid,
    delta_e_oracle,
    enumerate_small_occupations,
    frequency_shift,
    frequency_shifts,
    thermal_occupations,
    thermal_shift_sweep,
)
from ionchain.pipeline import Pipeline
from ionchain.tensors import finite_difference_audit, mode_tensors, position_tensors
from ionchain.units import derive_scales, reference_config
from ionchain.validation import sample_entries

DOPPLER_T = 1.0
FIFTH_MODE = 4


@pytest.fixture
def report(capsys):
    def _report(k, checks, seconds):
        ok = all(passed for _, passed in checks)
        detail = "; ".join(f"{text} [{'ok' if passed else 'fail'}]" for text, passed in checks)
        with capsys.disabled():
            print(f"\nCRITERION {k}: {'PASS' if ok else 'FAIL'} ({seconds:.2f} s) {detail}")
        assert ok, detail
    return _report


@pytest.fixture(scope="module")
def yb24_build():
    t0 = time.perf_counter()
    pipe = Pipeline(reference_config())
    pipe.form
    return pipe, time.perf_counter() - t0


@pytest.fixture(scope="module")
def fig1_sweeps(yb24_build):
    pipe, build = yb24_build
    t0 = time.perf_counter()
    grid = default_t_grid()
    sweeps = {c: thermal_shift_sweep(grid, c, pipe.form, pipe.modes, pipe.scales) for c in COOLING_MODES}
    return grid, sweeps, build + time.perf_counter() - t0


def linear_residual(t, y):
    """Largest deviation from the least-squares line, relative to the trace range."""
    span = y.max() - y.min()
    if span == 0:
        return 0.0
    fit = np.polyval(np.polyfit(t, y, 1), t)
    return float(np.abs(y - fit).max() / span)


def test_criterion_1_equilibrium_closed_forms(report):
    t0 = time.perf_counter()
    cfg = reference_config()
    z2 = solve_equilibrium(cfg.with_ions(2)).z_positions
    z3 = solve_equilibrium(cfg.with_ions(3)).z_positions
    chain2 = solve_equilibrium(cfg.with_ions(2))
    wz = modes_from_chain(chain2, cfg.with_ions(2)).branch_frequencies("z")
    e2 = np.abs(z2 - np.array([-1, 1]) * 2 ** (-2 / 3)).max()
    e3 = np.abs(z3 - np.array([-1, 0, 1]) * 1.25 ** (1 / 3)).max()
    ew = np.abs(wz - np.array([1.0, np.sqrt(3.0)])).max()
    dt = time.perf_counter() - t0
    report(1, [(f"N=2 dev {e2:.1e} < 1e-9", e2 < 1e-9), (f"N=3 dev {e3:.1e} < 1e-9", e3 < 1e-9),
               (f"N=2 axial freq dev {ew:.1e} < 1e-9", ew < 1e-9), (f"runtime {dt:.2f} s < 1 s", dt < 1)], dt)


def test_criterion_2_zigzag_boundary(report):
    t0 = time.perf_counter()
    checks = []
    for n, want_stable in ((24, True), (25, False)):
        cfg = reference_config().with_ions(n)
        modes = modes_from_chain(solve_equilibrium(cfg), cfg)
        transverse = modes.squared[: 2 * n].min()
        stable = check_stability(cfg).stable
        checks.append((f"N={n} min transverse w^2 {transverse:.3f}, stable={stable}",
                       stable == want_stable and (transverse > 0) == want_stable))
    dt = time.perf_counter() - t0
    checks.append((f"runtime {dt:.2f} s < 10 s", dt < 10))
    report(2, checks, dt)


def test_criterion_3_tensor_audit(report):
    t0 = time.perf_counter()
    chain = solve_equilibrium(reference_config().with_ions(3))
    pos = position_tensors(chain)
    rng = np.random.default_rng(3)
    checks = []
    for order in (3, 4):
        sample = sample_entries(pos, order, 20, rng, n_zero=0)
        dev = finite_difference_audit(chain, order, sample, pos)
        checks.append((f"order {order}: {len(sample)} entries, worst rel {dev:.1e} < 1e-5",
                       len(sample) >= 20 and dev < 1e-5))
    dt = time.perf_counter() - t0
    checks.append((f"runtime {dt:.2f} s < 10 s", dt < 10))
    report(3, checks, dt)


def test_criterion_4_oracle_equivalence(report):
    t0 = time.perf_counter()
    checks = []
    for n in (2, 3):
        cfg = reference_config().with_ions(n)
        chain = solve_equilibrium(cfg)
        modes = modes_from_chain(chain, cfg)
        scales = derive_scales(cfg)
        tensors = mode_tensors(position_tensors(chain), modes, scales, full_quartic=True)
        form = ClosedForm(tensors, modes.frequencies, scales.eta)
        rng = np.random.default_rng(40 + n)
        states = enumerate_small_occupations(3 * n, 3, 25, rng)
        worst = max(abs(form.energy(np.array(s, float)) - delta_e_oracle(s, tensors, modes, scales))
                    / abs(delta_e_oracle(s, tensors, modes, scales)) for s in states)
        checks.append((f"N={n}: {len(states)} states, worst rel {worst:.1e} < 1e-8", worst < 1e-8))
    dt = time.perf_counter() - t0
    checks.append((f"runtime {dt:.2f} s < 120 s", dt < 120))
    report(4, checks, dt)


def test_criterion_5_cm_invariance(report, yb24_build, fig1_sweeps):
    pipe, _ = yb24_build
    grid, sweeps, seconds = fig1_sweeps
    cms = [pipe.modes.cm_index(b) for b in "xyz"]
    worst = max(abs(rep.shifts[a]) for reps in sweeps.values() for rep in reps for a in cms)
    report(5, [(f"max |dw_CM|/w_CM {worst:.1e} < 1e-8 over {len(grid)} temperatures x 2 coolings",
                worst < 1e-8)], seconds)


def test_criterion_6_fig1_magnitudes(report, fig1_sweeps):
    grid, sweeps, seconds = fig1_sweeps
    bounds = {"doppler_all": (1e-5, 5e-4), "sideband_transverse": (1e-6, 5e-5)}
    checks = []
    for cooling, (lo, hi) in bounds.items():
        shifts = np.array([rep.shifts for rep in sweeps[cooling]])
        peak = float(np.abs(shifts).max())
        checks.append((f"{cooling} max {peak:.2e} in [{lo:.0e}, {hi:.0e}]", lo <= peak <= hi))
        residuals = [linear_residual(grid, shifts[:, a]) for a in range(shifts.shape[1])]
        bad = sum(r >= 0.1 for r in residuals)
        checks.append((f"{cooling} worst linear residual {max(residuals):.1%} ({bad} traces >= 10%)",
                       bad == 0))
    checks.append((f"runtime {seconds:.1f} s < 600 s", seconds < 600))
    report(6, checks, seconds)


def test_criterion_7_fig2_statistics(report, yb24_build):
    pipe, build = yb24_build
    t0 = time.perf_counter()
    m = pipe.modes
    rep = frequency_shifts(thermal_occupations(m, DOPPLER_T, "doppler_all"), pipe.form, m, pipe.scales)
    cm = {s.delta: s for s in shift_statistics(m, DEFAULT_DELTAS, cm_anchor(m), rep)}
    fifth = {s.delta: s for s in shift_statistics(m, DEFAULT_DELTAS, FIFTH_MODE, rep)}
    means = [cm[d].mean for d in DEFAULT_DELTAS]
    dt = build + time.perf_counter() - t0
    report(7, [
        (f"CM d=1e-1 max {cm[1e-1].max:.2e} in [3e-3, 3e-2]", 3e-3 <= cm[1e-1].max <= 3e-2),
        (f"CM d=1e-1 mean {cm[1e-1].mean:.2e} in [3e-5, 3e-3]", 3e-5 <= cm[1e-1].mean <= 3e-3),
        (f"CM d=1e-6 max {cm[1e-6].max:.2e} < 1e-7", cm[1e-6].max < 1e-7),
        (f"CM d=1e-6 mean {cm[1e-6].mean:.2e} within a decade of 1e-9", 1e-10 <= cm[1e-6].mean <= 1e-8),
        ("CM mean decreases with delta", all(a > b for a, b in zip(means, means[1:]))),
        (f"fifth d=1e-1 mean {fifth[1e-1].mean:.2e} in [3e-2, 3e-1]", 3e-2 <= fifth[1e-1].mean <= 3e-1),
        (f"fifth d=1e-5 max {fifth[1e-5].max:.2e} >= 1e-3", fifth[1e-5].max >= 1e-3),
        (f"runtime {dt:.1f} s < 600 s", dt < 600),
    ], dt)


def test_criterion_8_fig4_structure(report, yb24_build):
    pipe, _ = yb24_build
    t0 = time.perf_counter()
    anchor = cm_anchor(pipe.modes)
    prof = {d: j_distance_profile(j_matrix(pipe.modes, DriveSpec(anchor, d)), pipe.chain)
            for d in (1e-1, 1e-2, 1e-3)}
    dt = time.perf_counter() - t0
    report(8, [
        (f"d=1e-1 exponent {prof[1e-1].exponent:.3f} in [-3.5, -2.5]", -3.5 <= prof[1e-1].exponent <= -2.5),
        (f"d=1e-2 certificate size {len(prof[1e-2].certificate)} > 0", bool(prof[1e-2].certificate)),
        (f"d=1e-3 certificate size {len(prof[1e-3].certificate)} > 0", bool(prof[1e-3].certificate)),
        (f"runtime {dt:.2f} s < 60 s", dt < 60),
    ], dt)


def test_criterion_9_structural_properties(report, yb24_build, tmp_path):
    pipe, _ = yb24_build
    t0 = time.perf_counter()
    m = pipe.modes
    b = pipe.tensors.b_mode
    sym_b = all(np.array_equal(b, b.transpose(p)) for p in itertools.permutations(range(3)))
    sym_c = np.array_equal(pipe.tensors.c_pair, pipe.tensors.c_pair.T)
    small = Pipeline(reference_config().with_ions(3))
    sym_pos = all(np.array_equal(small.positions.dense_c(), small.positions.dense_c().transpose(p))
                  for p in itertools.permutations(range(4)))
    ortho = float(np.abs(m.vectors.T @ m.vectors - np.eye(m.n_modes)).max())

    rng = np.random.default_rng(9)
    n0 = rng.uniform(0, 2, m.n_modes)
    worst_affine = 0.0
    for a, bb in [(0, 0), (5, 40), (30, 60), (60, 12)]:
        vals = []
        for k in range(3):
            n = n0.copy()
            n[bb] += k
            vals.append(frequency_shift(a, n, pipe.form, m, pipe.scales))
        worst_affine = max(worst_affine, abs(vals[2] - 2 * vals[1] + vals[0]) / max(map(abs, vals)))

    drive = DriveSpec(FIFTH_MODE, 1e-2)
    jh = j_matrix(m, drive).values
    jq = j_matrix(m, drive, np.zeros(m.n_modes)).values
    mirror = float(np.abs(jh[::-1, ::-1] - jh).max() / np.abs(jh).max())

    outs = []
    for name in ("a", "b"):
        assert main(["jmatrix", "--out", str(tmp_path / name), "--delta", "0.01"]) == 0
        outs.append((tmp_path / name / "jmatrix.csv").read_bytes())
    dt = time.perf_counter() - t0
    report(9, [
        ("mode B and C_aabb exactly permutation symmetric", sym_b and sym_c),
        ("position C~ exactly permutation symmetric", sym_pos),
        (f"orthonormality dev {ortho:.1e} < 1e-10", ortho < 1e-10),
        (f"affine shifts: worst rel second difference {worst_affine:.1e} < 1e-9", worst_affine < 1e-9),
        ("zero-shift quasi-harmonic J == harmonic J bitwise", np.array_equal(jh, jq)),
        (f"J symmetric, mirror dev {mirror:.1e} < 1e-9", np.array_equal(jh, jh.T) and mirror < 1e-9),
        ("CSV bytes identical across runs", outs[0] == outs[1]),
    ], dt)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
