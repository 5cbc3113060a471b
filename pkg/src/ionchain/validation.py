"""Self-checks against analytic results, finite differences and the oracle."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .equilibrium import solve_equilibrium
from .modes import modes_from_chain
from .perturbation import CORRECTED, ClosedForm, delta_e_oracle, enumerate_small_occupations
from .tensors import (
    PositionTensors,
    dense_mode_tensors,
    finite_difference_audit,
    mode_tensors,
    position_tensors,
)
from .units import TrapConfig, derive_scales

AUDIT_SEED = 20140301
FD_TOL = 1e-5
ORACLE_TOL = 1e-8
DENSE_TOL = 1e-12
ANALYTIC_TOL = 1e-9


@dataclass(frozen=True)
class AuditResult:
    name: str
    value: float
    threshold: float
    seconds: float = 0.0

    @property
    def passed(self):
        return bool(np.isfinite(self.value) and self.value < self.threshold)


def sample_entries(pos: PositionTensors, order, count, rng, n_zero=5):
    """``count`` non-zero entries (random slot order) plus ``n_zero`` random tuples."""
    table = pos.b_tilde if order == 3 else pos.c_tilde
    keys = sorted(k for k, v in table.items() if v != 0.0)
    picks = rng.choice(len(keys), size=min(count, len(keys)), replace=False)
    out = [tuple(int(i) for i in rng.permutation(keys[k])) for k in sorted(picks)]
    n3 = 3 * pos.n_ions
    out += [tuple(int(i) for i in rng.integers(0, n3, order)) for _ in range(n_zero)]
    return out


def oracle_deviation(config: TrapConfig, count=20, max_occ=3, seed=AUDIT_SEED,
                     coefficients=CORRECTED):
    """Worst relative gap between closed form and enumeration over random states."""
    scales = derive_scales(config)
    chain = solve_equilibrium(config)
    modes = modes_from_chain(chain, config)
    tensors = mode_tensors(position_tensors(chain), modes, scales, full_quartic=True)
    form = ClosedForm(tensors, modes.frequencies, scales.eta, coefficients)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n in enumerate_small_occupations(modes.n_modes, max_occ, count, rng):
        exact = delta_e_oracle(n, tensors, modes, scales)
        approx = form.energy(np.array(n, dtype=float))
        worst = max(worst, abs(approx - exact) / abs(exact))
    return worst


def _timed(name, threshold, fn):
    t0 = time.perf_counter()
    value = float(fn())
    return AuditResult(name, value, threshold, time.perf_counter() - t0)


def run_audits(config: TrapConfig, seed=AUDIT_SEED):
    """Analytic, finite-difference, dense/sparse and oracle audits at N = 2 and 3."""
    c2 = config.with_ions(2)
    c3 = config.with_ions(3)
    rng = np.random.default_rng(seed)
    results = []

    def eq2():
        z = solve_equilibrium(c2).z_positions
        return np.max(np.abs(z - np.array([-1.0, 1.0]) * 2.0 ** (-2.0 / 3.0)))

    def eq3():
        z = solve_equilibrium(c3).z_positions
        return np.max(np.abs(z - np.array([-1.0, 0.0, 1.0]) * 1.25 ** (1.0 / 3.0)))

    def axial2():
        m = modes_from_chain(solve_equilibrium(c2), c2)
        return np.max(np.abs(m.branch_frequencies("z") - np.array([1.0, np.sqrt(3.0)])))

    results.append(_timed("equilibrium N=2 (abs)", ANALYTIC_TOL, eq2))
    results.append(_timed("equilibrium N=3 (abs)", ANALYTIC_TOL, eq3))
    results.append(_timed("axial frequencies N=2 (abs)", ANALYTIC_TOL, axial2))

    chain3 = solve_equilibrium(c3)
    pos3 = position_tensors(chain3)
    for order in (3, 4):
        sample = sample_entries(pos3, order, 20, rng)
        results.append(_timed(f"finite differences order {order} N=3 (rel)", FD_TOL,
                              lambda o=order, s=sample: finite_difference_audit(chain3, o, s, pos3)))

    def dense():
        scales = derive_scales(c3)
        modes = modes_from_chain(chain3, c3)
        sparse = mode_tensors(pos3, modes, scales)
        b, c = dense_mode_tensors(pos3, modes, scales)
        idx = np.arange(modes.n_modes)
        c_pair = c[idx[:, None], idx[:, None], idx[None, :], idx[None, :]]
        scale = max(np.abs(b).max(), np.abs(c).max())
        return max(np.abs(sparse.b_mode - b).max(), np.abs(sparse.c_pair - c_pair).max()) / scale

    results.append(_timed("sparse vs dense mode tensors N=3 (rel)", DENSE_TOL, dense))
    for cfg in (c2, c3):
        results.append(_timed(f"closed form vs oracle N={cfg.n_ions} (rel)", ORACLE_TOL,
                              lambda c=cfg: oracle_deviation(c, seed=seed)))
    return results


def format_table(results):
    width = max(len(r.name) for r in results)
    lines = [f"{'audit':<{width}}  {'value':>10}  {'limit':>8}  result"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {r.value:10.3e}  {r.threshold:8.1e}  "
                     f"{'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
