"""Command-line entry point: ``ionchain <subcommand> [options]``."""

from __future__ import annotations

import argparse
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .couplings import (
    DEFAULT_DELTAS,
    DriveSpec,
    ResonanceError,
    j_distance_profile,
    j_matrix,
    j_vs_temperature,
    proportional_shifts,
    resolve_anchor,
    shift_statistics,
)
from .equilibrium import ConvergenceError, CoincidentIonsError
from .io import RunManifest, config_snapshot, run_id, write_csv
from .perturbation import (
    COOLING_MODES,
    VARIANTS,
    default_t_grid,
    frequency_shifts,
    thermal_occupations,
    thermal_shift_sweep,
)
from .pipeline import Pipeline
from .tensors import UnstableModesError
from .units import ConfigError, length_to_si, load_config, reference_config
from .validation import format_table, run_audits

SUBCOMMANDS = ("equilibrium", "modes", "tensors", "shifts", "jmatrix", "jshift", "jdistance",
               "fig1", "fig2", "fig3", "fig4", "validate")
FIG3_DELTAS = (1e-1, 1e-2, 1e-3)
DOPPLER_T = 1.0
FIFTH_MODE = 4


class StrictModeError(RuntimeError):
    pass


def parse_t_grid(spec):
    """``"start:stop:num"`` (inclusive linspace) or a comma-separated list."""
    if spec is None:
        return default_t_grid()
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError("t-grid must be start:stop:num")
        grid = np.linspace(float(parts[0]), float(parts[1]), int(parts[2]))
    else:
        grid = np.array([float(v) for v in spec.split(",") if v.strip()])
    if grid.size == 0 or np.any(grid < 0):
        raise argparse.ArgumentTypeError("t-grid values must be non-negative")
    return grid


def parse_list(spec):
    return tuple(float(v) for v in spec.split(",") if v.strip())


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="trap config file (default: 24-ion Yb-171 preset)")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--json", action="store_true", help="also write a JSON mirror of each CSV")
    common.add_argument("--strict", action="store_true", help="treat resonance warnings as errors")
    common.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
    common.add_argument("--delta", type=parse_list, help="comma-separated detunings")
    common.add_argument("--t-grid", dest="t_grid", help="start:stop:num or comma list of k_B T/(hbar w_CM)")
    common.add_argument("--t", type=float, default=DOPPLER_T, help="temperature ratio for J shifts")
    common.add_argument("--anchor", default="cm", help="'cm' or an x-branch mode index (0 = lowest)")
    common.add_argument("--cooling", choices=COOLING_MODES, default="doppler_all")
    common.add_argument("--variant", choices=sorted(VARIANTS), default="corrected",
                        help="closed-form coefficient set")
    common.add_argument("--n-ions", dest="n_ions", type=int, help="override the number of ions")

    parser = argparse.ArgumentParser(prog="ionchain", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")
    sub.required = True
    helps = {
        "equilibrium": "equilibrium positions",
        "modes": "normal-mode frequencies and eigenvectors",
        "tensors": "position- and mode-basis anharmonic tensors",
        "shifts": "thermal anharmonic frequency shifts",
        "jmatrix": "harmonic and quasi-harmonic spin couplings",
        "jshift": "proportional coupling shifts per detuning",
        "jdistance": "harmonic couplings against ion separation",
        "fig1": "frequency shifts, both cooling schemes",
        "fig2": "coupling shift statistics, CM and fifth-mode anchors",
        "fig3": "J_1j against temperature",
        "fig4": "harmonic couplings against separation",
        "validate": "analytic, finite-difference and oracle audits",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


class Run:
    """Shared state for one subcommand invocation."""

    def __init__(self, args):
        self.args = args
        config = load_config(args.config) if args.config else reference_config()
        if args.n_ions is not None:
            config = config.with_ions(args.n_ions)
        self.config = config
        self.pipe = Pipeline(config, VARIANTS[args.variant])
        self.params = {k: v for k, v in sorted(vars(args).items())
                       if k not in ("config", "out", "json", "threads", "command")}
        if self.params.get("t_grid") is not None:
            self.params["t_grid"] = parse_t_grid(self.params["t_grid"]).tolist()
        self.rid = run_id(args.command, config, self.params)
        self.outputs = []
        self.warnings = []
        self.start = time.perf_counter()

    def executor(self):
        return ThreadPoolExecutor(max_workers=self.args.threads) if self.args.threads > 1 else None

    def csv(self, name, columns, rows):
        self.outputs += write_csv(self.args.out / name, columns, rows, self.rid, self.args.json)

    def warn_resonances(self, resonances):
        for r in resonances:
            msg = f"near resonance in {r.family} modes {r.modes} (denominator {r.denominator:.3e})"
            if msg not in self.warnings:
                self.warnings.append(msg)
        if resonances and self.args.strict:
            raise StrictModeError(self.warnings[0])

    def finish(self):
        manifest = RunManifest(self.rid, self.args.command, config_snapshot(self.config),
                               self.params, outputs=list(self.outputs),
                               wall_clock_s=time.perf_counter() - self.start,
                               warnings=list(self.warnings))
        path = manifest.write(self.args.out)
        for w in self.warnings:
            print(f"warning: {w}", file=sys.stderr)
        print(f"run {self.rid}: wrote {len(self.outputs)} file(s) and {path}")

    def deltas(self, default):
        return self.args.delta if self.args.delta else default

    def anchor(self):
        return resolve_anchor(self.args.anchor, self.pipe.modes)


def _shift_rows(modes, reports, branches=("x", "y", "z")):
    rows = []
    beta = modes.betas[0]
    for rep in reports:
        flagged = {m for r in rep.resonances for m in r.modes}
        for branch in branches:
            s = modes.branch_slice(branch)
            for k, a in enumerate(range(s.start, s.stop)):
                rows.append((branch, k, modes.frequencies[a] / beta, rep.t, rep.shifts[a],
                             a in flagged))
    return rows


SHIFT_COLUMNS = ("branch", "mode_index", "frequency_over_omega_cm", "t_dimensionless",
                 "shift_over_omega_cm", "resonance_flag")
J_COLUMNS = ("i", "j", "separation", "J_harmonic", "J_quasiharmonic", "proportional_shift")


def cmd_equilibrium(run):
    chain = run.pipe.chain
    rows = [(i, z, length_to_si(z, run.pipe.scales)) for i, z in enumerate(chain.z_positions)]
    run.csv("equilibrium.csv", ("index", "z_dimensionless", "z_meters"), rows)
    print(f"{chain.n_ions} ions, residual force {chain.residual_force_norm:.3e}, "
          f"{chain.iterations} Newton steps")


def cmd_modes(run):
    modes = run.pipe.modes
    rows = []
    vec_rows = []
    for branch in ("x", "y", "z"):
        s = modes.branch_slice(branch)
        vecs = modes.branch_vectors(branch)
        for k, a in enumerate(range(s.start, s.stop)):
            rows.append((branch, k, modes.frequencies[a], modes.sign_changes[a]))
            vec_rows.append((branch, k, *vecs[:, k]))
    run.csv("modes.csv", ("branch", "mode_index", "frequency_over_omega_z", "sign_changes"), rows)
    run.csv("eigenvectors.csv", ("branch", "mode_index") + tuple(f"ion_{i}" for i in range(modes.n_ions)),
            vec_rows)
    if modes.stable:
        print("linear chain stable")
    else:
        print(f"linear chain unstable in branch(es) {', '.join(modes.unstable_branches)}")


def _coord_label(p, n):
    return f"{'xyz'[p // n]}{p % n}"


def cmd_tensors(run):
    pos = run.pipe.positions
    n = pos.n_ions
    for name, table, order in (("position_b.csv", pos.b_tilde, 3), ("position_c.csv", pos.c_tilde, 4)):
        rows = [tuple(_coord_label(p, n) for p in key) + (val,)
                for key, val in sorted(table.items()) if val != 0.0]
        run.csv(name, tuple(f"coord_{k}" for k in range(order)) + ("value",), rows)
    t = run.pipe.tensors
    b = t.b_mode
    a, bb, c = np.nonzero(b)
    keep = (a <= bb) & (bb <= c)
    run.csv("mode_b.csv", ("a", "b", "c", "B"),
            [(int(i), int(j), int(k), b[i, j, k]) for i, j, k in zip(a[keep], bb[keep], c[keep])])
    n3 = len(t.c_diag)
    run.csv("mode_c_pair.csv", ("a", "b", "C_aabb"),
            [(i, j, t.c_pair[i, j]) for i in range(n3) for j in range(i, n3)])


def cmd_shifts(run):
    grid = parse_t_grid(run.args.t_grid)
    reports = thermal_shift_sweep(grid, run.args.cooling, run.pipe.form, run.pipe.modes,
                                  run.pipe.scales, run.executor())
    run.warn_resonances(run.pipe.form.resonances)
    run.csv("shifts.csv", SHIFT_COLUMNS, _shift_rows(run.pipe.modes, reports))


def _quasi_report(run):
    pipe = run.pipe
    n = thermal_occupations(pipe.modes, run.args.t, run.args.cooling)
    run.warn_resonances(pipe.form.resonances)
    return frequency_shifts(n, pipe.form, pipe.modes, pipe.scales)


def _pair_rows(chain, jh, ja, delta=None):
    pairs, shifts, _ = proportional_shifts(jh, ja)
    lookup = dict(zip(pairs, shifts))
    rows = []
    n = jh.n_ions
    for i in range(n):
        for j in range(i + 1, n):
            row = (i, j, chain.separation(i, j), jh.values[i, j], ja.values[i, j],
                   lookup.get((i, j), float("nan")))
            rows.append(row if delta is None else (delta,) + row)
    return rows


def cmd_jmatrix(run):
    delta = run.deltas((1e-1,))[0]
    drive = DriveSpec(run.anchor(), delta)
    rep = _quasi_report(run)
    jh = j_matrix(run.pipe.modes, drive)
    ja = j_matrix(run.pipe.modes, drive, rep, run.args.t, run.args.cooling)
    run.csv("jmatrix.csv", J_COLUMNS, _pair_rows(run.pipe.chain, jh, ja))


def _jshift(run, anchor, deltas, prefix, rep):
    stats = shift_statistics(run.pipe.modes, deltas, anchor, rep)
    rows = []
    summary = []
    for st in stats:
        drive = DriveSpec(anchor, st.delta)
        jh = j_matrix(run.pipe.modes, drive)
        ja = j_matrix(run.pipe.modes, drive, rep)
        rows += _pair_rows(run.pipe.chain, jh, ja, st.delta)
        summary.append((anchor, st.delta, st.mean, st.max, len(st.floored)))
        print(f"anchor {anchor} delta {st.delta:.0e}: mean {st.mean:.3e} max {st.max:.3e}")
    run.csv(f"{prefix}.csv", ("delta",) + J_COLUMNS, rows)
    return summary


SUMMARY_COLUMNS = ("anchor", "delta", "mean_shift", "max_shift", "floored_pairs")


def cmd_jshift(run):
    rep = _quasi_report(run)
    summary = _jshift(run, run.anchor(), run.deltas(DEFAULT_DELTAS), "jshift", rep)
    run.csv("jshift_summary.csv", SUMMARY_COLUMNS, summary)


def _jdistance(run, deltas, prefix):
    rows = []
    summary = []
    cert_rows = []
    anchor = run.anchor()
    for delta in deltas:
        prof = j_distance_profile(j_matrix(run.pipe.modes, DriveSpec(anchor, delta)), run.pipe.chain)
        rows += [(delta, i, j, s, v) for (i, j), s, v in zip(prof.pairs, prof.separations, prof.couplings)]
        summary.append((delta, prof.exponent, len(prof.certificate)))
        cert_rows += [(delta, *outer, *inner) for outer, inner in prof.certificate]
        print(f"delta {delta:.0e}: exponent {prof.exponent:.3f}, "
              f"{len(prof.certificate)} nearest-neighbour inversions")
    run.csv(f"{prefix}.csv", ("delta", "i", "j", "separation", "J_harmonic"), rows)
    run.csv(f"{prefix}_summary.csv", ("delta", "exponent", "certificate_size"), summary)
    run.csv(f"{prefix}_certificate.csv", ("delta", "outer_i", "outer_j", "inner_i", "inner_j"),
            cert_rows)


def cmd_jdistance(run):
    _jdistance(run, run.deltas((1e-1, 1e-2, 1e-3)), "jdistance")


def cmd_fig1(run):
    grid = parse_t_grid(run.args.t_grid)
    pipe = run.pipe
    run.warn_resonances(pipe.form.resonances)
    for cooling, tag in (("doppler_all", "doppler"), ("sideband_transverse", "sideband")):
        reports = thermal_shift_sweep(grid, cooling, pipe.form, pipe.modes, pipe.scales, run.executor())
        run.csv(f"fig1_transverse_{tag}.csv", SHIFT_COLUMNS, _shift_rows(pipe.modes, reports, ("x", "y")))
        run.csv(f"fig1_longitudinal_{tag}.csv", SHIFT_COLUMNS, _shift_rows(pipe.modes, reports, ("z",)))
        peak = max(float(np.max(np.abs(r.shifts))) for r in reports)
        print(f"{cooling}: max |dw|/w_CM = {peak:.3e}")


def cmd_fig2(run):
    rep = _quasi_report(run)
    deltas = run.deltas(DEFAULT_DELTAS)
    summary = _jshift(run, resolve_anchor("cm", run.pipe.modes), deltas, "fig2_cm", rep)
    summary += _jshift(run, FIFTH_MODE, deltas, "fig2_fifth", rep)
    run.csv("fig2_summary.csv", SUMMARY_COLUMNS, summary)


def cmd_fig3(run):
    grid = parse_t_grid(run.args.t_grid)
    pipe = run.pipe
    run.warn_resonances(pipe.form.resonances)
    rows = []
    for cooling in COOLING_MODES:
        traces = j_vs_temperature(pipe.modes, pipe.form, pipe.scales, run.anchor(),
                                  run.deltas(FIG3_DELTAS), grid, cooling, executor=run.executor())
        for tr in traces:
            for k, t in enumerate(tr.t_grid):
                for j in range(1, pipe.modes.n_ions):
                    rows.append((cooling, tr.delta, t, j, tr.harmonic[j], tr.quasiharmonic[k, j]))
    run.csv("fig3.csv", ("cooling", "delta", "t_dimensionless", "j", "J_harmonic", "J_quasiharmonic"),
            rows)


def cmd_fig4(run):
    _jdistance(run, run.deltas(DEFAULT_DELTAS), "fig4")


def cmd_validate(run):
    results = run_audits(run.config)
    print(format_table(results))
    rows = [(r.name, r.value, r.threshold, r.passed) for r in results]
    run.csv("validate.csv", ("audit", "value", "threshold", "passed"), rows)
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {name: globals()[f"cmd_{name}"] for name in SUBCOMMANDS}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        if args.t_grid is not None:
            parse_t_grid(args.t_grid)
        run = Run(args)
        print(f"frequency convention: {run.config.frequency_convention} "
              f"(omega_z = {run.config.omega_z:.6e} rad/s), N = {run.config.n_ions}")
        status = COMMANDS[args.command](run) or 0
        run.finish()
        return status
    except (ConfigError, ConvergenceError, CoincidentIonsError, UnstableModesError, ResonanceError,
            StrictModeError, argparse.ArgumentTypeError, ValueError, OSError) as exc:
        print(f"ionchain {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
