"""Command-line interface.

Exit codes: 0 success, 1 configuration or usage error, 2 numerical breakdown.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import math
import sys
from pathlib import Path

from . import model1d
from .core import DIAGNOSTICS_COLUMNS, DiagnosticsRow
from .experiments import DEFAULT_METHODS, ExperimentReport, MethodSpec, \
    experiment_error_vs_work, experiment_mts_vs_stale
from .fields import DegenerateDepositError, SelfFieldSolver
from .integrate import AdaptiveStepError, TraceRow, run
from .scenario import BUILTIN, ConfigError, Scenario, load_scenario, make_bunch

log = logging.getLogger("borisamts")

EXIT_OK, EXIT_CONFIG, EXIT_BREAKDOWN = 0, 1, 2
TRACE_COLUMNS = tuple(f.name for f in dataclasses.fields(TraceRow))
NUMERICAL_ERRORS = (FloatingPointError, AdaptiveStepError, model1d.BreakdownError,
                    DegenerateDepositError, ArithmeticError)


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the configuration-error code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _cell(value):
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, float):
        return repr(value)
    return value


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _scenario(args) -> Scenario:
    path = Path(args.config)
    if not path.exists() and args.config in BUILTIN:
        scenario = BUILTIN[args.config]()
    else:
        scenario = load_scenario(path)
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    return scenario


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# Subcommands


def cmd_run(args) -> int:
    scenario = _scenario(args)
    out = _out_dir(args)
    cfg = scenario.integrator
    interval = scenario.diagnostics_interval
    checkpoints = []
    if interval > 0:
        k_max = math.ceil(cfg.t_end / interval)
        checkpoints = [k * interval for k in range(1, k_max) if k * interval < cfg.t_end]
    bunch = make_bunch(scenario.bunch)
    t0 = bunch.t
    stops = {t0 + c for c in checkpoints} | {t0 + cfg.t_end}
    diag = [DiagnosticsRow.from_bunch(bunch, 0.0, 0, 0, math.nan)]

    def observe(b, row, solves):
        if interval == 0 or b.t in stops:
            diag.append(DiagnosticsRow.from_bunch(b, row.h, row.m, solves, row.max_accel))

    solver = SelfFieldSolver(scenario.self_field)
    res = run(bunch, scenario.external, solver, cfg, checkpoints, observe)
    write_csv(out / "diagnostics.csv", DIAGNOSTICS_COLUMNS,
              [dataclasses.astuple(r) for r in diag])
    write_csv(out / "trace.csv", TRACE_COLUMNS,
              [dataclasses.astuple(r) for r in res.trace.rows])
    log.info("%s: %d outer steps, %d self-field solves", cfg.method, len(res.trace), res.solves)
    return EXIT_OK


def cmd_sweep_beta(args) -> int:
    out = _out_dir(args)
    rows = model1d.beta_sweep(args.energies, args.betas, args.steps, args.t_end)
    write_csv(out / "beta_sweep.csv", model1d.SWEEP_COLUMNS,
              [dataclasses.astuple(r) for r in rows])
    for r in rows:
        log.info("H=%g beta=%g err=%s", r.H, r.beta, "breakdown" if r.broke_down else f"{r.err_max:.3e}")
    return EXIT_OK


def _write_report(out: Path, stem: str, report: ExperimentReport):
    write_csv(out / f"{stem}.csv", ExperimentReport.COLUMNS, report.rows())


def _write_timings(out: Path, reports):
    rows = []
    for rep in reports:
        for r in [rep.reference, *rep.records]:
            rows.append((rep.name, r.run_id, r.wall_time))
    write_csv(out / "timings.csv", ("experiment", "run_id", "wall_time_s"), rows)


def cmd_error_vs_work(args) -> int:
    scenario = _scenario(args)
    out = _out_dir(args)
    try:
        methods = [MethodSpec.parse(m) for m in args.methods]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    budgets = args.budgets or scenario.experiment.get("budgets", [25, 50, 100, 200])
    ref = args.reference_solves or scenario.experiment.get("reference_solves", 3200)
    report = experiment_error_vs_work(scenario, methods, budgets, ref, threads=args.threads)
    _write_report(out, "error_vs_work", report)
    _write_timings(out, [report])
    for r in report.records:
        log.info("%-18s S=%-4d solves=%-4d error=%.3e", r.method, r.work, r.solves, r.error)
    return EXIT_OK


def cmd_mts_vs_stale(args) -> int:
    scenario = _scenario(args)
    out = _out_dir(args)
    periods = args.periods or scenario.experiment.get("periods", [1, 2, 4, 10, 20, 100])
    checkpoints = args.checkpoints or scenario.experiment.get("checkpoints", 20)
    mts, stale = experiment_mts_vs_stale(scenario, periods, checkpoints, threads=args.threads)
    _write_report(out, "mts_table", mts)
    _write_report(out, "stale_table", stale)
    _write_timings(out, [mts, stale])
    for rep in (mts, stale):
        for r in rep.records:
            log.info("%-8s %-4d error=%.3e", r.method, r.work, r.error)
    return EXIT_OK


def cmd_oracle1d(args) -> int:
    try:
        state = model1d.exact_solution(args.x0, args.v0, args.t)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(("x", "v", "t"))
    writer.writerow([repr(state.x), repr(state.v), repr(state.t)])
    return EXIT_OK


def _global_flags(parser, default):
    # subcommands repeat the flags with suppressed defaults so that a flag
    # given before the subcommand is not reset by the subparser
    parser.add_argument("--seed", type=int, default=default(None),
                        help="override the bunch RNG seed")
    parser.add_argument("--threads", type=int, default=default(1),
                        help="independent runs executed concurrently (default 1)")
    parser.add_argument("--quiet", action="store_true", default=default(False),
                        help="suppress progress output")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="borisamts", description=__doc__.splitlines()[0])
    _global_flags(parser, lambda v: v)
    common = _Parser(add_help=False)
    _global_flags(common, lambda v: argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", parents=[common], help="integrate one scenario")
    p.add_argument("--config", required=True,
                   help="scenario TOML file, or a built-in name: " + ", ".join(BUILTIN))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep-beta", parents=[common], help="1D step-exponent sweep")
    p.add_argument("--out", required=True)
    p.add_argument("--energies", type=float, nargs="+", default=list(model1d.DEFAULT_ENERGIES))
    p.add_argument("--betas", type=float, nargs="+", default=list(model1d.DEFAULT_BETAS))
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--t-end", type=float, default=20.0)
    p.set_defaults(func=cmd_sweep_beta)

    p = sub.add_parser("error-vs-work", parents=[common],
                       help="emittance error against self-field solves")
    p.add_argument("--config", required=True)
    p.add_argument("--methods", nargs="+", default=list(DEFAULT_METHODS),
                   help="MTS, AMTS, AMTS:beta=<x>, AMTS:g=beam_size")
    p.add_argument("--budgets", type=int, nargs="+")
    p.add_argument("--reference-solves", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_error_vs_work)

    p = sub.add_parser("mts-vs-stale", parents=[common],
                       help="MTS substeps against stale self-field reuse")
    p.add_argument("--config", required=True)
    p.add_argument("--periods", type=int, nargs="+")
    p.add_argument("--checkpoints", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mts_vs_stale)

    p = sub.add_parser("oracle1d", parents=[common], help="exact state of the 1D model")
    p.add_argument("--x0", type=float, required=True)
    p.add_argument("--v0", type=float, required=True)
    p.add_argument("--t", type=float, required=True)
    p.set_defaults(func=cmd_oracle1d)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    if args.threads < 1:
        print("borisamts: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"borisamts: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"borisamts: numerical breakdown: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN


if __name__ == "__main__":
    sys.exit(main())
