"""Experiment drivers: error against self-field work, and MTS against stale reuse.

Every comparison is made against one designated reference run, and the error
measure is the relative error of the transverse rms emittance.
"""

from __future__ import annotations

import dataclasses
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from .core import DiagnosticsRow, transverse_emittance
from .fields import SelfFieldSolver
from .integrate import IntegratorConfig, RunResult, run
from .scenario import Scenario, make_bunch


@dataclass(frozen=True)
class MethodSpec:
    """An integrator choice as written on the command line.

    ``"MTS"``, ``"AMTS"`` (beta = 1), ``"AMTS:beta=1.5"`` and
    ``"AMTS:g=beam_size"`` are recognised.
    """

    method: str
    beta: float = 1.0
    g: str = "acceleration"

    @property
    def label(self) -> str:
        if self.method != "AMTS":
            return self.method
        if self.g == "beam_size":
            return "AMTS:g=beam_size"
        return f"AMTS:beta={self.beta:g}"

    @classmethod
    def parse(cls, text: str) -> "MethodSpec":
        name, _, opts = text.partition(":")
        if name not in ("MTS", "AMTS"):
            raise ValueError(f"unknown method {text!r}; use MTS or AMTS[:beta=..|:g=..]")
        kwargs = {}
        for item in filter(None, opts.split(",")):
            key, sep, value = item.partition("=")
            if not sep or name != "AMTS":
                raise ValueError(f"bad method option {item!r} in {text!r}")
            if key == "beta":
                kwargs["beta"] = float(value)
            elif key == "g":
                if value not in ("acceleration", "beam_size"):
                    raise ValueError(f"unknown g-function {value!r}")
                kwargs["g"] = value
            else:
                raise ValueError(f"unknown method option {key!r}")
        return cls(name, **kwargs)


DEFAULT_METHODS = ("MTS", "AMTS:beta=0.5", "AMTS:beta=1", "AMTS:beta=1.5", "AMTS:g=beam_size")


@dataclass
class RunRecord:
    run_id: str
    method: str
    work: int
    solves: int
    error: float
    emittance: float
    wall_time: float
    diagnostics: list = field(default_factory=list)
    config: Optional[IntegratorConfig] = None


@dataclass
class ExperimentReport:
    name: str
    reference: RunRecord
    records: list

    COLUMNS = ("run_id", "method", "work", "solves", "emittance", "error")

    def rows(self) -> list:
        return [(r.run_id, r.method, r.work, r.solves, r.emittance, r.error)
                for r in [self.reference, *self.records]]

    def record(self, method: str, work: int) -> RunRecord:
        for r in self.records:
            if r.method == method and r.work == work:
                return r
        raise KeyError((method, work))

    def column(self, method: str) -> list:
        return [r for r in self.records if r.method == method]


def simulate(scenario: Scenario, cfg: IntegratorConfig, checkpoints: Sequence[float] = (),
             weight: Optional[float] = None) -> tuple:
    """Run one integration of the scenario's bunch; returns (result, wall time).

    Raises RuntimeError if the integrator's solve count disagrees with the
    solver's own call counter.
    """
    bunch = make_bunch(scenario.bunch)
    if weight is not None:
        bunch = bunch.replace(weight=weight)
    solver = SelfFieldSolver(scenario.self_field)
    start = time.perf_counter()
    res = run(bunch, scenario.external, solver, cfg, checkpoints)
    elapsed = time.perf_counter() - start
    if res.solves != solver.calls:
        raise RuntimeError(f"solve count {res.solves} != solver calls {solver.calls}")
    return res, elapsed


def _diagnostics(res: RunResult) -> list:
    by_time = {row.t: row for row in res.trace.rows}
    out = []
    for snap in res.snapshots:
        row = by_time.get(snap.t)
        out.append(DiagnosticsRow.from_bunch(snap, row.h if row else math.nan,
                                             row.m if row else 0, res.solves,
                                             row.max_accel if row else math.nan))
    return out


def _record(run_id, method, work, res, elapsed, error, cfg) -> RunRecord:
    return RunRecord(run_id, method, work, res.solves, error,
                     transverse_emittance(res.bunch), elapsed, _diagnostics(res), cfg)


def _map(fn: Callable, items: Iterable, threads: int) -> list:
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# Error against work


def mts_for_budget(scenario: Scenario, budget: int) -> IntegratorConfig:
    """MTS with exactly ``budget`` solves: one initial plus ``budget - 1`` steps."""
    if budget < 2:
        raise ValueError("a budget needs at least two self-field solves")
    base = scenario.integrator
    t_end = base.t_end
    h = t_end / (budget - 1)
    dt_inner = base.dt_inner or base.h or h
    return IntegratorConfig("MTS", t_end, h=h, m=max(1, round(h / dt_inner)))


def amts_config(scenario: Scenario, spec: MethodSpec, dt_outer_init: float) -> IntegratorConfig:
    base = scenario.integrator
    dt_inner = min(base.dt_inner or dt_outer_init, dt_outer_init)
    return IntegratorConfig("AMTS", base.t_end, dt_outer_init=dt_outer_init,
                            dt_inner=dt_inner, beta=spec.beta, g=spec.g,
                            h_min=base.h_min, h_max=base.h_max)


def calibrate_amts(scenario: Scenario, spec: MethodSpec, budget: int,
                   max_runs: int = 16) -> tuple:
    """Choose dt_outer_init so that the AMTS run uses ``budget`` solves.

    The solve count falls as dt_outer_init grows, but in integer jumps, so an
    exact match may not exist; the run closest to the budget from below is
    returned then. Each trial rescales dt_outer_init by the ratio of steps
    taken to steps wanted, falling back to bisection once bracketed.
    Returns (config, result, wall time).
    """
    dti = scenario.integrator.t_end / (budget - 1)
    lo = hi = None  # lo: too many solves, hi: within budget
    best = None
    for _ in range(max_runs):
        cfg = amts_config(scenario, spec, dti)
        res, elapsed = simulate(scenario, cfg)
        if res.solves <= budget and (best is None or res.solves > best[1].solves):
            best = (cfg, res, elapsed)
        if res.solves == budget:
            break
        if res.solves > budget:
            lo = dti
        else:
            hi = dti
        guess = dti * (res.solves - 1) / (budget - 1)
        if lo is not None and hi is not None:
            if hi / lo < 1.0 + 1e-9:
                break
            if not lo < guess < hi:
                guess = math.sqrt(lo * hi)
        dti = guess
    if best is None:
        raise RuntimeError(f"no AMTS run of {spec.label} fits in {budget} solves")
    return best


def experiment_error_vs_work(scenario: Scenario, methods: Sequence, budgets: Sequence[int],
                             reference_solves: int, threads: int = 1) -> ExperimentReport:
    """Final transverse-emittance error against self-solve count.

    The reference is MTS with m = 1 and ``reference_solves`` solves. Each
    method is run once per budget with as many solves as the budget allows.
    """
    specs = [m if isinstance(m, MethodSpec) else MethodSpec.parse(m) for m in methods]
    ref_cfg = dataclasses.replace(mts_for_budget(scenario, reference_solves), m=1)
    ref_res, ref_time = simulate(scenario, ref_cfg)
    ref_emit = transverse_emittance(ref_res.bunch)
    reference = _record("reference", "MTS", reference_solves, ref_res, ref_time, 0.0, ref_cfg)

    def one(job):
        spec, budget = job
        if spec.method == "MTS":
            # the reference budget runs the reference configuration itself
            cfg = ref_cfg if budget == reference_solves else mts_for_budget(scenario, budget)
            res, elapsed = simulate(scenario, cfg)
        else:
            cfg, res, elapsed = calibrate_amts(scenario, spec, budget)
        err = abs(transverse_emittance(res.bunch) - ref_emit) / ref_emit
        return _record(f"{spec.label}@{budget}", spec.label, budget, res, elapsed, err, cfg)

    jobs = [(s, b) for s in specs for b in budgets]
    return ExperimentReport("error_vs_work", reference, _map(one, jobs, threads))


# --------------------------------------------------------------------------
# MTS against stale-force reuse


def _max_series_error(res: RunResult, ref: RunResult) -> float:
    errs = [abs(transverse_emittance(a) - transverse_emittance(b)) / transverse_emittance(b)
            for a, b in zip(res.snapshots, ref.snapshots)]
    return max(errs)


def experiment_mts_vs_stale(scenario: Scenario, periods: Sequence[int] = (1, 2, 4, 10, 20, 100),
                            checkpoints: int = 20, threads: int = 1) -> tuple:
    """Maximum emittance error over equally spaced checkpoints.

    Returns two reports. In the MTS table, period k means an outer step of k
    base steps with k external substeps, compared with MTS at m = 1. In the
    stale table, period k means the self field is recomputed every k base
    steps, compared with plain BB. Both tables end with a row that drops
    space charge altogether (label ``no-SC``, work 0).
    """
    base = scenario.integrator
    h, t_end = base.h, base.t_end
    if not h:
        raise ValueError("the scenario's integrator needs a base step h")
    if checkpoints < 1:
        raise ValueError("need at least one checkpoint")
    times = [t_end * k / checkpoints for k in range(1, checkpoints)]

    mts_ref_cfg = IntegratorConfig("MTS", t_end, h=h, m=1)
    bb_ref_cfg = IntegratorConfig("BB", t_end, h=h)

    def one(job):
        kind, k = job
        if kind == "MTS":
            cfg = IntegratorConfig("MTS", t_end, h=k * h, m=k)
        elif kind == "BBStale":
            cfg = IntegratorConfig("BBStale", t_end, h=h, n=k)
        else:
            cfg = bb_ref_cfg
        res, elapsed = simulate(scenario, cfg, times, weight=0.0 if kind == "no-SC" else None)
        return cfg, res, elapsed

    ref_jobs = [("MTS", 1), ("BB", 1)]
    jobs = [(kind, k) for kind in ("MTS", "BBStale") for k in periods if k > 1]
    jobs.append(("no-SC", 0))
    done = _map(one, ref_jobs + jobs, threads)
    (mts_ref_cfg, mts_ref, t_mts), (bb_ref_cfg, bb_ref, t_bb) = done[:2]

    reports = []
    for kind, ref, ref_cfg, ref_time in (("MTS", mts_ref, mts_ref_cfg, t_mts),
                                         ("BBStale", bb_ref, bb_ref_cfg, t_bb)):
        reference = _record("reference", kind, 1, ref, ref_time, 0.0, ref_cfg)
        records = [dataclasses.replace(reference, run_id=f"{kind}@1")] if 1 in periods else []
        for (jkind, k), (cfg, res, elapsed) in zip(jobs, done[2:]):
            if jkind in (kind, "no-SC"):
                label = jkind
                records.append(_record(f"{label}@{k}", label, k, res, elapsed,
                                       _max_series_error(res, ref), cfg))
        name = "mts" if kind == "MTS" else "stale"
        reports.append(ExperimentReport(name, reference, records))
    return tuple(reports)
