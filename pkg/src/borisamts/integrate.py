"""Boris-Buneman integrators: constant step, stale-force reuse, MTS and AMTS.

All integrators are compositions of two primitives:

* ``drift``: positions move with the current velocities, momenta fixed;
* ``kick``: the Boris momentum update (half electric kick, magnetic
  rotation, half electric kick), positions fixed.

MTS brackets ``m`` external-field Boris substeps between two half kicks with
the self field, so the expensive space-charge solve runs once per outer step.
AMTS additionally rescales the outer step every step by
``(max particle self-field acceleration) ** (-beta / 2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import C_LIGHT, Bunch, rms_size
from .fields import (
    ExternalFieldModel,
    FieldSample,
    SelfFieldResult,
    max_self_acceleration,
)

METHODS = ("BB", "BBStale", "MTS", "AMTS")
ACCEL_FLOOR = 1e-20

SelfFieldFn = Callable[[Bunch], SelfFieldResult]


class AdaptiveStepError(RuntimeError):
    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite step factor {value!r} at outer step {step}")
        self.step = step


def drift(h: float, bunch: Bunch) -> Bunch:
    """Advance positions by ``h`` times the velocity; momenta unchanged."""
    return bunch.replace(
        positions=bunch.positions + h * bunch.velocities(), t=bunch.t + h
    )


def kick(h: float, bunch: Bunch, fields: FieldSample) -> Bunch:
    """Boris momentum update over ``h`` in the fields sampled at each particle."""
    qh2 = 0.5 * h * bunch.q
    p = bunch.momenta + qh2 * fields.e
    gamma = np.sqrt(1.0 + np.sum(p * p, axis=1) / (bunch.m * C_LIGHT) ** 2)
    r = qh2 * fields.b / (bunch.m * gamma[:, None])
    w = p + np.cross(p, r)
    s = 2.0 * r / (1.0 + np.sum(r * r, axis=1))[:, None]
    p = p + np.cross(w, s)
    p = p + qh2 * fields.e
    return bunch.replace(momenta=p)


def external_substep(h: float, bunch: Bunch, external: ExternalFieldModel) -> Bunch:
    """One Boris step driven by external fields only."""
    bunch = drift(0.5 * h, bunch)
    bunch = kick(h, bunch, external.evaluate(bunch.positions, bunch.t))
    return drift(0.5 * h, bunch)


def step_bb_stale(h, bunch, external, solver: SelfFieldFn, n=1, step_index=0,
                  cached: Optional[SelfFieldResult] = None):
    """Boris step that re-solves the self field only on every ``n``-th step.

    Returns the new bunch and the self field used, to be passed back as
    ``cached`` on the following step.
    """
    bunch = drift(0.5 * h, bunch)
    if cached is None or step_index % n == 0:
        cached = solver(bunch)
    fields = external.evaluate(bunch.positions, bunch.t) + cached.fields
    bunch = kick(h, bunch, fields)
    return drift(0.5 * h, bunch), cached


def step_bb(h: float, bunch: Bunch, external: ExternalFieldModel,
            solver: SelfFieldFn) -> Bunch:
    return step_bb_stale(h, bunch, external, solver)[0]


def step_mts(h, m, bunch, external, solver: SelfFieldFn, cached_self: SelfFieldResult):
    """One outer multiple-time-stepping step.

    ``cached_self`` must be the self field of the current positions (the
    trailing solve of the previous step, or an initial solve).
    """
    if m < 1:
        raise ValueError(f"substep count must be >= 1, got {m}")
    bunch = kick(0.5 * h, bunch, cached_self.fields)
    inner = h / m
    for _ in range(m):
        bunch = external_substep(inner, bunch, external)
    fresh = solver(bunch)
    bunch = kick(0.5 * h, bunch, fresh.fields)
    return bunch, fresh


def g_function(bunch: Bunch, self_result: SelfFieldResult, beta: float,
               floor: float = ACCEL_FLOOR) -> float:
    """Step factor (max_i |a_i|) ** (-beta / 2), constants dropped."""
    accel = max_self_acceleration(bunch, self_result.e, self_result.b)
    return max(accel, floor) ** (-0.5 * beta)


def beam_size_g(bunch: Bunch) -> float:
    """Step factor proportional to the rms beam radius."""
    return math.sqrt(sum(rms_size(bunch, a) ** 2 for a in "xyz"))


@dataclass(frozen=True)
class IntegratorConfig:
    method: str
    t_end: float
    h: Optional[float] = None
    n: int = 1
    m: int = 1
    dt_outer_init: Optional[float] = None
    dt_inner: Optional[float] = None
    beta: float = 1.0
    g: str = "acceleration"
    h_min: Optional[float] = None
    h_max: Optional[float] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.method == "AMTS":
            if not (self.dt_outer_init and self.dt_outer_init > 0
                    and self.dt_inner and self.dt_inner > 0):
                raise ValueError("AMTS needs positive dt_outer_init and dt_inner")
            if self.dt_inner > self.dt_outer_init:
                raise ValueError("dt_inner must not exceed dt_outer_init")
            if self.g not in ("acceleration", "beam_size"):
                raise ValueError(f"unknown g-function {self.g!r}")
            if self.g == "acceleration" and not self.beta > 0:
                raise ValueError("beta must be positive")
            if self.step_bounds[0] > self.step_bounds[1]:
                raise ValueError("h_min must not exceed h_max")
        else:
            if not (self.h and self.h > 0):
                raise ValueError(f"{self.method} needs a positive step h")
        if self.n < 1 or self.m < 1:
            raise ValueError("stale period n and substeps m must be >= 1")

    @property
    def step_bounds(self) -> tuple:
        lo = self.h_min if self.h_min is not None else self.dt_inner
        hi = self.h_max if self.h_max is not None else 1e4 * self.dt_inner
        return lo, hi


@dataclass(frozen=True)
class TraceRow:
    t: float
    h: float
    m: int
    lam: float
    max_accel: float
    clamped: bool = False


@dataclass
class StepTrace:
    rows: list = field(default_factory=list)
    dtau: float = float("nan")

    def append(self, row: TraceRow):
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def __len__(self):
        return len(self.rows)


@dataclass
class RunResult:
    bunch: Bunch
    trace: StepTrace
    snapshots: list
    solves: int


def _next_step(t, h, stops, k_stop):
    """Shorten ``h`` to land on the next stop time if it would reach it."""
    target = stops[k_stop]
    remaining = target - t
    if h >= remaining * (1.0 - 1e-9):
        return remaining, True
    return h, False


def run(bunch: Bunch, external: ExternalFieldModel, solver: SelfFieldFn,
        cfg: IntegratorConfig, checkpoints: Sequence[float] = (),
        observer: Optional[Callable[[Bunch, TraceRow, int], None]] = None) -> RunResult:
    """Integrate from ``bunch.t`` to ``cfg.t_end`` with the configured method.

    Steps are shortened to land exactly on every checkpoint and on t_end; the
    state at each of those times is returned in ``snapshots`` (t_end last).
    ``observer`` is called after every outer step with the cumulative number
    of self-field solves.
    """
    t0 = bunch.t
    t_end = t0 + cfg.t_end
    stops = sorted({t0 + c for c in checkpoints if 0 < c < cfg.t_end} | {t_end})
    k_stop = 0
    snapshots = []
    trace = StepTrace()
    solves = 0

    def counted(b):
        nonlocal solves
        solves += 1
        return solver(b)

    cached = None
    if cfg.method in ("MTS", "AMTS"):
        cached = counted(bunch)
    if cfg.method == "AMTS":
        lam0 = _step_factor(bunch, cached, cfg)
        trace.dtau = cfg.dt_outer_init / lam0
        h_lo, h_hi = cfg.step_bounds

    step = 0
    while k_stop < len(stops):
        lam = float("nan")
        accel = float("nan")
        clamped = False
        if cfg.method == "AMTS":
            lam = _step_factor(bunch, cached, cfg)
            if not (math.isfinite(lam) and lam > 0):
                raise AdaptiveStepError(step, lam)
            accel = max_self_acceleration(bunch, cached.e, cached.b)
            h_nom = lam * trace.dtau
            h_cl = min(max(h_nom, h_lo), h_hi)
            clamped = h_cl != h_nom
        else:
            h_cl = cfg.h
        h, landed = _next_step(bunch.t, h_cl, stops, k_stop)
        clamped = clamped or (landed and h != h_cl)

        if cfg.method == "BB" or cfg.method == "BBStale":
            period = cfg.n if cfg.method == "BBStale" else 1
            bunch, cached = step_bb_stale(h, bunch, external, counted, period, step, cached)
            m = 1
            accel = cached.max_accel
        elif cfg.method == "MTS":
            m = cfg.m
            bunch, cached = step_mts(h, m, bunch, external, counted, cached)
            accel = cached.max_accel
        else:
            m = max(1, round(h / cfg.dt_inner))
            bunch, cached = step_mts(h, m, bunch, external, counted, cached)

        if landed:
            bunch = bunch.replace(t=stops[k_stop])
            snapshots.append(bunch)
            k_stop += 1
        if not bunch.is_finite():
            raise FloatingPointError(f"non-finite particle state after outer step {step}")
        row = TraceRow(bunch.t, h, m, lam, accel, clamped)
        trace.append(row)
        if observer is not None:
            observer(bunch, row, solves)
        step += 1

    return RunResult(bunch, trace, snapshots, solves)


def _step_factor(bunch, self_result, cfg):
    if cfg.g == "beam_size":
        return beam_size_g(bunch)
    return g_function(bunch, self_result, cfg.beta)


def run_amts(bunch, external, solver, cfg: IntegratorConfig):
    if cfg.method != "AMTS":
        raise ValueError("run_amts needs an AMTS configuration")
    res = run(bunch, external, solver, cfg)
    return res.bunch, res.trace
