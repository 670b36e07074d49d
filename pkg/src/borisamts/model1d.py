"""One-dimensional inverse-square repulsion: exact solution and adaptive Verlet.

The model is dx/dt = v, dv/dt = 1/x^2 (dimensionless). Energy
H = v^2/2 + 1/x is conserved, the turning point is x_L = 1/H, and the time to
travel from x_L to x has a closed form, which is inverted by bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence


class BreakdownError(RuntimeError):
    """The adaptive integrator produced a nonphysical state."""

    def __init__(self, step: int, reason: str):
        super().__init__(f"breakdown at step {step}: {reason}")
        self.step = step


@dataclass(frozen=True)
class Oracle1DState:
    x: float
    v: float
    t: float

    @property
    def energy(self) -> float:
        return energy(self.x, self.v)


@dataclass(frozen=True)
class SundmanG1D:
    """Time rescaling g(x) = x ** beta."""

    beta: float

    def __call__(self, x: float) -> float:
        return x**self.beta


def energy(x: float, v: float) -> float:
    return 0.5 * v * v + 1.0 / x


def x_lowest(x0: float, v0: float) -> float:
    if not x0 > 0:
        raise ValueError("x0 must be positive")
    return 2.0 * x0 / (2.0 + v0 * v0 * x0)


def _check_domain(x, x_lowest_):
    if x < x_lowest_:
        raise ValueError(f"x = {x!r} lies below the turning point {x_lowest_!r}")


def velocity_at(x: float, x_L: float) -> float:
    _check_domain(x, x_L)
    # 1/x_L - 1/x written as a single fraction to keep precision near x_L
    return math.sqrt(2.0 * (x - x_L) / (x * x_L))


def time_from_lowest(x: float, x_L: float) -> float:
    """Time to move from the turning point x_L out to x."""
    _check_domain(x, x_L)
    d = x - x_L
    # log((sqrt(x - x_L) + sqrt(x)) / sqrt(x_L)) == asinh(sqrt((x - x_L) / x_L))
    return math.sqrt(0.5 * x_L) * (math.sqrt(x * d) + x_L * math.asinh(math.sqrt(d / x_L)))


def invert_time(t: float, x_L: float) -> float:
    """Position reached a time ``t`` after the turning point (bisection)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return x_L
    lo = x_L
    # at least one ulp wide, else a tiny t rounds the bracket shut
    hi = x_L + max(t * t / (x_L * x_L), math.ulp(x_L))
    for _ in range(3):
        if time_from_lowest(hi, x_L) >= t:
            break
        hi = x_L + 4.0 * (hi - x_L)
    else:
        raise ArithmeticError(f"could not bracket T^-1({t}) for x_L = {x_L}")
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if time_from_lowest(mid, x_L) < t:
            lo = mid
        else:
            hi = mid
    # both ends are adjacent floats; keep the one whose time is closer
    if abs(time_from_lowest(lo, x_L) - t) <= abs(time_from_lowest(hi, x_L) - t):
        return lo
    return hi


def exact_solution(x0: float, v0: float, t: float) -> Oracle1DState:
    x_L = x_lowest(x0, v0)
    t_to_x0 = time_from_lowest(x0, x_L)
    t_L = -t_to_x0 if v0 > 0 else t_to_x0
    x = invert_time(abs(t - t_L), x_L)
    v = velocity_at(x, x_L)
    return Oracle1DState(x, v if t > t_L else -v, t)


def scenario_initial_state(H: float, t_turn: float = 10.0) -> tuple:
    """Initial (x0, v0) at energy H that reaches its turning point at t_turn."""
    x_L = 1.0 / H
    x0 = invert_time(t_turn, x_L)
    return x0, -velocity_at(x0, x_L)


def lambda_update(lam: float, g_value: float) -> float:
    """Reciprocal step-factor update 1 / (2/g - 1/lam)."""
    return 1.0 / (2.0 / g_value - 1.0 / lam)


@dataclass(frozen=True)
class VerletResult:
    state: Oracle1DState
    steps: int


def adaptive_verlet(x0: float, v0: float, t_end: float, g, dt0: float,
                    max_steps: int | None = None) -> VerletResult:
    """Adaptive Verlet with Sundman rescaling dt/dtau = g(x).

    Runs while t < t_end, so the final time may overshoot t_end by part of a
    step. ``max_steps`` stops the loop early regardless of t.
    """
    if not x0 > 0 or not dt0 > 0:
        raise ValueError("x0 and dt0 must be positive")
    lam = g(x0)
    dtau = dt0 / lam
    x, v, t = x0, v0, 0.0
    steps = 0
    while t < t_end and (max_steps is None or steps < max_steps):
        half = 0.5 * dtau * lam
        v += half / (x * x)
        x += half * v
        t += half
        if not x > 0:
            raise BreakdownError(steps, f"x = {x!r}")
        try:
            lam = lambda_update(lam, g(x))
        except ZeroDivisionError:
            raise BreakdownError(steps, "step factor diverged") from None
        if not (lam > 0 and math.isfinite(lam)):
            raise BreakdownError(steps, f"step factor {lam!r}")
        half = 0.5 * dtau * lam
        x += half * v
        if not x > 0:
            raise BreakdownError(steps, f"x = {x!r}")
        v += half / (x * x)
        t += half
        steps += 1
    return VerletResult(Oracle1DState(x, v, t), steps)


def calibrate_dt0(x0, v0, t_end, g, steps=1000, rtol=1e-13, max_iter=200):
    """Initial step for which ``steps`` adaptive steps end at t_end.

    The end time after a fixed number of steps grows with dt0 until the run
    breaks down, so the crossing is bracketed by geometric growth (a breakdown
    counts as overshoot) and then refined with an Illinois-type secant. The
    returned dt0 lands on or just past t_end, so the run takes exactly
    ``steps`` steps. Raises BreakdownError if no such dt0 exists.
    """
    def miss(dt):
        try:
            res = adaptive_verlet(x0, v0, math.inf, g, dt, max_steps=steps)
        except BreakdownError:
            return math.inf
        return res.state.t - t_end

    lo = t_end / steps
    f_lo = miss(lo)
    while f_lo >= 0:
        lo *= 0.5
        f_lo = miss(lo)
    hi = lo
    f_hi = f_lo
    while f_hi < 0:
        lo, f_lo = hi, f_hi
        hi *= 1.25
        f_hi = miss(hi)
        if hi > 1e6 * t_end:
            raise BreakdownError(steps, "end time not reachable")

    side = 0
    for _ in range(max_iter):
        if math.isfinite(f_hi):
            # Illinois: halve the weight of an endpoint kept twice in a row
            w_lo = 0.5 * f_lo if side == -1 else f_lo
            w_hi = 0.5 * f_hi if side == 1 else f_hi
            mid = hi - w_hi * (hi - lo) / (w_hi - w_lo)
        else:
            mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        f_mid = miss(mid)
        if f_mid < 0:
            lo, f_lo = mid, f_mid
            side = 1
        else:
            hi, f_hi = mid, f_mid
            side = -1
            if f_mid <= rtol * t_end:
                break
    if not (math.isfinite(f_hi) and f_hi <= 1e-9 * t_end):
        raise BreakdownError(steps, "no initial step reaches t_end without breakdown")
    return hi


@dataclass(frozen=True)
class SweepRow:
    H: float
    beta: float
    steps_taken: int
    dt0: float
    err_x: float
    err_v: float
    err_max: float
    broke_down: bool


SWEEP_COLUMNS = tuple(SweepRow.__dataclass_fields__)


def sweep_point(H: float, beta: float, steps: int = 1000, t_end: float = 20.0,
                t_turn: float = 10.0) -> SweepRow:
    x0, v0 = scenario_initial_state(H, t_turn)
    g = SundmanG1D(beta)
    nan = float("nan")
    try:
        dt0 = calibrate_dt0(x0, v0, t_end, g, steps)
        res = adaptive_verlet(x0, v0, t_end, g, dt0)
    except (BreakdownError, ArithmeticError, OverflowError, ZeroDivisionError):
        return SweepRow(H, beta, 0, nan, nan, nan, nan, True)
    # compare at the time actually reached, which equals t_end to ~1e-13
    ref = exact_solution(x0, v0, res.state.t)
    err_x = abs(res.state.x - ref.x) / abs(ref.x)
    err_v = abs(res.state.v - ref.v) / abs(ref.v)
    return SweepRow(H, beta, res.steps, dt0, err_x, err_v, max(err_x, err_v), False)


DEFAULT_ENERGIES = (1.0, 10.0, 100.0)
DEFAULT_BETAS = tuple(0.25 * k for k in range(9))


def beta_sweep(energies: Iterable[float] = DEFAULT_ENERGIES,
               betas: Sequence[float] = DEFAULT_BETAS, steps: int = 1000,
               t_end: float = 20.0) -> list:
    rows = []
    for H in energies:
        if not H > 0:
            raise ValueError("energy levels must be positive")
        for beta in betas:
            rows.append(sweep_point(H, beta, steps, t_end))
    return rows
