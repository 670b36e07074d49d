"""External field models and the space-charge (self field) solvers.

Self fields are computed in the quasi-static approximation: particle
positions are boosted into the frame moving with the mean beam velocity, the
electrostatic field of the (static) charge cloud is found there, and the
result is transformed back to the lab frame, which yields both an electric
and a magnetic self field.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numba
import numpy as np

from .core import C_LIGHT, EPSILON_0, Bunch, lorentz_gamma

COULOMB_K = 1.0 / (4.0 * np.pi * EPSILON_0)


@dataclass
class FieldSample:
    """Electric [V/m] and magnetic [T] field, one row per particle."""

    e: np.ndarray
    b: np.ndarray

    def __add__(self, other: "FieldSample") -> "FieldSample":
        return FieldSample(self.e + other.e, self.b + other.b)

    @classmethod
    def zeros(cls, n: int) -> "FieldSample":
        return cls(np.zeros((n, 3)), np.zeros((n, 3)))


# --------------------------------------------------------------------------
# External fields


class ExternalFieldModel(Protocol):
    def evaluate(self, x: np.ndarray, t: float) -> FieldSample: ...


def _rows(x) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class UniformE:
    e0: tuple

    def evaluate(self, x, t):
        x = _rows(x)
        e = np.broadcast_to(np.asarray(self.e0, dtype=float), x.shape).copy()
        return FieldSample(e, np.zeros_like(x))


@dataclass(frozen=True)
class UniformB:
    b0: tuple

    def evaluate(self, x, t):
        x = _rows(x)
        b = np.broadcast_to(np.asarray(self.b0, dtype=float), x.shape).copy()
        return FieldSample(np.zeros_like(x), b)


@dataclass(frozen=True)
class Solenoid:
    """Ideal long solenoid: constant field ``bz`` along ``axis``."""

    bz: float
    axis: tuple = (0.0, 0.0, 1.0)

    def evaluate(self, x, t):
        x = _rows(x)
        n = np.asarray(self.axis, dtype=float)
        n = n / np.linalg.norm(n)
        b = np.broadcast_to(self.bz * n, x.shape).copy()
        return FieldSample(np.zeros_like(x), b)


@dataclass(frozen=True)
class RFGap:
    """Accelerating gap of length ``length`` centred at ``z0`` on the z axis.

    Inside the gap the longitudinal field is ``gradient * cos(omega t + phase)``
    and the azimuthal magnetic field is the near-axis TM010 companion
    ``-(omega r / 2 c^2) * gradient * sin(omega t + phase)``.
    """

    z0: float
    gradient: float
    omega: float
    phase: float
    length: float

    def evaluate(self, x, t):
        x = _rows(x)
        inside = np.abs(x[:, 2] - self.z0) <= 0.5 * self.length
        arg = self.omega * t + self.phase
        e = np.zeros_like(x)
        b = np.zeros_like(x)
        e[:, 2] = np.where(inside, self.gradient * np.cos(arg), 0.0)
        # B_theta = k r  =>  (Bx, By) = k (-y, x)
        k = np.where(inside, -self.omega / (2 * C_LIGHT**2) * self.gradient * np.sin(arg), 0.0)
        b[:, 0] = -k * x[:, 1]
        b[:, 1] = k * x[:, 0]
        return FieldSample(e, b)


@dataclass(frozen=True)
class Superposition:
    models: tuple = ()

    def evaluate(self, x, t):
        x = _rows(x)
        total = FieldSample.zeros(x.shape[0])
        for model in self.models:
            total = total + model.evaluate(x, t)
        return total


NO_FIELD = Superposition(())


def eval_external(model: ExternalFieldModel, x, t: float) -> FieldSample:
    return model.evaluate(x, t)


# --------------------------------------------------------------------------
# Self fields


class DegenerateDepositError(ValueError):
    """All particles sit at the same point; no mesh can be laid over them."""


@dataclass(frozen=True)
class SelfFieldSolverConfig:
    kind: str = "direct"
    softening: float = 1e-6
    grid: tuple = (32, 32, 32)
    padding: int = 2

    def __post_init__(self):
        if self.kind not in ("direct", "mesh"):
            raise ValueError(f"unknown self-field solver {self.kind!r}")
        if not self.softening > 0:
            raise ValueError("softening length must be positive")
        if len(self.grid) != 3 or any(n < 8 or n % 2 for n in self.grid):
            raise ValueError(f"grid dimensions must be even and >= 8, got {self.grid}")
        if self.padding < 2:
            raise ValueError("open boundaries need a padding factor of at least 2")


@dataclass
class SelfFieldResult:
    e: np.ndarray
    b: np.ndarray
    max_accel: float

    @property
    def fields(self) -> FieldSample:
        return FieldSample(self.e, self.b)


def acceleration(p, f, m):
    """Second time derivative of position for momentum ``p`` under force ``f``.

    a = (f - p (p.f) / (m c gamma)^2) / (m gamma)
    """
    p = np.asarray(p, dtype=float)
    f = np.asarray(f, dtype=float)
    gamma = lorentz_gamma(p, m)[..., None]
    pf = np.sum(p * f, axis=-1, keepdims=True)
    return (f - p * pf / (m * C_LIGHT * gamma) ** 2) / (m * gamma)


def max_self_acceleration(bunch: Bunch, e: np.ndarray, b: np.ndarray) -> float:
    f = bunch.q * (e + np.cross(bunch.velocities(), b))
    a = acceleration(bunch.momenta, f, bunch.m)
    return float(np.sqrt(np.max(np.sum(a * a, axis=1))))


@numba.njit(cache=True, nogil=True)
def _pairwise_coulomb(x, eps2):
    """Sum over pairs of (x_i - x_j) / (|x_i - x_j|^2 + eps2)^(3/2).

    Each pair is visited once and its contribution added with opposite signs,
    so the result is exactly antisymmetric pair by pair.
    """
    n = x.shape[0]
    out = np.zeros((n, 3))
    for i in range(n):
        xi0 = x[i, 0]
        xi1 = x[i, 1]
        xi2 = x[i, 2]
        a0 = 0.0
        a1 = 0.0
        a2 = 0.0
        for j in range(i + 1, n):
            d0 = xi0 - x[j, 0]
            d1 = xi1 - x[j, 1]
            d2 = xi2 - x[j, 2]
            r2 = d0 * d0 + d1 * d1 + d2 * d2 + eps2
            w = 1.0 / (r2 * np.sqrt(r2))
            a0 += d0 * w
            a1 += d1 * w
            a2 += d2 * w
            out[j, 0] -= d0 * w
            out[j, 1] -= d1 * w
            out[j, 2] -= d2 * w
        out[i, 0] += a0
        out[i, 1] += a1
        out[i, 2] += a2
    return out


def direct_sum_field(x: np.ndarray, charge: float, softening: float) -> np.ndarray:
    """Softened Coulomb field at each of the charges ``x`` (static frame)."""
    x = np.ascontiguousarray(x, dtype=float)
    return COULOMB_K * charge * _pairwise_coulomb(x, softening**2)


def _cic_weights(x, origin, h, shape):
    s = (x - origin) / h
    i0 = np.floor(s).astype(np.int64)
    i0 = np.clip(i0, 0, np.asarray(shape) - 2)
    f = s - i0
    return i0, f


def _cic_corners(i0, f):
    for dx in (0, 1):
        wx = f[:, 0] if dx else 1.0 - f[:, 0]
        for dy in (0, 1):
            wy = f[:, 1] if dy else 1.0 - f[:, 1]
            for dz in (0, 1):
                wz = f[:, 2] if dz else 1.0 - f[:, 2]
                yield (i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz), wx * wy * wz


def cic_deposit(x, charge, origin, h, shape) -> np.ndarray:
    """Cloud-in-cell charge [C] at each grid node."""
    i0, f = _cic_weights(x, origin, h, shape)
    rho = np.zeros(int(np.prod(shape)))
    for idx, w in _cic_corners(i0, f):
        flat = np.ravel_multi_index(idx, shape)
        rho += np.bincount(flat, weights=w, minlength=rho.size)
    return charge * rho.reshape(shape)


def cic_gather(grid_vec: np.ndarray, x, origin, h) -> np.ndarray:
    """Trilinear interpolation of a (nx, ny, nz, 3) node field to ``x``."""
    shape = grid_vec.shape[:3]
    i0, f = _cic_weights(x, origin, h, shape)
    out = np.zeros((x.shape[0], 3))
    for idx, w in _cic_corners(i0, f):
        out += w[:, None] * grid_vec[idx]
    return out


def _cell_mean_inverse_distance(h, k=16) -> float:
    # midpoint rule on k^3 sub-cells; k even keeps the singular point off the nodes
    u = (np.arange(k) + 0.5) / k - 0.5
    gx, gy, gz = np.meshgrid(u * h[0], u * h[1], u * h[2], indexing="ij")
    return float(np.mean(1.0 / np.sqrt(gx**2 + gy**2 + gz**2)))


def _open_green(shape, padding, h) -> np.ndarray:
    padded = tuple(padding * n for n in shape)
    axes = []
    for n_pad, hk in zip(padded, h):
        i = np.arange(n_pad)
        axes.append(np.minimum(i, n_pad - i) * hk)
    gx, gy, gz = np.meshgrid(*axes, indexing="ij", sparse=True)
    r = np.sqrt(gx**2 + gy**2 + gz**2)
    r[0, 0, 0] = 1.0
    g = COULOMB_K / r
    g[0, 0, 0] = COULOMB_K * _cell_mean_inverse_distance(h)
    return g


def mesh_field(x: np.ndarray, charge: float, cfg: SelfFieldSolverConfig) -> np.ndarray:
    """Electrostatic field from a CIC / FFT open-boundary Poisson solve.

    The grid is laid over the bounding box of ``x`` with one spare cell on
    each side, so it always contains the bunch.
    """
    shape = tuple(int(n) for n in cfg.grid)
    lo = x.min(axis=0)
    hi = x.max(axis=0)
    span = hi - lo
    if not np.any(span > 0):
        raise DegenerateDepositError("all particles at an identical position")
    # flat bunches: give the empty axis a small but finite thickness
    span = np.maximum(span, 1e-3 * span.max())
    center = 0.5 * (lo + hi)
    h = span / (np.asarray(shape) - 3)
    origin = center - 0.5 * span - h

    q_grid = cic_deposit(x, charge, origin, h, shape)
    green = _open_green(shape, cfg.padding, h)
    padded = green.shape
    axes = (0, 1, 2)
    phi = np.fft.irfftn(
        np.fft.rfftn(q_grid, s=padded, axes=axes) * np.fft.rfftn(green), s=padded, axes=axes
    )[: shape[0], : shape[1], : shape[2]]
    grad = np.gradient(phi, *h)
    e_grid = -np.stack(grad, axis=-1)
    return cic_gather(e_grid, x, origin, h)


def solve_self_field(bunch: Bunch, cfg: SelfFieldSolverConfig) -> SelfFieldResult:
    """Lab-frame self fields of the bunch in the quasi-static approximation."""
    n = bunch.n
    charge = bunch.macro_charge
    if n == 1 or charge == 0.0:
        zeros = np.zeros((n, 3))
        return SelfFieldResult(zeros, zeros.copy(), 0.0)

    x = bunch.positions - bunch.positions.mean(axis=0)
    gamma_mean = float(bunch.gamma().mean())
    p_mean = bunch.momenta.mean(axis=0)
    p_norm = np.linalg.norm(p_mean)
    boosted = p_norm > 0.0 and gamma_mean > 1.0
    if boosted:
        axis = p_mean / p_norm
        x = x + (gamma_mean - 1.0) * np.outer(x @ axis, axis)

    if cfg.kind == "direct":
        e_rest = direct_sum_field(x, charge, cfg.softening)
    else:
        e_rest = mesh_field(x, charge, cfg)

    if boosted:
        e_par = np.outer(e_rest @ axis, axis)
        e = e_par + gamma_mean * (e_rest - e_par)
        v_mean = C_LIGHT * np.sqrt(1.0 - 1.0 / gamma_mean**2) * axis
        b = np.cross(v_mean, e) / C_LIGHT**2
    else:
        e = e_rest
        b = np.zeros_like(e)
    return SelfFieldResult(e, b, max_self_acceleration(bunch, e, b))


@dataclass
class SelfFieldSolver:
    """Callable self-field solver that counts its invocations."""

    config: SelfFieldSolverConfig = field(default_factory=SelfFieldSolverConfig)
    calls: int = 0

    def __call__(self, bunch: Bunch) -> SelfFieldResult:
        self.calls += 1
        return solve_self_field(bunch, self.config)


def zero_self_field(n: int) -> SelfFieldResult:
    return SelfFieldResult(np.zeros((n, 3)), np.zeros((n, 3)), 0.0)

