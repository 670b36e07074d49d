"""Physical constants, the particle bunch and beam diagnostics."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy import constants as ct

C_LIGHT = ct.c
EPSILON_0 = ct.epsilon_0
Q_E = ct.e
M_E = ct.m_e
M_P = ct.m_p

AXES = {"x": 0, "y": 1, "z": 2}


class DegenerateInputError(ValueError):
    """Raised when a statistic is undefined for the given particle set."""


@dataclass(frozen=True)
class Bunch:
    """State of N macroparticles.

    Momenta are those of a single physical particle of charge ``q`` and rest
    mass ``m``; each macroparticle stands for ``weight`` physical particles, so
    the source charge seen by the self-field solvers is ``q * weight``.
    """

    positions: np.ndarray
    momenta: np.ndarray
    q: float
    m: float
    t: float = 0.0
    weight: float = 1.0

    def __post_init__(self):
        x = np.array(self.positions, dtype=float, ndmin=2)
        p = np.array(self.momenta, dtype=float, ndmin=2)
        if x.shape != p.shape or x.ndim != 2 or x.shape[1] != 3:
            raise ValueError(
                f"positions {x.shape} and momenta {p.shape} must both be (N, 3)"
            )
        if x.shape[0] < 1:
            raise ValueError("a bunch needs at least one particle")
        if not self.m > 0:
            raise ValueError(f"mass must be positive, got {self.m}")
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "momenta", p)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def macro_charge(self) -> float:
        return self.q * self.weight

    def gamma(self) -> np.ndarray:
        return lorentz_gamma(self.momenta, self.m)

    def velocities(self) -> np.ndarray:
        return self.momenta / (self.m * self.gamma()[:, None])

    def replace(self, **changes) -> "Bunch":
        return dataclasses.replace(self, **changes)

    def is_finite(self) -> bool:
        return bool(
            np.isfinite(self.positions).all()
            and np.isfinite(self.momenta).all()
            and np.isfinite(self.t)
        )


def lorentz_gamma(p, m):
    """Lorentz factor sqrt(1 + |p|^2 / (m c)^2).

    ``p`` may be a single 3-vector or an (N, 3) array; the result has the
    matching leading shape.
    """
    p = np.asarray(p, dtype=float)
    u = p / (m * C_LIGHT)
    return np.sqrt(1.0 + np.sum(u * u, axis=-1))


def rms_size(bunch: Bunch, axis: str) -> float:
    u = bunch.positions[:, AXES[axis]]
    return float(np.sqrt(np.mean((u - u.mean()) ** 2)))


def rms_emittance(bunch: Bunch, axis: str) -> float:
    """Normalized rms emittance sqrt(<u^2><p^2> - <u p>^2) / (m c).

    Moments are centered, so the value does not change when all positions or
    all momenta are shifted by a common offset.
    """
    if bunch.n < 2:
        raise DegenerateInputError("emittance needs at least two particles")
    k = AXES[axis]
    u = bunch.positions[:, k] - bunch.positions[:, k].mean()
    pu = bunch.momenta[:, k] - bunch.momenta[:, k].mean()
    uu = np.mean(u * u)
    pp = np.mean(pu * pu)
    up = np.mean(u * pu)
    # Cauchy-Schwarz makes this nonnegative; roundoff can push it just below.
    det = max(uu * pp - up * up, 0.0)
    return float(np.sqrt(det) / (bunch.m * C_LIGHT))


def transverse_emittance(bunch: Bunch) -> float:
    """Mean of the x and y normalized emittances."""
    return 0.5 * (rms_emittance(bunch, "x") + rms_emittance(bunch, "y"))


def mean_kinetic_energy(bunch: Bunch) -> float:
    """Mean of (gamma - 1) m c^2 over particles, in eV."""
    u2 = np.sum((bunch.momenta / (bunch.m * C_LIGHT)) ** 2, axis=1)
    # gamma - 1 written without cancellation for small momenta
    gm1 = u2 / (np.sqrt(1.0 + u2) + 1.0)
    return float(np.mean(gm1) * bunch.m * C_LIGHT**2 / Q_E)


@dataclass(frozen=True)
class DiagnosticsRow:
    t: float
    h: float
    m: int
    solves: int
    sigma_x: float
    sigma_y: float
    sigma_z: float
    emit_x: float
    emit_y: float
    emit_z: float
    energy_ev: float
    max_accel: float

    @classmethod
    def from_bunch(cls, bunch: Bunch, h: float, m: int, solves: int,
                   max_accel: float) -> "DiagnosticsRow":
        if bunch.n >= 2:
            emit = [rms_emittance(bunch, a) for a in "xyz"]
        else:
            emit = [0.0, 0.0, 0.0]
        return cls(
            t=bunch.t,
            h=h,
            m=m,
            solves=solves,
            sigma_x=rms_size(bunch, "x"),
            sigma_y=rms_size(bunch, "y"),
            sigma_z=rms_size(bunch, "z"),
            emit_x=emit[0],
            emit_y=emit[1],
            emit_z=emit[2],
            energy_ev=mean_kinetic_energy(bunch),
            max_accel=max_accel,
        )


DIAGNOSTICS_COLUMNS = tuple(f.name for f in dataclasses.fields(DiagnosticsRow))
