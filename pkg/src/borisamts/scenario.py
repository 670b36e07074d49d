"""Scenario description, config-file loading and the built-in stand-in scenarios.

A scenario file is TOML::

    [bunch]
    distribution = "gaussian"        # gaussian | cold_sphere | uniform_ellipsoid
    n = 2048
    sigma = [1e-3, 1e-3, 4e-3]       # m, gaussian only
    radius = 1e-3                    # m, cold_sphere only
    semi_axes = [2e-3, 2e-3, 8e-3]   # m, uniform_ellipsoid only
    momentum_spread = 0.0            # rms of p/(m c) per axis
    kinetic_energy = 1000.0          # eV, mean, along +z
    total_charge = 2e-11             # C
    species = "electron"             # or "proton"
    seed = 1

    [[external]]                     # zero or more, superposed
    type = "solenoid"                # uniform_e | uniform_b | solenoid | rf_gap
    bz = 0.05

    [self_field]
    solver = "direct"                # or "mesh"
    softening = 1e-4
    grid = [32, 32, 32]
    padding = 2

    [integrator]
    method = "AMTS"                  # BB | BBStale | MTS | AMTS
    t_end = 5e-9
    dt_outer_init = 1.25e-11
    dt_inner = 2.5e-12

    [diagnostics]
    interval = 1e-10                 # s between rows; 0 writes every outer step

    [experiment]                     # optional, read by the experiment drivers
    budgets = [25, 50, 100, 200]
    reference_solves = 3200
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .core import C_LIGHT, M_E, M_P, Q_E, Bunch
from .fields import (
    RFGap,
    SelfFieldSolverConfig,
    Solenoid,
    Superposition,
    UniformB,
    UniformE,
)
from .integrate import IntegratorConfig

SPECIES = {"electron": (-Q_E, M_E), "proton": (Q_E, M_P)}
DISTRIBUTIONS = ("gaussian", "cold_sphere", "uniform_ellipsoid")


class ConfigError(ValueError):
    """Invalid scenario file; the message carries the offending line if known."""


@dataclass(frozen=True)
class BunchSpec:
    distribution: str = "gaussian"
    n: int = 1024
    sigma: tuple = (1e-3, 1e-3, 1e-3)
    radius: float = 1e-3
    semi_axes: tuple = (1e-3, 1e-3, 1e-3)
    momentum_spread: float = 0.0
    kinetic_energy: float = 0.0
    total_charge: float = 1e-11
    species: str = "electron"
    seed: int = 1

    def __post_init__(self):
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.species not in SPECIES:
            raise ValueError(f"species must be one of {sorted(SPECIES)}")
        if len(self.sigma) != 3 or min(self.sigma) < 0:
            raise ValueError("sigma needs three nonnegative entries")
        if len(self.semi_axes) != 3 or min(self.semi_axes) <= 0:
            raise ValueError("semi_axes needs three positive entries")
        if self.radius <= 0 or self.kinetic_energy < 0 or self.momentum_spread < 0:
            raise ValueError("radius must be positive; energy and spread nonnegative")


@dataclass(frozen=True)
class Scenario:
    bunch: BunchSpec
    external: Superposition
    self_field: SelfFieldSolverConfig
    integrator: IntegratorConfig
    diagnostics_interval: float = 0.0
    experiment: dict = field(default_factory=dict)

    def with_seed(self, seed: int) -> "Scenario":
        return dataclasses.replace(self, bunch=dataclasses.replace(self.bunch, seed=seed))


def make_bunch(spec: BunchSpec) -> Bunch:
    """Sample the initial bunch with a PCG64 stream seeded by ``spec.seed``."""
    q, m = SPECIES[spec.species]
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    if spec.distribution == "gaussian":
        x = rng.standard_normal((spec.n, 3)) * np.asarray(spec.sigma, dtype=float)
    else:
        # uniform in the unit ball, then stretched
        d = rng.standard_normal((spec.n, 3))
        d /= np.linalg.norm(d, axis=1)[:, None]
        x = d * (rng.random(spec.n) ** (1.0 / 3.0))[:, None]
        if spec.distribution == "cold_sphere":
            x *= spec.radius
        else:
            x *= np.asarray(spec.semi_axes, dtype=float)
    p = np.zeros((spec.n, 3))
    if spec.momentum_spread > 0 and spec.distribution == "gaussian":
        p += rng.standard_normal((spec.n, 3)) * spec.momentum_spread * m * C_LIGHT
    gamma = 1.0 + spec.kinetic_energy * Q_E / (m * C_LIGHT**2)
    p[:, 2] += m * C_LIGHT * np.sqrt(gamma * gamma - 1.0)
    weight = spec.total_charge / (spec.n * Q_E)
    return Bunch(x, p, q, m, t=0.0, weight=weight)


# --------------------------------------------------------------------------
# Built-in scenarios


def drift_expansion(n: int = 2048, seed: int = 1) -> Scenario:
    """Cold, elongated 1 keV electron bunch blowing up under its own field.

    No external field. The run stops before the inner shells of the
    Gaussian overtake the outer ones, so the peak space-charge acceleration
    falls throughout.
    """
    t_end = 3e-9
    return Scenario(
        bunch=BunchSpec("gaussian", n, (1e-3, 1e-3, 4e-3), kinetic_energy=1000.0,
                        total_charge=2e-11, seed=seed),
        external=Superposition(()),
        self_field=SelfFieldSolverConfig("direct", softening=3e-4),
        integrator=IntegratorConfig("AMTS", t_end, dt_outer_init=t_end / 400,
                                    dt_inner=t_end / 2000),
        diagnostics_interval=t_end / 50,
        experiment={"budgets": [25, 50, 100, 200], "reference_solves": 3200},
    )


def gyro_period(spec: BunchSpec, bz: float) -> float:
    q, m = SPECIES[spec.species]
    gamma = 1.0 + spec.kinetic_energy * Q_E / (m * C_LIGHT**2)
    return 2.0 * np.pi * m * gamma / (abs(q) * abs(bz))


def focusing_channel(n: int = 512, seed: int = 1) -> Scenario:
    """Warm 100 keV electron bunch in a uniform solenoid.

    Space charge is visible but varies slowly; steps are 1/500 of the gyro
    period and the run covers four periods.
    """
    spec = BunchSpec("gaussian", n, (1e-3, 1e-3, 1e-3), momentum_spread=1e-3,
                     kinetic_energy=1e5, total_charge=1e-11, seed=seed)
    bz = 0.05
    period = gyro_period(spec, bz)
    return Scenario(
        bunch=spec,
        external=Superposition((Solenoid(bz),)),
        self_field=SelfFieldSolverConfig("direct", softening=1e-4),
        integrator=IntegratorConfig("MTS", 4 * period, h=period / 500, m=1),
        diagnostics_interval=period / 5,
        experiment={"periods": [1, 2, 4, 10, 20, 100], "checkpoints": 20},
    )


BUILTIN = {"drift-expansion": drift_expansion, "focusing-channel": focusing_channel}


# --------------------------------------------------------------------------
# Config files


def _line_of(text: str, section: str, key: str | None) -> int | None:
    """Best-effort line number of ``key`` inside ``[section]`` (1-based)."""
    current = None
    for no, line in enumerate(text.splitlines(), 1):
        head = re.match(r"\s*\[\[?\s*([\w.]+)\s*\]\]?", line)
        if head:
            current = head.group(1)
            if key is None and current == section:
                return no
            continue
        if current == section and key and re.match(rf"\s*{re.escape(key)}\s*=", line):
            return no
    return None


def _fail(text, path, section, key, msg):
    line = _line_of(text, section, key)
    where = f"{path}:{line}" if line else str(path)
    what = f"[{section}] {key}" if key else f"[{section}]"
    raise ConfigError(f"{where}: {what}: {msg}")


def _external_model(entry: dict):
    kind = entry.get("type")
    args = {k: v for k, v in entry.items() if k != "type"}
    if kind == "uniform_e":
        return UniformE(tuple(args.pop("e0")), **args)
    if kind == "uniform_b":
        return UniformB(tuple(args.pop("b0")), **args)
    if kind == "solenoid":
        if "axis" in args:
            args["axis"] = tuple(args["axis"])
        return Solenoid(**args)
    if kind == "rf_gap":
        return RFGap(**args)
    raise ValueError(f"unknown external field type {kind!r}")


_SECTIONS = {"bunch", "external", "self_field", "integrator", "diagnostics", "experiment"}


def parse_scenario(text: str, path: str = "<config>") -> Scenario:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    for name in doc:
        if name not in _SECTIONS:
            _fail(text, path, name, None, "unknown section")
    for required in ("bunch", "integrator"):
        if required not in doc:
            raise ConfigError(f"{path}: missing [{required}] section")

    def build(section, factory, table, rename=None):
        table = dict(table)
        for old, new in (rename or {}).items():
            if old in table:
                table[new] = table.pop(old)
        names = {f.name for f in dataclasses.fields(factory)}
        for key in table:
            if key not in names:
                inv = {v: k for k, v in (rename or {}).items()}
                _fail(text, path, section, inv.get(key, key), "unknown key")
        try:
            return factory(**table)
        except (TypeError, ValueError) as exc:
            key = next(iter(table), None)
            for k in table:
                if k in str(exc):
                    key = k
                    break
            inv = {v: k for k, v in (rename or {}).items()}
            _fail(text, path, section, inv.get(key, key), str(exc))

    bunch_tab = dict(doc["bunch"])
    for key in ("sigma", "semi_axes"):
        if key in bunch_tab:
            bunch_tab[key] = tuple(bunch_tab[key])
    bunch = build("bunch", BunchSpec, bunch_tab)

    models = []
    for entry in doc.get("external", []):
        try:
            models.append(_external_model(entry))
        except (TypeError, ValueError, KeyError) as exc:
            _fail(text, path, "external", "type", f"{exc}")

    sf_tab = dict(doc.get("self_field", {}))
    if "grid" in sf_tab:
        sf_tab["grid"] = tuple(sf_tab["grid"])
    self_field = build("self_field", SelfFieldSolverConfig, sf_tab, {"solver": "kind"})

    integrator = build("integrator", IntegratorConfig, doc["integrator"])

    diag = doc.get("diagnostics", {})
    interval = diag.get("interval", 0.0)
    if set(diag) - {"interval"}:
        _fail(text, path, "diagnostics", sorted(set(diag) - {"interval"})[0], "unknown key")
    if not isinstance(interval, (int, float)) or interval < 0:
        _fail(text, path, "diagnostics", "interval", "must be a nonnegative number")

    return Scenario(bunch, Superposition(tuple(models)), self_field, integrator,
                    float(interval), dict(doc.get("experiment", {})))


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_scenario(text, str(path))
