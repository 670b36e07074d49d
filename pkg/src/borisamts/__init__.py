"""Boris-Buneman integrators with space charge: multiple time stepping and
adaptive outer steps driven by the self-field acceleration."""

from .core import (
    Bunch,
    DegenerateInputError,
    DiagnosticsRow,
    lorentz_gamma,
    mean_kinetic_energy,
    rms_emittance,
    rms_size,
    transverse_emittance,
)
from .fields import (
    NO_FIELD,
    FieldSample,
    RFGap,
    SelfFieldSolver,
    SelfFieldSolverConfig,
    Solenoid,
    Superposition,
    UniformB,
    UniformE,
    solve_self_field,
)
from .integrate import (
    IntegratorConfig,
    RunResult,
    StepTrace,
    drift,
    g_function,
    kick,
    run,
    run_amts,
    step_bb,
    step_bb_stale,
    step_mts,
)
from .scenario import Scenario, load_scenario, make_bunch

__version__ = "0.1.0"
