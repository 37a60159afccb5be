"""jcblink: quantum-trajectory study of driven Jaynes-Cummings bistability.

Submodules
----------
model        operators, Hamiltonians, dressed states, jump branching ratios
steadystate  master-equation steady state via the Liouvillian null space
mcwf         Monte Carlo wave-function trajectories and per-sample observables
neoclassical factorized-field self-consistency, phase boundaries
telegraph    binarization, dwell times, rates, switching-event extraction
scaling      drive sweeps, F = 1/2 crossings, power-law fits
cli          command-line front end and the trajectory farm
"""

from .cli import RunConfig, farm, parse_config
from .mcwf import (
    CutoffBreachError,
    JumpEvent,
    TrajectoryConfig,
    TrajectoryRecord,
    cutoff_guard,
    field_phase,
    instantaneous_mandel_q,
    load_record,
    run_trajectory,
    save_record,
    time_average,
)
from .model import (
    ModelParams,
    Operators,
    atomic_switch_probability,
    basis_index,
    basis_state,
    build_effective_hamiltonian,
    build_hamiltonian,
    build_operators,
    dressed_energy,
    dressed_state,
    jump_operators,
    ladder_switch_probability,
    suggested_cutoff,
)
from .neoclassical import (
    BranchSet,
    PhaseBoundary,
    bistability_boundaries,
    blink_off_rate_law,
    bright_photon_estimate,
    expected_bright_phase,
    lower_boundary_estimate,
    phase_diagram,
    solve_branches,
)
from .scaling import (
    EtaStar,
    ExponentFit,
    StudyResult,
    SweepBudget,
    SweepPoint,
    TauStar,
    find_eta_star,
    fit_power_law,
    lambda_vs_g,
    run_study,
    sweep_eta,
    timescale_at_eta_star,
)
from .steadystate import build_liouvillian, expectation, photon_distribution, steady_state
from .telegraph import (
    BinarySignal,
    SwitchEvent,
    TelegraphStats,
    binarize,
    dim_period_mandel_q,
    dwell_times,
    switch_event_extraction,
    synthesize_telegraph,
    telegraph_stats,
    verify_binary_identity,
)

__all__ = [
    "BinarySignal",
    "BranchSet",
    "CutoffBreachError",
    "EtaStar",
    "ExponentFit",
    "JumpEvent",
    "ModelParams",
    "Operators",
    "PhaseBoundary",
    "RunConfig",
    "StudyResult",
    "SweepBudget",
    "SweepPoint",
    "SwitchEvent",
    "TauStar",
    "TelegraphStats",
    "TrajectoryConfig",
    "TrajectoryRecord",
    "atomic_switch_probability",
    "basis_index",
    "basis_state",
    "binarize",
    "bistability_boundaries",
    "blink_off_rate_law",
    "bright_photon_estimate",
    "build_effective_hamiltonian",
    "build_hamiltonian",
    "build_liouvillian",
    "build_operators",
    "cutoff_guard",
    "dim_period_mandel_q",
    "dressed_energy",
    "dressed_state",
    "dwell_times",
    "expectation",
    "expected_bright_phase",
    "farm",
    "field_phase",
    "find_eta_star",
    "fit_power_law",
    "instantaneous_mandel_q",
    "jump_operators",
    "ladder_switch_probability",
    "lambda_vs_g",
    "load_record",
    "lower_boundary_estimate",
    "parse_config",
    "phase_diagram",
    "photon_distribution",
    "run_study",
    "run_trajectory",
    "save_record",
    "solve_branches",
    "steady_state",
    "suggested_cutoff",
    "sweep_eta",
    "switch_event_extraction",
    "synthesize_telegraph",
    "telegraph_stats",
    "time_average",
    "timescale_at_eta_star",
    "verify_binary_identity",
]

__version__ = "0.1.0"
