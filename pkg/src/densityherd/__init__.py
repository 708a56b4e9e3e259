"""Leader-follower density control on the periodic domain.

Leaders steer a diffusing follower population through a repulsive
interaction kernel.  The package computes feasible leader references,
the leader flux control and a reference governor, and simulates the
closed loop both as PDEs and as finite agent populations.
"""
from .errors import (ConfigError, DensityHerdError, DiagnosticWarning, GridMismatch, IllConditionedMode,
                     Infeasible, Infeasible2D, MassMismatch, NonPeriodicAntiderivative, NonPositiveTarget,
                     NonZeroMeanInput, NumericalBlowup, StabilityWarning, SupportViolation, TooFewAgents,
                     UnknownScenario, VacuumRegion, VanishingFollowerDensity)
from .grid import PeriodicField, PeriodicGrid, antiderivative, circular_convolve, integrate, read_field_csv, \
    write_field_csv
from .kernel import KernelComponent, KernelSpec, kernel_eval_1d, kernel_eval_2d
from .deconvolve import deconvolve, deconvolve_1d, deconvolve_2d
from .feasibility import (FeasibilityReport, TargetSpec, feasibility, feasibility_sweep, reference_leader_density,
                          uniform, von_mises, von_mises_target)
from .control import LeaderControlConfig, leader_flux_rhs, recover_u
from .governor import Governor, GovernorState, conservative_alpha, feedback_correction, governor_step, optimal_alpha
from .metrics import kl_divergence, percentage_error
from .pde import Disturbance, SimConfig, SimRecord, run
from .agents import AgentState, KdeConfig, estimate_density, run_discrete, run_trial, step_agents

__version__ = "0.1.0"
