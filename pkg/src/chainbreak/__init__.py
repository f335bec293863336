"""Monte Carlo and analytical toolkit for bond breaking in a slowly pulled
chain of Brownian particles with a finite-range pair potential."""

__version__ = "0.1.0"

from .errors import (ChainbreakError, ConfigError, EvaluationError,
                     ExtensionError, IntegrationError, PotentialFormatError,
                     PreconditionError)
from .potential import (PotentialSpec, ExtendedPotential, ValidationReport,
                        CheckResult, validate_potential, extend,
                        example_quadratic, potential_to_dict,
                        potential_from_dict)
from .dynamics import (PullSchedule, ModelParams, IntegratorConfig, BreakRecord,
                       DeterministicPath, PathDump, right_endpoint, drift,
                       default_dt, solve_deterministic, simulate_trajectory,
                       simulate_path, equivalence_check, expansion_report)
from .deviation import (LinearizationData, BoundaryCurves, VarianceData,
                        build_linearization, boundary_curves, build_variance,
                        nonlinear_remainder, simulate_y0, decompose)
from .experiments import (PRESETS, EstimateResult, RegimeReport, TauLResult,
                          ConditionalHitResult, ReflectionCheck,
                          SupBoundResult, preset_params, wilson_interval,
                          classify_regime, estimate_break_prob, run_sweep,
                          corridor_bound, corridor_experiment,
                          sup_bound_experiment, tau_window, tau_L_experiment,
                          conditional_hit_experiment, reflection_scale,
                          reflection_identity_check)
from .chain import (ChainConfig, ChainBreakRecord, simulate_chain,
                    run_chain_trial, run_chain_trials, chain_bond_prob,
                    break_location_histogram)

__all__ = [
    "ChainbreakError", "ConfigError", "EvaluationError", "ExtensionError",
    "IntegrationError", "PotentialFormatError", "PreconditionError",
    "PotentialSpec", "ExtendedPotential", "ValidationReport", "CheckResult",
    "validate_potential", "extend", "example_quadratic",
    "potential_to_dict", "potential_from_dict",
    "PullSchedule", "ModelParams", "IntegratorConfig", "BreakRecord",
    "DeterministicPath", "PathDump", "right_endpoint", "drift", "default_dt",
    "solve_deterministic", "simulate_trajectory", "simulate_path",
    "equivalence_check", "expansion_report",
    "LinearizationData", "BoundaryCurves", "VarianceData",
    "build_linearization", "boundary_curves", "build_variance",
    "nonlinear_remainder", "simulate_y0", "decompose",
    "PRESETS", "EstimateResult", "RegimeReport", "TauLResult",
    "ConditionalHitResult", "ReflectionCheck", "SupBoundResult",
    "preset_params", "wilson_interval", "classify_regime",
    "estimate_break_prob", "run_sweep", "corridor_bound",
    "corridor_experiment", "sup_bound_experiment", "tau_window",
    "tau_L_experiment", "conditional_hit_experiment", "reflection_scale",
    "reflection_identity_check",
    "ChainConfig", "ChainBreakRecord", "simulate_chain", "run_chain_trial",
    "run_chain_trials", "chain_bond_prob", "break_location_histogram",
]
