"""Keen-type endogenous-money growth model: simulation and asymptotic analysis."""

from .model import (DERIVED_FIELDS, STANDARD_IC, STANDARD_WD0, STATE_FIELDS, ConfigError,
                    Derived, DivergenceError, GenExpParams, GrowthModel, ModelParams, State,
                    conserved_constant, derived, gen_exp, params_from_dict, params_to_dict,
                    profit_rate, reconstruct_wd, rhs)
from .integrator import IntegrationConfig, StepSizeUnderflow, Trajectory, integrate

__version__ = "0.1.0"

__all__ = [
    "DERIVED_FIELDS", "STANDARD_IC", "STANDARD_WD0", "STATE_FIELDS", "ConfigError", "Derived",
    "DivergenceError", "GenExpParams", "GrowthModel", "IntegrationConfig", "ModelParams", "State",
    "StepSizeUnderflow", "Trajectory", "conserved_constant", "derived", "gen_exp", "integrate",
    "params_from_dict", "params_to_dict", "profit_rate", "reconstruct_wd", "rhs",
]
