"""American put pricing under the Hobson-Rogers delay geometric Brownian motion."""

from .boundary import ExerciseBoundary, extract, monotonicity_report, striking_curve_along
from .bsm_baseline import BinomialConfig, crr_american_put, crr_boundary, european_put_closed_form
from .errors import (BoundaryNotBracketedError, ConfigurationError, DomainError,
                     ExtrapolationError, HRPricerError, PositivityError, SimulationError,
                     SolverError)
from .kernels import BACKEND
from .lsmc import LsmcConfig, PriceEstimate, exercise_frequency_surface, price_american_put
from .model import (MarketState, ModelParams, VolatilityFn, drift_ln_z, eval_sigma,
                    reversion_zone)
from .pde import GridSpec, ValueSurface, generator_coefficients, solve, value_at
from .sde_sim import PathSet, SimConfig, consistency_gap, simulate

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BinomialConfig", "BoundaryNotBracketedError", "ConfigurationError",
    "DomainError", "ExerciseBoundary", "ExtrapolationError", "GridSpec", "HRPricerError",
    "LsmcConfig", "MarketState", "ModelParams", "PathSet", "PositivityError", "PriceEstimate",
    "SimConfig", "SimulationError", "SolverError", "ValueSurface", "VolatilityFn",
    "consistency_gap", "crr_american_put", "crr_boundary", "drift_ln_z", "eval_sigma",
    "european_put_closed_form", "exercise_frequency_surface", "extract", "generator_coefficients",
    "monotonicity_report", "price_american_put", "reversion_zone", "simulate", "solve",
    "striking_curve_along", "value_at",
]
