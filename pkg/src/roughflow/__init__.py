"""Level-2 geometric rough paths, rough flows and rough fluid models."""

__version__ = "0.1.0"

from .controlled import ControlledPath, integral_controlled_vs_controlled, rough_integral  # noqa: E402
from .errors import (  # noqa: E402
    CFLError,
    ConfigError,
    FactorizationError,
    GridError,
    NumericalAbort,
    QuadratureError,
    RoughFlowError,
)
from .gaussian_lift import GaussianSpec, fbm_covariance, lift_gaussian, sample_path  # noqa: E402
from .rde_flow import VectorFieldFamily, davie_step, magnus_step, solve_flow  # noqa: E402
from .rough_core import (  # noqa: E402
    GeometricRoughPath,
    TimeGrid,
    chen_residual,
    coarsen,
    geometricity_residual,
    lift_piecewise_linear,
    lift_smooth,
)

__all__ = [
    "CFLError",
    "ConfigError",
    "ControlledPath",
    "FactorizationError",
    "GaussianSpec",
    "GeometricRoughPath",
    "GridError",
    "NumericalAbort",
    "QuadratureError",
    "RoughFlowError",
    "TimeGrid",
    "VectorFieldFamily",
    "chen_residual",
    "coarsen",
    "davie_step",
    "fbm_covariance",
    "geometricity_residual",
    "integral_controlled_vs_controlled",
    "lift_gaussian",
    "lift_piecewise_linear",
    "lift_smooth",
    "magnus_step",
    "rough_integral",
    "sample_path",
    "solve_flow",
]
