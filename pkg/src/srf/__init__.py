"""srf: finds robust and adversarial axis-aligned regions of scalar functions.

Given an evaluator f mapping a box-shaped parameter space into (0, 1), the
package grows hyper-rectangles around seed points with four bound-update
rules (a penalized naive rule, black-box and white-box outer-inner-ratio
rules, and a trapezoid-gradient rule), samples dense semantic maps over the
space, validates candidate regions against mean/variance constraints, and
aggregates region volumes into a space-fraction metric.
"""

from .errors import (
    BetaOutOfRangeError,
    BudgetExceededError,
    DimensionTooLargeError,
    EvaluatorError,
    GradientUnsupportedError,
    ProtocolError,
)
from .geometry import (
    BinaryMask,
    Domain,
    Region,
    corner_matrix,
    mask_matrix,
    normalized_volume,
    outer_corner_matrix,
)
from .maps import (
    RegionReport,
    SemanticMap,
    average_maps,
    map_from_csv,
    map_to_csv,
    sample_map,
    srvr,
    validate_region,
)
from .optimizers import (
    GrowthTrace,
    OptimizerParams,
    StepRecord,
    beta_limit,
    grow_region,
    naive_step,
    oirb_step,
    oirw_step,
    trapgrad_step,
)
from .oracles import (
    BuiltinSpec,
    CallableOracle,
    ExternalOracle,
    FunctionOracle,
    adversarial_wrapper,
    external_oracle,
    make_builtin,
)
from .quadrature import (
    CornerGradients,
    CornerValues,
    brute_force_integral,
    corner_gradients,
    corner_values,
    trapezoid_integral,
)

__version__ = "0.1.0"

__all__ = [
    "BetaOutOfRangeError",
    "BinaryMask",
    "BudgetExceededError",
    "BuiltinSpec",
    "CallableOracle",
    "CornerGradients",
    "CornerValues",
    "DimensionTooLargeError",
    "Domain",
    "EvaluatorError",
    "ExternalOracle",
    "FunctionOracle",
    "GradientUnsupportedError",
    "GrowthTrace",
    "OptimizerParams",
    "ProtocolError",
    "Region",
    "RegionReport",
    "SemanticMap",
    "StepRecord",
    "adversarial_wrapper",
    "average_maps",
    "beta_limit",
    "brute_force_integral",
    "corner_gradients",
    "corner_matrix",
    "corner_values",
    "external_oracle",
    "grow_region",
    "make_builtin",
    "map_from_csv",
    "map_to_csv",
    "mask_matrix",
    "naive_step",
    "normalized_volume",
    "oirb_step",
    "oirw_step",
    "outer_corner_matrix",
    "sample_map",
    "srvr",
    "trapezoid_integral",
    "trapgrad_step",
    "validate_region",
]
