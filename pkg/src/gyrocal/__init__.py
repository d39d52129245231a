"""Servomotor-aided calibration of triaxial gyroscope scale factors and biases."""

from gyrocal.errors import (
    CalibrationError,
    ConvergenceError,
    SegmentationError,
    SingularDesignError,
    UnphysicalEstimateError,
)
from gyrocal.estimator import (
    EstimationResult,
    Observation,
    ObservationSet,
    SolverConfig,
    build_design_matrix,
    cost,
    solve_ils,
    solve_lm,
)
from gyrocal.model import (
    BetaVector,
    CalibrationParams,
    apply_calibration,
    beta_to_params,
    inverse_model,
    params_to_beta,
)
from gyrocal.protocol import Protocol, ProtocolStep, average_revolution, g_optimal_protocol, segment_log

__version__ = "0.1.0"

__all__ = [
    "BetaVector",
    "CalibrationError",
    "CalibrationParams",
    "ConvergenceError",
    "EstimationResult",
    "Observation",
    "ObservationSet",
    "Protocol",
    "ProtocolStep",
    "SegmentationError",
    "SingularDesignError",
    "SolverConfig",
    "UnphysicalEstimateError",
    "apply_calibration",
    "average_revolution",
    "beta_to_params",
    "build_design_matrix",
    "cost",
    "g_optimal_protocol",
    "inverse_model",
    "params_to_beta",
    "segment_log",
    "solve_ils",
    "solve_lm",
]
