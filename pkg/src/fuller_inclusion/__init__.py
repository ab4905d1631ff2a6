"""Fuller's double-integrator feedback as a differential inclusion: exact arcs,
a quasi-Lyapunov certificate, cone partitions and a patchy solution engine."""

from .errors import (
    CalibrationError,
    CertificateViolation,
    ContractError,
    CoverageError,
    DomainError,
    FullerError,
    InvalidInputError,
    NonConvergenceError,
)
from .geometry import ExtendedPoint, RegionLabel, Side, StatePoint, VelocitySet, classify, fuller_field
from .dynamics import Trajectory, chattering_from_origin, eps_residual, hitting_time, simulate_feedback
from .lyapunov import QlfParams, QuasiLyapunov, calibrate, phi, verify_qlf, wbar
from .partition import PartialApproximation, build_ms_cover, cell_index_trace, validate_approximation
from .solver import SolverConfig, epsilon_solution, restricted_field, solve_via_limits, time_lower_bound

__version__ = "0.1.0"

__all__ = [
    "CalibrationError",
    "CertificateViolation",
    "ContractError",
    "CoverageError",
    "DomainError",
    "ExtendedPoint",
    "FullerError",
    "InvalidInputError",
    "NonConvergenceError",
    "PartialApproximation",
    "QlfParams",
    "QuasiLyapunov",
    "RegionLabel",
    "Side",
    "SolverConfig",
    "StatePoint",
    "Trajectory",
    "VelocitySet",
    "build_ms_cover",
    "calibrate",
    "cell_index_trace",
    "chattering_from_origin",
    "classify",
    "epsilon_solution",
    "eps_residual",
    "fuller_field",
    "hitting_time",
    "phi",
    "restricted_field",
    "simulate_feedback",
    "solve_via_limits",
    "time_lower_bound",
    "validate_approximation",
    "verify_qlf",
    "wbar",
]
