"""Numerical toolkit for SLD quantum estimation and Uhlmann parallel transport."""

__version__ = "0.1.0"

from .errors import (
    ConvergenceError,
    DomainError,
    InputError,
    NotLocallyQuasiClassicalError,
    SingularStateError,
    UhlmannKitError,
)
from .matcore import Tolerances, comm_norm, commutator, eig_hermitian, polar_positive, solve_sld
from .model import ParallelFactorModel, ParametricModel, zoo
from .geometry import classify_global, classify_local, curvature, sld_set, theorem2_check
from .transport import (
    CurvePath,
    fiber_min_check,
    holonomy,
    horizontal_lift,
    plaquette_check,
    reference_amplitude,
    relative_phase_factor,
)
from .estimation import (
    Estimator,
    Povm,
    check_locally_unbiased,
    exact_covariance,
    monte_carlo_covariance,
    optimal_estimator,
    outcome_probabilities,
    sample_outcomes,
    simultaneous_diagonalize,
    two_stage_adaptive,
)
