"""Simulation and exact-moment workbench for cyclic urns."""

from .spectral import (
    CovarianceTarget,
    InvalidParameter,
    SpectralBasis,
    build_basis,
    limit_covariance,
    replacement_matrix,
    rotation_matrix_D,
    sigma_matrix,
    sigma_n_scaling,
)
from .urn import Composition, TrajectoryRecord, UrnConfig, shift_initial_type, simulate, simulate_ensemble, step

__version__ = "0.1.0"
