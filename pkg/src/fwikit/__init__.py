"""Frequency-domain 2D acoustic full-waveform inversion toolkit.

Cross-validated Newton-type Hessian approximations (diagonal field-energy,
Gauss-Newton, exact, augmented Gauss-Newton), the sequential approximate
Newton solve, and the wave-equation-relaxation (penalty) updater, on small
synthetic benchmarks.
"""

from .acquisition import AcquisitionGeometry, ring_geometry
from .benchmarks import build_concrete_model, build_inclusion_model
from .errors import ConfigurationError, NumericalError
from .grids import Grid2D, Model, load_velocity_model, save_velocity_model
from .helmholtz import (DIRICHLET, HelmholtzFactorization, HelmholtzOperator,
                        PMLConfig, Sampling, assemble, factorize,
                        sampling_operator, source_matrix)
from .hessians import HessianMatrix, fd_hessian_oracle, gradient
from .sensitivity import DataHessian, SensitivityBundle, build_bundles
from .updaters import (AssimilatedWavefield, ModelUpdate, newton_step,
                       psd_step, sequential_step, wri_assimilated_wavefield,
                       wri_update)
from .driver import InversionConfig, InversionResult, compare, invert, \
    parse_config, synthesize

__version__ = "0.1.0"

__all__ = [
    "AcquisitionGeometry", "AssimilatedWavefield", "ConfigurationError",
    "DataHessian", "DIRICHLET", "Grid2D", "HelmholtzFactorization",
    "HelmholtzOperator", "HessianMatrix", "InversionConfig", "InversionResult",
    "Model", "ModelUpdate", "NumericalError", "PMLConfig", "Sampling",
    "SensitivityBundle", "assemble", "build_bundles", "build_concrete_model",
    "build_inclusion_model", "compare", "factorize", "fd_hessian_oracle",
    "gradient", "invert", "load_velocity_model", "newton_step", "parse_config",
    "psd_step", "ring_geometry", "sampling_operator", "save_velocity_model",
    "sequential_step", "source_matrix", "synthesize",
    "wri_assimilated_wavefield", "wri_update",
]
