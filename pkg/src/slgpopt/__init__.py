"""Spatial logistic Gaussian process density fields and EQI adaptive sampling."""
from .basis import BasisSet, build_fourier_basis, eval_basis, eval_basis_grid
from .slgp import (
    Dataset,
    DensityField,
    DensityGrid,
    SLGPModel,
    gp_eval,
    log_density_at,
    log_likelihood,
    log_posterior,
    slgp_density,
)

__version__ = "0.1.0"
