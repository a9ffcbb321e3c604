"""Bayesian sparse seemingly unrelated regression with structured variable
selection and a sparse residual covariance, fitted by evolutionary stochastic
search."""

from .core import (DataError, Dataset, Hyperparameters, ModelSpec, NumericalError, SpecError,
                   load_dataset, read_config, validate_spec)
from .graphs import DecomposableGraph, decompose, is_decomposable
from .sampler import McmcOutput, run

__version__ = "0.1.0"

__all__ = ["DataError", "Dataset", "DecomposableGraph", "Hyperparameters", "McmcOutput",
           "ModelSpec", "NumericalError", "SpecError", "decompose", "is_decomposable",
           "load_dataset", "read_config", "run", "validate_spec"]
