"""Sparse Bayesian identification of nonlinear discrete-time models."""

from .dictionary import (
    DictionaryEvaluationError,
    DictionarySpec,
    FeatureFunction,
    RegressionProblem,
    TimeSeries,
    build_hill_spec,
    build_kuramoto_spec,
    build_narx_spec,
    evaluate,
)
from .kernels import BACKEND
from .sbl import Hyperprior, SblConfig, SblResult, estimate_lambda, identify, marginal_cost, posterior_moments, update_reweights
from .weighted_l1 import L1Solution, LinearConstraints, solve_weighted_l1

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DictionaryEvaluationError",
    "DictionarySpec",
    "FeatureFunction",
    "Hyperprior",
    "L1Solution",
    "LinearConstraints",
    "RegressionProblem",
    "SblConfig",
    "SblResult",
    "TimeSeries",
    "build_hill_spec",
    "build_kuramoto_spec",
    "build_narx_spec",
    "estimate_lambda",
    "evaluate",
    "identify",
    "marginal_cost",
    "posterior_moments",
    "solve_weighted_l1",
    "update_reweights",
]
