"""Info-Greedy sequential adaptive sensing.

Measurement vectors are chosen one at a time to maximise the mutual
information between the signal and the next outcome given all past
outcomes. Signal models: nonnegative k-sparse (bisection), Gaussian and
Gaussian mixtures, plus cardinality-constrained design for Gaussians.
"""
from .bisection import bisect_recover, characteristic_vector, noisy_oracle
from .errors import (ConfigError, ConvergenceError, DataError, InfoGreedyError, NumericalError,
                     ValidationError)
from .gaussian import (ColoredAfter, ColoredBefore, GaussianBelief, MeasurementRecord,
                       SessionTranscript, StopReason, WhiteAfter, WhiteBefore, measurement_budget,
                       mutual_info_gaussian, posterior_update, run_session, select_direction,
                       stopping_threshold)
from .gmm import GmmBelief, GradientAscentConfig, gmm_posterior_update, mi_gradient, run_gmm_session
from .linalg import EigDecomposition, chi2_quantile, leading_eigpair, make_rng, sample_mvn, sym_eig
from .sparse_design import CutSystem, SparseDesignResult, solve_master, sparse_direction

__version__ = "0.1.0"

__all__ = [
    "bisect_recover", "characteristic_vector", "noisy_oracle", "ConfigError", "ConvergenceError",
    "DataError", "InfoGreedyError", "NumericalError", "ValidationError", "ColoredAfter",
    "ColoredBefore", "GaussianBelief", "MeasurementRecord", "SessionTranscript", "StopReason",
    "WhiteAfter", "WhiteBefore", "measurement_budget", "mutual_info_gaussian", "posterior_update",
    "run_session", "select_direction", "stopping_threshold", "GmmBelief", "GradientAscentConfig",
    "gmm_posterior_update", "mi_gradient", "run_gmm_session", "EigDecomposition", "chi2_quantile",
    "leading_eigpair", "make_rng", "sample_mvn", "sym_eig", "CutSystem", "SparseDesignResult",
    "solve_master", "sparse_direction",
]
